//! Closed-loop A-MPDU size controller.
//!
//! Every monitoring period each AP looks at the largest one-way delay of the
//! real-time packets it saw, compares it with the delay budget and moves its
//! maximum A-MPDU size down (delay above budget) or up (otherwise). Four
//! update rules are available plus three baselines: `Disable` (aggregation off
//! while any real-time STA is associated), `AlwaysOn` and `NoAggregation`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::mac::{AmpduLimit, FlowId};
use crate::sim::SimTime;

pub const DEFAULT_STEP_BYTES: u32 = 3_000;
pub const DEFAULT_DOWN_FACTOR: f64 = 0.618;
pub const DEFAULT_UP_FACTOR: f64 = 1.618;
pub const DEFAULT_FAST_STEP_BYTES: u32 = 6_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum TuningPolicy {
    /// Linear decrease and linear increase by `step_bytes`.
    Method1 { step_bytes: u32 },
    /// Multiply by `down_factor` when above budget, by `up_factor` otherwise.
    Method2 { down_factor: f64, up_factor: f64 },
    /// Drop to the minimum when above budget, add `up_step_bytes` otherwise.
    Method3 { up_step_bytes: u32 },
    /// Subtract `down_step_bytes` when above budget, jump to the maximum otherwise.
    Method4 { down_step_bytes: u32 },
    Disable,
    AlwaysOn,
    NoAggregation,
}

impl TuningPolicy {
    pub const fn method1() -> Self {
        TuningPolicy::Method1 {
            step_bytes: DEFAULT_STEP_BYTES,
        }
    }

    pub const fn method2() -> Self {
        TuningPolicy::Method2 {
            down_factor: DEFAULT_DOWN_FACTOR,
            up_factor: DEFAULT_UP_FACTOR,
        }
    }

    pub const fn method3() -> Self {
        TuningPolicy::Method3 {
            up_step_bytes: DEFAULT_FAST_STEP_BYTES,
        }
    }

    pub const fn method4() -> Self {
        TuningPolicy::Method4 {
            down_step_bytes: DEFAULT_FAST_STEP_BYTES,
        }
    }

    /// The seven policies compared in the multi-AP experiments.
    pub fn standard_set() -> Vec<TuningPolicy> {
        vec![
            TuningPolicy::NoAggregation,
            TuningPolicy::AlwaysOn,
            TuningPolicy::Disable,
            Self::method1(),
            Self::method2(),
            Self::method3(),
            Self::method4(),
        ]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = match *self {
            TuningPolicy::Method1 { step_bytes } => step_bytes > 0,
            TuningPolicy::Method2 {
                down_factor,
                up_factor,
            } => 0.0 < down_factor && down_factor < 1.0 && up_factor > 1.0 && up_factor.is_finite(),
            TuningPolicy::Method3 { up_step_bytes } => up_step_bytes > 0,
            TuningPolicy::Method4 { down_step_bytes } => down_step_bytes > 0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Invalid(format!("bad policy parameters: {self}")))
        }
    }

    /// The four adaptive methods adjust on the monitoring period.
    pub fn is_period_driven(&self) -> bool {
        matches!(
            self,
            TuningPolicy::Method1 { .. }
                | TuningPolicy::Method2 { .. }
                | TuningPolicy::Method3 { .. }
                | TuningPolicy::Method4 { .. }
        )
    }

    /// Short name without parameters.
    pub fn kind(&self) -> &'static str {
        match self {
            TuningPolicy::Method1 { .. } => "method1",
            TuningPolicy::Method2 { .. } => "method2",
            TuningPolicy::Method3 { .. } => "method3",
            TuningPolicy::Method4 { .. } => "method4",
            TuningPolicy::Disable => "disable",
            TuningPolicy::AlwaysOn => "always-on",
            TuningPolicy::NoAggregation => "no-aggregation",
        }
    }
}

/// Canonical text form, e.g. `method1:step=3000` or `method2:down=0.618;up=1.618`.
/// Parsing also accepts `,` between parameters.
impl fmt::Display for TuningPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TuningPolicy::Method1 { step_bytes } => write!(f, "method1:step={step_bytes}"),
            TuningPolicy::Method2 {
                down_factor,
                up_factor,
            } => write!(f, "method2:down={down_factor};up={up_factor}"),
            TuningPolicy::Method3 { up_step_bytes } => write!(f, "method3:step={up_step_bytes}"),
            TuningPolicy::Method4 { down_step_bytes } => write!(f, "method4:step={down_step_bytes}"),
            other => f.write_str(other.kind()),
        }
    }
}

impl FromStr for TuningPolicy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::Policy(s.to_string());
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), p),
            None => (s.trim(), ""),
        };
        let mut kv = Vec::new();
        for part in params.split([',', ';']).filter(|p| !p.trim().is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            kv.push((k.trim().to_string(), v.trim().to_string()));
        }
        let get_u32 = |key: &str, default: u32| -> Result<u32, ConfigError> {
            match kv.iter().find(|(k, _)| k == key) {
                Some((_, v)) => v.parse().map_err(|_| bad()),
                None => Ok(default),
            }
        };
        let get_f64 = |key: &str, default: f64| -> Result<f64, ConfigError> {
            match kv.iter().find(|(k, _)| k == key) {
                Some((_, v)) => v.parse().map_err(|_| bad()),
                None => Ok(default),
            }
        };
        let allowed: &[&str] = match name {
            "method1" | "method3" | "method4" => &["step"],
            "method2" => &["down", "up"],
            _ => &[],
        };
        if kv.iter().any(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(bad());
        }
        let policy = match name {
            "method1" => TuningPolicy::Method1 {
                step_bytes: get_u32("step", DEFAULT_STEP_BYTES)?,
            },
            "method2" => TuningPolicy::Method2 {
                down_factor: get_f64("down", DEFAULT_DOWN_FACTOR)?,
                up_factor: get_f64("up", DEFAULT_UP_FACTOR)?,
            },
            "method3" => TuningPolicy::Method3 {
                up_step_bytes: get_u32("step", DEFAULT_FAST_STEP_BYTES)?,
            },
            "method4" => TuningPolicy::Method4 {
                down_step_bytes: get_u32("step", DEFAULT_FAST_STEP_BYTES)?,
            },
            "disable" => TuningPolicy::Disable,
            "always-on" | "always_on" => TuningPolicy::AlwaysOn,
            "no-aggregation" | "no_aggregation" => TuningPolicy::NoAggregation,
            _ => return Err(bad()),
        };
        policy.validate()?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Above,
    Below,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Above => "above",
            Decision::Below => "below",
        })
    }
}

/// Maximum tolerated WLAN delay for real-time packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct DelayBudget(SimTime);

impl DelayBudget {
    pub fn new(budget: SimTime) -> Option<Self> {
        (budget > SimTime::ZERO).then_some(DelayBudget(budget))
    }

    pub fn get(self) -> SimTime {
        self.0
    }
}

/// Real-time delay samples an AP observed during the current period.
#[derive(Debug, Clone, Default)]
pub struct DelayWindow {
    samples: Vec<(FlowId, SimTime)>,
}

impl DelayWindow {
    pub fn record(&mut self, flow: FlowId, delay: SimTime) {
        self.samples.push((flow, delay));
    }

    pub fn max(&self) -> Option<SimTime> {
        self.samples.iter().map(|(_, d)| *d).max()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

/// `Above` iff the largest delay strictly exceeds the budget. An empty window is `Below`.
pub fn classify_period(window: &DelayWindow, budget: DelayBudget) -> Decision {
    match window.max() {
        Some(d) if d > budget.get() => Decision::Above,
        _ => Decision::Below,
    }
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Next limit for `policy`, clamped to the A-MPDU range.
///
/// `Disable` has no periodic rule and keeps `current`; see [`disable_policy`].
pub fn adjust_limit(policy: &TuningPolicy, current: AmpduLimit, decision: Decision) -> AmpduLimit {
    let cur = i64::from(current.bytes());
    let max = i64::from(AmpduLimit::MAX_BYTES);
    let min = i64::from(AmpduLimit::MIN_BYTES);
    let next = match (*policy, decision) {
        (TuningPolicy::Method1 { step_bytes }, Decision::Above) => cur - i64::from(step_bytes),
        (TuningPolicy::Method1 { step_bytes }, Decision::Below) => cur + i64::from(step_bytes),
        (TuningPolicy::Method2 { down_factor, .. }, Decision::Above) => {
            round_half_up(cur as f64 * down_factor)
        }
        (TuningPolicy::Method2 { up_factor, .. }, Decision::Below) => {
            round_half_up(cur as f64 * up_factor)
        }
        (TuningPolicy::Method3 { .. }, Decision::Above) => min,
        (TuningPolicy::Method3 { up_step_bytes }, Decision::Below) => cur + i64::from(up_step_bytes),
        (TuningPolicy::Method4 { down_step_bytes }, Decision::Above) => {
            cur - i64::from(down_step_bytes)
        }
        (TuningPolicy::Method4 { .. }, Decision::Below) => max,
        (TuningPolicy::AlwaysOn, _) => max,
        (TuningPolicy::NoAggregation, _) => min,
        (TuningPolicy::Disable, _) => cur,
    };
    AmpduLimit::clamped(next)
}

/// Limit under the `Disable` baseline given whether a real-time STA is associated.
pub fn disable_policy(realtime_present: bool) -> AmpduLimit {
    if realtime_present {
        AmpduLimit::MIN
    } else {
        AmpduLimit::MAX
    }
}

/// Limit an AP starts the run with.
pub fn initial_limit(policy: &TuningPolicy) -> AmpduLimit {
    match policy {
        TuningPolicy::NoAggregation => AmpduLimit::MIN,
        _ => AmpduLimit::MAX,
    }
}

/// One row of the controller trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub ap: u32,
    pub decision: Decision,
    pub max_delay: Option<SimTime>,
    pub limit: AmpduLimit,
}

pub const TRACE_CSV_HEADER: &str = "time_s,ap_id,decision,max_delay_ms,limit_bytes";

impl TraceRecord {
    pub fn csv_row(&self) -> String {
        let delay = self
            .max_delay
            .map(|d| format!("{:.3}", d.as_millis_f64()))
            .unwrap_or_default();
        format!(
            "{:.3},{},{},{},{}",
            self.time.as_secs_f64(),
            self.ap,
            self.decision,
            delay,
            self.limit
        )
    }
}

/// Per-AP controller state.
#[derive(Debug, Clone)]
pub struct ApController {
    pub ap: u32,
    pub policy: TuningPolicy,
    pub budget: DelayBudget,
    limit: AmpduLimit,
    window: DelayWindow,
}

impl ApController {
    pub fn new(ap: u32, policy: TuningPolicy, budget: DelayBudget) -> Self {
        ApController {
            ap,
            policy,
            budget,
            limit: initial_limit(&policy),
            window: DelayWindow::default(),
        }
    }

    pub fn limit(&self) -> AmpduLimit {
        self.limit
    }

    pub fn window(&self) -> &DelayWindow {
        &self.window
    }

    pub fn record_delay(&mut self, flow: FlowId, delay: SimTime) {
        self.window.record(flow, delay);
    }

    /// Association change under `Disable`; ignored by every other policy.
    pub fn on_occupancy(&mut self, realtime_present: bool) {
        if self.policy == TuningPolicy::Disable {
            self.limit = disable_policy(realtime_present);
        }
    }

    /// End of a monitoring period: decide, adjust, clear the window.
    pub fn on_period_tick(&mut self, now: SimTime) -> TraceRecord {
        let decision = classify_period(&self.window, self.budget);
        let max_delay = self.window.max();
        if self.policy != TuningPolicy::Disable {
            self.limit = adjust_limit(&self.policy, self.limit, decision);
        }
        self.window.clear();
        TraceRecord {
            time: now,
            ap: self.ap,
            decision,
            max_delay,
            limit: self.limit,
        }
    }
}

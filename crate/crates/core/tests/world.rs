use std::collections::BTreeMap;

use ampdu_sim::batch::{runs_csv, trace_csv};
use ampdu_sim::controller::{Decision, TuningPolicy};
use ampdu_sim::mac::{AmpduLimit, MAX_SUBFRAMES};
use ampdu_sim::world::{run, RunOptions, SAMPLE_INTERVAL};
use ampdu_sim::{ScenarioConfig, SimTime};
use proptest::prelude::*;

fn short(preset: &str, secs: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset(preset).unwrap();
    cfg.duration_s = secs;
    cfg
}

const LOG: RunOptions = RunOptions {
    timeseries: false,
    exchange_log: true,
};

#[test]
fn same_seed_same_output() {
    let cfg = short("grid-16ap", 5.0);
    let a = run(&cfg, 11, RunOptions::default()).unwrap();
    let b = run(&cfg, 11, RunOptions::default()).unwrap();
    assert_eq!(runs_csv([&a.report]), runs_csv([&b.report]));
    assert_eq!(trace_csv(&a.trace), trace_csv(&b.trace));
    assert_eq!(a.events, b.events);
}

#[test]
fn different_seeds_differ() {
    let cfg = short("single-ap", 5.0);
    let a = run(&cfg, 1, RunOptions::default()).unwrap();
    let b = run(&cfg, 2, RunOptions::default()).unwrap();
    assert_ne!(a.report.tcp_throughput_bps, b.report.tcp_throughput_bps);
}

#[test]
fn every_policy_conserves_frames() {
    let mut cfg = short("grid-16ap", 8.0);
    cfg.n = 4;
    for policy in TuningPolicy::standard_set() {
        cfg.policy = policy;
        let out = run(&cfg, 3, RunOptions::default()).unwrap();
        for b in &out.balances {
            assert!(b.holds(), "{policy}: {b:?}");
        }
        for f in &out.busy_fraction {
            assert!((0.0..=1.0).contains(f), "{policy}: busy fraction {f}");
        }
    }
}

#[test]
fn no_aggregation_sends_single_frames() {
    let mut cfg = short("single-ap", 5.0);
    cfg.policy = TuningPolicy::NoAggregation;
    let out = run(&cfg, 4, LOG).unwrap();
    let ap_tx: Vec<_> = out.exchanges.iter().filter(|e| e.tx.0 == 0).collect();
    assert!(!ap_tx.is_empty());
    assert!(ap_tx.iter().all(|e| e.subframes == 1));
}

#[test]
fn always_on_aggregates_within_limits() {
    let mut cfg = short("single-ap", 5.0);
    cfg.policy = TuningPolicy::AlwaysOn;
    let out = run(&cfg, 4, LOG).unwrap();
    let ap_tx: Vec<_> = out.exchanges.iter().filter(|e| e.tx.0 == 0).collect();
    assert!(ap_tx.iter().any(|e| e.subframes > 1));
    for e in ap_tx {
        assert!(usize::from(e.subframes) <= MAX_SUBFRAMES);
        assert!(e.total_bytes <= AmpduLimit::MAX_BYTES);
    }
}

#[test]
fn disable_and_no_aggregation_exchange_logs_match() {
    let mut cfg = short("single-ap", 10.0);
    cfg.policy = TuningPolicy::Disable;
    let a = run(&cfg, 9, LOG).unwrap();
    cfg.policy = TuningPolicy::NoAggregation;
    let b = run(&cfg, 9, LOG).unwrap();
    assert_eq!(a.exchanges, b.exchanges);
}

#[test]
fn controller_trace_is_periodic_and_bounded() {
    let cfg = short("grid-16ap", 5.0);
    let out = run(&cfg, 2, RunOptions::default()).unwrap();
    assert!(!out.trace.is_empty());
    let mut per_ap: BTreeMap<u32, Vec<SimTime>> = BTreeMap::new();
    for r in &out.trace {
        assert_eq!(r.time.as_nanos() % SAMPLE_INTERVAL.as_nanos(), 0);
        assert!(r.limit >= AmpduLimit::MIN && r.limit <= AmpduLimit::MAX);
        if r.max_delay.is_none() {
            assert_eq!(r.decision, Decision::Below);
        }
        per_ap.entry(r.ap).or_default().push(r.time);
    }
    assert_eq!(per_ap.len(), 16);
    for times in per_ap.values() {
        assert_eq!(times.len(), 20);
    }
}

#[test]
fn unusable_links_defer_instead_of_transmitting() {
    let mut cfg = short("single-ap", 3.0);
    cfg.phy.tx_power_dbm = -80.0;
    let out = run(&cfg, 1, LOG).unwrap();
    assert!(out.exchanges.is_empty());
    assert_eq!(out.report.tcp_throughput_bps, 0.0);
    assert!(out.balances.iter().all(|b| b.holds() && b.delivered == 0));
}

#[test]
fn mobile_stations_hand_over_between_aps() {
    let mut cfg = short("grid-16ap", 30.0);
    cfg.n = 6;
    let out = run(
        &cfg,
        5,
        RunOptions {
            timeseries: true,
            exchange_log: false,
        },
    )
    .unwrap();
    let mut aps: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for row in out.timeseries.iter().filter(|r| r.metric == "ap_id") {
        aps.entry(row.sta).or_default().push(row.value as u32);
    }
    let moved = aps.values().filter(|v| v.windows(2).any(|w| w[0] != w[1])).count();
    assert!(moved > 0, "no STA changed AP in 30 s");
    assert!(out.balances.iter().all(|b| b.holds()));
}

#[test]
fn toml_round_trip_reproduces_the_run() {
    let cfg = short("single-ap", 3.0);
    let back = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    let a = run(&cfg, 8, RunOptions::default()).unwrap();
    let b = run(&back, 8, RunOptions::default()).unwrap();
    assert_eq!(runs_csv([&a.report]), runs_csv([&b.report]));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn conservation_and_airtime_hold(
        seed in 1u64..10_000,
        n in 1u32..6,
        policy in prop::sample::select(TuningPolicy::standard_set()),
        preset in prop::sample::select(vec!["single-ap", "grid-16ap"]),
    ) {
        let mut cfg = short(preset, 2.0);
        cfg.n = n;
        cfg.policy = policy;
        let out = run(&cfg, seed, RunOptions::default()).unwrap();
        for b in &out.balances {
            prop_assert!(b.holds(), "{:?}", b);
        }
        for f in &out.busy_fraction {
            prop_assert!((0.0..=1.0).contains(f));
        }
        prop_assert!((0.0..=1.0).contains(&out.report.udp_loss_rate));
    }
}

//! Command-line front end: single runs, seed batches, sweeps and figure data.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ampdu_sim::batch::{runs_csv, summary_csv, sweep, timeseries_csv, trace_csv, BatchOutput, SweepAxis};
use ampdu_sim::metrics::Metric;
use ampdu_sim::{run, RunOptions, ScenarioConfig, TuningPolicy};

#[derive(Debug, Parser)]
#[command(name = "ampdu-sim", version, about = "802.11ac A-MPDU size tuning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one seed and write runs.csv, trace.csv and optionally timeseries.csv.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write 250 ms per-STA samples.
        #[arg(long)]
        timeseries: bool,
    },
    /// Run a seed list and write runs.csv and summary.csv.
    Batch {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// `1-15` or `1,4,9`; defaults to the config's seed list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Batches over one or more varied axes.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        seeds: Option<String>,
        /// `policies=all`, `policies=method1,always-on`, `n=2,10,30`,
        /// `steps=1000,3000` or `factors=0.618:1.618,0.381:2.618`. Repeatable.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print a preset as TOML.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the data behind one figure (1-9) of the evaluation.
    PlotData {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=9))]
        figure: u8,
        #[arg(long)]
        out_dir: PathBuf,
        /// Seed of the single-AP figures (1-3).
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Seeds of the 16-AP figures (4-9).
        #[arg(long, default_value = "1-15")]
        seeds: String,
        #[arg(long, default_value = "2,10,20,30,40,50")]
        n_list: String,
        #[arg(long)]
        duration_s: Option<f64>,
        #[arg(long)]
        budget_ms: Option<f64>,
    },
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Built-in scenario: single-ap or grid-16ap.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Scenario TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// e.g. `method1`, `method2:down=0.381;up=1.618`, `always-on`.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    budget_ms: Option<f64>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    duration_s: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match (&self.preset, &self.config) {
            (Some(name), None) => ScenarioConfig::preset(name)?,
            (None, Some(path)) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ScenarioConfig::from_toml(&text).with_context(|| format!("in {}", path.display()))?
            }
            _ => bail!("give exactly one of --preset or --config"),
        };
        if let Some(p) = &self.policy {
            cfg.policy = p.parse()?;
        }
        if let Some(b) = self.budget_ms {
            cfg.budget_ms = Some(b);
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(d) = self.duration_s {
            cfg.duration_s = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = spec.split_once('-') {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty seed range {spec}");
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().with_context(|| format!("bad seed `{s}`")))
        .collect()
}

fn parse_list<T: std::str::FromStr>(spec: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<T>().with_context(|| format!("bad value `{s}`")))
        .collect()
}

fn parse_axis(spec: &str) -> Result<SweepAxis> {
    let (key, values) = spec.split_once('=').context("axis must look like key=values")?;
    Ok(match key {
        "policies" if values == "all" => SweepAxis::Policies(TuningPolicy::standard_set()),
        "policies" => SweepAxis::Policies(
            values
                .split(',')
                .map(|p| p.parse::<TuningPolicy>())
                .collect::<Result<_, _>>()?,
        ),
        "n" => SweepAxis::N(parse_list(values)?),
        "steps" => SweepAxis::Method1Steps(parse_list(values)?),
        "factors" => SweepAxis::Method2Factors(
            values
                .split(',')
                .map(|pair| {
                    let (d, u) = pair.split_once(':').context("factor pairs look like down:up")?;
                    Ok((d.trim().parse()?, u.trim().parse()?))
                })
                .collect::<Result<_>>()?,
        ),
        other => bail!("unknown sweep axis `{other}`"),
    })
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn write_batches(dir: &Path, batches: &[BatchOutput]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write(dir, "runs.csv", &runs_csv(batches.iter().flat_map(|b| &b.reports)))?;
    write(dir, "summary.csv", &summary_csv(batches.iter().map(|b| &b.summary)))?;
    for b in batches {
        for (seed, bal) in &b.unbalanced {
            eprintln!("warning: seed {seed} flow {} does not balance: {bal:?}", bal.flow.0);
        }
    }
    Ok(())
}

/// Gnuplot-friendly table: one row per (N, policy) with mean and CI.
fn figure_table(batches: &[BatchOutput], metric: Metric) -> String {
    let mut s = format!("# n_sta policy {}_mean {}_ci95\n", metric.name(), metric.name());
    for b in batches {
        let m = b.summary.get(metric);
        let ci = m.ci95_half_width.map(|c| format!("{c:.6}")).unwrap_or_else(|| "nan".into());
        s.push_str(&format!("{} {} {:.6} {}\n", b.summary.n_sta, b.summary.policy, m.mean, ci));
    }
    s
}

fn single_ap_run(policy: TuningPolicy, seed: u64, duration: Option<f64>, budget: Option<f64>) -> Result<ampdu_sim::RunOutput> {
    let mut cfg = ScenarioConfig::preset("single-ap")?;
    cfg.policy = policy;
    if let Some(d) = duration {
        cfg.duration_s = d;
    }
    if let Some(b) = budget {
        cfg.budget_ms = Some(b);
    }
    Ok(run(&cfg, seed, RunOptions { timeseries: true, exchange_log: false })?)
}

#[allow(clippy::too_many_arguments)]
fn plot_data(figure: u8, dir: &Path, seed: u64, seeds: &str, n_list: &str, duration: Option<f64>, budget: Option<f64>) -> Result<()> {
    fs::create_dir_all(dir)?;
    match figure {
        1 => {
            let out = single_ap_run(TuningPolicy::AlwaysOn, seed, duration, budget)?;
            let rows: Vec<_> = out.timeseries.into_iter().filter(|r| r.metric == "distance_m").collect();
            write(dir, "fig1_distance.csv", &timeseries_csv(&rows))?;
        }
        2 => {
            for (tag, policy) in [
                ("a", TuningPolicy::NoAggregation),
                ("b", TuningPolicy::AlwaysOn),
                ("c", TuningPolicy::method1()),
            ] {
                let out = single_ap_run(policy, seed, duration, budget)?;
                let rows: Vec<_> = out
                    .timeseries
                    .into_iter()
                    .filter(|r| r.metric == "tcp_throughput_mbps" || r.metric == "udp_delay_ms")
                    .collect();
                write(dir, &format!("fig2{tag}_timeseries.csv"), &timeseries_csv(&rows))?;
                write(dir, &format!("fig2{tag}_run.csv"), &runs_csv([&out.report]))?;
            }
        }
        3 => {
            let out = single_ap_run(TuningPolicy::method1(), seed, duration, budget)?;
            write(dir, "fig3_trace.csv", &trace_csv(&out.trace))?;
        }
        _ => {
            let mut base = ScenarioConfig::preset("grid-16ap")?;
            if let Some(d) = duration {
                base.duration_s = d;
            }
            if let Some(b) = budget {
                base.budget_ms = Some(b);
            }
            let ns = SweepAxis::N(parse_list(n_list)?);
            let varied = match figure {
                4..=7 => SweepAxis::Policies(TuningPolicy::standard_set()),
                8 => SweepAxis::Method1Steps(vec![1_000, 3_000, 5_000, 10_000, 15_000]),
                _ => SweepAxis::Method2Factors(vec![
                    (0.618, 1.618),
                    (0.618, 2.618),
                    (0.381, 1.618),
                    (0.381, 2.618),
                    (0.236, 1.618),
                    (0.236, 2.618),
                ]),
            };
            let batches = sweep(&base, &[ns, varied], &parse_seeds(seeds)?)?;
            write_batches(dir, &batches)?;
            let metrics: &[(Metric, &str)] = match figure {
                4 => &[(Metric::TcpThroughputMbps, "fig4_throughput.dat")],
                5 => &[(Metric::UdpDelayMs, "fig5_latency.dat")],
                6 => &[(Metric::UdpJitterMs, "fig6_jitter.dat")],
                7 => &[(Metric::UdpLossRate, "fig7_loss.dat")],
                8 => &[
                    (Metric::TcpThroughputMbps, "fig8a_throughput.dat"),
                    (Metric::UdpDelayMs, "fig8b_latency.dat"),
                ],
                _ => &[
                    (Metric::TcpThroughputMbps, "fig9a_throughput.dat"),
                    (Metric::UdpDelayMs, "fig9b_latency.dat"),
                ],
            };
            for (m, name) in metrics {
                write(dir, name, &figure_table(&batches, *m))?;
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out_dir,
            timeseries,
        } => {
            let cfg = scenario.load()?;
            let out = run(&cfg, seed, RunOptions { timeseries, exchange_log: false })?;
            fs::create_dir_all(&out_dir)?;
            write(&out_dir, "runs.csv", &runs_csv([&out.report]))?;
            write(&out_dir, "trace.csv", &trace_csv(&out.trace))?;
            if timeseries {
                write(&out_dir, "timeseries.csv", &timeseries_csv(&out.timeseries))?;
            }
            if let Some(b) = out.balances.iter().find(|b| !b.holds()) {
                bail!("flow {} does not balance: {b:?}", b.flow.0);
            }
            println!("{}", out.report.csv_row());
        }
        Command::Batch {
            scenario,
            seeds,
            out_dir,
        } => {
            let cfg = scenario.load()?;
            let seeds = match seeds {
                Some(s) => parse_seeds(&s)?,
                None => cfg.seeds.clone(),
            };
            let out = ampdu_sim::run_batch(&cfg, &seeds)?;
            write_batches(&out_dir, std::slice::from_ref(&out))?;
            print!("{}", summary_csv([&out.summary]));
        }
        Command::Sweep {
            scenario,
            seeds,
            axes,
            out_dir,
        } => {
            let cfg = scenario.load()?;
            let seeds = match seeds {
                Some(s) => parse_seeds(&s)?,
                None => cfg.seeds.clone(),
            };
            let axes = axes.iter().map(|a| parse_axis(a)).collect::<Result<Vec<_>>>()?;
            let batches = sweep(&cfg, &axes, &seeds)?;
            write_batches(&out_dir, &batches)?;
        }
        Command::Preset { name, out } => {
            let text = ScenarioConfig::preset(&name)?.to_toml()?;
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
        Command::PlotData {
            figure,
            out_dir,
            seed,
            seeds,
            n_list,
            duration_s,
            budget_ms,
        } => plot_data(figure, &out_dir, seed, &seeds, &n_list, duration_s, budget_ms)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("1-3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("4,9").unwrap(), vec![4, 9]);
        assert!(parse_seeds("3-1").is_err());
        assert!(parse_seeds("a").is_err());
    }

    #[test]
    fn axis_specs() {
        assert_eq!(parse_axis("n=2,10").unwrap(), SweepAxis::N(vec![2, 10]));
        assert_eq!(parse_axis("policies=all").unwrap().len(), 7);
        assert_eq!(
            parse_axis("factors=0.381:2.618").unwrap(),
            SweepAxis::Method2Factors(vec![(0.381, 2.618)])
        );
        assert!(parse_axis("speed=1").is_err());
    }
}

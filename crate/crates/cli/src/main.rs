mod svg;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use matchnet::bounds::bounds_report;
use matchnet::engine::{run, run_ensemble, Observable, SimConfig, TrajectoryRecord};
use matchnet::experiment::{compare_policies, histogram, ComparisonReport, HistogramReport, Preset, Sampling, Scale};
use matchnet::graph::{Bipartiteness, Graph, VertexSet};
use matchnet::model::{check_ncond, is_stabilizable, validate, ModelFile};
use matchnet::oracle;
use matchnet::rng::rng_from_seed;
use matchnet::{PolicyKind, QueueState};

use svg::Series;

#[derive(Parser)]
#[command(name = "matchnet", version, about = "Stochastic matching models: simulation, stability and bounds")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Seed of all random streams.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for ensembles and experiments.
    #[arg(long, global = true, env = "MATCHNET_JOBS")]
    jobs: Option<usize>,
}

impl Global {
    fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Pretty,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    MaxWeight,
    MatchLongest,
    Priority,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::MaxWeight => PolicyKind::MaxWeight,
            PolicyArg::MatchLongest => PolicyKind::MatchTheLongest,
            PolicyArg::Priority => PolicyKind::Priority,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleArg {
    Desk,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Connectivity, bipartiteness, stabilizability and the stability condition.
    Check { model: PathBuf },
    /// Moment bounds for the stationary largest queue.
    Bounds {
        model: PathBuf,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
    },
    /// One trajectory as CSV.
    Simulate {
        model: PathBuf,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long)]
        horizon: f64,
        /// Initial buffer as comma-separated counts.
        #[arg(long)]
        initial: Option<String>,
        /// Emit rows on a regular time grid instead of at every event.
        #[arg(long)]
        grid: Option<f64>,
        #[arg(long)]
        max_events: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also draw the paths as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Independent runs and their terminal statistics.
    Ensemble {
        model: PathBuf,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Exact stationary moments of the chain truncated at `‖x‖_∞ ≤ N`.
    Oracle {
        model: PathBuf,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long = "level", short = 'N', default_value_t = 40)]
        level: u64,
        #[arg(long, default_value_t = oracle::DEFAULT_STATE_LIMIT)]
        max_states: usize,
    },
    /// Randomized experiment presets.
    Experiment {
        #[arg(value_parser = parse_preset)]
        preset: Preset,
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
        #[arg(long)]
        n_vertices: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Rate given to reneging classes.
        #[arg(long, default_value_t = 1.0)]
        reneging_rate: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Erdős–Rényi graph as JSON.
    GenGraph {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        /// Redraw until the graph is connected.
        #[arg(long)]
        connected: bool,
    },
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: matchnet::Error| e.to_string())
}

/// Verdict-carrying exit status.
enum Outcome {
    Ok,
    Unstable,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Unstable) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    match &cli.command {
        Command::Check { model } => cmd_check(g, model),
        Command::Bounds { model, kappa, policy } => {
            let mf = load(model)?;
            let policy = policy.map_or(mf.policy, Into::into);
            let report = bounds_report(&mf.spec, policy, *kappa)?;
            match g.format.unwrap_or(Format::Pretty) {
                Format::Json => emit_json(&report, None)?,
                _ => {
                    let mut s = String::new();
                    s += &format!("policy: {}\n", policy.name());
                    s += &format!("eta: {}\nkappa: {}\nu_kappa: {}\n", report.eta, report.kappa, report.u_kappa);
                    s += &format!("w_check: {}\nB: {}\n", report.w_check, report.noise_bound);
                    s += &format!("rho_tilde: {:?}\n", report.rho_tilde);
                    s += &format!("lower_mean: {}\n", report.lower_mean);
                    s += &format!("upper_mean: {}\n", report.upper_mean);
                    s += &format!("upper_variance: {}\n", report.upper_variance);
                    emit_text(&s, None)?;
                }
            }
            Ok(Outcome::Ok)
        }
        Command::Simulate {
            model,
            policy,
            horizon,
            initial,
            grid,
            max_events,
            out,
            svg,
        } => {
            let mf = load(model)?;
            let mut cfg = SimConfig::new(mf.spec, policy.map_or(mf.policy, Into::into), *horizon, g.seed);
            if let Some(x) = initial {
                cfg = cfg.with_initial_state(parse_state(x)?);
            }
            if let Some(m) = max_events {
                cfg = cfg.with_max_events(*m);
            }
            if let Some(dt) = grid {
                cfg = cfg.with_sample_grid(*dt);
            }
            let rec = run(&cfg)?;
            match g.format.unwrap_or(Format::Csv) {
                Format::Json => emit_json(&rec, out.as_deref())?,
                _ => emit_text(&rec.to_csv(cfg.sample_grid), out.as_deref())?,
            }
            if let Some(path) = svg {
                let s = trajectory_svg(&[(cfg.policy.name(), &rec)]);
                fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
            }
            if rec.truncated {
                eprintln!("warning: stopped after {} events", rec.event_count);
            }
            Ok(Outcome::Ok)
        }
        Command::Ensemble {
            model,
            policy,
            runs,
            horizon,
            out_dir,
        } => {
            let mf = load(model)?;
            let policy = policy.map_or(mf.policy, Into::into);
            let cfg = SimConfig::new(mf.spec, policy, *horizon, g.seed);
            let ens = run_ensemble(&cfg, *runs, g.jobs())?;
            let s = &ens.summary;
            match out_dir {
                None => emit_json(s, None)?,
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    write_json(&dir.join("summary.json"), s)?;
                    write(&dir.join("histogram.csv"), &histogram_csv(&s.max_queue_histogram.counts, &s.total_items_histogram.counts))?;
                    write(
                        &dir.join("boxplot.svg"),
                        &svg::box_plot(&format!("max queue at t = {horizon}"), &[(policy.name(), s.max_queue_quantiles)]),
                    )?;
                    write(
                        &dir.join("histogram.svg"),
                        &svg::histogram(&format!("max queue at t = {horizon}"), &s.max_queue_histogram.counts, &[("mean", s.max_queue_mean)]),
                    )?;
                }
            }
            Ok(Outcome::Ok)
        }
        Command::Oracle {
            model,
            policy,
            level,
            max_states,
        } => {
            let mf = load(model)?;
            let policy = policy.map_or(mf.policy, Into::into);
            let chain = oracle::TruncatedChain::build_with_limit(&mf.spec, policy, *level, *max_states)?;
            let st = chain.stationary()?;
            let m = chain.moments(&st.pi);
            let report = oracle::OracleReport {
                states: chain.len(),
                level: *level,
                mean_max: m.mean_max,
                var_max: m.var_max,
                mean_total: m.mean_total,
                residual: st.residual,
            };
            match g.format.unwrap_or(Format::Json) {
                Format::Pretty => emit_text(
                    &format!(
                        "states: {}\nN: {}\nmean_max: {}\nvar_max: {}\nmean_total: {}\nresidual: {:e}\n",
                        report.states, report.level, report.mean_max, report.var_max, report.mean_total, report.residual
                    ),
                    None,
                )?,
                _ => emit_json(&report, None)?,
            }
            Ok(Outcome::Ok)
        }
        Command::Experiment {
            preset,
            scale,
            n_vertices,
            p,
            runs,
            horizon,
            replicates,
            reneging_rate,
            out_dir,
        } => {
            let mut sc = match scale {
                ScaleArg::Desk => Scale::desk(*preset),
                ScaleArg::Full => Scale::full(*preset),
            };
            sc.n_vertices = n_vertices.unwrap_or(sc.n_vertices);
            sc.p = p.unwrap_or(sc.p);
            sc.runs = runs.unwrap_or(sc.runs);
            sc.horizon = horizon.unwrap_or(sc.horizon);
            sc.replicates = replicates.unwrap_or(sc.replicates);
            let sampling = Sampling {
                reneging_rate: *reneging_rate,
                ..Sampling::default()
            };
            fs::create_dir_all(out_dir)?;
            match preset {
                Preset::MwVsPriority | Preset::Boxplot => {
                    let r = compare_policies(*preset, &sc, &sampling, g.seed, g.jobs())?;
                    write_comparison(out_dir, &r)?;
                    eprintln!(
                        "max-weight median <= priority median in {}/{} instances; departures differ by {:.1}%",
                        r.mw_not_worse,
                        r.pairs.len(),
                        100.0 * r.departures_rel_diff
                    );
                }
                Preset::HistogramMl | Preset::HistogramNoisy => {
                    let r = histogram(*preset, &sc, &sampling, g.seed, g.jobs())?;
                    write_histogram(out_dir, &r)?;
                    eprintln!(
                        "terminal mean {:.3}; lower bound {}; upper bound {}",
                        r.empirical_mean, r.bounds.lower_mean, r.bounds.upper_mean
                    );
                }
            }
            Ok(Outcome::Ok)
        }
        Command::GenGraph { n, p, connected } => {
            let mut rng = rng_from_seed(g.seed);
            let graph = loop {
                let graph = Graph::erdos_renyi(*n, *p, &mut rng)?;
                if !connected || graph.is_connected() {
                    break graph;
                }
            };
            emit_json(&graph, None)?;
            Ok(Outcome::Ok)
        }
    }
}

#[derive(Serialize)]
struct CheckReport {
    connected: bool,
    bipartite: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    odd_cycle: Option<Vec<usize>>,
    stabilizable: bool,
    ncond: bool,
    /// Slack when the condition holds, otherwise minus the worst deficit.
    eta: f64,
    witness: Option<VertexSet>,
}

fn cmd_check(g: &Global, model: &Path) -> Result<Outcome> {
    let mf = load_unchecked(model)?;
    let violations = validate(&mf.spec);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{}: {}", v.field, v.message);
        }
        bail!("model is invalid ({} violation(s))", violations.len());
    }
    let graph = mf.spec.graph();
    let odd_cycle = match graph.bipartiteness() {
        Bipartiteness::OddCycle(c) => Some(c),
        Bipartiteness::Bipartite(..) => None,
    };
    let nc = check_ncond(&mf.spec)?;
    let report = CheckReport {
        connected: graph.is_connected(),
        bipartite: odd_cycle.is_none(),
        odd_cycle,
        stabilizable: is_stabilizable(graph, mf.spec.gamma())?,
        ncond: nc.holds,
        eta: nc.eta,
        witness: nc.witness.clone(),
    };
    match g.format.unwrap_or(Format::Pretty) {
        Format::Json => emit_json(&report, None)?,
        _ => {
            let yn = |b: bool| if b { "yes" } else { "no" };
            let mut s = format!(
                "connected: {}\nbipartite: {}\nstabilizable: {}\n",
                yn(report.connected),
                yn(report.bipartite),
                yn(report.stabilizable)
            );
            if nc.holds {
                s += &format!("NCOND: holds, eta={}\n", nc.eta);
            } else {
                s += &format!("NCOND: violated, deficit={}\n", -nc.eta);
            }
            if let Some(w) = &nc.witness {
                let items: Vec<String> = w.iter().map(|v| v.to_string()).collect();
                s += &format!("witness: {{{}}}\n", items.join(","));
            }
            emit_text(&s, None)?;
        }
    }
    Ok(if nc.holds { Outcome::Ok } else { Outcome::Unstable })
}

fn load_unchecked(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ModelFile::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load(path: &Path) -> Result<ModelFile> {
    let mf = load_unchecked(path)?;
    let violations = validate(&mf.spec);
    if !violations.is_empty() {
        return Err(matchnet::Error::InvalidModel(violations)).with_context(|| format!("checking {}", path.display()));
    }
    Ok(mf)
}

fn parse_state(s: &str) -> Result<QueueState> {
    let counts = s
        .split(',')
        .map(|t| t.trim().parse::<u64>().with_context(|| format!("bad count {t:?}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(QueueState::from_counts(counts))
}

fn emit_text(s: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write(p, s),
        None => {
            std::io::stdout().lock().write_all(s.as_bytes())?;
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(v: &T, out: Option<&Path>) -> Result<()> {
    emit_text(&(serde_json::to_string_pretty(v)? + "\n"), out)
}

fn write(path: &Path, s: &str) -> Result<()> {
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(v)? + "\n"))
}

fn histogram_csv(max_queue: &[u64], total: &[u64]) -> String {
    let mut s = String::from("value,max_queue_count,total_items_count\n");
    for v in 0..max_queue.len().max(total.len()) {
        let get = |h: &[u64]| h.get(v).copied().unwrap_or(0);
        s += &format!("{v},{},{}\n", get(max_queue), get(total));
    }
    s
}

/// Points of `obs` on 500 grid steps.
fn grid_points(rec: &TrajectoryRecord, obs: Observable) -> Vec<(f64, f64)> {
    let steps = 500;
    (0..=steps)
        .map(|k| {
            let t = rec.horizon * k as f64 / steps as f64;
            (t, rec.value_at(obs, t))
        })
        .collect()
}

fn trajectory_svg(runs: &[(&str, &TrajectoryRecord)]) -> String {
    let panel = |obs: Observable| -> Vec<Series> {
        runs.iter()
            .map(|(label, rec)| Series {
                label,
                points: grid_points(rec, obs),
            })
            .collect()
    };
    svg::line_panels(&[
        ("largest queue", panel(Observable::MaxQueue)),
        ("cumulative reward", panel(Observable::CumReward)),
        ("cumulative departures", panel(Observable::CumDepartures)),
    ])
}

fn write_comparison(dir: &Path, r: &ComparisonReport) -> Result<()> {
    write_json(&dir.join("report.json"), r)?;
    let mut csv = String::from(
        "index,seed,n_edges,eta,mw_median_max_queue,priority_median_max_queue,\
         mw_mean_reward,priority_mean_reward,mw_mean_departures,priority_mean_departures\n",
    );
    for p in &r.pairs {
        csv += &format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            p.index,
            p.seed,
            p.n_edges,
            p.eta,
            p.max_weight.median_max_queue,
            p.priority.median_max_queue,
            p.max_weight.mean_reward,
            p.priority.mean_reward,
            p.max_weight.mean_departures,
            p.priority.mean_departures
        );
    }
    write(&dir.join("pairs.csv"), &csv)?;
    write(
        &dir.join("boxplot.svg"),
        &svg::box_plot(
            &format!("largest queue at t = {}", r.scale.horizon),
            &[("max-weight", r.max_weight_quantiles), ("priority", r.priority_quantiles)],
        ),
    )?;
    if r.preset == Preset::MwVsPriority {
        let (mw, prio) = &r.pairs[0].example;
        let grid = Some(r.scale.horizon / 1000.0);
        write(&dir.join("pair_000_max_weight.csv"), &mw.to_csv(grid))?;
        write(&dir.join("pair_000_priority.csv"), &prio.to_csv(grid))?;
        write(&dir.join("paths.svg"), &trajectory_svg(&[("max-weight", mw), ("priority", prio)]))?;
    }
    Ok(())
}

fn write_histogram(dir: &Path, r: &HistogramReport) -> Result<()> {
    write_json(&dir.join("report.json"), r)?;
    let s = &r.summary;
    write(&dir.join("histogram.csv"), &histogram_csv(&s.max_queue_histogram.counts, &s.total_items_histogram.counts))?;
    let mut markers = Vec::new();
    if let Some(v) = r.bounds.lower_mean.value() {
        markers.push(("lower", v));
    }
    // The noisy upper bound is orders of magnitude off the data.
    if r.preset == Preset::HistogramMl {
        if let Some(v) = r.bounds.upper_mean.value() {
            markers.push(("upper", v));
        }
    }
    write(
        &dir.join("histogram.svg"),
        &svg::histogram(&format!("largest queue at t = {}", r.scale.horizon), &s.max_queue_histogram.counts, &markers),
    )?;
    Ok(())
}

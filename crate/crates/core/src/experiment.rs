//! Randomized experiment presets: Max-Weight against priority on sampled
//! instances, and terminal-queue histograms for one sampled instance.

use rand::Rng;
use serde::Serialize;

use crate::bounds::{bounds_report, BoundsReport};
use crate::engine::{par_map, run, run_ensemble, EnsembleSummary, SimConfig, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{check_ncond, find_stabilizing_lambda, ModelFile, ModelSpec};
use crate::noise::NoiseSpec;
use crate::policy::PolicyKind;
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::stats::{mean, median, variance, FiveNumber};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    MwVsPriority,
    Boxplot,
    HistogramMl,
    HistogramNoisy,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::MwVsPriority,
        Preset::Boxplot,
        Preset::HistogramMl,
        Preset::HistogramNoisy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::MwVsPriority => "mw_vs_priority",
            Preset::Boxplot => "boxplot",
            Preset::HistogramMl => "histogram_ml",
            Preset::HistogramNoisy => "histogram_noisy",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown preset '{s}'")))
    }
}

/// Size parameters of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scale {
    pub n_vertices: usize,
    pub p: f64,
    /// Sampled instances for comparisons, runs of the ensemble for histograms.
    pub runs: usize,
    pub horizon: f64,
    /// Runs per policy on each compared instance.
    pub replicates: usize,
}

impl Scale {
    /// 30 classes, p = 0.1.
    pub fn full(preset: Preset) -> Self {
        let runs = match preset {
            Preset::MwVsPriority | Preset::Boxplot => 100,
            Preset::HistogramMl | Preset::HistogramNoisy => 500,
        };
        Self {
            n_vertices: 30,
            p: 0.1,
            runs,
            horizon: 100.0,
            replicates: 1,
        }
    }

    /// Laptop-sized defaults.
    pub fn desk(preset: Preset) -> Self {
        match preset {
            Preset::MwVsPriority => Self {
                n_vertices: 12,
                p: 0.25,
                runs: 30,
                horizon: 200.0,
                replicates: 21,
            },
            Preset::Boxplot => Self {
                n_vertices: 12,
                p: 0.25,
                runs: 30,
                horizon: 200.0,
                replicates: 1,
            },
            Preset::HistogramMl | Preset::HistogramNoisy => Self {
                n_vertices: 12,
                p: 0.25,
                runs: 200,
                horizon: 100.0,
                replicates: 1,
            },
        }
    }
}

/// Distributions of the sampled parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sampling {
    /// `λ(i) ~ Unif[0, lambda_max]`.
    pub lambda_max: f64,
    /// `w ~ Unif[0, reward_max]`, symmetric.
    pub reward_max: f64,
    /// Reneging rate given to a class when its Bernoulli(1/2) draw succeeds.
    pub reneging_rate: f64,
    /// Noise `Unif[−h, h]` in the noisy preset.
    pub noise_halfwidth: f64,
    /// λ redraws per sampled graph before the graph itself is redrawn.
    pub lambda_tries: usize,
    pub max_instances: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            lambda_max: 10.0,
            reward_max: 10.0,
            reneging_rate: 1.0,
            noise_halfwidth: 1.0,
            lambda_tries: 10_000,
            max_instances: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    /// Half the classes renege, random symmetric rewards, exact readings.
    Reneging,
    /// Patient classes, null rewards, exact readings.
    MatchLongest,
    /// Patient classes, random symmetric rewards, uniform noise.
    Noisy,
}

fn symmetric_rewards(g: &Graph, max: f64, rng: &mut SimRng) -> Vec<((usize, usize), f64)> {
    let mut out = Vec::with_capacity(2 * g.n_edges());
    for &(a, b) in g.edges() {
        let w = max * rng.random::<f64>();
        out.push(((a, b), w));
        out.push(((b, a), w));
    }
    out
}

/// Samples a connected ER graph and parameters of the given kind, redrawing
/// until NCOND holds.
pub fn sample_instance(
    kind: InstanceKind,
    n: usize,
    p: f64,
    sampling: &Sampling,
    rng: &mut SimRng,
) -> Result<ModelSpec> {
    for _ in 0..sampling.max_instances {
        let g = Graph::erdos_renyi(n, p, rng)?;
        if !g.is_connected() {
            continue;
        }
        let gamma: Vec<f64> = match kind {
            InstanceKind::Reneging => (0..n)
                .map(|_| if rng.random_bool(0.5) { sampling.reneging_rate } else { 0.0 })
                .collect(),
            _ => vec![0.0; n],
        };
        let rewards = match kind {
            InstanceKind::MatchLongest => Vec::new(),
            _ => symmetric_rewards(&g, sampling.reward_max, rng),
        };
        let Some(lambda) = find_stabilizing_lambda(&g, &gamma, rng, sampling.lambda_tries) else {
            continue;
        };
        let lambda: Vec<f64> = lambda.iter().map(|l| l * sampling.lambda_max / 10.0).collect();
        let mut spec = ModelSpec::new(g, lambda, gamma)?;
        for (pair, w) in rewards {
            spec = spec.with_reward(pair, w);
        }
        if kind == InstanceKind::Noisy {
            let h = sampling.noise_halfwidth;
            spec = spec.with_noise_all(NoiseSpec::uniform(-h, h));
        }
        debug_assert!(check_ncond(&spec)?.holds);
        return Ok(spec);
    }
    Err(Error::Numerical(format!(
        "no NCOND instance found in {} attempts",
        sampling.max_instances
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyOutcome {
    pub policy: PolicyKind,
    pub terminal_max_queue: Vec<u64>,
    pub median_max_queue: f64,
    pub mean_reward: f64,
    pub mean_departures: f64,
    pub mean_reneged: f64,
}

impl PolicyOutcome {
    fn of(policy: PolicyKind, records: &[TrajectoryRecord]) -> Self {
        let last = |r: &TrajectoryRecord| r.event_times.len() - 1;
        let q: Vec<u64> = records.iter().map(|r| r.max_queue_path[last(r)]).collect();
        let qf: Vec<f64> = q.iter().map(|&v| v as f64).collect();
        let f = |g: &dyn Fn(&TrajectoryRecord) -> f64| mean(&records.iter().map(g).collect::<Vec<_>>());
        Self {
            policy,
            median_max_queue: median(&qf),
            terminal_max_queue: q,
            mean_reward: f(&|r| r.cumulative_reward[last(r)]),
            mean_departures: f(&|r| r.cumulative_departures[last(r)] as f64),
            mean_reneged: f(&|r| r.cumulative_reneged[last(r)] as f64),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairOutcome {
    pub index: usize,
    pub seed: u64,
    pub n_edges: usize,
    pub eta: f64,
    pub instance: serde_json::Value,
    pub max_weight: PolicyOutcome,
    pub priority: PolicyOutcome,
    /// First replicate of each policy, for path plots.
    #[serde(skip)]
    pub example: (TrajectoryRecord, TrajectoryRecord),
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub preset: Preset,
    pub seed: u64,
    pub scale: Scale,
    pub sampling: Sampling,
    pub pairs: Vec<PairOutcome>,
    /// Pairs where the Max-Weight median terminal max-queue does not exceed
    /// the priority one.
    pub mw_not_worse: usize,
    pub max_weight_quantiles: FiveNumber,
    pub priority_quantiles: FiveNumber,
    pub total_departures_mw: f64,
    pub total_departures_priority: f64,
    /// `|D_mw − D_prio| / max(D_mw, D_prio)` over all pairs.
    pub departures_rel_diff: f64,
    pub total_reward_mw: f64,
    pub total_reward_priority: f64,
}

/// Runs both policies on `scale.runs` independently sampled instances. Both
/// policies see the same seeds.
pub fn compare_policies(
    preset: Preset,
    scale: &Scale,
    sampling: &Sampling,
    seed: u64,
    jobs: usize,
) -> Result<ComparisonReport> {
    if scale.runs == 0 || scale.replicates == 0 {
        return Err(Error::Input("runs and replicates must be positive".into()));
    }
    let indices: Vec<usize> = (0..scale.runs).collect();
    let pairs = par_map(jobs, &indices, |&k| {
        let pair_seed = derive_seed(seed, k as u64);
        let mut rng = rng_from_seed(pair_seed);
        let spec = sample_instance(InstanceKind::Reneging, scale.n_vertices, scale.p, sampling, &mut rng)?;
        let run_policy = |policy: PolicyKind| -> Result<Vec<TrajectoryRecord>> {
            (0..scale.replicates as u64)
                .map(|r| run(&SimConfig::new(spec.clone(), policy, scale.horizon, derive_seed(pair_seed, r))))
                .collect()
        };
        let mw = run_policy(PolicyKind::MaxWeight)?;
        let prio = run_policy(PolicyKind::Priority)?;
        Ok(PairOutcome {
            index: k,
            seed: pair_seed,
            n_edges: spec.graph().n_edges(),
            eta: check_ncond(&spec)?.eta,
            instance: ModelFile {
                spec: spec.clone(),
                policy: PolicyKind::MaxWeight,
            }
            .to_value(),
            max_weight: PolicyOutcome::of(PolicyKind::MaxWeight, &mw),
            priority: PolicyOutcome::of(PolicyKind::Priority, &prio),
            example: (mw[0].clone(), prio[0].clone()),
        })
    })?;
    let mw_not_worse = pairs
        .iter()
        .filter(|p| p.max_weight.median_max_queue <= p.priority.median_max_queue)
        .count();
    let terminal = |f: &dyn Fn(&PairOutcome) -> &PolicyOutcome| -> Vec<f64> {
        pairs
            .iter()
            .flat_map(|p| f(p).terminal_max_queue.iter().map(|&v| v as f64))
            .collect()
    };
    let sum = |f: &dyn Fn(&PairOutcome) -> f64| pairs.iter().map(f).sum::<f64>();
    let d_mw = sum(&|p| p.max_weight.mean_departures);
    let d_pr = sum(&|p| p.priority.mean_departures);
    Ok(ComparisonReport {
        preset,
        seed,
        scale: *scale,
        sampling: *sampling,
        mw_not_worse,
        max_weight_quantiles: FiveNumber::of(&terminal(&|p| &p.max_weight)),
        priority_quantiles: FiveNumber::of(&terminal(&|p| &p.priority)),
        total_departures_mw: d_mw,
        total_departures_priority: d_pr,
        departures_rel_diff: (d_mw - d_pr).abs() / d_mw.max(d_pr),
        total_reward_mw: sum(&|p| p.max_weight.mean_reward),
        total_reward_priority: sum(&|p| p.priority.mean_reward),
        pairs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramReport {
    pub preset: Preset,
    pub seed: u64,
    pub scale: Scale,
    pub sampling: Sampling,
    pub policy: PolicyKind,
    pub instance: serde_json::Value,
    pub bounds: BoundsReport,
    pub summary: EnsembleSummary,
    pub empirical_mean: f64,
    pub empirical_variance: f64,
}

/// Samples one instance and runs an ensemble on it.
pub fn histogram(
    preset: Preset,
    scale: &Scale,
    sampling: &Sampling,
    seed: u64,
    jobs: usize,
) -> Result<HistogramReport> {
    let (kind, policy) = match preset {
        Preset::HistogramMl => (InstanceKind::MatchLongest, PolicyKind::MatchTheLongest),
        Preset::HistogramNoisy => (InstanceKind::Noisy, PolicyKind::MaxWeight),
        _ => return Err(Error::Input(format!("{} is not a histogram preset", preset.name()))),
    };
    let mut rng = rng_from_seed(derive_seed(seed, u64::MAX));
    let spec = sample_instance(kind, scale.n_vertices, scale.p, sampling, &mut rng)?;
    let bounds = bounds_report(&spec, policy, None)?;
    let cfg = SimConfig::new(spec.clone(), policy, scale.horizon, seed);
    let ens = run_ensemble(&cfg, scale.runs, jobs)?;
    let values: Vec<f64> = ens.summary.terminal_max_queue.iter().map(|&v| v as f64).collect();
    Ok(HistogramReport {
        preset,
        seed,
        scale: *scale,
        sampling: *sampling,
        policy,
        instance: ModelFile { spec, policy }.to_value(),
        bounds,
        empirical_mean: mean(&values),
        empirical_variance: variance(&values),
        summary: ens.summary,
    })
}

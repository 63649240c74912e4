//! Event-driven simulation of the queue-length chain.
//!
//! The state is the vector of per-class counts. From state `x` the chain
//! leaves at total rate `Λ(x) = λ(V) + Σ_{i∈R} γ(i) x(i)`: either an item
//! arrives (class drawn from `μ_λ`, then matched or stored by the policy) or
//! one stored `i`-item abandons. Per-item patience clocks are not needed:
//! with exponential patience the first of `x(i)` clocks rings at rate
//! `γ(i) x(i)` and the items are exchangeable.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, QueueState};
use crate::policy::{Chooser, PolicyKind};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::{mean, variance, BatchMeans, FiveNumber, Histogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    ArrivalMatched { arriving: usize, matched: usize },
    ArrivalStored { class: usize },
    Reneged { class: usize },
}

/// One transition of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub holding_time: f64,
    pub event: Event,
    pub next: QueueState,
}

/// Sampler for single transitions, with the per-model tables precomputed.
pub struct Simulator<'a> {
    spec: &'a ModelSpec,
    policy: PolicyKind,
    /// Running sums of `λ`, used to pick the arriving class.
    cum_lambda: Vec<f64>,
    lambda_total: f64,
    reneging: Vec<usize>,
    chooser: Chooser,
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &'a ModelSpec, policy: PolicyKind) -> Result<Self> {
        spec.ensure_valid()?;
        let mut acc = 0.0;
        let cum_lambda = spec
            .lambda()
            .iter()
            .map(|l| {
                acc += l;
                acc
            })
            .collect();
        Ok(Self {
            spec,
            policy,
            cum_lambda,
            lambda_total: acc,
            reneging: spec.reneging().into_iter().collect(),
            chooser: Chooser::new(),
        })
    }

    pub fn reneging_rate(&self, x: &QueueState) -> f64 {
        self.reneging
            .iter()
            .map(|&i| self.spec.gamma()[i] * x.get(i) as f64)
            .sum()
    }

    /// `Λ(x)`.
    pub fn total_rate(&self, x: &QueueState) -> f64 {
        self.lambda_total + self.reneging_rate(x)
    }

    /// Draws the holding time in `x`.
    pub fn holding_time<R: Rng + ?Sized>(&self, x: &QueueState, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(Exp1);
        e / self.total_rate(x)
    }

    /// Draws which event ends the holding period and applies it to `x`.
    pub fn fire<R: Rng + ?Sized>(&mut self, x: &mut QueueState, rng: &mut R) -> Event {
        let renege = self.reneging_rate(x);
        let u = rng.random::<f64>() * (self.lambda_total + renege);
        if u < self.lambda_total || renege == 0.0 {
            let j = self
                .cum_lambda
                .partition_point(|&c| c <= u)
                .min(self.cum_lambda.len() - 1);
            match self.chooser.choose(self.policy, self.spec, x, j, rng) {
                Some(i) => {
                    x.decrement(i);
                    Event::ArrivalMatched {
                        arriving: j,
                        matched: i,
                    }
                }
                None => {
                    x.increment(j);
                    Event::ArrivalStored { class: j }
                }
            }
        } else {
            let mut rest = u - self.lambda_total;
            let mut pick = None;
            for &i in &self.reneging {
                let r = self.spec.gamma()[i] * x.get(i) as f64;
                if r > 0.0 {
                    pick = Some(i);
                    if rest < r {
                        break;
                    }
                    rest -= r;
                }
            }
            // Rounding can push `rest` past the last positive weight.
            let i = pick.expect("positive reneging rate implies a nonempty reneging class");
            x.decrement(i);
            Event::Reneged { class: i }
        }
    }
}

/// Samples one transition from `x`.
pub fn step<R: Rng + ?Sized>(
    spec: &ModelSpec,
    policy: PolicyKind,
    x: &QueueState,
    rng: &mut R,
) -> Result<Step> {
    if !spec.is_admissible(x)? {
        return Err(Error::Inadmissible(format!("{x}")));
    }
    let mut sim = Simulator::new(spec, policy)?;
    let holding_time = sim.holding_time(x, rng);
    let mut next = x.clone();
    let event = sim.fire(&mut next, rng);
    Ok(Step {
        holding_time,
        event,
        next,
    })
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub spec: ModelSpec,
    pub policy: PolicyKind,
    pub horizon: f64,
    /// Defaults to the empty buffer.
    pub initial_state: Option<QueueState>,
    pub seed: u64,
    /// Output grid spacing; the record itself is always event-exact.
    pub sample_grid: Option<f64>,
    pub max_events: u64,
    /// Keep the full state after every event.
    pub record_states: bool,
}

impl SimConfig {
    pub fn new(spec: ModelSpec, policy: PolicyKind, horizon: f64, seed: u64) -> Self {
        Self {
            spec,
            policy,
            horizon,
            initial_state: None,
            seed,
            sample_grid: None,
            max_events: 1_000_000_000,
            record_states: false,
        }
    }

    pub fn with_initial_state(mut self, x: QueueState) -> Self {
        self.initial_state = Some(x);
        self
    }

    pub fn with_sample_grid(mut self, dt: f64) -> Self {
        self.sample_grid = Some(dt);
        self
    }

    pub fn with_max_events(mut self, n: u64) -> Self {
        self.max_events = n;
        self
    }

    pub fn recording_states(mut self) -> Self {
        self.record_states = true;
        self
    }

    fn initial(&self) -> QueueState {
        self.initial_state
            .clone()
            .unwrap_or_else(|| QueueState::zeros(self.spec.n_vertices()))
    }
}

/// Scalar observables of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    MaxQueue,
    TotalItems,
    CumReward,
    CumDepartures,
    CumReneged,
}

/// Piecewise-constant, right-continuous paths sampled at event instants.
/// Entry 0 is the initial condition at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub horizon: f64,
    pub event_times: Vec<f64>,
    pub max_queue_path: Vec<u64>,
    pub total_items_path: Vec<u64>,
    pub cumulative_reward: Vec<f64>,
    /// Items leaving through matches, two per match.
    pub cumulative_departures: Vec<u64>,
    pub cumulative_reneged: Vec<u64>,
    pub arrivals: u64,
    pub initial_state: QueueState,
    pub final_state: QueueState,
    /// Number of events fired in `[0, horizon]`.
    pub event_count: u64,
    pub truncated: bool,
    #[serde(skip)]
    pub states: Option<Vec<QueueState>>,
}

pub const CSV_HEADER: &str = "t,max_queue,total_items,cum_reward,cum_departures,cum_reneged";

impl TrajectoryRecord {
    fn index_at(&self, t: f64) -> usize {
        self.event_times.partition_point(|&s| s <= t).max(1) - 1
    }

    fn value(&self, obs: Observable, k: usize) -> f64 {
        match obs {
            Observable::MaxQueue => self.max_queue_path[k] as f64,
            Observable::TotalItems => self.total_items_path[k] as f64,
            Observable::CumReward => self.cumulative_reward[k],
            Observable::CumDepartures => self.cumulative_departures[k] as f64,
            Observable::CumReneged => self.cumulative_reneged[k] as f64,
        }
    }

    pub fn value_at(&self, obs: Observable, t: f64) -> f64 {
        self.value(obs, self.index_at(t))
    }

    /// State at time `t`; needs `record_states`.
    pub fn state_at(&self, t: f64) -> Option<&QueueState> {
        self.states.as_ref().map(|s| &s[self.index_at(t)])
    }

    pub fn terminal(&self, obs: Observable) -> f64 {
        self.value(obs, self.event_times.len() - 1)
    }

    /// `(1 / (t1 − t0)) ∫_{t0}^{t1} obs(s) ds`.
    pub fn time_average(&self, obs: Observable, t0: f64, t1: f64) -> f64 {
        assert!(t1 > t0, "empty averaging window");
        let mut k = self.index_at(t0);
        let mut t = t0;
        let mut acc = 0.0;
        while t < t1 {
            let next = self.event_times.get(k + 1).copied().unwrap_or(f64::INFINITY).min(t1);
            acc += self.value(obs, k) * (next - t);
            t = next;
            k += 1;
        }
        acc / (t1 - t0)
    }

    /// Batch-means estimate over `n_batches` equal windows of `[t0, horizon]`.
    pub fn batch_means(&self, obs: Observable, t0: f64, n_batches: usize) -> BatchMeans {
        let width = (self.horizon - t0) / n_batches as f64;
        let means: Vec<f64> = (0..n_batches)
            .map(|b| {
                let a = t0 + b as f64 * width;
                self.time_average(obs, a, a + width)
            })
            .collect();
        BatchMeans::of(&means)
    }

    /// Arrivals equal matched departures plus abandonments plus net growth.
    pub fn conservation_holds(&self) -> bool {
        let departed = *self.cumulative_departures.last().unwrap();
        let reneged = *self.cumulative_reneged.last().unwrap();
        self.arrivals + self.initial_state.total() == departed + reneged + self.final_state.total()
    }

    /// CSV rows at every event, or on the grid `0, dt, 2dt, … ≤ horizon`.
    pub fn to_csv(&self, grid: Option<f64>) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let mut row = |t: f64, k: usize| {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t,
                self.max_queue_path[k],
                self.total_items_path[k],
                self.cumulative_reward[k],
                self.cumulative_departures[k],
                self.cumulative_reneged[k]
            ));
        };
        match grid {
            Some(dt) => {
                let steps = (self.horizon / dt + 1e-9).floor() as u64;
                for s in 0..=steps {
                    let t = s as f64 * dt;
                    row(t, self.index_at(t));
                }
            }
            None => {
                for (k, &t) in self.event_times.iter().enumerate() {
                    row(t, k);
                }
            }
        }
        out
    }
}

pub fn run(cfg: &SimConfig) -> Result<TrajectoryRecord> {
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(Error::Input(format!("horizon {} must be positive", cfg.horizon)));
    }
    if let Some(dt) = cfg.sample_grid {
        if !(dt > 0.0) {
            return Err(Error::Input(format!("sample grid {dt} must be positive")));
        }
    }
    let mut x = cfg.initial();
    if !cfg.spec.is_admissible(&x)? {
        return Err(Error::Inadmissible(format!("initial state {x}")));
    }
    let mut sim = Simulator::new(&cfg.spec, cfg.policy)?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut rec = TrajectoryRecord {
        horizon: cfg.horizon,
        event_times: vec![0.0],
        max_queue_path: vec![x.max_norm()],
        total_items_path: vec![x.total()],
        cumulative_reward: vec![0.0],
        cumulative_departures: vec![0],
        cumulative_reneged: vec![0],
        arrivals: 0,
        initial_state: x.clone(),
        final_state: x.clone(),
        event_count: 0,
        truncated: false,
        states: cfg.record_states.then(|| vec![x.clone()]),
    };
    let (mut t, mut reward, mut departed, mut reneged) = (0.0, 0.0, 0u64, 0u64);
    loop {
        if rec.event_count >= cfg.max_events {
            rec.truncated = true;
            break;
        }
        let dt = sim.holding_time(&x, &mut rng);
        if t + dt > cfg.horizon {
            break;
        }
        t += dt;
        match sim.fire(&mut x, &mut rng) {
            Event::ArrivalMatched { arriving, matched } => {
                rec.arrivals += 1;
                departed += 2;
                reward += cfg.spec.reward(arriving, matched);
            }
            Event::ArrivalStored { .. } => rec.arrivals += 1,
            Event::Reneged { .. } => reneged += 1,
        }
        debug_assert!(x.is_admissible_on(cfg.spec.graph()));
        rec.event_count += 1;
        rec.event_times.push(t);
        rec.max_queue_path.push(x.max_norm());
        rec.total_items_path.push(x.total());
        rec.cumulative_reward.push(reward);
        rec.cumulative_departures.push(departed);
        rec.cumulative_reneged.push(reneged);
        if let Some(s) = rec.states.as_mut() {
            s.push(x.clone());
        }
    }
    rec.final_state = x;
    Ok(rec)
}

/// Per-run terminal values and their distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub n_runs: usize,
    pub horizon: f64,
    pub seeds: Vec<u64>,
    pub terminal_max_queue: Vec<u64>,
    pub terminal_total_items: Vec<u64>,
    pub terminal_reward: Vec<f64>,
    pub terminal_departures: Vec<u64>,
    pub terminal_reneged: Vec<u64>,
    pub max_queue_quantiles: FiveNumber,
    pub max_queue_mean: f64,
    pub max_queue_variance: f64,
    /// Counts of terminal `‖X_T‖_∞ = 0, 1, 2, …`.
    pub max_queue_histogram: Histogram,
    /// Counts of terminal `‖X_T‖_1 = 0, 1, 2, …`.
    pub total_items_histogram: Histogram,
    pub truncated_runs: usize,
}

impl EnsembleSummary {
    pub fn of(records: &[TrajectoryRecord], seeds: Vec<u64>) -> Self {
        let last = |r: &TrajectoryRecord| r.event_times.len() - 1;
        let max_q: Vec<u64> = records.iter().map(|r| r.max_queue_path[last(r)]).collect();
        let total: Vec<u64> = records.iter().map(|r| r.total_items_path[last(r)]).collect();
        let as_f: Vec<f64> = max_q.iter().map(|&v| v as f64).collect();
        Self {
            n_runs: records.len(),
            horizon: records.first().map_or(0.0, |r| r.horizon),
            seeds,
            terminal_reward: records.iter().map(|r| r.cumulative_reward[last(r)]).collect(),
            terminal_departures: records.iter().map(|r| r.cumulative_departures[last(r)]).collect(),
            terminal_reneged: records.iter().map(|r| r.cumulative_reneged[last(r)]).collect(),
            max_queue_quantiles: FiveNumber::of(&as_f),
            max_queue_mean: mean(&as_f),
            max_queue_variance: variance(&as_f),
            max_queue_histogram: Histogram::of(&max_q),
            total_items_histogram: Histogram::of(&total),
            terminal_max_queue: max_q,
            terminal_total_items: total,
            truncated_runs: records.iter().filter(|r| r.truncated).count(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub records: Vec<TrajectoryRecord>,
    pub summary: EnsembleSummary,
}

/// Runs `n_runs` independent copies of `cfg`; run `i` is seeded with
/// `derive_seed(cfg.seed, i)`, so results do not depend on `parallelism`.
pub fn run_ensemble(cfg: &SimConfig, n_runs: usize, parallelism: usize) -> Result<Ensemble> {
    if n_runs == 0 {
        return Err(Error::Input("ensemble needs at least one run".into()));
    }
    let seeds: Vec<u64> = (0..n_runs as u64).map(|i| derive_seed(cfg.seed, i)).collect();
    let records = par_map(parallelism, &seeds, |&seed| {
        let mut c = cfg.clone();
        c.seed = seed;
        run(&c)
    })?;
    let summary = EnsembleSummary::of(&records, seeds);
    Ok(Ensemble { records, summary })
}

/// Order-preserving parallel map on a dedicated pool of `threads` workers.
pub fn par_map<T, U, F>(threads: usize, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::rng::rng_from_seed;

    fn k3() -> ModelSpec {
        ModelSpec::new(Graph::complete(3), vec![1.0; 3], vec![0.0; 3]).unwrap()
    }

    #[test]
    fn step_examples() {
        let spec = k3();
        let ml = PolicyKind::MatchTheLongest;
        let mut rng = rng_from_seed(1);
        let s = step(&spec, ml, &QueueState::zeros(3), &mut rng).unwrap();
        match s.event {
            Event::ArrivalStored { class } => assert_eq!(s.next, QueueState::unit(3, class, 1)),
            e => panic!("{e:?}"),
        }
        assert!(s.holding_time > 0.0);

        for _ in 0..200 {
            let s = step(&spec, ml, &QueueState::unit(3, 0, 5), &mut rng).unwrap();
            match s.event {
                Event::ArrivalMatched { arriving, matched } => {
                    assert!(arriving == 1 || arriving == 2);
                    assert_eq!(matched, 0);
                    assert_eq!(s.next, QueueState::unit(3, 0, 4));
                }
                Event::ArrivalStored { class } => {
                    assert_eq!(class, 0);
                    assert_eq!(s.next, QueueState::unit(3, 0, 6));
                }
                e => panic!("{e:?}"),
            }
        }
        assert!(step(&spec, ml, &QueueState::from_counts(vec![1, 1, 0]), &mut rng).is_err());
    }

    #[test]
    fn reneging_frequency() {
        let spec = ModelSpec::new(Graph::path(2), vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let mut rng = rng_from_seed(2);
        let x = QueueState::from_counts(vec![3, 0]);
        let m = 200_000;
        let reneged = (0..m)
            .filter(|_| {
                matches!(
                    step(&spec, PolicyKind::MaxWeight, &x, &mut rng).unwrap().event,
                    Event::Reneged { class: 0 }
                )
            })
            .count();
        let p = 3.0 / 5.0;
        let f = reneged as f64 / m as f64;
        let se = (p * (1.0 - p) / m as f64).sqrt();
        assert!((f - p).abs() < 4.0 * se, "{f}");
    }

    #[test]
    fn run_is_deterministic_and_conserves_items() {
        let spec = ModelSpec::new(Graph::paw(), vec![2.0, 1.0, 1.0, 1.0], vec![0.0, 0.5, 0.0, 1.0])
            .unwrap()
            .with_rewards_all(1.5);
        let cfg = SimConfig::new(spec, PolicyKind::MaxWeight, 200.0, 17).recording_states();
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(None), b.to_csv(None));
        assert!(a.conservation_holds());
        assert!(a.event_times.windows(2).all(|w| w[0] < w[1]));
        assert!(a.cumulative_reward.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.cumulative_departures.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.states.as_ref().unwrap().iter().all(|x| x.is_admissible_on(cfg.spec.graph())));
        assert_eq!(a.event_count as usize + 1, a.event_times.len());
        assert_ne!(run(&SimConfig { seed: 18, ..cfg.clone() }).unwrap(), a);
    }

    #[test]
    fn tiny_horizon_keeps_initial_state() {
        let spec = ModelSpec::new(Graph::complete(3), vec![1e-3; 3], vec![0.0; 3]).unwrap();
        let x0 = QueueState::unit(3, 1, 4);
        let cfg = SimConfig::new(spec, PolicyKind::MaxWeight, 1e-3, 3).with_initial_state(x0.clone());
        let r = run(&cfg).unwrap();
        assert_eq!(r.event_count, 0);
        assert_eq!(r.final_state, x0);
        assert_eq!(r.time_average(Observable::MaxQueue, 0.0, 1e-3), 4.0);
    }

    #[test]
    fn truncation_and_bad_configs() {
        let cfg = SimConfig::new(k3(), PolicyKind::MaxWeight, 1e6, 1).with_max_events(10);
        let r = run(&cfg).unwrap();
        assert!(r.truncated);
        assert_eq!(r.event_count, 10);
        assert!(run(&SimConfig::new(k3(), PolicyKind::MaxWeight, 0.0, 1)).is_err());
        let bad = SimConfig::new(k3(), PolicyKind::MaxWeight, 1.0, 1)
            .with_initial_state(QueueState::from_counts(vec![1, 1, 0]));
        assert!(run(&bad).is_err());
    }

    #[test]
    fn path_queries() {
        let cfg = SimConfig::new(k3(), PolicyKind::MatchTheLongest, 50.0, 5);
        let r = run(&cfg).unwrap();
        // Grid output evaluates the right-continuous path.
        let csv = r.to_csv(Some(10.0));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 7);
        for (k, line) in lines[1..].iter().enumerate() {
            let t = 10.0 * k as f64;
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[1].parse::<f64>().unwrap(), r.value_at(Observable::MaxQueue, t));
        }
        let whole = r.time_average(Observable::TotalItems, 0.0, 50.0);
        let halves = 0.5 * (r.time_average(Observable::TotalItems, 0.0, 25.0)
            + r.time_average(Observable::TotalItems, 25.0, 50.0));
        assert!((whole - halves).abs() < 1e-9);
        // K3 states have a single nonempty class.
        assert_eq!(r.max_queue_path, r.total_items_path);
    }

    #[test]
    fn ensemble_is_schedule_independent() {
        let cfg = SimConfig::new(k3(), PolicyKind::MatchTheLongest, 20.0, 99);
        let one = run_ensemble(&cfg, 16, 1).unwrap();
        let many = run_ensemble(&cfg, 16, 8).unwrap();
        assert_eq!(one.summary, many.summary);
        assert_eq!(one.records, many.records);

        let single = run_ensemble(&cfg, 1, 1).unwrap();
        let r = &single.records[0];
        assert_eq!(single.summary.terminal_max_queue, vec![r.terminal(Observable::MaxQueue) as u64]);
        let q = single.summary.max_queue_quantiles;
        assert!(q.min == q.max && q.median == r.terminal(Observable::MaxQueue));
        assert!(run_ensemble(&cfg, 0, 1).is_err());
    }
}

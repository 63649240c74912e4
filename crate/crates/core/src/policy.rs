//! Matching rules: generalized Max-Weight with noisy readings,
//! Match-the-Longest, and reward priority.
//!
//! Every rule scores the nonempty compatible classes of the arriving item
//! and picks uniformly among the exact maximizers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, QueueState};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// `argmax [x(i) + U]^+ + w_{(j,i)}` with one fresh error per candidate.
    #[default]
    MaxWeight,
    /// `argmax x(i)`; rewards and noise do not enter.
    #[serde(rename = "match_longest")]
    MatchTheLongest,
    /// `argmax w_{(j,i)}`, blind to queue lengths.
    Priority,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::MaxWeight => "max_weight",
            PolicyKind::MatchTheLongest => "match_longest",
            PolicyKind::Priority => "priority",
        }
    }

    /// Max-Weight family: the drift bounds apply.
    pub fn is_max_weight_family(&self) -> bool {
        !matches!(self, PolicyKind::Priority)
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_weight" | "mw" => Ok(PolicyKind::MaxWeight),
            "match_longest" | "ml" => Ok(PolicyKind::MatchTheLongest),
            "priority" => Ok(PolicyKind::Priority),
            _ => Err(Error::Input(format!("unknown policy {s:?}"))),
        }
    }
}

/// `[x(i) + u]^+ + w`.
pub fn mw_score(x_i: u64, u: f64, w: f64) -> f64 {
    (x_i as f64 + u).max(0.0) + w
}

/// Scores of the nonempty compatible classes, in neighbor order. `noise`
/// supplies the reading error for a pair `(j, i)`.
fn candidate_scores(
    kind: PolicyKind,
    spec: &ModelSpec,
    x: &QueueState,
    j: usize,
    mut noise: impl FnMut(usize, usize) -> f64,
    out: &mut Vec<(usize, f64)>,
) {
    out.clear();
    for &i in spec.graph().neighbors(j) {
        let xi = x.get(i);
        if xi == 0 {
            continue;
        }
        let score = match kind {
            PolicyKind::MaxWeight => mw_score(xi, noise(j, i), spec.reward(j, i)),
            PolicyKind::MatchTheLongest => xi as f64,
            PolicyKind::Priority => spec.reward(j, i),
        };
        out.push((i, score));
    }
}

/// Retains only the maximizers.
fn keep_argmax(scores: &mut Vec<(usize, f64)>) {
    let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    scores.retain(|s| s.1 == best);
}

/// Reusable decision routine without the admissibility check; the engine
/// keeps the state admissible by construction.
pub(crate) struct Chooser {
    buf: Vec<(usize, f64)>,
}

impl Chooser {
    pub(crate) fn new() -> Self {
        Self { buf: Vec::new() }
    }

    pub(crate) fn choose<R: Rng + ?Sized>(
        &mut self,
        kind: PolicyKind,
        spec: &ModelSpec,
        x: &QueueState,
        j: usize,
        rng: &mut R,
    ) -> Option<usize> {
        candidate_scores(kind, spec, x, j, |a, b| spec.noise_for(a, b).sample(rng), &mut self.buf);
        keep_argmax(&mut self.buf);
        match self.buf.len() {
            0 => None,
            1 => Some(self.buf[0].0),
            k => Some(self.buf[rng.random_range(0..k)].0),
        }
    }
}

/// Class matched with an arriving `j`-item in state `x`, or `None` when no
/// compatible item is stored.
pub fn choose_match<R: Rng + ?Sized>(
    kind: PolicyKind,
    spec: &ModelSpec,
    x: &QueueState,
    j: usize,
    rng: &mut R,
) -> Result<Option<usize>> {
    check_state(spec, x, j)?;
    Ok(Chooser::new().choose(kind, spec, x, j, rng))
}

fn check_state(spec: &ModelSpec, x: &QueueState, j: usize) -> Result<()> {
    if j >= spec.n_vertices() {
        return Err(Error::Input(format!("class {j} out of range")));
    }
    if !spec.is_admissible(x)? {
        return Err(Error::Inadmissible(format!("{x} has adjacent nonempty classes")));
    }
    Ok(())
}

/// How `ν_{x,j}` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NuMode {
    /// Exact; the scores must be deterministic.
    Exact,
    /// Average of `samples` independent noise draws from a stream seeded
    /// with `seed`.
    MonteCarlo { samples: usize, seed: u64 },
}

/// `ν_{x,j}` as a dense vector over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchDistribution {
    pub probs: Vec<f64>,
    /// Standard errors of the Monte Carlo estimate; `None` when exact.
    pub std_err: Option<Vec<f64>>,
}

impl MatchDistribution {
    pub fn has_candidates(&self) -> bool {
        self.probs.iter().any(|&p| p > 0.0)
    }
}

pub fn match_distribution(
    kind: PolicyKind,
    spec: &ModelSpec,
    x: &QueueState,
    j: usize,
    mode: NuMode,
) -> Result<MatchDistribution> {
    check_state(spec, x, j)?;
    let n = spec.n_vertices();
    let mut buf = Vec::new();
    match mode {
        NuMode::Exact => {
            if kind == PolicyKind::MaxWeight && !spec.all_noise_dirac() {
                return Err(Error::Unsupported(
                    "exact match distribution needs point-mass noise".into(),
                ));
            }
            let mut probs = vec![0.0; n];
            candidate_scores(
                kind,
                spec,
                x,
                j,
                |a, b| spec.noise_for(a, b).atom().unwrap_or(0.0),
                &mut buf,
            );
            keep_argmax(&mut buf);
            let share = 1.0 / buf.len() as f64;
            for &(i, _) in &buf {
                probs[i] = share;
            }
            Ok(MatchDistribution { probs, std_err: None })
        }
        NuMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::Input("Monte Carlo needs at least one sample".into()));
            }
            let mut rng = rng_from_seed(seed);
            let mut sum = vec![0.0; n];
            let mut sum_sq = vec![0.0; n];
            for _ in 0..samples {
                candidate_scores(kind, spec, x, j, |a, b| spec.noise_for(a, b).sample(&mut rng), &mut buf);
                keep_argmax(&mut buf);
                // Ties are split evenly instead of sampled.
                let share = 1.0 / buf.len() as f64;
                for &(i, _) in &buf {
                    sum[i] += share;
                    sum_sq[i] += share * share;
                }
            }
            let m = samples as f64;
            let probs: Vec<f64> = sum.iter().map(|s| s / m).collect();
            let std_err = probs
                .iter()
                .zip(&sum_sq)
                .map(|(p, s2)| ((s2 / m - p * p).max(0.0) / m).sqrt())
                .collect();
            Ok(MatchDistribution {
                probs,
                std_err: Some(std_err),
            })
        }
    }
}

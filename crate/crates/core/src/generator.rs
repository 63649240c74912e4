//! Jump rates of the queue-length chain and the action of its generator on
//! test functions.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, QueueState};
use crate::policy::{match_distribution, NuMode, PolicyKind};

/// Outgoing transitions of `x` as `(target, rate)`, merged by target and
/// sorted by target. Self-loops never occur.
pub fn jumps(
    spec: &ModelSpec,
    policy: PolicyKind,
    x: &QueueState,
    mode: NuMode,
) -> Result<Vec<(QueueState, f64)>> {
    if !spec.is_admissible(x)? {
        return Err(Error::Inadmissible(format!("{x}")));
    }
    let mut out: BTreeMap<QueueState, f64> = BTreeMap::new();
    let mut add = |y: QueueState, r: f64| {
        if r > 0.0 {
            *out.entry(y).or_insert(0.0) += r;
        }
    };
    for j in 0..spec.n_vertices() {
        let lam = spec.lambda()[j];
        let nu = match_distribution(policy, spec, x, j, mode)?;
        if nu.has_candidates() {
            for (i, &p) in nu.probs.iter().enumerate() {
                if p > 0.0 {
                    let mut y = x.clone();
                    y.decrement(i);
                    add(y, lam * p);
                }
            }
        } else {
            let mut y = x.clone();
            y.increment(j);
            add(y, lam);
        }
    }
    for i in spec.reneging() {
        if x.get(i) > 0 {
            let mut y = x.clone();
            y.decrement(i);
            add(y, spec.gamma()[i] * x.get(i) as f64);
        }
    }
    Ok(out.into_iter().collect())
}

/// `ℒf(x) = Σ_y q(x, y) (f(y) − f(x))`.
pub fn generator_apply(
    spec: &ModelSpec,
    policy: PolicyKind,
    f: impl Fn(&QueueState) -> f64,
    x: &QueueState,
    mode: NuMode,
) -> Result<f64> {
    let fx = f(x);
    Ok(jumps(spec, policy, x, mode)?
        .iter()
        .map(|(y, r)| r * (f(y) - fx))
        .sum())
}

/// `Σ_i x(i)²`.
pub fn f2(x: &QueueState) -> f64 {
    x.counts().iter().map(|&v| (v as f64).powi(2)).sum()
}

/// `Σ_i x(i)³`.
pub fn f3(x: &QueueState) -> f64 {
    x.counts().iter().map(|&v| (v as f64).powi(3)).sum()
}

/// `x ↦ exp(α ‖x‖)` with the Euclidean norm.
pub fn exp_norm(alpha: f64) -> impl Fn(&QueueState) -> f64 {
    move |x| (alpha * x.euclidean_norm()).exp()
}

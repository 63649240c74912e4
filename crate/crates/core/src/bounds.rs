//! Closed-form moment bounds for the stationary law and the right-hand
//! sides of the Lyapunov drift inequalities.
//!
//! Notation: `η` is the NCOND slack, `w̌` the largest reward, `B` the noise
//! bound, `ρ̃_i = λ(i) / λ(E(i))`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{check_ncond, ModelSpec, QueueState};
use crate::noise::u_kappa;
use crate::policy::PolicyKind;

pub use crate::generator::{exp_norm, f2, f3, generator_apply, jumps};

/// Relative weight below which the birth–death series is cut.
const SERIES_TOL: f64 = 1e-12;

/// `ρ̃_i` for every class.
pub fn rho_tilde(spec: &ModelSpec) -> Vec<f64> {
    let g = spec.graph();
    (0..spec.n_vertices())
        .map(|i| {
            let out: f64 = g.neighbors(i).iter().map(|&j| spec.lambda()[j]).sum();
            spec.lambda()[i] / out
        })
        .collect()
}

/// Stationary mean of the birth–death chain on `ℕ` with birth rate `birth`
/// and death rate `base + gamma·z` in state `z`. `None` if it has no
/// stationary law.
pub fn birth_death_mean(birth: f64, base: f64, gamma: f64) -> Option<f64> {
    if gamma == 0.0 {
        let rho = birth / base;
        return (rho < 1.0).then(|| rho / (1.0 - rho));
    }
    let (mut w, mut mass, mut first) = (1.0f64, 1.0f64, 0.0f64);
    let mut z = 0u64;
    loop {
        z += 1;
        let ratio = birth / (base + gamma * z as f64);
        w *= ratio;
        mass += w;
        first += z as f64 * w;
        if ratio < 1.0 && w < SERIES_TOL * mass {
            break;
        }
    }
    Some(first / mass)
}

/// Per-class means of the dominated birth–death chains.
fn class_means(spec: &ModelSpec) -> Vec<Option<f64>> {
    let g = spec.graph();
    (0..spec.n_vertices())
        .map(|i| {
            let out: f64 = g.neighbors(i).iter().map(|&j| spec.lambda()[j]).sum();
            birth_death_mean(spec.lambda()[i], out, spec.gamma()[i])
        })
        .collect()
}

fn require_ncond(spec: &ModelSpec) -> Result<f64> {
    let nc = check_ncond(spec)?;
    if !nc.holds {
        return Err(Error::Inapplicable("requires NCOND".into()));
    }
    Ok(nc.eta)
}

/// `max_i ρ̃_i/(1−ρ̃_i)`, the class-by-class comparison value for the
/// stationary mean of `‖x‖_∞`.
///
/// Only a true lower bound when arrivals of the maximizing class are rarely
/// absorbed by its neighbours; see `class_lower_bound_is_not_universal` in
/// the integration tests for an instance where it overshoots.
pub fn lower_bound_mean(spec: &ModelSpec) -> Result<f64> {
    require_ncond(spec)?;
    class_means(spec)
        .into_iter()
        .map(|m| m.ok_or_else(|| Error::Numerical("class chain has no stationary law".into())))
        .try_fold(0.0f64, |acc, m| Ok(acc.max(m?)))
}

/// Effective `(w̌, B)` of a max-weight-family policy. Match the Longest is
/// max-weight with null rewards and exact readings.
fn reward_noise_constants(spec: &ModelSpec, policy: PolicyKind) -> Result<(f64, f64)> {
    match policy {
        PolicyKind::MaxWeight => Ok((spec.max_reward(), spec.noise_bound())),
        PolicyKind::MatchTheLongest => Ok((0.0, 0.0)),
        PolicyKind::Priority => Err(Error::Inapplicable("requires a max-weight policy".into())),
    }
}

/// Checks the hypotheses of the upper bounds and returns `(η, w̌ + 2B)`.
fn upper_hypotheses(spec: &ModelSpec, policy: PolicyKind) -> Result<(f64, f64)> {
    spec.ensure_valid()?;
    if !spec.reneging().is_empty() {
        return Err(Error::Inapplicable("requires R=∅".into()));
    }
    let (w, b) = reward_noise_constants(spec, policy)?;
    let eta = require_ncond(spec)?;
    Ok((eta, w + 2.0 * b))
}

/// `(λ(V)/η) (1/2 + (w̌ + 2B)|V|)`.
pub fn upper_bound_mean(spec: &ModelSpec, policy: PolicyKind) -> Result<f64> {
    let (eta, c) = upper_hypotheses(spec, policy)?;
    let lv = spec.lambda_total();
    let n = spec.n_vertices() as f64;
    Ok(lv / eta * (0.5 + c * n))
}

/// `(λ(V)/η)(1/3 + (1/η)[1 + 2(w̌+2B)|V|][λ(V) + (w̌+2B)|V|]) − (max ρ̃/(1−ρ̃))²`.
pub fn upper_bound_variance(spec: &ModelSpec, policy: PolicyKind) -> Result<f64> {
    let (eta, c) = upper_hypotheses(spec, policy)?;
    let lv = spec.lambda_total();
    let cn = c * spec.n_vertices() as f64;
    let lower = lower_bound_mean(spec)?;
    Ok(lv / eta * (1.0 / 3.0 + (1.0 + 2.0 * cn) * (lv + cn) / eta) - lower * lower)
}

/// Right-hand side of the quadratic drift inequality
/// `ℒf₂(x) ≤ λ(V) + 2Σ_{i∈R}[−γ(i)x(i)² + (γ(i)/2 + λ(i))x(i)]
///          + 2[λ(V)(2u_κ + w̌)|V| + (κ − η)‖x‖_∞]·1{R^c ≠ ∅}`.
pub fn drift_f2_rhs(spec: &ModelSpec, x: &QueueState, kappa: f64) -> Result<f64> {
    let lv = spec.lambda_total();
    let u = u_kappa(spec, kappa)?;
    if x.len() != spec.n_vertices() {
        return Err(Error::Input("state dimension mismatch".into()));
    }
    let mut rhs = lv;
    for i in spec.reneging() {
        let (g, xi) = (spec.gamma()[i], x.get(i) as f64);
        rhs += 2.0 * (-g * xi * xi + (0.5 * g + spec.lambda()[i]) * xi);
    }
    if !spec.patient().is_empty() {
        let eta = check_ncond(spec)?.eta;
        let n = spec.n_vertices() as f64;
        rhs += 2.0 * (lv * (2.0 * u + spec.max_reward()) * n + (kappa - eta) * x.max_norm() as f64);
    }
    Ok(rhs)
}

/// Right-hand side of the cubic drift inequality
/// `ℒf₃(x) ≤ λ(V) + 6‖x‖_∞[(w̌+2B)|V| + λ(V)] − 3η‖x‖²_∞`.
pub fn drift_f3_rhs(spec: &ModelSpec, policy: PolicyKind, x: &QueueState) -> Result<f64> {
    let (eta, c) = upper_hypotheses(spec, policy)?;
    let lv = spec.lambda_total();
    let m = x.max_norm() as f64;
    Ok(lv + 6.0 * m * (c * spec.n_vertices() as f64 + lv) - 3.0 * eta * m * m)
}

/// Parameters under which `ℒe^{α‖x‖} < 0` for `‖x‖ > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricDrift {
    pub kappa: f64,
    pub alpha: f64,
    /// Bound on `ℒe^{α‖x‖} / (α e^{α‖x‖})` far from the origin.
    pub asymptotic_rate: f64,
    pub threshold: f64,
}

/// Exponential Lyapunov parameters for a patient, NCOND-stable model.
///
/// On the far field the drift factor is at most
/// `(λ(V)(2u_κ+w̌)|V| + λ(V)/2)/‖x‖ − (η−κ)/√|V| + αλ(V)`, using
/// `‖x‖_∞ ≥ ‖x‖/√|V|`. Taking `α = (η−κ)/(2√|V| λ(V))` leaves slack
/// `(η−κ)/(2√|V|)`, and the threshold is where the `1/‖x‖` term uses it up.
pub fn geometric_drift(spec: &ModelSpec, policy: PolicyKind, kappa: f64) -> Result<GeometricDrift> {
    let (eta, _) = upper_hypotheses(spec, policy)?;
    let (w, _) = reward_noise_constants(spec, policy)?;
    if !(kappa > 0.0 && kappa < eta) {
        return Err(Error::Input(format!("kappa={kappa} must lie in (0, eta={eta})")));
    }
    let u = match policy {
        PolicyKind::MatchTheLongest => 0.0,
        _ => u_kappa(spec, kappa)?,
    };
    let lv = spec.lambda_total();
    let n = spec.n_vertices() as f64;
    let alpha = (eta - kappa) / (2.0 * n.sqrt() * lv);
    let slack = (eta - kappa) / n.sqrt() - alpha * lv;
    Ok(GeometricDrift {
        kappa,
        alpha,
        asymptotic_rate: -slack,
        threshold: lv * ((2.0 * u + w) * n + 0.5) / slack,
    })
}

/// A bound value, or the reason it does not apply.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Bound {
    Value(f64),
    NotApplicable(String),
}

impl Bound {
    fn from_result(r: Result<f64>) -> Result<Self> {
        match r {
            Ok(v) => Ok(Bound::Value(v)),
            Err(Error::Inapplicable(why)) => Ok(Bound::NotApplicable(format!("n/a ({why})"))),
            Err(e) => Err(e),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Bound::Value(v) => Some(*v),
            Bound::NotApplicable(_) => None,
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::Value(v) => write!(f, "{v}"),
            Bound::NotApplicable(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Applicability {
    pub ncond: bool,
    pub no_reneging: bool,
    /// Always true for the supported noise families.
    pub bounded_noise: bool,
    pub max_weight_policy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub policy: PolicyKind,
    pub eta: f64,
    pub kappa: f64,
    pub u_kappa: f64,
    pub w_check: f64,
    #[serde(rename = "B")]
    pub noise_bound: f64,
    pub rho_tilde: Vec<f64>,
    pub lower_mean: Bound,
    pub upper_mean: Bound,
    pub upper_variance: Bound,
    pub applicability: Applicability,
}

/// Default `κ`: `η/2` when NCOND has positive slack, else `λ(V)/2`.
pub fn default_kappa(spec: &ModelSpec) -> Result<f64> {
    let nc = check_ncond(spec)?;
    Ok(if nc.holds && nc.eta > 0.0 {
        nc.eta / 2.0
    } else {
        spec.lambda_total() / 2.0
    })
}

pub fn bounds_report(spec: &ModelSpec, policy: PolicyKind, kappa: Option<f64>) -> Result<BoundsReport> {
    let nc = check_ncond(spec)?;
    let kappa = match kappa {
        Some(k) => k,
        None => default_kappa(spec)?,
    };
    Ok(BoundsReport {
        policy,
        eta: nc.eta,
        kappa,
        u_kappa: u_kappa(spec, kappa)?,
        w_check: spec.max_reward(),
        noise_bound: spec.noise_bound(),
        rho_tilde: rho_tilde(spec),
        lower_mean: Bound::from_result(lower_bound_mean(spec))?,
        upper_mean: Bound::from_result(upper_bound_mean(spec, policy))?,
        upper_variance: Bound::from_result(upper_bound_variance(spec, policy))?,
        applicability: Applicability {
            ncond: nc.holds,
            no_reneging: spec.reneging().is_empty(),
            bounded_noise: true,
            max_weight_policy: policy.is_max_weight_family(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::noise::NoiseSpec;
    use crate::policy::NuMode;

    fn k3() -> ModelSpec {
        ModelSpec::new(Graph::complete(3), vec![1.0; 3], vec![0.0; 3]).unwrap()
    }

    fn paw() -> ModelSpec {
        ModelSpec::new(Graph::paw(), vec![2.0, 1.0, 1.0, 1.0], vec![0.0; 4]).unwrap()
    }

    const MW: PolicyKind = PolicyKind::MaxWeight;
    const ML: PolicyKind = PolicyKind::MatchTheLongest;

    #[test]
    fn lower_bounds() {
        assert!((lower_bound_mean(&k3()).unwrap() - 1.0).abs() < 1e-12);
        let r = rho_tilde(&paw());
        for (a, b) in r.iter().zip([2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((lower_bound_mean(&paw()).unwrap() - 2.0).abs() < 1e-12);
        let p2 = ModelSpec::new(Graph::path(2), vec![2.0, 1.0], vec![0.0; 2]).unwrap();
        assert!(matches!(lower_bound_mean(&p2), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn reneging_lower_bound_matches_long_series() {
        let spec = ModelSpec::new(Graph::complete(3), vec![1.0; 3], vec![1.0; 3]).unwrap();
        // Independent evaluation: 10^4 terms of the product-form weights.
        let (mut w, mut mass, mut first) = (1.0f64, 1.0f64, 0.0f64);
        for z in 1..10_000 {
            w *= 1.0 / (2.0 + z as f64);
            mass += w;
            first += z as f64 * w;
        }
        let got = lower_bound_mean(&spec).unwrap();
        assert!((got - first / mass).abs() < 1e-9, "{got}");
        // Growing weights before the decay must not stop the series early.
        let m = birth_death_mean(50.0, 1.0, 1.0).unwrap();
        assert!(m > 40.0 && m < 60.0, "{m}");
    }

    #[test]
    fn upper_bounds() {
        assert!((upper_bound_mean(&k3(), ML).unwrap() - 1.5).abs() < 1e-12);
        assert!((upper_bound_mean(&k3(), MW).unwrap() - 1.5).abs() < 1e-12);
        assert!((upper_bound_mean(&paw(), MW).unwrap() - 2.5).abs() < 1e-12);
        let noisy = k3()
            .with_rewards_all(2.0)
            .with_noise_all(NoiseSpec::uniform(-1.0, 1.0));
        assert!((upper_bound_mean(&noisy, MW).unwrap() - 37.5).abs() < 1e-12);
        assert!((upper_bound_variance(&k3(), ML).unwrap() - 9.0).abs() < 1e-12);
        assert!((upper_bound_variance(&paw(), MW).unwrap() - 68.0 / 3.0).abs() < 1e-12);

        let reneging = ModelSpec::new(Graph::complete(3), vec![1.0; 3], vec![0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(upper_bound_mean(&reneging, MW), Err(Error::Inapplicable(_))));
        assert!(matches!(upper_bound_mean(&k3(), PolicyKind::Priority), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn variance_bound_dominates_minus_lower_squared() {
        for spec in [k3(), paw()] {
            let v = upper_bound_variance(&spec, MW).unwrap();
            let l = lower_bound_mean(&spec).unwrap();
            assert!(v >= -l * l);
        }
    }

    #[test]
    fn f2_rhs_examples() {
        let x5 = QueueState::unit(3, 0, 5);
        assert!((drift_f2_rhs(&k3(), &x5, 0.5).unwrap() + 2.0).abs() < 1e-12);
        let at0 = drift_f2_rhs(&k3(), &QueueState::zeros(3), 0.5).unwrap();
        assert!(at0 >= 3.0);
        let full = ModelSpec::new(Graph::complete(3), vec![1.0; 3], vec![1.0; 3]).unwrap();
        assert!((drift_f2_rhs(&full, &x5, 0.5).unwrap() + 32.0).abs() < 1e-12);
        assert!(drift_f2_rhs(&k3(), &x5, 3.0).is_err());
    }

    #[test]
    fn f3_rhs_examples() {
        assert!((drift_f3_rhs(&k3(), ML, &QueueState::unit(3, 0, 5)).unwrap() - 18.0).abs() < 1e-12);
        assert_eq!(drift_f3_rhs(&k3(), ML, &QueueState::zeros(3)).unwrap(), 3.0);
        assert!((drift_f3_rhs(&k3(), ML, &QueueState::unit(3, 0, 20)).unwrap() + 837.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_drift_is_negative_past_threshold() {
        let spec = k3();
        let gd = geometric_drift(&spec, ML, 0.5).unwrap();
        assert!(gd.alpha * (0.5 - 1.0) * 3f64.sqrt() + gd.alpha * gd.alpha * 3.0 < 0.0);
        let f = exp_norm(gd.alpha);
        let mut checked = 0;
        for n in 1..=200u64 {
            let x = QueueState::unit(3, 0, n);
            if x.euclidean_norm() > gd.threshold {
                let v = generator_apply(&spec, ML, &f, &x, NuMode::Exact).unwrap();
                assert!(v < 0.0, "n={n}: {v}");
                checked += 1;
            }
        }
        assert!(checked > 150);
    }

    #[test]
    fn report_flags() {
        let r = bounds_report(&k3(), ML, None).unwrap();
        assert_eq!(r.kappa, 0.5);
        assert_eq!(r.lower_mean, Bound::Value(1.0));
        assert_eq!(r.upper_mean, Bound::Value(1.5));
        let reneging = ModelSpec::new(Graph::complete(3), vec![1.0; 3], vec![0.0, 1.0, 0.0]).unwrap();
        let r = bounds_report(&reneging, MW, None).unwrap();
        assert_eq!(r.upper_mean, Bound::NotApplicable("n/a (requires R=∅)".into()));
        assert!(!r.applicability.no_reneging);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["upper_mean"], "n/a (requires R=∅)");
        assert!(json["lower_mean"].is_number());
    }
}

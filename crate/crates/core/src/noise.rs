//! Measurement-error laws for queue-length readings and the `u_κ` quantile.
//!
//! The quantile `u_{κ,(j,i)}` is the smallest level `u ≥ 0` with
//! `P(|U| > u) < τ`, where `τ = 1 − (1 − κ/λ(V))^{1/(2|E|)}`. With that
//! choice all `2|E|` independent errors are simultaneously within `u_κ`
//! with probability at least `1 − κ/λ(V)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseSpec {
    /// Point mass at `c`. `Dirac { c: 0.0 }` is the error-free reading.
    Dirac { c: f64 },
    /// Uniform on `[a, b]`.
    Uniform { a: f64, b: f64 },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::NONE
    }
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec::Dirac { c: 0.0 };

    pub fn uniform(a: f64, b: f64) -> Self {
        NoiseSpec::Uniform { a, b }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match *self {
            NoiseSpec::Dirac { c } if !c.is_finite() => Err(format!("dirac location {c} is not finite")),
            NoiseSpec::Uniform { a, b } if !(a.is_finite() && b.is_finite()) => {
                Err(format!("uniform bounds [{a}, {b}] are not finite"))
            }
            NoiseSpec::Uniform { a, b } if a > b => Err(format!("uniform requires a <= b, got [{a}, {b}]")),
            _ => Ok(()),
        }
    }

    pub fn is_dirac(&self) -> bool {
        match *self {
            NoiseSpec::Dirac { .. } => true,
            NoiseSpec::Uniform { a, b } => a == b,
        }
    }

    /// Value of a degenerate law, if it is one.
    pub fn atom(&self) -> Option<f64> {
        match *self {
            NoiseSpec::Dirac { c } => Some(c),
            NoiseSpec::Uniform { a, b } if a == b => Some(a),
            NoiseSpec::Uniform { .. } => None,
        }
    }

    /// Smallest `B` with `P(-B <= U <= B) = 1`.
    pub fn bound(&self) -> f64 {
        match *self {
            NoiseSpec::Dirac { c } => c.abs(),
            NoiseSpec::Uniform { a, b } => a.abs().max(b.abs()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::Dirac { c } => c,
            NoiseSpec::Uniform { a, b } if a == b => a,
            NoiseSpec::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
        }
    }

    /// `P(|U| > u)` for `u >= 0`.
    pub fn abs_tail(&self, u: f64) -> f64 {
        match *self {
            NoiseSpec::Dirac { c } => indicator_tail(c, u),
            NoiseSpec::Uniform { a, b } if a == b => indicator_tail(a, u),
            NoiseSpec::Uniform { a, b } => {
                let upper = (b - u.clamp(a, b)).max(0.0);
                let lower = ((-u).clamp(a, b) - a).max(0.0);
                ((upper + lower) / (b - a)).clamp(0.0, 1.0)
            }
        }
    }

    /// `inf { u >= 0 : P(|U| > u) < tau }`, `tau` in `(0, 1]`.
    pub fn tail_quantile(&self, tau: f64) -> f64 {
        match *self {
            NoiseSpec::Dirac { c } => c.abs(),
            NoiseSpec::Uniform { a, b } if a == b => a.abs(),
            NoiseSpec::Uniform { a, b } => {
                // The tail is continuous and piecewise linear with kinks at |a|, |b|.
                let mut knots = vec![0.0, a.abs(), b.abs()];
                knots.sort_by(f64::total_cmp);
                knots.dedup();
                if self.abs_tail(0.0) < tau {
                    return 0.0;
                }
                for w in knots.windows(2) {
                    let (u0, u1) = (w[0], w[1]);
                    let (f0, f1) = (self.abs_tail(u0), self.abs_tail(u1));
                    if f1 < tau {
                        return u0 + (f0 - tau) / (f0 - f1) * (u1 - u0);
                    }
                }
                self.bound()
            }
        }
    }
}

fn indicator_tail(c: f64, u: f64) -> f64 {
    if c.abs() > u {
        1.0
    } else {
        0.0
    }
}

/// `inf { u >= 0 : tail(u) < tau }` for a non-increasing right-continuous
/// tail, located by bisection to absolute tolerance `tol`. Returns the left
/// end of the bracket that still satisfies the strict inequality.
pub fn bisect_tail_quantile(tail: impl Fn(f64) -> f64, tau: f64, tol: f64) -> f64 {
    if tail(0.0) < tau {
        return 0.0;
    }
    let mut hi = 1.0;
    while tail(hi) >= tau {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if tail(mid) < tau {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Per-pair tail threshold `1 − (1 − κ/λ(V))^{1/(2|E|)}`.
pub fn tail_threshold(kappa: f64, lambda_v: f64, n_edges: usize) -> Result<f64> {
    if !(kappa > 0.0 && kappa < lambda_v) {
        return Err(Error::Input(format!(
            "kappa={kappa} must lie in (0, lambda(V)={lambda_v})"
        )));
    }
    if n_edges == 0 {
        return Err(Error::Input("u_kappa needs at least one edge".into()));
    }
    let exponent = 1.0 / (2.0 * n_edges as f64);
    // 1 - (1 - x)^e computed without cancellation.
    Ok(-f64::exp_m1(exponent * f64::ln_1p(-kappa / lambda_v)))
}

pub fn u_kappa_single(ns: &NoiseSpec, kappa: f64, lambda_v: f64, n_edges: usize) -> Result<f64> {
    let tau = tail_threshold(kappa, lambda_v, n_edges)?;
    Ok(ns.tail_quantile(tau))
}

/// `u_κ` for every ordered pair `(j, i)` of the model.
pub fn u_kappa_per_pair(spec: &ModelSpec, kappa: f64) -> Result<Vec<((usize, usize), f64)>> {
    let lambda_v = spec.lambda_total();
    let n_edges = spec.graph().n_edges();
    spec.noise()
        .iter()
        .map(|(&pair, ns)| Ok((pair, u_kappa_single(ns, kappa, lambda_v, n_edges)?)))
        .collect()
}

/// `u_κ = max` of the per-pair quantiles.
pub fn u_kappa(spec: &ModelSpec, kappa: f64) -> Result<f64> {
    if spec.graph().n_edges() == 0 {
        tail_threshold(kappa, spec.lambda_total(), 1)?;
        return Ok(0.0);
    }
    Ok(u_kappa_per_pair(spec, kappa)?
        .into_iter()
        .map(|(_, u)| u)
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::rng::rng_from_seed;

    #[test]
    fn sampling() {
        let mut rng = rng_from_seed(3);
        assert_eq!(NoiseSpec::NONE.sample(&mut rng), 0.0);
        assert_eq!(NoiseSpec::uniform(2.0, 2.0).sample(&mut rng), 2.0);
        let u = NoiseSpec::uniform(-1.0, 1.0);
        let mut sum = 0.0;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..1_000_000 {
            let v = u.sample(&mut rng);
            sum += v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        assert!((sum / 1e6).abs() < 0.005);
        assert!(lo >= -1.0 && hi <= 1.0);
    }

    #[test]
    fn tails() {
        assert_eq!(NoiseSpec::NONE.abs_tail(0.0), 0.0);
        let u = NoiseSpec::uniform(-1.0, 1.0);
        assert!((u.abs_tail(0.25) - 0.75).abs() < 1e-15);
        assert_eq!(u.abs_tail(2.0), 0.0);
        assert_eq!(NoiseSpec::Dirac { c: -2.0 }.abs_tail(1.5), 1.0);
        assert_eq!(NoiseSpec::Dirac { c: -2.0 }.abs_tail(2.0), 0.0);
        // Asymmetric: U ~ Unif[-1, 3], P(|U| > 0.5) = (2.5 + 0.5) / 4.
        assert!((NoiseSpec::uniform(-1.0, 3.0).abs_tail(0.5) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn tail_is_monotone_and_right_continuous() {
        for ns in [
            NoiseSpec::uniform(-1.0, 1.0),
            NoiseSpec::uniform(-0.5, 2.0),
            NoiseSpec::uniform(1.0, 3.0),
            NoiseSpec::Dirac { c: 1.5 },
        ] {
            let grid: Vec<f64> = (0..=400).map(|k| k as f64 * 0.01).collect();
            for w in grid.windows(2) {
                assert!(ns.abs_tail(w[1]) <= ns.abs_tail(w[0]));
            }
            for &u in &grid {
                assert!((ns.abs_tail(u + 1e-12) - ns.abs_tail(u)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn u_kappa_single_examples() {
        assert_eq!(u_kappa_single(&NoiseSpec::NONE, 0.5, 3.0, 3).unwrap(), 0.0);
        let tau: f64 = 1.0 - (5.0f64 / 6.0).powf(1.0 / 6.0);
        assert!((tau - 0.029930).abs() < 1e-6);
        let got = u_kappa_single(&NoiseSpec::uniform(-1.0, 1.0), 0.5, 3.0, 3).unwrap();
        assert!((got - (1.0 - tau)).abs() < 1e-12);
        assert!((got - 0.970070).abs() < 1e-6);
        assert_eq!(u_kappa_single(&NoiseSpec::Dirac { c: 2.0 }, 1.0, 3.0, 3).unwrap(), 2.0);
        assert!(u_kappa_single(&NoiseSpec::NONE, 3.0, 3.0, 3).is_err());
        assert!(u_kappa_single(&NoiseSpec::NONE, 0.0, 3.0, 3).is_err());
    }

    #[test]
    fn closed_form_agrees_with_bisection() {
        for ns in [
            NoiseSpec::uniform(-1.0, 1.0),
            NoiseSpec::uniform(-0.3, 2.0),
            NoiseSpec::uniform(-4.0, 1.0),
            NoiseSpec::uniform(0.5, 1.5),
            NoiseSpec::Dirac { c: 2.0 },
        ] {
            for &tau in &[0.001, 0.03, 0.2, 0.5, 0.9] {
                let closed = ns.tail_quantile(tau);
                let bis = bisect_tail_quantile(|u| ns.abs_tail(u), tau, 1e-12);
                assert!((closed - bis).abs() < 1e-9, "{ns:?} tau={tau}: {closed} vs {bis}");
            }
        }
    }

    #[test]
    fn u_kappa_single_is_non_increasing_in_kappa() {
        let ns = NoiseSpec::uniform(-1.0, 2.0);
        let mut prev = f64::INFINITY;
        for k in 1..300 {
            let v = u_kappa_single(&ns, k as f64 * 0.01, 3.0, 4).unwrap();
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn u_kappa_over_model() {
        let g = Graph::complete(3);
        let spec = ModelSpec::new(g.clone(), vec![1.0; 3], vec![0.0; 3]).unwrap();
        assert_eq!(u_kappa(&spec, 0.5).unwrap(), 0.0);
        let noisy = spec.clone().with_noise_all(NoiseSpec::uniform(-1.0, 1.0));
        assert!((u_kappa(&noisy, 0.5).unwrap() - 0.970070).abs() < 1e-6);
        let mixed = spec.with_noise((0, 1), NoiseSpec::uniform(-1.0, 1.0));
        assert!((u_kappa(&mixed, 0.5).unwrap() - 0.970070).abs() < 1e-6);
    }

    #[test]
    fn json_forms() {
        let d: NoiseSpec = serde_json::from_str(r#"{"kind":"dirac","c":0.0}"#).unwrap();
        assert_eq!(d, NoiseSpec::NONE);
        let u: NoiseSpec = serde_json::from_str(r#"{"kind":"uniform","a":-1.0,"b":1.0}"#).unwrap();
        assert_eq!(u, NoiseSpec::uniform(-1.0, 1.0));
        assert!(NoiseSpec::uniform(1.0, -1.0).validate().is_err());
    }
}

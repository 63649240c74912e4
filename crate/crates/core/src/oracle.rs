//! Exact stationary and transient laws of the chain restricted to
//! `‖x‖_∞ ≤ N`. Arrivals that would leave the box are suppressed, which
//! keeps the restricted chain irreducible.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::jumps;
use crate::graph::Graph;
use crate::model::{ModelSpec, QueueState};
use crate::policy::{NuMode, PolicyKind};

pub const DEFAULT_STATE_LIMIT: usize = 2_000_000;
/// Chains up to this size are solved by dense LU.
pub const DENSE_LIMIT: usize = 1500;
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TruncatedChain {
    pub level: u64,
    pub states: Vec<QueueState>,
    pub index: HashMap<QueueState, usize>,
    /// Off-diagonal rates `q(x, y)` per source state.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// `−q(x, x)`.
    pub exit_rates: Vec<f64>,
}

/// All independent vertex sets, the empty set included.
pub fn independent_sets(g: &Graph) -> Vec<Vec<usize>> {
    fn grow(g: &Graph, v: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if v == g.n_vertices() {
            out.push(cur.clone());
            return;
        }
        grow(g, v + 1, cur, out);
        if cur.iter().all(|&u| !g.has_edge(u, v)) {
            cur.push(v);
            grow(g, v + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    grow(g, 0, &mut Vec::new(), &mut out);
    out
}

/// Number of admissible states with `‖x‖_∞ ≤ level`, saturating.
pub fn count_states(g: &Graph, level: u64) -> u64 {
    independent_sets(g)
        .iter()
        .map(|s| level.saturating_pow(s.len() as u32))
        .fold(0u64, u64::saturating_add)
}

/// All admissible states with `‖x‖_∞ ≤ level`, sorted.
pub fn admissible_states(g: &Graph, level: u64) -> Vec<QueueState> {
    let n = g.n_vertices();
    let mut states = Vec::new();
    for support in independent_sets(g) {
        let mut digits = vec![1u64; support.len()];
        loop {
            let mut x = vec![0u64; n];
            for (&v, &d) in support.iter().zip(&digits) {
                x[v] = d;
            }
            states.push(QueueState::from_counts(x));
            // Odometer over {1..level}^support.
            let mut k = 0;
            while k < digits.len() && digits[k] == level {
                digits[k] = 1;
                k += 1;
            }
            if k == digits.len() {
                break;
            }
            digits[k] += 1;
        }
    }
    states.sort();
    states
}

impl TruncatedChain {
    pub fn build(spec: &ModelSpec, policy: PolicyKind, level: u64) -> Result<Self> {
        Self::build_with_limit(spec, policy, level, DEFAULT_STATE_LIMIT)
    }

    pub fn build_with_limit(
        spec: &ModelSpec,
        policy: PolicyKind,
        level: u64,
        limit: usize,
    ) -> Result<Self> {
        spec.ensure_valid()?;
        if level == 0 {
            return Err(Error::Input("truncation level must be at least 1".into()));
        }
        if policy == PolicyKind::MaxWeight && !spec.all_noise_dirac() {
            return Err(Error::Unsupported("oracle needs point-mass noise".into()));
        }
        let count = count_states(spec.graph(), level);
        if count > limit as u64 {
            return Err(Error::TooLarge { states: count, limit });
        }
        let states = admissible_states(spec.graph(), level);
        let index: HashMap<QueueState, usize> =
            states.iter().cloned().enumerate().map(|(k, x)| (x, k)).collect();
        let mut rows = Vec::with_capacity(states.len());
        let mut exit_rates = Vec::with_capacity(states.len());
        for x in &states {
            let mut row = Vec::new();
            let mut exit = 0.0;
            for (y, r) in jumps(spec, policy, x, NuMode::Exact)? {
                if y.max_norm() > level {
                    continue;
                }
                row.push((index[&y], r));
                exit += r;
            }
            rows.push(row);
            exit_rates.push(exit);
        }
        let chain = Self {
            level,
            states,
            index,
            rows,
            exit_rates,
        };
        if !chain.is_irreducible() {
            return Err(Error::Numerical("truncated chain is not irreducible".into()));
        }
        Ok(chain)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Index of the empty buffer.
    pub fn origin(&self) -> usize {
        self.index[&QueueState::zeros(self.states[0].len())]
    }

    fn reachable(&self, adj: &[Vec<usize>]) -> usize {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([self.origin()]);
        seen[self.origin()] = true;
        let mut count = 1;
        while let Some(a) = queue.pop_front() {
            for &b in &adj[a] {
                if !seen[b] {
                    seen[b] = true;
                    count += 1;
                    queue.push_back(b);
                }
            }
        }
        count
    }

    /// Every state reaches and is reached from the origin.
    pub fn is_irreducible(&self) -> bool {
        let fwd: Vec<Vec<usize>> = self.rows.iter().map(|r| r.iter().map(|e| e.0).collect()).collect();
        let mut bwd = vec![Vec::new(); self.len()];
        for (a, r) in self.rows.iter().enumerate() {
            for &(b, _) in r {
                bwd[b].push(a);
            }
        }
        self.reachable(&fwd) == self.len() && self.reachable(&bwd) == self.len()
    }

    /// `‖πQ‖_∞`.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        let mut flow: Vec<f64> = pi.iter().zip(&self.exit_rates).map(|(p, q)| -p * q).collect();
        for (a, r) in self.rows.iter().enumerate() {
            for &(b, rate) in r {
                flow[b] += pi[a] * rate;
            }
        }
        flow.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn stationary_dense(&self) -> Result<Vec<f64>> {
        let m = self.len();
        // Rows of Qᵀ, the last replaced by the normalization.
        let mut a = DMatrix::<f64>::zeros(m, m);
        for (i, r) in self.rows.iter().enumerate() {
            a[(i, i)] -= self.exit_rates[i];
            for &(j, rate) in r {
                a[(j, i)] += rate;
            }
        }
        let mut b = DVector::<f64>::zeros(m);
        for j in 0..m {
            a[(m - 1, j)] = 1.0;
        }
        b[m - 1] = 1.0;
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numerical("singular generator".into()))?;
        Ok(x.iter().copied().collect())
    }

    fn stationary_gauss_seidel(&self, max_sweeps: usize) -> Result<Vec<f64>> {
        let m = self.len();
        let mut incoming = vec![Vec::new(); m];
        for (a, r) in self.rows.iter().enumerate() {
            for &(b, rate) in r {
                incoming[b].push((a, rate));
            }
        }
        let mut pi = vec![1.0 / m as f64; m];
        for sweep in 0..max_sweeps {
            for j in 0..m {
                let inflow: f64 = incoming[j].iter().map(|&(a, r)| pi[a] * r).sum();
                pi[j] = inflow / self.exit_rates[j];
            }
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= total);
            if sweep % 16 == 15 && self.residual(&pi) <= RESIDUAL_TOL * 1e-2 {
                return Ok(pi);
            }
        }
        Ok(pi)
    }

    /// Stationary law `π_N`, normalized to sum to one.
    pub fn stationary(&self) -> Result<Stationary> {
        let mut pi = if self.len() <= DENSE_LIMIT {
            self.stationary_dense()?
        } else {
            self.stationary_gauss_seidel(200_000)?
        };
        for p in pi.iter_mut() {
            *p = p.max(0.0);
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        let residual = self.residual(&pi);
        if !(residual <= RESIDUAL_TOL) {
            return Err(Error::Numerical(format!("stationary residual {residual:e}")));
        }
        Ok(Stationary { pi, residual })
    }

    /// Law at time `t` from `start`, by uniformization.
    pub fn transient(&self, start: &QueueState, t: f64) -> Result<Vec<f64>> {
        let s = *self
            .index
            .get(start)
            .ok_or_else(|| Error::Input(format!("{start} is not in the truncated space")))?;
        let q = self.exit_rates.iter().fold(0.0f64, |m, &v| m.max(v));
        let qt = q * t;
        let mut p = vec![0.0; self.len()];
        p[s] = 1.0;
        let mut out = vec![0.0; self.len()];
        let mut next = vec![0.0; self.len()];
        // Poisson(qt) weights in log space. Past the mode the tail after
        // term k is at most w_k r/(1−r) with r = qt/(k+1).
        let mut k = 0u64;
        let mut log_w = -qt;
        loop {
            let w = log_w.exp();
            for (o, v) in out.iter_mut().zip(&p) {
                *o += w * v;
            }
            let r = qt / (k + 1) as f64;
            if r < 1.0 && w * r / (1.0 - r) < 1e-15 {
                break;
            }
            if k > 100_000 + (10.0 * qt) as u64 {
                return Err(Error::Numerical("uniformization did not converge".into()));
            }
            // p ← p (I + Q/q)
            for (j, n) in next.iter_mut().enumerate() {
                *n = p[j] * (1.0 - self.exit_rates[j] / q);
            }
            for (a, r) in self.rows.iter().enumerate() {
                for &(b, rate) in r {
                    next[b] += p[a] * rate / q;
                }
            }
            std::mem::swap(&mut p, &mut next);
            k += 1;
            log_w += qt.ln() - (k as f64).ln();
        }
        Ok(out)
    }

    pub fn moments(&self, pi: &[f64]) -> Moments {
        let mut m = Moments::default();
        for (x, &p) in self.states.iter().zip(pi) {
            let v = x.max_norm() as f64;
            m.mean_max += p * v;
            m.second_moment_max += p * v * v;
            m.mean_total += p * x.total() as f64;
        }
        m.var_max = m.second_moment_max - m.mean_max * m.mean_max;
        m
    }

    /// `Σ_x π(x) g(x)`.
    pub fn expectation(&self, pi: &[f64], g: impl Fn(&QueueState) -> f64) -> f64 {
        self.states.iter().zip(pi).map(|(x, &p)| p * g(x)).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Stationary {
    pub pi: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Moments {
    pub mean_max: f64,
    pub second_moment_max: f64,
    pub var_max: f64,
    pub mean_total: f64,
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub states: usize,
    #[serde(rename = "N")]
    pub level: u64,
    pub mean_max: f64,
    pub var_max: f64,
    pub mean_total: f64,
    pub residual: f64,
}

/// Builds, solves and summarizes in one call.
pub fn solve(spec: &ModelSpec, policy: PolicyKind, level: u64) -> Result<OracleReport> {
    let chain = TruncatedChain::build(spec, policy, level)?;
    let st = chain.stationary()?;
    let m = chain.moments(&st.pi);
    Ok(OracleReport {
        states: chain.len(),
        level,
        mean_max: m.mean_max,
        var_max: m.var_max,
        mean_total: m.mean_total,
        residual: st.residual,
    })
}

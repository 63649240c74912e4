//! Small descriptive statistics used by ensembles and experiments.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two points.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Linear-interpolation quantile of already sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Box-plot summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    pub fn of(xs: &[f64]) -> Self {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        }
    }
}

/// Count of each integer value `0..=max`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn of(values: &[u64]) -> Self {
        let top = values.iter().copied().max().unwrap_or(0) as usize;
        let mut counts = vec![0; top + 1];
        for &v in values {
            counts[v as usize] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Pearson chi-square statistic of `observed` counts against `probs`,
/// pooling consecutive cells until each expected count is at
/// least `min_expected`. Returns `(statistic, degrees_of_freedom)`.
pub fn chi_square(observed: &[u64], probs: &[f64], min_expected: f64) -> (f64, usize) {
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let len = observed.len().max(probs.len());
    let obs = |k: usize| observed.get(k).copied().unwrap_or(0) as f64;
    let prob = |k: usize| probs.get(k).copied().unwrap_or(0.0);
    // Everything past the last cell is folded into the final one.
    let tail_prob = 1.0 - probs.iter().sum::<f64>();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for k in 0..len {
        o += obs(k);
        e += n * prob(k);
        if e >= min_expected {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    e += n * tail_prob.max(0.0);
    if let Some(last) = cells.last_mut() {
        last.0 += o;
        last.1 += e;
    } else {
        cells.push((o, e));
    }
    let stat = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    (stat, cells.len().saturating_sub(1))
}

/// Upper 0.001 critical value of chi-square with `dof` degrees of freedom.
pub fn chi_square_critical_999(dof: usize) -> f64 {
    if dof == 0 {
        return 0.0;
    }
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.999)
}

/// Least-squares line `y = intercept + slope x` with its `R²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

/// Mean and standard error from non-overlapping batch means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchMeans {
    pub mean: f64,
    pub std_err: f64,
    pub batches: usize,
}

impl BatchMeans {
    pub fn of(batch_means: &[f64]) -> Self {
        let k = batch_means.len();
        Self {
            mean: mean(batch_means),
            std_err: (variance(batch_means) / k as f64).sqrt(),
            batches: k,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        let f = FiveNumber::of(&v);
        assert_eq!((f.min, f.q1, f.median, f.q3, f.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(FiveNumber::of(&[7.0]).q3, 7.0);
    }

    #[test]
    fn fit_and_moments() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(variance(&[1.0, 3.0]), 2.0);
        let b = BatchMeans::of(&[1.0, 3.0]);
        assert_eq!(b.mean, 2.0);
        assert_eq!(b.std_err, 1.0);
    }

    #[test]
    fn chi_square_pools_sparse_cells() {
        let (stat, dof) = chi_square(&[50, 30, 20], &[0.5, 0.3, 0.2], 5.0);
        assert!(stat.abs() < 1e-12);
        assert_eq!(dof, 2);
        let (_, dof) = chi_square(&[99, 1, 0], &[0.97, 0.02, 0.01], 5.0);
        assert_eq!(dof, 0);
        // Tabulated 0.999 quantiles: 10.83, 16.27, 29.59.
        assert!((chi_square_critical_999(1) - 10.83).abs() < 0.01);
        assert!((chi_square_critical_999(3) - 16.27).abs() < 0.01);
        assert!((chi_square_critical_999(10) - 29.59).abs() < 0.01);
    }

    #[test]
    fn histogram_counts() {
        let h = Histogram::of(&[0, 2, 2, 5]);
        assert_eq!(h.counts, vec![1, 0, 2, 0, 0, 1]);
        assert_eq!(h.total(), 4);
    }
}

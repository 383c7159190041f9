//! Descriptive statistics shared by the factor and panel reports.

use serde::Serialize;

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    // shifted by the first element so that constant inputs average exactly
    let x0 = xs[0];
    Some(x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Population standard deviation (n denominator).
pub fn population_sd(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / xs.len() as f64).sqrt())
}

/// Quantile of already sorted data with linear interpolation between order
/// statistics (`h = (n - 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// Row-major; `None` where fewer than `min_obs` pairwise-complete
    /// observations exist or a column is constant.
    pub values: Vec<Vec<Option<f64>>>,
    pub n_obs: Vec<Vec<usize>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.values[i][j]
    }
}

/// Pearson correlations over pairwise-complete (finite) observations.
pub fn correlation_matrix(columns: &[(&str, &[f64])], min_obs: usize) -> CorrelationMatrix {
    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    let mut n_obs = vec![vec![0; k]; k];
    for i in 0..k {
        for j in i..k {
            let (xs, ys): (Vec<f64>, Vec<f64>) = columns[i]
                .1
                .iter()
                .zip(columns[j].1)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| (*x, *y))
                .unzip();
            let n = xs.len();
            let r = if n >= min_obs.max(2) {
                if i == j {
                    // unit diagonal whenever the column varies
                    pearson(&xs, &ys).map(|_| 1.0)
                } else {
                    pearson(&xs, &ys)
                }
            } else {
                None
            };
            values[i][j] = r;
            values[j][i] = r;
            n_obs[i][j] = n;
            n_obs[j][i] = n;
        }
    }
    CorrelationMatrix {
        names: columns.iter().map(|(n, _)| n.to_string()).collect(),
        values,
        n_obs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
}

/// Summary of the finite values in `xs`; `None` if there are none.
/// `sd` is 0 for a single observation.
pub fn summarize(xs: &[f64]) -> Option<ColumnSummary> {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(ColumnSummary {
        n: v.len(),
        mean: mean(&v)?,
        sd: sample_sd(&v).unwrap_or(0.0),
        min: v[0],
        p25: quantile_sorted(&v, 0.25)?,
        median: quantile_sorted(&v, 0.5)?,
        p75: quantile_sorted(&v, 0.75)?,
        max: v[v.len() - 1],
    })
}

/// Clamp values to the `[lower, upper]` quantiles of the finite entries.
pub fn winsorize(xs: &mut [f64], lower: f64, upper: f64) {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return;
    }
    v.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&v, lower).unwrap_or(v[0]);
    let hi = quantile_sorted(&v, upper).unwrap_or(v[v.len() - 1]);
    for x in xs.iter_mut().filter(|x| x.is_finite()) {
        *x = x.clamp(lo, hi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_small_columns() {
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.sd, 1.0);
        assert_eq!(s.n, 3);

        let c = summarize(&[4.2; 5]).unwrap();
        assert_eq!(c.mean, 4.2);
        assert_eq!(c.sd, 0.0);

        let e = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(e.median, 2.5);
        assert_eq!(e.p25, 1.75);
        assert_eq!(e.p75, 3.25);
    }

    #[test]
    fn correlation_identities() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 37) % 17) as f64).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let aff: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        let m = correlation_matrix(&[("x", &x), ("neg", &neg), ("aff", &aff)], 30);
        assert_eq!(m.get("x", "x"), Some(1.0));
        assert!((m.get("x", "neg").unwrap() + 1.0).abs() < 1e-12);
        assert!((m.get("x", "aff").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.get("neg", "x"), m.get("x", "neg"));
    }

    #[test]
    fn correlation_needs_min_obs() {
        let x = [1.0, 2.0, 3.0];
        let m = correlation_matrix(&[("a", &x), ("b", &x)], 30);
        assert_eq!(m.get("a", "b"), None);
    }

    #[test]
    fn pairwise_complete_skips_nan() {
        let x = [1.0, 2.0, f64::NAN, 4.0, 5.0];
        let y = [2.0, 4.0, 100.0, 8.0, 10.0];
        let m = correlation_matrix(&[("x", &x), ("y", &y)], 2);
        assert!((m.get("x", "y").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.n_obs[0][1], 4);
    }

    #[test]
    fn winsorize_clamps_tails() {
        let mut xs: Vec<f64> = (0..=100).map(f64::from).collect();
        winsorize(&mut xs, 0.01, 0.99);
        assert_eq!(xs[0], 1.0);
        assert_eq!(xs[100], 99.0);
        assert_eq!(xs[50], 50.0);
    }
}

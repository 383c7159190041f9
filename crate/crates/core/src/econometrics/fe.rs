use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::ols::{ols, OlsError};
use super::PanelFrame;

/// Convergence tolerance of the alternating demeaning, relative to the
/// column's largest magnitude.
const DEMEAN_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;
/// A regressor whose within-transformed norm falls below this fraction of
/// its centered norm is absorbed by the fixed effects.
const ABSORPTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeType {
    #[default]
    Homoskedastic,
    ClusterByCoin,
}

impl SeType {
    pub fn label(self) -> &'static str {
        match self {
            SeType::Homoskedastic => "homoskedastic",
            SeType::ClusterByCoin => "cluster_by_coin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeSpec {
    pub dependent: String,
    pub regressors: Vec<String>,
    pub fe_coin: bool,
    pub fe_month: bool,
    pub se_type: SeType,
}

impl FeSpec {
    pub fn new(dependent: &str, regressors: &[&str]) -> Self {
        Self {
            dependent: dependent.to_string(),
            regressors: regressors.iter().map(|r| r.to_string()).collect(),
            fe_coin: true,
            fe_month: true,
            se_type: SeType::Homoskedastic,
        }
    }

    pub fn with_se(mut self, se_type: SeType) -> Self {
        self.se_type = se_type;
        self
    }

    pub fn with_effects(mut self, fe_coin: bool, fe_month: bool) -> Self {
        self.fe_coin = fe_coin;
        self.fe_month = fe_month;
        self
    }

    fn validate(&self) -> Result<(), FeError> {
        if self.regressors.is_empty() {
            return Err(FeError::InvalidSpec("no regressors".into()));
        }
        let unique: BTreeSet<&String> = self.regressors.iter().collect();
        if unique.len() != self.regressors.len() {
            return Err(FeError::InvalidSpec("duplicate regressor".into()));
        }
        if self.regressors.contains(&self.dependent) {
            return Err(FeError::InvalidSpec("dependent variable used as regressor".into()));
        }
        Ok(())
    }

    /// Number of intercept-type parameters swept out by the fixed effects.
    /// `components` counts the connected blocks of the coin-month graph;
    /// each block beyond the first makes one more dummy redundant.
    pub fn absorbed_parameters(&self, n_coins: usize, n_months: usize, components: usize) -> usize {
        match (self.fe_coin, self.fe_month) {
            (true, true) => n_coins + n_months - components,
            (true, false) => n_coins,
            (false, true) => n_months,
            (false, false) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("need at least 2 coins and 2 months after dropping singletons, have {coins} and {months}")]
    TooFewGroups { coins: usize, months: usize },
    #[error("regressor `{0}` is collinear with the other regressors")]
    RankDeficient(String),
    #[error("every regressor is absorbed by the fixed effects")]
    AllAbsorbed,
    #[error("no residual degrees of freedom")]
    NoDegreesOfFreedom,
    #[error(transparent)]
    Ols(#[from] OlsError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    /// Two-sided, standard normal reference.
    pub p: f64,
}

impl Coefficient {
    pub fn new(name: &str, beta: f64, se: f64) -> Self {
        let t = beta / se;
        Self {
            name: name.to_string(),
            beta,
            se,
            t,
            p: two_sided_p(t),
        }
    }
}

pub(crate) fn two_sided_p(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    2.0 * Normal::standard().sf(t.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeFit {
    pub dependent: String,
    /// Identified regressors, in specification order.
    pub coefficients: Vec<Coefficient>,
    /// Regressors swept out by the fixed effects.
    pub absorbed: Vec<String>,
    pub within_r2: f64,
    pub n_rows: usize,
    pub n_coins: usize,
    pub n_months: usize,
    pub dropped_singletons: usize,
    pub dof: usize,
    pub se_type: SeType,
    pub fe_coin: bool,
    pub fe_month: bool,
    pub sweeps: usize,
}

impl FeFit {
    pub fn coef(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn is_absorbed(&self, name: &str) -> bool {
        self.absorbed.iter().any(|a| a == name)
    }
}

/// Estimation sample after completeness filtering and iterative removal of
/// singleton groups. Group indices follow sorted label order.
#[derive(Debug, Clone)]
pub struct FeSample {
    pub rows: Vec<usize>,
    pub coin: Vec<usize>,
    pub month: Vec<usize>,
    pub n_coins: usize,
    pub n_months: usize,
    pub y: Vec<f64>,
    /// One vector per regressor, in specification order.
    pub x: Vec<Vec<f64>>,
    pub dropped_singletons: usize,
    /// Connected components of the bipartite coin-month graph.
    pub components: usize,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Connected components of the graph linking each coin to the months it
/// is observed in.
fn connected_components(coin: &[usize], month: &[usize], n_coins: usize, n_months: usize) -> usize {
    let mut parent: Vec<usize> = (0..n_coins + n_months).collect();
    for (&c, &m) in coin.iter().zip(month) {
        let (a, b) = (find(&mut parent, c), find(&mut parent, n_coins + m));
        if a != b {
            parent[a] = b;
        }
    }
    (0..n_coins + n_months).filter(|&i| find(&mut parent, i) == i).count()
}

pub fn prepare_sample(panel: &PanelFrame, spec: &FeSpec) -> Result<FeSample, FeError> {
    spec.validate()?;
    let col = |name: &str| panel.column(name).ok_or_else(|| FeError::UnknownColumn(name.to_string()));
    let y_all = col(&spec.dependent)?;
    let x_all: Vec<&[f64]> = spec.regressors.iter().map(|r| col(r)).collect::<Result<_, _>>()?;

    let mut rows: Vec<usize> = (0..panel.len())
        .filter(|&i| y_all[i].is_finite() && x_all.iter().all(|x| x[i].is_finite()))
        .collect();

    let mut dropped = 0;
    loop {
        let mut coin_counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut month_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for &i in &rows {
            *coin_counts.entry(&panel.entity()[i]).or_default() += 1;
            *month_counts.entry(&panel.period()[i]).or_default() += 1;
        }
        let before = rows.len();
        rows.retain(|&i| {
            !(spec.fe_coin && coin_counts[panel.entity()[i].as_str()] == 1
                || spec.fe_month && month_counts[panel.period()[i].as_str()] == 1)
        });
        dropped += before - rows.len();
        if rows.len() == before {
            break;
        }
    }

    let index = |labels: &[String]| -> (Vec<usize>, usize) {
        let keys: BTreeSet<&str> = rows.iter().map(|&i| labels[i].as_str()).collect();
        let lookup: BTreeMap<&str, usize> = keys.iter().enumerate().map(|(j, k)| (*k, j)).collect();
        (rows.iter().map(|&i| lookup[labels[i].as_str()]).collect(), keys.len())
    };
    let (coin, n_coins) = index(panel.entity());
    let (month, n_months) = index(panel.period());

    // clustering needs at least two coins even without coin effects
    let need_coins = spec.fe_coin || spec.se_type == SeType::ClusterByCoin;
    if (need_coins && n_coins < 2) || (spec.fe_month && n_months < 2) || rows.is_empty() {
        return Err(FeError::TooFewGroups {
            coins: n_coins,
            months: n_months,
        });
    }

    let components = if spec.fe_coin && spec.fe_month {
        connected_components(&coin, &month, n_coins, n_months)
    } else {
        1
    };
    Ok(FeSample {
        components,
        y: rows.iter().map(|&i| y_all[i]).collect(),
        x: x_all.iter().map(|x| rows.iter().map(|&i| x[i]).collect()).collect(),
        rows,
        coin,
        month,
        n_coins,
        n_months,
        dropped_singletons: dropped,
    })
}

fn subtract_group_means(v: &mut [f64], groups: &[usize], n_groups: usize) -> f64 {
    let mut sums = vec![0.0; n_groups];
    let mut counts = vec![0usize; n_groups];
    for (x, &g) in v.iter().zip(groups) {
        sums[g] += x;
        counts[g] += 1;
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let mut change = 0.0f64;
    for (x, &g) in v.iter_mut().zip(groups) {
        *x -= means[g];
        change = change.max(means[g].abs());
    }
    change
}

/// Alternating projections onto the coin and month complements. Returns
/// the number of sweeps used.
fn demean(v: &mut [f64], s: &FeSample, spec: &FeSpec) -> usize {
    match (spec.fe_coin, spec.fe_month) {
        (false, false) => {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= m);
            1
        }
        (true, false) => {
            subtract_group_means(v, &s.coin, s.n_coins);
            1
        }
        (false, true) => {
            subtract_group_means(v, &s.month, s.n_months);
            1
        }
        (true, true) => {
            let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
            for sweep in 1..=MAX_SWEEPS {
                let a = subtract_group_means(v, &s.coin, s.n_coins);
                let b = subtract_group_means(v, &s.month, s.n_months);
                if a.max(b) < DEMEAN_TOLERANCE * scale && sweep > 1 {
                    return sweep;
                }
            }
            log::warn!("demeaning stopped at {MAX_SWEEPS} sweeps before converging");
            MAX_SWEEPS
        }
    }
}

fn centered_norm(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>().sqrt()
}

/// Two-way fixed-effects estimator by the within transformation.
///
/// Coin and month means are swept out of the dependent variable and every
/// regressor by alternating demeaning, then OLS without intercept is run on
/// the transformed data. Regressors that vanish under the transformation
/// (coin-invariant ones under coin effects) are reported as absorbed.
pub fn two_way_fe(panel: &PanelFrame, spec: &FeSpec) -> Result<FeFit, FeError> {
    let sample = prepare_sample(panel, spec)?;
    let n = sample.y.len();

    let mut y = sample.y.clone();
    let mut sweeps = demean(&mut y, &sample, spec);

    let mut kept = Vec::new();
    let mut absorbed = Vec::new();
    let mut columns = Vec::new();
    for (name, raw) in spec.regressors.iter().zip(&sample.x) {
        let mut x = raw.clone();
        sweeps = sweeps.max(demean(&mut x, &sample, spec));
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let reference = centered_norm(raw);
        if reference == 0.0 || norm <= ABSORPTION_TOLERANCE * reference {
            absorbed.push(name.clone());
        } else {
            kept.push(name.clone());
            columns.push(x);
        }
    }
    if kept.is_empty() {
        return Err(FeError::AllAbsorbed);
    }

    let k = kept.len();
    let fe_params = spec.absorbed_parameters(sample.n_coins, sample.n_months, sample.components);
    let dof = n.checked_sub(k + fe_params).filter(|d| *d > 0).ok_or(FeError::NoDegreesOfFreedom)?;

    let x = DMatrix::from_fn(n, k, |i, j| columns[j][i]);
    let fit = ols(&x, &DVector::from_vec(y.clone()), false).map_err(|e| match e {
        OlsError::RankDeficient(j) => FeError::RankDeficient(kept[j].clone()),
        other => FeError::Ols(other),
    })?;

    let variances: Vec<f64> = match spec.se_type {
        SeType::Homoskedastic => {
            let s2 = fit.rss / dof as f64;
            (0..k).map(|j| s2 * fit.xtx_inv[(j, j)]).collect()
        }
        SeType::ClusterByCoin => {
            if sample.n_coins <= k {
                log::warn!("{} clusters for {k} regressors: cluster covariance is singular", sample.n_coins);
            }
            let scores = cluster_scores(&x, &fit.residuals, &sample.coin, sample.n_coins);
            let v = sandwich(&fit.xtx_inv, &scores, sample.n_coins, n, n - dof);
            (0..k).map(|j| v[(j, j)]).collect()
        }
    };

    let tss = y.iter().map(|v| v * v).sum::<f64>();
    let within_r2 = if tss > 0.0 { (1.0 - fit.rss / tss).clamp(0.0, 1.0) } else { 0.0 };

    Ok(FeFit {
        dependent: spec.dependent.clone(),
        coefficients: kept
            .iter()
            .zip(&fit.coefficients)
            .zip(&variances)
            .map(|((name, b), v)| Coefficient::new(name, *b, v.sqrt()))
            .collect(),
        absorbed,
        within_r2,
        n_rows: n,
        n_coins: sample.n_coins,
        n_months: sample.n_months,
        dropped_singletons: sample.dropped_singletons,
        dof,
        se_type: spec.se_type,
        fe_coin: spec.fe_coin,
        fe_month: spec.fe_month,
        sweeps,
    })
}

/// Per-cluster score sums `sum_{i in g} x_i e_i`, one row per cluster.
pub(crate) fn cluster_scores(x: &DMatrix<f64>, residuals: &[f64], cluster: &[usize], n_clusters: usize) -> DMatrix<f64> {
    let mut scores = DMatrix::zeros(n_clusters, x.ncols());
    for (i, (&g, e)) in cluster.iter().zip(residuals).enumerate() {
        for j in 0..x.ncols() {
            scores[(g, j)] += x[(i, j)] * e;
        }
    }
    scores
}

/// Cluster-robust covariance `c A (S'S) A` with the small-sample factor
/// `c = G/(G-1) * (n-1)/(n-K)`, `K` the number of estimated parameters.
pub(crate) fn sandwich(bread: &DMatrix<f64>, scores: &DMatrix<f64>, g: usize, n: usize, k_used: usize) -> DMatrix<f64> {
    let meat = scores.transpose() * scores;
    let c = g as f64 / (g as f64 - 1.0) * (n as f64 - 1.0) / (n as f64 - k_used as f64);
    let mut v = (bread * meat * bread) * c;
    // rank is at most G - 1; rounding can leave tiny negative variances
    for j in 0..v.nrows() {
        v[(j, j)] = v[(j, j)].max(0.0);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_panel(coins: usize, months: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> PanelFrame {
        let mut entity = Vec::new();
        let mut period = Vec::new();
        let mut y = Vec::new();
        let mut x = Vec::new();
        for i in 0..coins {
            for t in 0..months {
                entity.push(format!("c{i:02}"));
                period.push(format!("m{t:02}"));
                let (yi, xi) = f(i, t);
                y.push(yi);
                x.push(xi);
            }
        }
        PanelFrame::new(entity, period).with_column("y", y).with_column("x", x)
    }

    fn wobble(i: usize, t: usize) -> f64 {
        0.5 * ((i * 31 + t * 17 + i * t * 7) as f64 * 0.61).sin()
    }

    #[test]
    fn exact_two_way_recovery() {
        let p = toy_panel(6, 8, |i, t| {
            let x = wobble(i, t);
            (i as f64 * 0.7 + (t as f64).sin() + 2.0 * x, x)
        });
        let fit = two_way_fe(&p, &FeSpec::new("y", &["x"])).unwrap();
        assert!((fit.coef("x").unwrap().beta - 2.0).abs() < 1e-12);
        assert!((fit.within_r2 - 1.0).abs() < 1e-12);
        assert_eq!(fit.n_coins, 6);
        assert_eq!(fit.n_months, 8);
    }

    #[test]
    fn coin_constant_shift_leaves_beta() {
        let base = toy_panel(5, 7, |i, t| (wobble(t, i) + 0.3 * wobble(i, t), wobble(i, t)));
        let shifted = toy_panel(5, 7, |i, t| (wobble(t, i) + 0.3 * wobble(i, t) + 10.0 * i as f64, wobble(i, t)));
        let a = two_way_fe(&base, &FeSpec::new("y", &["x"])).unwrap();
        let b = two_way_fe(&shifted, &FeSpec::new("y", &["x"])).unwrap();
        assert!((a.coefficients[0].beta - b.coefficients[0].beta).abs() < 1e-10);
    }

    #[test]
    fn coin_invariant_regressor_is_absorbed() {
        let mut p = toy_panel(5, 6, |i, t| (wobble(i, t) + wobble(t, i), wobble(i, t)));
        let cat: Vec<f64> = p.entity().iter().map(|e| if e.as_str() < "c02" { 1.0 } else { 0.0 }).collect();
        p.insert("category", cat);
        let fit = two_way_fe(&p, &FeSpec::new("y", &["x", "category"])).unwrap();
        assert_eq!(fit.absorbed, vec!["category".to_string()]);
        assert_eq!(fit.coefficients.len(), 1);

        let only = two_way_fe(&p, &FeSpec::new("y", &["category"]));
        assert_eq!(only.unwrap_err(), FeError::AllAbsorbed);
    }

    #[test]
    fn drops_singletons_iteratively() {
        let mut entity: Vec<String> = Vec::new();
        let mut period: Vec<String> = Vec::new();
        for i in 0..4 {
            for t in 0..5 {
                entity.push(format!("c{i}"));
                period.push(format!("m{t}"));
            }
        }
        // lone coin observed once in a month nobody else has
        entity.push("lone".into());
        period.push("m9".into());
        let n = entity.len();
        let p = PanelFrame::new(entity, period)
            .with_column("y", (0..n).map(|i| wobble(i, 3)).collect())
            .with_column("x", (0..n).map(|i| wobble(3, i)).collect());
        let fit = two_way_fe(&p, &FeSpec::new("y", &["x"])).unwrap();
        assert_eq!(fit.dropped_singletons, 1);
        assert_eq!(fit.n_rows, 20);
        assert_eq!(fit.n_coins, 4);
    }

    #[test]
    fn too_few_groups() {
        let p = toy_panel(1, 6, |_, t| (t as f64, wobble(0, t)));
        assert!(matches!(two_way_fe(&p, &FeSpec::new("y", &["x"])), Err(FeError::TooFewGroups { .. })));
    }

    #[test]
    fn spec_validation() {
        let p = toy_panel(3, 3, |i, t| (wobble(i, t), wobble(t, i)));
        assert!(matches!(two_way_fe(&p, &FeSpec::new("y", &[])), Err(FeError::InvalidSpec(_))));
        assert!(matches!(two_way_fe(&p, &FeSpec::new("y", &["x", "x"])), Err(FeError::InvalidSpec(_))));
        assert!(matches!(two_way_fe(&p, &FeSpec::new("y", &["z"])), Err(FeError::UnknownColumn(_))));
    }

    #[test]
    fn collinear_regressors_named() {
        let mut p = toy_panel(4, 5, |i, t| (wobble(i, t), wobble(t, i)));
        let twice: Vec<f64> = p.column("x").unwrap().iter().map(|v| 2.0 * v).collect();
        p.insert("x2", twice);
        assert_eq!(two_way_fe(&p, &FeSpec::new("y", &["x", "x2"])).unwrap_err(), FeError::RankDeficient("x2".into()));
    }

    #[test]
    fn cluster_and_homoskedastic_share_betas() {
        let p = toy_panel(8, 9, |i, t| (wobble(i, t) + 0.5 * wobble(t, i), wobble(t, i)));
        let h = two_way_fe(&p, &FeSpec::new("y", &["x"])).unwrap();
        let c = two_way_fe(&p, &FeSpec::new("y", &["x"]).with_se(SeType::ClusterByCoin)).unwrap();
        assert_eq!(h.coefficients[0].beta, c.coefficients[0].beta);
        assert!(c.coefficients[0].se > 0.0 && c.coefficients[0].se.is_finite());
        assert_eq!(h.dof, 72 - 1 - (8 + 9 - 1));
    }
}

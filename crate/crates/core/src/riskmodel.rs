//! Per coin-month time-series regressions and idiosyncratic volatility.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::econometrics::{ols, OlsError};
use crate::factors::{FactorDay, FactorTable};
use crate::ingest::{ReturnObs, ReturnTable};
use crate::month::Month;
use crate::skiplog::{Reason, Skip};
use crate::stats;

/// Residual norms at or below this fraction of the response norm are
/// rounding noise from an exact fit and are set to zero.
pub const EXACT_FIT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskModel {
    Capm,
    ThreeFactor,
}

impl RiskModel {
    pub const ALL: [RiskModel; 2] = [RiskModel::Capm, RiskModel::ThreeFactor];

    pub fn label(self) -> &'static str {
        match self {
            RiskModel::Capm => "capm",
            RiskModel::ThreeFactor => "three_factor",
        }
    }

    /// Number of coefficients including the intercept.
    pub fn n_params(self) -> usize {
        match self {
            RiskModel::Capm => 2,
            RiskModel::ThreeFactor => 4,
        }
    }

    fn regressors(self, f: &FactorDay) -> Vec<f64> {
        match self {
            RiskModel::Capm => vec![f.mrkt],
            RiskModel::ThreeFactor => vec![f.mrkt, f.smb, f.wml],
        }
    }
}

/// Variance convention for IVOL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IvolDof {
    /// Divide by the number of observations.
    #[default]
    Population,
    /// Divide by observations minus estimated coefficients.
    DofCorrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskConfig {
    pub min_obs: usize,
    pub ivol_dof: IvolDof,
    /// Quantile clamp of daily excess returns within each coin-month.
    pub winsorize_returns: Option<(f64, f64)>,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            min_obs: 10,
            ivol_dof: IvolDof::Population,
            winsorize_returns: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RiskError {
    #[error("{coin} {month}: {n} usable days < {min}")]
    TooFewObservations { coin: String, month: Month, n: usize, min: usize },
    #[error("{coin} {month}: factor design is rank-deficient")]
    SingularDesign { coin: String, month: Month },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Loadings {
    pub mrkt: f64,
    pub smb: Option<f64>,
    pub wml: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskFit {
    pub coin_id: String,
    pub month: Month,
    pub model: RiskModel,
    pub alpha: f64,
    pub betas: Loadings,
    /// Standard errors of `alpha` then each loading.
    pub standard_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub n_obs: usize,
    pub r2: f64,
    pub rss: f64,
    pub ivol: f64,
}

/// OLS of daily excess returns on an intercept and the model's factors.
pub fn fit_model(coin: &str, month: Month, obs: &[(f64, &FactorDay)], model: RiskModel, cfg: &RiskConfig) -> Result<RiskFit, RiskError> {
    let n = obs.len();
    if n < cfg.min_obs.max(model.n_params() + 1) {
        return Err(RiskError::TooFewObservations {
            coin: coin.to_string(),
            month,
            n,
            min: cfg.min_obs,
        });
    }
    let mut y: Vec<f64> = obs.iter().map(|(r, _)| *r).collect();
    if let Some((lo, hi)) = cfg.winsorize_returns {
        stats::winsorize(&mut y, lo, hi);
    }
    let rows: Vec<Vec<f64>> = obs.iter().map(|(_, f)| model.regressors(f)).collect();
    let x = DMatrix::from_fn(n, model.n_params() - 1, |i, j| rows[i][j]);
    let y = DVector::from_vec(y);

    let fit = ols(&x, &y, true).map_err(|e| match e {
        OlsError::RankDeficient(_) | OlsError::NonFinite | OlsError::Underdetermined { .. } | OlsError::DimensionMismatch { .. } => {
            RiskError::SingularDesign {
                coin: coin.to_string(),
                month,
            }
        }
    })?;

    let mut residuals = fit.residuals.clone();
    let mut rss = fit.rss;
    if rss.sqrt() <= EXACT_FIT_TOLERANCE * y.norm() {
        residuals.iter_mut().for_each(|e| *e = 0.0);
        rss = 0.0;
    }
    let ivol = match cfg.ivol_dof {
        IvolDof::Population => stats::population_sd(&residuals).unwrap_or(0.0),
        IvolDof::DofCorrected => {
            let m = residuals.iter().sum::<f64>() / n as f64;
            let ss: f64 = residuals.iter().map(|e| (e - m) * (e - m)).sum();
            (ss / (n - model.n_params()) as f64).sqrt()
        }
    };

    let c = &fit.coefficients;
    let betas = match model {
        RiskModel::Capm => Loadings {
            mrkt: c[1],
            smb: None,
            wml: None,
        },
        RiskModel::ThreeFactor => Loadings {
            mrkt: c[1],
            smb: Some(c[2]),
            wml: Some(c[3]),
        },
    };
    Ok(RiskFit {
        coin_id: coin.to_string(),
        month,
        model,
        alpha: c[0],
        betas,
        standard_errors: fit.standard_errors.clone(),
        residuals,
        n_obs: n,
        r2: fit.r2,
        rss,
        ivol,
    })
}

fn by_month(series: &[ReturnObs]) -> BTreeMap<Month, Vec<&ReturnObs>> {
    let mut out: BTreeMap<Month, Vec<&ReturnObs>> = BTreeMap::new();
    for r in series {
        out.entry(Month::of(r.date)).or_default().push(r);
    }
    out
}

/// One fit per (coin, month) with enough days that have both a coin return
/// and factor values. Output is ordered by coin then month.
pub fn ivol_panel(
    returns: &ReturnTable,
    factors: &FactorTable,
    sample: Option<&BTreeSet<String>>,
    model: RiskModel,
    cfg: &RiskConfig,
) -> (Vec<RiskFit>, Vec<Skip>) {
    let coins: Vec<(&str, &[ReturnObs])> = returns.coins().filter(|(c, _)| sample.is_none_or(|s| s.contains(*c))).collect();
    let per_coin: Vec<(Vec<RiskFit>, Vec<Skip>)> = coins
        .par_iter()
        .map(|(coin, series)| {
            let mut fits = Vec::new();
            let mut skips = Vec::new();
            for (month, days) in by_month(series) {
                let obs: Vec<(f64, &FactorDay)> = days.iter().filter_map(|r| factors.get(r.date).map(|f| (r.excess_ret, f))).collect();
                match fit_model(coin, month, &obs, model, cfg) {
                    Ok(fit) => fits.push(fit),
                    Err(e) => {
                        let reason = match e {
                            RiskError::TooFewObservations { .. } => Reason::TooFewObservations,
                            RiskError::SingularDesign { .. } => Reason::SingularDesign,
                        };
                        log::debug!("{e}");
                        skips.push(Skip::new(reason, format!("{coin}@{month}/{}", model.label()), e.to_string()));
                    }
                }
            }
            (fits, skips)
        })
        .collect();
    let mut fits = Vec::new();
    let mut skips = Vec::new();
    for (f, s) in per_coin {
        fits.extend(f);
        skips.extend(s);
    }
    (fits, skips)
}

/// Cross-sectional mean IVOL per month, in percent. Months without fits are
/// absent.
pub fn ew_ivol_series(fits: &[RiskFit]) -> Vec<(Month, f64)> {
    let mut acc: BTreeMap<Month, (f64, usize)> = BTreeMap::new();
    for f in fits {
        let e = acc.entry(f.month).or_default();
        e.0 += f.ivol;
        e.1 += 1;
    }
    acc.into_iter().map(|(m, (s, n))| (m, 100.0 * s / n as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Days, NaiveDate};

    fn factor_days(n: usize) -> Vec<FactorDay> {
        let start = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
        (0..n)
            .map(|i| {
                let x = i as f64;
                FactorDay {
                    date: start + Days::new(i as u64),
                    mrkt: 0.01 * (x * 0.7).sin(),
                    smb: 0.005 * (x * 1.3).cos(),
                    wml: 0.004 * (x * 0.37 + 1.0).sin(),
                    rf_daily: 0.0,
                }
            })
            .collect()
    }

    fn month() -> Month {
        Month::new(2021, 3).unwrap()
    }

    #[test]
    fn zero_noise_capm_recovery() {
        let f = factor_days(30);
        let obs: Vec<(f64, &FactorDay)> = f.iter().map(|d| (0.001 + 1.2 * d.mrkt, d)).collect();
        let fit = fit_model("a", month(), &obs, RiskModel::Capm, &RiskConfig::default()).unwrap();
        assert!((fit.alpha - 0.001).abs() < 1e-12);
        assert!((fit.betas.mrkt - 1.2).abs() < 1e-10);
        assert_eq!(fit.ivol, 0.0);
        assert!(fit.residuals.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn constant_response() {
        let f = factor_days(25);
        let obs: Vec<(f64, &FactorDay)> = f.iter().map(|d| (0.003, d)).collect();
        let fit = fit_model("a", month(), &obs, RiskModel::ThreeFactor, &RiskConfig::default()).unwrap();
        assert!((fit.alpha - 0.003).abs() < 1e-14);
        assert!(fit.betas.mrkt.abs() < 1e-10);
        assert!(fit.betas.smb.unwrap().abs() < 1e-10);
        assert_eq!(fit.ivol, 0.0);
    }

    #[test]
    fn too_few_observations() {
        let f = factor_days(5);
        let obs: Vec<(f64, &FactorDay)> = f.iter().map(|d| (d.mrkt, d)).collect();
        assert!(matches!(
            fit_model("a", month(), &obs, RiskModel::Capm, &RiskConfig::default()),
            Err(RiskError::TooFewObservations { n: 5, .. })
        ));
    }

    #[test]
    fn singular_design() {
        let mut f = factor_days(20);
        for d in &mut f {
            d.smb = 0.0;
        }
        let obs: Vec<(f64, &FactorDay)> = f.iter().map(|d| (d.mrkt + 0.001 * d.wml, d)).collect();
        assert!(matches!(
            fit_model("a", month(), &obs, RiskModel::ThreeFactor, &RiskConfig::default()),
            Err(RiskError::SingularDesign { .. })
        ));
    }

    #[test]
    fn dof_switch_scales_ivol() {
        let f = factor_days(30);
        let obs: Vec<(f64, &FactorDay)> = f.iter().enumerate().map(|(i, d)| (d.mrkt + 0.01 * ((i * 7919 % 13) as f64 - 6.0), d)).collect();
        let pop = fit_model("a", month(), &obs, RiskModel::Capm, &RiskConfig::default()).unwrap();
        let cfg = RiskConfig {
            ivol_dof: IvolDof::DofCorrected,
            ..RiskConfig::default()
        };
        let corr = fit_model("a", month(), &obs, RiskModel::Capm, &cfg).unwrap();
        assert!((corr.ivol / pop.ivol - (30.0f64 / 28.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn equal_weighted_percent() {
        let mk = |coin: &str, m: u32, ivol: f64| RiskFit {
            coin_id: coin.into(),
            month: Month::new(2021, m).unwrap(),
            model: RiskModel::Capm,
            alpha: 0.0,
            betas: Loadings {
                mrkt: 1.0,
                smb: None,
                wml: None,
            },
            standard_errors: vec![],
            residuals: vec![],
            n_obs: 20,
            r2: 0.5,
            rss: 0.0,
            ivol,
        };
        let s = ew_ivol_series(&[mk("a", 1, 0.02), mk("b", 1, 0.04), mk("a", 3, 0.05)]);
        assert_eq!(s.len(), 2);
        assert!((s[0].1 - 3.0).abs() < 1e-12);
        assert!((s[1].1 - 5.0).abs() < 1e-12);
        assert_eq!(s[1].0, Month::new(2021, 3).unwrap());
        assert!(ew_ivol_series(&[]).is_empty());
    }
}

//! Seeded synthetic data with known ground truth.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`). Each coin draws from its
//! own stream (`set_stream(coin_index + 1)`) of the configured seed and the
//! common factors and risk-free path from stream 0, so output does not
//! depend on generation order. Normal variates use `rand_distr`.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::characteristics::{amihud_char, mom_char, size_char, volume_char};
use crate::econometrics::{ols, prepare_sample, Coefficient, FeError, FeFit, FeSpec, OlsError, PanelFrame, SeType};
use crate::factors::{FactorDay, FactorTable};
use crate::ingest::{Category, CoinDay, CoinMeta, FollowerObs, DAYS_PER_YEAR};
use crate::month::Month;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadingLaw {
    pub alpha_sd: f64,
    pub beta_mean: f64,
    pub beta_sd: f64,
    pub smb_mean: f64,
    pub smb_sd: f64,
    pub wml_mean: f64,
    pub wml_sd: f64,
}

impl Default for LoadingLaw {
    fn default() -> Self {
        Self {
            alpha_sd: 0.0,
            beta_mean: 1.0,
            beta_sd: 0.3,
            smb_mean: 0.3,
            smb_sd: 0.4,
            wml_mean: 0.0,
            wml_sd: 0.4,
        }
    }
}

/// Coefficients of the monthly idiosyncratic-volatility equation
/// `sigma_t = sigma_i + b1 * dIB_{t-1} + sum_k gamma_k * control_{k,t-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelTruth {
    pub b1: f64,
    pub gamma_size: f64,
    pub gamma_mom: f64,
    pub gamma_volume: f64,
    pub gamma_amihud: f64,
}

impl Default for PanelTruth {
    fn default() -> Self {
        Self {
            b1: 5e-6,
            gamma_size: 0.0,
            gamma_mom: 0.0,
            gamma_volume: 0.0,
            gamma_amihud: 0.0,
        }
    }
}

/// Month-end followers: `F_t = max(0, round(F_{t-1} (1 + drift) + noise_sd z))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FollowerProcess {
    pub initial_min: f64,
    pub initial_max: f64,
    pub drift: f64,
    pub noise_sd: f64,
}

impl Default for FollowerProcess {
    fn default() -> Self {
        Self {
            initial_min: 5_000.0,
            initial_max: 150_000.0,
            drift: 0.01,
            noise_sd: 1_500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McapProcess {
    pub log_cap_mean: f64,
    pub log_cap_sd: f64,
    pub turnover: f64,
    pub turnover_noise: f64,
}

impl Default for McapProcess {
    fn default() -> Self {
        Self {
            log_cap_mean: 19.0,
            log_cap_sd: 1.5,
            turnover: 0.05,
            turnover_noise: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_coins: usize,
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub market_drift: f64,
    /// Daily sigma of MRKT, SMB and WML.
    pub factor_vols: [f64; 3],
    pub loadings: LoadingLaw,
    /// Per-coin baseline idiosyncratic sigma drawn uniformly from this range.
    pub idio_sigma: (f64, f64),
    pub sigma_floor: f64,
    pub panel_truth: PanelTruth,
    pub follower_process: FollowerProcess,
    pub mcap_process: McapProcess,
    pub annual_rate: f64,
    pub rate_every_days: usize,
    pub stablecoin_fraction: f64,
    pub token_fraction: f64,
    pub no_subreddit_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_coins: 100,
            n_days: 1096,
            start_date: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
            market_drift: 0.0005,
            factor_vols: [0.03, 0.012, 0.012],
            loadings: LoadingLaw::default(),
            idio_sigma: (0.02, 0.05),
            sigma_floor: 0.002,
            panel_truth: PanelTruth::default(),
            follower_process: FollowerProcess::default(),
            mcap_process: McapProcess::default(),
            annual_rate: 0.02,
            rate_every_days: 7,
            stablecoin_fraction: 0.03,
            token_fraction: 0.4,
            no_subreddit_fraction: 0.1,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.n_coins < 2 {
            return bad("n_coins must be at least 2");
        }
        if self.n_days < 60 {
            return bad("n_days must be at least 60");
        }
        if self.idio_sigma.0 < 0.0 || self.idio_sigma.1 < self.idio_sigma.0 {
            return bad("idio_sigma must be a non-negative range");
        }
        if self.factor_vols.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return bad("factor_vols must be non-negative");
        }
        if self.rate_every_days == 0 {
            return bad("rate_every_days must be positive");
        }
        for (name, f) in [
            ("stablecoin_fraction", self.stablecoin_fraction),
            ("token_fraction", self.token_fraction),
            ("no_subreddit_fraction", self.no_subreddit_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date + Days::new(self.n_days as u64 - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinTruth {
    pub coin_id: String,
    pub alpha: f64,
    pub beta: f64,
    pub smb: f64,
    pub wml: f64,
    pub idio_sigma: f64,
    pub category: Category,
    pub subreddit: Option<String>,
    pub is_stablecoin: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub config: SynthConfig,
    pub coins: Vec<CoinTruth>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub prices: Vec<CoinDay>,
    pub meta: Vec<CoinMeta>,
    pub followers: Vec<FollowerObs>,
    pub riskfree: Vec<(NaiveDate, f64)>,
    /// The generating factor realizations.
    pub factors: FactorTable,
    pub truth: Truth,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generate prices, metadata, followers, the risk-free rate and ground truth.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData, SynthError> {
    cfg.validate()?;
    let dates: Vec<NaiveDate> = cfg.start_date.iter_days().take(cfg.n_days).collect();

    let mut common = stream(cfg.seed, 0);
    let mut riskfree = Vec::new();
    let mut rate = cfg.annual_rate;
    for (i, d) in dates.iter().enumerate() {
        if i % cfg.rate_every_days == 0 {
            rate = (rate + 0.0005 * normal(&mut common)).max(0.0);
            riskfree.push((*d, rate));
        }
    }
    let rf_daily = |i: usize| riskfree[i / cfg.rate_every_days].1 / DAYS_PER_YEAR;
    let factor_days: Vec<FactorDay> = dates
        .iter()
        .enumerate()
        .map(|(i, d)| FactorDay {
            date: *d,
            mrkt: cfg.market_drift + cfg.factor_vols[0] * normal(&mut common),
            smb: cfg.factor_vols[1] * normal(&mut common),
            wml: cfg.factor_vols[2] * normal(&mut common),
            rf_daily: rf_daily(i),
        })
        .collect();

    let width = (cfg.n_coins.max(2) - 1).to_string().len();
    let mut prices = Vec::with_capacity(cfg.n_coins * cfg.n_days);
    let mut meta = Vec::new();
    let mut followers = Vec::new();
    let mut coins = Vec::new();

    for c in 0..cfg.n_coins {
        let mut rng = stream(cfg.seed, c as u64 + 1);
        let coin_id = format!("c{c:0width$}");
        let is_stablecoin = rng.random::<f64>() < cfg.stablecoin_fraction;
        let category = if rng.random::<f64>() < cfg.token_fraction { Category::Token } else { Category::Coin };
        let subreddit = (rng.random::<f64>() >= cfg.no_subreddit_fraction).then(|| format!("r_{coin_id}"));
        let l = &cfg.loadings;
        let (alpha, beta, smb, wml) = if is_stablecoin {
            (0.0, 0.0, 0.0, 0.0)
        } else {
            (
                l.alpha_sd * normal(&mut rng),
                l.beta_mean + l.beta_sd * normal(&mut rng),
                l.smb_mean + l.smb_sd * normal(&mut rng),
                l.wml_mean + l.wml_sd * normal(&mut rng),
            )
        };
        let idio_sigma = cfg.idio_sigma.0 + (cfg.idio_sigma.1 - cfg.idio_sigma.0) * rng.random::<f64>();
        let m = &cfg.mcap_process;
        let initial_cap = if is_stablecoin { 1e9 } else { (m.log_cap_mean + m.log_cap_sd * normal(&mut rng)).exp() };
        let mut price = if is_stablecoin { 1.0 } else { 10f64.powf(2.0 * rng.random::<f64>()) };
        let supply = initial_cap / price;
        let turnover = m.turnover * (0.5 + rng.random::<f64>());

        // month-end follower counts, including the month before the start
        let fp = &cfg.follower_process;
        let first_month = Month::of(cfg.start_date);
        let last_month = Month::of(cfg.end_date());
        let mut month_end: BTreeMap<Month, u64> = BTreeMap::new();
        let mut f = fp.initial_min + (fp.initial_max - fp.initial_min) * rng.random::<f64>();
        month_end.insert(first_month.pred(), f.round().max(0.0) as u64);
        let mut m_iter = first_month;
        while m_iter <= last_month {
            f = (f * (1.0 + fp.drift) + fp.noise_sd * normal(&mut rng)).round().max(0.0);
            month_end.insert(m_iter, f as u64);
            m_iter = m_iter.succ();
        }
        let delta = |m: Month| -> Option<f64> {
            // observable only from the second sample month on
            (m > first_month).then(|| month_end[&m] as f64 - month_end[&m.pred()] as f64)
        };

        let mut month_rows: Vec<CoinDay> = Vec::new();
        let mut month_flows: Vec<(f64, f64)> = Vec::new();
        let mut prev_month_rows: Vec<CoinDay> = Vec::new();
        let mut prev_flows: Vec<(f64, f64)> = Vec::new();
        let mut current = first_month;
        let mut sigma = idio_sigma;
        for (i, date) in dates.iter().enumerate() {
            if Month::of(*date) != current || i == 0 {
                if i > 0 {
                    prev_month_rows = std::mem::take(&mut month_rows);
                    prev_flows = std::mem::take(&mut month_flows);
                }
                current = Month::of(*date);
                let t = &cfg.panel_truth;
                let lag = current.pred();
                let controls = t.b1 * delta(lag).unwrap_or(0.0)
                    + t.gamma_size * size_char(&prev_month_rows).unwrap_or(0.0)
                    + t.gamma_mom * mom_char(&prev_month_rows).unwrap_or(0.0)
                    + t.gamma_volume * volume_char(&prev_month_rows).unwrap_or(0.0)
                    + t.gamma_amihud * amihud_char(prev_flows.iter().copied()).unwrap_or(0.0);
                sigma = if is_stablecoin {
                    0.0005
                } else {
                    (idio_sigma + controls).max(cfg.sigma_floor.min(idio_sigma))
                };
            }
            let mut ret = 0.0;
            if i > 0 {
                let fd = &factor_days[i];
                let excess = if is_stablecoin {
                    sigma * normal(&mut rng)
                } else {
                    alpha + beta * fd.mrkt + smb * fd.smb + wml * fd.wml + sigma * normal(&mut rng)
                };
                ret = (fd.rf_daily + excess).max(-0.95);
                price *= 1.0 + ret;
            }
            let cap = price * supply;
            let noise = m.turnover_noise;
            let volume = cap * turnover * (noise * normal(&mut rng) - 0.5 * noise * noise).exp();
            let row = CoinDay {
                coin_id: coin_id.clone(),
                date: *date,
                close_usd: price,
                volume_usd: volume,
                market_cap_usd: cap,
            };
            if i > 0 {
                month_flows.push((ret, volume));
            }
            month_rows.push(row.clone());
            prices.push(row);

            let is_month_end = date.succ_opt().is_none_or(|n| n.month() != date.month()) || i + 1 == dates.len();
            if date.day() == 15 || is_month_end {
                let now = month_end[&current] as f64;
                let value = if is_month_end {
                    now
                } else {
                    (0.5 * (now + month_end[&current.pred()] as f64)).round()
                };
                followers.push(FollowerObs {
                    coin_id: coin_id.clone(),
                    date: *date,
                    followers: value as u64,
                });
            }
        }

        meta.push(CoinMeta {
            coin_id: coin_id.clone(),
            category,
            subreddit: subreddit.clone(),
            is_stablecoin,
        });
        coins.push(CoinTruth {
            coin_id,
            alpha,
            beta,
            smb,
            wml,
            idio_sigma,
            category,
            subreddit,
            is_stablecoin,
        });
    }

    Ok(SynthData {
        prices,
        meta,
        followers,
        riskfree,
        factors: FactorTable::from_days(factor_days),
        truth: Truth {
            config: cfg.clone(),
            coins,
        },
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), SynthError> {
    fs::write(path, contents).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl SynthData {
    /// Write `prices.csv`, `meta.csv`, `followers.csv`, `riskfree.csv`,
    /// `truth.json` and `factors_truth.csv` into `dir`. Floats use the
    /// shortest representation that round-trips.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        self.write_files(&dir.join("prices.csv"), &dir.join("meta.csv"), &dir.join("followers.csv"), &dir.join("riskfree.csv"), dir)
    }

    /// Write the four input files to the given paths and the sidecar files
    /// into `sidecar_dir`.
    pub fn write_files(&self, prices: &Path, meta: &Path, followers: &Path, riskfree: &Path, sidecar_dir: &Path) -> Result<(), SynthError> {
        for p in [prices, meta, followers, riskfree, &sidecar_dir.join("truth.json")] {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|source| SynthError::Io {
                    path: parent.display().to_string(),
                    source,
                })?;
            }
        }
        let mut s = String::from("date,coin_id,close_usd,volume_usd,market_cap_usd\n");
        for p in &self.prices {
            s.push_str(&format!("{},{},{},{},{}\n", p.date, p.coin_id, p.close_usd, p.volume_usd, p.market_cap_usd));
        }
        write_file(prices, &s)?;

        let mut s = String::from("coin_id,category,subreddit,is_stablecoin\n");
        for m in &self.meta {
            let cat = match m.category {
                Category::Coin => "coin",
                Category::Token => "token",
            };
            s.push_str(&format!("{},{},{},{}\n", m.coin_id, cat, m.subreddit.as_deref().unwrap_or(""), m.is_stablecoin));
        }
        write_file(meta, &s)?;

        let mut s = String::from("date,coin_id,followers\n");
        for f in &self.followers {
            s.push_str(&format!("{},{},{}\n", f.date, f.coin_id, f.followers));
        }
        write_file(followers, &s)?;

        let mut s = String::from("date,annual_rate\n");
        for (d, r) in &self.riskfree {
            s.push_str(&format!("{d},{r}\n"));
        }
        write_file(riskfree, &s)?;

        let mut s = String::from("date,mrkt,smb,wml,rf_daily\n");
        for f in self.factors.days() {
            s.push_str(&format!("{},{},{},{},{}\n", f.date, f.mrkt, f.smb, f.wml, f.rf_daily));
        }
        write_file(&sidecar_dir.join("factors_truth.csv"), &s)?;

        let json = serde_json::to_string_pretty(&self.truth).expect("truth serializes");
        write_file(&sidecar_dir.join("truth.json"), &(json + "\n"))
    }
}

// ---------------------------------------------------------------------------
// panel-level generator and brute-force fixed-effects oracle

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FePanelConfig {
    pub seed: u64,
    pub n_coins: usize,
    pub n_months: usize,
    pub b0: f64,
    pub b1: f64,
    /// Slopes of additional controls `x1, x2, ...`.
    pub gammas: Vec<f64>,
    pub noise_sd: f64,
    pub coin_effect_sd: f64,
    pub month_effect_sd: f64,
    /// Fraction of rows removed at random to unbalance the panel.
    pub drop_fraction: f64,
}

impl Default for FePanelConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_coins: 50,
            n_months: 60,
            b0: 0.05,
            b1: 0.5,
            gammas: vec![-0.3, 0.2],
            noise_sd: 1.0,
            coin_effect_sd: 1.0,
            month_effect_sd: 0.5,
            drop_fraction: 0.0,
        }
    }
}

/// Panel with `ivol = b0 + b1 d_investor_base + sum gamma_k x_k + a_i + d_t + e`.
///
/// `d_investor_base` is correlated with the coin effect so that pooled OLS
/// would be biased; `category` is a coin-constant dummy. Columns: `ivol`,
/// `d_investor_base`, `x1..`, `category`.
pub fn fe_panel(cfg: &FePanelConfig) -> PanelFrame {
    let mut rng = stream(cfg.seed, 0);
    let coin_fx: Vec<f64> = (0..cfg.n_coins).map(|_| cfg.coin_effect_sd * normal(&mut rng)).collect();
    let month_fx: Vec<f64> = (0..cfg.n_months).map(|_| cfg.month_effect_sd * normal(&mut rng)).collect();
    let category: Vec<f64> = (0..cfg.n_coins).map(|_| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 }).collect();

    let (mut entity, mut period) = (Vec::new(), Vec::new());
    let mut y = Vec::new();
    let mut dib = Vec::new();
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); cfg.gammas.len()];
    let mut cat = Vec::new();
    for i in 0..cfg.n_coins {
        for t in 0..cfg.n_months {
            let d = 0.5 * coin_fx[i] + 0.3 * month_fx[t] + normal(&mut rng);
            let controls: Vec<f64> = cfg.gammas.iter().map(|_| 0.4 * d + normal(&mut rng)).collect();
            let e = cfg.noise_sd * normal(&mut rng);
            if rng.random::<f64>() < cfg.drop_fraction {
                continue;
            }
            entity.push(format!("coin{i:03}"));
            period.push(format!("m{t:03}"));
            y.push(cfg.b0 + cfg.b1 * d + cfg.gammas.iter().zip(&controls).map(|(g, x)| g * x).sum::<f64>() + coin_fx[i] + month_fx[t] + e);
            dib.push(d);
            for (k, x) in controls.into_iter().enumerate() {
                xs[k].push(x);
            }
            cat.push(category[i]);
        }
    }
    let mut frame = PanelFrame::new(entity, period).with_column("ivol", y).with_column("d_investor_base", dib).with_column("category", cat);
    for (k, x) in xs.into_iter().enumerate() {
        frame.insert(&format!("x{}", k + 1), x);
    }
    frame
}

/// Largest panel the dummy-variable oracle accepts.
pub const ORACLE_MAX_ROWS: usize = 50_000;

/// Fixed-effects estimate by explicit dummy expansion: an intercept plus
/// coin and month dummies (first level of each dropped) plus the
/// regressors, solved by plain OLS. Regressors spanned by the dummies are
/// reported as absorbed.
pub fn oracle_fe(panel: &PanelFrame, spec: &FeSpec) -> Result<FeFit, FeError> {
    let sample = prepare_sample(panel, spec)?;
    let n = sample.y.len();
    if n > ORACLE_MAX_ROWS {
        return Err(FeError::InvalidSpec(format!("{n} rows exceed the oracle limit")));
    }
    let n_coin_dummies = if spec.fe_coin { sample.n_coins - 1 } else { 0 };
    let n_month_dummies = if spec.fe_month { sample.n_months - 1 } else { 0 };
    let mut dummies = DMatrix::from_fn(n, n_coin_dummies + n_month_dummies, |i, j| {
        let hit = if j < n_coin_dummies {
            sample.coin[i] == j + 1
        } else {
            sample.month[i] == j - n_coin_dummies + 1
        };
        if hit {
            1.0
        } else {
            0.0
        }
    });
    let y = DVector::from_vec(sample.y.clone());
    // disconnected coin-month blocks make some dummies redundant
    while let Err(OlsError::RankDeficient(j)) = ols(&dummies, &y, true) {
        dummies = dummies.remove_column(j);
    }
    let n_dummies = dummies.ncols();
    let basis = dummies.clone().insert_column(0, 1.0).qr().q();
    let residual = |v: &DVector<f64>| v - &basis * (basis.transpose() * v);

    // absorbed: spanned by the intercept and dummies alone
    let mut kept = Vec::new();
    let mut absorbed = Vec::new();
    for (r, name) in spec.regressors.iter().enumerate() {
        let scale = centered(&sample.x[r]);
        if scale == 0.0 || residual(&DVector::from_column_slice(&sample.x[r])).norm() <= 1e-9 * scale {
            absorbed.push(name.clone());
        } else {
            kept.push(r);
        }
    }
    if kept.is_empty() {
        return Err(FeError::AllAbsorbed);
    }
    let mut x = DMatrix::zeros(n, n_dummies + kept.len());
    x.columns_mut(0, n_dummies).copy_from(&dummies);
    for (j, &r) in kept.iter().enumerate() {
        x.set_column(n_dummies + j, &DVector::from_column_slice(&sample.x[r]));
    }
    let fit = match ols(&x, &y, true) {
        Ok(fit) => (fit, x),
        Err(OlsError::RankDeficient(j)) if j >= n_dummies => {
            return Err(FeError::RankDeficient(spec.regressors[kept[j - n_dummies]].clone()));
        }
        Err(OlsError::Underdetermined { .. }) => return Err(FeError::NoDegreesOfFreedom),
        Err(e) => return Err(e.into()),
    };
    let (fit, x) = fit;
    let total_params = fit.k;
    let dof = n - total_params;
    let offset = 1 + n_dummies;

    let variances: Vec<f64> = match spec.se_type {
        SeType::Homoskedastic => (0..kept.len()).map(|j| fit.sigma2() * fit.xtx_inv[(offset + j, offset + j)]).collect(),
        SeType::ClusterByCoin => {
            let full = x.insert_column(0, 1.0);
            let scores = crate::econometrics::cluster_scores(&full, &fit.residuals, &sample.coin, sample.n_coins);
            let v = crate::econometrics::sandwich(&fit.xtx_inv, &scores, sample.n_coins, n, total_params);
            (0..kept.len()).map(|j| v[(offset + j, offset + j)]).collect()
        }
    };

    // within R2: residual variation relative to the dummies-only fit
    let tss_within = residual(&y).norm_squared();
    let within_r2 = if tss_within > 0.0 { (1.0 - fit.rss / tss_within).clamp(0.0, 1.0) } else { 0.0 };

    Ok(FeFit {
        dependent: spec.dependent.clone(),
        coefficients: kept
            .iter()
            .enumerate()
            .map(|(j, &r)| Coefficient::new(&spec.regressors[r], fit.coefficients[offset + j], variances[j].sqrt()))
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
        sweeps: 0,
    })
}

fn centered(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>().sqrt()
}

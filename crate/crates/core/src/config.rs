//! Pipeline configuration, read from a single JSON document.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::characteristics::CharConfig;
use crate::econometrics::{SeType, VIF_THRESHOLD};
use crate::factors::FactorConfig;
use crate::riskmodel::RiskConfig;
use crate::synth::SynthConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputPaths {
    pub prices: PathBuf,
    pub meta: PathBuf,
    pub followers: PathBuf,
    pub riskfree: PathBuf,
}

impl Default for InputPaths {
    fn default() -> Self {
        Self {
            prices: "prices.csv".into(),
            meta: "meta.csv".into(),
            followers: "followers.csv".into(),
            riskfree: "riskfree.csv".into(),
        }
    }
}

impl InputPaths {
    /// Directory holding the price file; `synth` writes all inputs here.
    pub fn data_dir(&self) -> PathBuf {
        self.prices.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    /// Minimum market cap in USD for the daily universe.
    pub mcap_floor: f64,
    /// Years of eligible market-cap history required for the regression sample.
    pub min_years: u32,
    /// Calendar gap that breaks the return chain.
    pub max_gap_days: i64,
    pub factors: FactorConfig,
    pub risk: RiskConfig,
    pub characteristics: CharConfig,
    pub se_type: SeType,
    pub fe_coin: bool,
    pub fe_month: bool,
    pub vif_threshold: f64,
    pub output_dir: PathBuf,
    /// Worker threads; `None` lets the runtime decide.
    pub threads: Option<usize>,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: InputPaths::default(),
            mcap_floor: 1_000_000.0,
            min_years: 3,
            max_gap_days: 7,
            factors: FactorConfig::default(),
            risk: RiskConfig::default(),
            characteristics: CharConfig::default(),
            se_type: SeType::ClusterByCoin,
            fe_coin: true,
            fe_month: true,
            vif_threshold: VIF_THRESHOLD,
            output_dir: "out".into(),
            threads: None,
            synth: SynthConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Parse a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.inputs.prices = resolve(base, &cfg.inputs.prices);
        cfg.inputs.meta = resolve(base, &cfg.inputs.meta);
        cfg.inputs.followers = resolve(base, &cfg.inputs.followers);
        cfg.inputs.riskfree = resolve(base, &cfg.inputs.riskfree);
        cfg.output_dir = resolve(base, &cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.mcap_floor >= 0.0) {
            return bad(format!("mcap_floor must be non-negative, got {}", self.mcap_floor));
        }
        if self.max_gap_days < 1 {
            return bad("max_gap_days must be at least 1".into());
        }
        if self.risk.min_obs < 5 {
            return bad("risk.min_obs must be at least 5".into());
        }
        if self.factors.min_coins < 2 {
            return bad("factors.min_coins must be at least 2".into());
        }
        for (name, (lo, hi)) in [("size_breakpoints", self.factors.size_breakpoints), ("momentum_breakpoints", self.factors.momentum_breakpoints)] {
            if !(0.0 < lo && lo < hi && hi < 1.0) {
                return bad(format!("factors.{name} must satisfy 0 < lower < upper < 1"));
            }
        }
        if !(self.characteristics.dib_scale > 0.0) {
            return bad("characteristics.dib_scale must be positive".into());
        }
        let quantiles = [self.characteristics.winsorize, self.risk.winsorize_returns];
        if quantiles.into_iter().flatten().any(|(lo, hi)| !(0.0 <= lo && lo < hi && hi <= 1.0)) {
            return bad("winsorization quantiles must satisfy 0 <= lower < upper <= 1".into());
        }
        if !(self.vif_threshold > 1.0) {
            return bad("vif_threshold must exceed 1".into());
        }
        if !self.fe_coin && !self.fe_month {
            return bad("at least one of fe_coin and fe_month must be enabled".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }

    /// Compact JSON used in output header blocks.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"min_years": 2, "inputs": {"prices": "data/p.csv"}}"#).unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.min_years, 2);
        assert_eq!(cfg.mcap_floor, 1_000_000.0);
        assert_eq!(cfg.risk.min_obs, 10);
        assert_eq!(cfg.inputs.prices, dir.path().join("data/p.csv"));
        assert_eq!(cfg.inputs.meta, dir.path().join("meta.csv"));
        assert_eq!(cfg.output_dir, dir.path().join("out"));
    }

    #[test]
    fn rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"mcap_floor": -1}"#).unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(ConfigError::Invalid(_))));
        fs::write(&path, "{not json").unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(ConfigError::Parse { .. })));
        assert!(matches!(PipelineConfig::load(&dir.path().join("missing.json")), Err(ConfigError::Io { .. })));
    }

    #[test]
    fn json_round_trip() {
        let cfg = PipelineConfig::default();
        let back: PipelineConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }
}

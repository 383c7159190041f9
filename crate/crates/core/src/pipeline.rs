//! Stage orchestration for the command-line tool.
//!
//! Every stage recomputes whatever it needs from the inputs in memory, so a
//! stage can run on its own; `all` runs them in order and shares the
//! intermediate results. Only `report` reads earlier output files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::characteristics::{
    assemble_panel, investor_base_changes, CharConfig, DibMode, monthly_characteristics, panel_correlations, summary_stats, CharTable, Panel, PanelError,
};
use crate::config::{ConfigError, PipelineConfig};
use crate::econometrics::{regression_table, two_way_fe, vif, FeFit, FeSpec, SeType, VifReport};
use crate::factors::{build_factors, factor_correlations, FactorBuild};
use crate::ingest::{
    build_regression_sample, build_universe, compute_returns, load_followers, load_meta, load_prices, load_riskfree, FollowerTable,
    IngestError, MetaTable, PriceTable, RateSeries, ReturnTable, Universe,
};
use crate::month::Month;
use crate::output::{fmt_f64, fmt_opt, read_csv, CsvOut, OutputDir};
use crate::riskmodel::{ew_ivol_series, ivol_panel, RiskFit, RiskModel};
use crate::skiplog::{Reason, Skip};
use crate::stats::CorrelationMatrix;
use crate::synth::{generate, SynthError, Truth};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Factors,
    Ivol,
    Chars,
    Panel,
    Vif,
    Report,
    Synth,
    All,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Factors,
        Stage::Ivol,
        Stage::Chars,
        Stage::Panel,
        Stage::Vif,
        Stage::Report,
        Stage::Synth,
        Stage::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Factors => "factors",
            Stage::Ivol => "ivol",
            Stage::Chars => "chars",
            Stage::Panel => "panel",
            Stage::Vif => "vif",
            Stage::Report => "report",
            Stage::Synth => "synth",
            Stage::All => "all",
        }
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("estimation error: {0}")]
    Estimation(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Estimation(_) => 4,
        }
    }
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Data(format!("cannot write {}: {e}", path.display()))
}

/// Nested regressor sets of the panel regression, one per table column.
pub const NESTED_COLUMNS: [&[&str]; 6] = [
    &["d_investor_base"],
    &["d_investor_base", "size"],
    &["d_investor_base", "size", "mom"],
    &["d_investor_base", "size", "mom", "volume"],
    &["d_investor_base", "size", "mom", "volume", "amihud"],
    &["d_investor_base", "size", "mom", "volume", "amihud", "category"],
];

/// Regressor sets screened for multicollinearity, with their output files.
pub const VIF_SETS: [(&str, &[&str]); 3] = [
    ("vif.csv", &["d_investor_base", "size", "mom", "volume", "amihud", "category"]),
    ("vif_no_volume.csv", &["d_investor_base", "size", "mom", "amihud", "category"]),
    ("vif_no_size.csv", &["d_investor_base", "mom", "volume", "amihud", "category"]),
];

/// Files `report` reads.
pub const REPORT_INPUTS: [&str; 5] = ["factors.csv", "ivol.csv", "panel.csv", "results.csv", "vif.csv"];

fn panel_file(model: RiskModel) -> &'static str {
    match model {
        RiskModel::ThreeFactor => "panel.csv",
        RiskModel::Capm => "panel_capm.csv",
    }
}

pub struct Ingested {
    pub prices: PriceTable,
    pub meta: MetaTable,
    pub followers: FollowerTable,
    pub rf: RateSeries,
    pub returns: ReturnTable,
    pub universe: Universe,
    pub sample: BTreeSet<String>,
    pub skips: Vec<Skip>,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    out: OutputDir,
    data: Option<Ingested>,
    factors: Option<FactorBuild>,
    fits: Option<BTreeMap<RiskModel, Vec<RiskFit>>>,
    chars: Option<(CharTable, BTreeMap<(String, Month), f64>)>,
    panels: Option<BTreeMap<RiskModel, Panel>>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let header = vec![
            ("generator".to_string(), format!("cryptofactor {}", env!("CARGO_PKG_VERSION"))),
            ("config".to_string(), cfg.to_json()),
            ("dib_units".to_string(), cfg.characteristics.dib_units()),
        ];
        let out = OutputDir::new(&cfg.output_dir, header).map_err(|e| PipelineError::Config(format!("cannot create output directory {}: {e}", cfg.output_dir.display())))?;
        Ok(Self {
            cfg,
            out,
            data: None,
            factors: None,
            fits: None,
            chars: None,
            panels: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn run(&mut self, stage: Stage) -> Result<(), PipelineError> {
        log::info!("stage {}", stage.name());
        match stage {
            Stage::Ingest => self.stage_ingest(),
            Stage::Factors => self.stage_factors(),
            Stage::Ivol => self.stage_ivol(),
            Stage::Chars => self.stage_chars(),
            Stage::Panel => self.stage_panel(),
            Stage::Vif => self.stage_vif(),
            Stage::Report => self.stage_report(),
            Stage::Synth => self.stage_synth(),
            Stage::All => {
                for s in [Stage::Ingest, Stage::Factors, Stage::Ivol, Stage::Chars, Stage::Panel, Stage::Vif, Stage::Report] {
                    self.run(s)?;
                }
                Ok(())
            }
        }
    }

    fn write(&self, name: &str, csv: &CsvOut) -> Result<(), PipelineError> {
        let path = self.out.path(name);
        self.out.write(name, csv).map_err(io_err(&path))
    }

    fn write_log(&self, stage: &str, skips: &[Skip]) -> Result<(), PipelineError> {
        let path = self.out.path(&format!("{stage}_log.csv"));
        self.out.write_log(stage, skips).map_err(io_err(&path))
    }

    // ----- computations shared between stages

    fn ingested(&mut self) -> Result<&Ingested, PipelineError> {
        if self.data.is_none() {
            let inputs = &self.cfg.inputs;
            let prices = load_prices(&inputs.prices)?;
            let meta = load_meta(&inputs.meta)?;
            let followers = load_followers(&inputs.followers)?;
            let rf_raw = load_riskfree(&inputs.riskfree)?;
            let (start, end) = prices.span().ok_or_else(|| PipelineError::Data(format!("{}: no price rows", inputs.prices.display())))?;
            let rf = rf_raw
                .forward_fill(start, end)
                .map_err(|e| PipelineError::Data(format!("{}: {e}", inputs.riskfree.display())))?;
            let (returns, mut skips) = compute_returns(&prices, &rf, self.cfg.max_gap_days);
            let (universe, uskips) = build_universe(&prices, &meta, self.cfg.mcap_floor);
            let (sample, sskips) = build_regression_sample(&universe, &meta, self.cfg.min_years);
            skips.extend(uskips);
            skips.extend(sskips);
            log::info!("{} coins, {} returns, {} in regression sample", prices.n_coins(), returns.len(), sample.len());
            self.data = Some(Ingested {
                prices,
                meta,
                followers,
                rf,
                returns,
                universe,
                sample,
                skips,
            });
        }
        Ok(self.data.as_ref().expect("just set"))
    }

    fn factor_build(&mut self) -> Result<&FactorBuild, PipelineError> {
        if self.factors.is_none() {
            let cfg = self.cfg.factors.clone();
            let d = self.ingested()?;
            let build = build_factors(&d.returns, &d.prices, &d.universe, &d.rf, &cfg);
            if build.table.is_empty() {
                return Err(PipelineError::Estimation("no day has all three factors defined".into()));
            }
            log::info!("{} factor days", build.table.len());
            self.factors = Some(build);
        }
        Ok(self.factors.as_ref().expect("just set"))
    }

    fn risk_fits(&mut self) -> Result<Vec<Skip>, PipelineError> {
        let mut skips = Vec::new();
        if self.fits.is_none() {
            self.factor_build()?;
            let d = self.data.as_ref().expect("ingested");
            let table = &self.factors.as_ref().expect("factors").table;
            let mut fits = BTreeMap::new();
            for model in RiskModel::ALL {
                let (f, s) = ivol_panel(&d.returns, table, Some(&d.sample), model, &self.cfg.risk);
                if f.is_empty() {
                    return Err(PipelineError::Estimation(format!("no coin-month could be fitted under {}", model.label())));
                }
                fits.insert(model, f);
                skips.extend(s);
            }
            self.fits = Some(fits);
        }
        Ok(skips)
    }

    fn characteristics(&mut self) -> Result<Vec<Skip>, PipelineError> {
        let mut skips = Vec::new();
        if self.chars.is_none() {
            let cc = self.cfg.characteristics.clone();
            let d = self.ingested()?;
            let chars = monthly_characteristics(&d.prices, &d.returns, Some(&d.sample));
            let dib = investor_base_changes(&d.followers, &cc);
            for coin in &d.sample {
                if d.followers.series(coin).is_empty() {
                    skips.push(Skip::new(Reason::MissingField, coin.clone(), "followers"));
                }
            }
            self.chars = Some((chars, dib));
        }
        Ok(skips)
    }

    fn panels(&mut self) -> Result<Vec<Skip>, PipelineError> {
        let mut skips = Vec::new();
        if self.panels.is_none() {
            self.risk_fits()?;
            self.characteristics()?;
            let d = self.data.as_ref().expect("ingested");
            let fits = self.fits.as_ref().expect("fits");
            let (chars, dib) = self.chars.as_ref().expect("chars");
            let mut panels = BTreeMap::new();
            for model in RiskModel::ALL {
                let (mut panel, s) = assemble_panel(&fits[&model], chars, dib, &d.meta).map_err(|e| match e {
                    PanelError::EmptyPanel => PipelineError::Estimation(format!("{} panel: {e}", model.label())),
                })?;
                if let Some((lo, hi)) = self.cfg.characteristics.winsorize {
                    panel.winsorize(lo, hi);
                }
                skips.extend(s.into_iter().map(|mut k| {
                    k.key = format!("{}/{}", k.key, model.label());
                    k
                }));
                panels.insert(model, panel);
            }
            self.panels = Some(panels);
        }
        Ok(skips)
    }

    // ----- stages

    fn stage_ingest(&mut self) -> Result<(), PipelineError> {
        self.ingested()?;
        let d = self.data.as_ref().expect("ingested");

        let mut csv = self.out.csv("ingest", &["coin_id", "date", "prev_date", "ret", "excess_ret"]);
        for r in d.returns.iter() {
            csv.row(&[r.coin_id.clone(), r.date.to_string(), r.prev_date.to_string(), fmt_f64(r.ret), fmt_f64(r.excess_ret)]);
        }
        self.write("returns.csv", &csv)?;

        let mut csv = self.out.csv("ingest", &["date", "coin_id"]);
        for (date, coins) in d.universe.days() {
            for c in coins {
                csv.row(&[date.to_string(), c.clone()]);
            }
        }
        self.write("universe.csv", &csv)?;

        let eligible = d.universe.eligible_days();
        let mut csv = self.out.csv("ingest", &["coin_id", "eligible_days", "subreddit"]);
        for c in &d.sample {
            let sub = d.meta.get(c).and_then(|m| m.subreddit.clone()).unwrap_or_default();
            csv.row(&[c.clone(), eligible.get(c.as_str()).copied().unwrap_or(0).to_string(), sub]);
        }
        self.write("sample.csv", &csv)?;
        self.write_log("ingest", &d.skips)
    }

    fn stage_factors(&mut self) -> Result<(), PipelineError> {
        self.factor_build()?;
        let build = self.factors.as_ref().expect("factors");

        let mut csv = self.out.csv("factors", &["date", "mrkt", "smb", "wml", "rf_daily"]);
        for f in build.table.days() {
            csv.row(&[f.date.to_string(), fmt_f64(f.mrkt), fmt_f64(f.smb), fmt_f64(f.wml), fmt_f64(f.rf_daily)]);
        }
        self.write("factors.csv", &csv)?;

        let mut csv = self.out.csv("factors", &["week_start", "coin_id", "formation_cap", "size_group", "size_half", "momentum", "momentum_group"]);
        for s in &build.sorts {
            for (coin, cap) in &s.formation_caps {
                let group = s.size_groups.get(coin).map(|g| format!("{g:?}").to_lowercase()).unwrap_or_default();
                let (half, score, mg) = match &s.momentum {
                    Some(m) => (
                        m.halves.get(coin).map(|h| format!("{h:?}").to_lowercase()).unwrap_or_default(),
                        fmt_opt(m.scores.get(coin).copied()),
                        m.groups.get(coin).map(|g| format!("{g:?}").to_lowercase()).unwrap_or_default(),
                    ),
                    None => Default::default(),
                };
                csv.row(&[s.week_start.to_string(), coin.clone(), fmt_f64(*cap), group, half, score, mg]);
            }
        }
        self.write("sorts.csv", &csv)?;

        let mut skips = build.skips.clone();
        match factor_correlations(&build.table) {
            Ok(m) => {
                let csv = self.correlation_csv("factors", &m);
                self.write("factor_correlations.csv", &csv)?;
            }
            Err(e) => skips.push(Skip::new(Reason::TooFewObservations, "factor_correlations", e.to_string())),
        }
        self.write_log("factors", &skips)
    }

    fn correlation_csv(&self, stage: &str, m: &CorrelationMatrix) -> CsvOut {
        let mut cols = vec!["variable"];
        cols.extend(m.names.iter().map(String::as_str));
        let mut csv = self.out.csv(stage, &cols);
        for (name, row) in m.names.iter().zip(&m.values) {
            let mut fields = vec![name.clone()];
            fields.extend(row.iter().map(|v| fmt_opt(*v)));
            csv.row(&fields);
        }
        csv
    }

    fn stage_ivol(&mut self) -> Result<(), PipelineError> {
        let skips = self.risk_fits()?;
        let fits = self.fits.as_ref().expect("fits");
        let cols = [
            "coin_id",
            "month",
            "model",
            "alpha",
            "beta_mrkt",
            "beta_smb",
            "beta_wml",
            "se_beta_mrkt",
            "n_obs",
            "r2",
            "rss",
            "ivol",
        ];
        let mut csv = self.out.csv("ivol", &cols);
        for (model, list) in fits {
            for f in list {
                csv.row(&[
                    f.coin_id.clone(),
                    f.month.to_string(),
                    model.label().to_string(),
                    fmt_f64(f.alpha),
                    fmt_f64(f.betas.mrkt),
                    fmt_opt(f.betas.smb),
                    fmt_opt(f.betas.wml),
                    fmt_f64(f.standard_errors[1]),
                    f.n_obs.to_string(),
                    fmt_f64(f.r2),
                    fmt_f64(f.rss),
                    fmt_f64(f.ivol),
                ]);
            }
        }
        let series: BTreeMap<RiskModel, BTreeMap<Month, f64>> = fits.iter().map(|(m, f)| (*m, ew_ivol_series(f).into_iter().collect())).collect();
        let mut ew = self.out.csv("ivol", &["month", "capm_pct", "three_factor_pct"]);
        let months: BTreeSet<Month> = series.values().flat_map(|s| s.keys().copied()).collect();
        for m in months {
            ew.row(&[
                m.to_string(),
                fmt_opt(series[&RiskModel::Capm].get(&m).copied()),
                fmt_opt(series[&RiskModel::ThreeFactor].get(&m).copied()),
            ]);
        }
        self.write("ivol.csv", &csv)?;
        self.write("ivol_ew.csv", &ew)?;
        self.write_log("ivol", &skips)
    }

    fn stage_chars(&mut self) -> Result<(), PipelineError> {
        let skips = self.characteristics()?;
        let (chars, dib) = self.chars.as_ref().expect("chars");
        let mut csv = self.out.csv("chars", &["coin_id", "month", "size", "mom", "volume", "amihud", "d_investor_base"]);
        for ((coin, month), c) in chars {
            csv.row(&[
                coin.clone(),
                month.to_string(),
                fmt_opt(c.size),
                fmt_opt(c.mom),
                fmt_opt(c.volume),
                fmt_opt(c.amihud),
                fmt_opt(dib.get(&(coin.clone(), *month)).copied()),
            ]);
        }
        self.write("characteristics.csv", &csv)?;
        self.write_log("chars", &skips)
    }

    fn stage_panel(&mut self) -> Result<(), PipelineError> {
        let mut skips = self.panels()?;
        let panels = self.panels.clone().expect("panels");
        let mut results = self.out.csv(
            "panel",
            &[
                "model", "column", "se_type", "regressor", "status", "beta", "se", "t", "p", "n_rows", "n_coins", "n_months", "within_r2", "dof",
            ],
        );
        let mut text = String::new();
        for (model, panel) in panels.iter().rev() {
            let mut csv = self.out.csv("panel", &["coin_id", "month", "ivol", "d_investor_base", "size", "mom", "volume", "amihud", "category"]);
            for r in &panel.rows {
                csv.row(&[
                    r.coin_id.clone(),
                    r.month.to_string(),
                    fmt_f64(r.ivol),
                    fmt_f64(r.d_investor_base),
                    fmt_f64(r.size),
                    fmt_f64(r.mom),
                    fmt_f64(r.volume),
                    fmt_f64(r.amihud),
                    fmt_f64(r.category),
                ]);
            }
            self.write(panel_file(*model), &csv)?;

            let frame = panel.to_frame();
            let mut table_fits = Vec::new();
            for se in [SeType::Homoskedastic, SeType::ClusterByCoin] {
                for (c, regs) in NESTED_COLUMNS.iter().enumerate() {
                    let spec = FeSpec::new("ivol", regs).with_se(se).with_effects(self.cfg.fe_coin, self.cfg.fe_month);
                    let fit = two_way_fe(&frame, &spec).map_err(|e| PipelineError::Estimation(format!("{} column ({}): {e}", model.label(), c + 1)))?;
                    if se == SeType::Homoskedastic && fit.dropped_singletons > 0 {
                        skips.push(Skip::new(
                            Reason::SingletonGroup,
                            format!("{}/({})", model.label(), c + 1),
                            format!("{} rows", fit.dropped_singletons),
                        ));
                    }
                    write_result_rows(&mut results, model.label(), c + 1, regs, &fit);
                    if se == self.cfg.se_type {
                        table_fits.push(fit);
                    }
                }
            }
            let title = format!("Dependent variable: IVOL from the {} model", model_title(*model));
            text.push_str(&regression_table(&title, &table_fits));
            text.push('\n');
        }
        self.write("results.csv", &results)?;
        let path = self.out.path("results.txt");
        self.out.write_text("results.txt", &text).map_err(io_err(&path))?;

        let main = &panels[&RiskModel::ThreeFactor];
        let mut csv = self.out.csv("panel", &["variable", "n", "mean", "sd", "min", "p25", "median", "p75", "max"]);
        for (name, s) in summary_stats(main) {
            csv.row(&[
                name,
                s.n.to_string(),
                fmt_f64(s.mean),
                fmt_f64(s.sd),
                fmt_f64(s.min),
                fmt_f64(s.p25),
                fmt_f64(s.median),
                fmt_f64(s.p75),
                fmt_f64(s.max),
            ]);
        }
        self.write("summary.csv", &csv)?;
        let csv = self.correlation_csv("panel", &panel_correlations(main));
        self.write("panel_correlations.csv", &csv)?;
        self.write_log("panel", &skips)
    }

    fn stage_vif(&mut self) -> Result<(), PipelineError> {
        self.panels()?;
        let frame = self.panels.as_ref().expect("panels")[&RiskModel::ThreeFactor].to_frame();
        let mut skips = Vec::new();
        for (file, regs) in VIF_SETS {
            let report = vif(&frame, regs, self.cfg.vif_threshold).map_err(|e| PipelineError::Estimation(format!("{file}: {e}")))?;
            for e in report.entries.iter().filter(|e| e.flagged) {
                log::warn!("{file}: {} has VIF {}", e.regressor, fmt_f64(e.vif));
            }
            let csv = self.vif_csv(&report);
            self.write(file, &csv)?;
            skips.extend(report.entries.iter().filter(|e| e.vif.is_infinite()).map(|e| Skip::new(Reason::SingularDesign, format!("{file}/{}", e.regressor), "exact collinearity")));
        }
        self.write_log("vif", &skips)
    }

    fn vif_csv(&self, report: &VifReport) -> CsvOut {
        let mut csv = self.out.csv("vif", &["regressor", "vif", "r2_aux", "flagged"]);
        for e in &report.entries {
            csv.row(&[e.regressor.clone(), fmt_f64(e.vif), fmt_f64(e.r2_aux), e.flagged.to_string()]);
        }
        csv
    }

    fn stage_synth(&mut self) -> Result<(), PipelineError> {
        let data = generate(&self.cfg.synth).map_err(|e| match e {
            SynthError::InvalidConfig(m) => PipelineError::Config(m),
            other => PipelineError::Data(other.to_string()),
        })?;
        let inputs = &self.cfg.inputs;
        data.write_files(&inputs.prices, &inputs.meta, &inputs.followers, &inputs.riskfree, &inputs.data_dir())
            .map_err(|e| PipelineError::Data(e.to_string()))?;
        log::info!("wrote synthetic inputs for {} coins to {}", self.cfg.synth.n_coins, inputs.data_dir().display());
        Ok(())
    }

    fn stage_report(&mut self) -> Result<(), PipelineError> {
        let missing: Vec<&str> = REPORT_INPUTS.iter().copied().filter(|f| !self.out.path(f).is_file()).collect();
        if !missing.is_empty() {
            return Err(PipelineError::Config(format!(
                "report needs outputs of earlier stages in {}; missing {}",
                self.out.dir.display(),
                missing.join(", ")
            )));
        }
        let read = |name: &str| -> Result<Table, PipelineError> {
            let path = self.out.path(name);
            let (columns, rows) = read_csv(&path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
            Ok(Table { columns, rows })
        };
        let factors = read("factors.csv")?;
        let ivol = read("ivol.csv")?;
        let panel = read("panel.csv")?;
        let results = read("results.csv")?;
        let vif_table = read("vif.csv")?;
        let se = self.cfg.se_type.label();

        let mut r = String::new();
        let _ = writeln!(r, "cryptofactor report\n");
        let _ = writeln!(r, "Factors");
        let dates = factors.col("date");
        let _ = writeln!(
            r,
            "  days: {} ({} to {})",
            dates.len(),
            dates.first().map(|d| d.as_str()).unwrap_or("-"),
            dates.last().map(|d| d.as_str()).unwrap_or("-")
        );
        for name in ["mrkt", "smb", "wml"] {
            let v = factors.floats(name);
            let s = crate::stats::summarize(&v);
            let _ = writeln!(
                r,
                "  {name:<5} mean {:>10}%  sd {:>10}%",
                s.as_ref().map(|s| fmt_f64(100.0 * s.mean)).unwrap_or_default(),
                s.map(|s| fmt_f64(100.0 * s.sd)).unwrap_or_default()
            );
        }

        let _ = writeln!(r, "\nIdiosyncratic volatility");
        for model in RiskModel::ALL {
            let rows: Vec<f64> = ivol.rows_where("model", model.label()).map(|row| ivol.float(row, "ivol")).collect();
            let _ = writeln!(
                r,
                "  {:<13} coin-months {:>6}  mean daily ivol {}",
                model.label(),
                rows.len(),
                fmt_opt(crate::stats::mean(&rows))
            );
        }

        let coins: BTreeSet<&String> = panel.col("coin_id").into_iter().collect();
        let months: BTreeSet<&String> = panel.col("month").into_iter().collect();
        let _ = writeln!(r, "\nPanel: {} coin-months, {} coins, {} months", panel.rows.len(), coins.len(), months.len());

        let tables = fs::read_to_string(self.out.path("results.txt")).unwrap_or_default();
        let _ = writeln!(r, "\n{tables}");

        let _ = writeln!(r, "Variance inflation factors (threshold {})", fmt_f64(self.cfg.vif_threshold));
        for row in &vif_table.rows {
            let flag = if vif_table.get(row, "flagged") == "true" { "  flagged" } else { "" };
            let _ = writeln!(r, "  {:<16} {:>12}{flag}", vif_table.get(row, "regressor"), vif_table.get(row, "vif"));
        }

        let truth_path = self.cfg.inputs.data_dir().join("truth.json");
        if truth_path.is_file() {
            let text = fs::read_to_string(&truth_path).map_err(|e| PipelineError::Data(format!("{}: {e}", truth_path.display())))?;
            let truth: Truth = serde_json::from_str(&text).map_err(|e| PipelineError::Data(format!("{}: {e}", truth_path.display())))?;
            r.push_str(&truth_section(&truth, &self.cfg.characteristics, &ivol, &results, se));
        }
        let path = self.out.path("report.txt");
        self.out.write_text("report.txt", &r).map_err(io_err(&path))
    }
}

fn model_title(model: RiskModel) -> &'static str {
    match model {
        RiskModel::Capm => "CAPM",
        RiskModel::ThreeFactor => "three-factor",
    }
}

fn write_result_rows(csv: &mut CsvOut, model: &str, column: usize, regs: &[&str], fit: &FeFit) {
    for name in regs {
        let common = [
            fit.n_rows.to_string(),
            fit.n_coins.to_string(),
            fit.n_months.to_string(),
            fmt_f64(fit.within_r2),
            fit.dof.to_string(),
        ];
        let mut row = vec![model.to_string(), column.to_string(), fit.se_type.label().to_string(), name.to_string()];
        match fit.coef(name) {
            Some(c) => row.extend(["estimated".to_string(), fmt_f64(c.beta), fmt_f64(c.se), fmt_f64(c.t), fmt_f64(c.p)]),
            None => row.extend(["absorbed".to_string(), String::new(), String::new(), String::new(), String::new()]),
        }
        row.extend(common);
        csv.row(&row);
    }
}

/// A CSV read back from the output directory.
struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn index(&self, name: &str) -> usize {
        self.columns.iter().position(|c| c == name).unwrap_or(usize::MAX)
    }

    fn get<'a>(&self, row: &'a [String], name: &str) -> &'a str {
        row.get(self.index(name)).map(String::as_str).unwrap_or("")
    }

    fn float(&self, row: &[String], name: &str) -> f64 {
        self.get(row, name).parse().unwrap_or(f64::NAN)
    }

    fn col(&self, name: &str) -> Vec<&String> {
        let j = self.index(name);
        self.rows.iter().filter_map(|r| r.get(j)).collect()
    }

    fn floats(&self, name: &str) -> Vec<f64> {
        self.rows.iter().map(|r| self.float(r, name)).filter(|v| v.is_finite()).collect()
    }

    fn rows_where<'a>(&'a self, name: &'a str, value: &'a str) -> impl Iterator<Item = &'a Vec<String>> + 'a {
        self.rows.iter().filter(move |r| self.get(r, name) == value)
    }
}

fn truth_section(truth: &Truth, chars: &CharConfig, ivol: &Table, results: &Table, se: &str) -> String {
    let mut r = String::new();
    let _ = writeln!(r, "\nTruth versus estimate (synthetic inputs)");
    // the generator works in raw follower differences
    let b1 = match chars.dib_mode {
        DibMode::Raw => Some(truth.config.panel_truth.b1 * chars.dib_scale),
        DibMode::Log => None,
    };
    for model in [RiskModel::ThreeFactor, RiskModel::Capm] {
        for column in [1, NESTED_COLUMNS.len()] {
            let hit = results.rows.iter().find(|row| {
                results.get(row, "model") == model.label()
                    && results.get(row, "column") == column.to_string()
                    && results.get(row, "se_type") == se
                    && results.get(row, "regressor") == "d_investor_base"
            });
            if let Some(row) = hit {
                let _ = writeln!(
                    r,
                    "  b1 {:<13} column ({column}): true {}  estimate {}  se {}",
                    model.label(),
                    b1.map(fmt_f64).unwrap_or_else(|| "n/a (log mode)".into()),
                    results.get(row, "beta"),
                    results.get(row, "se")
                );
            }
        }
    }

    let by_coin: BTreeMap<&str, _> = truth.coins.iter().map(|c| (c.coin_id.as_str(), c)).collect();
    let mut errors = Vec::new();
    let mut within = 0usize;
    for row in ivol.rows_where("model", RiskModel::ThreeFactor.label()) {
        let Some(c) = by_coin.get(ivol.get(row, "coin_id")) else { continue };
        let err = ivol.float(row, "beta_mrkt") - c.beta;
        if err.is_finite() {
            errors.push(err.abs());
            if err.abs() <= 3.0 * ivol.float(row, "se_beta_mrkt") {
                within += 1;
            }
        }
    }
    if !errors.is_empty() {
        errors.sort_by(f64::total_cmp);
        let _ = writeln!(
            r,
            "  market beta (three-factor): {} coin-months, median |error| {}, within 3 se {}%",
            errors.len(),
            fmt_f64(crate::stats::quantile_sorted(&errors, 0.5).unwrap_or(f64::NAN)),
            fmt_f64(100.0 * within as f64 / errors.len() as f64)
        );
    }
    let sigma: Vec<f64> = truth.coins.iter().filter(|c| !c.is_stablecoin).map(|c| c.idio_sigma).collect();
    let est: Vec<f64> = ivol.rows_where("model", RiskModel::ThreeFactor.label()).map(|row| ivol.float(row, "ivol")).collect();
    let _ = writeln!(
        r,
        "  mean baseline sigma {}  mean estimated ivol {}",
        fmt_opt(crate::stats::mean(&sigma)),
        fmt_opt(crate::stats::mean(&est))
    );
    r
}

/// Read and parse a pipeline config, applying command-line overrides.
pub fn load_config(path: &Path, out: Option<PathBuf>, threads: Option<usize>, seed: Option<u64>) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    if threads.is_some() {
        cfg.threads = threads;
    }
    if let Some(seed) = seed {
        cfg.synth.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

//! Monthly coin characteristics, change in investor base, and assembly of
//! the lagged regression panel.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::econometrics::PanelFrame;
use crate::ingest::{CoinDay, FollowerTable, MetaTable, PriceTable, ReturnTable};
use crate::month::Month;
use crate::riskmodel::RiskFit;
use crate::skiplog::{Reason, Skip};
use crate::stats::{self, correlation_matrix, ColumnSummary, CorrelationMatrix};

/// Dollar volume unit of the illiquidity ratio.
pub const AMIHUD_VOLUME_UNIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DibMode {
    /// Follower count difference.
    #[default]
    Raw,
    /// Log ratio of follower counts.
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharConfig {
    pub dib_mode: DibMode,
    /// Divisor applied to the investor-base change (e.g. 1000 for thousands
    /// of followers).
    pub dib_scale: f64,
    /// Quantile clamp applied to the regressor columns of the panel.
    pub winsorize: Option<(f64, f64)>,
}

impl Default for CharConfig {
    fn default() -> Self {
        Self {
            dib_mode: DibMode::Raw,
            dib_scale: 1.0,
            winsorize: None,
        }
    }
}

impl CharConfig {
    /// Human-readable unit of the investor-base column.
    pub fn dib_units(&self) -> String {
        let base = match self.dib_mode {
            DibMode::Raw => "followers (month-end difference)",
            DibMode::Log => "log ratio of month-end followers",
        };
        if self.dib_scale == 1.0 {
            base.to_string()
        } else {
            format!("{base} / {}", self.dib_scale)
        }
    }
}

/// Log of the last observed market cap in the month.
pub fn size_char(days: &[CoinDay]) -> Option<f64> {
    days.last().map(|d| d.market_cap_usd).filter(|c| *c > 0.0).map(f64::ln)
}

/// Last close over first close in the month, minus one.
pub fn mom_char(days: &[CoinDay]) -> Option<f64> {
    match days {
        [first, .., last] => Some(last.close_usd / first.close_usd - 1.0),
        _ => None,
    }
}

/// Mean log dollar volume over days with positive volume.
pub fn volume_char(days: &[CoinDay]) -> Option<f64> {
    let logs: Vec<f64> = days.iter().filter(|d| d.volume_usd > 0.0).map(|d| d.volume_usd.ln()).collect();
    stats::mean(&logs)
}

/// Mean of `|r| / (Q / 10^6)` over days with a return and positive volume.
pub fn amihud_char(days: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let ratios: Vec<f64> = days
        .into_iter()
        .filter(|(_, q)| *q > 0.0)
        .map(|(r, q)| r.abs() / (q / AMIHUD_VOLUME_UNIT))
        .collect();
    stats::mean(&ratios)
}

/// Last follower count observed within the month.
pub fn month_end_followers(series: &[(chrono::NaiveDate, u64)], month: Month) -> Option<u64> {
    let end = series.partition_point(|(d, _)| *d <= month.last_day());
    series[..end].last().filter(|(d, _)| month.contains(*d)).map(|(_, f)| *f)
}

/// Change in month-end followers from the previous month to `month`.
pub fn delta_investor_base(series: &[(chrono::NaiveDate, u64)], month: Month, mode: DibMode) -> Option<f64> {
    let now = month_end_followers(series, month)? as f64;
    let before = month_end_followers(series, month.pred())? as f64;
    match mode {
        DibMode::Raw => Some(now - before),
        DibMode::Log if now > 0.0 && before > 0.0 => Some((now / before).ln()),
        DibMode::Log => None,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MonthChars {
    pub size: Option<f64>,
    pub mom: Option<f64>,
    pub volume: Option<f64>,
    pub amihud: Option<f64>,
}

pub type CharTable = BTreeMap<(String, Month), MonthChars>;

fn group_by_month<T>(items: &[T], date: impl Fn(&T) -> chrono::NaiveDate) -> BTreeMap<Month, &[T]> {
    let mut out = BTreeMap::new();
    let mut start = 0;
    while start < items.len() {
        let m = Month::of(date(&items[start]));
        let len = items[start..].partition_point(|x| Month::of(date(x)) == m);
        out.insert(m, &items[start..start + len]);
        start += len;
    }
    out
}

/// Characteristics for every month in which a coin has a price row.
pub fn monthly_characteristics(prices: &PriceTable, returns: &ReturnTable, coins: Option<&BTreeSet<String>>) -> CharTable {
    let mut out = CharTable::new();
    for (coin, days) in prices.coins().filter(|(c, _)| coins.is_none_or(|s| s.contains(*c))) {
        let rets = group_by_month(returns.series(coin), |r| r.date);
        for (month, in_month) in group_by_month(days, |d| d.date) {
            let amihud = rets.get(&month).and_then(|rs| {
                amihud_char(rs.iter().filter_map(|r| {
                    let i = in_month.binary_search_by_key(&r.date, |d| d.date).ok()?;
                    Some((r.ret, in_month[i].volume_usd))
                }))
            });
            out.insert(
                (coin.to_string(), month),
                MonthChars {
                    size: size_char(in_month),
                    mom: mom_char(in_month),
                    volume: volume_char(in_month),
                    amihud,
                },
            );
        }
    }
    out
}

/// Investor-base change per coin-month wherever both month ends are observed.
pub fn investor_base_changes(followers: &FollowerTable, cfg: &CharConfig) -> BTreeMap<(String, Month), f64> {
    let mut out = BTreeMap::new();
    for (coin, series) in followers.coins() {
        let months: BTreeSet<Month> = series.iter().map(|(d, _)| Month::of(*d)).collect();
        for m in months {
            if let Some(v) = delta_investor_base(series, m, cfg.dib_mode) {
                out.insert((coin.to_string(), m), v / cfg.dib_scale);
            }
        }
    }
    out
}

/// Dependent IVOL at `month`; every regressor dated `lag_month`, one month earlier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoinMonthRow {
    pub coin_id: String,
    pub month: Month,
    pub lag_month: Month,
    pub ivol: f64,
    pub d_investor_base: f64,
    pub size: f64,
    pub mom: f64,
    pub volume: f64,
    pub amihud: f64,
    pub category: f64,
}

impl CoinMonthRow {
    fn values(&self) -> [f64; 7] {
        [self.ivol, self.d_investor_base, self.size, self.mom, self.volume, self.amihud, self.category]
    }
}

/// Panel column names in output order.
pub const PANEL_COLUMNS: [&str; 7] = ["ivol", "d_investor_base", "size", "mom", "volume", "amihud", "category"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Panel {
    pub rows: Vec<CoinMonthRow>,
}

impl Panel {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = PANEL_COLUMNS.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r.values()[j]).collect())
    }

    pub fn to_frame(&self) -> PanelFrame {
        let mut frame = PanelFrame::new(
            self.rows.iter().map(|r| r.coin_id.clone()).collect(),
            self.rows.iter().map(|r| r.month.to_string()).collect(),
        );
        for name in PANEL_COLUMNS {
            frame.insert(name, self.column(name).expect("known column"));
        }
        frame
    }

    /// Clamp the regressor columns (not IVOL or the dummy) to quantiles.
    pub fn winsorize(&mut self, lower: f64, upper: f64) {
        type Field = fn(&mut CoinMonthRow) -> &mut f64;
        let fields: [Field; 5] = [|r| &mut r.d_investor_base, |r| &mut r.size, |r| &mut r.mom, |r| &mut r.volume, |r| &mut r.amihud];
        for field in fields {
            let mut col: Vec<f64> = self.rows.iter_mut().map(|r| *field(r)).collect();
            stats::winsorize(&mut col, lower, upper);
            for (r, v) in self.rows.iter_mut().zip(col) {
                *field(r) = v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PanelError {
    #[error("no complete coin-month rows")]
    EmptyPanel,
}

/// Join IVOL at `t` with characteristics and investor-base change at `t - 1`
/// and the category dummy. Incomplete rows are dropped and logged.
pub fn assemble_panel(
    fits: &[RiskFit],
    chars: &CharTable,
    dib: &BTreeMap<(String, Month), f64>,
    meta: &MetaTable,
) -> Result<(Panel, Vec<Skip>), PanelError> {
    let mut rows = Vec::new();
    let mut skips = Vec::new();
    let mut ordered: Vec<&RiskFit> = fits.iter().collect();
    ordered.sort_by(|a, b| (&a.coin_id, a.month).cmp(&(&b.coin_id, b.month)));
    for fit in ordered {
        let lag = fit.month.pred();
        let key = (fit.coin_id.clone(), lag);
        let c = chars.get(&key).copied().unwrap_or_default();
        let fields = [
            ("ivol", Some(fit.ivol)),
            ("d_investor_base", dib.get(&key).copied()),
            ("size", c.size),
            ("mom", c.mom),
            ("volume", c.volume),
            ("amihud", c.amihud),
            ("category", meta.get(&fit.coin_id).map(|m| m.category.dummy())),
        ];
        let missing: Vec<&str> = fields.iter().filter(|(_, v)| !v.is_some_and(f64::is_finite)).map(|(n, _)| *n).collect();
        if !missing.is_empty() {
            skips.push(Skip::new(
                Reason::MissingField,
                format!("{}@{}", fit.coin_id, fit.month),
                missing.join("|"),
            ));
            continue;
        }
        let v: Vec<f64> = fields.iter().map(|(_, v)| v.unwrap()).collect();
        rows.push(CoinMonthRow {
            coin_id: fit.coin_id.clone(),
            month: fit.month,
            lag_month: lag,
            ivol: v[0],
            d_investor_base: v[1],
            size: v[2],
            mom: v[3],
            volume: v[4],
            amihud: v[5],
            category: v[6],
        });
    }
    if rows.is_empty() {
        return Err(PanelError::EmptyPanel);
    }
    Ok((Panel { rows }, skips))
}

/// Per-column summary in `PANEL_COLUMNS` order.
pub fn summary_stats(panel: &Panel) -> Vec<(String, ColumnSummary)> {
    PANEL_COLUMNS
        .iter()
        .filter_map(|n| Some((n.to_string(), stats::summarize(&panel.column(n)?)?)))
        .collect()
}

pub fn panel_correlations(panel: &Panel) -> CorrelationMatrix {
    let cols: Vec<(&str, Vec<f64>)> = PANEL_COLUMNS.iter().map(|n| (*n, panel.column(n).unwrap())).collect();
    let refs: Vec<(&str, &[f64])> = cols.iter().map(|(n, v)| (*n, v.as_slice())).collect();
    correlation_matrix(&refs, 2)
}

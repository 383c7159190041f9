//! Raw data loading, daily returns, the eligible universe and the subreddit
//! panel sample.
//!
//! All tables are validated on load and immutable afterwards. Input files
//! are plain CSV with a header row; lines starting with `#` are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::skiplog::{Reason, Skip};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<IngestError>,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: bad numeric value `{value}` in column `{column}`")]
    BadNumeric {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: bad value `{value}` in column `{column}`")]
    BadField {
        line: u64,
        column: String,
        value: String,
    },
    #[error("duplicate key ({coin}, {date})")]
    DuplicateKey { coin: String, date: NaiveDate },
    #[error("risk-free series covers no sample dates")]
    EmptySeries,
}

impl IngestError {
    fn in_file(self, path: &Path) -> Self {
        match self {
            e @ IngestError::Io { .. } => e,
            e => IngestError::InFile {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        }
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Header-resolved CSV reader.
struct Table<R: Read> {
    reader: csv::Reader<R>,
    columns: Vec<usize>,
    names: &'static [&'static str],
}

struct Row {
    record: csv::StringRecord,
    line: u64,
}

impl<R: Read> Table<R> {
    fn new(input: R, names: &'static [&'static str]) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(input);
        let headers = reader.headers()?.clone();
        let columns = names
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h.eq_ignore_ascii_case(name))
                    .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            reader,
            columns,
            names,
        })
    }

    fn rows(&mut self) -> impl Iterator<Item = Result<Row, IngestError>> + '_ {
        self.reader.records().map(|r| {
            let record = r?;
            let line = record.position().map_or(0, |p| p.line());
            Ok(Row { record, line })
        })
    }

    fn get<'a>(&self, row: &'a Row, col: usize) -> &'a str {
        row.record.get(self.columns[col]).unwrap_or("")
    }

    fn bad_numeric(&self, row: &Row, col: usize) -> IngestError {
        IngestError::BadNumeric {
            line: row.line,
            column: self.names[col].to_string(),
            value: self.get(row, col).to_string(),
        }
    }

    fn bad_field(&self, row: &Row, col: usize) -> IngestError {
        IngestError::BadField {
            line: row.line,
            column: self.names[col].to_string(),
            value: self.get(row, col).to_string(),
        }
    }

    fn date(&self, row: &Row, col: usize) -> Result<NaiveDate, IngestError> {
        NaiveDate::parse_from_str(self.get(row, col), DATE_FORMAT).map_err(|_| self.bad_field(row, col))
    }

    fn number(&self, row: &Row, col: usize, valid: impl Fn(f64) -> bool) -> Result<f64, IngestError> {
        self.get(row, col)
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && valid(*v))
            .ok_or_else(|| self.bad_numeric(row, col))
    }

    fn non_empty(&self, row: &Row, col: usize) -> Result<String, IngestError> {
        let v = self.get(row, col);
        if v.is_empty() {
            Err(self.bad_field(row, col))
        } else {
            Ok(v.to_string())
        }
    }
}

// ---------------------------------------------------------------------------
// prices

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoinDay {
    pub coin_id: String,
    pub date: NaiveDate,
    pub close_usd: f64,
    pub volume_usd: f64,
    pub market_cap_usd: f64,
}

/// Daily price panel keyed by coin, each coin's days in date order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PriceTable {
    coins: BTreeMap<String, Vec<CoinDay>>,
}

impl PriceTable {
    pub fn from_rows(rows: impl IntoIterator<Item = CoinDay>) -> Result<Self, IngestError> {
        let mut coins: BTreeMap<String, Vec<CoinDay>> = BTreeMap::new();
        for row in rows {
            coins.entry(row.coin_id.clone()).or_default().push(row);
        }
        for days in coins.values_mut() {
            days.sort_by_key(|d| d.date);
            if let Some(w) = days.windows(2).find(|w| w[0].date == w[1].date) {
                return Err(IngestError::DuplicateKey {
                    coin: w[0].coin_id.clone(),
                    date: w[0].date,
                });
            }
        }
        Ok(Self { coins })
    }

    pub fn coins(&self) -> impl Iterator<Item = (&str, &[CoinDay])> {
        self.coins.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn days(&self, coin: &str) -> &[CoinDay] {
        self.coins.get(coin).map_or(&[], Vec::as_slice)
    }

    pub fn day(&self, coin: &str, date: NaiveDate) -> Option<&CoinDay> {
        let days = self.days(coin);
        days.binary_search_by_key(&date, |d| d.date).ok().map(|i| &days[i])
    }

    pub fn cap_on(&self, coin: &str, date: NaiveDate) -> Option<f64> {
        self.day(coin, date).map(|d| d.market_cap_usd)
    }

    pub fn n_coins(&self) -> usize {
        self.coins.len()
    }

    pub fn len(&self) -> usize {
        self.coins.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.coins.is_empty()
    }

    /// First and last observed dates across all coins.
    pub fn span(&self) -> Option<(NaiveDate, NaiveDate)> {
        let first = self.coins.values().filter_map(|d| d.first()).map(|d| d.date).min()?;
        let last = self.coins.values().filter_map(|d| d.last()).map(|d| d.date).max()?;
        Some((first, last))
    }
}

const PRICE_COLUMNS: &[&str] = &["date", "coin_id", "close_usd", "volume_usd", "market_cap_usd"];

pub fn read_prices(input: impl Read) -> Result<PriceTable, IngestError> {
    let mut table = Table::new(input, PRICE_COLUMNS)?;
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    let records: Vec<Row> = table.rows().collect::<Result<_, _>>()?;
    for row in &records {
        let day = CoinDay {
            date: table.date(row, 0)?,
            coin_id: table.non_empty(row, 1)?,
            close_usd: table.number(row, 2, |v| v > 0.0)?,
            volume_usd: table.number(row, 3, |v| v >= 0.0)?,
            market_cap_usd: table.number(row, 4, |v| v >= 0.0)?,
        };
        if !seen.insert((day.coin_id.clone(), day.date)) {
            return Err(IngestError::DuplicateKey {
                coin: day.coin_id,
                date: day.date,
            });
        }
        rows.push(day);
    }
    PriceTable::from_rows(rows)
}

pub fn load_prices(path: &Path) -> Result<PriceTable, IngestError> {
    read_prices(open(path)?).map_err(|e| e.in_file(path))
}

// ---------------------------------------------------------------------------
// metadata

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Coin,
    Token,
}

impl Category {
    /// Regression dummy: 1 for coins, 0 for tokens.
    pub fn dummy(self) -> f64 {
        match self {
            Category::Coin => 1.0,
            Category::Token => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoinMeta {
    pub coin_id: String,
    pub category: Category,
    pub subreddit: Option<String>,
    pub is_stablecoin: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetaTable {
    coins: BTreeMap<String, CoinMeta>,
}

impl MetaTable {
    pub fn from_rows(rows: impl IntoIterator<Item = CoinMeta>) -> Result<Self, IngestError> {
        let mut coins = BTreeMap::new();
        for m in rows {
            if coins.contains_key(&m.coin_id) {
                return Err(IngestError::BadField {
                    line: 0,
                    column: "coin_id".into(),
                    value: m.coin_id,
                });
            }
            coins.insert(m.coin_id.clone(), m);
        }
        Ok(Self { coins })
    }

    pub fn get(&self, coin: &str) -> Option<&CoinMeta> {
        self.coins.get(coin)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CoinMeta> {
        self.coins.values()
    }

    pub fn len(&self) -> usize {
        self.coins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coins.is_empty()
    }
}

const META_COLUMNS: &[&str] = &["coin_id", "category", "subreddit", "is_stablecoin"];

pub fn read_meta(input: impl Read) -> Result<MetaTable, IngestError> {
    let mut table = Table::new(input, META_COLUMNS)?;
    let records: Vec<Row> = table.rows().collect::<Result<_, _>>()?;
    let mut coins: BTreeMap<String, CoinMeta> = BTreeMap::new();
    for row in &records {
        let coin_id = table.non_empty(row, 0)?;
        let category = match table.get(row, 1).to_ascii_lowercase().as_str() {
            "coin" => Category::Coin,
            "token" => Category::Token,
            _ => return Err(table.bad_field(row, 1)),
        };
        let subreddit = Some(table.get(row, 2).to_string()).filter(|s| !s.is_empty());
        let is_stablecoin = match table.get(row, 3).to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" => false,
            _ => return Err(table.bad_field(row, 3)),
        };
        if coins.contains_key(&coin_id) {
            return Err(table.bad_field(row, 0));
        }
        coins.insert(
            coin_id.clone(),
            CoinMeta {
                coin_id,
                category,
                subreddit,
                is_stablecoin,
            },
        );
    }
    Ok(MetaTable { coins })
}

pub fn load_meta(path: &Path) -> Result<MetaTable, IngestError> {
    read_meta(open(path)?).map_err(|e| e.in_file(path))
}

// ---------------------------------------------------------------------------
// followers

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FollowerObs {
    pub coin_id: String,
    pub date: NaiveDate,
    pub followers: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FollowerTable {
    coins: BTreeMap<String, Vec<(NaiveDate, u64)>>,
}

impl FollowerTable {
    pub fn from_rows(rows: impl IntoIterator<Item = FollowerObs>) -> Result<Self, IngestError> {
        let mut coins: BTreeMap<String, Vec<(NaiveDate, u64)>> = BTreeMap::new();
        for r in rows {
            coins.entry(r.coin_id).or_default().push((r.date, r.followers));
        }
        for (coin, obs) in coins.iter_mut() {
            obs.sort_by_key(|o| o.0);
            if let Some(w) = obs.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(IngestError::DuplicateKey {
                    coin: coin.clone(),
                    date: w[0].0,
                });
            }
        }
        Ok(Self { coins })
    }

    pub fn series(&self, coin: &str) -> &[(NaiveDate, u64)] {
        self.coins.get(coin).map_or(&[], Vec::as_slice)
    }

    pub fn coins(&self) -> impl Iterator<Item = (&str, &[(NaiveDate, u64)])> {
        self.coins.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

const FOLLOWER_COLUMNS: &[&str] = &["date", "coin_id", "followers"];

pub fn read_followers(input: impl Read) -> Result<FollowerTable, IngestError> {
    let mut table = Table::new(input, FOLLOWER_COLUMNS)?;
    let records: Vec<Row> = table.rows().collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(records.len());
    let mut seen = BTreeSet::new();
    for row in &records {
        let obs = FollowerObs {
            date: table.date(row, 0)?,
            coin_id: table.non_empty(row, 1)?,
            followers: table
                .get(row, 2)
                .parse::<u64>()
                .map_err(|_| table.bad_numeric(row, 2))?,
        };
        if !seen.insert((obs.coin_id.clone(), obs.date)) {
            return Err(IngestError::DuplicateKey {
                coin: obs.coin_id,
                date: obs.date,
            });
        }
        rows.push(obs);
    }
    FollowerTable::from_rows(rows)
}

pub fn load_followers(path: &Path) -> Result<FollowerTable, IngestError> {
    read_followers(open(path)?).map_err(|e| e.in_file(path))
}

// ---------------------------------------------------------------------------
// risk-free rate

/// Lowest annual rate accepted on load.
pub const MIN_ANNUAL_RATE: f64 = -0.05;

/// Calendar days per year used to de-annualize the risk-free rate; crypto
/// trades every day.
pub const DAYS_PER_YEAR: f64 = 365.0;

/// Annualized risk-free rates keyed by date.
///
/// Lookups forward-fill from the latest observation on or before the date.
/// Dates before the first observation take the first observed rate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateSeries {
    rates: BTreeMap<NaiveDate, f64>,
}

impl RateSeries {
    pub fn from_points(points: impl IntoIterator<Item = (NaiveDate, f64)>) -> Self {
        Self {
            rates: points.into_iter().collect(),
        }
    }

    /// Constant rate, handy for tests.
    pub fn constant(annual: f64) -> Self {
        Self::from_points([(NaiveDate::MIN, annual)])
    }

    pub fn annual(&self, date: NaiveDate) -> Option<f64> {
        self.rates
            .range(..=date)
            .next_back()
            .or_else(|| self.rates.iter().next())
            .map(|(_, r)| *r)
    }

    pub fn daily(&self, date: NaiveDate) -> Option<f64> {
        self.annual(date).map(|r| r / DAYS_PER_YEAR)
    }

    /// Dense daily series over `[start, end]`.
    pub fn forward_fill(&self, start: NaiveDate, end: NaiveDate) -> Result<RateSeries, IngestError> {
        match self.rates.keys().next() {
            Some(first) if *first <= end => {}
            _ => return Err(IngestError::EmptySeries),
        }
        let rates = start
            .iter_days()
            .take_while(|d| *d <= end)
            .filter_map(|d| self.annual(d).map(|r| (d, r)))
            .collect();
        Ok(RateSeries { rates })
    }

    pub fn points(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.rates.iter().map(|(d, r)| (*d, *r))
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

const RATE_COLUMNS: &[&str] = &["date", "annual_rate"];

pub fn read_riskfree(input: impl Read) -> Result<RateSeries, IngestError> {
    let mut table = Table::new(input, RATE_COLUMNS)?;
    let records: Vec<Row> = table.rows().collect::<Result<_, _>>()?;
    let mut rates = BTreeMap::new();
    for row in &records {
        let date = table.date(row, 0)?;
        let rate = table.number(row, 1, |v| v >= MIN_ANNUAL_RATE)?;
        if rates.insert(date, rate).is_some() {
            return Err(IngestError::DuplicateKey {
                coin: "riskfree".into(),
                date,
            });
        }
    }
    if rates.is_empty() {
        return Err(IngestError::EmptySeries);
    }
    Ok(RateSeries { rates })
}

pub fn load_riskfree(path: &Path) -> Result<RateSeries, IngestError> {
    read_riskfree(open(path)?).map_err(|e| e.in_file(path))
}

// ---------------------------------------------------------------------------
// returns

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnObs {
    pub coin_id: String,
    pub date: NaiveDate,
    /// Observation the return is measured from.
    pub prev_date: NaiveDate,
    pub ret: f64,
    pub excess_ret: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReturnTable {
    coins: BTreeMap<String, Vec<ReturnObs>>,
}

impl ReturnTable {
    pub fn coins(&self) -> impl Iterator<Item = (&str, &[ReturnObs])> {
        self.coins.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn series(&self, coin: &str) -> &[ReturnObs] {
        self.coins.get(coin).map_or(&[], Vec::as_slice)
    }

    pub fn get(&self, coin: &str, date: NaiveDate) -> Option<&ReturnObs> {
        let s = self.series(coin);
        s.binary_search_by_key(&date, |r| r.date).ok().map(|i| &s[i])
    }

    /// Returns of `coin` dated within `[from, to]`.
    pub fn window(&self, coin: &str, from: NaiveDate, to: NaiveDate) -> &[ReturnObs] {
        let s = self.series(coin);
        let lo = s.partition_point(|r| r.date < from);
        let hi = s.partition_point(|r| r.date <= to);
        &s[lo..hi.max(lo)]
    }

    pub fn len(&self) -> usize {
        self.coins.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReturnObs> {
        self.coins.values().flatten()
    }
}

/// Simple daily returns between consecutive observations no more than
/// `max_gap_days` apart, in excess of the daily risk-free rate.
pub fn compute_returns(prices: &PriceTable, rf: &RateSeries, max_gap_days: i64) -> (ReturnTable, Vec<Skip>) {
    let mut coins = BTreeMap::new();
    let mut skips = Vec::new();
    for (coin, days) in prices.coins() {
        let mut out = Vec::with_capacity(days.len().saturating_sub(1));
        for w in days.windows(2) {
            let (prev, cur) = (&w[0], &w[1]);
            let gap = (cur.date - prev.date).num_days();
            if gap > max_gap_days {
                log::debug!("{coin}: {gap}-day gap before {}", cur.date);
                skips.push(Skip::new(
                    Reason::GapBreak,
                    format!("{coin}@{}", cur.date),
                    format!("{gap} days since {}", prev.date),
                ));
                continue;
            }
            let Some(rf_daily) = rf.daily(cur.date) else {
                continue;
            };
            let ret = cur.close_usd / prev.close_usd - 1.0;
            out.push(ReturnObs {
                coin_id: coin.to_string(),
                date: cur.date,
                prev_date: prev.date,
                ret,
                excess_ret: ret - rf_daily,
            });
        }
        if !out.is_empty() {
            coins.insert(coin.to_string(), out);
        }
    }
    (ReturnTable { coins }, skips)
}

// ---------------------------------------------------------------------------
// universe

/// Coins eligible for factor construction on each date.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Universe {
    days: BTreeMap<NaiveDate, BTreeSet<String>>,
}

impl Universe {
    pub fn members(&self, date: NaiveDate) -> Option<&BTreeSet<String>> {
        self.days.get(&date)
    }

    pub fn contains(&self, date: NaiveDate, coin: &str) -> bool {
        self.days.get(&date).is_some_and(|s| s.contains(coin))
    }

    pub fn days(&self) -> impl Iterator<Item = (NaiveDate, &BTreeSet<String>)> {
        self.days.iter().map(|(d, s)| (*d, s))
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.days.keys().copied()
    }

    /// Number of eligible days per coin.
    pub fn eligible_days(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for members in self.days.values() {
            for c in members {
                *counts.entry(c.as_str()).or_insert(0) += 1;
            }
        }
        counts
    }
}

/// Eligibility of one observation: cap at or above the floor, positive volume
/// and not a stablecoin.
pub fn is_eligible(day: &CoinDay, meta: Option<&CoinMeta>, mcap_floor: f64) -> bool {
    day.market_cap_usd >= mcap_floor && day.volume_usd > 0.0 && !meta.is_some_and(|m| m.is_stablecoin)
}

/// Per-day eligible sets. Defunct coins stay in while their rows pass the
/// filters. Coins without metadata are treated as non-stablecoins and logged.
pub fn build_universe(prices: &PriceTable, meta: &MetaTable, mcap_floor: f64) -> (Universe, Vec<Skip>) {
    let mut days: BTreeMap<NaiveDate, BTreeSet<String>> = BTreeMap::new();
    let mut skips = Vec::new();
    for (coin, rows) in prices.coins() {
        let m = meta.get(coin);
        if m.is_none() {
            skips.push(Skip::new(Reason::MissingMeta, coin, "no metadata row; treated as non-stablecoin"));
        }
        for row in rows.iter().filter(|r| is_eligible(r, m, mcap_floor)) {
            days.entry(row.date).or_default().insert(coin.to_string());
        }
    }
    (Universe { days }, skips)
}

/// Coins with a listed subreddit and at least `min_years * 365` eligible days
/// (not necessarily contiguous). Used for the panel only, never for factors.
pub fn build_regression_sample(universe: &Universe, meta: &MetaTable, min_years: u32) -> (BTreeSet<String>, Vec<Skip>) {
    let min_days = min_years as usize * 365;
    let counts = universe.eligible_days();
    let known: BTreeSet<&str> = counts.keys().copied().chain(meta.iter().map(|m| m.coin_id.as_str())).collect();
    let mut sample = BTreeSet::new();
    let mut skips = Vec::new();
    for coin in known {
        let n = counts.get(coin).copied().unwrap_or(0);
        let has_subreddit = meta.get(coin).is_some_and(|m| m.subreddit.is_some());
        if !has_subreddit {
            skips.push(Skip::new(Reason::NotInSample, coin, "no subreddit"));
        } else if n < min_days {
            skips.push(Skip::new(Reason::NotInSample, coin, format!("{n} eligible days < {min_days}")));
        } else {
            sample.insert(coin.to_string());
        }
    }
    (sample, skips)
}

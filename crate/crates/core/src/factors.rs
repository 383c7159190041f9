//! Daily MRKT, SMB and WML factors with weekly rebalanced sorts.
//!
//! Sorts are formed at the start of each week from information dated
//! strictly before it: market caps on the day before the week starts and
//! cumulative returns over the trailing momentum window. Constituents then
//! stay fixed for the week while value weights are refreshed daily from the
//! previous observation's market cap.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::ingest::{PriceTable, RateSeries, ReturnTable, Universe};
use crate::skiplog::{Reason, Skip};
use crate::stats::{correlation_matrix, CorrelationMatrix};

/// Fewest overlapping days accepted for factor correlations.
pub const MIN_CORRELATION_OBS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactorConfig {
    pub week_start: Weekday,
    pub min_coins: usize,
    pub momentum_window_days: u64,
    pub momentum_min_obs: usize,
    /// Lower and upper cumulative breakpoints of the three size groups.
    pub size_breakpoints: (f64, f64),
    /// Lower and upper cumulative breakpoints of the momentum groups.
    pub momentum_breakpoints: (f64, f64),
}

impl Default for FactorConfig {
    fn default() -> Self {
        Self {
            week_start: Weekday::Mon,
            min_coins: 10,
            momentum_window_days: 21,
            momentum_min_obs: 15,
            size_breakpoints: (0.3, 0.7),
            momentum_breakpoints: (0.3, 0.7),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FactorError {
    #[error("need at least {needed} overlapping observations, have {have}")]
    TooFewObservations { needed: usize, have: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum SizeGroup {
    Small,
    Middle,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum SizeHalf {
    Small,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum MomentumGroup {
    Low,
    Middle,
    High,
}

/// Momentum leg of a weekly sort: the 2x3 size-half by momentum grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentumSort {
    pub scores: BTreeMap<String, f64>,
    pub halves: BTreeMap<String, SizeHalf>,
    pub groups: BTreeMap<String, MomentumGroup>,
}

impl MomentumSort {
    pub fn cell(&self, half: SizeHalf, group: MomentumGroup) -> impl Iterator<Item = &str> {
        self.groups
            .iter()
            .filter(move |(c, g)| **g == group && self.halves[c.as_str()] == half)
            .map(|(c, _)| c.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeeklySort {
    pub week_start: NaiveDate,
    pub formation_caps: BTreeMap<String, f64>,
    pub size_groups: BTreeMap<String, SizeGroup>,
    /// `None` when too few coins have a full momentum window.
    pub momentum: Option<MomentumSort>,
}

impl WeeklySort {
    pub fn week_end(&self) -> NaiveDate {
        self.week_start + Days::new(6)
    }

    pub fn covers(&self, date: NaiveDate) -> bool {
        date >= self.week_start && date <= self.week_end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FactorDay {
    pub date: NaiveDate,
    pub mrkt: f64,
    pub smb: f64,
    pub wml: f64,
    pub rf_daily: f64,
}

/// Days on which all three factors are defined, in date order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactorTable {
    days: Vec<FactorDay>,
}

impl FactorTable {
    pub fn from_days(mut days: Vec<FactorDay>) -> Self {
        days.sort_by_key(|d| d.date);
        Self { days }
    }

    pub fn get(&self, date: NaiveDate) -> Option<&FactorDay> {
        self.days.binary_search_by_key(&date, |d| d.date).ok().map(|i| &self.days[i])
    }

    pub fn days(&self) -> &[FactorDay] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }
}

/// One coin's return on a date with its value weight.
#[derive(Debug, Clone, Copy)]
pub struct WeightedReturn<'a> {
    pub coin: &'a str,
    pub ret: f64,
    /// Market cap on the previous observed day.
    pub weight: f64,
}

/// Returns grouped by date, each carrying its previous-day market cap.
#[derive(Debug, Default)]
pub struct CrossSection<'a> {
    by_date: BTreeMap<NaiveDate, Vec<WeightedReturn<'a>>>,
}

impl<'a> CrossSection<'a> {
    pub fn new(returns: &'a ReturnTable, prices: &PriceTable) -> Self {
        let mut by_date: BTreeMap<NaiveDate, Vec<WeightedReturn<'a>>> = BTreeMap::new();
        for (coin, series) in returns.coins() {
            for r in series {
                let Some(weight) = prices.cap_on(coin, r.prev_date) else {
                    continue;
                };
                by_date.entry(r.date).or_default().push(WeightedReturn {
                    coin,
                    ret: r.ret,
                    weight,
                });
            }
        }
        Self { by_date }
    }

    pub fn on(&self, date: NaiveDate) -> &[WeightedReturn<'a>] {
        self.by_date.get(&date).map_or(&[], Vec::as_slice)
    }
}

/// Value-weighted mean of `(weight, return)` pairs; `None` without positive weight.
pub fn value_weighted(pairs: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let (mut sw, mut swr) = (0.0, 0.0);
    for (w, r) in pairs {
        if w > 0.0 {
            sw += w;
            swr += w * r;
        }
    }
    (sw > 0.0).then(|| swr / sw)
}

/// Corner portfolio returns of the 2x3 momentum grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corners {
    pub small_high: f64,
    pub big_high: f64,
    pub small_low: f64,
    pub big_low: f64,
}

/// WML = (SmallHigh + BigHigh)/2 - (SmallLow + BigLow)/2.
pub fn wml_from_corners(c: Corners) -> f64 {
    0.5 * (c.small_high + c.big_high) - 0.5 * (c.small_low + c.big_low)
}

/// Value-weighted market return in excess of the daily risk-free rate, over
/// coins eligible on the date.
pub fn market_factor(cross: &CrossSection, universe: &Universe, rf: &RateSeries) -> (BTreeMap<NaiveDate, f64>, Vec<Skip>) {
    let mut out = BTreeMap::new();
    let mut skips = Vec::new();
    for (date, members) in universe.days() {
        let pairs = cross.on(date).iter().filter(|w| members.contains(w.coin)).map(|w| (w.weight, w.ret));
        match (value_weighted(pairs), rf.daily(date)) {
            (Some(m), Some(f)) => {
                out.insert(date, m - f);
            }
            (None, _) => skips.push(Skip::new(Reason::EmptyUniverse, date.to_string(), "no eligible coin with a return")),
            (_, None) => skips.push(Skip::new(Reason::EmptyUniverse, date.to_string(), "no risk-free rate")),
        }
    }
    (out, skips)
}

/// Split a sorted list into bottom / middle / top counts by breakpoints,
/// rounding the two tails symmetrically.
fn tercile_counts(n: usize, (lo, hi): (f64, f64)) -> (usize, usize) {
    let bottom = ((n as f64) * lo).round() as usize;
    let top = ((n as f64) * (1.0 - hi)).round() as usize;
    let bottom = bottom.min(n);
    (bottom, top.min(n - bottom))
}

/// Rank ascending by value, ties broken by coin id.
fn ranked<'a>(values: impl IntoIterator<Item = (&'a str, f64)>) -> Vec<&'a str> {
    let mut v: Vec<(&str, f64)> = values.into_iter().collect();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().map(|(c, _)| c).collect()
}

fn three_way<T: Copy>(ranked: &[&str], breakpoints: (f64, f64), labels: [T; 3]) -> BTreeMap<String, T> {
    let (bottom, top) = tercile_counts(ranked.len(), breakpoints);
    ranked
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let g = if k < bottom {
                labels[0]
            } else if k >= ranked.len() - top {
                labels[2]
            } else {
                labels[1]
            };
            (c.to_string(), g)
        })
        .collect()
}

/// First week start on or before `date`.
pub fn week_of(date: NaiveDate, anchor: Weekday) -> NaiveDate {
    let back = (7 + date.weekday().num_days_from_monday() - anchor.num_days_from_monday()) % 7;
    date - Days::new(back as u64)
}

pub fn weekly_sorts(returns: &ReturnTable, prices: &PriceTable, universe: &Universe, cfg: &FactorConfig) -> (Vec<WeeklySort>, Vec<Skip>) {
    let mut sorts = Vec::new();
    let mut skips = Vec::new();
    let (Some(first), Some(last)) = (universe.dates().next(), universe.dates().last()) else {
        return (sorts, skips);
    };
    let mut week_start = week_of(first, cfg.week_start);
    while week_start <= last {
        let formation = week_start - Days::new(1);
        let key = week_start.to_string();
        let caps: BTreeMap<String, f64> = universe
            .members(formation)
            .into_iter()
            .flatten()
            .filter_map(|c| prices.cap_on(c, formation).map(|cap| (c.clone(), cap)))
            .collect();

        if caps.len() < cfg.min_coins {
            skips.push(Skip::new(
                Reason::TooFewCoins,
                format!("smb@{key}"),
                format!("{} eligible coins < {}", caps.len(), cfg.min_coins),
            ));
            skips.push(Skip::new(Reason::TooFewCoins, format!("wml@{key}"), "size sort skipped"));
            week_start = week_start + Days::new(7);
            continue;
        }

        let by_cap = ranked(caps.iter().map(|(c, v)| (c.as_str(), *v)));
        let size_groups = three_way(&by_cap, cfg.size_breakpoints, [SizeGroup::Small, SizeGroup::Middle, SizeGroup::Big]);

        let window_start = week_start - Days::new(cfg.momentum_window_days);
        let scores: BTreeMap<String, f64> = caps
            .keys()
            .filter_map(|c| {
                let w = returns.window(c, window_start, formation);
                (w.len() >= cfg.momentum_min_obs).then(|| (c.clone(), w.iter().map(|r| 1.0 + r.ret).product::<f64>() - 1.0))
            })
            .collect();

        let momentum = if scores.len() < cfg.min_coins {
            skips.push(Skip::new(
                Reason::TooFewCoins,
                format!("wml@{key}"),
                format!("{} coins with a momentum window < {}", scores.len(), cfg.min_coins),
            ));
            None
        } else {
            let by_cap = ranked(scores.keys().map(|c| (c.as_str(), caps[c])));
            let n_small = by_cap.len() / 2;
            let halves: BTreeMap<String, SizeHalf> = by_cap
                .iter()
                .enumerate()
                .map(|(k, c)| (c.to_string(), if k < n_small { SizeHalf::Small } else { SizeHalf::Big }))
                .collect();
            let mut groups = BTreeMap::new();
            for half in [SizeHalf::Small, SizeHalf::Big] {
                let members = ranked(scores.iter().filter(|(c, _)| halves[c.as_str()] == half).map(|(c, s)| (c.as_str(), *s)));
                groups.extend(three_way(&members, cfg.momentum_breakpoints, [MomentumGroup::Low, MomentumGroup::Middle, MomentumGroup::High]));
            }
            Some(MomentumSort { scores, halves, groups })
        };

        sorts.push(WeeklySort {
            week_start,
            formation_caps: caps,
            size_groups,
            momentum,
        });
        week_start = week_start + Days::new(7);
    }
    (sorts, skips)
}

fn week_dates(sort: &WeeklySort) -> impl Iterator<Item = NaiveDate> {
    sort.week_start.iter_days().take(7)
}

/// Value-weighted return on `date` of the coins `member` maps to `key`.
fn portfolio_return<K: PartialEq>(cross: &CrossSection, date: NaiveDate, key: K, member: impl Fn(&str) -> Option<K>) -> Option<f64> {
    value_weighted(
        cross
            .on(date)
            .iter()
            .filter(|w| member(w.coin).as_ref() == Some(&key))
            .map(|w| (w.weight, w.ret)),
    )
}

/// SMB = small-cap minus big-cap value-weighted return, per day.
pub fn smb_factor(sorts: &[WeeklySort], cross: &CrossSection) -> (BTreeMap<NaiveDate, f64>, Vec<Skip>) {
    let mut out = BTreeMap::new();
    let mut skips = Vec::new();
    for sort in sorts {
        let group = |c: &str| sort.size_groups.get(c).copied();
        for date in week_dates(sort) {
            let small = portfolio_return(cross, date, SizeGroup::Small, group);
            let big = portfolio_return(cross, date, SizeGroup::Big, group);
            match (small, big) {
                (Some(s), Some(b)) => {
                    out.insert(date, s - b);
                }
                _ => skips.push(Skip::new(Reason::EmptyPortfolio, format!("smb@{date}"), "small or big portfolio without returns")),
            }
        }
    }
    (out, skips)
}

/// WML from the four corner portfolios of the 2x3 size-momentum grid.
pub fn wml_factor(sorts: &[WeeklySort], cross: &CrossSection) -> (BTreeMap<NaiveDate, f64>, Vec<Skip>) {
    let mut out = BTreeMap::new();
    let mut skips = Vec::new();
    for sort in sorts {
        let Some(m) = &sort.momentum else { continue };
        let corners = [
            (SizeHalf::Small, MomentumGroup::High),
            (SizeHalf::Big, MomentumGroup::High),
            (SizeHalf::Small, MomentumGroup::Low),
            (SizeHalf::Big, MomentumGroup::Low),
        ];
        if let Some((h, g)) = corners.iter().find(|(h, g)| m.cell(*h, *g).next().is_none()) {
            log::info!("week {}: empty {h:?}/{g:?} momentum cell", sort.week_start);
            skips.push(Skip::new(Reason::EmptyCell, format!("wml@{}", sort.week_start), format!("{h:?}{g:?}")));
            continue;
        }
        let cell = |c: &str| m.groups.get(c).map(|g| (m.halves[c], *g));
        for date in week_dates(sort) {
            let r: Vec<Option<f64>> = corners.iter().map(|k| portfolio_return(cross, date, *k, cell)).collect();
            match r[..] {
                [Some(small_high), Some(big_high), Some(small_low), Some(big_low)] => {
                    out.insert(
                        date,
                        wml_from_corners(Corners {
                            small_high,
                            big_high,
                            small_low,
                            big_low,
                        }),
                    );
                }
                _ => skips.push(Skip::new(Reason::EmptyPortfolio, format!("wml@{date}"), "corner portfolio without returns")),
            }
        }
    }
    (out, skips)
}

/// Output of the factor stage.
#[derive(Debug, Clone)]
pub struct FactorBuild {
    pub table: FactorTable,
    pub sorts: Vec<WeeklySort>,
    /// One entry per skipped week leg and per universe date without a row.
    pub skips: Vec<Skip>,
}

/// All three factors on every universe date where each is defined. Dates
/// without a complete row are logged once with the first missing cause.
pub fn build_factors(returns: &ReturnTable, prices: &PriceTable, universe: &Universe, rf: &RateSeries, cfg: &FactorConfig) -> FactorBuild {
    let cross = CrossSection::new(returns, prices);
    let (mrkt, _) = market_factor(&cross, universe, rf);
    let (sorts, mut skips) = weekly_sorts(returns, prices, universe, cfg);
    let (smb, _) = smb_factor(&sorts, &cross);
    let (wml, wml_skips) = wml_factor(&sorts, &cross);
    let wml_skips: Vec<Skip> = wml_skips.into_iter().filter(|s| s.reason == Reason::EmptyCell).collect();
    let empty_cells: BTreeSet<NaiveDate> = sorts
        .iter()
        .filter(|s| wml_skips.iter().any(|k| k.key == format!("wml@{}", s.week_start)))
        .map(|s| s.week_start)
        .collect();
    skips.extend(wml_skips);

    let mut days = Vec::new();
    for date in universe.dates() {
        let row = (mrkt.get(&date), smb.get(&date), wml.get(&date), rf.daily(date));
        if let (Some(&m), Some(&s), Some(&w), Some(f)) = row {
            days.push(FactorDay {
                date,
                mrkt: m,
                smb: s,
                wml: w,
                rf_daily: f,
            });
            continue;
        }
        let covered = sorts.iter().find(|s| s.covers(date));
        let (reason, detail) = match covered {
            _ if row.0.is_none() => (Reason::EmptyUniverse, "no market return"),
            None => (Reason::WeekSkipped, "no size sort for the week"),
            Some(s) if s.momentum.is_none() || empty_cells.contains(&s.week_start) => (Reason::WeekSkipped, "no momentum sort for the week"),
            Some(_) => (Reason::EmptyPortfolio, "sorted portfolio without returns"),
        };
        skips.push(Skip::new(reason, date.to_string(), detail));
    }
    FactorBuild {
        table: FactorTable::from_days(days),
        sorts,
        skips,
    }
}

/// Pearson correlations of MRKT, SMB and WML over the factor table.
pub fn factor_correlations(factors: &FactorTable) -> Result<CorrelationMatrix, FactorError> {
    let n = factors.len();
    if n < MIN_CORRELATION_OBS {
        return Err(FactorError::TooFewObservations {
            needed: MIN_CORRELATION_OBS,
            have: n,
        });
    }
    let col = |f: fn(&FactorDay) -> f64| factors.days().iter().map(f).collect::<Vec<f64>>();
    let (m, s, w) = (col(|d| d.mrkt), col(|d| d.smb), col(|d| d.wml));
    Ok(correlation_matrix(&[("mrkt", &m), ("smb", &s), ("wml", &w)], MIN_CORRELATION_OBS))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_market_example() {
        let v = value_weighted([(100.0, 0.02), (300.0, -0.01)]).unwrap();
        assert!((v - (-0.0025)).abs() < 1e-16);
        assert_eq!(value_weighted([(5.0, 0.07)]), Some(0.07));
        assert_eq!(value_weighted([(0.0, 0.07)]), None);
    }

    #[test]
    fn wml_corner_arithmetic() {
        let c = Corners {
            small_high: 0.04,
            big_high: 0.02,
            small_low: 0.01,
            big_low: -0.01,
        };
        assert!((wml_from_corners(c) - 0.03).abs() < 1e-17);
        let swapped = Corners {
            small_high: c.small_low,
            big_high: c.big_low,
            small_low: c.small_high,
            big_low: c.big_high,
        };
        assert_eq!(wml_from_corners(swapped), -wml_from_corners(c));
        let flat = Corners {
            small_high: 0.013,
            big_high: 0.013,
            small_low: 0.013,
            big_low: 0.013,
        };
        assert_eq!(wml_from_corners(flat), 0.0);
    }

    #[test]
    fn thirty_forty_thirty() {
        assert_eq!(tercile_counts(10, (0.3, 0.7)), (3, 3));
        assert_eq!(tercile_counts(5, (0.3, 0.7)), (2, 2));
        assert_eq!(tercile_counts(11, (0.3, 0.7)), (3, 3));
        assert_eq!(tercile_counts(1, (0.3, 0.7)), (0, 0));
    }

    #[test]
    fn ties_break_by_coin_id() {
        let coins = ["j", "c", "a", "h", "b", "e", "d", "g", "f", "i"];
        let r = ranked(coins.iter().map(|c| (*c, 1e9)));
        let groups = three_way(&r, (0.3, 0.7), [SizeGroup::Small, SizeGroup::Middle, SizeGroup::Big]);
        let small: Vec<&str> = groups.iter().filter(|(_, g)| **g == SizeGroup::Small).map(|(c, _)| c.as_str()).collect();
        let big: Vec<&str> = groups.iter().filter(|(_, g)| **g == SizeGroup::Big).map(|(c, _)| c.as_str()).collect();
        assert_eq!(small, vec!["a", "b", "c"]);
        assert_eq!(big, vec!["h", "i", "j"]);
        assert_eq!(groups.values().filter(|g| **g == SizeGroup::Middle).count(), 4);
    }

    #[test]
    fn week_anchor() {
        let wed = NaiveDate::from_ymd_opt(2021, 1, 6).unwrap();
        assert_eq!(week_of(wed, Weekday::Mon), NaiveDate::from_ymd_opt(2021, 1, 4).unwrap());
        assert_eq!(week_of(wed, Weekday::Wed), wed);
        assert_eq!(week_of(wed, Weekday::Thu), NaiveDate::from_ymd_opt(2020, 12, 31).unwrap());
    }
}

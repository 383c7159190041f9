//! Machine-readable record of everything a stage dropped or skipped.

use std::fmt;

use serde::Serialize;

/// Reason codes written to the stage logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    /// Consecutive price observations further apart than the gap limit.
    GapBreak,
    /// Coin without metadata; treated as a non-stablecoin.
    MissingMeta,
    /// Coin left out of the panel sample (no subreddit or too few eligible days).
    NotInSample,
    /// No eligible coin with a return on the date.
    EmptyUniverse,
    /// Fewer coins than the weekly sort minimum.
    TooFewCoins,
    /// A corner portfolio of the 2x3 momentum grid had no constituents.
    EmptyCell,
    /// Date inside a week whose sort was skipped.
    WeekSkipped,
    /// A sorted portfolio had no constituent return on the date.
    EmptyPortfolio,
    /// Coin-month with fewer usable days than the minimum.
    TooFewObservations,
    /// Factor design matrix rank-deficient for the coin-month.
    SingularDesign,
    /// Panel row with a missing or non-finite field.
    MissingField,
    /// Coin or month with a single panel row under fixed effects.
    SingletonGroup,
    /// Regressor absorbed by the fixed effects.
    Absorbed,
}

impl Reason {
    pub fn code(self) -> &'static str {
        match self {
            Reason::GapBreak => "GAP_BREAK",
            Reason::MissingMeta => "MISSING_META",
            Reason::NotInSample => "NOT_IN_SAMPLE",
            Reason::EmptyUniverse => "EMPTY_UNIVERSE",
            Reason::TooFewCoins => "TOO_FEW_COINS",
            Reason::EmptyCell => "EMPTY_CELL",
            Reason::WeekSkipped => "WEEK_SKIPPED",
            Reason::EmptyPortfolio => "EMPTY_PORTFOLIO",
            Reason::TooFewObservations => "TOO_FEW_OBSERVATIONS",
            Reason::SingularDesign => "SINGULAR_DESIGN",
            Reason::MissingField => "MISSING_FIELD",
            Reason::SingletonGroup => "SINGLETON_GROUP",
            Reason::Absorbed => "ABSORBED",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// One skipped entity: a coin, a date, a week, a coin-month or a panel row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Skip {
    pub reason: Reason,
    pub key: String,
    pub detail: String,
}

impl Skip {
    pub fn new(reason: Reason, key: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            reason,
            key: key.into(),
            detail: detail.into(),
        }
    }
}

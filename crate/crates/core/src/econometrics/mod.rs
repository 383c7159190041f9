//! Least squares, two-way fixed effects and multicollinearity diagnostics.

mod fe;
mod ols;
mod table;
mod vif;

pub(crate) use fe::{cluster_scores, sandwich};
pub use fe::{prepare_sample, two_way_fe, Coefficient, FeError, FeFit, FeSample, FeSpec, SeType};
pub use ols::{ols, OlsError, OlsFit, RANK_TOLERANCE};
pub use table::{regression_table, stars};
pub use vif::{vif, VifEntry, VifReport, VIF_THRESHOLD};

use std::collections::BTreeMap;

/// Long-format panel: one row per (entity, period) with named numeric columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelFrame {
    entity: Vec<String>,
    period: Vec<String>,
    columns: BTreeMap<String, Vec<f64>>,
}

impl PanelFrame {
    pub fn new(entity: Vec<String>, period: Vec<String>) -> Self {
        assert_eq!(entity.len(), period.len(), "entity and period lengths differ");
        Self {
            entity,
            period,
            columns: BTreeMap::new(),
        }
    }

    pub fn with_column(mut self, name: &str, values: Vec<f64>) -> Self {
        self.insert(name, values);
        self
    }

    pub fn insert(&mut self, name: &str, values: Vec<f64>) {
        assert_eq!(values.len(), self.len(), "column `{name}` has the wrong length");
        self.columns.insert(name.to_string(), values);
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(Vec::as_slice)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn entity(&self) -> &[String] {
        &self.entity
    }

    pub fn period(&self) -> &[String] {
        &self.period
    }

    pub fn len(&self) -> usize {
        self.entity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entity.is_empty()
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> PanelFrame {
        PanelFrame {
            entity: rows.iter().map(|&i| self.entity[i].clone()).collect(),
            period: rows.iter().map(|&i| self.period[i].clone()).collect(),
            columns: self
                .columns
                .iter()
                .map(|(k, v)| (k.clone(), rows.iter().map(|&i| v[i]).collect()))
                .collect(),
        }
    }
}

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::ols::{ols, OlsError};
use super::PanelFrame;
use super::fe::FeError;

/// Conventional multicollinearity cutoff.
pub const VIF_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VifEntry {
    pub regressor: String,
    /// `+inf` when the regressor is an exact linear combination of the others.
    pub vif: f64,
    pub r2_aux: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VifReport {
    pub entries: Vec<VifEntry>,
    pub threshold: f64,
    pub n_rows: usize,
}

impl VifReport {
    pub fn get(&self, name: &str) -> Option<&VifEntry> {
        self.entries.iter().find(|e| e.regressor == name)
    }
}

/// Variance inflation factors over rows where every listed regressor is
/// finite. Each regressor is regressed on the others with an intercept and
/// `vif = 1 / (1 - R^2)`.
pub fn vif(panel: &PanelFrame, regressors: &[&str], threshold: f64) -> Result<VifReport, FeError> {
    if regressors.len() < 2 {
        return Err(FeError::InvalidSpec("VIF needs at least two regressors".into()));
    }
    let cols: Vec<&[f64]> = regressors
        .iter()
        .map(|r| panel.column(r).ok_or_else(|| FeError::UnknownColumn(r.to_string())))
        .collect::<Result<_, _>>()?;
    let rows: Vec<usize> = (0..panel.len()).filter(|&i| cols.iter().all(|c| c[i].is_finite())).collect();
    let n = rows.len();
    // constant columns duplicate the intercept
    let constant: Vec<bool> = cols
        .iter()
        .map(|c| rows.first().is_none_or(|&f| rows.iter().all(|&i| c[i] == c[f])))
        .collect();

    let entries = (0..regressors.len())
        .into_par_iter()
        .map(|j| {
            if constant[j] {
                return Ok(VifEntry {
                    regressor: regressors[j].to_string(),
                    vif: f64::INFINITY,
                    r2_aux: 1.0,
                    flagged: true,
                });
            }
            let others: Vec<&[f64]> = cols
                .iter()
                .enumerate()
                .filter(|(m, _)| *m != j && !constant[*m])
                .map(|(_, c)| *c)
                .collect();
            let x = DMatrix::from_fn(n, others.len(), |i, m| others[m][rows[i]]);
            let y = DVector::from_fn(n, |i, _| cols[j][rows[i]]);
            let r2_aux = match ols(&x, &y, true) {
                Ok(fit) => fit.r2,
                // response constant or spanned by the others
                Err(OlsError::RankDeficient(_)) => 1.0,
                Err(e) => return Err(FeError::Ols(e)),
            };
            let vif = if r2_aux >= 1.0 { f64::INFINITY } else { 1.0 / (1.0 - r2_aux) };
            Ok(VifEntry {
                regressor: regressors[j].to_string(),
                vif,
                r2_aux,
                flagged: vif > threshold,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(VifReport {
        entries,
        threshold,
        n_rows: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(cols: &[(&str, Vec<f64>)]) -> PanelFrame {
        let n = cols[0].1.len();
        let mut p = PanelFrame::new((0..n).map(|i| i.to_string()).collect(), vec!["t".into(); n]);
        for (name, v) in cols {
            p.insert(name, v.clone());
        }
        p
    }

    #[test]
    fn orthogonal_design_gives_one() {
        // centered, orthogonal contrasts
        let a = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let r = vif(&frame(&[("a", a), ("b", b)]), &["a", "b"], VIF_THRESHOLD).unwrap();
        for e in &r.entries {
            assert!((e.vif - 1.0).abs() < 1e-10, "{e:?}");
            assert!(!e.flagged);
        }
    }

    #[test]
    fn duplicate_is_infinite() {
        let a: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let r = vif(&frame(&[("a", a.clone()), ("b", a)]), &["a", "b"], VIF_THRESHOLD).unwrap();
        assert!(r.entries.iter().all(|e| e.vif.is_infinite() && e.flagged && e.r2_aux == 1.0));
    }

    #[test]
    fn needs_two_regressors() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(vif(&frame(&[("a", a)]), &["a"], VIF_THRESHOLD).is_err());
    }
}

use nalgebra::{DMatrix, DVector};

/// Relative tolerance on `|R_jj| / ||x_j||` below which column `j` is
/// treated as linearly dependent on the preceding columns.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OlsError {
    /// Index into the caller's design columns (the intercept is never reported).
    #[error("design column {0} is linearly dependent on earlier columns")]
    RankDeficient(usize),
    #[error("{n} rows cannot identify {k} coefficients")]
    Underdetermined { n: usize, k: usize },
    #[error("response has {y} rows but design has {x}")]
    DimensionMismatch { x: usize, y: usize },
    #[error("non-finite value in design or response")]
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Intercept first when fitted with one.
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub r2: f64,
    pub n: usize,
    pub k: usize,
    pub intercept: bool,
    /// `(X'X)^-1` of the full design, intercept included.
    pub xtx_inv: DMatrix<f64>,
}

impl OlsFit {
    /// Slope coefficients, without the intercept.
    pub fn slopes(&self) -> &[f64] {
        if self.intercept {
            &self.coefficients[1..]
        } else {
            &self.coefficients
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.rss / (self.n - self.k) as f64
    }
}

/// Ordinary least squares by Householder QR.
///
/// The normal equations are never formed. Standard errors are the classical
/// `sqrt(s^2 (X'X)^-1_jj)` with `s^2 = RSS / (n - k)`, where `(X'X)^-1` is
/// obtained as `R^-1 R^-T`.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, intercept: bool) -> Result<OlsFit, OlsError> {
    if x.nrows() != y.len() {
        return Err(OlsError::DimensionMismatch { x: x.nrows(), y: y.len() });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(OlsError::NonFinite);
    }
    let n = x.nrows();
    let offset = usize::from(intercept);
    let k = x.ncols() + offset;
    if n <= k {
        return Err(OlsError::Underdetermined { n, k });
    }
    let design = if intercept { x.clone().insert_column(0, 1.0) } else { x.clone() };

    let norms: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    let qr = design.clone().qr();
    let r = qr.r();
    for (j, norm) in norms.iter().enumerate() {
        if *norm == 0.0 || r[(j, j)].abs() <= RANK_TOLERANCE * norm {
            return Err(OlsError::RankDeficient(j.saturating_sub(offset)));
        }
    }

    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let beta = r
        .solve_upper_triangular(&qty.rows(0, k).into_owned())
        .ok_or(OlsError::RankDeficient(0))?;
    let residuals = y - &design * &beta;
    let rss = residuals.norm_squared();

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(OlsError::RankDeficient(0))?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let sigma2 = rss / (n - k) as f64;
    let standard_errors: Vec<f64> = (0..k).map(|j| (sigma2 * xtx_inv[(j, j)]).sqrt()).collect();
    let t_stats = beta.iter().zip(&standard_errors).map(|(b, s)| b / s).collect();

    let tss = if intercept {
        let m = y.mean();
        y.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    } else {
        y.norm_squared()
    };
    let r2 = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 0.0 };

    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        standard_errors,
        t_stats,
        residuals: residuals.iter().copied().collect(),
        rss,
        r2,
        n,
        k,
        intercept,
        xtx_inv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(xs.len(), 1, xs)
    }

    #[test]
    fn three_point_line() {
        // normal equations: [3 3; 3 5] b = [4; 7] -> b = (-1/6, 3/2)
        let fit = ols(&column(&[0.0, 1.0, 2.0]), &DVector::from_vec(vec![0.0, 1.0, 3.0]), true).unwrap();
        assert!((fit.coefficients[0] + 1.0 / 6.0).abs() < 1e-14);
        assert!((fit.coefficients[1] - 1.5).abs() < 1e-14);
        // residuals (1/6, -1/3, 1/6): rss = 1/6, s^2 = 1/6, var(slope) = s^2 * 3/6
        assert!((fit.rss - 1.0 / 6.0).abs() < 1e-14);
        assert!((fit.standard_errors[1] - (1.0f64 / 12.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn exact_fit() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 + 2.0 * v).collect();
        let fit = ols(&column(&x), &DVector::from_vec(y), true).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let x = DMatrix::from_fn(8, 2, |i, _| (i * i) as f64);
        let y = DVector::from_fn(8, |i, _| i as f64);
        assert_eq!(ols(&x, &y, true).unwrap_err(), OlsError::RankDeficient(1));
        let c = DMatrix::from_element(8, 1, 2.5);
        assert_eq!(ols(&c, &y, true).unwrap_err(), OlsError::RankDeficient(0));
    }

    #[test]
    fn underdetermined() {
        let x = DMatrix::from_fn(2, 1, |i, _| i as f64);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(ols(&x, &y, true), Err(OlsError::Underdetermined { n: 2, k: 2 })));
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let x = DMatrix::from_fn(40, 3, |i, j| ((i * (j + 3) * 7919) % 101) as f64 / 10.0);
        let y = DVector::from_fn(40, |i, _| ((i * 31337) % 97) as f64 / 7.0);
        let fit = ols(&x, &y, true).unwrap();
        let e = DVector::from_vec(fit.residuals.clone());
        assert!(e.sum().abs() < 1e-10 * y.norm());
        for c in x.column_iter() {
            assert!(c.dot(&e).abs() < 1e-10 * c.norm() * y.norm());
        }
        assert!((0.0..=1.0).contains(&fit.r2));
    }
}

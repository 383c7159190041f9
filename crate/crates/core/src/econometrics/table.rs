use std::fmt::Write;

use super::fe::FeFit;

/// Significance stars at the two-sided 10/5/1% normal critical values.
pub fn stars(t: f64) -> &'static str {
    let a = t.abs();
    if a >= 2.576 {
        "***"
    } else if a >= 1.960 {
        "**"
    } else if a >= 1.645 {
        "*"
    } else {
        ""
    }
}

/// Four decimals, or four significant digits in scientific notation for
/// magnitudes below 0.001.
fn cell_number(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x:.4}")
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

/// Side-by-side coefficient table for a sequence of nested fits: estimates
/// with stars, standard errors in parentheses below, then observation count,
/// within R-squared and fixed-effect indicators.
pub fn regression_table(title: &str, fits: &[FeFit]) -> String {
    const LABEL: usize = 18;
    const CELL: usize = 14;
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let mut header = format!("{:<LABEL$}", "");
    for i in 0..fits.len() {
        let _ = write!(header, "{:>CELL$}", format!("({})", i + 1));
    }
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "{}", "-".repeat(LABEL + CELL * fits.len()));

    let mut names: Vec<&str> = Vec::new();
    for f in fits {
        for n in f.coefficients.iter().map(|c| c.name.as_str()).chain(f.absorbed.iter().map(String::as_str)) {
            if !names.contains(&n) {
                names.push(n);
            }
        }
    }
    for name in names {
        let mut est = format!("{name:<LABEL$}");
        let mut se = format!("{:<LABEL$}", "");
        for f in fits {
            if let Some(c) = f.coef(name) {
                let _ = write!(est, "{:>CELL$}", format!("{}{}", cell_number(c.beta), stars(c.t)));
                let _ = write!(se, "{:>CELL$}", format!("({})", cell_number(c.se)));
            } else if f.is_absorbed(name) {
                let _ = write!(est, "{:>CELL$}", "absorbed");
                let _ = write!(se, "{:>CELL$}", "");
            } else {
                let _ = write!(est, "{:>CELL$}", "");
                let _ = write!(se, "{:>CELL$}", "");
            }
        }
        let _ = writeln!(out, "{}", est.trim_end());
        let _ = writeln!(out, "{}", se.trim_end());
    }
    if !fits.is_empty() {
        let _ = writeln!(out, "{}", "-".repeat(LABEL + CELL * fits.len()));
    }
    let rows: [(&str, Box<dyn Fn(&FeFit) -> String>); 5] = [
        ("Observations", Box::new(|f| f.n_rows.to_string())),
        ("Within R2", Box::new(|f| format!("{:.4}", f.within_r2))),
        ("Coin FE", Box::new(|f| yes_no(f.fe_coin).into())),
        ("Month FE", Box::new(|f| yes_no(f.fe_month).into())),
        ("SE", Box::new(|f| f.se_type.label().replace("_by_coin", "").into())),
    ];
    if !fits.is_empty() {
        for (label, cell) in rows.iter() {
            let mut line = format!("{label:<LABEL$}");
            for f in fits {
                let _ = write!(line, "{:>CELL$}", cell(f));
            }
            let _ = writeln!(out, "{line}");
        }
    }
    let _ = writeln!(out, "Significance: * p<0.10, ** p<0.05, *** p<0.01 (two-sided)");
    out
}

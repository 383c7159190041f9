//! CSV emission with a `#` header block describing the run.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::skiplog::Skip;

/// Format with 10 significant digits, dropping trailing zeros.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let s = format!("{x:.9e}");
        let (mant, e) = s.split_once('e').expect("exponent present");
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Accumulates one CSV file. Fields are written verbatim; callers must not
/// pass commas (identifiers in this pipeline never contain them).
#[derive(Debug, Clone)]
pub struct CsvOut {
    text: String,
}

impl CsvOut {
    pub fn new(header: &[(&str, &str)], columns: &[&str]) -> Self {
        let mut text = String::new();
        for (k, v) in header {
            let _ = writeln!(text, "# {k}: {v}");
        }
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(f.as_ref());
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, &self.text)
    }
}

/// Output directory plus the header lines stamped on every file.
#[derive(Debug, Clone)]
pub struct OutputDir {
    pub dir: PathBuf,
    header: Vec<(String, String)>,
}

impl OutputDir {
    pub fn new(dir: &Path, header: Vec<(String, String)>) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            header,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv(&self, stage: &str, columns: &[&str]) -> CsvOut {
        let mut header: Vec<(&str, &str)> = vec![("stage", stage)];
        header.extend(self.header.iter().map(|(k, v)| (k.as_str(), v.as_str())));
        CsvOut::new(&header, columns)
    }

    pub fn write(&self, name: &str, csv: &CsvOut) -> io::Result<()> {
        log::info!("writing {}", self.path(name).display());
        csv.write(&self.path(name))
    }

    pub fn write_text(&self, name: &str, text: &str) -> io::Result<()> {
        log::info!("writing {}", self.path(name).display());
        fs::write(self.path(name), text)
    }

    /// `<stage>_log.csv` with one row per skip.
    pub fn write_log(&self, stage: &str, skips: &[Skip]) -> io::Result<()> {
        let mut csv = self.csv(stage, &["reason", "key", "detail"]);
        for s in skips {
            csv.row(&[s.reason.code(), &s.key, &s.detail.replace(',', ";")]);
        }
        self.write(&format!("{stage}_log.csv"), &csv)
    }
}

/// Read a CSV written by [`CsvOut`], skipping the header block. Returns the
/// column names and the rows.
pub fn read_csv(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let columns = lines.next().map(|l| l.split(',').map(str::to_string).collect()).unwrap_or_default();
    let rows = lines.filter(|l| !l.is_empty()).map(|l| l.split(',').map(str::to_string).collect()).collect();
    Ok((columns, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_significant_digits() {
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(-0.0), "0");
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(0.1 + 0.2), "0.3");
        assert_eq!(fmt_f64(1.0 / 3.0), "0.3333333333");
        assert_eq!(fmt_f64(-123456.789012345), "-123456.789");
        assert_eq!(fmt_f64(2.5e-7), "2.5e-7");
        assert_eq!(fmt_f64(1e20), "1e20");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }

    #[test]
    fn round_trips_to_ten_digits() {
        for x in [std::f64::consts::PI, -2.718281828459045e-3, 6.02214076e23, 1.602e-19] {
            let back: f64 = fmt_f64(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn header_block_then_table() {
        let mut c = CsvOut::new(&[("config", "{}")], &["a", "b"]);
        c.row(&["1", "2"]);
        assert_eq!(c.as_str(), "# config: {}\na,b\n1,2\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        c.write(&p).unwrap();
        let (cols, rows) = read_csv(&p).unwrap();
        assert_eq!(cols, vec!["a", "b"]);
        assert_eq!(rows, vec![vec!["1", "2"]]);
    }
}

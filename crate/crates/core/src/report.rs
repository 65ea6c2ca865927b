//! Line-based `key = value` experiment reports with a CSV series.

use std::fmt::{Display, Write as _};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::Result;

pub const REPORT_HEADER: &str = "# gaugekit-report v1";
pub const REPORT_CSV_HEADER: &str = "# gaugekit-report-csv v1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub name: String,
    pub params: Vec<(String, String)>,
    pub x_label: String,
    pub y_label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub exponent: Option<f64>,
    pub trivial: bool,
    pub verdicts: Vec<(String, bool)>,
    pub metrics: Vec<(String, f64)>,
    pub seed: Option<u64>,
}

fn num(v: f64) -> String {
    format!("{v:.17e}")
}

impl ExperimentReport {
    pub fn new(name: impl Into<String>) -> Self {
        ExperimentReport { name: name.into(), ..Default::default() }
    }

    pub fn param(&mut self, key: &str, value: impl Display) {
        self.params.push((key.to_string(), value.to_string()));
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.push((key.to_string(), value));
    }

    pub fn verdict(&mut self, key: &str, pass: bool) {
        self.verdicts.push((key.to_string(), pass));
    }

    pub fn set_series(&mut self, x_label: &str, y_label: &str, xs: Vec<f64>, ys: Vec<f64>) {
        assert_eq!(xs.len(), ys.len(), "series columns must have equal length");
        self.x_label = x_label.into();
        self.y_label = y_label.into();
        self.xs = xs;
        self.ys = ys;
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.1)
    }

    /// SHA-256 of the parameter block and seed, hex encoded.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        for (k, v) in &self.params {
            h.update(format!("\n{k}={v}").as_bytes());
        }
        if let Some(s) = self.seed {
            h.update(format!("\nseed={s}").as_bytes());
        }
        h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{REPORT_HEADER}").unwrap();
        writeln!(s, "experiment = {}", self.name).unwrap();
        writeln!(s, "config_hash = {}", self.config_hash()).unwrap();
        if let Some(seed) = self.seed {
            writeln!(s, "seed = {seed}").unwrap();
        }
        for (k, v) in &self.params {
            writeln!(s, "param.{k} = {v}").unwrap();
        }
        for (k, v) in &self.metrics {
            writeln!(s, "metric.{k} = {}", num(*v)).unwrap();
        }
        if !self.xs.is_empty() {
            let join = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",");
            writeln!(s, "series.{} = {}", self.x_label, join(&self.xs)).unwrap();
            writeln!(s, "series.{} = {}", self.y_label, join(&self.ys)).unwrap();
        }
        match self.exponent {
            Some(e) => writeln!(s, "exponent = {}", num(e)).unwrap(),
            None => writeln!(s, "exponent = undefined").unwrap(),
        }
        writeln!(s, "trivial = {}", self.trivial).unwrap();
        for (k, v) in &self.verdicts {
            writeln!(s, "verdict.{k} = {}", if *v { "pass" } else { "fail" }).unwrap();
        }
        writeln!(s, "result = {}", if self.passed() { "pass" } else { "fail" }).unwrap();
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_CSV_HEADER}\n{},{}\n", self.x_label, self.y_label);
        for (x, y) in self.xs.iter().zip(&self.ys) {
            writeln!(s, "{},{}", num(*x), num(*y)).unwrap();
        }
        s
    }

    /// Writes `<stem>.txt` and, if a series is present, `<stem>.csv`. The
    /// suffixes are appended, so a dotted stem keeps its last component.
    pub fn write(&self, stem: &Path) -> Result<Vec<PathBuf>> {
        let suffixed = |ext: &str| {
            let mut s = stem.as_os_str().to_owned();
            s.push(".");
            s.push(ext);
            PathBuf::from(s)
        };
        let txt = suffixed("txt");
        std::fs::write(&txt, self.to_text())?;
        let mut out = vec![txt];
        if !self.xs.is_empty() {
            let csv = suffixed("csv");
            std::fs::write(&csv, self.to_csv())?;
            out.push(csv);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_is_deterministic_and_hash_tracks_params() {
        let mut r = ExperimentReport::new("demo");
        r.param("u", "4,8");
        r.set_series("u", "error", vec![4.0, 8.0], vec![0.25, 0.125]);
        r.verdict("ok", true);
        let a = r.to_text();
        assert_eq!(a, r.clone().to_text());
        assert!(a.starts_with(REPORT_HEADER));
        assert!(a.contains("result = pass"));
        let h = r.config_hash();
        assert_eq!(h.len(), 64);
        r.param("extra", 1);
        assert_ne!(h, r.config_hash());
        assert_eq!(r.to_csv().lines().count(), 4);
        assert!(r.to_csv().starts_with(REPORT_CSV_HEADER));
    }
}

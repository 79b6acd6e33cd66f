use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;

/// `sigma[j][k]`: success on task `k` measured after training on task `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessMatrix {
    pub sigma: Vec<Vec<Option<f64>>>,
    /// Success of a from-scratch policy trained on task `k` alone.
    pub ref_sigma: Vec<Option<f64>>,
}

impl SuccessMatrix {
    pub fn new(n_tasks: usize) -> Self {
        SuccessMatrix {
            sigma: vec![vec![None; n_tasks]; n_tasks],
            ref_sigma: vec![None; n_tasks],
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.sigma.len()
    }

    pub fn set(&mut self, after: usize, task: usize, rate: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!("success rate {rate} outside [0, 1]")));
        }
        let n = self.n_tasks();
        let slot = self
            .sigma
            .get_mut(after)
            .and_then(|row| row.get_mut(task))
            .ok_or(Error::DimensionMismatch {
                context: "success matrix index",
                expected: n,
                got: after.max(task) + 1,
            })?;
        *slot = Some(rate);
        Ok(())
    }

    pub fn get(&self, after: usize, task: usize) -> Option<f64> {
        self.sigma.get(after)?.get(task).copied().flatten()
    }

    fn need(&self, after: usize, task: usize) -> Result<f64> {
        self.get(after, task)
            .ok_or_else(|| Error::Config(format!("missing success entry ({after}, {task})")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrlMetrics {
    pub per: f64,
    pub bwt: f64,
    /// `None` when no from-scratch references were measured.
    pub fwt: Option<f64>,
    pub mem: f64,
}

/// PER, BWT and FWT from the matrix; MEM is `stored_params / single_params`.
pub fn compute_metrics(m: &SuccessMatrix, stored_params: usize, single_params: usize) -> Result<CrlMetrics> {
    let n = m.n_tasks();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if single_params == 0 {
        return Err(Error::Config("single-policy parameter count is zero".into()));
    }
    let last = n - 1;
    let mut per = 0.0;
    let mut bwt = 0.0;
    for k in 0..n {
        let fin = m.need(last, k)?;
        per += fin;
        bwt += fin - m.need(k, k)?;
    }
    let fwt = if m.ref_sigma.iter().all(Option::is_some) && m.ref_sigma.len() == n {
        let mut s = 0.0;
        for k in 0..n {
            s += m.need(k, k)? - m.ref_sigma[k].expect("checked");
        }
        Some(s / n as f64)
    } else {
        None
    };
    Ok(CrlMetrics {
        per: per / n as f64,
        bwt: bwt / n as f64,
        fwt,
        mem: stored_params as f64 / single_params as f64,
    })
}

/// Everything measured for one (strategy, stream, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub strategy: String,
    pub stream: String,
    pub seed: u64,
    pub tasks: Vec<String>,
    pub matrix: SuccessMatrix,
    pub stored_params: usize,
    pub single_params: usize,
    pub metrics: CrlMetrics,
    /// Strategy-specific facts, e.g. anchor counts per task.
    #[serde(default)]
    pub notes: serde_json::Map<String, serde_json::Value>,
}

impl EvalReport {
    pub fn new(
        strategy: &str,
        stream: &str,
        seed: u64,
        tasks: Vec<String>,
        matrix: SuccessMatrix,
        stored_params: usize,
        single_params: usize,
    ) -> Result<Self> {
        let metrics = compute_metrics(&matrix, stored_params, single_params)?;
        Ok(EvalReport {
            format_version: REPORT_VERSION,
            strategy: strategy.to_string(),
            stream: stream.to_string(),
            seed,
            tasks,
            matrix,
            stored_params,
            single_params,
            metrics,
            notes: Default::default(),
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: EvalReport = serde_json::from_str(&text)?;
        if report.format_version != REPORT_VERSION {
            return Err(Error::Config(format!(
                "{}: report version {} (expected {REPORT_VERSION})",
                path.display(),
                report.format_version
            )));
        }
        Ok(report)
    }
}

pub const CSV_HEADER: &str = "strategy,stream,seed,per,bwt,fwt,mem";

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

pub fn csv_row(r: &EvalReport) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.strategy,
        r.stream,
        r.seed,
        r.metrics.per,
        r.metrics.bwt,
        fmt_opt(r.metrics.fwt),
        r.metrics.mem
    )
}

pub fn to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One row per (strategy, stream): mean ± std of each metric over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub stream: String,
    pub n_seeds: usize,
    pub per: (f64, f64),
    pub bwt: (f64, f64),
    pub fwt: Option<(f64, f64)>,
    pub mem: (f64, f64),
}

pub fn summarize(reports: &[EvalReport]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in reports {
        let k = (r.strategy.clone(), r.stream.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(strategy, stream)| {
            let group: Vec<&EvalReport> = reports
                .iter()
                .filter(|r| r.strategy == strategy && r.stream == stream)
                .collect();
            let col = |f: &dyn Fn(&CrlMetrics) -> f64| mean_std(&group.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
            let fwts: Option<Vec<f64>> = group.iter().map(|r| r.metrics.fwt).collect();
            SummaryRow {
                n_seeds: group.len(),
                per: col(&|m| m.per),
                bwt: col(&|m| m.bwt),
                fwt: fwts.map(|v| mean_std(&v)),
                mem: col(&|m| m.mem),
                strategy,
                stream,
            }
        })
        .collect()
}

/// Aligned plain-text table of a summary.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let pm = |(m, s): (f64, f64)| format!("{m:.3} ± {s:.3}");
    let header = ["strategy", "stream", "seeds", "PER", "BWT", "FWT", "MEM"];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.strategy.clone(),
                r.stream.clone(),
                r.n_seeds.to_string(),
                pm(r.per),
                pm(r.bwt),
                r.fwt.map(pm).unwrap_or_else(|| "-".into()),
                pm(r.mem),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    for row in &body {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn filled(rows: &[&[f64]]) -> SuccessMatrix {
        let mut m = SuccessMatrix::new(rows.len());
        for (j, row) in rows.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                m.set(j, k, v).unwrap();
            }
        }
        m
    }

    #[test]
    fn per_is_final_row_mean() {
        let m = filled(&[&[0.9], &[0.8, 0.6]]);
        let c = compute_metrics(&m, 10, 10).unwrap();
        assert_abs_diff_eq!(c.per, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(c.bwt, -0.05, epsilon = 1e-12);
        assert_eq!(c.fwt, None);
    }

    #[test]
    fn frozen_diagonal_gives_zero_bwt() {
        let m = filled(&[&[0.3], &[0.3, 0.7], &[0.3, 0.7, 0.5]]);
        assert_eq!(compute_metrics(&m, 1, 1).unwrap().bwt, 0.0);
    }

    #[test]
    fn fwt_against_references() {
        let mut m = filled(&[&[0.5], &[0.5, 1.0]]);
        m.ref_sigma = vec![Some(0.4), Some(0.8)];
        assert_abs_diff_eq!(compute_metrics(&m, 1, 1).unwrap().fwt.unwrap(), 0.15, epsilon = 1e-12);
    }

    #[test]
    fn mem_is_ratio() {
        let m = filled(&[&[1.0], &[1.0, 1.0], &[1.0; 3], &[1.0; 4]]);
        assert_eq!(compute_metrics(&m, 4 * 123, 123).unwrap().mem, 4.0);
    }

    #[test]
    fn missing_entry_is_an_error() {
        let mut m = SuccessMatrix::new(2);
        m.set(1, 0, 0.5).unwrap();
        assert!(compute_metrics(&m, 1, 1).is_err());
        assert!(m.set(0, 0, 1.5).is_err());
        assert!(m.set(2, 0, 0.5).is_err());
    }

    #[test]
    fn json_roundtrip_and_summary() {
        let m = filled(&[&[1.0], &[0.5, 0.25]]);
        let r = EvalReport::new("SCN", "s", 0, vec!["U-N".into(), "U-IA".into()], m, 2, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        r.save_json(&p).unwrap();
        assert_eq!(EvalReport::load_json(&p).unwrap(), r);
        let mut r2 = r.clone();
        r2.seed = 1;
        let rows = summarize(&[r, r2]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].per.1, 0.0);
        assert!(render_table(&rows).contains("SCN"));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let m = filled(&[&[1.0]]);
        let r = EvalReport::new("FZ", "s", 3, vec!["U-N".into()], m, 1, 1).unwrap();
        let csv = to_csv(&[r]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "FZ,s,3,1,0,,1");
    }
}

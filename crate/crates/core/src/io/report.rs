//! CSV result tables with four-decimal values.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{ClassificationReport, RegressionReport};

#[derive(Debug, Clone, PartialEq)]
pub enum ReportData {
    /// `(split name, report)` rows.
    Classification(Vec<(String, ClassificationReport)>),
    /// `(dataset name, report)` rows.
    Iqa(Vec<(String, RegressionReport)>),
    /// One report per fold; a mean row is appended.
    CvSummary(Vec<ClassificationReport>),
}

impl ReportData {
    pub fn kind(&self) -> &'static str {
        match self {
            ReportData::Classification(_) => "classification",
            ReportData::Iqa(_) => "iqa",
            ReportData::CvSummary(_) => "cv-summary",
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            ReportData::Classification(v) => v.is_empty(),
            ReportData::Iqa(v) => v.is_empty(),
            ReportData::CvSummary(v) => v.is_empty(),
        }
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains([',', '\n', '\r', '"']) {
        return Err(Error::InvalidArgument(format!("report row name {name:?}")));
    }
    Ok(())
}

fn class_row(out: &mut String, name: &str, r: &ClassificationReport) {
    writeln!(
        out,
        "{name},{:.4},{:.4},{:.4},{:.4},{}",
        r.accuracy, r.precision, r.recall, r.f1, r.averaging
    )
    .expect("string write");
}

pub fn render_report(data: &ReportData) -> Result<String> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(format!("no rows for {} report", data.kind())));
    }
    let mut out = String::new();
    match data {
        ReportData::Classification(rows) => {
            out.push_str("split,accuracy,precision,recall,f1,averaging\n");
            for (name, r) in rows {
                check_name(name)?;
                class_row(&mut out, name, r);
            }
        }
        ReportData::Iqa(rows) => {
            out.push_str("dataset,rmse,plcc,srocc\n");
            for (name, r) in rows {
                check_name(name)?;
                writeln!(out, "{name},{:.4},{:.4},{:.4}", r.rmse, r.plcc, r.srocc).expect("string write");
            }
        }
        ReportData::CvSummary(folds) => {
            let averaging = folds[0].averaging;
            if folds.iter().any(|f| f.averaging != averaging) {
                return Err(Error::InvalidArgument("folds use different averaging schemes".into()));
            }
            out.push_str("fold,accuracy,precision,recall,f1,averaging\n");
            for (i, r) in folds.iter().enumerate() {
                class_row(&mut out, &(i + 1).to_string(), r);
            }
            let n = folds.len() as f64;
            let mean = |f: fn(&ClassificationReport) -> f64| folds.iter().map(f).sum::<f64>() / n;
            let summary = ClassificationReport {
                accuracy: mean(|r| r.accuracy),
                precision: mean(|r| r.precision),
                recall: mean(|r| r.recall),
                f1: mean(|r| r.f1),
                averaging,
                per_class: Vec::new(),
            };
            class_row(&mut out, "mean", &summary);
        }
    }
    Ok(out)
}

pub fn emit_report(data: &ReportData, path: &Path) -> Result<()> {
    let text = render_report(data)?;
    super::write_atomic(path, text.as_bytes())
}

//! JSON results files: raw evaluation outcomes that `report` renders to CSV.
//!
//! ```json
//! {"kind": "classification", "name": "test", "classes": [...], "confusion": [[...], ...]}
//! {"kind": "iqa", "name": "koniq", "rmse": 0.1, "plcc": 0.9, "srocc": 0.9}
//! {"kind": "cv-summary", "classes": [...], "folds": [[[...], ...], ...]}
//! ```

use std::path::Path;

use serde_json::{json, Value};

use agropath::io::write_atomic;
use agropath::metrics::{ConfusionMatrix, RegressionReport};
use agropath::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Results {
    Classification {
        name: String,
        classes: Vec<String>,
        matrix: ConfusionMatrix,
    },
    Iqa {
        name: String,
        report: RegressionReport,
    },
    CvSummary {
        classes: Vec<String>,
        folds: Vec<ConfusionMatrix>,
    },
}

fn matrix_json(m: &ConfusionMatrix) -> Value {
    let rows: Vec<Vec<u64>> = (0..m.k()).map(|t| (0..m.k()).map(|p| m.get(t, p)).collect()).collect();
    json!(rows)
}

fn bad(path: &Path, what: &str) -> Error {
    Error::Data(format!("results file {}: {what}", path.display()))
}

fn matrix_from(v: &Value, path: &Path) -> Result<ConfusionMatrix> {
    let rows: Vec<Vec<u64>> = serde_json::from_value(v.clone()).map_err(|e| bad(path, &e.to_string()))?;
    ConfusionMatrix::from_counts(&rows)
}

fn strings(v: &Value, path: &Path) -> Result<Vec<String>> {
    serde_json::from_value(v.clone()).map_err(|e| bad(path, &e.to_string()))
}

impl Results {
    pub fn kind(&self) -> &'static str {
        match self {
            Results::Classification { .. } => "classification",
            Results::Iqa { .. } => "iqa",
            Results::CvSummary { .. } => "cv-summary",
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Results::Classification { name, classes, matrix } => json!({
                "kind": self.kind(),
                "name": name,
                "classes": classes,
                "confusion": matrix_json(matrix),
            }),
            Results::Iqa { name, report } => json!({
                "kind": self.kind(),
                "name": name,
                "rmse": report.rmse,
                "plcc": report.plcc,
                "srocc": report.srocc,
            }),
            Results::CvSummary { classes, folds } => json!({
                "kind": self.kind(),
                "classes": classes,
                "folds": folds.iter().map(matrix_json).collect::<Vec<_>>(),
            }),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_json()).expect("json values serialize");
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let v: Value = serde_json::from_str(&text).map_err(|e| bad(path, &e.to_string()))?;
        let field = |k: &str| v.get(k).ok_or_else(|| bad(path, &format!("missing '{k}'")));
        let name = || -> Result<String> {
            field("name")?
                .as_str()
                .map(String::from)
                .ok_or_else(|| bad(path, "'name' is not a string"))
        };
        let number = |k: &str| -> Result<f64> {
            field(k)?
                .as_f64()
                .ok_or_else(|| bad(path, &format!("'{k}' is not a number")))
        };
        match field("kind")?.as_str() {
            Some("classification") => Ok(Results::Classification {
                name: name()?,
                classes: strings(field("classes")?, path)?,
                matrix: matrix_from(field("confusion")?, path)?,
            }),
            Some("iqa") => Ok(Results::Iqa {
                name: name()?,
                report: RegressionReport {
                    rmse: number("rmse")?,
                    plcc: number("plcc")?,
                    srocc: number("srocc")?,
                },
            }),
            Some("cv-summary") => {
                let folds = field("folds")?
                    .as_array()
                    .ok_or_else(|| bad(path, "'folds' is not an array"))?
                    .iter()
                    .map(|m| matrix_from(m, path))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Results::CvSummary {
                    classes: strings(field("classes")?, path)?,
                    folds,
                })
            }
            other => Err(bad(path, &format!("unknown kind {other:?}"))),
        }
    }
}

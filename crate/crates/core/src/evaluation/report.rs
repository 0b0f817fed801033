use super::{DepthMetricReport, PoseMetricReport};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// One labelled result; `error` is set when the run producing it failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub label: String,
    pub depth: Option<DepthMetricReport>,
    pub pose: Option<PoseMetricReport>,
    pub error: Option<String>,
}

impl MetricsRow {
    pub fn ok(label: impl Into<String>, depth: Option<DepthMetricReport>, pose: Option<PoseMetricReport>) -> Self {
        Self {
            label: label.into(),
            depth,
            pose,
            error: None,
        }
    }

    pub fn failed(label: impl Into<String>, error: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            depth: None,
            pose: None,
            error: Some(error.into()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub title: String,
    pub rows: Vec<MetricsRow>,
}

const COLUMNS: [&str; 12] = [
    "RMSE", "LogRMSE", "MAE", "MedAE", "AbsRel", "SqRel", "d1", "d2", "d3", "ATE", "RTE", "ROT",
];

impl MetricsTable {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            rows: Vec::new(),
        }
    }

    /// Tab-separated table; missing cells are `--`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.title);
        let _ = writeln!(s, "config\t{}\tstatus", COLUMNS.join("\t"));
        for r in &self.rows {
            let mut cells = vec![r.label.clone()];
            let f = |v: f64| format!("{v:.4}");
            match &r.depth {
                Some(d) => cells.extend(
                    [d.rmse, d.rmse_log, d.mae, d.medae, d.abs_rel, d.sq_rel, d.delta1, d.delta2, d.delta3].map(f),
                ),
                None => cells.extend(std::iter::repeat_n("--".to_string(), 9)),
            }
            match &r.pose {
                Some(p) => cells.extend([p.ate, p.rte, p.rot].map(f)),
                None => cells.extend(std::iter::repeat_n("--".to_string(), 3)),
            }
            cells.push(match &r.error {
                None => "ok".into(),
                Some(e) => format!("failed: {}", e.replace(['\t', '\n'], " ")),
            });
            let _ = writeln!(s, "{}", cells.join("\t"));
        }
        s
    }

    /// Writes `<stem>.tsv` and `<stem>.json`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
        let tsv = stem.with_extension("tsv");
        std::fs::write(&tsv, self.to_text()).map_err(|e| Error::io(format!("writing {}", tsv.display()), e))?;
        let json = stem.with_extension("json");
        let body = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))?;
        std::fs::write(&json, body).map_err(|e| Error::io(format!("writing {}", json.display()), e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })
    }
}

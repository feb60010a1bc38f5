//! Consolidated reporting over a set of run manifests.

use std::path::Path;

use crate::error::{io_err, CliError, Result};
use crate::experiments::{RunManifest, RunSummary};

/// One line of the consolidated table.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub experiment: String,
    pub metric: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Loads each manifest, checks that every artifact it references still
/// exists, and collects the summary rows.  An empty manifest list
/// yields an empty table.
pub fn collect(manifest_paths: &[impl AsRef<Path>]) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for path in manifest_paths {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
        let manifest: RunManifest = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let mut summary: Option<RunSummary> = None;
        for name in &manifest.artifacts {
            let artifact = dir.join(name);
            if !artifact.is_file() {
                return Err(CliError::MissingArtifact(artifact.display().to_string()));
            }
            if name == "summary.json" {
                let raw = std::fs::read(&artifact).map_err(|e| io_err(&artifact, e))?;
                summary = Some(serde_json::from_slice(&raw).map_err(|e| {
                    CliError::Config(format!("{}: {e}", artifact.display()))
                })?);
            }
        }
        let summary = summary.ok_or_else(|| {
            CliError::Config(format!(
                "{}: manifest lists no summary.json artifact",
                path.display()
            ))
        })?;
        for r in summary.rows {
            rows.push(ReportRow {
                experiment: summary.experiment.clone(),
                metric: r.metric,
                value: r.value,
                tolerance: r.tolerance,
                pass: r.pass,
            });
        }
    }
    Ok(rows)
}

/// Renders the table in the CSV interchange dialect.
pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("experiment,metric,value,tolerance,pass\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.experiment, r.metric, r.value, r.tolerance, r.pass
        ));
    }
    out
}

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::commands::load_rows;
use crate::runs::{compute_row, Workspace};
use crate::HarnessError;

/// Report files in rendering order with the command that produces each.
pub const SECTIONS: [(&str, &str); 7] = [
    ("eval", "eval"),
    ("baseline", "baseline"),
    ("sweep-bits", "sweep-bits"),
    ("sweep-alpha", "sweep-alpha"),
    ("sweep-zones", "sweep-zones"),
    ("drift", "drift"),
    ("ad-eval", "ad-eval"),
];

fn fmt(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:.6}")
    }
}

/// Renders `summary.md` and one CSV per table under `report/`. Missing
/// sections are listed rather than skipped. Returns the Markdown.
pub fn render(ws: &Workspace) -> Result<String, HarnessError> {
    let dir = ws.path("report");
    std::fs::create_dir_all(&dir)?;
    let mut md = String::from("# Results\n\n");
    let mut missing = Vec::new();
    for (name, cmd) in SECTIONS {
        let Ok(rows) = load_rows(ws, name) else {
            missing.push((name, cmd));
            continue;
        };
        let cols: Vec<String> = {
            let mut c = std::collections::BTreeSet::new();
            rows.iter().for_each(|r| c.extend(r.numbers().into_keys()));
            c.into_iter().collect()
        };
        let _ = writeln!(md, "## {name}\n");
        let _ = writeln!(md, "| id | method | {} |", cols.join(" | "));
        let _ = writeln!(md, "|---|---|{}", "---|".repeat(cols.len()));
        let mut csv = format!("id,method,{}\n", cols.join(","));
        for r in &rows {
            let nums = r.numbers();
            let cells: Vec<String> = cols.iter().map(|c| nums.get(c).map(|v| fmt(*v)).unwrap_or_default()).collect();
            let raw: Vec<String> = cols.iter().map(|c| nums.get(c).map(|v| v.to_string()).unwrap_or_default()).collect();
            let _ = writeln!(md, "| {} | {} | {} |", r.id, r.report.method, cells.join(" | "));
            let _ = writeln!(csv, "{},{},{}", r.id, r.report.method, raw.join(","));
        }
        let _ = writeln!(md, "\nSource: `reports/{name}.json`, table data in `report/{name}.csv`.\n");
        std::fs::write(dir.join(format!("{name}.csv")), csv)?;
    }
    if !missing.is_empty() {
        md.push_str("## Missing\n\n");
        for (name, cmd) in &missing {
            let _ = writeln!(md, "- `{name}`: not run yet (`fpnet {cmd}`)");
        }
        md.push('\n');
    }
    let mut curves: Vec<String> = std::fs::read_dir(ws.path("curves"))
        .map(|it| it.filter_map(|e| e.ok()).map(|e| e.file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    curves.sort();
    let _ = writeln!(md, "---\n");
    let _ = writeln!(md, "config sha256 `{}`, seed {}, fpnet-harness {}", ws.cfg.hash(), ws.cfg.seed, env!("CARGO_PKG_VERSION"));
    if !curves.is_empty() {
        let _ = writeln!(md, "\ncurves: {}", curves.iter().map(|c| format!("`curves/{c}`")).collect::<Vec<_>>().join(", "));
    }
    std::fs::write(ws.path("summary.md"), &md)?;
    Ok(md)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reproduction {
    pub key: String,
    pub stored: f64,
    pub recomputed: f64,
    pub identical: bool,
}

/// All metric keys (`report/row/field`) present in the run directory.
pub fn metric_keys(ws: &Workspace) -> Vec<String> {
    let mut keys = Vec::new();
    for (name, _) in SECTIONS {
        if let Ok(rows) = load_rows(ws, name) {
            for r in rows {
                keys.extend(r.numbers().into_keys().map(|f| format!("{name}/{}/{f}", r.id)));
            }
        }
    }
    keys
}

/// Recomputes the row holding `key` (a random stored metric when `None`)
/// from the stored config and seeds, and compares the value bit for bit.
pub fn reproduce(ws: &Workspace, key: Option<&str>) -> Result<Reproduction, HarnessError> {
    let key = match key {
        Some(k) => k.to_string(),
        None => {
            let keys = metric_keys(ws);
            if keys.is_empty() {
                return Err(HarnessError::Missing("stored metrics (run a command first)".into()));
            }
            keys[rand::thread_rng().gen_range(0..keys.len())].clone()
        }
    };
    let parts: Vec<&str> = key.splitn(3, '/').collect();
    let [report, id, field] = parts[..] else {
        return Err(HarnessError::Config(format!("metric key {key:?} is not report/row/field")));
    };
    let row = load_rows(ws, report)?
        .into_iter()
        .find(|r| r.id == id)
        .ok_or_else(|| HarnessError::Missing(format!("row {id} in reports/{report}.json")))?;
    let stored = *row.numbers().get(field).ok_or_else(|| HarnessError::Missing(format!("field {field} in {key}")))?;
    let fresh = compute_row(ws, id, &row.source)?;
    let recomputed = *fresh.numbers().get(field).ok_or_else(|| HarnessError::Missing(format!("recomputed {key}")))?;
    Ok(Reproduction { key, stored, recomputed, identical: stored.to_bits() == recomputed.to_bits() })
}

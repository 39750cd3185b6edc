use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::models::Preset;

use super::{Metrics, TrainError};

fn io(path: &Path, source: std::io::Error) -> TrainError {
    TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Canonical presets first in table order, then other variants as given.
fn ordered(metrics: &[Metrics]) -> Vec<&Metrics> {
    let rank = |m: &Metrics| {
        Preset::CANONICAL
            .iter()
            .position(|p| p.name() == m.variant)
            .unwrap_or(Preset::CANONICAL.len())
    };
    let mut out: Vec<&Metrics> = metrics.iter().collect();
    out.sort_by_key(|m| rank(m));
    out
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

/// Writes `report.txt`, `report.csv` and `confusion_<variant>.csv` (unit
/// level) into `out_dir`.
pub fn emit_report(metrics: &[Metrics], out_dir: &Path) -> Result<(), TrainError> {
    if metrics.is_empty() {
        return Err(TrainError::Config("report needs at least one variant".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let rows = ordered(metrics);
    let width = rows.iter().map(|m| m.variant.len()).max().unwrap_or(0).max("Variant".len());

    let mut txt = String::new();
    let _ = writeln!(txt, "{:<width$}  {:>14}  {:>15}", "Variant", "Unit acc (%)", "Video acc (%)");
    let _ = writeln!(txt, "{}", "-".repeat(width + 33));
    let mut csv = String::from("variant,unit_acc,video_acc\n");
    for m in &rows {
        let _ = writeln!(
            txt,
            "{:<width$}  {:>14.2}  {:>15.2}",
            m.variant,
            100.0 * m.per_unit_accuracy,
            100.0 * m.per_video_accuracy
        );
        let _ = writeln!(csv, "{},{:.6},{:.6}", m.variant, m.per_unit_accuracy, m.per_video_accuracy);

        let mut conf = String::from("truth\\pred");
        for c in &m.class_names {
            let _ = write!(conf, ",{c}");
        }
        conf.push('\n');
        for (name, row) in m.class_names.iter().zip(&m.confusion) {
            conf.push_str(name);
            for v in row {
                let _ = write!(conf, ",{v}");
            }
            conf.push('\n');
        }
        let path = out_dir.join(format!("confusion_{}.csv", file_safe(&m.variant)));
        fs::write(&path, conf).map_err(|e| io(&path, e))?;
    }
    for (name, body) in [("report.txt", txt), ("report.csv", csv)] {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| io(&path, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub variant: String,
    pub unit_acc: f64,
    pub video_acc: f64,
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>, TrainError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    let parse_err = |msg: String| TrainError::Parse {
        path: path.display().to_string(),
        msg,
    };
    let mut lines = text.lines();
    if lines.next() != Some("variant,unit_acc,video_acc") {
        return Err(parse_err("missing header".into()));
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let [variant, u, v] = f[..] else {
                return Err(parse_err(format!("bad row {l:?}")));
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(format!("bad number {s:?}")));
            Ok(ReportRow {
                variant: variant.to_string(),
                unit_acc: num(u)?,
                video_acc: num(v)?,
            })
        })
        .collect()
}

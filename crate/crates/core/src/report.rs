//! Comparison tables and accuracy-vs-epoch SVG plots from run directories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cells::GateVariant;
use crate::error::{Error, Result};
use crate::harness::{RunConfig, RunStatus, RunSummary, CONFIG_FILE, METRICS_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub lr: f64,
    pub wall_time_s: f64,
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>()
        != crate::harness::METRICS_HEADER
            .split(',')
            .collect::<Vec<_>>()
    {
        return Err(Error::Config(format!(
            "{}: unexpected header {:?}",
            path.display(),
            headers
        )));
    }
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        let row: MetricsRow = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if !(0.0..=1.0).contains(&row.test_accuracy) {
            return Err(Error::Config(format!(
                "{}: accuracy {} outside [0, 1]",
                path.display(),
                row.test_accuracy
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub label: String,
    pub variant: GateVariant,
    pub eta0: f64,
    pub seed: u64,
    pub param_count: Option<usize>,
    pub status: Option<RunStatus>,
    pub metrics: Vec<MetricsRow>,
}

impl RunRecord {
    pub fn best_accuracy(&self) -> Option<f64> {
        self.metrics
            .iter()
            .map(|r| r.test_accuracy)
            .reduce(f64::max)
    }
}

/// Reads one run directory. The summary is preferred for identity and
/// status; the saved config is the fallback.
pub fn read_run(dir: &Path) -> Result<RunRecord> {
    let metrics = read_metrics(&dir.join(METRICS_FILE))?;
    let label = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let (variant, eta0, seed, param_count, status) = match RunSummary::load(dir) {
        Ok(s) => (
            s.variant,
            s.eta0,
            s.seed,
            Some(s.param_count),
            Some(s.status),
        ),
        Err(_) => {
            let c = RunConfig::load(&dir.join(CONFIG_FILE))?;
            let pc = c
                .task_input_dim()
                .and_then(|m| crate::cells::param_count(c.variant, m, c.hidden).ok());
            (c.variant, c.eta0, c.seed, pc, None)
        }
    };
    Ok(RunRecord {
        dir: dir.to_path_buf(),
        label,
        variant,
        eta0,
        seed,
        param_count,
        status,
        metrics,
    })
}

/// One row per run, ordered by variant, then coefficient, then seed.
pub fn comparison_table(runs: &[RunRecord]) -> String {
    let mut sorted: Vec<&RunRecord> = runs.iter().collect();
    sorted.sort_by(|a, b| {
        (a.variant.tag(), a.seed)
            .cmp(&(b.variant.tag(), b.seed))
            .then(a.eta0.total_cmp(&b.eta0))
    });
    let mut out = String::from(
        "| variant | eta0 | seed | params | best accuracy | epochs |\n|---|---|---|---|---|---|\n",
    );
    for r in sorted {
        let mut acc = r
            .best_accuracy()
            .map_or("-".to_string(), |a| format!("{a:.4}"));
        match r.status {
            Some(RunStatus::Diverged) => acc.push_str(" (diverged)"),
            Some(RunStatus::EarlyStopped) => acc.push_str(" (early stop)"),
            _ => {}
        }
        let _ = writeln!(
            out,
            "| {} | {:e} | {} | {} | {} | {} |",
            r.variant,
            r.eta0,
            r.seed,
            r.param_count.map_or("-".to_string(), |p| p.to_string()),
            acc,
            r.metrics.len()
        );
    }
    out
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// Accuracy against epoch. The y axis always spans [0, 1]; the x axis spans
/// epoch 1 through the last recorded epoch.
pub fn accuracy_svg(title: &str, metrics: &[MetricsRow]) -> String {
    let x_min = 1.0;
    let x_max = metrics.iter().map(|r| r.epoch).max().unwrap_or(1).max(2) as f64;
    let px = |e: f64| LEFT + (e - x_min) / (x_max - x_min) * (W - LEFT - RIGHT);
    let py = |a: f64| TOP + (1.0 - a) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" data-x-min="{x_min}" data-x-max="{x_max}" data-y-min="0" data-y-max="1">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    for k in 0..=4 {
        let a = k as f64 / 4.0;
        let y = py(a);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{a:.2}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let base = H - BOTTOM;
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base}" stroke="black"/><line x1="{LEFT}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        W - RIGHT
    );
    for e in [x_min, x_max] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{e}</text>"#,
            px(e),
            base + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">epoch</text><text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">test accuracy</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0,
        H / 2.0,
        H / 2.0
    );
    let points: Vec<String> = metrics
        .iter()
        .map(|r| format!("{:.2},{:.2}", px(r.epoch as f64), py(r.test_accuracy)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
        points.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub table: String,
    pub runs: Vec<RunRecord>,
    pub warnings: Vec<String>,
    pub files: Vec<PathBuf>,
}

/// Reads every run directory (unreadable ones become warnings), writes
/// `table.md`, and for each run `<name>.svg` and `<name>.csv` into `out`.
pub fn write_report(dirs: &[PathBuf], out: &Path) -> Result<ReportOutput> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut runs = Vec::new();
    let mut warnings = Vec::new();
    for dir in dirs {
        match read_run(dir) {
            Ok(r) => runs.push(r),
            Err(e) => warnings.push(format!("skipping {}: {e}", dir.display())),
        }
    }
    let mut files = Vec::new();
    let table = comparison_table(&runs);
    let table_path = out.join("table.md");
    std::fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    files.push(table_path);
    for r in &runs {
        let svg = out.join(format!("{}.svg", r.label));
        std::fs::write(&svg, accuracy_svg(&r.label, &r.metrics)).map_err(|e| Error::io(&svg, e))?;
        let csv = out.join(format!("{}.csv", r.label));
        std::fs::copy(r.dir.join(METRICS_FILE), &csv).map_err(|e| Error::io(&csv, e))?;
        files.push(svg);
        files.push(csv);
    }
    Ok(ReportOutput {
        table,
        runs,
        warnings,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(accs: &[f64]) -> Vec<MetricsRow> {
        accs.iter()
            .enumerate()
            .map(|(k, &a)| MetricsRow {
                epoch: k + 1,
                train_loss: 1.0,
                test_accuracy: a,
                lr: 1e-3,
                wall_time_s: 0.0,
            })
            .collect()
    }

    #[test]
    fn svg_axes_cover_unit_interval_and_all_epochs() {
        let svg = accuracy_svg("t", &rows(&[0.1, 0.5, 0.7, 0.2, 0.9]));
        assert!(svg.contains(r#"data-x-min="1" data-x-max="5" data-y-min="0" data-y-max="1""#));
        assert_eq!(svg.matches(',').count(), 5);
        assert!(svg.contains("1.00") && svg.contains("0.00"));
    }

    #[test]
    fn diverged_is_annotated() {
        let r = RunRecord {
            dir: "x".into(),
            label: "x".into(),
            variant: GateVariant::BiasOnly,
            eta0: 0.1,
            seed: 0,
            param_count: Some(4100),
            status: Some(RunStatus::Diverged),
            metrics: rows(&[0.3]),
        };
        let t = comparison_table(&[r]);
        assert!(t.contains("0.3000 (diverged)"), "{t}");
        assert!(t.contains("lstm3"));
    }

    #[test]
    fn malformed_csv_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(
            &p,
            "epoch,train_loss,test_accuracy,lr,wall_time_s\n1,x,0.5,1,0\n",
        )
        .unwrap();
        assert!(read_metrics(&p).is_err());
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(read_metrics(&p).is_err());
        std::fs::write(
            &p,
            "epoch,train_loss,test_accuracy,lr,wall_time_s\n1,0.3,0.5,1,0\n",
        )
        .unwrap();
        assert_eq!(read_metrics(&p).unwrap().len(), 1);
    }
}

//! Tables, bar-chart data and the run manifest, rebuilt from the cell files of a
//! results directory. Output depends only on the cell files and `run.json`, so
//! re-running is idempotent.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::criticism::TestKind;
use crate::error::Result;
use crate::model::KernelFamily;

use super::config::ParamSet;
use super::datasets::window_tag;
use super::matrix::{CellResult, RunRecord, CELL_DIR};
use super::write_json;

pub const TABLE_HEADER: [&str; 6] = ["dataset", "M0", "window_pct", "ilr_Ep", "llr_full_Ep", "llr_partial_Ep"];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub table2: PathBuf,
    pub table3: PathBuf,
    pub barcharts: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Every `cells/*.json` in `dir`, in canonical row order.
pub fn load_cells(dir: &Path) -> Result<Vec<CellResult>> {
    let cell_dir = dir.join(CELL_DIR);
    let mut cells = Vec::new();
    if cell_dir.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(&cell_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            cells.push(serde_json::from_slice::<CellResult>(&fs::read(&p)?)?);
        }
    }
    cells.sort_by(|a, b| row_key(a).partial_cmp(&row_key(b)).unwrap_or(std::cmp::Ordering::Equal));
    Ok(cells)
}

fn row_key(c: &CellResult) -> (bool, ParamSet, KernelFamily, f64) {
    (c.spec.control, c.spec.dataset, c.spec.fitted, -c.spec.window)
}

fn fmt_pct(fraction: f64) -> String {
    if fraction.is_finite() {
        window_tag(fraction)
    } else {
        String::new()
    }
}

fn fmt_p(p: Option<f64>) -> String {
    p.map_or_else(String::new, |p| format!("{p:.7}"))
}

fn write_table(path: &Path, rows: &[&CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TABLE_HEADER)?;
    for c in rows {
        w.write_record([
            c.spec.dataset.label().to_string(),
            c.spec.fitted.formula().to_string(),
            fmt_pct(c.realized_fraction),
            fmt_p(c.e_hat(TestKind::Ilr)),
            fmt_p(c.e_hat(TestKind::LlrFull)),
            fmt_p(c.e_hat(TestKind::LlrPartial)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn family_label(f: KernelFamily) -> &'static str {
    match f {
        KernelFamily::Exponential => "Exp",
        KernelFamily::PowerLaw => "Pow",
        KernelFamily::Gaussian => "Gauss",
    }
}

struct Bar {
    group: String,
    values: [Option<f64>; 3],
}

fn bars(rows: &[&CellResult]) -> Vec<Bar> {
    rows.iter()
        .map(|c| Bar {
            group: format!("{} ({})", family_label(c.spec.fitted), fmt_pct(c.realized_fraction)),
            values: TestKind::ALL.map(|t| c.e_hat(t)),
        })
        .collect()
}

fn write_barchart_csv(path: &Path, bars: &[Bar]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["group", "test", "e_hat_p"])?;
    for b in bars {
        for (t, v) in TestKind::ALL.iter().zip(b.values) {
            w.write_record([b.group.as_str(), t.tag(), &fmt_p(v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

const COLOURS: [&str; 3] = ["#4c72b0", "#dd8452", "#55a868"];

/// Grouped bar chart of expected p-values on a fixed [0, 1] axis.
pub fn barchart_svg(title: &str, groups: &[(String, [Option<f64>; 3])]) -> String {
    let (left, top, plot_h, bar_w, gap) = (60.0, 40.0, 300.0, 18.0, 24.0);
    let group_w = 3.0 * bar_w + gap;
    let width = left + group_w * groups.len().max(1) as f64 + 140.0;
    let height = top + plot_h + 60.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, escape(title));
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let y = top + plot_h * (1.0 - v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{}" y1="{y}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{v:.2}</text>"##,
            width - 140.0,
            left - 6.0,
            y + 4.0
        );
    }
    for (g, (label, values)) in groups.iter().enumerate() {
        let x0 = left + gap / 2.0 + g as f64 * group_w;
        for (k, v) in values.iter().enumerate() {
            if let Some(v) = v {
                let h = plot_h * v.clamp(0.0, 1.0);
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="{bar_w}" height="{h:.1}" fill="{}"/>"#,
                    x0 + k as f64 * bar_w,
                    top + plot_h - h,
                    COLOURS[k]
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + 1.5 * bar_w,
            top + plot_h + 18.0,
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">E(p)</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    for (k, t) in TestKind::ALL.iter().enumerate() {
        let x = width - 120.0;
        let y = top + 10.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            y - 10.0,
            COLOURS[k],
            x + 18.0,
            y,
            t.tag()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Serialize)]
struct Manifest<'a> {
    run: Option<&'a RunRecord>,
    cell_seeds: BTreeMap<&'a str, u64>,
    completed: Vec<&'a str>,
    failed: BTreeMap<&'a str, &'a [String]>,
    files: Vec<String>,
}

/// Rebuild `table2.csv`, `table3.csv`, `barchart_<dataset>.csv` (plus `.svg` unless
/// disabled in the run config) and `manifest.json` in `dir`.
pub fn report(dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(dir)?;
    let cells = load_cells(dir)?;
    let run: Option<RunRecord> = match fs::read(dir.join("run.json")) {
        Ok(bytes) => Some(serde_json::from_slice(&bytes)?),
        Err(_) => None,
    };
    let svg = run.as_ref().is_none_or(|r| r.config.svg);

    let matrix: Vec<&CellResult> = cells.iter().filter(|c| !c.spec.control).collect();
    let control: Vec<&CellResult> = cells.iter().filter(|c| c.spec.control).collect();
    let table2 = dir.join("table2.csv");
    let table3 = dir.join("table3.csv");
    write_table(&table2, &matrix)?;
    write_table(&table3, &control)?;

    let mut files = vec!["table2.csv".to_string(), "table3.csv".to_string()];
    let mut barcharts = Vec::new();
    for set in ParamSet::ALL {
        let rows: Vec<&CellResult> = matrix.iter().copied().filter(|c| c.spec.dataset == set).collect();
        if rows.is_empty() {
            continue;
        }
        let b = bars(&rows);
        let name = format!("barchart_{}.csv", set.tag());
        let path = dir.join(&name);
        write_barchart_csv(&path, &b)?;
        files.push(name);
        barcharts.push(path);
        if svg {
            let groups: Vec<(String, [Option<f64>; 3])> = b.into_iter().map(|b| (b.group, b.values)).collect();
            let name = format!("barchart_{}.svg", set.tag());
            fs::write(dir.join(&name), barchart_svg(set.label(), &groups))?;
            files.push(name);
        }
    }

    let manifest = Manifest {
        run: run.as_ref(),
        cell_seeds: cells.iter().map(|c| (c.id.as_str(), c.sub_seed)).collect(),
        completed: cells
            .iter()
            .filter(|c| c.errors.is_empty())
            .map(|c| c.id.as_str())
            .collect(),
        failed: cells
            .iter()
            .filter(|c| !c.errors.is_empty())
            .map(|c| (c.id.as_str(), c.errors.as_slice()))
            .collect(),
        files,
    };
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    Ok(ReportFiles {
        table2,
        table3,
        barcharts,
        manifest: manifest_path,
    })
}

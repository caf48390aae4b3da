//! CSV tables and PSNR-versus-position plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{CrossNetError, Result};
use crate::eval::{pos_label, MetricRow, MetricTable, MEAN_SCENE};

pub const CSV_HEADER: &str = "scene,lr_pos,ref_pos,scale,psnr,ssim";

/// Hex SHA-256 of a configuration's canonical text.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn sanitize(s: &str) -> String {
    let s: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "data".to_string()
    } else {
        s
    }
}

/// Rows and aggregate means as CSV text.
pub fn table_csv(table: &MetricTable) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in table.rows_with_means() {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6}",
            r.scene,
            pos_label(r.lr_pos),
            pos_label(Some(r.ref_pos)),
            r.scale,
            r.psnr,
            r.ssim
        );
    }
    out
}

fn parse_pos(s: &str) -> Option<(usize, usize)> {
    let (r, c) = s.split_once('_')?;
    Some((r.parse().ok()?, c.parse().ok()?))
}

/// Reads a table written by [`table_csv`]; aggregate rows are dropped and
/// recomputed on demand.
pub fn parse_table_csv(text: &str, method: &str, dataset: &str) -> Result<MetricTable> {
    let bad = |m: String| CrossNetError::Report(m);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(bad(format!("unexpected header `{header}`")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let line = i + 2;
        if field(0) == MEAN_SCENE {
            continue;
        }
        let num = |k: usize| field(k).parse::<f64>().map_err(|_| bad(format!("line {line}: bad number `{}`", field(k))));
        rows.push(MetricRow {
            scene: field(0).to_string(),
            lr_pos: Some(parse_pos(field(1)).ok_or_else(|| bad(format!("line {line}: bad position `{}`", field(1))))?),
            ref_pos: parse_pos(field(2)).ok_or_else(|| bad(format!("line {line}: bad position `{}`", field(2))))?,
            scale: field(3).parse().map_err(|_| bad(format!("line {line}: bad scale `{}`", field(3))))?,
            psnr: num(4)?,
            ssim: num(5)?,
        });
    }
    let scale = rows.first().map_or(0, |r| r.scale);
    if rows.iter().any(|r| r.scale != scale) {
        return Err(bad("mixed scales in one table".into()));
    }
    Ok(MetricTable {
        method: method.to_string(),
        dataset: dataset.to_string(),
        scale,
        rows,
    })
}

/// SVG plot of mean PSNR against the LR angular index, one curve per method.
pub fn psnr_plot_svg(tables: &[&MetricTable], title: &str, config_hash: &str) -> Result<String> {
    let series: Vec<(String, Vec<(f64, f64)>)> = tables
        .iter()
        .map(|t| {
            let pts = t
                .positions()
                .into_iter()
                .filter_map(|p| t.position_mean(p).map(|(psnr, _)| (p.0 as f64, psnr)))
                .collect();
            (t.method.clone(), pts)
        })
        .collect();
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if all.is_empty() {
        return Err(CrossNetError::Report("nothing to plot".into()));
    }
    let (x0, x1) = all.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = all.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let pad = ((y1 - y0) * 0.1).max(0.5);
    let plot_err = |e: &dyn std::fmt::Display| CrossNetError::Report(format!("plot failed: {e}"));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| plot_err(&e))?;
        let caption = format!("{title} (config {})", &config_hash[..config_hash.len().min(12)]);
        let mut chart = ChartBuilder::on(&root)
            .caption(caption, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(48)
            .build_cartesian_2d((x0 - 0.5)..(x1 + 0.5), (y0 - pad)..(y1 + pad))
            .map_err(|e| plot_err(&e))?;
        chart
            .configure_mesh()
            .x_desc("LR angular index")
            .y_desc("PSNR (dB)")
            .draw()
            .map_err(|e| plot_err(&e))?;
        for (k, (name, pts)) in series.iter().enumerate() {
            let color = Palette99::pick(k).to_rgba();
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                .map_err(|e| plot_err(&e))?
                .label(name.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
            chart
                .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
                .map_err(|e| plot_err(&e))?;
        }
        chart
            .configure_series_labels()
            .border_style(BLACK)
            .background_style(WHITE.mix(0.8))
            .draw()
            .map_err(|e| plot_err(&e))?;
        root.present().map_err(|e| plot_err(&e))?;
    }
    let _ = write!(svg, "\n<!-- config_hash: {config_hash} -->\n");
    Ok(svg)
}

/// Writes one CSV per table and one plot per (dataset, scale), overlaying
/// every method of that group. File names are
/// `<dataset>_x<scale>_<method>.csv` and `<dataset>_x<scale>_psnr.svg`.
/// Nothing is written if any table is empty.
pub fn emit_report(tables: &[MetricTable], out_dir: &Path, config_hash: &str) -> Result<Vec<PathBuf>> {
    if tables.is_empty() || tables.iter().any(|t| t.rows.is_empty()) {
        return Err(CrossNetError::Report("empty metric table".into()));
    }
    let mut groups: BTreeMap<(String, usize), Vec<&MetricTable>> = BTreeMap::new();
    for t in tables {
        groups.entry((sanitize(&t.dataset), t.scale)).or_default().push(t);
    }
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    for ((dataset, scale), group) in &groups {
        for t in group {
            let path = out_dir.join(format!("{dataset}_x{scale}_{}.csv", sanitize(&t.method)));
            if files.iter().any(|(p, _)| p == &path) {
                return Err(CrossNetError::Report(format!("duplicate method `{}` for {dataset} x{scale}", t.method)));
            }
            files.push((path, table_csv(t)));
        }
        let svg = psnr_plot_svg(group, &format!("{dataset} x{scale}"), config_hash)?;
        files.push((out_dir.join(format!("{dataset}_x{scale}_psnr.svg")), svg));
    }
    std::fs::create_dir_all(out_dir)?;
    for (path, text) in &files {
        std::fs::write(path, text)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(method: &str, offset: f64) -> MetricTable {
        MetricTable {
            method: method.into(),
            dataset: "flower".into(),
            scale: 8,
            rows: (1..8)
                .map(|i| MetricRow {
                    scene: "s".into(),
                    lr_pos: Some((i, i)),
                    ref_pos: (0, 0),
                    scale: 8,
                    psnr: 40.0 - i as f64 + offset,
                    ssim: 0.9,
                })
                .collect(),
        }
    }

    #[test]
    fn one_table_one_csv_one_plot() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&[table("crossnet", 0.0)], dir.path(), &config_hash("a=1")).unwrap();
        assert_eq!(files.len(), 2);
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(csv.lines().count(), 1 + 7 + 1);
        assert!(csv.starts_with(CSV_HEADER));
        let svg = std::fs::read_to_string(&files[1]).unwrap();
        assert!(svg.contains("<svg") && svg.contains(&config_hash("a=1")));
    }

    #[test]
    fn overlaid_methods() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&[table("crossnet", 0.0), table("bicubic", -3.0)], dir.path(), "abc").unwrap();
        assert_eq!(files.len(), 3);
        let svg = std::fs::read_to_string(&files[2]).unwrap();
        assert!(svg.contains("crossnet") && svg.contains("bicubic"));
    }

    #[test]
    fn empty_table_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r");
        let mut t = table("crossnet", 0.0);
        t.rows.clear();
        assert!(emit_report(&[t], &out, "abc").is_err());
        assert!(!out.exists());
    }

    #[test]
    fn csv_round_trip() {
        let t = table("crossnet", 0.0);
        let back = parse_table_csv(&table_csv(&t), "crossnet", "flower").unwrap();
        assert_eq!(back.rows.len(), 7);
        assert_eq!(back.rows[3].lr_pos, Some((4, 4)));
        assert!((back.rows[3].psnr - t.rows[3].psnr).abs() < 1e-6);
        assert!(parse_table_csv("a,b\n1,2\n", "m", "d").is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(config_hash(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}

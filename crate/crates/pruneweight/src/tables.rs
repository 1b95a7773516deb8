//! CSV artifacts and the SVG bar chart.
//!
//! Every CSV starts with one provenance comment line, optionally followed by
//! `# key=value ...` metadata lines, then a header row. Reals are written
//! with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use pruneweight_core::diffusion::TrainReport;
use pruneweight_core::metrics::EvalReport;
use pruneweight_core::pruning::{Coreset, ScoreTable};
use pruneweight_core::reweighting::ClassWeights;

use crate::error::{CliError, CliResult};
use crate::formats::write_bytes;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

/// Who produced an artifact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub stage: String,
}

impl Provenance {
    pub fn line(&self) -> String {
        format!(
            "# pruneweight {VERSION} config={} seed={} stage={}\n",
            self.config_hash, self.seed, self.stage
        )
    }
}

struct Table {
    text: String,
}

impl Table {
    fn new(prov: &Provenance, meta: &[(&str, String)], header: &[&str]) -> Self {
        let mut text = prov.line();
        if !meta.is_empty() {
            let fields: Vec<String> = meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(text, "# {}", fields.join(" "));
        }
        let _ = writeln!(text, "{}", header.join(","));
        Self { text }
    }

    fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    fn save(self, path: &Path) -> CliResult<()> {
        write_bytes(path, self.text.as_bytes())
    }
}

/// Comment metadata and data rows of a CSV artifact.
pub struct Parsed {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Parsed {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::data(format!("{}: {msg}", path.display()))
}

pub fn read_table(path: &Path) -> CliResult<Parsed> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut meta = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(comment) = line.strip_prefix('#') {
            for token in comment.split_whitespace() {
                if let Some((k, v)) = token.split_once('=') {
                    meta.push((k.to_string(), v.to_string()));
                }
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| bad(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        rows.push(rec.map_err(|e| bad(path, e))?.iter().map(str::to_string).collect());
    }
    Ok(Parsed { meta, header, rows })
}

fn parse_field<T: std::str::FromStr>(path: &Path, s: &str) -> CliResult<T> {
    s.parse().map_err(|_| bad(path, format!("cannot parse field {s:?}")))
}

fn expect_header(path: &Path, parsed: &Parsed, expected: &[&str]) -> CliResult<()> {
    if parsed.header != expected {
        return Err(bad(path, format!("expected header {}", expected.join(","))));
    }
    Ok(())
}

pub fn write_scores(path: &Path, prov: &Provenance, table: &ScoreTable, labels: &[usize]) -> CliResult<()> {
    let mut t = Table::new(prov, &[], &["index", "label", "score", "method", "encoder"]);
    for (i, (s, l)) in table.scores.iter().zip(labels).enumerate() {
        t.row(&[
            i.to_string(),
            l.to_string(),
            fmt_real(*s),
            table.method.as_str().to_string(),
            table.encoder_id.clone(),
        ]);
    }
    t.save(path)
}

fn join_counts(counts: &[usize]) -> String {
    counts.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

pub fn write_coreset(path: &Path, prov: &Provenance, coreset: &Coreset) -> CliResult<()> {
    let empty: Vec<usize> = (0..coreset.per_class_counts.len())
        .filter(|&c| coreset.per_class_counts[c] == 0)
        .collect();
    let meta = [
        ("data_ratio", fmt_real(coreset.data_ratio)),
        ("method", coreset.method.clone()),
        ("classes", coreset.per_class_counts.len().to_string()),
        ("per_class_counts", join_counts(&coreset.per_class_counts)),
        ("total", coreset.total.to_string()),
        ("empty_classes", join_counts(&empty)),
    ];
    let mut t = Table::new(prov, &meta, &["index"]);
    for &i in &coreset.indices {
        t.row(&[i.to_string()]);
    }
    t.save(path)
}

fn split_counts(path: &Path, s: &str) -> CliResult<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|c| parse_field(path, c)).collect()
}

pub fn read_coreset(path: &Path) -> CliResult<Coreset> {
    let p = read_table(path)?;
    expect_header(path, &p, &["index"])?;
    let need = |k: &str| p.meta(k).ok_or_else(|| bad(path, format!("missing metadata {k}")));
    let indices: Vec<usize> = p.rows.iter().map(|r| parse_field(path, &r[0])).collect::<CliResult<_>>()?;
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad(path, "indices must be strictly increasing"));
    }
    let per_class_counts = split_counts(path, need("per_class_counts")?)?;
    if per_class_counts.iter().sum::<usize>() != indices.len() {
        return Err(bad(path, "per-class counts do not match the index list"));
    }
    Ok(Coreset {
        indices,
        data_ratio: parse_field(path, need("data_ratio")?)?,
        method: need("method")?.to_string(),
        per_class_counts,
        total: parse_field(path, need("total")?)?,
    })
}

pub fn write_loss(path: &Path, prov: &Provenance, report: &TrainReport) -> CliResult<()> {
    let meta = [
        ("optimizer_steps", report.optimizer_steps.to_string()),
        ("sample_gradients", report.sample_gradients.to_string()),
        ("coreset_epochs", report.coreset_epochs.to_string()),
    ];
    let mut t = Table::new(prov, &meta, &["epoch", "mean_loss"]);
    for (e, l) in &report.epoch_losses {
        t.row(&[e.to_string(), fmt_real(*l)]);
    }
    t.save(path)
}

pub fn write_weights(path: &Path, prov: &Provenance, weights: &ClassWeights) -> CliResult<()> {
    let meta = [("steps", weights.steps().to_string())];
    let mut t = Table::new(prov, &meta, &["class", "alpha_bar"]);
    for (c, a) in weights.alpha().iter().enumerate() {
        t.row(&[c.to_string(), fmt_real(*a)]);
    }
    t.save(path)
}

pub fn read_weights(path: &Path) -> CliResult<ClassWeights> {
    let p = read_table(path)?;
    expect_header(path, &p, &["class", "alpha_bar"])?;
    let mut alpha = Vec::with_capacity(p.rows.len());
    for (i, r) in p.rows.iter().enumerate() {
        let c: usize = parse_field(path, &r[0])?;
        if c != i {
            return Err(bad(path, "classes must be listed in order"));
        }
        alpha.push(parse_field(path, &r[1])?);
    }
    let steps = match p.meta("steps") {
        Some(s) => parse_field(path, s)?,
        None => 0,
    };
    ClassWeights::new(alpha, steps).map_err(|e| bad(path, e))
}

pub fn write_trajectory(path: &Path, prov: &Provenance, classes: usize, trajectory: &[ClassWeights]) -> CliResult<()> {
    let mut header = vec!["step".to_string()];
    header.extend((0..classes).map(|c| format!("alpha_{c}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(prov, &[], &header_refs);
    for (step, w) in trajectory.iter().enumerate() {
        let mut row = vec![(step + 1).to_string()];
        row.extend(w.alpha().iter().map(|a| fmt_real(*a)));
        t.row(&row);
    }
    t.save(path)
}

pub fn write_report(path: &Path, prov: &Provenance, report: &EvalReport) -> CliResult<()> {
    let meta = [("encoder", report.encoder_id.clone())];
    let mut t = Table::new(prov, &meta, &["metric", "class", "value"]);
    let all = || "all".to_string();
    t.row(&["frechet".into(), all(), fmt_real(report.frechet)]);
    t.row(&["mmd_sq".into(), all(), fmt_real(report.mmd_sq)]);
    t.row(&["mmd_bandwidth".into(), all(), fmt_real(report.bandwidth)]);
    t.row(&["real_count".into(), all(), report.real_count.to_string()]);
    t.row(&["generated_count".into(), all(), report.generated_count.to_string()]);
    for (c, f) in report.per_class_frechet.iter().enumerate() {
        t.row(&["frechet".into(), c.to_string(), fmt_real(f.unwrap_or(f64::NAN))]);
    }
    t.save(path)
}

/// `(metric, class, value)` rows of a report plus its encoder id.
pub struct ReportRows {
    pub encoder_id: String,
    pub rows: Vec<(String, String, f64)>,
}

impl ReportRows {
    pub fn get(&self, metric: &str, class: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|(m, c, _)| m == metric && c == class)
            .map(|(_, _, v)| *v)
    }
}

pub fn read_report(path: &Path) -> CliResult<ReportRows> {
    let p = read_table(path)?;
    expect_header(path, &p, &["metric", "class", "value"])?;
    let encoder_id = p
        .meta("encoder")
        .ok_or_else(|| bad(path, "report has no encoder id"))?
        .to_string();
    let rows = p
        .rows
        .iter()
        .map(|r| Ok((r[0].clone(), r[1].clone(), parse_field(path, &r[2])?)))
        .collect::<CliResult<_>>()?;
    Ok(ReportRows { encoder_id, rows })
}

/// Per-class Fréchet bars, suitable for external plotting.
pub fn write_plot_data(path: &Path, prov: &Provenance, report: &EvalReport) -> CliResult<()> {
    let meta = [("encoder", report.encoder_id.clone())];
    let mut t = Table::new(prov, &meta, &["class", "frechet"]);
    for (c, f) in report.per_class_frechet.iter().enumerate() {
        t.row(&[c.to_string(), fmt_real(f.unwrap_or(f64::NAN))]);
    }
    t.save(path)
}

/// A static bar chart of per-class Fréchet distances.
pub fn render_svg(report: &EvalReport) -> String {
    let values: Vec<f64> = report.per_class_frechet.iter().map(|f| f.unwrap_or(0.0)).collect();
    let (w, h, pad) = (640.0, 360.0, 48.0);
    let max = values.iter().copied().fold(0.0_f64, f64::max).max(1e-12);
    let slot = (w - 2.0 * pad) / values.len().max(1) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">Per-class Fréchet distance ({})</text>"#,
        w / 2.0,
        xml_escape(&report.encoder_id)
    );
    let base = h - pad;
    let _ = writeln!(
        svg,
        r#"<line x1="{pad}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        w - pad
    );
    for (c, v) in values.iter().enumerate() {
        let bh = (h - 2.5 * pad) * v / max;
        let x = pad + slot * c as f64 + slot * 0.15;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{bh:.2}" fill="steelblue"><title>class {c}: {v:.6}</title></rect>"#,
            base - bh,
            slot * 0.7
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{c}</text>"#,
            x + slot * 0.35,
            base + 16.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance {
            config_hash: "0123456789abcdef".into(),
            seed: 3,
            stage: "test".into(),
        }
    }

    #[test]
    fn reals_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 12_345.678_901_234_5, f64::MIN_POSITIVE] {
            let s = fmt_real(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_real(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn coreset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coreset.csv");
        let labels = [0, 1, 0, 1, 2];
        let c = Coreset::new(vec![1, 2, 3], &labels, 3, 0.6, "moderate_ds").unwrap();
        write_coreset(&path, &prov(), &c).unwrap();
        let back = read_coreset(&path).unwrap();
        assert_eq!(back, c);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# pruneweight "));
        assert!(text.contains("empty_classes=2"));
    }

    #[test]
    fn weights_round_trip_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.csv");
        let w = ClassWeights::new(vec![0.1, 0.2, 0.7000000000000001], 9).unwrap();
        write_weights(&path, &prov(), &w).unwrap();
        assert_eq!(read_weights(&path).unwrap(), w);
    }

    #[test]
    fn malformed_tables_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(&path, "class,alpha_bar\n0,0.5\n1,0.6\n").unwrap();
        assert_eq!(read_weights(&path).unwrap_err().exit_code(), 3);
        std::fs::write(&path, "klass,alpha\n0,1.0\n").unwrap();
        assert_eq!(read_weights(&path).unwrap_err().exit_code(), 3);
        assert_eq!(read_weights(&dir.path().join("missing.csv")).unwrap_err().exit_code(), 2);
    }
}

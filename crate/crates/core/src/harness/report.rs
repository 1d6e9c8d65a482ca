use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use super::{EpisodeResult, ExperimentReport, ReportMeta};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Trailing-episode windows summarized in aggregate files.
pub const DEFAULT_WINDOWS: [usize; 2] = [30, 10];

/// Metrics summarized in aggregate and band files.
const SUMMARY_METRICS: [&str; 3] = ["travel_time_per_km", "delay_per_km", "stop_time_per_km"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{kind} file has schema version {found}, expected {expected}")]
    Schema { kind: String, found: u32, expected: u32 },
    #[error("malformed report: {0}")]
    Malformed(String),
    #[error("reports disagree on `{field}`: {left} vs {right}")]
    Mismatch { field: &'static str, left: String, right: String },
    #[error("nothing to compare")]
    Empty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawRow {
    pub replication: usize,
    pub episode: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub scenario: String,
    pub controller: String,
    pub window: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

fn episode_metrics(e: &EpisodeResult) -> Vec<(&'static str, f64)> {
    let mut m = vec![
        ("travel_time_per_km", e.travel_time_per_km()),
        ("delay_per_km", e.delay_per_km()),
        ("stop_time_per_km", e.stop_time_per_km()),
        ("travel_time", e.totals.travel_time),
        ("delay", e.totals.delay),
        ("stop_time", e.totals.stop_time),
        ("distance", e.totals.distance),
        ("vehicles_in", e.totals.vehicles_in as f64),
        ("vehicles_out", e.totals.vehicles_out as f64),
        ("rejected_decisions", e.rejected.len() as f64),
    ];
    if let Some(loss) = e.learning.mean_loss {
        m.push(("mean_loss", loss));
    }
    if e.learning.train_steps > 0 || e.learning.potential.is_some() {
        m.push(("total_reward", e.learning.total_reward));
    }
    if let Some(f) = &e.failures {
        m.push(("failed_fraction", f.failed_fraction()));
    }
    m
}

fn raw_rows(report: &ExperimentReport) -> Vec<RawRow> {
    let mut rows = Vec::new();
    for (r, rep) in report.replications.iter().enumerate() {
        for (e, outcome) in rep.iter().enumerate() {
            match outcome {
                Ok(res) => rows.extend(episode_metrics(res).into_iter().map(|(metric, value)| RawRow {
                    replication: r,
                    episode: e,
                    metric: metric.to_string(),
                    value,
                })),
                Err(_) => rows.push(RawRow { replication: r, episode: e, metric: "failed".into(), value: 1.0 }),
            }
        }
    }
    rows
}

fn meta_line(meta: &ReportMeta) -> String {
    format!(
        "# scenario={} controller={} episode_length={} warmup={} episodes={} replications={} master_seed={}",
        meta.scenario,
        meta.controller,
        meta.episode_length,
        meta.warmup,
        meta.episodes,
        meta.replications,
        meta.master_seed
    )
}

fn write_header<W: Write>(w: &mut W, kind: &str, meta: &ReportMeta) -> std::io::Result<()> {
    writeln!(w, "# signalbench-{kind} v{REPORT_SCHEMA_VERSION}")?;
    writeln!(w, "{}", meta_line(meta))
}

fn parse_header(lines: &[String], kind: &str) -> Result<ReportMeta, ReportError> {
    let first = lines.first().ok_or_else(|| ReportError::Malformed("missing schema line".into()))?;
    let prefix = format!("# signalbench-{kind} v");
    let version: u32 = first
        .strip_prefix(&prefix)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| ReportError::Malformed(format!("expected a {kind} schema line, found {first:?}")))?;
    if version != REPORT_SCHEMA_VERSION {
        return Err(ReportError::Schema { kind: kind.into(), found: version, expected: REPORT_SCHEMA_VERSION });
    }
    let second = lines.get(1).ok_or_else(|| ReportError::Malformed("missing metadata line".into()))?;
    let fields: BTreeMap<&str, &str> =
        second.trim_start_matches('#').split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| ReportError::Malformed(format!("metadata lacks `{k}`")));
    let num = |k: &str| -> Result<f64, ReportError> {
        get(k)?.parse().map_err(|_| ReportError::Malformed(format!("bad `{k}`")))
    };
    Ok(ReportMeta {
        scenario: get("scenario")?.to_string(),
        controller: get("controller")?.to_string(),
        episode_length: num("episode_length")?,
        warmup: num("warmup")?,
        episodes: num("episodes")? as usize,
        replications: num("replications")? as usize,
        master_seed: get("master_seed")?.parse().map_err(|_| ReportError::Malformed("bad `master_seed`".into()))?,
    })
}

/// Splits leading `#` lines from the CSV body.
fn split_comments<R: Read>(r: R) -> Result<(Vec<String>, String), ReportError> {
    let mut comments = Vec::new();
    let mut body = String::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        if body.is_empty() && line.starts_with('#') {
            comments.push(line);
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    Ok((comments, body))
}

/// One row per (replication, episode, metric); aborted episodes appear as
/// a single `failed` row.
pub fn write_raw<W: Write>(report: &ExperimentReport, mut w: W) -> Result<(), ReportError> {
    write_header(&mut w, "raw", &report.meta)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["replication", "episode", "metric", "value"])?;
    for row in raw_rows(report) {
        csv.write_record([row.replication.to_string(), row.episode.to_string(), row.metric, row.value.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_raw<R: Read>(r: R) -> Result<(ReportMeta, Vec<RawRow>), ReportError> {
    let (comments, body) = split_comments(r)?;
    let meta = parse_header(&comments, "raw")?;
    let mut rows = Vec::new();
    for rec in csv::Reader::from_reader(body.as_bytes()).records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| ReportError::Malformed("short raw row".into()));
        let bad = |what: &str| ReportError::Malformed(format!("bad {what} in raw row"));
        rows.push(RawRow {
            replication: field(0)?.parse().map_err(|_| bad("replication"))?,
            episode: field(1)?.parse().map_err(|_| bad("episode"))?,
            metric: field(2)?.to_string(),
            value: field(3)?.parse().map_err(|_| bad("value"))?,
        });
    }
    Ok((meta, rows))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Window summaries of the raw rows: the mean over replications of each
/// replication's window mean, and the standard deviation across
/// replications.
pub fn aggregate_rows(meta: &ReportMeta, rows: &[RawRow], windows: &[usize]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for &n in windows {
        let first = meta.episodes.saturating_sub(n);
        for metric in SUMMARY_METRICS {
            let mut per_rep: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for row in rows.iter().filter(|r| r.metric == metric && r.episode >= first) {
                per_rep.entry(row.replication).or_default().push(row.value);
            }
            let means: Vec<f64> = per_rep.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
            let (mean, std) = mean_std(&means);
            out.push(AggregateRow {
                scenario: meta.scenario.clone(),
                controller: meta.controller.clone(),
                window: format!("last_{n}"),
                metric: metric.to_string(),
                mean,
                std,
            });
        }
    }
    out
}

fn write_aggregate_rows<W: Write>(meta: &ReportMeta, rows: &[AggregateRow], mut w: W) -> Result<(), ReportError> {
    write_header(&mut w, "aggregate", meta)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["scenario", "controller", "window", "metric", "mean", "std"])?;
    for r in rows {
        csv.write_record([
            r.scenario.as_str(),
            &r.controller,
            &r.window,
            &r.metric,
            &format!("{:.6}", r.mean),
            &format!("{:.6}", r.std),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Aggregate block; a pure function of the raw rows.
pub fn write_aggregate<W: Write>(report: &ExperimentReport, windows: &[usize], w: W) -> Result<(), ReportError> {
    let rows = aggregate_rows(&report.meta, &raw_rows(report), windows);
    write_aggregate_rows(&report.meta, &rows, w)
}

pub fn read_aggregate<R: Read>(r: R) -> Result<(ReportMeta, Vec<AggregateRow>), ReportError> {
    let (comments, body) = split_comments(r)?;
    let meta = parse_header(&comments, "aggregate")?;
    let mut rows = Vec::new();
    for rec in csv::Reader::from_reader(body.as_bytes()).records() {
        let rec = rec?;
        if rec.len() != 6 {
            return Err(ReportError::Malformed("aggregate rows need six fields".into()));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| ReportError::Malformed("bad number".into()));
        rows.push(AggregateRow {
            scenario: rec[0].to_string(),
            controller: rec[1].to_string(),
            window: rec[2].to_string(),
            metric: rec[3].to_string(),
            mean: num(4)?,
            std: num(5)?,
        });
    }
    Ok((meta, rows))
}

/// Linear-interpolation percentile, `q` in `[0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Per-episode 10th/50th/90th percentiles and mean across replications.
pub fn write_bands<W: Write>(report: &ExperimentReport, mut w: W) -> Result<(), ReportError> {
    write_header(&mut w, "bands", &report.meta)?;
    let rows = raw_rows(report);
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["episode", "metric", "p10", "p50", "p90", "mean"])?;
    for e in 0..report.meta.episodes {
        for metric in SUMMARY_METRICS {
            let values: Vec<f64> =
                rows.iter().filter(|r| r.episode == e && r.metric == metric).map(|r| r.value).collect();
            if values.is_empty() {
                continue;
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            csv.write_record([
                e.to_string(),
                metric.to_string(),
                format!("{:.6}", percentile(&values, 10.0)),
                format!("{:.6}", percentile(&values, 50.0)),
                format!("{:.6}", percentile(&values, 90.0)),
                format!("{mean:.6}"),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// Every training loss, in training order.
pub fn write_loss<W: Write>(report: &ExperimentReport, mut w: W) -> Result<(), ReportError> {
    write_header(&mut w, "loss", &report.meta)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["replication", "episode", "step", "loss"])?;
    for (r, rep) in report.replications.iter().enumerate() {
        let mut step = 0usize;
        for res in rep.iter().filter_map(|o| o.as_ref().ok()) {
            for loss in &res.learning.losses {
                csv.write_record([r.to_string(), res.episode.to_string(), step.to_string(), loss.to_string()])?;
                step += 1;
            }
        }
    }
    csv.flush()?;
    Ok(())
}

/// Concatenates aggregate blocks after checking they come from runs of the
/// same scale.
pub fn compare_reports(reports: &[(ReportMeta, Vec<AggregateRow>)]) -> Result<Vec<AggregateRow>, ReportError> {
    let (first, _) = reports.first().ok_or(ReportError::Empty)?;
    for (meta, _) in &reports[1..] {
        let checks: [(&'static str, String, String); 4] = [
            ("episode_length", first.episode_length.to_string(), meta.episode_length.to_string()),
            ("warmup", first.warmup.to_string(), meta.warmup.to_string()),
            ("episodes", first.episodes.to_string(), meta.episodes.to_string()),
            ("replications", first.replications.to_string(), meta.replications.to_string()),
        ];
        for (field, left, right) in checks {
            if left != right {
                return Err(ReportError::Mismatch { field, left, right });
            }
        }
    }
    Ok(reports.iter().flat_map(|(_, rows)| rows.iter().cloned()).collect())
}

/// Aligned text table with one line per (scenario, controller, window).
pub fn format_table(rows: &[AggregateRow]) -> String {
    let mut keys: Vec<(String, String, String)> = Vec::new();
    let mut cells: BTreeMap<(String, String, String, String), String> = BTreeMap::new();
    for r in rows {
        let key = (r.scenario.clone(), r.controller.clone(), r.window.clone());
        if !keys.contains(&key) {
            keys.push(key.clone());
        }
        cells.insert((key.0, key.1, key.2, r.metric.clone()), format!("{:.1} (± {:.1})", r.mean, r.std));
    }
    let header = ["scenario", "controller", "window", "travel time s/km", "delay s/km", "stop time s/km"];
    let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for (s, c, w) in &keys {
        let mut line = vec![s.clone(), c.clone(), w.clone()];
        for m in SUMMARY_METRICS {
            line.push(cells.get(&(s.clone(), c.clone(), w.clone(), m.to_string())).cloned().unwrap_or_default());
        }
        table.push(line);
    }
    let widths: Vec<usize> =
        (0..header.len()).map(|i| table.iter().map(|l| l[i].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for line in &table {
        let cols: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        writeln!(out, "{}", cols.join("  ").trim_end()).unwrap();
    }
    out
}

/// Merged comparison rows in the aggregate column layout.
pub fn write_comparison<W: Write>(rows: &[AggregateRow], mut w: W) -> Result<(), ReportError> {
    writeln!(w, "# signalbench-comparison v{REPORT_SCHEMA_VERSION}")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["scenario", "controller", "window", "metric", "mean", "std"])?;
    for r in rows {
        csv.write_record([
            r.scenario.as_str(),
            &r.controller,
            &r.window,
            &r.metric,
            &format!("{:.6}", r.mean),
            &format!("{:.6}", r.std),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Comparison, MetricsTrace, RunReport, TraceRow};
use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 8] = [
    "t",
    "train_objective",
    "dist_to_wstar",
    "test_accuracy",
    "selected_index",
    "selected_gamma",
    "objective_combined",
    "query_count",
];

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(buf)
}

/// The trace as CSV text with the fixed header row.
pub fn trace_csv(trace: &MetricsTrace) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = writer(&mut buf);
        w.write_record(TRACE_HEADER).map_err(csv_err)?;
        for row in &trace.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

pub fn read_trace(path: &Path) -> Result<MetricsTrace> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?;
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected trace header `{}`", TRACE_HEADER.join(",")),
        });
    }
    let rows = rdr
        .deserialize::<TraceRow>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(csv_err)?;
    Ok(MetricsTrace { rows })
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("`{}` is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunFiles {
    pub trace: PathBuf,
    pub report: PathBuf,
}

fn write_pair<T: Serialize>(dir: &Path, names: [&str; 2], trace: &MetricsTrace, sidecar: &T) -> Result<RunFiles> {
    std::fs::create_dir_all(dir)?;
    let files = RunFiles {
        trace: dir.join(names[0]),
        report: dir.join(names[1]),
    };
    write_atomic(&files.trace, &trace_csv(trace)?)?;
    write_atomic(&files.report, &json(sidecar)?)?;
    Ok(files)
}

/// `trace.csv` and `run.json` in `dir`.
pub fn write_run(dir: &Path, report: &RunReport, trace: &MetricsTrace) -> Result<RunFiles> {
    write_pair(dir, ["trace.csv", "run.json"], trace, report)
}

#[derive(Serialize)]
struct ReplayReport<'a> {
    schema_version: u32,
    label: &'a str,
    subset: &'a [usize],
    final_row: Option<&'a TraceRow>,
}

/// `replay.csv` and `replay.json` in `dir`.
pub fn write_replay(dir: &Path, label: &str, subset: &[usize], trace: &MetricsTrace) -> Result<RunFiles> {
    let report = ReplayReport {
        schema_version: super::SCHEMA_VERSION,
        label,
        subset,
        final_row: trace.last(),
    };
    write_pair(dir, ["replay.csv", "replay.json"], trace, &report)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComparisonFiles {
    pub traces: PathBuf,
    pub summary: PathBuf,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Aligned per-member columns keyed by `t`.
fn comparison_csv(cmp: &Comparison) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = writer(&mut buf);
        let mut header = vec!["t".to_string()];
        for m in &cmp.summary {
            for col in ["dist_to_wstar", "train_objective", "test_accuracy"] {
                header.push(format!("{}:{col}", m.label));
            }
        }
        w.write_record(&header).map_err(csv_err)?;
        let len = cmp.traces.iter().map(|t| t.rows.len()).max().unwrap_or(0);
        for i in 0..len {
            let mut rec = vec![i.to_string()];
            for t in &cmp.traces {
                let r = t.rows.get(i);
                rec.push(cell(r.map(|r| r.dist_to_wstar)));
                rec.push(cell(r.map(|r| r.train_objective)));
                rec.push(cell(r.and_then(|r| r.test_accuracy)));
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

/// `comparison.csv` and `comparison.json` in `dir`.
pub fn write_comparison(dir: &Path, cmp: &Comparison) -> Result<ComparisonFiles> {
    std::fs::create_dir_all(dir)?;
    let files = ComparisonFiles {
        traces: dir.join("comparison.csv"),
        summary: dir.join("comparison.json"),
    };
    write_atomic(&files.traces, &comparison_csv(cmp)?)?;
    write_atomic(&files.summary, &json(cmp)?)?;
    Ok(files)
}

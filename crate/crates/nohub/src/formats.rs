//! Feature files, loss traces and result tables.
//!
//! Features come in two encodings:
//!
//! * CSV with header `f0,...,f{k-1}` and an optional trailing `label`
//!   column (`-1` marks an unlabelled row). Lines starting with `#` are
//!   comments. Floats are written in shortest round-trip form.
//! * A raw little-endian binary layout:
//!
//! | field          | type          |
//! |----------------|---------------|
//! | magic          | `b"NHUB"`     |
//! | version        | `u16` (= 1)   |
//! | rows `n`       | `u64`         |
//! | columns `k`    | `u64`         |
//! | labels present | `u8` (0 or 1) |
//! | data           | `n·k` × `f64`, row-major |
//! | labels         | `n` × `i64`, if present |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nohub_core::nohub::LossTerms;
use nohub_core::Matrix;

use crate::FormatError;

pub const MAGIC: &[u8; 4] = b"NHUB";
pub const BINARY_VERSION: u16 = 1;

/// A feature matrix with optional integer labels (`-1` for unlabelled).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub x: Matrix,
    pub labels: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Csv,
    Binary,
}

impl Encoding {
    /// `.bin` and `.nhub` files are binary, everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin" | "nhub") => Encoding::Binary,
            _ => Encoding::Csv,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, FormatError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| FormatError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    File::open(path).map(BufReader::new).map_err(|e| FormatError::io(path, e))
}

fn write_comments<W: Write>(w: &mut W, comments: &[String]) -> io::Result<()> {
    for c in comments {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Reads a feature file, detecting the encoding from its first bytes.
pub fn read_features(path: &Path) -> Result<FeatureTable, FormatError> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| FormatError::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes, path)
    } else {
        read_features_csv(bytes.as_slice(), path)
    }
}

/// Writes `table` in the encoding implied by the extension. Comments are
/// dropped for binary output.
pub fn write_features(path: &Path, table: &FeatureTable, comments: &[String]) -> Result<(), FormatError> {
    let mut w = create(path)?;
    match Encoding::from_path(path) {
        Encoding::Csv => write_features_csv(&mut w, table, comments),
        Encoding::Binary => write_features_binary(&mut w, table),
    }
    .and_then(|_| w.flush())
    .map_err(|e| FormatError::io(path, e))
}

pub fn write_features_csv<W: Write>(w: &mut W, table: &FeatureTable, comments: &[String]) -> io::Result<()> {
    write_comments(w, comments)?;
    let mut out = csv::Writer::from_writer(w);
    let k = table.x.cols();
    let mut header: Vec<String> = (0..k).map(|j| format!("f{j}")).collect();
    if table.labels.is_some() {
        header.push("label".into());
    }
    out.write_record(&header)?;
    let mut record = Vec::with_capacity(k + 1);
    for (i, row) in table.x.iter_rows().enumerate() {
        record.clear();
        record.extend(row.iter().map(|&v| format_f64(v)));
        if let Some(labels) = &table.labels {
            record.push(labels[i].to_string());
        }
        out.write_record(&record)?;
    }
    out.flush()
}

/// Parses the CSV encoding. `path` is only used in error messages.
pub fn read_features_csv<R: Read>(r: R, path: &Path) -> Result<FeatureTable, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        FormatError::parse(path, line, e.to_string())
    };
    let header = reader.headers().map_err(csv_err)?.clone();
    let header_line = reader.position().line().max(1);
    let has_labels = header.iter().next_back() == Some("label");
    let k = header.len() - usize::from(has_labels);
    if k == 0 {
        return Err(FormatError::parse(path, header_line, "no feature columns"));
    }
    for (j, name) in header.iter().take(k).enumerate() {
        if name != format!("f{j}") {
            return Err(FormatError::parse(
                path,
                header_line,
                format!("expected column `f{j}`, found `{name}`"),
            ));
        }
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(csv_err)? {
        let line = record.position().map_or(0, |p| p.line());
        for (j, field) in record.iter().take(k).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| FormatError::parse(path, line, format!("column f{j}: `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(FormatError::parse(path, line, format!("column f{j}: non-finite value")));
            }
            data.push(v);
        }
        if has_labels {
            let field = &record[k];
            let label: i64 = field
                .parse()
                .map_err(|_| FormatError::parse(path, line, format!("label `{field}` is not an integer")))?;
            if label < -1 {
                return Err(FormatError::parse(path, line, "labels must be -1 or non-negative"));
            }
            labels.push(label);
        }
    }
    let n = data.len() / k;
    let x = Matrix::from_vec(n, k, data).map_err(|e| FormatError::parse(path, 0, e.to_string()))?;
    Ok(FeatureTable {
        x,
        labels: has_labels.then_some(labels),
    })
}

pub fn write_features_binary<W: Write>(w: &mut W, table: &FeatureTable) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(table.x.rows() as u64).to_le_bytes())?;
    w.write_all(&(table.x.cols() as u64).to_le_bytes())?;
    w.write_all(&[u8::from(table.labels.is_some())])?;
    for v in table.x.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    if let Some(labels) = &table.labels {
        for l in labels {
            w.write_all(&l.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_features_binary<R: Read>(mut r: R, path: &Path) -> Result<FeatureTable, FormatError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| FormatError::io(path, e))?;
    decode_binary(&bytes, path)
}

fn decode_binary(bytes: &[u8], path: &Path) -> Result<FeatureTable, FormatError> {
    // binary files have no lines; errors report line 0
    let fail = |msg: String| FormatError::parse(path, 0, msg);
    let mut cursor = bytes;
    let mut take = |len: usize, what: &str| -> Result<&[u8], FormatError> {
        if cursor.len() < len {
            return Err(fail(format!("truncated file while reading {what}")));
        }
        let (head, tail) = cursor.split_at(len);
        cursor = tail;
        Ok(head)
    };
    if take(4, "magic")? != MAGIC {
        return Err(fail("missing NHUB magic".into()));
    }
    let version = u16::from_le_bytes(take(2, "version")?.try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(take(8, "row count")?.try_into().unwrap());
    let k = u64::from_le_bytes(take(8, "column count")?.try_into().unwrap());
    let has_labels = match take(1, "label flag")?[0] {
        0 => false,
        1 => true,
        other => return Err(fail(format!("invalid label flag {other}"))),
    };
    let cells = n
        .checked_mul(k)
        .and_then(|c| usize::try_from(c).ok())
        .filter(|&c| c.checked_mul(8).is_some_and(|b| b <= bytes.len()))
        .ok_or_else(|| fail(format!("{n}×{k} does not fit the file")))?;
    let data: Vec<f64> = take(cells * 8, "data")?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = if has_labels {
        let n = n as usize;
        Some(
            take(n * 8, "labels")?
                .chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    } else {
        None
    };
    if !cursor.is_empty() {
        return Err(fail(format!("{} trailing bytes", cursor.len())));
    }
    let x = Matrix::from_vec(n as usize, k as usize, data).map_err(|e| fail(e.to_string()))?;
    Ok(FeatureTable { x, labels })
}

/// `iteration,l_lsp,l_unif,l_nohub`, one row per iteration starting at 1.
pub fn write_loss_trace(path: &Path, trace: &[LossTerms], comments: &[String]) -> Result<(), FormatError> {
    let mut w = create(path)?;
    let res = (|| {
        write_comments(&mut w, comments)?;
        let mut out = csv::Writer::from_writer(&mut w);
        out.write_record(["iteration", "l_lsp", "l_unif", "l_nohub"])?;
        for (t, terms) in trace.iter().enumerate() {
            out.write_record([
                (t + 1).to_string(),
                format_f64(terms.lsp),
                format_f64(terms.unif),
                format_f64(terms.total),
            ])?;
        }
        out.flush()?;
        drop(out);
        w.flush()
    })();
    res.map_err(|e| FormatError::io(path, e))
}

/// One aggregated benchmark cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    /// Free-form setting label, e.g. `default` or `alpha=0.2`.
    pub variant: String,
    pub shots: usize,
    pub accuracy_mean: f64,
    pub accuracy_ci: f64,
    pub sk_mean: f64,
    pub ho_mean: f64,
    pub episodes: usize,
    pub seed: u64,
}

pub const RESULT_HEADER: [&str; 9] = [
    "method",
    "variant",
    "shots",
    "accuracy_mean",
    "accuracy_ci",
    "sk_mean",
    "ho_mean",
    "episodes",
    "seed",
];

pub fn write_result_table(path: &Path, rows: &[ResultRow], comments: &[String]) -> Result<(), FormatError> {
    let mut w = create(path)?;
    let res = (|| {
        write_comments(&mut w, comments)?;
        let mut out = csv::Writer::from_writer(&mut w);
        out.write_record(RESULT_HEADER)?;
        for r in rows {
            out.write_record([
                r.method.clone(),
                r.variant.clone(),
                r.shots.to_string(),
                format_f64(r.accuracy_mean),
                format_f64(r.accuracy_ci),
                format_f64(r.sk_mean),
                format_f64(r.ho_mean),
                r.episodes.to_string(),
                r.seed.to_string(),
            ])?;
        }
        out.flush()?;
        drop(out);
        w.flush()
    })();
    res.map_err(|e| FormatError::io(path, e))
}

pub fn read_result_table(path: &Path) -> Result<Vec<ResultRow>, FormatError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(open(path)?);
    let header = reader
        .headers()
        .map_err(|e| FormatError::parse(path, 1, e.to_string()))?
        .clone();
    if header.iter().ne(RESULT_HEADER) {
        return Err(FormatError::parse(path, 1, "unexpected result table header"));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| FormatError::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |col: &str| FormatError::parse(path, line, format!("invalid {col}"));
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(RESULT_HEADER[i]));
        rows.push(ResultRow {
            method: rec[0].to_string(),
            variant: rec[1].to_string(),
            shots: rec[2].parse().map_err(|_| bad("shots"))?,
            accuracy_mean: num(3)?,
            accuracy_ci: num(4)?,
            sk_mean: num(5)?,
            ho_mean: num(6)?,
            episodes: rec[7].parse().map_err(|_| bad("episodes"))?,
            seed: rec[8].parse().map_err(|_| bad("seed"))?,
        });
    }
    Ok(rows)
}

/// Default sibling path for the loss trace of an embedding output.
pub fn trace_path_for(output: &Path) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("embedding");
    output.with_file_name(format!("{stem}.loss.csv"))
}

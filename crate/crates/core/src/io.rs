//! File formats and atomic writes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::em::fmt_f64;
use crate::error::{Error, Result};
use crate::model::Observations;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary file in the target directory, then renames it
/// into place. `header_comment`, if given, is emitted as `# ...` lines first.
pub fn write_atomic(
    path: &Path,
    header_comment: Option<&str>,
    body: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(path))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        if let Some(comment) = header_comment {
            for line in comment.lines() {
                writeln!(w, "# {line}").map_err(io_err(path))?;
            }
        }
        body(&mut w)?;
        w.flush().map_err(io_err(path))?;
    }
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Dataset CSV: header `x0,...,x{d-1},y`, one sample per row.
pub fn write_dataset_csv<W: Write + ?Sized>(obs: &Observations, out: &mut W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::invalid(format!("dataset serialization failed: {e}"));
    let mut header: Vec<String> = (0..obs.dim()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header).map_err(err)?;
    let mut record = Vec::with_capacity(obs.dim() + 1);
    for (x, y) in obs.rows() {
        record.clear();
        record.extend(x.iter().map(|v| fmt_f64(*v)));
        record.push(fmt_f64(y));
        w.write_record(&record).map_err(err)?;
    }
    w.flush()
        .map_err(|e| Error::invalid(format!("dataset flush failed: {e}")))?;
    Ok(())
}

/// Reads a dataset CSV, skipping `#` comment lines.
pub fn read_dataset_csv(path: &Path) -> Result<Observations> {
    let file = File::open(path).map_err(io_err(path))?;
    read_dataset(BufReader::new(file), path)
}

pub(crate) fn read_dataset<R: BufRead>(reader: R, path: &Path) -> Result<Observations> {
    let parse = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| parse(e.to_string()))?.clone();
    let cols = header.len();
    if cols < 2 || &header[cols - 1] != "y" {
        return Err(parse("expected header x0,...,x{d-1},y".into()));
    }
    for (j, name) in header.iter().take(cols - 1).enumerate() {
        if name != format!("x{j}") {
            return Err(parse(format!("column {j} is `{name}`, expected `x{j}`")));
        }
    }
    let d = cols - 1;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| parse(e.to_string()))?;
        if record.len() != cols {
            return Err(parse(format!(
                "row {} has {} fields, expected {cols}",
                row + 1,
                record.len()
            )));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse(format!("row {}: `{field}` is not a number", row + 1)))?;
            if j < d {
                x.push(v);
            } else {
                y.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(parse("dataset has no rows".into()));
    }
    Observations::new(d, x, y)
}

/// Returns the `#`-prefixed header of a file with the markers removed.
pub fn read_comment_header(path: &Path) -> Result<String> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        match line.strip_prefix('#') {
            Some(rest) => {
                out.push_str(rest.strip_prefix(' ').unwrap_or(rest));
                out.push('\n');
            }
            None => break,
        }
    }
    Ok(out)
}

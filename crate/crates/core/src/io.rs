//! On-disk formats: a small binary matrix container and CSV emission.
//!
//! Matrices go to `.rpmx` files, a fixed little-endian layout with an
//! optional time axis. Every CSV starts with `#` comment lines carrying
//! provenance, which the `csv` crate tolerates on read when told to.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RPMX";
const VERSION: u32 = 1;
const FLAG_TIMES: u32 = 1;

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Writes a matrix, column major, with an optional per-column time axis.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>, times: Option<&[f64]>) -> Result<()> {
    if let Some(t) = times {
        if t.len() != m.ncols() {
            return Err(format_err(
                path,
                format!("{} times for {} columns", t.len(), m.ncols()),
            ));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    let flags = if times.is_some() { FLAG_TIMES } else { 0 };
    w.write_all(&flags.to_le_bytes())?;
    if let Some(t) = times {
        for v in t {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix`].
pub fn read_matrix(path: &Path) -> Result<(DMatrix<f64>, Option<Vec<f64>>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| format_err(path, "file too short for header"))?;
    if &magic != MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let version = read_u32(&mut r, path)?;
    if version != VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let rows = read_u64(&mut r, path)? as usize;
    let cols = read_u64(&mut r, path)? as usize;
    let flags = read_u32(&mut r, path)?;
    if rows.checked_mul(cols).is_none() || rows * cols > (1 << 33) {
        return Err(format_err(path, format!("implausible shape {rows}x{cols}")));
    }
    let times = if flags & FLAG_TIMES != 0 {
        let mut t = vec![0.0; cols];
        read_f64_into(&mut r, &mut t, path)?;
        Some(t)
    } else {
        None
    };
    let mut data = vec![0.0; rows * cols];
    read_f64_into(&mut r, &mut data, path)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(format_err(path, "trailing bytes after matrix data"));
    }
    Ok((DMatrix::from_vec(rows, cols, data), times))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| format_err(path, "truncated header"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| format_err(path, "truncated header"))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64_into(r: &mut impl Read, out: &mut [f64], path: &Path) -> Result<()> {
    let mut b = [0u8; 8];
    for v in out.iter_mut() {
        r.read_exact(&mut b)
            .map_err(|_| format_err(path, "truncated payload"))?;
        *v = f64::from_le_bytes(b);
    }
    Ok(())
}

/// Writes a JSON sidecar next to `path`, swapping in the `.meta.json`
/// extension.
pub fn write_meta<T: Serialize>(path: &Path, meta: &T) -> Result<()> {
    let mut side = path.to_path_buf();
    side.set_extension("meta.json");
    let mut w = BufWriter::new(File::create(&side)?);
    serde_json::to_writer_pretty(&mut w, meta)
        .map_err(|e| format_err(&side, e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Opens a CSV writer after stamping `# key: value` provenance lines.
pub fn csv_writer(
    path: &Path,
    provenance: &[(&str, String)],
) -> Result<csv::Writer<BufWriter<File>>> {
    let mut f = BufWriter::new(File::create(path)?);
    for (k, v) in provenance {
        writeln!(f, "# {k}: {v}")?;
    }
    Ok(csv::WriterBuilder::new().from_writer(f))
}

/// Reads a CSV written by [`csv_writer`], skipping the comment lines.
pub fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(BufReader::new(File::open(path)?)))
}

/// Numbers in CSVs use the shortest form that parses back to the same
/// float.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

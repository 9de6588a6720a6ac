//! File formats: point clouds (CSV or binary), sparse matrices as
//! coordinate CSV, dense matrices and per-point matrix bundles as CSV,
//! gradient problems and reports as JSON.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flasso::{LassoProblem, LassoSolution};
use crate::graph::PointCloud;
use crate::sparse::CsrMatrix;

/// Magic bytes opening a binary point cloud.
pub const MAGIC: &[u8; 4] = b"MLAS";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => parse_error(path, line, format!("{kind:?}")),
    }
}

/// Reads numeric CSV rows, checking that every row has the same width.
fn read_numeric_rows(path: &Path, skip_header: bool) -> Result<(Vec<f64>, usize, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(skip_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(open(path)?));
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(parse_error(path, line, format!("expected {w} fields, found {}", rec.len())));
            }
            _ => {}
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(path, line, format!("column {c}: cannot parse {field:?} as a number")))?;
            if !v.is_finite() {
                return Err(parse_error(path, line, format!("column {c}: non-finite value {field:?}")));
            }
            data.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| parse_error(path, 0, "file contains no rows"))?;
    Ok((data, rows, width))
}

fn write_rows<'a>(path: &Path, header: Option<&[String]>, rows: impl Iterator<Item = Vec<String>> + 'a) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    if let Some(h) = header {
        w.write_record(h).map_err(|e| csv_error(path, e))?;
    }
    for r in rows {
        w.write_record(&r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One point per row, no header unless `skip_header`.
pub fn read_cloud_csv(path: &Path, skip_header: bool) -> Result<PointCloud> {
    let (data, n, dim) = read_numeric_rows(path, skip_header)?;
    PointCloud::new(data, n, dim)
}

pub fn write_cloud_csv(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_rows(
        path,
        None,
        (0..cloud.len()).map(|i| cloud.point(i).iter().map(f64::to_string).collect()),
    )
}

/// Little-endian binary: `"MLAS"`, `u32 n`, `u32 D`, `u32` reserved (zero),
/// then `n * D` row-major `f64` values.
pub fn write_cloud_binary(path: &Path, cloud: &PointCloud) -> Result<()> {
    let n = u32::try_from(cloud.len()).map_err(|_| invalid("too many points for the binary format"))?;
    let dim = u32::try_from(cloud.dim()).map_err(|_| invalid("dimension too large for the binary format"))?;
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    for v in [n, dim, 0] {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for v in cloud.as_slice() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_cloud_binary(path: &Path) -> Result<PointCloud> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(parse_error(path, 0, "missing MLAS header"));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().expect("four bytes")) as usize;
    let (n, dim) = (word(1), word(2));
    let expected = n
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| parse_error(path, 0, "header sizes overflow"))?;
    if bytes.len() - 16 != expected {
        return Err(parse_error(
            path,
            0,
            format!("header declares {n} x {dim} values but payload has {} bytes", bytes.len() - 16),
        ));
    }
    let data = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    PointCloud::new(data, n, dim)
}

/// Reads binary when the file starts with the magic bytes, CSV otherwise.
pub fn read_cloud(path: &Path, skip_header: bool) -> Result<PointCloud> {
    let mut head = [0u8; 4];
    let mut f = open(path)?;
    let got = f.read(&mut head).map_err(|e| Error::io(path, e))?;
    if got == 4 && &head == MAGIC {
        read_cloud_binary(path)
    } else {
        read_cloud_csv(path, skip_header)
    }
}

/// Coordinate CSV with header `i,j,value` and 0-based indices.
pub fn write_coo_csv(path: &Path, m: &CsrMatrix) -> Result<()> {
    let header = ["i", "j", "value"].map(String::from);
    write_rows(
        path,
        Some(&header),
        m.triplets().map(|(i, j, v)| vec![i.to_string(), j.to_string(), v.to_string()]),
    )
}

/// Reads coordinate CSV; the shape defaults to one past the largest index.
pub fn read_coo_csv(path: &Path, shape: Option<(usize, usize)>) -> Result<CsrMatrix> {
    let (data, rows, width) = read_numeric_rows(path, true)?;
    if width != 3 {
        return Err(parse_error(path, 1, format!("expected 3 columns (i, j, value), found {width}")));
    }
    let mut triplets = Vec::with_capacity(rows);
    for (k, t) in data.chunks_exact(3).enumerate() {
        let index = |v: f64| {
            if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(parse_error(path, k as u64 + 2, format!("invalid index {v}")))
            }
        };
        triplets.push((index(t[0])?, index(t[1])?, t[2]));
    }
    let (nr, nc) = shape.unwrap_or_else(|| {
        let m = triplets.iter().map(|t| t.0.max(t.1) + 1).max().unwrap_or(0);
        (m, m)
    });
    CsrMatrix::from_triplets(nr, nc, &triplets)
}

/// Dense matrix, one row per line, no header.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_rows(path, None, (0..m.nrows()).map(|i| m.row(i).iter().map(f64::to_string).collect()))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let (data, n, m) = read_numeric_rows(path, false)?;
    Ok(DMatrix::from_row_slice(n, m, &data))
}

/// Per-point matrices as rows `point, rows, cols, values…` with the values
/// in row-major order.
pub fn write_bundle_csv<'a>(path: &Path, entries: impl Iterator<Item = (usize, &'a DMatrix<f64>)>) -> Result<()> {
    write_rows(
        path,
        None,
        entries.map(|(i, m)| {
            let mut r = vec![i.to_string(), m.nrows().to_string(), m.ncols().to_string()];
            for a in 0..m.nrows() {
                r.extend(m.row(a).iter().map(f64::to_string));
            }
            r
        }),
    )
}

pub fn read_bundle_csv(path: &Path) -> Result<Vec<(usize, DMatrix<f64>)>> {
    let (data, rows, width) = read_numeric_rows(path, false)?;
    let mut out = Vec::with_capacity(rows);
    for (k, r) in data.chunks_exact(width).enumerate() {
        let (i, nr, nc) = (r[0] as usize, r[1] as usize, r[2] as usize);
        if nr * nc + 3 != width {
            return Err(parse_error(
                path,
                k as u64 + 1,
                format!("shape {nr} x {nc} does not match {width} fields"),
            ));
        }
        out.push((i, DMatrix::from_row_slice(nr, nc, &r[3..])));
    }
    Ok(out)
}

/// Serialized gradient problem. Matrices are stored row-major per point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub names: Vec<String>,
    pub rows: usize,
    pub p: usize,
    pub m: usize,
    /// Original point index of each entry.
    #[serde(default)]
    pub points: Vec<usize>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl ProblemFile {
    pub fn from_problem(problem: &LassoProblem, points: &[usize]) -> Self {
        ProblemFile {
            names: problem.names().to_vec(),
            rows: problem.rows(),
            p: problem.p(),
            m: problem.m(),
            points: points.to_vec(),
            x: problem.x().iter().map(row_major).collect(),
            y: problem.y().iter().map(row_major).collect(),
        }
    }

    pub fn to_problem(&self) -> Result<LassoProblem> {
        let shape = |v: &Vec<f64>, c: usize| {
            if v.len() == self.rows * c {
                Ok(DMatrix::from_row_slice(self.rows, c, v))
            } else {
                Err(invalid(format!("matrix has {} values, expected {} x {c}", v.len(), self.rows)))
            }
        };
        let x = self.x.iter().map(|v| shape(v, self.p)).collect::<Result<_>>()?;
        let y = self.y.iter().map(|v| shape(v, self.m)).collect::<Result<_>>()?;
        LassoProblem::new(x, y, self.names.clone())
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.line() as u64, e.to_string()))
}

pub fn write_problem(path: &Path, problem: &LassoProblem, points: &[usize]) -> Result<()> {
    write_json(path, &ProblemFile::from_problem(problem, points))
}

pub fn read_problem(path: &Path) -> Result<(LassoProblem, Vec<usize>)> {
    let f: ProblemFile = read_json(path)?;
    let problem = f.to_problem()?;
    Ok((problem, f.points))
}

/// Path table: `lambda, group_index, group_name, group_norm, norm_1 … norm_m`.
pub fn write_path_csv(path: &Path, names: &[String], solutions: &[LassoSolution]) -> Result<()> {
    let m = solutions.first().map_or(0, |s| s.coordinate_norms.first().map_or(0, Vec::len));
    let mut header: Vec<String> = ["lambda", "group_index", "group_name", "group_norm"].map(String::from).to_vec();
    header.extend((1..=m).map(|k| format!("norm_{k}")));
    let rows = solutions.iter().flat_map(|s| {
        names.iter().enumerate().map(move |(j, name)| {
            let mut r = vec![s.lambda.to_string(), j.to_string(), name.clone(), s.group_norms[j].to_string()];
            r.extend(s.coordinate_norms[j].iter().map(f64::to_string));
            r
        })
    });
    write_rows(path, Some(&header), rows)
}

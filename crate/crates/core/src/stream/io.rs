//! On-disk point formats.
//!
//! * CSV: comma-separated decimal floats, one point per line. The first line
//!   may be a header starting with `#`. Blank lines are ignored.
//! * Binary: magic `SSEL1\0`, then `n` and `d` as little-endian `u64`, then
//!   `n·d` little-endian `f64`s in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::PointSet;

pub const MAGIC: &[u8; 6] = b"SSEL1\0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    Bin,
}

impl FileFormat {
    /// Sniffs the magic bytes; anything else is treated as CSV.
    pub fn detect(path: &Path) -> Result<FileFormat> {
        let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut head = [0u8; 6];
        let mut got = 0;
        while got < head.len() {
            match f.read(&mut head[got..]).map_err(|e| Error::io(path, e))? {
                0 => break,
                k => got += k,
            }
        }
        if got == head.len() && &head == MAGIC {
            return Ok(FileFormat::Bin);
        }
        let is_bin_ext = path.extension().is_some_and(|e| e == "bin");
        if is_bin_ext {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: "magic mismatch: expected SSEL1\\0".into(),
            });
        }
        Ok(FileFormat::Csv)
    }
}

/// Shape discovered while validating a file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub n: usize,
    pub d: usize,
}

/// Visits every row of a file in order. Returns the number of rows visited.
pub fn for_each_row<F>(path: &Path, format: FileFormat, mut f: F) -> Result<Shape>
where
    F: FnMut(usize, &[f64]) -> Result<()>,
{
    match format {
        FileFormat::Csv => for_each_csv_row(path, &mut f),
        FileFormat::Bin => for_each_bin_row(path, &mut f),
    }
}

fn for_each_csv_row(path: &Path, f: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<Shape> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut d = None;
    let mut n = 0;
    let mut row = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            if lineno == 1 {
                continue;
            }
            return Err(parse_err(path, lineno, "header lines are only allowed on line 1"));
        }
        row.clear();
        for field in trimmed.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("not a number: {:?}", field.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(path, lineno, "non-finite value"));
            }
            row.push(v);
        }
        match d {
            None => d = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("expected {d} values, found {}", row.len()),
                ))
            }
            _ => {}
        }
        f(n, &row)?;
        n += 1;
    }
    match d {
        Some(d) => Ok(Shape { n, d }),
        None => Err(Error::Format {
            path: path.to_path_buf(),
            msg: "no data rows".into(),
        }),
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_bin_header(path: &Path, r: &mut impl Read) -> Result<Shape> {
    let fmt_err = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    };
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|_| fmt_err("file too short for header"))?;
    if &magic != MAGIC {
        return Err(fmt_err("magic mismatch: expected SSEL1\\0"));
    }
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| fmt_err("truncated header"))?;
    let n = u64::from_le_bytes(buf) as usize;
    r.read_exact(&mut buf).map_err(|_| fmt_err("truncated header"))?;
    let d = u64::from_le_bytes(buf) as usize;
    if n == 0 || d == 0 {
        return Err(fmt_err("header declares an empty matrix"));
    }
    Ok(Shape { n, d })
}

fn for_each_bin_row(path: &Path, f: &mut dyn FnMut(usize, &[f64]) -> Result<()>) -> Result<Shape> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let shape = read_bin_header(path, &mut r)?;
    let mut bytes = vec![0u8; shape.d * 8];
    let mut row = vec![0.0; shape.d];
    for i in 0..shape.n {
        r.read_exact(&mut bytes).map_err(|_| Error::Format {
            path: path.to_path_buf(),
            msg: format!("truncated data at row {i} of {}", shape.n),
        })?;
        for (v, b) in row.iter_mut().zip(bytes.chunks_exact(8)) {
            *v = f64::from_le_bytes(b.try_into().unwrap());
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("non-finite value at row {i}, column {j}"),
            });
        }
        f(i, &row)?;
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "trailing bytes after data".into(),
        });
    }
    Ok(shape)
}

pub fn read_points(path: &Path) -> Result<PointSet> {
    let format = FileFormat::detect(path)?;
    let mut data = Vec::new();
    let shape = for_each_row(path, format, |_, row| {
        data.extend_from_slice(row);
        Ok(())
    })?;
    PointSet::new(shape.n, shape.d, data)
}

pub fn write_points(points: &PointSet, path: &Path, format: FileFormat) -> Result<()> {
    match format {
        FileFormat::Csv => write_csv(points, path),
        FileFormat::Bin => write_bin(points, path),
    }
}

/// Writes shortest round-trip decimal representations, so reading the file
/// back reproduces every value bit for bit.
pub fn write_csv(points: &PointSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = String::new();
    for row in points.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_bin(points: &PointSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(PathBuf::from(path), e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(points.n() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(points.d() as u64).to_le_bytes()).map_err(io)?;
    for v in points.as_slice() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "# x,y\n1,2\n3.5,-4\n\n5e-3,6\n").unwrap();
        let x = read_points(&p).unwrap();
        assert_eq!((x.n(), x.d()), (3, 2));
        assert_eq!(x.row(2), &[0.005, 6.0]);
    }

    #[test]
    fn ragged_csv_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "1,2\n3,4,5\n").unwrap();
        match read_points(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&p, "1,2\n3,inf\n").unwrap();
        assert!(matches!(read_points(&p), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "1,x\n").unwrap();
        assert!(matches!(read_points(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn binary_magic_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        std::fs::write(&p, b"SSEL2\0xxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(read_points(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn binary_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        let mut bytes = MAGIC.to_vec();
        bytes.extend(2u64.to_le_bytes());
        bytes.extend(2u64.to_le_bytes());
        bytes.extend(1.0f64.to_le_bytes());
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_points(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn binary_layout_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        let x = PointSet::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        write_bin(&x, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..6], b"SSEL1\0");
        assert_eq!(u64::from_le_bytes(bytes[6..14].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[14..22].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 22 + 6 * 8);
        assert_eq!(f64::from_le_bytes(bytes[22 + 8..22 + 16].try_into().unwrap()), 2.0);
    }

    proptest! {
        #[test]
        fn files_round_trip_bit_exact(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..20), bin in any::<bool>()) {
            let dir = tempfile::tempdir().unwrap();
            let x = PointSet::from_rows(&rows).unwrap();
            let (p, fmt) = if bin { (dir.path().join("x.bin"), FileFormat::Bin) } else { (dir.path().join("x.csv"), FileFormat::Csv) };
            write_points(&x, &p, fmt).unwrap();
            let y = read_points(&p).unwrap();
            prop_assert_eq!(x, y);
        }
    }
}

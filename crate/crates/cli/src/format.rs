//! On-disk formats.
//!
//! Tensor CSV: the header `stf-v1,A,B,T`, then `T` blocks of `A` lines with
//! `B` comma-separated values each; block `t`, line `a`, field `b` holds
//! `x[a, b, t]`. A block written entirely as `NaN` marks a gap time step.
//!
//! Matrix CSV: the header `stm-v1,R,C`, then `R` lines of `C` values.
//!
//! Binary tensor (`.bin`): three little-endian `u64` dimensions `A, B, T`
//! followed by `A·B·T` little-endian `f64` values in `(a, b, t)` row-major
//! order. There is no version line; the layout is fixed.
//!
//! Every write goes to a temporary sibling first and is renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use stf_core::{DataMatrix, SpatioTemporalTensor};

use crate::error::{CliError, CliResult};

pub const TENSOR_HEADER: &str = "stf-v1";
pub const MATRIX_HEADER: &str = "stm-v1";

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| CliError::input(format!("{} is not a file path", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn number(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NaN".to_string()
    }
}

fn parse_header(path: &Path, line: Option<&str>, tag: &str, n: usize) -> CliResult<Vec<usize>> {
    let line = line.ok_or_else(|| CliError::input(format!("{}: empty file", path.display())))?;
    let fields: Vec<&str> = line.trim().split(',').collect();
    if fields.first().map(|f| f.trim()) != Some(tag) {
        return Err(CliError::input(format!(
            "{}: row 1, col 1: expected format tag `{tag}`, found `{}`",
            path.display(),
            fields.first().unwrap_or(&"")
        )));
    }
    if fields.len() != n + 1 {
        return Err(CliError::input(format!(
            "{}: row 1: header needs {n} dimensions after `{tag}`, found {}",
            path.display(),
            fields.len() - 1
        )));
    }
    fields[1..]
        .iter()
        .enumerate()
        .map(|(i, f)| {
            f.trim().parse::<usize>().map_err(|_| {
                CliError::input(format!(
                    "{}: row 1, col {}: `{}` is not a dimension",
                    path.display(),
                    i + 2,
                    f.trim()
                ))
            })
        })
        .collect()
}

/// Parses data lines into a flat vector, checking `width` fields per line.
/// `row` numbers in diagnostics are 1-based file lines.
fn parse_rows<'a>(
    path: &Path,
    lines: impl Iterator<Item = (usize, &'a str)>,
    count: usize,
    width: usize,
) -> CliResult<Vec<f64>> {
    let mut out = Vec::with_capacity(count * width);
    let mut seen = 0;
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if seen == count {
            return Err(CliError::input(format!(
                "{}: row {row}: unexpected data beyond the {count} rows announced in the header",
                path.display()
            )));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(CliError::input(format!(
                "{}: row {row}: expected {width} fields, found {}",
                path.display(),
                fields.len()
            )));
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| {
                CliError::input(format!(
                    "{}: row {row}, col {}: cannot parse `{}` as a number",
                    path.display(),
                    c + 1,
                    f.trim()
                ))
            })?;
            out.push(v);
        }
        seen += 1;
    }
    if seen != count {
        return Err(CliError::input(format!(
            "{}: header announces {count} data rows, found {seen}",
            path.display()
        )));
    }
    Ok(out)
}

pub fn tensor_to_csv(t: &SpatioTemporalTensor) -> String {
    let (a, b, n) = t.dims();
    let mask = t.time_mask();
    let mut s = format!("{TENSOR_HEADER},{a},{b},{n}\n");
    for k in 0..n {
        let gap = mask.is_some_and(|m| !m[k]);
        for i in 0..a {
            let line: Vec<String> = (0..b)
                .map(|j| if gap { "NaN".to_string() } else { number(t.get(i, j, k)) })
                .collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
    }
    s
}

pub fn tensor_from_csv(path: &Path, text: &str) -> CliResult<SpatioTemporalTensor> {
    let mut lines = text.lines().enumerate();
    let dims = parse_header(path, lines.next().map(|(_, l)| l), TENSOR_HEADER, 3)?;
    let (a, b, n) = (dims[0], dims[1], dims[2]);
    let flat = parse_rows(path, lines, a * n, b)?;
    // flat is (t, a, b); the tensor stores (a, b, t)
    let mut values = vec![0.0; a * b * n];
    for k in 0..n {
        for i in 0..a {
            for j in 0..b {
                values[(i * b + j) * n + k] = flat[(k * a + i) * b + j];
            }
        }
    }
    build_tensor(path, (a, b, n), values)
}

fn build_tensor(path: &Path, dims: (usize, usize, usize), mut values: Vec<f64>) -> CliResult<SpatioTemporalTensor> {
    let (a, b, n) = dims;
    let gap: Vec<bool> = (0..n)
        .map(|k| a * b > 0 && (0..a * b).all(|c| values[c * n + k].is_nan()))
        .collect();
    let mask = gap.iter().any(|&g| g).then(|| gap.iter().map(|g| !g).collect::<Vec<bool>>());
    for (k, g) in gap.iter().enumerate() {
        if *g {
            for c in 0..a * b {
                values[c * n + k] = 0.0;
            }
        }
    }
    SpatioTemporalTensor::new(dims, values, mask)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn tensor_to_binary(t: &SpatioTemporalTensor) -> Vec<u8> {
    let (a, b, n) = t.dims();
    let mut out = Vec::with_capacity(24 + 8 * t.values().len());
    for d in [a, b, n] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    let mask = t.time_mask();
    for (idx, v) in t.values().iter().enumerate() {
        let gap = mask.is_some_and(|m| !m[idx % n]);
        out.extend_from_slice(&(if gap { f64::NAN } else { *v }).to_le_bytes());
    }
    out
}

pub fn tensor_from_binary(path: &Path, bytes: &[u8]) -> CliResult<SpatioTemporalTensor> {
    if bytes.len() < 24 {
        return Err(CliError::input(format!(
            "{}: binary tensor shorter than its 24-byte header",
            path.display()
        )));
    }
    let dim = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8 bytes")) as usize;
    let (a, b, n) = (dim(0), dim(1), dim(2));
    let count = a.checked_mul(b).and_then(|x| x.checked_mul(n));
    if count.and_then(|c| c.checked_mul(8)).map(|c| c + 24) != Some(bytes.len()) {
        return Err(CliError::input(format!(
            "{}: header says {a}x{b}x{n} but the file holds {} bytes of values",
            path.display(),
            bytes.len() - 24
        )));
    }
    let values = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    build_tensor(path, (a, b, n), values)
}

/// Reads a tensor, choosing the binary layout for `.bin` files. A directory
/// is read as the `slice-XXX.csv` matrices written by `forecast`.
pub fn read_tensor(path: &Path) -> CliResult<SpatioTemporalTensor> {
    if path.is_dir() {
        read_slices(path)
    } else if path.extension().is_some_and(|e| e == "bin") {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        tensor_from_binary(path, &bytes)
    } else {
        tensor_from_csv(path, &read_text(path)?)
    }
}

fn read_slices(dir: &Path) -> CliResult<SpatioTemporalTensor> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("slice-") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::input(format!("{}: no slice-*.csv files", dir.display())));
    }
    let slices = files.iter().map(|p| read_matrix(p)).collect::<CliResult<Vec<_>>>()?;
    let (a, b) = slices[0].dim();
    if let Some((p, m)) = files.iter().zip(&slices).find(|(_, m)| m.dim() != (a, b)) {
        return Err(CliError::input(format!("{}: slice is {:?}, expected {:?}", p.display(), m.dim(), (a, b))));
    }
    let t = slices.len();
    let mut values = vec![0.0; a * b * t];
    for (k, m) in slices.iter().enumerate() {
        for ((i, j), v) in m.indexed_iter() {
            values[(i * b + j) * t + k] = *v;
        }
    }
    Ok(SpatioTemporalTensor::new((a, b, t), values, None)?)
}

/// Writes `t` as `stem.csv` or, with `binary`, as `stem.bin`.
pub fn write_tensor(dir: &Path, stem: &str, t: &SpatioTemporalTensor, binary: bool) -> CliResult<PathBuf> {
    if binary {
        let p = dir.join(format!("{stem}.bin"));
        write_atomic(&p, &tensor_to_binary(t))?;
        Ok(p)
    } else {
        let p = dir.join(format!("{stem}.csv"));
        write_atomic(&p, tensor_to_csv(t).as_bytes())?;
        Ok(p)
    }
}

pub fn matrix_to_csv(m: &DataMatrix) -> String {
    let mut s = format!("{MATRIX_HEADER},{},{}\n", m.nrows(), m.ncols());
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| number(*v)).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn matrix_from_csv(path: &Path, text: &str) -> CliResult<DataMatrix> {
    let mut lines = text.lines().enumerate();
    let dims = parse_header(path, lines.next().map(|(_, l)| l), MATRIX_HEADER, 2)?;
    let flat = parse_rows(path, lines, dims[0], dims[1])?;
    Ok(Array2::from_shape_vec((dims[0], dims[1]), flat).expect("shape checked"))
}

pub fn read_matrix(path: &Path) -> CliResult<DataMatrix> {
    matrix_from_csv(path, &read_text(path)?)
}

pub fn write_matrix(path: &Path, m: &DataMatrix) -> CliResult<()> {
    write_atomic(path, matrix_to_csv(m).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SpatioTemporalTensor {
        let values = (0..2 * 3 * 4).map(|i| i as f64 * 0.25 - 1.0 / 3.0).collect();
        SpatioTemporalTensor::new((2, 3, 4), values, None).unwrap()
    }

    #[test]
    fn tensor_csv_round_trip_is_exact() {
        let t = sample();
        let text = tensor_to_csv(&t);
        assert!(text.starts_with("stf-v1,2,3,4\n"));
        assert_eq!(text.lines().count(), 1 + 4 * 2);
        assert_eq!(tensor_from_csv(Path::new("t.csv"), &text).unwrap(), t);
    }

    #[test]
    fn csv_block_layout() {
        let t = sample();
        let text = tensor_to_csv(&t);
        let line: Vec<f64> = text.lines().nth(1 + 2 + 1).unwrap().split(',').map(|f| f.parse().unwrap()).collect();
        // block t=1, row a=1
        assert_eq!(line, (0..3).map(|b| t.get(1, b, 1)).collect::<Vec<_>>());
    }

    #[test]
    fn binary_round_trip_and_layout() {
        let t = sample();
        let bytes = tensor_to_binary(&t);
        assert_eq!(bytes.len(), 24 + 8 * 24);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 4);
        let second = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
        assert_eq!(second, t.get(0, 0, 1));
        assert_eq!(tensor_from_binary(Path::new("t.bin"), &bytes).unwrap(), t);
        assert!(tensor_from_binary(Path::new("t.bin"), &bytes[..40]).is_err());
    }

    #[test]
    fn gap_slices_survive_both_formats() {
        let mut values: Vec<f64> = (0..2 * 3).map(|i| i as f64).collect();
        for c in 0..2 {
            values[c * 3 + 1] = 0.0;
        }
        let t = SpatioTemporalTensor::new((1, 2, 3), values, Some(vec![true, false, true])).unwrap();
        let csv = tensor_to_csv(&t);
        assert!(csv.lines().nth(2).unwrap().contains("NaN"));
        assert_eq!(tensor_from_csv(Path::new("g.csv"), &csv).unwrap(), t);
        assert_eq!(tensor_from_binary(Path::new("g.bin"), &tensor_to_binary(&t)).unwrap(), t);
    }

    #[test]
    fn diagnostics_name_row_and_column() {
        let bad = "stf-v1,1,2,2\n1,2\n3,oops\n";
        let msg = tensor_from_csv(Path::new("x.csv"), bad).unwrap_err().to_string();
        assert!(msg.contains("row 3, col 2"), "{msg}");
        let short = "stf-v1,1,2,2\n1,2\n3\n";
        let msg = tensor_from_csv(Path::new("x.csv"), short).unwrap_err().to_string();
        assert!(msg.contains("row 3") && msg.contains("expected 2 fields"), "{msg}");
        let tag = "stf-v2,1,2,2\n";
        assert!(tensor_from_csv(Path::new("x.csv"), tag).unwrap_err().to_string().contains("row 1, col 1"));
        let missing = "stf-v1,1,2,3\n1,2\n3,4\n";
        assert!(tensor_from_csv(Path::new("x.csv"), missing).is_err());
    }

    #[test]
    fn matrix_csv_round_trip() {
        let m = ndarray::array![[1.0, -2.5e-17], [f64::MAX, 0.1 + 0.2]];
        let text = matrix_to_csv(&m);
        assert!(text.starts_with("stm-v1,2,2\n"));
        assert_eq!(matrix_from_csv(Path::new("m.csv"), &text).unwrap(), m);
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("m.csv");
        write_matrix(&p, &ndarray::array![[1.0]]).unwrap();
        write_matrix(&p, &ndarray::array![[2.0]]).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), ndarray::array![[2.0]]);
        let names: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn slice_directory_reads_as_tensor() {
        let t = sample();
        let (a, b, n) = t.dims();
        let dir = tempfile::tempdir().unwrap();
        for k in 0..n {
            let m = DataMatrix::from_shape_fn((a, b), |(i, j)| t.get(i, j, k));
            write_matrix(&dir.path().join(format!("slice-{k:03}.csv")), &m).unwrap();
        }
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        assert_eq!(read_tensor(dir.path()).unwrap(), t);
        let empty = tempfile::tempdir().unwrap();
        assert!(read_tensor(empty.path()).is_err());
    }
}

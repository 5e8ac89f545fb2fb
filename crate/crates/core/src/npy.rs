//! Minimal NPY v1.0 reader/writer for little-endian `f32` arrays in C order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Result, StrideError};

const MAGIC: &[u8] = b"\x93NUMPY";

fn shape_tuple(shape: &[usize]) -> String {
    match shape {
        [single] => format!("({single},)"),
        _ => format!("({})", shape.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")),
    }
}

pub fn write_npy<W: Write>(mut out: W, shape: &[usize], data: &[f32]) -> Result<()> {
    if shape.iter().product::<usize>() != data.len() {
        return invalid(format!("shape {shape:?} does not hold {} values", data.len()));
    }
    let dict = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {}, }}", shape_tuple(shape));
    // magic + version + u16 length + dict + padding + '\n' is a multiple of 64
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    let header_len = dict.len() + pad + 1;
    let header_len =
        u16::try_from(header_len).map_err(|_| StrideError::InvalidArgument("npy header too long".into()))?;
    out.write_all(MAGIC)?;
    out.write_all(&[1, 0])?;
    out.write_all(&header_len.to_le_bytes())?;
    out.write_all(dict.as_bytes())?;
    out.write_all(&vec![b' '; pad])?;
    out.write_all(b"\n")?;
    for v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_npy_file(path: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
    let values: Vec<f32> = data.iter().map(|&v| v as f32).collect();
    let mut out = BufWriter::new(File::create(path)?);
    write_npy(&mut out, shape, &values)?;
    out.flush()?;
    Ok(())
}

/// Reads an array written by [`write_npy`]; returns `(shape, values)`.
pub fn read_npy<R: Read>(mut input: R) -> Result<(Vec<usize>, Vec<f32>)> {
    let mut preamble = [0u8; 10];
    input.read_exact(&mut preamble)?;
    if &preamble[..6] != MAGIC || preamble[6] != 1 {
        return invalid("not an NPY v1 file");
    }
    let header_len = u16::from_le_bytes([preamble[8], preamble[9]]) as usize;
    let mut header = vec![0u8; header_len];
    input.read_exact(&mut header)?;
    let header = String::from_utf8_lossy(&header);
    if !header.contains("'descr': '<f4'") || !header.contains("'fortran_order': False") {
        return invalid(format!("unsupported NPY header: {header}"));
    }
    let start = header.find("'shape': (").map(|i| i + 10);
    let shape_str = start
        .and_then(|s| header[s..].find(')').map(|e| &header[s..s + e]))
        .ok_or_else(|| StrideError::InvalidArgument("NPY header has no shape".into()))?;
    let shape = shape_str
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| StrideError::InvalidArgument(format!("bad NPY shape: {e}")))?;
    let count: usize = shape.iter().product();
    let mut raw = vec![0u8; count * 4];
    input.read_exact(&mut raw)?;
    let values = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    Ok((shape, values))
}

pub fn read_npy_file(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    read_npy(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_aligned_and_round_trips() {
        for shape in [vec![3], vec![2, 3], vec![2, 1, 4]] {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = (0..n).map(|i| i as f32 * 0.5 - 1.0).collect();
            let mut buf = Vec::new();
            write_npy(&mut buf, &shape, &data).unwrap();
            let header_len = u16::from_le_bytes([buf[8], buf[9]]) as usize;
            assert_eq!((10 + header_len) % 64, 0);
            assert_eq!(buf[10 + header_len - 1], b'\n');
            assert_eq!(buf.len(), 10 + header_len + 4 * n);
            let (s, d) = read_npy(&buf[..]).unwrap();
            assert_eq!((s, d), (shape, data));
        }
    }

    #[test]
    fn exact_header_text() {
        let mut buf = Vec::new();
        write_npy(&mut buf, &[2, 3], &[0.0; 6]).unwrap();
        let text = String::from_utf8_lossy(&buf[10..]);
        assert!(text.starts_with("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }"));
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(write_npy(Vec::new(), &[2, 2], &[0.0; 3]).is_err());
    }
}

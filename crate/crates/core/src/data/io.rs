//! Point-cloud files.
//!
//! `xyz` text: one point per line, whitespace-separated: three coordinates,
//! optional feature columns, and (when labels are requested) a trailing
//! integer label. `bin`: magic `RPCD`, u32 version, u64 N, u64 C, u8
//! has_labels, then little-endian f64 coordinates, f64 features and i32
//! labels.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"RPCD";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    XyzText,
    Bin,
}

impl Format {
    /// `.bin` is binary, anything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => Format::Bin,
            _ => Format::XyzText,
        }
    }
}

pub fn read_xyz<R: Read>(r: R, with_labels: bool) -> Result<PointCloud> {
    let mut coords = Vec::new();
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: lineno, msg };
        let n_float = fields.len() - with_labels as usize;
        if n_float < 3 {
            return Err(parse_err(format!("expected at least {} columns, found {}", 3 + with_labels as usize, fields.len())));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => return Err(parse_err(format!("expected {w} columns, found {}", fields.len()))),
            _ => {}
        }
        for (i, f) in fields[..n_float].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| parse_err(format!("bad number {f:?}")))?;
            if i < 3 {
                coords.push(v);
            } else {
                feats.push(v);
            }
        }
        if with_labels {
            let f = fields[n_float];
            let l: usize = f.parse().map_err(|_| parse_err(format!("bad label {f:?}")))?;
            labels.push(l);
        }
    }
    let Some(width) = width else {
        return Err(Error::Parse { line: 0, msg: "no points in file".into() });
    };
    let n = coords.len() / 3;
    let c = width - 3 - with_labels as usize;
    let feats = (c > 0).then(|| Tensor::new([n, c], feats)).transpose()?;
    PointCloud::new(Tensor::new([n, 3], coords)?, feats, with_labels.then_some(labels))
}

/// Shortest round-trip formatting for every float.
pub fn write_xyz<W: Write>(w: W, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(w);
    for i in 0..cloud.len() {
        let mut cols: Vec<String> = cloud.coords().row(i).iter().map(|v| format!("{v:?}")).collect();
        if let Some(f) = cloud.feats() {
            cols.extend(f.row(i).iter().map(|v| format!("{v:?}")));
        }
        if let Some(l) = cloud.labels() {
            cols.push(l[i].to_string());
        }
        writeln!(w, "{}", cols.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bin<W: Write>(w: W, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(w);
    let c = cloud.feature_channels();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(cloud.len() as u64).to_le_bytes())?;
    w.write_all(&(c as u64).to_le_bytes())?;
    w.write_all(&[cloud.labels().is_some() as u8])?;
    for v in cloud.coords().data().iter().chain(cloud.feats().map(|f| f.data()).unwrap_or(&[])) {
        w.write_all(&v.to_le_bytes())?;
    }
    for &l in cloud.labels().unwrap_or(&[]) {
        let l = i32::try_from(l).map_err(|_| Error::Format(format!("label {l} does not fit in i32")))?;
        w.write_all(&l.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut b = vec![0u8; n * 8];
    r.read_exact(&mut b)?;
    Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn read_bin<R: Read>(r: R) -> Result<PointCloud> {
    let mut r = BufReader::new(r);
    let mut head = [0u8; 25];
    r.read_exact(&mut head).map_err(|_| Error::Format("truncated header".into()))?;
    if &head[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &head[..4])));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
    let c = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let has_labels = match head[24] {
        0 => false,
        1 => true,
        b => return Err(Error::Format(format!("bad has_labels byte {b}"))),
    };
    if n == 0 || n > 1 << 28 || c > 1 << 16 {
        return Err(Error::Format(format!("implausible size N={n} C={c}")));
    }
    let coords = read_f64s(&mut r, n * 3)?;
    let feats = (c > 0).then(|| read_f64s(&mut r, n * c)).transpose()?;
    let labels = if has_labels {
        let mut b = vec![0u8; n * 4];
        r.read_exact(&mut b)?;
        let mut out = Vec::with_capacity(n);
        for ch in b.chunks_exact(4) {
            let l = i32::from_le_bytes(ch.try_into().unwrap());
            out.push(usize::try_from(l).map_err(|_| Error::Format(format!("negative label {l}")))?);
        }
        Some(out)
    } else {
        None
    };
    let feats = feats.map(|f| Tensor::new([n, c], f)).transpose()?;
    PointCloud::new(Tensor::new([n, 3], coords)?, feats, labels)
}

pub fn io_read(path: &Path, format: Format, with_labels: bool) -> Result<PointCloud> {
    let f = std::fs::File::open(path)?;
    match format {
        Format::XyzText => read_xyz(f, with_labels),
        Format::Bin => read_bin(f),
    }
}

pub fn io_write(path: &Path, format: Format, cloud: &PointCloud) -> Result<()> {
    let f = std::fs::File::create(path)?;
    match format {
        Format::XyzText => write_xyz(f, cloud),
        Format::Bin => write_bin(f, cloud),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_line_with_label() {
        let c = read_xyz("1.0 2.0 3.0 7\n".as_bytes(), true).unwrap();
        assert_eq!(c.point(0), [1., 2., 3.]);
        assert_eq!(c.labels().unwrap(), &[7]);
    }

    #[test]
    fn empty_text_is_parse_error() {
        assert!(matches!(read_xyz("".as_bytes(), false), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_line_reports_number() {
        match read_xyz("1 2 3\n4 x 6\n".as_bytes(), false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic() {
        let mut buf = Vec::new();
        write_bin(&mut buf, &PointCloud::from_points(&[[0.; 3]]).unwrap()).unwrap();
        buf[0] = b'X';
        assert!(matches!(read_bin(buf.as_slice()), Err(Error::Format(_))));
    }
}

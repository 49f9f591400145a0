//! VVOL binary volumes and the JSON-lines sparse exchange format.
//!
//! VVOL layout, all little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `VVOL`                            |
//! | 4      | 4    | format version (`u32`, currently 1)     |
//! | 8      | 24   | `nx, ny, nz` as `u64`                   |
//! | 32     | 24   | origin as 3 x `f64`                     |
//! | 56     | 24   | spacing as 3 x `f64`                    |
//! | 80     | 24   | three 8-byte space-padded ASCII labels  |
//! | 104    | 4·n  | `f32` samples, x fastest                |

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DenseVolume, Geometry, SparsePoints, VoxelIndex};
use crate::error::{Error, Result};

pub const VVOL_MAGIC: &[u8; 4] = b"VVOL";
pub const VVOL_VERSION: u32 = 1;
pub const VVOL_HEADER_LEN: usize = 104;

pub fn write_vvol<W: Write>(v: &DenseVolume, mut w: W) -> std::io::Result<()> {
    let mut header = Vec::with_capacity(VVOL_HEADER_LEN);
    header.extend_from_slice(VVOL_MAGIC);
    header.extend_from_slice(&VVOL_VERSION.to_le_bytes());
    for d in v.dims() {
        header.extend_from_slice(&(d as u64).to_le_bytes());
    }
    let g = v.geometry();
    for x in g.origin.iter().chain(&g.spacing) {
        header.extend_from_slice(&x.to_le_bytes());
    }
    for label in v.axis_labels() {
        let mut field = [b' '; 8];
        field[..label.len()].copy_from_slice(label.as_bytes());
        header.extend_from_slice(&field);
    }
    debug_assert_eq!(header.len(), VVOL_HEADER_LEN);
    w.write_all(&header)?;

    let mut buf = Vec::with_capacity(1 << 16);
    for chunk in v.values().chunks(1 << 14) {
        buf.clear();
        for x in chunk {
            buf.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

pub fn save_volume(v: &DenseVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_vvol(v, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.bytes.len() as u64,
                format!(
                    "truncated {what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            )),
        }
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses a complete VVOL image.
pub fn read_vvol(bytes: &[u8]) -> Result<DenseVolume> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != VVOL_MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}", String::from_utf8_lossy(magic))));
    }
    let version = u32::from_le_bytes(c.take(4, "version")?.try_into().unwrap());
    if version != VVOL_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        let offset = c.pos as u64;
        let raw = c.u64("dims")?;
        *d = usize::try_from(raw)
            .ok()
            .filter(|&x| x > 0)
            .ok_or_else(|| Error::format(offset, format!("invalid extent {raw} on axis {a}")))?;
    }
    let payload_len = dims
        .iter()
        .try_fold(4usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(8, format!("dims {dims:?} overflow")))?;

    let mut geometry = Geometry::default();
    for a in 0..3 {
        geometry.origin[a] = c.f64("origin")?;
    }
    for a in 0..3 {
        geometry.spacing[a] = c.f64("spacing")?;
    }
    let mut labels: [String; 3] = Default::default();
    for label in &mut labels {
        let offset = c.pos as u64;
        let raw = c.take(8, "axis label")?;
        if !raw.is_ascii() {
            return Err(Error::format(offset, "axis label is not ASCII"));
        }
        *label = String::from_utf8_lossy(raw).trim_end_matches(' ').to_owned();
    }

    let start = c.pos;
    let payload = c.take(payload_len, "payload")?;
    if c.pos != bytes.len() {
        return Err(Error::format(
            c.pos as u64,
            format!("{} trailing bytes after payload", bytes.len() - c.pos),
        ));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_bits(u32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    if let Some(pos) = values.iter().position(|v| v.is_infinite()) {
        return Err(Error::format(
            (start + 4 * pos) as u64,
            "infinite sample",
        ));
    }
    let labels_ref = [labels[0].as_str(), labels[1].as_str(), labels[2].as_str()];
    DenseVolume::new(dims, values)
        .and_then(|v| v.with_geometry(geometry))
        .and_then(|v| v.with_axis_labels(labels_ref))
        .map_err(|e| Error::format(32, e.to_string()))
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<DenseVolume> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    read_vvol(&bytes)
}

#[derive(Serialize, Deserialize)]
struct SparseRecord {
    i: u32,
    j: u32,
    k: u32,
    v: f64,
}

/// One `{"i":…,"j":…,"k":…,"v":…}` object per line, in point order.
pub fn write_sparse_jsonl<W: Write>(points: &SparsePoints, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    for (idx, v) in points.iter() {
        let rec = SparseRecord {
            i: idx.i,
            j: idx.j,
            k: idx.k,
            v,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io("<sparse output>", e))?;
    }
    w.flush().map_err(|e| Error::io("<sparse output>", e))
}

/// Reads JSON-lines records. Without explicit `dims` the tight extent is used.
pub fn read_sparse_jsonl<R: Read>(r: R, dims: Option<[usize; 3]>) -> Result<SparsePoints> {
    let mut records = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<sparse input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SparseRecord = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidPoints(format!("line {}: {e}", n + 1)))?;
        records.push((VoxelIndex::new(rec.i, rec.j, rec.k), rec.v));
    }
    match dims {
        Some(d) => SparsePoints::from_records(d, records),
        None => SparsePoints::from_records_tight(records),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DenseVolume {
        DenseVolume::new([2, 2, 2], (0..8).map(|x| x as f32).collect())
            .unwrap()
            .with_geometry(Geometry {
                origin: [-1.0, 0.5, 2.0],
                spacing: [0.02, 0.02, 0.5],
            })
            .unwrap()
            .with_axis_labels(["H", "K", "L"])
            .unwrap()
    }

    #[test]
    fn roundtrip_small() {
        let v = sample();
        let mut buf = Vec::new();
        write_vvol(&v, &mut buf).unwrap();
        assert_eq!(read_vvol(&buf).unwrap(), v);
    }

    #[test]
    fn zeros_file_size() {
        let v = DenseVolume::zeros([2, 2, 2]).unwrap();
        let mut buf = Vec::new();
        write_vvol(&v, &mut buf).unwrap();
        assert_eq!(buf.len(), VVOL_HEADER_LEN + 8 * 4);
    }

    #[test]
    fn nan_payload_survives() {
        let nan = f32::from_bits(0x7fc0_1234);
        let v = DenseVolume::new([2, 1, 1], vec![nan, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_vvol(&v, &mut buf).unwrap();
        let back = read_vvol(&buf).unwrap();
        assert_eq!(back.values()[0].to_bits(), 0x7fc0_1234);
        assert_eq!(back, v);
    }

    #[test]
    fn bad_magic() {
        let mut buf = Vec::new();
        write_vvol(&sample(), &mut buf).unwrap();
        buf[..4].copy_from_slice(b"XXXX");
        match read_vvol(&buf) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => panic!("expected magic error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_for_large_header() {
        let mut buf = Vec::new();
        buf.extend_from_slice(VVOL_MAGIC);
        buf.extend_from_slice(&1u32.to_le_bytes());
        for _ in 0..3 {
            buf.extend_from_slice(&701u64.to_le_bytes());
        }
        for _ in 0..3 {
            buf.extend_from_slice(&0f64.to_le_bytes());
        }
        for _ in 0..3 {
            buf.extend_from_slice(&1f64.to_le_bytes());
        }
        buf.extend_from_slice(b"H       K       L       ");
        buf.extend_from_slice(&[0u8; 10]);
        let err = read_vvol(&buf).unwrap_err();
        match &err {
            Error::Format { offset, message } => {
                assert_eq!(*offset, (VVOL_HEADER_LEN + 10) as u64);
                assert!(message.contains("payload"), "{message}");
                assert!(message.contains("104"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dims_overflow_is_reported() {
        let mut buf = Vec::new();
        write_vvol(&sample(), &mut buf).unwrap();
        buf[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        buf[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(read_vvol(&buf), Err(Error::Format { .. })));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut buf = Vec::new();
        write_vvol(&sample(), &mut buf).unwrap();
        buf.push(0);
        assert!(matches!(read_vvol(&buf), Err(Error::Format { offset: 136, .. })));
    }

    #[test]
    fn sparse_jsonl_roundtrip() {
        let pts = SparsePoints::from_records(
            [4, 4, 4],
            vec![
                (VoxelIndex::new(1, 2, 3), 0.1),
                (VoxelIndex::new(0, 0, 1), 1e-7),
                (VoxelIndex::new(3, 0, 0), 123456.789),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_sparse_jsonl(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), r#"{"i":0,"j":0,"k":1,"v":1e-7}"#);
        let back = read_sparse_jsonl(&buf[..], Some([4, 4, 4])).unwrap();
        assert_eq!(back, pts);
        let tight = read_sparse_jsonl(&buf[..], None).unwrap();
        assert_eq!(tight.dims(), [4, 3, 4]);
    }

    #[test]
    fn sparse_jsonl_rejects_duplicates() {
        let text = "{\"i\":0,\"j\":0,\"k\":0,\"v\":1}\n{\"i\":0,\"j\":0,\"k\":0,\"v\":2}\n";
        assert!(read_sparse_jsonl(text.as_bytes(), None).is_err());
    }
}

//! Little-endian binary layouts shared by the pipeline, plus 16-bit PGM
//! previews.
//!
//! Every binary file opens with an 8-byte ASCII magic. Counts and extents are
//! `u32`, samples `f32`, flags `u8`. Readers reject trailing bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::renderer::{DetectionMaps, NlosDepthMap};
use crate::scene::NlosObject;
use crate::Vec3;

pub const POINT_CLOUD_MAGIC: &[u8; 8] = b"NLOSPC01";
pub const DETECTION_MAPS_MAGIC: &[u8; 8] = b"NLOSDM01";

/// Append-only little-endian encoder.
#[derive(Debug, Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new(magic: &[u8; 8]) -> Self {
        ByteWriter {
            buf: magic.to_vec(),
        }
    }

    pub fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::contract(format!("{v} does not fit in u32")))?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Narrows each value to `f32`.
    pub fn f32s(&mut self, values: impl IntoIterator<Item = f64>) {
        for v in values {
            self.f32(v as f32);
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor over an encoded buffer; every short read is a format error.
#[derive(Debug)]
pub struct ByteReader<'a> {
    kind: &'static str,
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    /// Checks the magic and positions the cursor after it.
    pub fn new(kind: &'static str, data: &'a [u8], magic: &[u8; 8]) -> Result<Self> {
        if data.len() < 8 || &data[..8] != magic {
            return Err(Error::format(
                kind,
                format!("expected magic {:?}", String::from_utf8_lossy(magic)),
            ));
        }
        Ok(ByteReader { kind, data, pos: 8 })
    }

    pub fn error(&self, reason: impl Into<String>) -> Error {
        Error::format(self.kind, reason)
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| self.error(format!("truncated at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// `n` samples widened to `f64`. The length is checked before allocating.
    pub fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| self.error("count overflow"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    pub fn finish(self) -> Result<()> {
        if self.pos == self.data.len() {
            Ok(())
        } else {
            Err(self.error(format!("{} trailing bytes", self.data.len() - self.pos)))
        }
    }
}

fn vec3s(values: &[f64]) -> Vec<Vec3> {
    values
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0], c[1], c[2]))
        .collect()
}

/// `NLOSPC01`, count, then positions, normals (3 × `f32` each) and albedos.
pub fn encode_point_cloud(object: &NlosObject) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new(POINT_CLOUD_MAGIC);
    w.u32(object.len())?;
    for list in [&object.points, &object.normals] {
        w.f32s(list.iter().flat_map(|p| [p.x, p.y, p.z]));
    }
    w.f32s(object.albedos.iter().copied());
    Ok(w.finish())
}

/// Inverse of [`encode_point_cloud`]; the format carries no surfel area, so
/// the caller supplies it. The result is validated.
pub fn decode_point_cloud(data: &[u8], patch_area: f64) -> Result<NlosObject> {
    let mut r = ByteReader::new("point cloud", data, POINT_CLOUD_MAGIC)?;
    let n = r.u32()?;
    let points = vec3s(&r.f32s(3 * n)?);
    // Normals were unit before narrowing to f32; restore full precision.
    let normals = vec3s(&r.f32s(3 * n)?)
        .into_iter()
        .map(Vec3::normalized)
        .collect();
    let albedos = r.f32s(n)?;
    r.finish()?;
    let object = NlosObject {
        points,
        normals,
        albedos,
        patch_area,
    };
    object.validate()?;
    Ok(object)
}

/// `NLOSDM01`, width, height, then depth and intensity planes (`f32`) and
/// the artifact plane (`u8`), all row-major.
pub fn encode_detection_maps(maps: &DetectionMaps) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new(DETECTION_MAPS_MAGIC);
    w.u32(maps.width)?;
    w.u32(maps.height)?;
    w.f32s(maps.depth.iter().copied());
    w.f32s(maps.intensity.iter().copied());
    w.bytes(&maps.artifact.iter().map(|&a| a as u8).collect::<Vec<_>>());
    Ok(w.finish())
}

pub fn decode_detection_maps(data: &[u8]) -> Result<DetectionMaps> {
    let mut r = ByteReader::new("detection maps", data, DETECTION_MAPS_MAGIC)?;
    let width = r.u32()?;
    let height = r.u32()?;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| r.error("extent overflow"))?;
    let depth = r.f32s(n)?;
    let intensity = r.f32s(n)?;
    let mut artifact = Vec::with_capacity(n);
    for &b in r.take(n)? {
        artifact.push(match b {
            0 => false,
            1 => true,
            other => return Err(r.error(format!("artifact flag {other} is not 0 or 1"))),
        });
    }
    r.finish()?;
    Ok(DetectionMaps {
        width,
        height,
        depth,
        intensity,
        artifact,
    })
}

/// Binary 16-bit PGM (`P5`, big-endian samples). Values are scaled so `max`
/// maps to 65535; a non-positive `max` gives a black image.
pub fn encode_pgm16(width: usize, height: usize, values: &[f64], max: f64) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::contract(format!(
            "{} values for a {width}x{height} image",
            values.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &v in values {
        let s = if max > 0.0 && v.is_finite() {
            (v / max).clamp(0.0, 1.0) * 65535.0
        } else {
            0.0
        };
        out.extend_from_slice(&(s.round() as u16).to_be_bytes());
    }
    Ok(out)
}

/// Depth preview normalized to the map's own maximum.
pub fn depth_preview(width: usize, height: usize, depth: &[f64]) -> Result<Vec<u8>> {
    let max = depth.iter().copied().fold(0.0, f64::max);
    encode_pgm16(width, height, depth, max)
}

pub fn target_preview(map: &NlosDepthMap) -> Result<Vec<u8>> {
    let depth: Vec<f64> = map.depth.iter().map(|&d| d as f64).collect();
    depth_preview(map.width, map.height, &depth)
}

/// Reads a whole file, naming the path on failure.
pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_file(path: &Path, data: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    std::fs::write(&tmp, data)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps() -> DetectionMaps {
        DetectionMaps {
            width: 3,
            height: 2,
            depth: vec![0.0, 1.25, 2.5, 0.1, 0.2, 0.3],
            intensity: vec![0.0, 1e-3, 2e-4, 0.5, 0.25, 0.125],
            artifact: vec![false, true, false, false, false, true],
        }
    }

    #[test]
    fn detection_maps_layout() {
        let bytes = encode_detection_maps(&maps()).unwrap();
        assert_eq!(&bytes[..8], b"NLOSDM01");
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 6 * 4 * 2 + 6);
        assert_eq!(&bytes[20..24], &1.25f32.to_le_bytes());
        assert_eq!(&bytes[bytes.len() - 6..], &[0, 1, 0, 0, 0, 1]);
    }

    #[test]
    fn detection_maps_round_trip() {
        let first = encode_detection_maps(&maps()).unwrap();
        let back = decode_detection_maps(&first).unwrap();
        assert_eq!(back.artifact, maps().artifact);
        assert_eq!(back.depth[1], 1.25);
        assert_eq!(encode_detection_maps(&back).unwrap(), first);
    }

    #[test]
    fn rejects_bad_magic_truncation_and_trailing_bytes() {
        let good = encode_detection_maps(&maps()).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_detection_maps(&bad), Err(Error::Format { .. })));
        assert!(decode_detection_maps(&good[..good.len() - 1]).is_err());
        let mut long = good.clone();
        long.push(0);
        assert!(decode_detection_maps(&long).is_err());
        let mut flag = good;
        let last = flag.len() - 1;
        flag[last] = 7;
        assert!(decode_detection_maps(&flag).is_err());
    }

    #[test]
    fn huge_declared_extent_is_rejected_without_allocating() {
        let mut w = ByteWriter::new(DETECTION_MAPS_MAGIC);
        w.u32(u32::MAX as usize).unwrap();
        w.u32(u32::MAX as usize).unwrap();
        assert!(decode_detection_maps(&w.finish()).is_err());
    }

    #[test]
    fn point_cloud_round_trip() {
        let object = NlosObject {
            points: vec![Vec3::new(0.5, -1.0, 2.25), Vec3::new(1.0, 0.0, 0.125)],
            normals: vec![Vec3::Z, Vec3::new(0.6, 0.8, 0.0)],
            albedos: vec![0.5, 1.0],
            patch_area: 1e-3,
        };
        let bytes = encode_point_cloud(&object).unwrap();
        assert_eq!(&bytes[..8], b"NLOSPC01");
        assert_eq!(bytes.len(), 12 + 2 * 7 * 4);
        let back = decode_point_cloud(&bytes, 1e-3).unwrap();
        assert_eq!(back.points, object.points);
        assert_eq!(encode_point_cloud(&back).unwrap(), bytes);
    }

    #[test]
    fn pgm_header_and_scaling() {
        let pgm = encode_pgm16(2, 1, &[0.5, 1.0], 1.0).unwrap();
        let header = b"P5\n2 1\n65535\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(&pgm[header.len()..], &[0x80, 0x00, 0xff, 0xff]);
        assert!(encode_pgm16(2, 2, &[0.0], 1.0).is_err());
    }
}

//! On-disk formats.
//!
//! * ASCII cloud: one `x y z` triple per line (meters). Blank lines and lines
//!   starting with `#` are ignored.
//! * `DHPC` cloud: magic `44 48 50 43`, u32 LE count, `count × 3` f32 LE.
//! * `DHFV` features: magic `44 48 46 56`, u32 LE count, u32 LE dim,
//!   `count × dim` f32 LE row-major.
//! * `DHCR` correspondences: magic `44 48 43 52`, u32 LE count, then
//!   `count × (u32 src, u32 dst, f32 similarity)`, all LE.
//! * Transform: 16 whitespace-separated numbers, row-major 4×4, last row
//!   `0 0 0 1`.
//!
//! All writers go through a temporary file in the destination directory and
//! an atomic rename.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::cloud::{FeatureSet, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{is_rotation, RigidTransform, Vec3};
use crate::matching::Correspondence;

pub const CLOUD_MAGIC: &[u8; 4] = b"DHPC";
pub const FEATURE_MAGIC: &[u8; 4] = b"DHFV";
pub const CORR_MAGIC: &[u8; 4] = b"DHCR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Ascii,
    Binary,
}

impl CloudFormat {
    /// `.dhpc` and `.bin` are binary; anything else is ASCII.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(ext) if ext == "dhpc" || ext == "bin" => CloudFormat::Binary,
            _ => CloudFormat::Ascii,
        }
    }
}

/// Writes `bytes` to `path` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Little-endian cursor that reports shortfalls with byte offsets.
struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Self { path, bytes, pos: 0 }
    }

    fn need(&self, n: usize, what: &str) -> Result<()> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(Error::malformed(
                self.path,
                self.pos as u64,
                format!("expected {n} bytes of {what}, {available} available"),
            ));
        }
        Ok(())
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        self.need(4, "magic")?;
        if &self.bytes[..4] != magic {
            return Err(Error::malformed(
                self.path,
                0,
                format!("bad magic, expected {:?}", String::from_utf8_lossy(magic)),
            ));
        }
        self.pos = 4;
        Ok(())
    }

    fn u32(&mut self) -> u32 {
        let v = u32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        v
    }

    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take4())
    }

    fn take4(&mut self) -> [u8; 4] {
        let b = self.bytes[self.pos..self.pos + 4].try_into().unwrap();
        self.pos += 4;
        b
    }

    fn header_u32(&mut self, what: &str) -> Result<u32> {
        self.need(4, what)?;
        Ok(self.u32())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::malformed(
                self.path,
                self.pos as u64,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

pub fn encode_cloud_binary(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + cloud.len() * 12);
    out.extend_from_slice(CLOUD_MAGIC);
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    for p in &cloud.points {
        for x in p.iter() {
            out.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    out
}

pub fn encode_cloud_ascii(cloud: &PointCloud) -> Vec<u8> {
    let mut s = String::with_capacity(cloud.len() * 32);
    for p in &cloud.points {
        s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    s.into_bytes()
}

fn decode_cloud_binary(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    let mut r = Reader::new(path, bytes);
    r.magic(CLOUD_MAGIC)?;
    let count = r.header_u32("point count")? as usize;
    r.need(count * 12, "point data")?;
    let mut points = Vec::with_capacity(count);
    for i in 0..count {
        let p = Vec3::new(r.f32() as f64, r.f32() as f64, r.f32() as f64);
        if !p.iter().all(|x| x.is_finite()) {
            return Err(Error::malformed(path, (8 + i * 12) as u64, "non-finite coordinate"));
        }
        points.push(p);
    }
    r.finish()?;
    Ok(PointCloud::new(points))
}

fn decode_cloud_ascii(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::malformed(path, e.valid_up_to() as u64, "invalid UTF-8"))?;
    let mut points = Vec::new();
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::malformed(
                path,
                start as u64,
                format!("expected 3 coordinates, found {}", fields.len()),
            ));
        }
        let mut xyz = [0.0; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::malformed(path, start as u64, format!("bad coordinate `{f}`")))?;
        }
        points.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(PointCloud::new(points))
}

/// Loads a cloud, sniffing the binary magic before falling back to ASCII.
pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = read(path)?;
    if bytes.starts_with(CLOUD_MAGIC) {
        decode_cloud_binary(path, &bytes)
    } else {
        decode_cloud_ascii(path, &bytes)
    }
}

pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let bytes = match format {
        CloudFormat::Ascii => encode_cloud_ascii(cloud),
        CloudFormat::Binary => encode_cloud_binary(cloud),
    };
    write_atomic(path, &bytes)
}

pub fn encode_features(f: &FeatureSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + f.as_slice().len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(f.len() as u32).to_le_bytes());
    out.extend_from_slice(&(f.dim() as u32).to_le_bytes());
    for x in f.as_slice() {
        out.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    out
}

pub fn load_features(path: &Path) -> Result<FeatureSet> {
    let bytes = read(path)?;
    let mut r = Reader::new(path, &bytes);
    r.magic(FEATURE_MAGIC)?;
    let count = r.header_u32("descriptor count")? as usize;
    let dim = r.header_u32("descriptor dimension")? as usize;
    if dim == 0 {
        return Err(Error::malformed(path, 8, "descriptor dimension is 0"));
    }
    r.need(count * dim * 4, "descriptor data")?;
    let data: Vec<f64> = (0..count * dim).map(|_| r.f32() as f64).collect();
    r.finish()?;
    FeatureSet::new(data, dim).map_err(|e| Error::malformed(path, 12, e.to_string()))
}

pub fn save_features(f: &FeatureSet, path: &Path) -> Result<()> {
    write_atomic(path, &encode_features(f))
}

pub fn encode_correspondences(corrs: &[Correspondence]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + corrs.len() * 12);
    out.extend_from_slice(CORR_MAGIC);
    out.extend_from_slice(&(corrs.len() as u32).to_le_bytes());
    for c in corrs {
        out.extend_from_slice(&c.src.to_le_bytes());
        out.extend_from_slice(&c.dst.to_le_bytes());
        out.extend_from_slice(&(c.similarity as f32).to_le_bytes());
    }
    out
}

pub fn load_correspondences(path: &Path) -> Result<Vec<Correspondence>> {
    let bytes = read(path)?;
    let mut r = Reader::new(path, &bytes);
    r.magic(CORR_MAGIC)?;
    let count = r.header_u32("correspondence count")? as usize;
    r.need(count * 12, "correspondence records")?;
    let corrs = (0..count)
        .map(|_| {
            let src = r.u32();
            let dst = r.u32();
            Correspondence::new(src, dst, r.f32() as f64)
        })
        .collect();
    r.finish()?;
    Ok(corrs)
}

pub fn save_correspondences(corrs: &[Correspondence], path: &Path) -> Result<()> {
    write_atomic(path, &encode_correspondences(corrs))
}

/// Checks that every correspondence indexes into its clouds.
pub fn check_correspondences(corrs: &[Correspondence], p: &PointCloud, q: &PointCloud) -> Result<()> {
    for (i, c) in corrs.iter().enumerate() {
        if c.src as usize >= p.len() || c.dst as usize >= q.len() {
            return Err(Error::InvalidConfig(format!(
                "correspondence {i} ({}, {}) out of range for clouds of {} and {} points",
                c.src,
                c.dst,
                p.len(),
                q.len()
            )));
        }
    }
    Ok(())
}

pub fn format_transform(t: &RigidTransform) -> String {
    let m = t.to_row_major();
    let mut s = String::new();
    for row in m.chunks(4) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_transform(path: &Path, text: &str) -> Result<RigidTransform> {
    let mut values = Vec::with_capacity(16);
    let mut offset = 0usize;
    for token in text.split_whitespace() {
        // Byte offset of this token within the text.
        let pos = text[offset..].find(token).map_or(offset, |i| offset + i);
        offset = pos + token.len();
        let v: f64 = token
            .parse()
            .ok()
            .filter(|x: &f64| x.is_finite())
            .ok_or_else(|| Error::malformed(path, pos as u64, format!("bad number `{token}`")))?;
        values.push(v);
    }
    if values.len() != 16 {
        return Err(Error::malformed(
            path,
            text.len() as u64,
            format!("expected 16 numbers, found {}", values.len()),
        ));
    }
    if values[12..] != [0.0, 0.0, 0.0, 1.0] {
        return Err(Error::malformed(path, 0, "last row must be `0 0 0 1`"));
    }
    let arr: [f64; 16] = values.try_into().unwrap();
    let t = RigidTransform::from_row_major(&arr);
    if !is_rotation(&t.rotation, 1e-6) {
        return Err(Error::malformed(path, 0, "upper-left 3x3 block is not a rotation"));
    }
    Ok(t)
}

pub fn load_transform(path: &Path) -> Result<RigidTransform> {
    let bytes = read(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::malformed(path, e.valid_up_to() as u64, "invalid UTF-8"))?;
    parse_transform(path, text)
}

pub fn save_transform(t: &RigidTransform, path: &Path) -> Result<()> {
    write_atomic(path, format_transform(t).as_bytes())
}

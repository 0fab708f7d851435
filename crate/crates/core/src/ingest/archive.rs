//! The LSM binary archive.
//!
//! Little-endian layout:
//!
//! ```text
//! "LSMM" | version u16 | cell_size f32 | dim u32 | voxel count u64 | flags u8
//! label count u16 | (len u16, utf-8 bytes) * label count
//! per voxel, sorted by (x, y, z):
//!     x i32 | y i32 | z i32 | label u16 | instance u32 | dim * f32
//! ```
//!
//! Flag bit 0 marks semantics present, bit 1 instances present. Absent labels
//! are written as `0xFFFF` and absent instances as `0xFFFFFFFF`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{ArchiveError, Error, Result};
use crate::map::{
    EmbeddingGrid, InstanceGrid, LabelId, LabelVocabulary, MapBundle, SemanticGrid, VoxelIndex,
};

pub const MAGIC: &[u8; 4] = b"LSMM";
pub const VERSION: u16 = 1;
pub const NO_LABEL: u16 = 0xFFFF;
pub const NO_INSTANCE: u32 = 0xFFFF_FFFF;

const FLAG_SEMANTICS: u8 = 0b01;
const FLAG_INSTANCES: u8 = 0b10;

pub fn encode_map_archive(bundle: &MapBundle) -> Vec<u8> {
    let grid = &bundle.embeddings;
    let mut out = Vec::with_capacity(crate::map::footprint_bytes(bundle) as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&grid.cell_size().to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.len() as u64).to_le_bytes());
    let mut flags = 0;
    if bundle.semantics.is_some() {
        flags |= FLAG_SEMANTICS;
    }
    if bundle.instances.is_some() {
        flags |= FLAG_INSTANCES;
    }
    out.push(flags);

    let labels = bundle.vocabulary().map(LabelVocabulary::labels).unwrap_or(&[]);
    out.extend_from_slice(&(labels.len() as u16).to_le_bytes());
    for l in labels {
        out.extend_from_slice(&(l.len() as u16).to_le_bytes());
        out.extend_from_slice(l.as_bytes());
    }

    for (v, e) in grid.iter() {
        for c in v.to_array() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        let label = bundle
            .semantics
            .as_ref()
            .and_then(|s| s.label(&v))
            .unwrap_or(NO_LABEL);
        out.extend_from_slice(&label.to_le_bytes());
        let inst = bundle
            .instances
            .as_ref()
            .and_then(|i| i.cells.get(&v).copied())
            .unwrap_or(NO_INSTANCE);
        out.extend_from_slice(&inst.to_le_bytes());
        for c in e {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

/// Writes `bundle` to `path`, returning the number of bytes written.
pub fn write_map_archive(bundle: &MapBundle, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let bytes = encode_map_archive(bundle);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len() as u64)
}

/// Reads an archive; the map id is taken from the file stem.
pub fn read_map_archive(path: impl AsRef<Path>) -> Result<MapBundle> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let map_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_map_archive(&bytes, map_id)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ArchiveError> {
        if self.buf.len() < n {
            return Err(ArchiveError::Truncated {
                what,
                needed: n,
                available: self.buf.len(),
            });
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], ArchiveError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, ArchiveError> {
        Ok(self.array::<1>(what)?[0])
    }
    fn u16(&mut self, what: &'static str) -> Result<u16, ArchiveError> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }
    fn u32(&mut self, what: &'static str) -> Result<u32, ArchiveError> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
    fn i32(&mut self, what: &'static str) -> Result<i32, ArchiveError> {
        Ok(i32::from_le_bytes(self.array(what)?))
    }
    fn u64(&mut self, what: &'static str) -> Result<u64, ArchiveError> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }
    fn f32(&mut self, what: &'static str) -> Result<f32, ArchiveError> {
        Ok(f32::from_le_bytes(self.array(what)?))
    }
}

pub fn decode_map_archive(bytes: &[u8], map_id: impl Into<String>) -> Result<MapBundle> {
    let mut r = Reader { buf: bytes };
    let magic = r.array::<4>("magic")?;
    if &magic != MAGIC {
        return Err(ArchiveError::BadMagic { found: magic }.into());
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(ArchiveError::UnsupportedVersion(version).into());
    }
    let cell_size = r.f32("cell size")?;
    let dim = r.u32("dim")? as usize;
    let count = r.u64("voxel count")?;
    let flags = r.u8("flags")?;
    if flags & !(FLAG_SEMANTICS | FLAG_INSTANCES) != 0 {
        return Err(ArchiveError::Malformed(format!("unknown flag bits {flags:#04x}")).into());
    }
    let has_sem = flags & FLAG_SEMANTICS != 0;
    let has_inst = flags & FLAG_INSTANCES != 0;

    let label_count = r.u16("label count")? as usize;
    let mut labels = Vec::with_capacity(label_count);
    for _ in 0..label_count {
        let len = r.u16("label length")? as usize;
        let raw = r.take(len, "label")?;
        let s = std::str::from_utf8(raw)
            .map_err(|_| ArchiveError::Malformed("label is not valid UTF-8".into()))?;
        labels.push(s.to_owned());
    }
    if !has_sem && label_count != 0 {
        return Err(ArchiveError::Malformed("vocabulary present without semantics".into()).into());
    }

    if dim == 0 {
        return Err(ArchiveError::Malformed("embedding dimension 0".into()).into());
    }
    let record = 12 + 2 + 4 + 4 * dim;
    let needed = usize::try_from(count)
        .ok()
        .and_then(|n| n.checked_mul(record))
        .unwrap_or(usize::MAX);
    if r.buf.len() < needed {
        return Err(ArchiveError::Truncated {
            what: "voxel records",
            needed,
            available: r.buf.len(),
        }
        .into());
    }
    if r.buf.len() > needed {
        return Err(ArchiveError::Malformed(format!(
            "{} trailing bytes after voxel records",
            r.buf.len() - needed
        ))
        .into());
    }

    let n = count as usize;
    let mut voxels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    let mut sem = BTreeMap::new();
    let mut inst = BTreeMap::new();
    for _ in 0..n {
        let v = VoxelIndex::new(r.i32("x")?, r.i32("y")?, r.i32("z")?);
        if voxels.last().is_some_and(|last| *last >= v) {
            return Err(ArchiveError::Malformed(format!("voxel {v} out of sort order")).into());
        }
        let label = r.u16("label")?;
        let instance = r.u32("instance")?;
        for _ in 0..dim {
            let c = r.f32("embedding")?;
            if !c.is_finite() {
                return Err(ArchiveError::NonFiniteEmbedding { voxel: v }.into());
            }
            data.push(c);
        }
        if has_sem {
            if usize::from(label) >= label_count {
                return Err(ArchiveError::LabelOutOfRange {
                    voxel: v,
                    id: label,
                    labels: label_count,
                }
                .into());
            }
            sem.insert(v, label as LabelId);
        } else if label != NO_LABEL {
            return Err(ArchiveError::Malformed(format!("label at {v} without semantics")).into());
        }
        if has_inst {
            if instance == NO_INSTANCE {
                return Err(ArchiveError::Malformed(format!("missing instance at {v}")).into());
            }
            inst.insert(v, instance);
        } else if instance != NO_INSTANCE {
            return Err(ArchiveError::Malformed(format!("instance at {v} without flag")).into());
        }
        voxels.push(v);
    }

    let embeddings = EmbeddingGrid::from_sorted_parts(cell_size, dim, voxels, data)
        .map_err(|e| ArchiveError::Malformed(e.to_string()))?;
    let semantics = if has_sem {
        let vocab =
            LabelVocabulary::new(labels).map_err(|e| ArchiveError::Malformed(e.to_string()))?;
        Some(SemanticGrid::new(sem, vocab)?)
    } else {
        None
    };
    let instances = has_inst.then_some(InstanceGrid { cells: inst });
    MapBundle::new(map_id, embeddings, semantics, instances)
        .map_err(|e| ArchiveError::Malformed(e.to_string()).into())
}

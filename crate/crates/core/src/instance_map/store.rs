//! Memory persistence.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! b"ILOM"  u32 version  u32 embedding_dim  u32 tuple_count
//! per tuple: u64 id  u32 embedding_count  embedding_count × dim × f32  ILPC cloud record
//! ```
//!
//! A JSON index with ids, centroids, embedding counts and the build settings
//! is written next to the map as `<map>.index.json`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{MemoryMeta, ObjectId, ObjectInfoTuple, ObjectMemory};
use crate::geometry::cloud_io::{read_cloud, write_cloud};
use crate::{Error, Result};

pub const MEMORY_MAGIC: &[u8; 4] = b"ILOM";
pub const MEMORY_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IndexEntry {
    pub id: ObjectId,
    pub centroid: [f64; 3],
    pub embedding_count: usize,
    pub point_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MemoryIndex {
    pub version: u32,
    pub meta: MemoryMeta,
    pub objects: Vec<IndexEntry>,
}

pub fn index_path(map: &Path) -> PathBuf {
    let mut s = map.as_os_str().to_owned();
    s.push(".index.json");
    PathBuf::from(s)
}

pub fn write_memory(w: &mut impl Write, memory: &ObjectMemory) -> std::io::Result<()> {
    w.write_all(MEMORY_MAGIC)?;
    w.write_u32::<LittleEndian>(MEMORY_VERSION)?;
    w.write_u32::<LittleEndian>(memory.meta.embedding_dim as u32)?;
    w.write_u32::<LittleEndian>(memory.objects.len() as u32)?;
    for t in &memory.objects {
        w.write_u64::<LittleEndian>(t.id.0)?;
        w.write_u32::<LittleEndian>(t.embeddings.len() as u32)?;
        for e in &t.embeddings {
            for v in e {
                w.write_f32::<LittleEndian>(*v as f32)?;
            }
        }
        write_cloud(w, &t.cloud)?;
    }
    Ok(())
}

pub fn read_memory(r: &mut impl Read, meta: Option<MemoryMeta>) -> Result<ObjectMemory> {
    let bad = |m: String| Error::format("<memory>", m);
    let io = |e: std::io::Error| bad(e.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MEMORY_MAGIC {
        return Err(bad("bad memory magic".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io)?;
    if version != MEMORY_VERSION {
        return Err(bad(format!("unsupported memory version {version}")));
    }
    let dim = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let count = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let mut objects = Vec::with_capacity(count);
    for _ in 0..count {
        let id = ObjectId(r.read_u64::<LittleEndian>().map_err(io)?);
        let ne = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut embeddings = Vec::with_capacity(ne);
        for _ in 0..ne {
            let e = (0..dim)
                .map(|_| r.read_f32::<LittleEndian>().map(f64::from))
                .collect::<std::io::Result<Vec<f64>>>()
                .map_err(io)?;
            embeddings.push(e);
        }
        let cloud = read_cloud(r).map_err(io)?;
        objects.push(ObjectInfoTuple {
            id,
            cloud,
            embeddings,
        });
    }
    let mut meta = meta.unwrap_or_default();
    meta.embedding_dim = dim;
    ObjectMemory::new(objects, meta)
}

pub fn build_index(memory: &ObjectMemory) -> MemoryIndex {
    MemoryIndex {
        version: MEMORY_VERSION,
        meta: memory.meta.clone(),
        objects: memory
            .objects
            .iter()
            .map(|t| {
                let c = t.centroid();
                IndexEntry {
                    id: t.id,
                    centroid: [c.x, c.y, c.z],
                    embedding_count: t.embeddings.len(),
                    point_count: t.cloud.len(),
                }
            })
            .collect(),
    }
}

/// Writes the binary map and its JSON index.
pub fn save_memory(path: &Path, memory: &ObjectMemory) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_memory(&mut w, memory)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))?;
    let ipath = index_path(path);
    let json = serde_json::to_string_pretty(&build_index(memory)).expect("index serializes");
    std::fs::write(&ipath, json).map_err(|e| Error::io(&ipath, e))
}

/// Loads a binary map; build settings come from the JSON index when present.
pub fn load_memory(path: &Path) -> Result<ObjectMemory> {
    let ipath = index_path(path);
    let meta = match std::fs::read_to_string(&ipath) {
        Ok(s) => Some(
            serde_json::from_str::<MemoryIndex>(&s)
                .map_err(|e| Error::format(&ipath, e.to_string()))?
                .meta,
        ),
        Err(_) => None,
    };
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_memory(&mut std::io::BufReader::new(f), meta).map_err(|e| match e {
        Error::Format { reason, .. } => Error::format(path, reason),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PointCloud;
    use nalgebra::Vector3;

    fn memory() -> ObjectMemory {
        let t = |id, x: f64, e: Vec<Vec<f64>>| ObjectInfoTuple {
            id: ObjectId(id),
            cloud: PointCloud::with_colors(
                vec![Vector3::new(x, 0.0, 1.0), Vector3::new(x + 0.5, 0.0, 1.0)],
                vec![Vector3::new(0.5, 0.5, 0.5); 2],
            ),
            embeddings: e,
        };
        ObjectMemory::new(
            vec![t(0, 0.0, vec![vec![1.0, 2.0]]), t(7, 3.0, vec![vec![0.5, 0.25], vec![0.0, -1.0]])],
            MemoryMeta::default(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_with_index() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("map.ilom");
        let m = memory();
        save_memory(&p, &m).unwrap();
        let back = load_memory(&p).unwrap();
        assert_eq!(back, m);
        let idx: MemoryIndex = serde_json::from_str(&std::fs::read_to_string(index_path(&p)).unwrap()).unwrap();
        assert_eq!(idx.objects.len(), 2);
        assert_eq!(idx.objects[1].embedding_count, 2);
        assert_eq!(idx.objects[1].centroid, [3.25, 0.0, 1.0]);
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_memory(&mut buf, &memory()).unwrap();
        assert_eq!(&buf[..4], b"ILOM");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), MEMORY_VERSION);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 2);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let mut buf = Vec::new();
        write_memory(&mut buf, &memory()).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_memory(&mut &buf[..], None).is_err());
    }
}

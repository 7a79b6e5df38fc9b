//! Point-cloud serialization.
//!
//! Binary record (little-endian):
//!
//! ```text
//! b"ILPC"  u32 count  u32 flags (bit 0 = colors, bit 1 = normals)
//! count × [x y z (r g b)? (nx ny nz)?]   as f32
//! ```
//!
//! ASCII PLY is supported for interchange with other tools.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;

use super::PointCloud;
use crate::{Error, Result};

pub const CLOUD_MAGIC: &[u8; 4] = b"ILPC";
const FLAG_COLORS: u32 = 1;
const FLAG_NORMALS: u32 = 2;

fn write_vec(w: &mut impl Write, v: &Vector3<f64>) -> std::io::Result<()> {
    for x in v.iter() {
        w.write_f32::<LittleEndian>(*x as f32)?;
    }
    Ok(())
}

fn read_vec(r: &mut impl Read) -> std::io::Result<Vector3<f64>> {
    let x = r.read_f32::<LittleEndian>()? as f64;
    let y = r.read_f32::<LittleEndian>()? as f64;
    let z = r.read_f32::<LittleEndian>()? as f64;
    Ok(Vector3::new(x, y, z))
}

pub fn write_cloud(w: &mut impl Write, cloud: &PointCloud) -> std::io::Result<()> {
    let mut flags = 0;
    if cloud.colors.is_some() {
        flags |= FLAG_COLORS;
    }
    if cloud.normals.is_some() {
        flags |= FLAG_NORMALS;
    }
    w.write_all(CLOUD_MAGIC)?;
    w.write_u32::<LittleEndian>(cloud.len() as u32)?;
    w.write_u32::<LittleEndian>(flags)?;
    for i in 0..cloud.len() {
        write_vec(w, &cloud.points[i])?;
        if let Some(c) = &cloud.colors {
            write_vec(w, &c[i])?;
        }
        if let Some(n) = &cloud.normals {
            write_vec(w, &n[i])?;
        }
    }
    Ok(())
}

/// Reads one binary cloud record. Normals are renormalized after the f32
/// round trip.
pub fn read_cloud(r: &mut impl Read) -> std::io::Result<PointCloud> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CLOUD_MAGIC {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "bad point cloud magic",
        ));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let flags = r.read_u32::<LittleEndian>()?;
    let mut cloud = PointCloud {
        points: Vec::with_capacity(n),
        colors: (flags & FLAG_COLORS != 0).then(|| Vec::with_capacity(n)),
        normals: (flags & FLAG_NORMALS != 0).then(|| Vec::with_capacity(n)),
    };
    for _ in 0..n {
        cloud.points.push(read_vec(r)?);
        if let Some(c) = cloud.colors.as_mut() {
            c.push(read_vec(r)?);
        }
        if let Some(nr) = cloud.normals.as_mut() {
            let v = read_vec(r)?;
            let norm = v.norm();
            nr.push(if norm > 0.0 { v / norm } else { Vector3::z() });
        }
    }
    Ok(cloud)
}

pub fn save_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_cloud(&mut w, cloud)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_cloud(&mut std::io::BufReader::new(f)).map_err(|e| Error::io(path, e))
}

/// Writes ASCII PLY with float colors in `[0, 1]` scaled to uchar.
pub fn write_ply(w: &mut impl Write, cloud: &PointCloud) -> std::io::Result<()> {
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", cloud.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    if cloud.colors.is_some() {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    if cloud.normals.is_some() {
        writeln!(w, "property float nx\nproperty float ny\nproperty float nz")?;
    }
    writeln!(w, "end_header")?;
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        write!(w, "{} {} {}", p.x, p.y, p.z)?;
        if let Some(c) = &cloud.colors {
            let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            write!(w, " {} {} {}", q(c[i].x), q(c[i].y), q(c[i].z))?;
        }
        if let Some(n) = &cloud.normals {
            write!(w, " {} {} {}", n[i].x, n[i].y, n[i].z)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads ASCII PLY vertex data (`x y z`, optional `red green blue`, optional
/// `nx ny nz`). Other properties are ignored.
pub fn read_ply(r: &mut impl BufRead) -> Result<PointCloud> {
    let bad = |m: &str| Error::format("<ply>", m);
    let mut lines = r.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| bad("unexpected end of file"))?
            .map_err(|e| Error::io("<ply>", e))
    };
    if next()?.trim() != "ply" {
        return Err(bad("missing ply magic"));
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    loop {
        let line = next()?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => return Err(bad("only ascii PLY is supported")),
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| bad("bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element"))?;
    let idx = |n: &str| props.iter().position(|p| p == n);
    let xyz = [idx("x"), idx("y"), idx("z")];
    let rgb = [idx("red"), idx("green"), idx("blue")];
    let nrm = [idx("nx"), idx("ny"), idx("nz")];
    if xyz.iter().any(Option::is_none) {
        return Err(bad("missing x/y/z properties"));
    }
    let has_rgb = rgb.iter().all(Option::is_some);
    let has_nrm = nrm.iter().all(Option::is_some);
    let mut cloud = PointCloud {
        points: Vec::with_capacity(count),
        colors: has_rgb.then(Vec::new),
        normals: has_nrm.then(Vec::new),
    };
    for _ in 0..count {
        let line = next()?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<_>>()?;
        let get = |ix: [Option<usize>; 3]| -> Result<Vector3<f64>> {
            let g = |k: Option<usize>| vals.get(k.unwrap()).copied().ok_or_else(|| bad("short vertex row"));
            Ok(Vector3::new(g(ix[0])?, g(ix[1])?, g(ix[2])?))
        };
        cloud.points.push(get(xyz)?);
        if let Some(c) = cloud.colors.as_mut() {
            c.push(get(rgb)? / 255.0);
        }
        if let Some(n) = cloud.normals.as_mut() {
            n.push(get(nrm)?.normalize());
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> PointCloud {
        PointCloud {
            points: vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(-0.5, 0.25, 4.0)],
            colors: Some(vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)]),
            normals: Some(vec![Vector3::z(), Vector3::x()]),
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_cloud(&mut buf, &sample()).unwrap();
        assert_eq!(&buf[..4], b"ILPC");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 3);
        assert_eq!(buf.len(), 12 + 2 * 9 * 4);
    }

    #[test]
    fn bad_magic() {
        assert!(read_cloud(&mut &b"XXXX\0\0\0\0\0\0\0\0"[..]).is_err());
    }

    #[test]
    fn ply_round_trip() {
        let mut buf = Vec::new();
        write_ply(&mut buf, &sample()).unwrap();
        let back = read_ply(&mut &buf[..]).unwrap();
        assert_eq!(back.points, sample().points);
        assert_eq!(back.colors, sample().colors);
        assert_eq!(back.normals, sample().normals);
    }

    proptest! {
        #[test]
        fn binary_round_trip(
            pts in prop::collection::vec(prop::array::uniform3(-100.0f32..100.0), 0..30),
            flags in 0u8..4,
        ) {
            let points: Vec<Vector3<f64>> =
                pts.iter().map(|p| Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64)).collect();
            let n = points.len();
            let cloud = PointCloud {
                points,
                colors: (flags & 1 != 0).then(|| vec![Vector3::new(0.5, 0.25, 1.0); n]),
                normals: (flags & 2 != 0).then(|| vec![Vector3::y(); n]),
            };
            let mut buf = Vec::new();
            write_cloud(&mut buf, &cloud).unwrap();
            prop_assert_eq!(read_cloud(&mut &buf[..]).unwrap(), cloud);
        }
    }
}

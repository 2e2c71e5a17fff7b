//! Grid snapshot container.
//!
//! Little-endian binary layout, one file per field per frame:
//!
//! ```text
//! magic   "FFGD"           4 bytes
//! version u32              currently 1
//! resolution 3 x u32
//! voxel_size f64
//! origin  3 x f64
//! active-cell count u64
//! (cell index u64, value f64) pairs, sorted ascending by index
//! ```
//!
//! Cell indices are linear in x-fastest order: `i + nx*(j + ny*k)`. Inactive
//! cells are not stored.

use crate::error::{Error, Result};
use crate::grid::{GridDesc, ScalarGrid};
use crate::vec3::Vec3;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"FFGD";
pub const VERSION: u32 = 1;

pub fn write_grid(grid: &ScalarGrid, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_grid_to(grid, &mut file)
}

pub fn write_grid_to(grid: &ScalarGrid, w: &mut impl Write) -> Result<()> {
    let desc = grid.desc();
    let mut cells: Vec<(u64, f64)> = Vec::with_capacity(grid.active_count());
    grid.for_each_active(|i, j, k, v| cells.push((desc.linear_index(i, j, k), v)));
    cells.sort_unstable_by_key(|&(idx, _)| idx);

    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for &n in &desc.resolution {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    w.write_all(&desc.voxel_size.to_le_bytes())?;
    for o in [desc.origin.x, desc.origin.y, desc.origin.z] {
        w.write_all(&o.to_le_bytes())?;
    }
    w.write_all(&(cells.len() as u64).to_le_bytes())?;
    for (idx, v) in cells {
        w.write_all(&idx.to_le_bytes())?;
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Read a snapshot back into a grid. Inactive cells take `background`, which
/// is not part of the container.
pub fn read_grid(path: &Path, background: f64) -> Result<ScalarGrid> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    read_grid_from(&mut file, background)
}

pub fn read_grid_from(r: &mut impl Read, background: f64) -> Result<ScalarGrid> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::format(format!(
            "bad snapshot magic {:?}, expected \"FFGD\"",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported snapshot version {version}, expected {VERSION}"
        )));
    }
    let res = [read_u32(r)? as usize, read_u32(r)? as usize, read_u32(r)? as usize];
    let voxel_size = read_f64(r)?;
    let origin = Vec3::new(read_f64(r)?, read_f64(r)?, read_f64(r)?);
    let desc = GridDesc::new(res, voxel_size, origin)?;
    let count = read_u64(r)?;
    if count > desc.cell_count() as u64 {
        return Err(Error::format(format!(
            "snapshot claims {count} active cells but the grid has only {}",
            desc.cell_count()
        )));
    }
    let mut grid = ScalarGrid::new(desc, background);
    let mut prev: Option<u64> = None;
    for _ in 0..count {
        let idx = read_u64(r)?;
        let v = read_f64(r)?;
        if idx >= desc.cell_count() as u64 {
            return Err(Error::format(format!("cell index {idx} out of range")));
        }
        if let Some(p) = prev {
            if idx <= p {
                return Err(Error::format("cell indices not strictly ascending".to_string()));
            }
        }
        prev = Some(idx);
        let (i, j, k) = desc.from_linear(idx);
        grid.set(i, j, k, v);
    }
    Ok(grid)
}

/// Header-level facts plus value range, for the `info` CLI command.
#[derive(Debug, Clone)]
pub struct SnapshotInfo {
    pub resolution: [usize; 3],
    pub voxel_size: f64,
    pub origin: Vec3,
    pub active_cells: u64,
    pub min_value: Option<f64>,
    pub max_value: Option<f64>,
}

pub fn inspect(path: &Path) -> Result<SnapshotInfo> {
    let grid = read_grid(path, 0.0)?;
    let mut min_value = None;
    let mut max_value = None;
    grid.for_each_active(|_, _, _, v| {
        min_value = Some(min_value.map_or(v, |m: f64| m.min(v)));
        max_value = Some(max_value.map_or(v, |m: f64| m.max(v)));
    });
    Ok(SnapshotInfo {
        resolution: grid.desc().resolution,
        voxel_size: grid.desc().voxel_size,
        origin: grid.desc().origin,
        active_cells: grid.active_count() as u64,
        min_value,
        max_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_grid() {
        let desc = GridDesc::new([5, 6, 7], 0.25, Vec3::new(1.0, -2.0, 0.5)).unwrap();
        let mut g = ScalarGrid::new(desc, 9.0);
        g.set(0, 0, 0, 1.5);
        g.set(4, 5, 6, -3.25);
        g.set(2, 3, 1, 0.125);

        let mut buf = Vec::new();
        write_grid_to(&g, &mut buf).unwrap();
        let back = read_grid_from(&mut buf.as_slice(), 9.0).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn corrupt_magic_names_expected() {
        let mut buf = b"XXGD".to_vec();
        buf.extend_from_slice(&[0u8; 64]);
        let err = read_grid_from(&mut buf.as_slice(), 0.0).unwrap_err();
        assert!(err.to_string().contains("FFGD"), "{err}");
    }

    #[test]
    fn truncated_file_is_an_error() {
        let desc = GridDesc::new([2, 2, 2], 1.0, Vec3::ZERO).unwrap();
        let mut g = ScalarGrid::new(desc, 0.0);
        g.set(1, 1, 1, 4.0);
        let mut buf = Vec::new();
        write_grid_to(&g, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_grid_from(&mut buf.as_slice(), 0.0).is_err());
    }
}

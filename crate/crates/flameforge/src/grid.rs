//! Sparse, blocked, axis-aligned voxel grids.
//!
//! Fields live on fixed-size 8^3 tiles behind a dense tile directory: absent
//! tiles read as the grid's background value, so large empty regions cost
//! nothing. Two linked resolutions are used throughout the simulator (a coarse
//! air grid and a fine material grid, typically 5:1). Scalars sit at cell
//! centers; velocity components sit at face centers on their own staggered
//! lattices.
//!
//! Update contract: per-cell passes read only the previous-step buffer and
//! write a fresh one, so they may be data-parallel with no intra-step
//! synchronization.

use crate::error::{Error, Result};
use crate::vec3::Vec3;
use rayon::prelude::*;

pub const TILE_DIM: usize = 8;
pub const TILE_VOLUME: usize = TILE_DIM * TILE_DIM * TILE_DIM;

/// Geometry of a voxel grid: cell counts, cell edge length, world origin.
///
/// Cell centers sit at `origin + (i + 1/2, j + 1/2, k + 1/2) * voxel_size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDesc {
    pub resolution: [usize; 3],
    pub voxel_size: f64,
    pub origin: Vec3,
}

impl GridDesc {
    pub fn new(resolution: [usize; 3], voxel_size: f64, origin: Vec3) -> Result<Self> {
        if resolution.iter().any(|&n| n == 0) {
            return Err(Error::config(format!(
                "grid resolution components must be >= 1, got {resolution:?}"
            )));
        }
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(Error::config(format!(
                "grid voxel_size must be positive and finite, got {voxel_size}"
            )));
        }
        Ok(GridDesc { resolution, voxel_size, origin })
    }

    pub fn cell_count(&self) -> usize {
        self.resolution[0] * self.resolution[1] * self.resolution[2]
    }

    pub fn world_pos(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin
            + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.voxel_size
    }

    /// Linear cell index in x-fastest order, used by the snapshot container.
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> u64 {
        (i + self.resolution[0] * (j + self.resolution[1] * k)) as u64
    }

    pub fn from_linear(&self, idx: u64) -> (usize, usize, usize) {
        let idx = idx as usize;
        let nx = self.resolution[0];
        let ny = self.resolution[1];
        (idx % nx, (idx / nx) % ny, idx / (nx * ny))
    }

    /// Cell containing `p`, clamped into the grid.
    pub fn cell_of(&self, p: Vec3) -> (usize, usize, usize) {
        let g = (p - self.origin) / self.voxel_size;
        let clamp = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        (
            clamp(g.x, self.resolution[0]),
            clamp(g.y, self.resolution[1]),
            clamp(g.z, self.resolution[2]),
        )
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let lo = self.origin;
        let hi = self.origin
            + Vec3::new(
                self.resolution[0] as f64,
                self.resolution[1] as f64,
                self.resolution[2] as f64,
            ) * self.voxel_size;
        p.x >= lo.x && p.y >= lo.y && p.z >= lo.z && p.x <= hi.x && p.y <= hi.y && p.z <= hi.z
    }

    fn tile_counts(&self) -> [usize; 3] {
        [
            self.resolution[0].div_ceil(TILE_DIM),
            self.resolution[1].div_ceil(TILE_DIM),
            self.resolution[2].div_ceil(TILE_DIM),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Tile<T: Copy> {
    values: Box<[T; TILE_VOLUME]>,
    mask: [u64; TILE_VOLUME / 64],
}

impl<T: Copy> Tile<T> {
    fn filled(v: T) -> Self {
        Tile { values: Box::new([v; TILE_VOLUME]), mask: [0; TILE_VOLUME / 64] }
    }

    #[inline]
    fn local(i: usize, j: usize, k: usize) -> usize {
        (i & 7) + TILE_DIM * ((j & 7) + TILE_DIM * (k & 7))
    }

    #[inline]
    fn is_set(&self, idx: usize) -> bool {
        self.mask[idx / 64] & (1u64 << (idx % 64)) != 0
    }

    #[inline]
    fn set_bit(&mut self, idx: usize) {
        self.mask[idx / 64] |= 1u64 << (idx % 64);
    }

    #[inline]
    fn clear_bit(&mut self, idx: usize) {
        self.mask[idx / 64] &= !(1u64 << (idx % 64));
    }

    fn popcount(&self) -> usize {
        self.mask.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// Blocked sparse grid of per-cell values with an active-cell mask.
///
/// Reads of inactive cells (including cells of absent tiles) yield the
/// background value.
#[derive(Debug, Clone)]
pub struct TileGrid<T: Copy> {
    desc: GridDesc,
    background: T,
    tiles: Vec<Option<Box<Tile<T>>>>,
}

pub type ScalarGrid = TileGrid<f64>;
pub type IndexGrid = TileGrid<u16>;

impl<T: Copy + Send + Sync> TileGrid<T> {
    /// All cells inactive; sampling anywhere returns `fill`.
    pub fn new(desc: GridDesc, fill: T) -> Self {
        let nt = desc.tile_counts();
        TileGrid { desc, background: fill, tiles: vec![None; nt[0] * nt[1] * nt[2]] }
    }

    pub fn create(desc: GridDesc, fill: T) -> Result<Self> {
        // Re-validate so grids built from a hand-rolled desc still fail loudly.
        let desc = GridDesc::new(desc.resolution, desc.voxel_size, desc.origin)?;
        Ok(Self::new(desc, fill))
    }

    pub fn desc(&self) -> &GridDesc {
        &self.desc
    }

    pub fn background(&self) -> T {
        self.background
    }

    #[inline]
    fn tile_key(&self, i: usize, j: usize, k: usize) -> usize {
        let nt = self.desc.tile_counts();
        (i / TILE_DIM) + nt[0] * ((j / TILE_DIM) + nt[1] * (k / TILE_DIM))
    }

    /// First global cell coordinate of the tile at directory slot `key`.
    fn tile_origin(&self, key: usize) -> (usize, usize, usize) {
        let nt = self.desc.tile_counts();
        let tx = key % nt[0];
        let ty = (key / nt[0]) % nt[1];
        let tz = key / (nt[0] * nt[1]);
        (tx * TILE_DIM, ty * TILE_DIM, tz * TILE_DIM)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        debug_assert!(
            i < self.desc.resolution[0] && j < self.desc.resolution[1] && k < self.desc.resolution[2]
        );
        match &self.tiles[self.tile_key(i, j, k)] {
            Some(tile) => {
                let l = Tile::<T>::local(i, j, k);
                if tile.is_set(l) {
                    tile.values[l]
                } else {
                    self.background
                }
            }
            None => self.background,
        }
    }

    #[inline]
    pub fn is_active(&self, i: usize, j: usize, k: usize) -> bool {
        match &self.tiles[self.tile_key(i, j, k)] {
            Some(tile) => tile.is_set(Tile::<T>::local(i, j, k)),
            None => false,
        }
    }

    /// Write a value and mark the cell active, materializing its tile if needed.
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        assert!(
            i < self.desc.resolution[0] && j < self.desc.resolution[1] && k < self.desc.resolution[2],
            "cell ({i},{j},{k}) outside grid {:?}",
            self.desc.resolution
        );
        let key = self.tile_key(i, j, k);
        let bg = self.background;
        let tile = self.tiles[key].get_or_insert_with(|| Box::new(Tile::filled(bg)));
        let l = Tile::<T>::local(i, j, k);
        tile.values[l] = v;
        tile.set_bit(l);
    }

    /// Deactivate a cell; subsequent reads return the background value.
    pub fn deactivate(&mut self, i: usize, j: usize, k: usize) {
        let key = self.tile_key(i, j, k);
        if let Some(tile) = &mut self.tiles[key] {
            let l = Tile::<T>::local(i, j, k);
            tile.clear_bit(l);
            tile.values[l] = self.background;
        }
    }

    pub fn active_count(&self) -> usize {
        self.tiles.iter().flatten().map(|t| t.popcount()).sum()
    }

    /// Visit active cells in deterministic (tile directory, then local) order.
    pub fn for_each_active(&self, mut f: impl FnMut(usize, usize, usize, T)) {
        for (key, tile) in self.tiles.iter().enumerate() {
            let Some(tile) = tile else { continue };
            let (oi, oj, ok) = self.tile_origin(key);
            for lk in 0..TILE_DIM {
                for lj in 0..TILE_DIM {
                    for li in 0..TILE_DIM {
                        let l = li + TILE_DIM * (lj + TILE_DIM * lk);
                        if tile.is_set(l) {
                            f(oi + li, oj + lj, ok + lk, tile.values[l]);
                        }
                    }
                }
            }
        }
    }

    pub fn active_cells(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.active_count());
        self.for_each_active(|i, j, k, _| out.push((i, j, k)));
        out
    }

    /// Rebuild every active cell through `f`, preserving the mask. Tiles are
    /// processed in parallel; the result does not depend on thread count.
    pub fn map_active<F>(&self, f: F) -> TileGrid<T>
    where
        F: Fn(usize, usize, usize, T) -> T + Sync,
        T: 'static,
    {
        let tiles: Vec<Option<Box<Tile<T>>>> = self
            .tiles
            .par_iter()
            .enumerate()
            .map(|(key, tile)| {
                tile.as_ref().map(|tile| {
                    let (oi, oj, ok) = self.tile_origin(key);
                    let mut out = tile.clone();
                    for lk in 0..TILE_DIM {
                        for lj in 0..TILE_DIM {
                            for li in 0..TILE_DIM {
                                let l = li + TILE_DIM * (lj + TILE_DIM * lk);
                                if tile.is_set(l) {
                                    out.values[l] =
                                        f(oi + li, oj + lj, ok + lk, tile.values[l]);
                                }
                            }
                        }
                    }
                    out
                })
            })
            .collect();
        TileGrid { desc: self.desc, background: self.background, tiles }
    }

    /// Same-shape empty grid (every cell inactive), for fresh write buffers.
    pub fn like_empty(&self) -> TileGrid<T> {
        TileGrid::new(self.desc, self.background)
    }
}

impl<T: Copy + PartialEq + Send + Sync> PartialEq for TileGrid<T> {
    fn eq(&self, other: &Self) -> bool {
        if self.desc != other.desc || self.background != other.background {
            return false;
        }
        if self.active_count() != other.active_count() {
            return false;
        }
        let mut eq = true;
        self.for_each_active(|i, j, k, v| {
            if !other.is_active(i, j, k) || other.get(i, j, k) != v {
                eq = false;
            }
        });
        eq
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // `a + t*(b - a)` is exactly constant-preserving (a == b gives a bit-exact).
    a + t * (b - a)
}

/// Split a continuous lattice coordinate into lower index and fraction,
/// clamping to the edge samples (out-of-bounds queries clamp, by design).
#[inline]
fn lattice_coord(g: f64, n: usize) -> (usize, usize, f64) {
    let g = g.clamp(0.0, (n - 1) as f64);
    let i0 = (g.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, g - i0 as f64)
}

impl ScalarGrid {
    /// Trilinear blend of the 8 surrounding cell-center values; inactive cells
    /// contribute the background. Out-of-bounds positions clamp to the edge.
    pub fn sample_trilinear(&self, p: Vec3) -> f64 {
        let n = self.desc.resolution;
        let h = self.desc.voxel_size;
        let g = (p - self.desc.origin) / h - Vec3::splat(0.5);
        let (i0, i1, fx) = lattice_coord(g.x, n[0]);
        let (j0, j1, fy) = lattice_coord(g.y, n[1]);
        let (k0, k1, fz) = lattice_coord(g.z, n[2]);
        let c00 = lerp(self.get(i0, j0, k0), self.get(i1, j0, k0), fx);
        let c10 = lerp(self.get(i0, j1, k0), self.get(i1, j1, k0), fx);
        let c01 = lerp(self.get(i0, j0, k1), self.get(i1, j0, k1), fx);
        let c11 = lerp(self.get(i0, j1, k1), self.get(i1, j1, k1), fx);
        lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
    }

    /// Min/max over the 8 cell-center values surrounding `p` (the donor cells
    /// of a trilinear sample). Used by the advection limiter.
    pub fn donor_bounds(&self, p: Vec3) -> (f64, f64) {
        let n = self.desc.resolution;
        let h = self.desc.voxel_size;
        let g = (p - self.desc.origin) / h - Vec3::splat(0.5);
        let (i0, i1, _) = lattice_coord(g.x, n[0]);
        let (j0, j1, _) = lattice_coord(g.y, n[1]);
        let (k0, k1, _) = lattice_coord(g.z, n[2]);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &k in &[k0, k1] {
            for &j in &[j0, j1] {
                for &i in &[i0, i1] {
                    let v = self.get(i, j, k);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        (lo, hi)
    }
}

/// Face-centered (staggered MAC) velocity field on a coarse grid. Each
/// component array has exactly one extra sample along its own axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MacVelocityField {
    desc: GridDesc,
    pub u_x: Vec<f64>,
    pub u_y: Vec<f64>,
    pub u_z: Vec<f64>,
}

impl MacVelocityField {
    pub fn new(desc: GridDesc, fill: Vec3) -> Self {
        let [nx, ny, nz] = desc.resolution;
        MacVelocityField {
            desc,
            u_x: vec![fill.x; (nx + 1) * ny * nz],
            u_y: vec![fill.y; nx * (ny + 1) * nz],
            u_z: vec![fill.z; nx * ny * (nz + 1)],
        }
    }

    pub fn desc(&self) -> &GridDesc {
        &self.desc
    }

    #[inline]
    pub fn idx_x(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.desc.resolution;
        i + (nx + 1) * (j + ny * k)
    }

    #[inline]
    pub fn idx_y(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.desc.resolution;
        i + nx * (j + (ny + 1) * k)
    }

    #[inline]
    pub fn idx_z(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.desc.resolution;
        i + nx * (j + ny * k)
    }

    /// World position of the x-face sample (i, j, k); likewise for y/z below.
    pub fn pos_x(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.desc.origin
            + Vec3::new(i as f64, j as f64 + 0.5, k as f64 + 0.5) * self.desc.voxel_size
    }

    pub fn pos_y(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.desc.origin
            + Vec3::new(i as f64 + 0.5, j as f64, k as f64 + 0.5) * self.desc.voxel_size
    }

    pub fn pos_z(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.desc.origin
            + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64) * self.desc.voxel_size
    }

    fn sample_component(
        vals: &[f64],
        g: Vec3,
        dims: [usize; 3],
        stride_j: usize,
        stride_k: usize,
    ) -> f64 {
        let (i0, i1, fx) = lattice_coord(g.x, dims[0]);
        let (j0, j1, fy) = lattice_coord(g.y, dims[1]);
        let (k0, k1, fz) = lattice_coord(g.z, dims[2]);
        let at = |i: usize, j: usize, k: usize| vals[i + stride_j * j + stride_k * k];
        let c00 = lerp(at(i0, j0, k0), at(i1, j0, k0), fx);
        let c10 = lerp(at(i0, j1, k0), at(i1, j1, k0), fx);
        let c01 = lerp(at(i0, j0, k1), at(i1, j0, k1), fx);
        let c11 = lerp(at(i0, j1, k1), at(i1, j1, k1), fx);
        lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
    }

    /// Interpolate the velocity vector at a world position; each component is
    /// interpolated from its own staggered lattice.
    pub fn sample(&self, p: Vec3) -> Vec3 {
        let [nx, ny, nz] = self.desc.resolution;
        let h = self.desc.voxel_size;
        let g = (p - self.desc.origin) / h;
        let x = Self::sample_component(
            &self.u_x,
            Vec3::new(g.x, g.y - 0.5, g.z - 0.5),
            [nx + 1, ny, nz],
            nx + 1,
            (nx + 1) * ny,
        );
        let y = Self::sample_component(
            &self.u_y,
            Vec3::new(g.x - 0.5, g.y, g.z - 0.5),
            [nx, ny + 1, nz],
            nx,
            nx * (ny + 1),
        );
        let z = Self::sample_component(
            &self.u_z,
            Vec3::new(g.x - 0.5, g.y - 0.5, g.z),
            [nx, ny, nz + 1],
            nx,
            nx * ny,
        );
        Vec3::new(x, y, z)
    }

    /// Divergence of the cell (i, j, k) from its six face samples, in 1/s.
    pub fn divergence(&self, i: usize, j: usize, k: usize) -> f64 {
        let h = self.desc.voxel_size;
        (self.u_x[self.idx_x(i + 1, j, k)] - self.u_x[self.idx_x(i, j, k)]
            + self.u_y[self.idx_y(i, j + 1, k)] - self.u_y[self.idx_y(i, j, k)]
            + self.u_z[self.idx_z(i, j, k + 1)] - self.u_z[self.idx_z(i, j, k)])
            / h
    }
}

/// Convenience constructor mirroring the library surface: an empty grid whose
/// background (and therefore every sample) equals `fill`.
pub fn create_grid(desc: GridDesc, fill: f64) -> Result<ScalarGrid> {
    ScalarGrid::create(desc, fill)
}

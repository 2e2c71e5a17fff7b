//! Signed distance field over the material mass field.
//!
//! The distance is the first-order fast-sweeping solution of |grad d| = 1,
//! with interface cells initialized by axis-wise linear interpolation of the
//! mass iso-contour. Negative inside material, positive outside. Queries feed
//! the char-depth `h` used by the insulation coefficient.
//!
//! Sweeping runs on a dense window clipped to the bounding box of material
//! (plus margin); everything outside the window is far from the surface and
//! never queried for depth.

use crate::error::Result;
use crate::grid::{GridDesc, ScalarGrid};
use crate::vec3::Vec3;

/// Distance assigned when the grid holds no material at all.
pub const EMPTY_SENTINEL: f64 = 1.0e30;

/// Cells of padding kept around the material bounding box.
const WINDOW_MARGIN: usize = 8;

#[derive(Debug, Clone)]
pub struct Sdf {
    grid: ScalarGrid,
    iso_threshold: f64,
    /// Window offset in fine-grid cell coordinates.
    offset: [usize; 3],
    /// Set when the source mass field had no cell above the threshold.
    empty: bool,
}

impl Sdf {
    pub fn grid(&self) -> &ScalarGrid {
        &self.grid
    }

    pub fn iso_threshold(&self) -> f64 {
        self.iso_threshold
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    /// Signed distance at a fine-grid cell. Cells outside the sweeping window
    /// are far outside the material.
    pub fn distance(&self, i: usize, j: usize, k: usize) -> f64 {
        if self.empty {
            return EMPTY_SENTINEL;
        }
        let res = self.grid.desc().resolution;
        let (li, lj, lk) = (
            i.wrapping_sub(self.offset[0]),
            j.wrapping_sub(self.offset[1]),
            k.wrapping_sub(self.offset[2]),
        );
        if li >= res[0] || lj >= res[1] || lk >= res[2] {
            return EMPTY_SENTINEL;
        }
        self.grid.get(li, lj, lk)
    }

    /// Char depth: distance below the material surface, >= 0. Cells outside
    /// the material report 0.
    pub fn query_depth(&self, i: usize, j: usize, k: usize) -> f64 {
        (-self.distance(i, j, k)).max(0.0)
    }
}

/// Solve the quadratic fast-sweeping update at spacing `h` given the three
/// axis-minimum neighbor values (may be +inf).
fn eikonal_update(mut a: f64, mut b: f64, mut c: f64, h: f64) -> f64 {
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    if b > c {
        std::mem::swap(&mut b, &mut c);
    }
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let x1 = a + h;
    if x1 <= b {
        return x1;
    }
    let two = 2.0 * h * h - (a - b) * (a - b);
    let x2 = 0.5 * (a + b + two.sqrt());
    if x2 <= c {
        return x2;
    }
    let s = a + b + c;
    let q = s * s - 3.0 * (a * a + b * b + c * c - h * h);
    (s + q.max(0.0).sqrt()) / 3.0
}

/// Build the signed distance field from a relative-mass field. A cell is
/// inside the material when its mass is at or above `iso_threshold`.
pub fn rebuild_sdf(mass: &ScalarGrid, iso_threshold: f64) -> Result<Sdf> {
    assert!(
        iso_threshold > 0.0 && iso_threshold < 1.0,
        "iso_threshold must lie in (0, 1), got {iso_threshold}"
    );
    let desc = *mass.desc();
    let h = desc.voxel_size;

    // Bounding box of material cells.
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any_inside = false;
    mass.for_each_active(|i, j, k, v| {
        if v >= iso_threshold {
            any_inside = true;
            lo = [lo[0].min(i), lo[1].min(j), lo[2].min(k)];
            hi = [hi[0].max(i), hi[1].max(j), hi[2].max(k)];
        }
    });

    if !any_inside {
        let grid = ScalarGrid::new(
            GridDesc::new([1, 1, 1], h, desc.origin)?,
            EMPTY_SENTINEL,
        );
        return Ok(Sdf { grid, iso_threshold, offset: [0, 0, 0], empty: true });
    }

    let offset = [
        lo[0].saturating_sub(WINDOW_MARGIN),
        lo[1].saturating_sub(WINDOW_MARGIN),
        lo[2].saturating_sub(WINDOW_MARGIN),
    ];
    let dims = [
        (hi[0] + 1 + WINDOW_MARGIN).min(desc.resolution[0]) - offset[0],
        (hi[1] + 1 + WINDOW_MARGIN).min(desc.resolution[1]) - offset[1],
        (hi[2] + 1 + WINDOW_MARGIN).min(desc.resolution[2]) - offset[2],
    ];
    let [nx, ny, nz] = dims;
    let n = nx * ny * nz;
    let at = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);

    // Level-set values: positive inside, crossing zero at the iso-contour.
    let mut phi = vec![0.0f64; n];
    let mut inside = vec![false; n];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let m = mass.get(offset[0] + i, offset[1] + j, offset[2] + k);
                let p = m - iso_threshold;
                phi[at(i, j, k)] = p;
                inside[at(i, j, k)] = p >= 0.0;
            }
        }
    }

    // Initialize interface cells from sub-voxel iso-contour locations along
    // the axes, then sweep.
    let mut dist = vec![f64::INFINITY; n];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = at(i, j, k);
                let mut consider = |nb: usize| {
                    if inside[c] != inside[nb] {
                        let denom = phi[c] - phi[nb];
                        let frac = if denom.abs() > 1e-300 {
                            (phi[c] / denom).clamp(0.0, 1.0)
                        } else {
                            0.5
                        };
                        dist[c] = dist[c].min(frac * h);
                        dist[nb] = dist[nb].min((1.0 - frac) * h);
                    }
                };
                if i + 1 < nx {
                    consider(at(i + 1, j, k));
                }
                if j + 1 < ny {
                    consider(at(i, j + 1, k));
                }
                if k + 1 < nz {
                    consider(at(i, j, k + 1));
                }
            }
        }
    }

    fast_sweep(&mut dist, dims, h);

    let window_desc = GridDesc::new(
        dims,
        h,
        desc.origin + Vec3::new(offset[0] as f64, offset[1] as f64, offset[2] as f64) * h,
    )?;
    let mut grid = ScalarGrid::new(window_desc, EMPTY_SENTINEL);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = at(i, j, k);
                let d = if inside[c] { -dist[c] } else { dist[c] };
                grid.set(i, j, k, d);
            }
        }
    }
    Ok(Sdf { grid, iso_threshold, offset, empty: false })
}

/// Gauss-Seidel sweeps over all 8 axis orderings, repeated to convergence.
/// Ordering-dependent, so intentionally sequential.
fn fast_sweep(dist: &mut [f64], dims: [usize; 3], h: f64) {
    let [nx, ny, nz] = dims;
    let at = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let tol = 1e-12 * h;

    for _round in 0..8 {
        let mut max_change = 0.0f64;
        for sweep in 0..8 {
            let xs: Box<dyn Iterator<Item = usize>> =
                if sweep & 1 == 0 { Box::new(0..nx) } else { Box::new((0..nx).rev()) };
            let xs: Vec<usize> = xs.collect();
            let ys: Vec<usize> =
                if sweep & 2 == 0 { (0..ny).collect() } else { (0..ny).rev().collect() };
            let zs: Vec<usize> =
                if sweep & 4 == 0 { (0..nz).collect() } else { (0..nz).rev().collect() };
            for &k in &zs {
                for &j in &ys {
                    for &i in &xs {
                        let c = at(i, j, k);
                        let ax = match (i > 0, i + 1 < nx) {
                            (true, true) => dist[at(i - 1, j, k)].min(dist[at(i + 1, j, k)]),
                            (true, false) => dist[at(i - 1, j, k)],
                            (false, true) => dist[at(i + 1, j, k)],
                            (false, false) => f64::INFINITY,
                        };
                        let ay = match (j > 0, j + 1 < ny) {
                            (true, true) => dist[at(i, j - 1, k)].min(dist[at(i, j + 1, k)]),
                            (true, false) => dist[at(i, j - 1, k)],
                            (false, true) => dist[at(i, j + 1, k)],
                            (false, false) => f64::INFINITY,
                        };
                        let az = match (k > 0, k + 1 < nz) {
                            (true, true) => dist[at(i, j, k - 1)].min(dist[at(i, j, k + 1)]),
                            (true, false) => dist[at(i, j, k - 1)],
                            (false, true) => dist[at(i, j, k + 1)],
                            (false, false) => f64::INFINITY,
                        };
                        if ax.is_infinite() && ay.is_infinite() && az.is_infinite() {
                            continue;
                        }
                        let cand = eikonal_update(ax, ay, az, h);
                        if cand < dist[c] {
                            max_change = max_change.max(dist[c] - cand);
                            dist[c] = cand;
                        }
                    }
                }
            }
        }
        if max_change <= tol {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::create_grid;

    fn grid_with(fill_cells: &[(usize, usize, usize)], n: usize, h: f64) -> ScalarGrid {
        let desc = GridDesc::new([n, n, n], h, Vec3::ZERO).unwrap();
        let mut g = create_grid(desc, 0.0).unwrap();
        for &(i, j, k) in fill_cells {
            g.set(i, j, k, 1.0);
        }
        g
    }

    /// Brute force distance oracle: exact Euclidean distance to the nearest
    /// axis-interpolated iso-crossing point, independent of the sweeping path.
    fn brute_force(mass: &ScalarGrid, iso: f64) -> Vec<((usize, usize, usize), f64)> {
        let desc = mass.desc();
        let [nx, ny, nz] = desc.resolution;
        let h = desc.voxel_size;
        let val = |i: usize, j: usize, k: usize| mass.get(i, j, k) - iso;
        let mut surface = Vec::new();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let a = val(i, j, k);
                    let mut push = |ni: usize, nj: usize, nk: usize| {
                        let b = val(ni, nj, nk);
                        if (a >= 0.0) != (b >= 0.0) {
                            let frac = (a / (a - b)).clamp(0.0, 1.0);
                            let pa = desc.world_pos(i, j, k);
                            let pb = desc.world_pos(ni, nj, nk);
                            surface.push(pa + (pb - pa) * frac);
                        }
                    };
                    if i + 1 < nx {
                        push(i + 1, j, k);
                    }
                    if j + 1 < ny {
                        push(i, j + 1, k);
                    }
                    if k + 1 < nz {
                        push(i, j, k + 1);
                    }
                }
            }
        }
        let mut out = Vec::new();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let p = desc.world_pos(i, j, k);
                    let d = surface
                        .iter()
                        .map(|s| (*s - p).length())
                        .fold(f64::INFINITY, f64::min);
                    let signed = if val(i, j, k) >= 0.0 { -d } else { d };
                    out.push(((i, j, k), signed));
                }
            }
        }
        let _ = h;
        out
    }

    #[test]
    fn planar_interface_distance() {
        // Half space i < 8 filled on a 16^3 grid: d(x) ~ x - x0.
        let n = 16;
        let h = 0.01;
        let desc = GridDesc::new([n, n, n], h, Vec3::ZERO).unwrap();
        let mut g = create_grid(desc, 0.0).unwrap();
        for k in 0..n {
            for j in 0..n {
                for i in 0..8 {
                    g.set(i, j, k, 1.0);
                }
            }
        }
        let sdf = rebuild_sdf(&g, 0.5).unwrap();
        // Iso-crossing of a 1 -> 0 step at threshold 0.5 sits midway between
        // cells 7 and 8: x0 = 8 * h. Check interior columns.
        for i in 0..n {
            let x = (i as f64 + 0.5) * h;
            let expected = x - 8.0 * h;
            let d = sdf.distance(i, 8, 8);
            assert!(
                (d - expected).abs() <= h,
                "i={i}: d={d}, expected {expected}"
            );
        }
    }

    #[test]
    fn single_cell_matches_brute_force() {
        let g = grid_with(&[(8, 8, 8)], 16, 1.0);
        let sdf = rebuild_sdf(&g, 0.5).unwrap();
        let oracle = brute_force(&g, 0.5);
        let mut max_err = 0.0f64;
        for ((i, j, k), ex) in oracle {
            let err = (sdf.distance(i, j, k) - ex).abs();
            max_err = max_err.max(err);
        }
        assert!(max_err <= 1.0, "max error {max_err} exceeds one voxel");
    }

    #[test]
    fn empty_mass_flagged() {
        let g = grid_with(&[], 8, 1.0);
        let sdf = rebuild_sdf(&g, 0.5).unwrap();
        assert!(sdf.is_empty());
        assert_eq!(sdf.distance(3, 3, 3), EMPTY_SENTINEL);
        assert_eq!(sdf.query_depth(3, 3, 3), 0.0);
    }

    #[test]
    fn depth_zero_at_interface_and_half_width_at_slab_center() {
        // 40-cell slab along x at 1 mm voxels: center is ~20 mm deep.
        let n = 48;
        let h = 0.001;
        let desc = GridDesc::new([n, n, n], h, Vec3::ZERO).unwrap();
        let mut g = create_grid(desc, 0.0).unwrap();
        for k in 0..n {
            for j in 0..n {
                for i in 4..44 {
                    g.set(i, j, k, 1.0);
                }
            }
        }
        let sdf = rebuild_sdf(&g, 0.5).unwrap();
        // Interface cell: depth ~ 0 (within half a voxel).
        assert!(sdf.query_depth(4, 24, 24) <= h);
        // Slab center: depth ~ 20 mm (slab is infinite in y/z inside the
        // window, so depth is distance to the x faces).
        let center = sdf.query_depth(24, 24, 24);
        assert!(
            (center - 0.020).abs() <= 2.0 * h,
            "center depth {center}, expected ~0.020"
        );
    }

    #[test]
    fn cube_corner_shallower_than_face_center() {
        let n = 24;
        let desc = GridDesc::new([n, n, n], 1.0, Vec3::ZERO).unwrap();
        let mut g = create_grid(desc, 0.0).unwrap();
        for k in 4..20 {
            for j in 4..20 {
                for i in 4..20 {
                    g.set(i, j, k, 1.0);
                }
            }
        }
        let sdf = rebuild_sdf(&g, 0.5).unwrap();
        let corner = sdf.query_depth(5, 5, 5);
        let face_center = sdf.query_depth(12, 12, 5);
        assert!(
            corner < face_center,
            "corner {corner} should be shallower than face center {face_center}"
        );
    }

    #[test]
    fn rebuild_is_idempotent() {
        let g = grid_with(&[(3, 3, 3), (4, 3, 3), (3, 4, 3), (9, 9, 9)], 12, 0.5);
        let a = rebuild_sdf(&g, 0.5).unwrap();
        let b = rebuild_sdf(&g, 0.5).unwrap();
        assert_eq!(a.grid(), b.grid());
    }

    #[test]
    fn erosion_never_deepens_surviving_cells() {
        // Remove cells one by one; depth at surviving interior cells must not grow.
        let n = 12;
        let desc = GridDesc::new([n, n, n], 1.0, Vec3::ZERO).unwrap();
        let mut g = create_grid(desc, 0.0).unwrap();
        for k in 2..10 {
            for j in 2..10 {
                for i in 2..10 {
                    g.set(i, j, k, 1.0);
                }
            }
        }
        let mut prev = rebuild_sdf(&g, 0.5).unwrap();
        for step in 0..4 {
            // Peel one face layer.
            let layer = 2 + step;
            for k in 2..10 {
                for j in 2..10 {
                    g.set(layer, j, k, 0.0);
                }
            }
            let next = rebuild_sdf(&g, 0.5).unwrap();
            for k in 2..10 {
                for j in 2..10 {
                    for i in (layer + 1)..10 {
                        let before = prev.query_depth(i, j, k);
                        let after = next.query_depth(i, j, k);
                        assert!(
                            after <= before + 1e-9,
                            "depth grew at ({i},{j},{k}): {before} -> {after}"
                        );
                    }
                }
            }
            prev = next;
        }
    }

    #[test]
    fn adjacent_distance_bound() {
        let g = grid_with(&[(6, 6, 6), (7, 6, 6), (6, 7, 6)], 14, 2.0);
        let sdf = rebuild_sdf(&g, 0.5).unwrap();
        let res = sdf.grid().desc().resolution;
        let bound = 2.0 * 3.0f64.sqrt() + 1e-9;
        for k in 0..res[2] {
            for j in 0..res[1] {
                for i in 0..res[0].saturating_sub(1) {
                    let a = sdf.grid().get(i, j, k).abs();
                    let b = sdf.grid().get(i + 1, j, k).abs();
                    assert!((a - b).abs() <= bound);
                }
            }
        }
    }
}

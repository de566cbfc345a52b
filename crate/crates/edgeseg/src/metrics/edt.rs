//! Exact Euclidean distance transform on anisotropic voxel grids.
//!
//! Squared distances are computed per axis: a linear two-sweep pass over
//! the binary feature mask along x, then lower-envelope-of-parabolas
//! passes (Felzenszwalb & Huttenlocher) along y and z. Each axis uses its
//! own mm step, so the result is the exact squared distance from every
//! voxel center to the nearest feature voxel center in mm.

use crate::volgrid::flat_index;

/// 1D squared-distance lower envelope. `f` holds per-cell squared costs
/// (+inf where no feature reaches); `step` is the mm distance between
/// adjacent cells. Writes min_p ((q-p)*step)^2 + f[p] into `d`.
fn edt_1d(f: &[f64], step: f64, d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let xq = q as f64 * step;
        let fq = f[q] + xq * xq;
        let mut s = f64::NEG_INFINITY;
        while k >= 0 {
            let p = v[k as usize];
            let xp = p as f64 * step;
            s = (fq - (f[p] + xp * xp)) / (2.0 * (xq - xp));
            if s <= z[k as usize] {
                k -= 1;
            } else {
                break;
            }
        }
        if k < 0 {
            s = f64::NEG_INFINITY;
        }
        k += 1;
        v[k as usize] = q;
        z[k as usize] = s;
        z[k as usize + 1] = f64::INFINITY;
    }
    if k < 0 {
        d[..n].fill(f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (q, dq) in d.iter_mut().enumerate().take(n) {
        let xq = q as f64 * step;
        while z[j + 1] < xq {
            j += 1;
        }
        let p = v[j];
        let xp = p as f64 * step;
        *dq = (xq - xp) * (xq - xp) + f[p];
    }
}

/// Squared distance in mm^2 from every voxel to the nearest `true` voxel.
/// All entries are +inf when the mask is empty.
pub fn squared_edt(mask: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let n = nx * ny * nz;
    debug_assert_eq!(mask.len(), n);
    let mut grid = vec![f64::INFINITY; n];

    // Pass 1 (x): two linear sweeps over the binary row, exact in 1D.
    let sx = spacing[0];
    for zc in 0..nz {
        for yc in 0..ny {
            let base = flat_index(dims, 0, yc, zc);
            let mut last: Option<usize> = None;
            for x in 0..nx {
                if mask[base + x] {
                    last = Some(x);
                }
                if let Some(p) = last {
                    let dx = (x - p) as f64 * sx;
                    grid[base + x] = dx * dx;
                }
            }
            last = None;
            for x in (0..nx).rev() {
                if mask[base + x] {
                    last = Some(x);
                }
                if let Some(p) = last {
                    let dx = (p - x) as f64 * sx;
                    let d2 = dx * dx;
                    if d2 < grid[base + x] {
                        grid[base + x] = d2;
                    }
                }
            }
        }
    }

    // Passes 2 (y) and 3 (z): parabola envelopes over the accumulated
    // squared distances.
    let max_dim = ny.max(nz);
    let mut f = vec![0.0f64; max_dim];
    let mut d = vec![0.0f64; max_dim];
    let mut v = vec![0usize; max_dim];
    let mut z = vec![0.0f64; max_dim + 1];

    let sy = spacing[1];
    for zc in 0..nz {
        for x in 0..nx {
            for y in 0..ny {
                f[y] = grid[flat_index(dims, x, y, zc)];
            }
            edt_1d(&f[..ny], sy, &mut d, &mut v, &mut z);
            for y in 0..ny {
                grid[flat_index(dims, x, y, zc)] = d[y];
            }
        }
    }

    let sz = spacing[2];
    for yc in 0..ny {
        for x in 0..nx {
            for zc in 0..nz {
                f[zc] = grid[flat_index(dims, x, yc, zc)];
            }
            edt_1d(&f[..nz], sz, &mut d, &mut v, &mut z);
            for zc in 0..nz {
                grid[flat_index(dims, x, yc, zc)] = d[zc];
            }
        }
    }

    grid
}

//! Rotation of a Haar pyramid directly in the transform domain.
//!
//! The working representation is a set of three derivative fields per level:
//! staggered first differences of the level-L approximation grid A_L, in
//! angle units. With grids indexed like the maps,
//!
//! ```text
//! g_theta[r][c]    = (A(r+1, c) - A(r, c)) / dtheta      at ((r+1) dt, (c+0.5) dp)
//! g_phi[r][c]      = (A(r, c+1) - A(r, c)) / dphi        at ((r+0.5) dt, (c+1) dp)
//! g_thetaphi[r][c] = mixed difference / (dtheta dphi)    at ((r+1) dt, (c+1) dp)
//! ```
//!
//! Staggering is what makes the pipeline exact on unrotated data: the detail
//! coefficients one level down are plain 2-tap sums of these differences,
//! coarsening the fields is a {1,2,1}x{1,1} convolution with downsampling,
//! and the mixed field is identically the theta finite difference of g_phi.
//! Rotating the fields is the approximate step: each output node resamples
//! the source fields at the rotated angles and applies the chain rule with
//! the analytic Jacobian of the angle maps.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::haar::{DetailLevel, HaarPyramid};
use crate::map::{bilinear_stencil, sample_grid, GridStagger, Parity, PI, TAU};
use crate::sphere::{rotate_angles, RotationSpec};

/// Staggered derivative fields of one approximation level.
#[derive(Debug, Clone)]
pub struct DerivativeFields {
    level: u32,
    channels: usize,
    /// Channel-major planes of side 2^level.
    pub g_theta: Vec<f64>,
    pub g_phi: Vec<f64>,
    pub g_thetaphi: Vec<f64>,
}

impl DerivativeFields {
    pub fn zeros(level: u32, channels: usize) -> Self {
        let plane = 1usize << (2 * level);
        DerivativeFields {
            level,
            channels,
            g_theta: vec![0.0; channels * plane],
            g_phi: vec![0.0; channels * plane],
            g_thetaphi: vec![0.0; channels * plane],
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn side(&self) -> usize {
        1usize << self.level
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn plane(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_zero(&self) -> bool {
        self.g_theta.iter().all(|&x| x == 0.0)
            && self.g_phi.iter().all(|&x| x == 0.0)
            && self.g_thetaphi.iter().all(|&x| x == 0.0)
    }

    pub fn max_abs_diff(&self, other: &DerivativeFields) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in [
            (&self.g_theta, &other.g_theta),
            (&self.g_phi, &other.g_phi),
            (&self.g_thetaphi, &other.g_thetaphi),
        ] {
            for (x, y) in a.iter().zip(b.iter()) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }
}

/// Ghost fetch for the theta-staggered field: row `side` reflects across the
/// south pole onto row side-2 with a half-turn and a sign flip.
fn t_at(t: &[f64], side: usize, r: usize, c: usize) -> f64 {
    if r < side {
        t[r * side + c]
    } else {
        debug_assert_eq!(r, side);
        -t[(side - 2) * side + (c + side / 2) % side]
    }
}

fn m_at(m: &[f64], side: usize, r: usize, c: usize) -> f64 {
    if r < side {
        m[r * side + (c % side)]
    } else {
        debug_assert_eq!(r, side);
        -m[(side - 2) * side + (c + side / 2) % side]
    }
}

/// Differences of an explicit approximation grid -> fields at its level.
pub(crate) fn fields_from_approx(
    approx: &[Vec<f64>],
    level: u32,
    channels: usize,
) -> DerivativeFields {
    let side = 1usize << level;
    let dt = PI / side as f64;
    let dp = TAU / side as f64;
    let mut f = DerivativeFields::zeros(level, channels);
    let plane = side * side;
    for ch in 0..channels {
        let a = &approx[ch];
        let ghost = |r: usize, c: usize| -> f64 {
            if r < side {
                a[r * side + c % side]
            } else {
                // Pole reflection of the cell-centered approximation grid.
                a[(side - 1) * side + (c + side / 2) % side]
            }
        };
        for r in 0..side {
            for c in 0..side {
                let i = ch * plane + r * side + c;
                let a00 = a[r * side + c];
                let a01 = a[r * side + (c + 1) % side];
                let a10 = ghost(r + 1, c);
                let a11 = ghost(r + 1, c + 1);
                f.g_theta[i] = (a10 - a00) / dt;
                f.g_phi[i] = (a01 - a00) / dp;
                f.g_thetaphi[i] = (a11 - a01 - a10 + a00) / (dt * dp);
            }
        }
    }
    f
}

/// Derivative fields at `level`: staggered differences of the level-`level`
/// approximation grid reconstructed from the pyramid (levels < `level`).
pub fn coeffs_to_derivatives(pyr: &HaarPyramid, level: u32) -> Result<DerivativeFields> {
    if level < 1 || level > pyr.size_exp() {
        return Err(Error::LevelOutOfRange {
            level: level as usize,
            size_exp: pyr.size_exp(),
        });
    }
    let approx: Vec<Vec<f64>> = (0..pyr.channels())
        .map(|ch| crate::haar::synthesize_approximation(pyr, ch, level as usize))
        .collect();
    Ok(fields_from_approx(&approx, level, pyr.channels()))
}

/// The emit step: detail grids one level below the fields. Exact on fields
/// that are differences of an approximation grid.
pub fn derivatives_to_coeffs(fields: &DerivativeFields) -> DetailLevel {
    assert!(fields.level >= 1, "level-0 fields have no detail level below");
    let side = fields.side();
    let out_level = fields.level - 1;
    let out_side = 1usize << out_level;
    let plane = fields.plane();
    let out_plane = out_side * out_side;
    let dt = PI / side as f64;
    let dp = TAU / side as f64;
    let scale = 1.0 / (1u64 << (fields.level + 1)) as f64;
    let mut lev = DetailLevel {
        h: vec![0.0; fields.channels * out_plane],
        v: vec![0.0; fields.channels * out_plane],
        d: vec![0.0; fields.channels * out_plane],
    };
    for ch in 0..fields.channels {
        let t = &fields.g_theta[ch * plane..(ch + 1) * plane];
        let p = &fields.g_phi[ch * plane..(ch + 1) * plane];
        let m = &fields.g_thetaphi[ch * plane..(ch + 1) * plane];
        for rr in 0..out_side {
            for cc in 0..out_side {
                let i = ch * out_plane + rr * out_side + cc;
                lev.v[i] =
                    -dt * scale * (t[(2 * rr) * side + 2 * cc] + t[(2 * rr) * side + 2 * cc + 1]);
                lev.h[i] =
                    -dp * scale * (p[(2 * rr) * side + 2 * cc] + p[(2 * rr + 1) * side + 2 * cc]);
                lev.d[i] = dt * dp * scale * m[(2 * rr) * side + 2 * cc];
            }
        }
    }
    lev
}

/// One recursion step: fields of the next-coarser approximation grid via
/// {1,2,1}/4 along the difference axis and {1,1}/2 along the other.
pub fn downsample_fields(fields: &DerivativeFields) -> DerivativeFields {
    assert!(fields.level >= 2, "cannot coarsen level-1 fields");
    let side = fields.side();
    let out_side = side / 2;
    let plane = fields.plane();
    let out_plane = out_side * out_side;
    let mut out = DerivativeFields::zeros(fields.level - 1, fields.channels);
    for ch in 0..fields.channels {
        let t = &fields.g_theta[ch * plane..(ch + 1) * plane];
        let p = &fields.g_phi[ch * plane..(ch + 1) * plane];
        let m = &fields.g_thetaphi[ch * plane..(ch + 1) * plane];
        for rr in 0..out_side {
            for cc in 0..out_side {
                let i = ch * out_plane + rr * out_side + cc;
                let (r0, c0) = (2 * rr, 2 * cc);
                let mut tv = 0.0;
                for dc in 0..2 {
                    tv += t_at(t, side, r0, c0 + dc)
                        + 2.0 * t_at(t, side, r0 + 1, c0 + dc)
                        + t_at(t, side, r0 + 2, c0 + dc);
                }
                out.g_theta[i] = tv / 8.0;
                let mut pv = 0.0;
                for dr in 0..2 {
                    let row = &p[(r0 + dr) * side..(r0 + dr + 1) * side];
                    pv += row[c0] + 2.0 * row[(c0 + 1) % side] + row[(c0 + 2) % side];
                }
                out.g_phi[i] = pv / 8.0;
                let mut mv = 0.0;
                for (dr, wr) in [(0usize, 1.0), (1, 2.0), (2, 1.0)] {
                    for (dc, wc) in [(0usize, 1.0), (1, 2.0), (2, 1.0)] {
                        mv += wr * wc * m_at(m, side, r0 + dr, c0 + dc);
                    }
                }
                out.g_thetaphi[i] = mv / 16.0;
            }
        }
    }
    out
}

/// Detail grids at `target_level` straight from level-j fields through one
/// convolution with the composed kernels: a triangle of width 2^m - 1 along
/// the difference axis and a box of width 2^m along the other, m = j - 1 -
/// target_level steps composed, followed by the emit stencil.
pub fn synthesize_coarser_direct(
    fields: &DerivativeFields,
    target_level: u32,
) -> Result<DetailLevel> {
    if target_level + 1 > fields.level {
        return Err(Error::LevelOutOfRange {
            level: target_level as usize,
            size_exp: fields.level,
        });
    }
    let j = fields.level;
    let side = fields.side();
    let plane = fields.plane();
    let t_side = 1usize << target_level;
    let t_plane = t_side * t_side;
    let w = 1usize << (j - target_level); // square width in fine cells
    let dt = PI / side as f64;
    let dp = TAU / side as f64;
    // 2^t * 4^(-j): overall detail normalization.
    let norm = (1u64 << target_level) as f64 / (1u64 << (2 * j)) as f64;
    let tri = |off: usize| (off + 1).min(w - 1 - off) as f64;
    let mut lev = DetailLevel {
        h: vec![0.0; fields.channels * t_plane],
        v: vec![0.0; fields.channels * t_plane],
        d: vec![0.0; fields.channels * t_plane],
    };
    for ch in 0..fields.channels {
        let t = &fields.g_theta[ch * plane..(ch + 1) * plane];
        let p = &fields.g_phi[ch * plane..(ch + 1) * plane];
        let m = &fields.g_thetaphi[ch * plane..(ch + 1) * plane];
        for rr in 0..t_side {
            for cc in 0..t_side {
                let i = ch * t_plane + rr * t_side + cc;
                let (r0, c0) = (rr * w, cc * w);
                let mut v = 0.0;
                let mut h = 0.0;
                let mut d = 0.0;
                for off in 0..w - 1 {
                    let u = tri(off);
                    for k in 0..w {
                        v += u * t[(r0 + off) * side + c0 + k];
                        h += u * p[(r0 + k) * side + c0 + off];
                    }
                    for off2 in 0..w - 1 {
                        d += u * tri(off2) * m[(r0 + off) * side + c0 + off2];
                    }
                }
                lev.v[i] = -norm * dt * v;
                lev.h[i] = -norm * dp * h;
                lev.d[i] = norm * dt * dp * d;
            }
        }
    }
    Ok(lev)
}

/// Chain-rule rotation of the derivative fields.
///
/// For azimuth-only rotations the fields resample along their own rows (the
/// Jacobian of a shift is the identity and no mixed terms arise), which is
/// exact whenever the shift lands on whole columns. General rotations
/// resample g_theta and g_phi at the rotated angles, combine them with the
/// analytic Jacobian, and rebuild the mixed field as the staggered theta
/// finite difference of the rotated g_phi. Output nodes whose image falls
/// inside the pole band are filled from the nearest valid node in the same
/// column.
pub fn rotate_derivatives(fields: &DerivativeFields, rot: &RotationSpec) -> DerivativeFields {
    let (pre, elev, post) = rot.canonical_decompose();
    if elev.abs() < 1e-12 {
        return azimuth_resample(fields, pre + post);
    }
    general_rotate(fields, rot)
}

/// Pure azimuth shift of every field along its own lattice.
fn azimuth_resample(fields: &DerivativeFields, shift: f64) -> DerivativeFields {
    let side = fields.side();
    let plane = fields.plane();
    let dp = TAU / side as f64;
    // Column coordinate shift; the lookup azimuth is phi - shift.
    let s_cols = shift / dp;
    let snapped = (s_cols - s_cols.round()).abs() < 1e-9;
    let mut out = DerivativeFields::zeros(fields.level, fields.channels);
    for (src, dst) in [
        (&fields.g_theta, &mut out.g_theta),
        (&fields.g_phi, &mut out.g_phi),
        (&fields.g_thetaphi, &mut out.g_thetaphi),
    ] {
        for ch in 0..fields.channels {
            let s = &src[ch * plane..(ch + 1) * plane];
            let d = &mut dst[ch * plane..(ch + 1) * plane];
            if snapped {
                let k = (s_cols.round() as i64).rem_euclid(side as i64) as usize;
                for r in 0..side {
                    for c in 0..side {
                        d[r * side + c] = s[r * side + (c + side - k) % side];
                    }
                }
            } else {
                let base = s_cols.floor();
                let frac = s_cols - base;
                let k = (base as i64).rem_euclid(side as i64) as usize;
                for r in 0..side {
                    for c in 0..side {
                        // Query column c - s_cols: between c-k-1 and c-k.
                        let c0 = (c + side - k) % side;
                        let cm = (c0 + side - 1) % side;
                        d[r * side + c] =
                            (1.0 - frac) * s[r * side + c0] + frac * s[r * side + cm];
                    }
                }
            }
        }
    }
    out
}

fn general_rotate(fields: &DerivativeFields, rot: &RotationSpec) -> DerivativeFields {
    let side = fields.side();
    let plane = fields.plane();
    let channels = fields.channels;
    let dt = PI / side as f64;
    let dp = TAU / side as f64;
    let mut out = DerivativeFields::zeros(fields.level, channels);

    // Pass 1: g_theta and g_phi rows; parallel only when the grid is large
    // enough for the dispatch to pay off (the renderer already runs one
    // pixel per task). Sequential and parallel paths produce identical
    // bytes: rows are independent and assembled in order.
    struct Row {
        t: Vec<f64>,
        p: Vec<f64>,
        t_bad: Vec<bool>,
        p_bad: Vec<bool>,
    }
    let row_fn = |r: usize| {
        let mut row = Row {
                t: vec![0.0; channels * side],
                p: vec![0.0; channels * side],
                t_bad: vec![false; side],
                p_bad: vec![false; side],
            };
            // g_theta nodes: ((r+1) dt, (c+0.5) dp).
            let theta_t = (r as f64 + 1.0) * dt;
            // g_phi nodes: ((r+0.5) dt, (c+1) dp).
            let theta_p = (r as f64 + 0.5) * dt;
            for c in 0..side {
                let phi_t = (c as f64 + 0.5) * dp;
                let (bt, bp) = (
                    chain_node(rot, theta_t, phi_t),
                    chain_node(rot, theta_p, (c as f64 + 1.0) * dp),
                );
                row.t_bad[c] = bt.degenerate;
                row.p_bad[c] = bp.degenerate;
                // One footprint per (node, source grid); applied per channel.
                let t_from_t =
                    bilinear_stencil(side, bt.theta, bt.phi, GridStagger::ThetaEdge, Parity::OddTheta);
                let t_from_p =
                    bilinear_stencil(side, bt.theta, bt.phi, GridStagger::PhiEdge, Parity::Even);
                let p_from_t =
                    bilinear_stencil(side, bp.theta, bp.phi, GridStagger::ThetaEdge, Parity::OddTheta);
                let p_from_p =
                    bilinear_stencil(side, bp.theta, bp.phi, GridStagger::PhiEdge, Parity::Even);
                for ch in 0..channels {
                    let gt = &fields.g_theta[ch * plane..(ch + 1) * plane];
                    let gp = &fields.g_phi[ch * plane..(ch + 1) * plane];
                    row.t[ch * side + c] =
                        t_from_t.apply(gt) * bt.tt + t_from_p.apply(gp) * bt.pt;
                    row.p[ch * side + c] =
                        p_from_t.apply(gt) * bp.tp + p_from_p.apply(gp) * bp.pp;
                }
            }
            row
    };
    let rows: Vec<Row> = if side >= 128 {
        (0..side).into_par_iter().map(row_fn).collect()
    } else {
        (0..side).map(row_fn).collect()
    };
    let mut t_bad = vec![false; side * side];
    let mut p_bad = vec![false; side * side];
    for (r, row) in rows.into_iter().enumerate() {
        for ch in 0..channels {
            out.g_theta[ch * plane + r * side..ch * plane + (r + 1) * side]
                .copy_from_slice(&row.t[ch * side..(ch + 1) * side]);
            out.g_phi[ch * plane + r * side..ch * plane + (r + 1) * side]
                .copy_from_slice(&row.p[ch * side..(ch + 1) * side]);
        }
        t_bad[r * side..(r + 1) * side].copy_from_slice(&row.t_bad);
        p_bad[r * side..(r + 1) * side].copy_from_slice(&row.p_bad);
    }
    fill_degenerate(&mut out.g_theta, &t_bad, side, channels);
    fill_degenerate(&mut out.g_phi, &p_bad, side, channels);

    // Pass 2: mixed field as the staggered theta finite difference of the
    // rotated g_phi; beyond the last row g_phi reflects evenly across the
    // south pole.
    for ch in 0..channels {
        let p = &out.g_phi[ch * plane..(ch + 1) * plane];
        let mut m = vec![0.0; plane];
        for r in 0..side {
            for c in 0..side {
                let above = p[r * side + c];
                let below = if r + 1 < side {
                    p[(r + 1) * side + c]
                } else {
                    p[(side - 1) * side + (c + side / 2) % side]
                };
                m[r * side + c] = (below - above) / dt;
            }
        }
        out.g_thetaphi[ch * plane..(ch + 1) * plane].copy_from_slice(&m);
    }
    out
}

struct NodeGeom {
    theta: f64,
    phi: f64,
    tt: f64,
    tp: f64,
    pt: f64,
    pp: f64,
    degenerate: bool,
}

fn chain_node(rot: &RotationSpec, theta: f64, phi: f64) -> NodeGeom {
    let (th, ph, j) = crate::sphere::angle_map_with_jacobian(rot, theta, phi);
    NodeGeom {
        theta: th,
        phi: ph,
        tt: j.tt,
        tp: j.tp,
        pt: j.pt,
        pp: j.pp,
        degenerate: j.degenerate,
    }
}

/// Replace pole-degenerate nodes by the nearest valid node in the column.
fn fill_degenerate(data: &mut [f64], bad: &[bool], side: usize, channels: usize) {
    if !bad.iter().any(|&b| b) {
        return;
    }
    let plane = side * side;
    for r in 0..side {
        for c in 0..side {
            if !bad[r * side + c] {
                continue;
            }
            let mut found = None;
            for dr in 1..side {
                if r >= dr && !bad[(r - dr) * side + c] {
                    found = Some(r - dr);
                    break;
                }
                if r + dr < side && !bad[(r + dr) * side + c] {
                    found = Some(r + dr);
                    break;
                }
            }
            if let Some(rv) = found {
                for ch in 0..channels {
                    data[ch * plane + r * side + c] = data[ch * plane + rv * side + c];
                }
            }
        }
    }
}

/// True when a circular shift by `columns` map columns is an exact signed
/// permutation of every retained (nonzero) detail level: whole cells at
/// levels >= 1, and whole half-turns at level 0 (where the single square
/// wraps onto itself and the h/d grid only changes sign).
pub fn azimuth_shift_aligned(pyr: &HaarPyramid, columns: i64) -> bool {
    let n = pyr.size_exp();
    let side = 1i64 << n;
    let cols = columns.rem_euclid(side);
    for (l, lev) in pyr.levels.iter().enumerate() {
        if lev.is_zero() {
            continue;
        }
        let cell = if l == 0 {
            side / 2 // half-turn granularity at the coarsest square
        } else {
            side >> l
        };
        if cell == 0 || cols % cell != 0 {
            return false;
        }
    }
    true
}

/// O(N) exact azimuth shift: circular column permutation of every detail
/// grid at the level-appropriate stride, with the level-0 half-turn flipping
/// the sign of the horizontal and diagonal coefficients.
pub fn azimuth_shift_fast(pyr: &HaarPyramid, columns: i64) -> Result<HaarPyramid> {
    if !azimuth_shift_aligned(pyr, columns) {
        return Err(Error::MisalignedShift { columns });
    }
    let n = pyr.size_exp();
    let side = 1i64 << n;
    let cols = columns.rem_euclid(side);
    let mut out = pyr.clone();
    for (l, lev) in pyr.levels.iter().enumerate() {
        if lev.is_zero() {
            continue;
        }
        let g_side = 1usize << l;
        let plane = g_side * g_side;
        let cell = side >> l;
        let (shift, flip) = if l == 0 {
            // cols is 0 or side/2 here; a half-turn negates h and d.
            (0usize, cols != 0)
        } else {
            ((cols / cell) as usize % g_side, false)
        };
        let olev = &mut out.levels[l];
        for ch in 0..pyr.channels() {
            for r in 0..g_side {
                for c in 0..g_side {
                    let src = ch * plane + r * g_side + (c + g_side - shift) % g_side;
                    let dst = ch * plane + r * g_side + c;
                    olev.h[dst] = if flip { -lev.h[src] } else { lev.h[src] };
                    olev.v[dst] = lev.v[src];
                    olev.d[dst] = if flip { -lev.d[src] } else { lev.d[src] };
                }
            }
        }
    }
    Ok(out)
}

/// Haar-domain rotation of a pyramid.
///
/// Aligned azimuth-only rotations take the exact O(N) shift. Otherwise the
/// integer-aligned part of the leading azimuth is peeled off with the fast
/// shift and the residual rotation runs through the chain-rule path:
/// detail levels >= start_level are each rotated at their own resolution
/// (levels whose input details are identically zero stay zero), the levels
/// below start_level are synthesized recursively from the rotated
/// start_level fields, and the scaling coefficient is the mean of a
/// 2^start_level-resolution spatial resample of the reconstructed
/// approximation.
pub fn build_rotated_pyramid(
    pyr: &HaarPyramid,
    rot: &RotationSpec,
    start_level: usize,
) -> Result<HaarPyramid> {
    let n = pyr.size_exp() as usize;
    if start_level < 1 || start_level > n - 1 {
        return Err(Error::BadStartLevel {
            start_level,
            max: n - 1,
        });
    }
    let side = 1i64 << n;
    let dp_col = TAU / side as f64;
    let (pre, elev, post) = rot.canonical_decompose();
    if elev.abs() < 1e-12 {
        let s_cols = (pre + post) / dp_col;
        if (s_cols - s_cols.round()).abs() < 1e-9 {
            let k = s_cols.round() as i64;
            if azimuth_shift_aligned(pyr, k) {
                return azimuth_shift_fast(pyr, k);
            }
        }
        return rotate_pyramid_general(pyr, rot, start_level);
    }
    // Peel the aligned integer part of the leading azimuth; the residual
    // folds into the chain-rule resampling.
    let quantum = alignment_quantum(pyr);
    let k = ((pre / dp_col / quantum as f64).round() as i64) * quantum;
    if k != 0 && azimuth_shift_aligned(pyr, k) {
        let shifted = azimuth_shift_fast(pyr, k)?;
        let residual = RotationSpec::from_matrix(crate::sphere::mat_mul(
            &crate::sphere::rot_y(-(k as f64) * dp_col),
            rot.matrix(),
        ));
        return rotate_pyramid_general(&shifted, &residual, start_level);
    }
    rotate_pyramid_general(pyr, rot, start_level)
}

/// Smallest aligned column shift for the pyramid's retained levels.
fn alignment_quantum(pyr: &HaarPyramid) -> i64 {
    let n = pyr.size_exp();
    let side = 1i64 << n;
    let mut q = 1i64;
    for (l, lev) in pyr.levels.iter().enumerate() {
        if lev.is_zero() {
            continue;
        }
        let cell = if l == 0 { side / 2 } else { side >> l };
        q = q.max(cell);
    }
    q
}

/// The general chain-rule path; `build_rotated_pyramid` dispatches here when
/// the aligned fast shift does not apply.
pub fn rotate_pyramid_general(
    pyr: &HaarPyramid,
    rot: &RotationSpec,
    start_level: usize,
) -> Result<HaarPyramid> {
    let n = pyr.size_exp() as usize;
    if start_level < 1 || start_level > n - 1 {
        return Err(Error::BadStartLevel {
            start_level,
            max: n - 1,
        });
    }
    let channels = pyr.channels();
    let mut out = HaarPyramid::zeros(pyr.size_exp(), channels)?;

    // Highest level whose approximation grid is actually needed.
    let mut top_needed = start_level;
    for l in start_level..n {
        if !pyr.levels[l].is_zero() {
            top_needed = l + 1;
        }
    }

    // Progressive approximation grids A_start..A_top, per channel.
    let mut approx: Vec<Vec<f64>> = (0..channels)
        .map(|ch| crate::haar::synthesize_approximation(pyr, ch, start_level))
        .collect();

    // Recursion state from the rotated start-level fields.
    let fields_s = fields_from_approx(&approx, start_level as u32, channels);
    let mut state = rotate_derivatives(&fields_s, rot);
    for l in (0..start_level).rev() {
        out.levels[l] = derivatives_to_coeffs(&state);
        if l > 0 {
            state = downsample_fields(&state);
        }
    }

    // Scaling: mean of the coarse spatial resample of A_start.
    let s_side = 1usize << start_level;
    let dts = PI / s_side as f64;
    let dps = TAU / s_side as f64;
    for ch in 0..channels {
        let mut sum = 0.0;
        for r in 0..s_side {
            let theta = (r as f64 + 0.5) * dts;
            for c in 0..s_side {
                let (th, ph) = rotate_angles(rot, theta, (c as f64 + 0.5) * dps);
                sum += sample_grid(
                    &approx[ch],
                    s_side,
                    th,
                    ph,
                    GridStagger::CellCenter,
                    Parity::Even,
                );
            }
        }
        out.scaling[ch] = sum / (s_side * s_side) as f64;
    }

    // Detail levels >= start_level, each rotated at its own resolution.
    for l in start_level..n {
        // Advance the approximation grids to level l+1 when needed.
        if l + 1 > top_needed {
            break;
        }
        let cur_side = 1usize << l;
        let next_side = 2 * cur_side;
        let plane = cur_side * cur_side;
        let lev = &pyr.levels[l];
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(channels);
        for ch in 0..channels {
            let mut fine = vec![0.0; next_side * next_side];
            let amp = (1u64 << l) as f64;
            for r in 0..cur_side {
                for c in 0..cur_side {
                    let a = approx[ch][r * cur_side + c];
                    let i = ch * plane + r * cur_side + c;
                    let h = lev.h[i] * amp;
                    let v = lev.v[i] * amp;
                    let d = lev.d[i] * amp;
                    fine[(2 * r) * next_side + 2 * c] = a + h + v + d;
                    fine[(2 * r) * next_side + 2 * c + 1] = a - h + v - d;
                    fine[(2 * r + 1) * next_side + 2 * c] = a + h - v - d;
                    fine[(2 * r + 1) * next_side + 2 * c + 1] = a - h - v + d;
                }
            }
            next.push(fine);
        }
        approx = next;
        if pyr.levels[l].is_zero() {
            continue;
        }
        let fields = fields_from_approx(&approx, (l + 1) as u32, channels);
        let rotated = rotate_derivatives(&fields, rot);
        out.levels[l] = derivatives_to_coeffs(&rotated);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::{forward_transform, inverse_transform};
    use crate::map::LatLongMap;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_map(size_exp: u32, seed: u64) -> LatLongMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = 1usize << size_exp;
        LatLongMap::from_samples(
            size_exp,
            1,
            (0..side * side)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    fn max_level_diff(a: &DetailLevel, b: &DetailLevel) -> f64 {
        let mut worst = 0.0f64;
        for (x, y) in [(&a.h, &b.h), (&a.v, &b.v), (&a.d, &b.d)] {
            for (u, v) in x.iter().zip(y.iter()) {
                worst = worst.max((u - v).abs());
            }
        }
        worst
    }

    #[test]
    fn emit_reproduces_details_exactly() {
        let m = random_map(6, 50);
        let pyr = forward_transform(&m);
        for level in 1..=6u32 {
            let fields = coeffs_to_derivatives(&pyr, level).unwrap();
            let lev = derivatives_to_coeffs(&fields);
            let diff = max_level_diff(&lev, &pyr.levels[(level - 1) as usize]);
            assert!(diff < 1e-13, "level {level}: {diff}");
        }
    }

    #[test]
    fn constant_map_gives_zero_fields() {
        let m = LatLongMap::from_fn(4, 1, |_, _, _| 3.25).unwrap();
        let pyr = forward_transform(&m);
        let fields = coeffs_to_derivatives(&pyr, 4).unwrap();
        assert!(fields.is_zero());
    }

    #[test]
    fn row_linear_map_has_constant_theta_field() {
        // Samples linear in the row index: constant theta differences,
        // zero phi and mixed differences (up to the pole-ghost row).
        let side = 16usize;
        let m = LatLongMap::from_samples(
            4,
            1,
            (0..side * side).map(|i| (i / side) as f64).collect(),
        )
        .unwrap();
        let pyr = forward_transform(&m);
        let fields = coeffs_to_derivatives(&pyr, 4).unwrap();
        let dt = PI / side as f64;
        for r in 0..side - 1 {
            for c in 0..side {
                let g = fields.g_theta[r * side + c];
                assert!((g - 1.0 / dt).abs() < 1e-10, "({r},{c}): {g}");
                assert!(fields.g_phi[r * side + c].abs() < 1e-12);
                assert!(fields.g_thetaphi[r * side + c].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn synthesize_direct_matches_transform() {
        let m = random_map(6, 51);
        let pyr = forward_transform(&m);
        let fields = coeffs_to_derivatives(&pyr, 6).unwrap();
        for target in (0..6u32).rev() {
            let lev = synthesize_coarser_direct(&fields, target).unwrap();
            let diff = max_level_diff(&lev, &pyr.levels[target as usize]);
            assert!(diff < 1e-12, "target {target}: {diff}");
        }
    }

    #[test]
    fn recursion_matches_direct_on_random_fields() {
        // Arbitrary fields, not differences of any map.
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let level = 6u32;
        let plane = 1usize << (2 * level);
        let mut fields = DerivativeFields::zeros(level, 1);
        for grid in [
            &mut fields.g_theta,
            &mut fields.g_phi,
            &mut fields.g_thetaphi,
        ] {
            for v in grid.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        assert_eq!(fields.g_theta.len(), plane);
        let mut state = fields.clone();
        for target in (0..level).rev() {
            let rec = derivatives_to_coeffs(&state);
            let dir = synthesize_coarser_direct(&fields, target).unwrap();
            let diff = max_level_diff(&rec, &dir);
            assert!(diff < 1e-12, "target {target}: {diff}");
            if target > 0 {
                state = downsample_fields(&state);
            }
        }
    }

    #[test]
    fn rotate_fields_identity_is_exact() {
        let m = random_map(5, 53);
        let pyr = forward_transform(&m);
        let fields = coeffs_to_derivatives(&pyr, 5).unwrap();
        let rotated = rotate_derivatives(&fields, &RotationSpec::identity());
        assert_eq!(rotated.max_abs_diff(&fields), 0.0);
    }

    #[test]
    fn rotate_fields_constant_is_zero() {
        let fields = DerivativeFields::zeros(5, 1);
        let rot = RotationSpec::from_euler(0.4, 1.1, -0.2);
        let rotated = rotate_derivatives(&fields, &rot);
        assert!(rotated.is_zero());
    }

    #[test]
    fn azimuth_invariant_function_keeps_fields() {
        // f = cos(theta): invariant under azimuth rotation; compare against
        // the fields of the spatially rotated map.
        let m = LatLongMap::from_fn(6, 1, |t, _, _| t.cos()).unwrap();
        let pyr = forward_transform(&m);
        let fields = coeffs_to_derivatives(&pyr, 6).unwrap();
        let rot = RotationSpec::from_euler(0.0, 0.7321, 0.0);
        let rotated = rotate_derivatives(&fields, &rot);
        let diff = rotated.max_abs_diff(&fields);
        assert!(diff < 1e-9, "azimuth-invariant fields moved by {diff}");
    }

    #[test]
    fn identity_fixpoint_both_paths() {
        let m = random_map(6, 54);
        let pyr = forward_transform(&m);
        for start in 1..=5usize {
            let fast = build_rotated_pyramid(&pyr, &RotationSpec::identity(), start).unwrap();
            assert_eq!(fast, pyr, "fast path start {start}");
            let gen = rotate_pyramid_general(&pyr, &RotationSpec::identity(), start).unwrap();
            let mut worst = (gen.scaling[0] - pyr.scaling[0]).abs();
            for l in 0..6 {
                worst = worst.max(max_level_diff(&gen.levels[l], &pyr.levels[l]));
            }
            assert!(worst < 1e-10, "general path start {start}: {worst}");
        }
    }

    #[test]
    fn aligned_azimuth_build_is_exact_permutation() {
        // Details only at levels >= start+1 so that a shift of
        // k * 2pi / 2^(start+1) is integer-aligned at every retained level
        // (at level start itself an odd k would be a half-cell shift).
        let n = 6u32;
        let start = 3usize;
        let m = random_map(n, 55);
        let mut pyr = forward_transform(&m);
        for l in 0..=start {
            let lev = &mut pyr.levels[l];
            lev.h.iter_mut().for_each(|v| *v = 0.0);
            lev.v.iter_mut().for_each(|v| *v = 0.0);
            lev.d.iter_mut().for_each(|v| *v = 0.0);
        }
        let k = 3i64;
        let side = 1i64 << n;
        let shift_cols = k * side / (1 << (start + 1)) as i64;
        let beta = TAU * shift_cols as f64 / side as f64;
        let rot = RotationSpec::from_euler(0.0, beta, 0.0);
        let rotated = rotate_pyramid_general(&pyr, &rot, start).unwrap();
        let oracle = azimuth_shift_fast(&pyr, shift_cols).unwrap();
        let mut worst = (rotated.scaling[0] - oracle.scaling[0]).abs();
        for l in 0..n as usize {
            worst = worst.max(max_level_diff(&rotated.levels[l], &oracle.levels[l]));
        }
        assert!(worst < 1e-10, "aligned azimuth error {worst}");
    }

    #[test]
    fn shift_examples() {
        let m = random_map(4, 56);
        let pyr = forward_transform(&m);
        // Shift 0 is the identity.
        let same = azimuth_shift_fast(&pyr, 0).unwrap();
        assert_eq!(same, pyr);
        // Half the map width: every grid permutes by half its own width
        // (level 0 degenerates to the sign flip); matches the transform of
        // the circularly shifted map exactly.
        let side = 16usize;
        let mut shifted_samples = vec![0.0; side * side];
        for r in 0..side {
            for c in 0..side {
                shifted_samples[r * side + c] = m.get(0, r, (c + side - side / 2) % side);
            }
        }
        let oracle =
            forward_transform(&LatLongMap::from_samples(4, 1, shifted_samples).unwrap());
        let fast = azimuth_shift_fast(&pyr, (side / 2) as i64).unwrap();
        let mut worst = (fast.scaling[0] - oracle.scaling[0]).abs();
        for l in 0..4 {
            worst = worst.max(max_level_diff(&fast.levels[l], &oracle.levels[l]));
        }
        assert!(worst < 1e-10, "half-width shift error {worst}");
        // Misaligned shift is rejected.
        let err = azimuth_shift_fast(&pyr, 1);
        assert!(matches!(err, Err(Error::MisalignedShift { .. })));
    }

    #[test]
    fn random_aligned_shifts_match_transform_oracle() {
        let n = 5u32;
        let side = 1usize << n;
        let m = random_map(n, 57);
        let pyr = forward_transform(&m);
        for cols in [side as i64 / 2, -(side as i64) / 2] {
            let fast = azimuth_shift_fast(&pyr, cols).unwrap();
            let mut shifted = vec![0.0; side * side];
            let k = cols.rem_euclid(side as i64) as usize;
            for r in 0..side {
                for c in 0..side {
                    shifted[r * side + c] = m.get(0, r, (c + side - k) % side);
                }
            }
            let oracle =
                forward_transform(&LatLongMap::from_samples(n, 1, shifted).unwrap());
            let mut worst = (fast.scaling[0] - oracle.scaling[0]).abs();
            for l in 0..n as usize {
                worst = worst.max(max_level_diff(&fast.levels[l], &oracle.levels[l]));
            }
            assert!(worst < 1e-10, "cols {cols}: {worst}");
        }
        // A pyramid retaining only fine levels allows finer shifts.
        let mut coarse_free = pyr.clone();
        for l in 0..3 {
            let lev = &mut coarse_free.levels[l];
            lev.h.iter_mut().for_each(|v| *v = 0.0);
            lev.v.iter_mut().for_each(|v| *v = 0.0);
            lev.d.iter_mut().for_each(|v| *v = 0.0);
        }
        assert!(azimuth_shift_aligned(&coarse_free, (side / 8) as i64));
        assert!(!azimuth_shift_aligned(&pyr, (side / 8) as i64));
    }

    #[test]
    fn rotation_fidelity_smoke() {
        // A smooth lobe rotated by a mid-size elevation stays close to the
        // spatial oracle. The full 100-rotation batch lives in the
        // acceptance suite.
        let n = 6u32;
        let axis = crate::sphere::dir_from_angles(1.1, 0.9);
        let m = LatLongMap::from_fn(n, 1, |t, p, _| {
            let d = crate::sphere::dir_from_angles(t, p);
            let c = d[0] * axis[0] + d[1] * axis[1] + d[2] * axis[2];
            c.max(0.0).powi(20)
        })
        .unwrap();
        let pyr = forward_transform(&m);
        let rot = RotationSpec::from_euler(0.5, 0.3, -0.4);
        let haar = build_rotated_pyramid(&pyr, &rot, 5).unwrap();
        let oracle = forward_transform(&crate::sphere::rotate_map_spatial(&m, &rot));
        let got = inverse_transform(&haar).unwrap();
        let want = inverse_transform(&oracle).unwrap();
        let mse = got.mse(&want).unwrap();
        let peak = want.peak_abs();
        let psnr = 20.0 * (peak / mse.sqrt()).log10();
        assert!(psnr > 40.0, "smoke PSNR {psnr:.1} dB");
    }

    #[test]
    fn bad_start_level_rejected() {
        let m = random_map(4, 58);
        let pyr = forward_transform(&m);
        assert!(build_rotated_pyramid(&pyr, &RotationSpec::identity(), 0).is_err());
        assert!(build_rotated_pyramid(&pyr, &RotationSpec::identity(), 4).is_err());
        let fields = coeffs_to_derivatives(&pyr, 4).unwrap();
        assert!(synthesize_coarser_direct(&fields, 4).is_err());
        assert!(coeffs_to_derivatives(&pyr, 5).is_err());
    }
}

//! Forward/inverse 2D non-separable Haar transform, pyramid storage,
//! nonlinear (top-k) approximation, and the `HAAR1` binary format.
//!
//! Coefficient normalization ("unit-square" convention): the basis is
//! orthonormal under the *mean* inner product over the unit square,
//! `<f, g> = mean(f * g)`. The scaling function is the constant 1 and a
//! wavelet at level l takes the values +-2^l on the quadrants of its
//! support square. Consequently the coefficient of a basis function is the
//! mean of sample * basis value, Parseval reads `mean(f^2) = sum(coeff^2)`,
//! and triple products of basis functions take the dyadic values
//! {0, 1, +-2^l}. Sign convention per wavelet square:
//!
//! | type       | + region                  | - region                   |
//! |------------|---------------------------|----------------------------|
//! | horizontal | left half (low phi)       | right half (high phi)      |
//! | vertical   | top half (low theta)      | bottom half (high theta)   |
//! | diagonal   | top-left and bottom-right | top-right and bottom-left  |
//!
//! Multi-channel maps transform per channel independently.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::map::LatLongMap;

/// One detail level: three 2^l x 2^l grids per channel, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailLevel {
    pub h: Vec<f64>,
    pub v: Vec<f64>,
    pub d: Vec<f64>,
}

impl DetailLevel {
    fn zeros(level: usize, channels: usize) -> Self {
        let n = channels << (2 * level);
        DetailLevel {
            h: vec![0.0; n],
            v: vec![0.0; n],
            d: vec![0.0; n],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.h.iter().all(|&x| x == 0.0)
            && self.v.iter().all(|&x| x == 0.0)
            && self.d.iter().all(|&x| x == 0.0)
    }
}

/// 2D non-separable Haar decomposition of a [`LatLongMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct HaarPyramid {
    size_exp: u32,
    channels: usize,
    /// Level-0 approximation (the map mean), one value per channel.
    pub scaling: Vec<f64>,
    /// `levels[l]` holds the level-l detail grids, l = 0 .. size_exp-1.
    pub levels: Vec<DetailLevel>,
}

impl HaarPyramid {
    pub fn zeros(size_exp: u32, channels: usize) -> Result<Self> {
        if size_exp < 1 {
            return Err(Error::MalformedPyramid("size_exp must be >= 1".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::BadChannels(channels));
        }
        Ok(HaarPyramid {
            size_exp,
            channels,
            scaling: vec![0.0; channels],
            levels: (0..size_exp as usize)
                .map(|l| DetailLevel::zeros(l, channels))
                .collect(),
        })
    }

    pub fn size_exp(&self) -> u32 {
        self.size_exp
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Total coefficient count per channel (scaling + all details) = 4^n.
    pub fn coeff_count(&self) -> usize {
        1usize << (2 * self.size_exp)
    }

    /// Validates level grid sizes; used by readers.
    pub fn validate(&self) -> Result<()> {
        if self.scaling.len() != self.channels {
            return Err(Error::MalformedPyramid("scaling length".into()));
        }
        if self.levels.len() != self.size_exp as usize {
            return Err(Error::MalformedPyramid(format!(
                "expected {} detail levels, got {}",
                self.size_exp,
                self.levels.len()
            )));
        }
        for (l, lev) in self.levels.iter().enumerate() {
            let want = self.channels << (2 * l);
            if lev.h.len() != want || lev.v.len() != want || lev.d.len() != want {
                return Err(Error::MalformedPyramid(format!(
                    "level {l} grids must hold {want} values"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn detail(&self, l: usize, ty: WaveletType, ch: usize, r: usize, c: usize) -> f64 {
        let side = 1usize << l;
        let i = ch * side * side + r * side + c;
        match ty {
            WaveletType::Horizontal => self.levels[l].h[i],
            WaveletType::Vertical => self.levels[l].v[i],
            WaveletType::Diagonal => self.levels[l].d[i],
        }
    }

    /// Sum of squared coefficients per channel (the Parseval energy).
    pub fn energy(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.scaling.iter().map(|s| s * s).collect();
        for (l, lev) in self.levels.iter().enumerate() {
            let plane = 1usize << (2 * l);
            for ch in 0..self.channels {
                let sl = ch * plane..(ch + 1) * plane;
                let sum: f64 = lev.h[sl.clone()]
                    .iter()
                    .chain(&lev.v[sl.clone()])
                    .chain(&lev.d[sl.clone()])
                    .map(|x| x * x)
                    .sum();
                e[ch] += sum;
            }
        }
        e
    }
}

/// Forward non-separable Haar transform.
///
/// At each level transition a 2x2 block [[tl, tr], [bl, br]] of the current
/// approximation produces the parent approximation (tl+tr+bl+br)/4 and the
/// level-(m-1) details scaled by 1/(4 * 2^(m-1)) so that the coefficient
/// equals mean(sample * basis) under the unit-square convention.
pub fn forward_transform(map: &LatLongMap) -> HaarPyramid {
    let n = map.size_exp();
    let channels = map.channels();
    let mut pyr = HaarPyramid::zeros(n, channels).expect("map invariants imply valid pyramid");
    for ch in 0..channels {
        let mut approx = map.channel(ch).to_vec();
        let mut side = map.side();
        for m in (1..=n).rev() {
            let l = (m - 1) as usize;
            let half = side / 2;
            let plane = half * half;
            let lev = &mut pyr.levels[l];
            let norm = 1.0 / (4.0 * (1u64 << l) as f64);
            let mut parent = vec![0.0; plane];
            for rr in 0..half {
                for cc in 0..half {
                    let tl = approx[(2 * rr) * side + 2 * cc];
                    let tr = approx[(2 * rr) * side + 2 * cc + 1];
                    let bl = approx[(2 * rr + 1) * side + 2 * cc];
                    let br = approx[(2 * rr + 1) * side + 2 * cc + 1];
                    parent[rr * half + cc] = 0.25 * (tl + tr + bl + br);
                    let i = ch * plane + rr * half + cc;
                    lev.h[i] = (tl - tr + bl - br) * norm;
                    lev.v[i] = (tl + tr - bl - br) * norm;
                    lev.d[i] = (tl - tr - bl + br) * norm;
                }
            }
            approx = parent;
            side = half;
        }
        pyr.scaling[ch] = approx[0];
    }
    pyr
}

/// Exact synthesis back to the sample grid; linear in the coefficients.
pub fn inverse_transform(pyr: &HaarPyramid) -> Result<LatLongMap> {
    pyr.validate()?;
    let n = pyr.size_exp;
    let mut out = LatLongMap::zeros(n, pyr.channels)?;
    for ch in 0..pyr.channels {
        let approx = synthesize_approximation(pyr, ch, n as usize);
        out.channel_mut(ch).copy_from_slice(&approx);
    }
    Ok(out)
}

/// Reconstructs the level-`target` approximation grid A_target (2^t x 2^t)
/// of one channel from the scaling coefficient and detail levels < target.
pub fn synthesize_approximation(pyr: &HaarPyramid, ch: usize, target: usize) -> Vec<f64> {
    let mut approx = vec![pyr.scaling[ch]];
    let mut side = 1usize;
    for l in 0..target.min(pyr.size_exp as usize) {
        let lev = &pyr.levels[l];
        let plane = side * side;
        let next = 2 * side;
        let mut fine = vec![0.0; next * next];
        let amp = (1u64 << l) as f64;
        for r in 0..side {
            for c in 0..side {
                let a = approx[r * side + c];
                let i = ch * plane + r * side + c;
                let h = lev.h[i] * amp;
                let v = lev.v[i] * amp;
                let d = lev.d[i] * amp;
                fine[(2 * r) * next + 2 * c] = a + h + v + d;
                fine[(2 * r) * next + 2 * c + 1] = a - h + v - d;
                fine[(2 * r + 1) * next + 2 * c] = a + h - v - d;
                fine[(2 * r + 1) * next + 2 * c + 1] = a - h - v + d;
            }
        }
        approx = fine;
        side = next;
    }
    approx
}

/// Wavelet type within a square, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WaveletType {
    Horizontal = 0,
    Vertical = 1,
    Diagonal = 2,
}

impl WaveletType {
    pub const ALL: [WaveletType; 3] = [
        WaveletType::Horizontal,
        WaveletType::Vertical,
        WaveletType::Diagonal,
    ];
}

/// Identifies one basis function of a 2^n x 2^n decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisIndex {
    Scaling,
    Wavelet {
        level: u32,
        row: u32,
        col: u32,
        ty: WaveletType,
    },
}

impl BasisIndex {
    /// Linear ordinal: 0 is scaling, then per level ascending, per type
    /// (h, v, d), row-major — the same order as the `HAAR1` file layout.
    pub fn ordinal(&self) -> u64 {
        match *self {
            BasisIndex::Scaling => 0,
            BasisIndex::Wavelet {
                level,
                row,
                col,
                ty,
            } => {
                let plane = 1u64 << (2 * level);
                plane * (1 + ty as u64) + ((row as u64) << level) + col as u64
            }
        }
    }

    pub fn from_ordinal(ord: u64, size_exp: u32) -> Result<Self> {
        if ord == 0 {
            return Ok(BasisIndex::Scaling);
        }
        if ord >= 1u64 << (2 * size_exp) {
            return Err(Error::BadBasisIndex(ord));
        }
        let level = (63 - ord.leading_zeros()) / 2;
        let plane = 1u64 << (2 * level);
        let rem = ord - plane;
        let ty = match rem / plane {
            0 => WaveletType::Horizontal,
            1 => WaveletType::Vertical,
            _ => WaveletType::Diagonal,
        };
        let pos = rem % plane;
        Ok(BasisIndex::Wavelet {
            level,
            row: (pos >> level) as u32,
            col: (pos & ((1u64 << level) - 1)) as u32,
            ty,
        })
    }

    pub fn level(&self) -> Option<u32> {
        match self {
            BasisIndex::Scaling => None,
            BasisIndex::Wavelet { level, .. } => Some(*level),
        }
    }
}

/// Top-k nonlinear approximation of one pyramid: per channel, the k
/// largest-magnitude coefficients (the scaling coefficient is always
/// retained when nonzero and counts toward k). Ties break by ascending
/// basis ordinal. Zero coefficients are never stored.
#[derive(Debug, Clone)]
pub struct SparseCoeffs {
    pub size_exp: u32,
    pub channels: usize,
    /// Per channel: (ordinal, value) pairs sorted by ascending ordinal.
    pub coeffs: Vec<Vec<(u64, f64)>>,
}

impl SparseCoeffs {
    /// Dense reconstruction of the retained coefficients.
    pub fn to_pyramid(&self) -> Result<HaarPyramid> {
        let mut pyr = HaarPyramid::zeros(self.size_exp, self.channels)?;
        for (ch, list) in self.coeffs.iter().enumerate() {
            for &(ord, val) in list {
                match BasisIndex::from_ordinal(ord, self.size_exp)? {
                    BasisIndex::Scaling => pyr.scaling[ch] = val,
                    BasisIndex::Wavelet {
                        level,
                        row,
                        col,
                        ty,
                    } => {
                        let side = 1usize << level;
                        let i = ch * side * side + row as usize * side + col as usize;
                        let lev = &mut pyr.levels[level as usize];
                        match ty {
                            WaveletType::Horizontal => lev.h[i] = val,
                            WaveletType::Vertical => lev.v[i] = val,
                            WaveletType::Diagonal => lev.d[i] = val,
                        }
                    }
                }
            }
        }
        Ok(pyr)
    }

    pub fn len(&self, ch: usize) -> usize {
        self.coeffs[ch].len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_empty())
    }
}

/// Selects the k largest-magnitude coefficients per channel.
pub fn truncate_top_k(pyr: &HaarPyramid, k: usize) -> Result<SparseCoeffs> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    let mut out = SparseCoeffs {
        size_exp: pyr.size_exp,
        channels: pyr.channels,
        coeffs: Vec::with_capacity(pyr.channels),
    };
    for ch in 0..pyr.channels {
        let mut entries: Vec<(u64, f64)> = Vec::with_capacity(pyr.coeff_count());
        for (l, lev) in pyr.levels.iter().enumerate() {
            let side = 1usize << l;
            let plane = side * side;
            for ty in WaveletType::ALL {
                let grid = match ty {
                    WaveletType::Horizontal => &lev.h,
                    WaveletType::Vertical => &lev.v,
                    WaveletType::Diagonal => &lev.d,
                };
                for r in 0..side {
                    for c in 0..side {
                        let val = grid[ch * plane + r * side + c];
                        if val != 0.0 {
                            let ord = BasisIndex::Wavelet {
                                level: l as u32,
                                row: r as u32,
                                col: c as u32,
                                ty,
                            }
                            .ordinal();
                            entries.push((ord, val));
                        }
                    }
                }
            }
        }
        entries.sort_unstable_by(|a, b| {
            b.1.abs()
                .partial_cmp(&a.1.abs())
                .expect("finite coefficients")
                .then(a.0.cmp(&b.0))
        });
        let mut budget = k;
        let mut kept: Vec<(u64, f64)> = Vec::with_capacity(k.min(entries.len() + 1));
        if pyr.scaling[ch] != 0.0 {
            kept.push((0, pyr.scaling[ch]));
            budget -= 1;
        }
        kept.extend(entries.into_iter().take(budget));
        kept.sort_unstable_by_key(|e| e.0);
        out.coeffs.push(kept);
    }
    Ok(out)
}

const HAAR_MAGIC: &[u8; 5] = b"HAAR1";

/// Writes the `HAAR1` binary layout: magic, size_exp (u32 LE), channels
/// (u32 LE), then per channel the f64 LE coefficients in order scaling,
/// levels ascending, types (h, v, d), row-major.
pub fn write_pyramid<W: Write>(pyr: &HaarPyramid, w: &mut W) -> std::io::Result<()> {
    w.write_all(HAAR_MAGIC)?;
    w.write_all(&pyr.size_exp.to_le_bytes())?;
    w.write_all(&(pyr.channels as u32).to_le_bytes())?;
    for ch in 0..pyr.channels {
        w.write_all(&pyr.scaling[ch].to_le_bytes())?;
        for (l, lev) in pyr.levels.iter().enumerate() {
            let plane = 1usize << (2 * l);
            for grid in [&lev.h, &lev.v, &lev.d] {
                for v in &grid[ch * plane..(ch + 1) * plane] {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

/// Reads the `HAAR1` layout written by [`write_pyramid`].
pub fn read_pyramid<R: Read>(r: &mut R) -> Result<HaarPyramid> {
    let mut magic = [0u8; 5];
    read_exact(r, &mut magic)?;
    if &magic != HAAR_MAGIC {
        return Err(Error::MalformedPyramid("bad magic, expected HAAR1".into()));
    }
    let mut quad = [0u8; 4];
    read_exact(r, &mut quad)?;
    let size_exp = u32::from_le_bytes(quad);
    read_exact(r, &mut quad)?;
    let channels = u32::from_le_bytes(quad) as usize;
    if size_exp < 1 || size_exp > 16 {
        return Err(Error::MalformedPyramid(format!("size_exp {size_exp}")));
    }
    let mut pyr = HaarPyramid::zeros(size_exp, channels)?;
    let mut oct = [0u8; 8];
    for ch in 0..channels {
        read_exact(r, &mut oct)?;
        pyr.scaling[ch] = f64::from_le_bytes(oct);
        for l in 0..size_exp as usize {
            let plane = 1usize << (2 * l);
            let lev = &mut pyr.levels[l];
            for grid in [&mut lev.h, &mut lev.v, &mut lev.d] {
                for i in 0..plane {
                    read_exact(r, &mut oct)?;
                    grid[ch * plane + i] = f64::from_le_bytes(oct);
                }
            }
        }
    }
    pyr.validate()?;
    Ok(pyr)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::MalformedPyramid(format!("truncated pyramid file: {e}")))
}

/// Tabulates one basis function as a map (coefficient 1, everything else 0).
pub fn basis_map(size_exp: u32, idx: BasisIndex) -> Result<LatLongMap> {
    let sparse = SparseCoeffs {
        size_exp,
        channels: 1,
        coeffs: vec![vec![(idx.ordinal(), 1.0)]],
    };
    inverse_transform(&sparse.to_pyramid()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::LatLongMap;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_map(size_exp: u32, channels: usize, seed: u64) -> LatLongMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = 1usize << size_exp;
        let data = (0..channels * side * side)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        LatLongMap::from_samples(size_exp, channels, data).unwrap()
    }

    #[test]
    fn two_by_two_example() {
        let m = LatLongMap::from_samples(1, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = forward_transform(&m);
        assert_eq!(p.scaling[0], 2.5);
        assert_eq!(p.levels[0].h[0], -0.5);
        assert_eq!(p.levels[0].v[0], -1.0);
        assert_eq!(p.levels[0].d[0], 0.0);
        let back = inverse_transform(&p).unwrap();
        assert_eq!(back.samples(), m.samples());
    }

    #[test]
    fn constant_map_is_pure_scaling() {
        for n in 1..=4 {
            let m = LatLongMap::from_fn(n, 1, |_, _, _| 7.25).unwrap();
            let p = forward_transform(&m);
            assert_eq!(p.scaling[0], 7.25);
            for lev in &p.levels {
                assert!(lev.is_zero(), "n={n}");
            }
        }
    }

    #[test]
    fn single_diagonal_synthesis() {
        let m = basis_map(
            1,
            BasisIndex::Wavelet {
                level: 0,
                row: 0,
                col: 0,
                ty: WaveletType::Diagonal,
            },
        )
        .unwrap();
        assert_eq!(m.samples(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn zero_pyramid_inverts_to_zero() {
        let p = HaarPyramid::zeros(3, 1).unwrap();
        let m = inverse_transform(&p).unwrap();
        assert!(m.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn roundtrip_and_parseval_up_to_512() {
        for n in [1u32, 3, 5, 9] {
            let m = random_map(n, 1, 42 + n as u64);
            let p = forward_transform(&m);
            let back = inverse_transform(&p).unwrap();
            let peak = m.peak_abs();
            let worst = m
                .samples()
                .iter()
                .zip(back.samples())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(worst / peak < 1e-12, "n={n} roundtrip err {worst}");

            let ms: f64 =
                m.samples().iter().map(|v| v * v).sum::<f64>() / m.samples().len() as f64;
            let energy = p.energy()[0];
            assert!(
                (ms - energy).abs() / ms.max(1e-300) < 1e-9,
                "n={n} parseval {ms} vs {energy}"
            );
        }
    }

    #[test]
    fn transform_is_linear() {
        let m1 = random_map(3, 1, 1);
        let m2 = random_map(3, 1, 2);
        let (a, b) = (0.7, -1.3);
        let combo = LatLongMap::from_samples(
            3,
            1,
            m1.samples()
                .iter()
                .zip(m2.samples())
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
        .unwrap();
        let pc = forward_transform(&combo);
        let p1 = forward_transform(&m1);
        let p2 = forward_transform(&m2);
        for l in 0..3 {
            for i in 0..p1.levels[l].h.len() {
                for (gc, g1, g2) in [
                    (&pc.levels[l].h, &p1.levels[l].h, &p2.levels[l].h),
                    (&pc.levels[l].v, &p1.levels[l].v, &p2.levels[l].v),
                    (&pc.levels[l].d, &p1.levels[l].d, &p2.levels[l].d),
                ] {
                    assert!((gc[i] - (a * g1[i] + b * g2[i])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ordinal_encoding_roundtrip() {
        for n in [1u32, 2, 3] {
            let total = 1u64 << (2 * n);
            for ord in 0..total {
                let idx = BasisIndex::from_ordinal(ord, n).unwrap();
                assert_eq!(idx.ordinal(), ord, "n={n}");
            }
            assert!(BasisIndex::from_ordinal(total, n).is_err());
        }
    }

    #[test]
    fn top_k_scaling_only() {
        let m = random_map(3, 1, 9);
        let p = forward_transform(&m);
        let s = truncate_top_k(&p, 1).unwrap();
        assert_eq!(s.coeffs[0].len(), 1);
        assert_eq!(s.coeffs[0][0].0, 0);
        let back = inverse_transform(&s.to_pyramid().unwrap()).unwrap();
        for v in back.samples() {
            assert!((v - p.scaling[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn top_k_full_is_lossless() {
        let m = random_map(3, 1, 10);
        let p = forward_transform(&m);
        let s = truncate_top_k(&p, p.coeff_count()).unwrap();
        let back = inverse_transform(&s.to_pyramid().unwrap()).unwrap();
        let mse = back.mse(&m).unwrap();
        assert!(mse < 1e-24, "mse {mse}");
        assert!(truncate_top_k(&p, 0).is_err());
    }

    #[test]
    fn top_k_matches_exhaustive_best_k() {
        // Independent oracle: collect every coefficient, sort by magnitude
        // (ties by ordinal), and compute the best-k MSE via Parseval as the
        // sum of squares of the dropped coefficients.
        let m = random_map(4, 1, 11);
        let p = forward_transform(&m);
        let k = 64;
        let mut all: Vec<(u64, f64)> = vec![(0, p.scaling[0])];
        for ord in 1..p.coeff_count() as u64 {
            let idx = BasisIndex::from_ordinal(ord, 4).unwrap();
            if let BasisIndex::Wavelet {
                level,
                row,
                col,
                ty,
            } = idx
            {
                all.push((
                    ord,
                    p.detail(level as usize, ty, 0, row as usize, col as usize),
                ));
            }
        }
        // Force-keep scaling first, then by magnitude.
        let scaling = all.remove(0);
        all.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap().then(a.0.cmp(&b.0)));
        let dropped_sq: f64 = all[k - 1..].iter().map(|e| e.1 * e.1).sum();
        let _ = scaling;

        let s = truncate_top_k(&p, k).unwrap();
        let back = inverse_transform(&s.to_pyramid().unwrap()).unwrap();
        let mse = back.mse(&m).unwrap();
        assert!(
            (mse - dropped_sq).abs() <= 1e-12 * dropped_sq.max(1e-12),
            "mse {mse} vs parseval-of-dropped {dropped_sq}"
        );
    }

    #[test]
    fn truncation_mse_monotone_in_k() {
        let m = random_map(4, 1, 12);
        let p = forward_transform(&m);
        let mut prev = f64::INFINITY;
        for k in [1usize, 2, 4, 8, 16, 64, 128, 256] {
            let s = truncate_top_k(&p, k).unwrap();
            let back = inverse_transform(&s.to_pyramid().unwrap()).unwrap();
            let mse = back.mse(&m).unwrap();
            assert!(mse <= prev + 1e-15, "k={k}: {mse} > {prev}");
            prev = mse;
        }
    }

    #[test]
    fn haar1_io_bit_exact() {
        let m = random_map(3, 3, 13);
        let p = forward_transform(&m);
        let mut buf = Vec::new();
        write_pyramid(&p, &mut buf).unwrap();
        let q = read_pyramid(&mut buf.as_slice()).unwrap();
        assert_eq!(p, q);

        // Corrupt magic.
        buf[0] = b'X';
        assert!(read_pyramid(&mut buf.as_slice()).is_err());
        // Truncated payload.
        buf[0] = b'H';
        let short = &buf[..buf.len() - 9];
        assert!(read_pyramid(&mut &short[..]).is_err());
    }
}

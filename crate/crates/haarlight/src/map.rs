//! Square latitude-longitude grids of samples on the unit sphere.
//!
//! A map of `size_exp` n holds a 2^n x 2^n grid. Rows index the elevation
//! angle theta in [0, pi] (row r is centered at pi*(r+0.5)/2^n, row 0 at the
//! north pole), columns index the azimuth phi in [0, 2*pi) (column c centered
//! at 2*pi*(c+0.5)/2^n). The azimuth axis is periodic; crossing a pole lands
//! on the antipodal column of the same row band.

use crate::error::{Error, Result};

pub const PI: f64 = std::f64::consts::PI;
pub const TAU: f64 = std::f64::consts::TAU;

/// A function on the sphere sampled on a square lat-long grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LatLongMap {
    size_exp: u32,
    channels: usize,
    /// Channel-major, then row-major: `data[ch * 4^n + r * 2^n + c]`.
    data: Vec<f64>,
}

impl LatLongMap {
    /// Zero-filled map; `size_exp >= 1`, `channels` 1 or 3.
    pub fn zeros(size_exp: u32, channels: usize) -> Result<Self> {
        if size_exp < 1 {
            return Err(Error::NonPowerOfTwo {
                width: 1 << size_exp,
                height: 1 << size_exp,
            });
        }
        if channels != 1 && channels != 3 {
            return Err(Error::BadChannels(channels));
        }
        let side = 1usize << size_exp;
        Ok(LatLongMap {
            size_exp,
            channels,
            data: vec![0.0; channels * side * side],
        })
    }

    /// Wraps an existing sample buffer (channel-major, row-major).
    pub fn from_samples(size_exp: u32, channels: usize, data: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(size_exp, channels)?;
        if data.len() != m.data.len() {
            return Err(Error::BadSampleCount {
                got: data.len(),
                expected: m.data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample(i));
        }
        m.data = data;
        Ok(m)
    }

    /// Builds a map by evaluating `f(theta, phi, channel)` at texel centers.
    pub fn from_fn(
        size_exp: u32,
        channels: usize,
        mut f: impl FnMut(f64, f64, usize) -> f64,
    ) -> Result<Self> {
        let mut m = Self::zeros(size_exp, channels)?;
        let side = m.side();
        for ch in 0..channels {
            for r in 0..side {
                let theta = m.theta_center(r);
                for c in 0..side {
                    let phi = m.phi_center(c);
                    let v = f(theta, phi, ch);
                    m.data[ch * side * side + r * side + c] = v;
                }
            }
        }
        Ok(m)
    }

    pub fn size_exp(&self) -> u32 {
        self.size_exp
    }

    /// Grid side length 2^n.
    pub fn side(&self) -> usize {
        1usize << self.size_exp
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[f64] {
        &self.data
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Samples of one channel as a contiguous row-major plane.
    pub fn channel(&self, ch: usize) -> &[f64] {
        let plane = self.side() * self.side();
        &self.data[ch * plane..(ch + 1) * plane]
    }

    pub fn channel_mut(&mut self, ch: usize) -> &mut [f64] {
        let plane = self.side() * self.side();
        &mut self.data[ch * plane..(ch + 1) * plane]
    }

    pub fn get(&self, ch: usize, r: usize, c: usize) -> f64 {
        self.data[ch * self.side() * self.side() + r * self.side() + c]
    }

    pub fn set(&mut self, ch: usize, r: usize, c: usize, v: f64) {
        let side = self.side();
        self.data[ch * side * side + r * side + c] = v;
    }

    /// Elevation of the row center.
    pub fn theta_center(&self, r: usize) -> f64 {
        PI * (r as f64 + 0.5) / self.side() as f64
    }

    /// Azimuth of the column center.
    pub fn phi_center(&self, c: usize) -> f64 {
        TAU * (c as f64 + 0.5) / self.side() as f64
    }

    /// Bilinear sample at (theta, phi) with azimuth wrap and pole reflection.
    pub fn sample_bilinear(&self, ch: usize, theta: f64, phi: f64) -> f64 {
        sample_grid(
            self.channel(ch),
            self.side(),
            theta,
            phi,
            GridStagger::CellCenter,
            Parity::Even,
        )
    }

    /// Largest absolute sample value over all channels.
    pub fn peak_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Mean squared difference against another map of identical shape.
    pub fn mse(&self, other: &LatLongMap) -> Result<f64> {
        if self.size_exp != other.size_exp {
            return Err(Error::SizeMismatch(self.size_exp, other.size_exp));
        }
        if self.channels != other.channels {
            return Err(Error::ChannelMismatch(self.channels, other.channels));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sum / self.data.len() as f64)
    }
}

/// Where grid nodes sit relative to the cell lattice of a 2^L x 2^L level.
///
/// `CellCenter` nodes are at ((r+0.5)*dt, (c+0.5)*dp); the staggered variants
/// shift one or both axes by half a cell, which is where first differences of
/// the approximation grid live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridStagger {
    CellCenter,
    /// Theta-staggered: nodes at ((r+1)*dt, (c+0.5)*dp).
    ThetaEdge,
    /// Phi-staggered: nodes at ((r+0.5)*dt, (c+1)*dp).
    PhiEdge,
    /// Staggered on both axes: nodes at ((r+1)*dt, (c+1)*dp).
    Corner,
}

impl GridStagger {
    fn offsets(self) -> (f64, f64) {
        match self {
            GridStagger::CellCenter => (0.5, 0.5),
            GridStagger::ThetaEdge => (1.0, 0.5),
            GridStagger::PhiEdge => (0.5, 1.0),
            GridStagger::Corner => (1.0, 1.0),
        }
    }
}

/// Sign behaviour when a sample reflects across a pole.
///
/// Scalar fields are even: f(-theta, phi) = f(theta, phi + pi). Fields with
/// one theta derivative are odd and pick up a sign on reflection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    OddTheta,
}

/// Bilinear interpolation over a (possibly staggered) lat-long grid.
pub fn sample_grid(
    grid: &[f64],
    side: usize,
    theta: f64,
    phi: f64,
    stagger: GridStagger,
    parity: Parity,
) -> f64 {
    bilinear_stencil(side, theta, phi, stagger, parity).apply(grid)
}

/// Precomputed bilinear footprint: node indices with signed weights.
/// Building it once and applying it per channel keeps multi-channel
/// resampling off the reflection/wrap logic.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    len: usize,
    idx: [u32; 8],
    w: [f64; 8],
}

impl Stencil {
    #[inline]
    pub fn apply(&self, grid: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len {
            acc += self.w[i] * grid[self.idx[i] as usize];
        }
        acc
    }

    fn push(&mut self, idx: usize, w: f64) {
        self.idx[self.len] = idx as u32;
        self.w[self.len] = w;
        self.len += 1;
    }
}

/// Builds the bilinear footprint at (theta, phi) for a staggered grid.
pub fn bilinear_stencil(
    side: usize,
    theta: f64,
    phi: f64,
    stagger: GridStagger,
    parity: Parity,
) -> Stencil {
    let (t_off, p_off) = stagger.offsets();
    let dt = PI / side as f64;
    let dp = TAU / side as f64;
    let u = theta / dt - t_off;
    let v = phi / dp - p_off;
    let r0 = u.floor();
    let c0 = v.floor();
    let ft = u - r0;
    let fp = v - c0;
    let r0 = r0 as i64;
    let c0 = c0 as i64;
    let mut st = Stencil {
        len: 0,
        idx: [0; 8],
        w: [0.0; 8],
    };
    for (dr, wt) in [(0i64, 1.0 - ft), (1i64, ft)] {
        if wt == 0.0 {
            continue;
        }
        for (dc, wp) in [(0i64, 1.0 - fp), (1i64, fp)] {
            if wp == 0.0 {
                continue;
            }
            push_node(&mut st, side, r0 + dr, c0 + dc, t_off, parity, wt * wp);
        }
    }
    st
}

/// Resolves one (possibly out-of-range) node into stencil entries.
///
/// For edge-staggered grids the reflected lattice is misaligned by one node;
/// the virtual node sitting exactly on the pole is synthesized with the
/// odd/even extension so interpolation stays continuous across it.
fn push_node(
    st: &mut Stencil,
    side: usize,
    row: i64,
    col: i64,
    theta_offset: f64,
    parity: Parity,
    weight: f64,
) {
    let side_i = side as i64;
    if theta_offset == 1.0 && row == -1 {
        // Node row -1 sits at theta = 0; symmetrize from the nearest ring.
        let sign = match parity {
            Parity::OddTheta => -1.0,
            Parity::Even => 1.0,
        };
        push_resolved(st, side, 0, col, theta_offset, parity, 0.5 * weight);
        push_resolved(
            st,
            side,
            0,
            col + side_i / 2,
            theta_offset,
            parity,
            0.5 * weight * sign,
        );
        return;
    }
    push_resolved(st, side, row, col, theta_offset, parity, weight);
}

fn push_resolved(
    st: &mut Stencil,
    side: usize,
    row: i64,
    col: i64,
    theta_offset: f64,
    parity: Parity,
    weight: f64,
) {
    let side_i = side as i64;
    let mut r = row;
    let mut c = col;
    let mut sign = 1.0;
    // Reflection about theta = 0 maps node theta -> -theta, i.e. index
    // r -> -r - 2*off; about theta = pi it maps r -> 2*side - r - 2*off,
    // both with a half-turn azimuth shift. Two reflections restore the
    // original, so loop until in range.
    let two_off = (2.0 * theta_offset) as i64; // 1 for cell centers, 2 for edges
    let mut guard = 0;
    while r < 0 || r >= side_i {
        if r < 0 {
            r = -r - two_off;
        } else {
            r = 2 * side_i - r - two_off;
        }
        c += side_i / 2;
        if parity == Parity::OddTheta {
            sign = -sign;
        }
        guard += 1;
        if guard > 8 {
            r = r.clamp(0, side_i - 1);
            break;
        }
    }
    if r < 0 || r >= side_i {
        r = r.clamp(0, side_i - 1);
    }
    let cc = c.rem_euclid(side_i) as usize;
    st.push(r as usize * side + cc, sign * weight);
}

//! Procedural test fixtures shared by the CLI verification commands, the
//! benchmark harness, and the test suites: smooth spherical functions,
//! synthetic environment maps, and seeded random rotations.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::map::{LatLongMap, PI, TAU};
use crate::sphere::{dir_from_angles, RotationSpec, Vec3};

/// Normalized lobe `max(0, d . axis)^exponent` around the given axis.
pub fn phong_lobe_map(size_exp: u32, axis_theta: f64, axis_phi: f64, exponent: f64) -> LatLongMap {
    let axis = dir_from_angles(axis_theta, axis_phi);
    LatLongMap::from_fn(size_exp, 1, |t, p, _| {
        let d = dir_from_angles(t, p);
        dot(d, axis).max(0.0).powf(exponent)
    })
    .expect("valid shape")
}

/// Random blend of the nine real spherical harmonics of bands 0..2 —
/// a smooth band-limited test function.
pub fn band_limited_map(size_exp: u32, seed: u64, terms: usize) -> LatLongMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<(usize, f64)> = (0..9usize)
        .map(|i| (i, rng.random_range(-1.0..1.0f64)))
        .collect();
    picks.shuffle(&mut rng);
    picks.truncate(terms.min(9));
    LatLongMap::from_fn(size_exp, 1, |t, p, _| {
        let d = dir_from_angles(t, p);
        picks.iter().map(|&(i, w)| w * sh_basis(i, d)).sum::<f64>()
    })
    .expect("valid shape")
}

/// Real spherical harmonics of bands 0..2 (graphics normalization).
fn sh_basis(i: usize, d: Vec3) -> f64 {
    let (x, y, z) = (d[0], d[1], d[2]);
    match i {
        0 => 0.282_095,
        1 => 0.488_603 * y,
        2 => 0.488_603 * z,
        3 => 0.488_603 * x,
        4 => 1.092_548 * x * y,
        5 => 1.092_548 * y * z,
        6 => 0.315_392 * (3.0 * z * z - 1.0),
        7 => 1.092_548 * x * z,
        _ => 0.546_274 * (x * x - y * y),
    }
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Three visually distinct synthetic environments, peak-normalized to 1.
/// `variant` is taken modulo 3: a sky gradient with a sun disc, a set of
/// colored blobs, and a soft checker.
pub fn synthetic_environment(size_exp: u32, variant: usize, seed: u64) -> LatLongMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (variant as u64).wrapping_mul(0x9E37_79B9));
    let map = match variant % 3 {
        0 => {
            let sun = dir_from_angles(0.9, 1.7);
            LatLongMap::from_fn(size_exp, 3, |t, p, ch| {
                let d = dir_from_angles(t, p);
                let horizon = (1.0 - d[1].abs()).powi(2);
                let sky = match ch {
                    0 => 0.25 + 0.15 * horizon,
                    1 => 0.35 + 0.20 * horizon,
                    _ => 0.55 + 0.25 * horizon,
                };
                let disc = dot(d, sun).max(0.0).powi(64);
                sky + 3.0 * disc
            })
        }
        1 => {
            let blobs: Vec<(Vec3, [f64; 3], f64)> = (0..6)
                .map(|_| {
                    let t = rng.random_range(0.2..PI - 0.2);
                    let p = rng.random_range(0.0..TAU);
                    let color = [
                        rng.random_range(0.2..1.0),
                        rng.random_range(0.2..1.0),
                        rng.random_range(0.2..1.0),
                    ];
                    (dir_from_angles(t, p), color, rng.random_range(8.0..40.0))
                })
                .collect();
            LatLongMap::from_fn(size_exp, 3, |t, p, ch| {
                let d = dir_from_angles(t, p);
                0.05 + blobs
                    .iter()
                    .map(|(b, c, k)| c[ch] * dot(d, *b).max(0.0).powf(*k))
                    .sum::<f64>()
            })
        }
        _ => LatLongMap::from_fn(size_exp, 3, |t, p, ch| {
            let bands = ((4.0 * t).sin() * (3.0 * p).cos()).max(0.0);
            0.1 + match ch {
                0 => 0.9 * bands,
                1 => 0.6 * bands + 0.2 * (t / PI),
                _ => 0.3 * bands + 0.4 * (1.0 - t / PI),
            }
        }),
    }
    .expect("valid shape");
    normalize_peak(map)
}

fn normalize_peak(mut map: LatLongMap) -> LatLongMap {
    let peak = map.peak_abs();
    if peak > 0.0 {
        for v in map.samples_mut() {
            *v /= peak;
        }
    }
    map
}

/// Uniform random rotation over SO(3) via uniform quaternions.
pub fn random_rotation_uniform(rng: &mut impl Rng) -> RotationSpec {
    let u1: f64 = rng.random_range(0.0..1.0);
    let u2: f64 = rng.random_range(0.0..TAU);
    let u3: f64 = rng.random_range(0.0..TAU);
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (qx, qy, qz, qw) = (a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos());
    let (x2, y2, z2) = (qx * qx, qy * qy, qz * qz);
    let m = [
        [
            1.0 - 2.0 * (y2 + z2),
            2.0 * (qx * qy - qz * qw),
            2.0 * (qx * qz + qy * qw),
        ],
        [
            2.0 * (qx * qy + qz * qw),
            1.0 - 2.0 * (x2 + z2),
            2.0 * (qy * qz - qx * qw),
        ],
        [
            2.0 * (qx * qz - qy * qw),
            2.0 * (qy * qz + qx * qw),
            1.0 - 2.0 * (x2 + y2),
        ],
    ];
    RotationSpec::from_matrix(m)
}

/// PSNR in dB against a reference peak, capped at 300 for identical inputs.
pub fn psnr_db(peak: f64, mse: f64) -> f64 {
    if mse <= 0.0 || peak <= 0.0 {
        return 300.0;
    }
    (20.0 * (peak / mse.sqrt()).log10()).min(300.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lobe_peaks_on_axis() {
        let m = phong_lobe_map(5, 1.1, 0.9, 20.0);
        let mut best = (0usize, 0usize, f64::MIN);
        for r in 0..m.side() {
            for c in 0..m.side() {
                let v = m.get(0, r, c);
                if v > best.2 {
                    best = (r, c, v);
                }
            }
        }
        let t = m.theta_center(best.0);
        let p = m.phi_center(best.1);
        assert!((t - 1.1).abs() < 0.15 && (p - 0.9).abs() < 0.15);
    }

    #[test]
    fn rotations_are_uniformish_and_valid() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut mean_y = 0.0;
        let n = 500;
        for _ in 0..n {
            let r = random_rotation_uniform(&mut rng);
            assert!(r.orthonormality_error() < 1e-12);
            mean_y += r.matrix()[1][1];
        }
        // Column means of uniform rotations concentrate near zero.
        assert!((mean_y / n as f64).abs() < 0.1);
    }

    #[test]
    fn environments_are_distinct_and_normalized() {
        for v in 0..3 {
            let e = synthetic_environment(4, v, 7);
            assert_eq!(e.channels(), 3);
            assert!((e.peak_abs() - 1.0).abs() < 1e-12);
        }
        let a = synthetic_environment(4, 0, 7);
        let b = synthetic_environment(4, 1, 7);
        assert!(a.mse(&b).unwrap() > 1e-3);
    }
}

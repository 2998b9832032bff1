//! Spherical geometry: direction/angle conversion, the rotation maps
//! Theta(theta, phi) and Phi(theta, phi), their analytic Jacobians, the
//! canonical Y–X–Y decomposition, and the spatial-domain rotation oracle.
//!
//! Conventions (fixed once, used everywhere):
//! * right-handed frame, Y up, Z depth; a direction is
//!   p(theta, phi) = (sin t sin p, cos t, sin t cos p);
//! * active elementary rotations with -sin above the diagonal:
//!   Rx(a) = [[1,0,0],[0,ca,-sa],[0,sa,ca]],
//!   Ry(b) = [[cb,0,-sb],[0,1,0],[sb,0,cb]],
//!   Rz(g) = [[cg,-sg,0],[sg,cg,0],[0,0,1]];
//! * Euler composition R = Rz Ry Rx;
//! * the angle map of R sends output coordinates to lookup coordinates:
//!   rotated(theta, phi) = original(Theta, Phi) with
//!   Theta = acos(R2 . p), Phi = atan2(R1 . p, R3 . p).
//!
//! Under these choices a pure Ry(b) shifts azimuth: Phi = (phi - b) mod 2pi.

use crate::error::{Error, Result};
use crate::map::{LatLongMap, PI, TAU};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Colatitude band around each pole inside which the angle-map Jacobian is
/// treated as degenerate and clamped.
pub const EPS_POLE: f64 = 1e-6;

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    m
}

pub fn mat_transpose(a: &Mat3) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[j][i];
        }
    }
    m
}

pub fn mat_apply(a: &Mat3, v: Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

pub fn rot_y(b: f64) -> Mat3 {
    let (s, c) = b.sin_cos();
    [[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]]
}

pub fn rot_z(g: f64) -> Mat3 {
    let (s, c) = g.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// A rotation together with its canonical azimuth–elevation–azimuth split.
#[derive(Debug, Clone, Copy)]
pub struct RotationSpec {
    /// Euler angles (radians) about X, Y, Z for `R = Rz Ry Rx`; when the
    /// spec was built from a raw matrix these are the extracted angles.
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    matrix: Mat3,
}

impl RotationSpec {
    pub fn identity() -> Self {
        Self::from_euler(0.0, 0.0, 0.0)
    }

    /// From Euler angles about X, Y, Z (radians), composed as R = Rz Ry Rx.
    pub fn from_euler(alpha: f64, beta: f64, gamma: f64) -> Self {
        let matrix = mat_mul(&rot_z(gamma), &mat_mul(&rot_y(beta), &rot_x(alpha)));
        RotationSpec {
            alpha,
            beta,
            gamma,
            matrix,
        }
    }

    /// Wraps an orthonormal matrix; Euler angles are extracted for display.
    pub fn from_matrix(matrix: Mat3) -> Self {
        // R = Rz(g) Ry(b) Rx(a) leaves R[2][0] = sin b.
        let sb = matrix[2][0].clamp(-1.0, 1.0);
        let beta = sb.asin();
        let (alpha, gamma) = if sb.abs() < 1.0 - 1e-12 {
            (
                matrix[2][1].atan2(matrix[2][2]),
                matrix[1][0].atan2(matrix[0][0]),
            )
        } else {
            // Gimbal: fold everything into alpha.
            ((-matrix[0][1]).atan2(matrix[1][1]), 0.0)
        };
        RotationSpec {
            alpha,
            beta,
            gamma,
            matrix,
        }
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.matrix
    }

    pub fn inverse(&self) -> Self {
        Self::from_matrix(mat_transpose(&self.matrix))
    }

    /// Matrix product; as angle maps, `a.compose(b)` applies b's map first.
    pub fn compose(&self, other: &RotationSpec) -> Self {
        Self::from_matrix(mat_mul(&self.matrix, &other.matrix))
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.matrix[i][j] - want).abs());
            }
        }
        worst <= tol
    }

    /// Frobenius deviation from orthonormality plus determinant error.
    pub fn orthonormality_error(&self) -> f64 {
        let t = mat_transpose(&self.matrix);
        let g = mat_mul(&t, &self.matrix);
        let mut err = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                err = err.max((g[i][j] - want).abs());
            }
        }
        let m = &self.matrix;
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        err.max((det - 1.0).abs())
    }

    /// Y–X–Y decomposition: R = Ry(pre) Rx(elev) Ry(post), elev in [0, pi].
    /// Gimbal-degenerate cases (elev in {0, pi}) return post = 0.
    pub fn canonical_decompose(&self) -> (f64, f64, f64) {
        let m = &self.matrix;
        let ce = m[1][1].clamp(-1.0, 1.0);
        let elev = ce.acos();
        let se = elev.sin();
        if se > 1e-9 {
            // M01 = -sin(pre) sin(e), M21 = cos(pre) sin(e)
            // M10 = -sin(e) sin(post), M12 = -sin(e) cos(post)
            let pre = (-m[0][1]).atan2(m[2][1]);
            let post = (-m[1][0]).atan2(-m[1][2]);
            (pre, elev, post)
        } else if ce > 0.0 {
            // R = Ry(pre + post): fold into pre.
            ((-m[0][2]).atan2(m[0][0]), 0.0, 0.0)
        } else {
            (m[0][2].atan2(m[0][0]), PI, 0.0)
        }
    }
}

/// (x, y, z) = (sin t sin p, cos t, sin t cos p).
pub fn dir_from_angles(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * sp, ct, st * cp]
}

/// Inverse of [`dir_from_angles`]; phi is reduced to [0, 2pi).
pub fn angles_from_dir(d: Vec3) -> (f64, f64) {
    let theta = d[1].clamp(-1.0, 1.0).acos();
    let phi = if d[0] == 0.0 && d[2] == 0.0 {
        0.0
    } else {
        d[0].atan2(d[2]).rem_euclid(TAU)
    };
    (theta, phi)
}

/// The lookup map: angles of `R p(theta, phi)`; at the poles the azimuth is
/// canonically 0, never NaN.
pub fn rotate_angles(rot: &RotationSpec, theta: f64, phi: f64) -> (f64, f64) {
    let p = dir_from_angles(theta, phi);
    let q = mat_apply(rot.matrix(), p);
    let y = q[1].clamp(-1.0, 1.0);
    let tp = y.acos();
    // sin(Theta)^2 = x^2 + z^2; below float noise the point is a pole.
    let denom = q[0] * q[0] + q[2] * q[2];
    if denom < 1e-18 {
        (tp, 0.0)
    } else {
        (tp, q[0].atan2(q[2]).rem_euclid(TAU))
    }
}

/// First and mixed second partials of the angle maps at one point.
#[derive(Debug, Clone, Copy)]
pub struct JacobianAtPoint {
    /// dTheta/dtheta
    pub tt: f64,
    /// dTheta/dphi
    pub tp: f64,
    /// dPhi/dtheta
    pub pt: f64,
    /// dPhi/dphi
    pub pp: f64,
    /// d2Theta/(dtheta dphi)
    pub ttp: f64,
    /// d2Phi/(dtheta dphi)
    pub ptp: f64,
    /// True when the image point fell within [`EPS_POLE`] of a pole and the
    /// derivatives were clamped.
    pub degenerate: bool,
}

impl JacobianAtPoint {
    pub const IDENTITY: JacobianAtPoint = JacobianAtPoint {
        tt: 1.0,
        tp: 0.0,
        pt: 0.0,
        pp: 1.0,
        ttp: 0.0,
        ptp: 0.0,
        degenerate: false,
    };
}

/// Closed-form Jacobian of the angle maps, from differentiating
/// acos(R2 . p) and atan2(R1 . p, R3 . p).
pub fn jacobian(rot: &RotationSpec, theta: f64, phi: f64) -> JacobianAtPoint {
    angle_map_impl::<true>(rot, theta, phi).2
}

/// The angle map and its first-order Jacobian in one pass; the hot path of
/// the chain-rule rotation (mixed second partials are skipped there).
pub fn angle_map_with_jacobian(
    rot: &RotationSpec,
    theta: f64,
    phi: f64,
) -> (f64, f64, JacobianAtPoint) {
    angle_map_impl::<false>(rot, theta, phi)
}

fn angle_map_impl<const MIXED: bool>(
    rot: &RotationSpec,
    theta: f64,
    phi: f64,
) -> (f64, f64, JacobianAtPoint) {
    let m = rot.matrix();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let p = [st * sp, ct, st * cp];
    let p_t = [ct * sp, -st, ct * cp];
    let p_p = [st * cp, 0.0, -st * sp];

    let dot = |row: usize, v: &Vec3| m[row][0] * v[0] + m[row][1] * v[1] + m[row][2] * v[2];

    let u = dot(1, &p);
    let u_t = dot(1, &p_t);
    let u_p = dot(1, &p_p);

    let a = dot(0, &p);
    let a_t = dot(0, &p_t);
    let a_p = dot(0, &p_p);

    let b = dot(2, &p);
    let b_t = dot(2, &p_t);
    let b_p = dot(2, &p_p);

    // sin(Theta)^2 = 1 - u^2 = a^2 + b^2.
    let w2 = (1.0 - u * u).max(0.0);
    let degenerate = w2 < EPS_POLE * EPS_POLE;
    let w2c = w2.max(EPS_POLE * EPS_POLE);
    let w = w2c.sqrt();

    // Theta = acos(u): dTheta = -du / sqrt(1 - u^2).
    let tt = -u_t / w;
    let tp = -u_p / w;

    // Phi = atan2(a, b): dPhi = (da b - a db) / (a^2 + b^2).
    let num_t = a_t * b - a * b_t;
    let num_p = a_p * b - a * b_p;
    let pt = num_t / w2c;
    let pp = num_p / w2c;

    let (ttp, ptp) = if MIXED {
        let p_tp = [ct * cp, 0.0, -ct * sp];
        let u_tp = dot(1, &p_tp);
        let a_tp = dot(0, &p_tp);
        let b_tp = dot(2, &p_tp);
        // d/dphi (1/w) = u * u_p / w^3.
        let ttp = -u_tp / w - u_t * u * u_p / (w2c * w);
        let num_tp = a_tp * b + a_t * b_p - a_p * b_t - a * b_tp;
        let den_p = 2.0 * (a * a_p + b * b_p);
        let ptp = (num_tp * w2c - num_t * den_p) / (w2c * w2c);
        (ttp, ptp)
    } else {
        (0.0, 0.0)
    };

    let theta_out = u.clamp(-1.0, 1.0).acos();
    let phi_out = if a * a + b * b < 1e-18 {
        0.0
    } else {
        a.atan2(b).rem_euclid(TAU)
    };
    (
        theta_out,
        phi_out,
        JacobianAtPoint {
            tt,
            tp,
            pt,
            pp,
            ttp,
            ptp,
            degenerate,
        },
    )
}

/// Ground-truth spatial rotation: each output texel bilinearly samples the
/// input at the rotated angles, with azimuth wrap and pole reflection.
pub fn rotate_map_spatial(map: &LatLongMap, rot: &RotationSpec) -> LatLongMap {
    if rot.is_identity(0.0) {
        return map.clone();
    }
    let side = map.side();
    let mut out = LatLongMap::zeros(map.size_exp(), map.channels()).expect("same shape");
    // Sampling footprints are shared across channels.
    for r in 0..side {
        let theta = map.theta_center(r);
        for c in 0..side {
            let (t, p) = rotate_angles(rot, theta, map.phi_center(c));
            let st = crate::map::bilinear_stencil(
                side,
                t,
                p,
                crate::map::GridStagger::CellCenter,
                crate::map::Parity::Even,
            );
            for ch in 0..map.channels() {
                out.set(ch, r, c, st.apply(map.channel(ch)));
            }
        }
    }
    out
}

/// Helper shared by tests and fixtures: largest absolute entry of a - b.
pub fn mat_max_diff(a: &Mat3, b: &Mat3) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((a[i][j] - b[i][j]).abs());
        }
    }
    worst
}

/// Validation used by the CLI and tests; never needed on the hot path.
pub fn check_rotation(rot: &RotationSpec) -> Result<()> {
    if rot.orthonormality_error() > 1e-10 {
        return Err(Error::BadMaterial(format!(
            "rotation matrix is not orthonormal (error {:.3e})",
            rot.orthonormality_error()
        )));
    }
    Ok(())
}

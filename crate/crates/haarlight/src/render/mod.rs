//! CPU analogue of a four-pass relighting pipeline: primary-ray
//! intersection, per-pixel frame setup, Haar-domain rotation of the BRDF
//! pyramid from local to global frame, and triple-product shading against
//! the light and visibility pyramids.
//!
//! Integration convention: the triple-product sum is the plain mean over
//! the unit square, so the lat-long solid-angle weight is folded into the
//! light map before its transform (light' = light * sin(theta) * 2 pi^2),
//! leaving BRDF and visibility maps measure-free.

pub mod scene;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::haar::{forward_transform, inverse_transform, truncate_top_k, HaarPyramid, SparseCoeffs};
use crate::io::Image;
use crate::map::{LatLongMap, PI, TAU};
use crate::sphere::{mat_apply, rot_x, rot_y, rotate_map_spatial, Mat3, RotationSpec, Vec3};
use crate::tripling::triple_product_sum;
use crate::rot::build_rotated_pyramid;
use scene::{dot, scale, Scene, EPS_RAY};

/// Whether per-pixel BRDF rotation runs in the Haar domain or through the
/// spatial-domain ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationMode {
    Haar,
    SpatialOracle,
}

/// Reflectance model with the incident cosine folded in at tabulation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaterialModel {
    Lambertian,
    Phong,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub model: MaterialModel,
    pub diffuse: [f64; 3],
    pub specular: [f64; 3],
    pub exponent: f64,
}

impl Material {
    pub fn lambertian(diffuse: [f64; 3]) -> Self {
        Material {
            model: MaterialModel::Lambertian,
            diffuse,
            specular: [0.0; 3],
            exponent: 0.0,
        }
    }

    pub fn phong(diffuse: [f64; 3], specular: [f64; 3], exponent: f64) -> Self {
        Material {
            model: MaterialModel::Phong,
            diffuse,
            specular,
            exponent,
        }
    }

    /// Shipped presets: matte (lambertian 0.8), glossy (phong 20),
    /// mirrorish (phong 200).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "matte" => Some(Self::lambertian([0.8, 0.78, 0.75])),
            "glossy" => Some(Self::phong([0.22, 0.24, 0.28], [0.6, 0.6, 0.6], 20.0)),
            "mirrorish" => Some(Self::phong([0.04, 0.04, 0.05], [0.8, 0.8, 0.8], 200.0)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for v in self.diffuse.iter().chain(&self.specular) {
            if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                return Err(Error::BadMaterial(format!(
                    "reflectance components must be in [0, 1], got {v}"
                )));
            }
        }
        if !self.exponent.is_finite() || self.exponent < 0.0 {
            return Err(Error::BadMaterial(format!(
                "phong exponent must be >= 0, got {}",
                self.exponent
            )));
        }
        Ok(())
    }

    /// BRDF * cos(theta_in), clamped to the upper hemisphere, in the local
    /// frame (normal = +Y pole). `omega_o` and `omega_in` are unit vectors.
    pub fn eval_cos_clamped(&self, omega_o: Vec3, omega_in: Vec3) -> [f64; 3] {
        let cos_in = omega_in[1];
        if cos_in <= 0.0 {
            return [0.0; 3];
        }
        let mut f = [
            self.diffuse[0] / PI,
            self.diffuse[1] / PI,
            self.diffuse[2] / PI,
        ];
        if self.model == MaterialModel::Phong {
            // Lobe around the mirror of omega_o about the local normal.
            let mirror = [-omega_o[0], omega_o[1], -omega_o[2]];
            let s = dot(mirror, omega_in).max(0.0).powf(self.exponent);
            let norm = (self.exponent + 2.0) / (2.0 * PI);
            for ch in 0..3 {
                f[ch] += self.specular[ch] * norm * s;
            }
        }
        [f[0] * cos_in, f[1] * cos_in, f[2] * cos_in]
    }
}

/// Per-outgoing-direction Haar decompositions of the clamped cosine BRDF.
///
/// Outgoing directions are bucketed on an elevation x azimuth grid over the
/// upper local hemisphere; each bucket stores the pyramid (and its map, for
/// the spatial oracle) tabulated at the bucket center. Lambertian tables
/// are identical across buckets and stored once.
pub struct BrdfTable {
    pub size_exp: u32,
    pub elev_buckets: usize,
    pub azim_buckets: usize,
    entries: Vec<BrdfEntry>,
    bucket_entry: Vec<usize>,
}

struct BrdfEntry {
    pyramid: HaarPyramid,
    map: LatLongMap,
}

impl BrdfTable {
    pub fn bucket_count(&self) -> usize {
        self.elev_buckets * self.azim_buckets
    }

    /// Bucket of a local-frame outgoing direction.
    pub fn bucket_of(&self, omega_o_local: Vec3) -> usize {
        let theta = omega_o_local[1].clamp(-1.0, 1.0).acos();
        let phi = if omega_o_local[0] == 0.0 && omega_o_local[2] == 0.0 {
            0.0
        } else {
            omega_o_local[0].atan2(omega_o_local[2]).rem_euclid(TAU)
        };
        let e = ((theta / (PI / 2.0) * self.elev_buckets as f64) as usize)
            .min(self.elev_buckets - 1);
        let a = ((phi / TAU * self.azim_buckets as f64) as usize).min(self.azim_buckets - 1);
        e * self.azim_buckets + a
    }

    pub fn pyramid(&self, bucket: usize) -> &HaarPyramid {
        &self.entries[self.bucket_entry[bucket]].pyramid
    }

    pub fn map(&self, bucket: usize) -> &LatLongMap {
        &self.entries[self.bucket_entry[bucket]].map
    }

    /// Largest discrete hemisphere integral over buckets and channels; the
    /// per-pixel radiance bound is peak(light) times this value.
    pub fn hemisphere_integral_bound(&self) -> f64 {
        let mut bound = 0.0f64;
        for e in &self.entries {
            let m = &e.map;
            let norm = 2.0 * PI * PI / (m.side() * m.side()) as f64;
            for ch in 0..3 {
                let sum: f64 = (0..m.side())
                    .map(|r| {
                        let st = m.theta_center(r).sin();
                        (0..m.side()).map(|c| m.get(ch, r, c) * st).sum::<f64>()
                    })
                    .sum();
                bound = bound.max(sum * norm);
            }
        }
        bound
    }
}

/// Factor a requested bucket count into an elevation x azimuth grid with
/// roughly equal angular resolution (azimuth spans four times the
/// elevation range).
fn bucket_grid(buckets: usize) -> (usize, usize) {
    let e = ((buckets as f64 / 4.0).sqrt().round() as usize).max(1);
    let a = (buckets / e).max(1);
    (e, a)
}

/// Tabulates the BRDF over outgoing-direction buckets (count `buckets`,
/// rounded to an elevation x azimuth grid) at lat-long resolution 2^n.
pub fn generate_brdf_table(mat: &Material, size_exp: u32, buckets: usize) -> Result<BrdfTable> {
    if size_exp < 4 {
        return Err(Error::MalformedPyramid(
            "BRDF tables need size_exp >= 4".into(),
        ));
    }
    if buckets < 1 {
        return Err(Error::BadMaterial("bucket count D must be >= 1".into()));
    }
    mat.validate()?;
    let (eb, ab) = bucket_grid(buckets);
    let lambertian = mat.model == MaterialModel::Lambertian;
    let directions: Vec<Vec3> = if lambertian {
        vec![[0.0, 1.0, 0.0]]
    } else {
        let mut v = Vec::with_capacity(eb * ab);
        for e in 0..eb {
            let theta = (PI / 2.0) * (e as f64 + 0.5) / eb as f64;
            for a in 0..ab {
                let phi = TAU * (a as f64 + 0.5) / ab as f64;
                v.push(crate::sphere::dir_from_angles(theta, phi));
            }
        }
        v
    };
    let entries: Vec<BrdfEntry> = directions
        .par_iter()
        .map(|&omega_o| {
            let map = LatLongMap::from_fn(size_exp, 3, |t, p, ch| {
                let w_in = crate::sphere::dir_from_angles(t, p);
                mat.eval_cos_clamped(omega_o, w_in)[ch]
            })
            .expect("valid shape");
            let pyramid = forward_transform(&map);
            BrdfEntry { pyramid, map }
        })
        .collect();
    let bucket_entry = if lambertian {
        vec![0; eb * ab]
    } else {
        (0..eb * ab).collect()
    };
    Ok(BrdfTable {
        size_exp,
        elev_buckets: eb,
        azim_buckets: ab,
        entries,
        bucket_entry,
    })
}

/// Light pyramid with the lat-long solid-angle weight folded in:
/// light' = light * sin(theta) * 2 pi^2.
pub fn prepare_light_pyramid(env: &LatLongMap) -> HaarPyramid {
    let side = env.side();
    let mut weighted = env.clone();
    for ch in 0..env.channels() {
        for r in 0..side {
            let w = env.theta_center(r).sin() * 2.0 * PI * PI;
            for c in 0..side {
                let v = weighted.get(ch, r, c);
                weighted.set(ch, r, c, v * w);
            }
        }
    }
    forward_transform(&weighted)
}

/// Binary visibility of the upper hemisphere around `normal`, baked by
/// casting one ray per texel center; lower-hemisphere texels are 1 (the
/// clamped BRDF already removes them from the integral).
pub fn bake_visibility(scene: &Scene, point: Vec3, normal: Vec3, size_exp: u32) -> LatLongMap {
    LatLongMap::from_fn(size_exp, 1, |t, p, _| {
        let d = crate::sphere::dir_from_angles(t, p);
        if dot(d, normal) <= 0.0 {
            return 1.0;
        }
        if scene.occluded(point, d, EPS_RAY) {
            0.0
        } else {
            1.0
        }
    })
    .expect("valid shape")
}

/// Rotation taking the local frame (normal at the +Y pole) into the global
/// frame as a lookup map for the pyramid rotation: the rotated function g
/// satisfies g(omega) = local(M_N^{-1} omega).
pub fn local_to_global_rotation(normal: Vec3) -> RotationSpec {
    let (theta_n, phi_n) = crate::sphere::angles_from_dir(normal);
    // M_N = Ry(-phi_N) Rx(theta_N) maps +Y to the normal; the lookup matrix
    // is its inverse.
    let m: Mat3 = crate::sphere::mat_mul(&rot_x(-theta_n), &rot_y(phi_n));
    RotationSpec::from_matrix(m)
}

/// Transform a global direction into the local frame of `normal`.
pub fn to_local_frame(normal: Vec3, dir: Vec3) -> Vec3 {
    let (theta_n, phi_n) = crate::sphere::angles_from_dir(normal);
    let m = crate::sphere::mat_mul(&rot_x(-theta_n), &rot_y(phi_n));
    mat_apply(&m, dir)
}

/// Per-point radiance: bucket lookup, local-to-global rotation of the BRDF
/// pyramid, top-k truncation, and the sparse triple-product sum.
#[allow(clippy::too_many_arguments)]
pub fn shade_point(
    table: &BrdfTable,
    light: &SparseCoeffs,
    vis: &SparseCoeffs,
    normal: Vec3,
    omega_o: Vec3,
    k: usize,
    mode: RotationMode,
    start_level: usize,
) -> Result<[f64; 3]> {
    let omega_local = to_local_frame(normal, omega_o);
    let bucket = table.bucket_of(omega_local);
    let rot = local_to_global_rotation(normal);
    let rotated = match mode {
        RotationMode::Haar => build_rotated_pyramid(table.pyramid(bucket), &rot, start_level)?,
        RotationMode::SpatialOracle => {
            forward_transform(&rotate_map_spatial(table.map(bucket), &rot))
        }
    };
    let brdf = truncate_top_k(&rotated, k)?;
    let out = triple_product_sum(light, &brdf, vis)?;
    Ok([out[0], out[1], out[2]])
}

/// Options actually used by a render, after CLI overrides.
pub use scene::SceneOptions as RenderOptions;

/// Full render: primary rays, per-pixel shading, deterministic under any
/// thread count. Returns the image and the per-pixel hit mask.
pub fn render_image(scene: &Scene, env: &LatLongMap, options: &RenderOptions) -> Result<(Image, Vec<bool>)> {
    let n = options.size_exp;
    if env.size_exp() != n {
        return Err(Error::SizeMismatch(env.size_exp(), n));
    }
    if options.start_level < 1 || options.start_level >= n as usize {
        return Err(Error::BadStartLevel {
            start_level: options.start_level,
            max: n as usize - 1,
        });
    }
    let light_pyr = prepare_light_pyramid(env);
    let light = truncate_top_k(&light_pyr, options.k)?;

    // BRDF tables per object.
    let tables: Vec<BrdfTable> = scene
        .objects
        .iter()
        .map(|o| generate_brdf_table(&o.material, n, options.buckets))
        .collect::<Result<_>>()?;

    // Visibility pyramids per object sample point.
    let vis_tables: Vec<Vec<SparseCoeffs>> = scene
        .objects
        .iter()
        .enumerate()
        .map(|(oi, _)| {
            let points = scene.visibility_points(oi);
            points
                .par_iter()
                .map(|&(p, nrm)| {
                    let vm = bake_visibility(scene, p, nrm, n);
                    truncate_top_k(&forward_transform(&vm), options.k)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let cam = &scene.camera;
    let width = cam.width;
    let height = cam.height;
    let rows: Vec<(Vec<[f64; 3]>, Vec<bool>)> = (0..height)
        .into_par_iter()
        .map(|r| {
            let mut colors = vec![scene.background; width];
            let mut hits = vec![false; width];
            for c in 0..width {
                let (origin, dir) = cam.primary_ray(r, c);
                let Some(hit) = scene.intersect(origin, dir, EPS_RAY) else {
                    continue;
                };
                let omega_o = scale(dir, -1.0);
                let vis = &vis_tables[hit.object][hit.vis_point.min(vis_tables[hit.object].len() - 1)];
                let radiance = shade_point(
                    &tables[hit.object],
                    &light,
                    vis,
                    hit.normal,
                    omega_o,
                    options.k,
                    options.mode,
                    options.start_level,
                )
                .expect("shade failure");
                colors[c] = radiance;
                hits[c] = true;
            }
            (colors, hits)
        })
        .collect();
    let mut img = Image::new(width, height);
    let mut mask = vec![false; width * height];
    for (r, (colors, hits)) in rows.into_iter().enumerate() {
        img.pixels[r * width..(r + 1) * width].copy_from_slice(&colors);
        mask[r * width..(r + 1) * width].copy_from_slice(&hits);
    }
    Ok((img, mask))
}

/// MSE/PSNR between two images over non-background pixels.
#[derive(Debug, Clone, Copy)]
pub struct CompareResult {
    pub mse: f64,
    pub psnr_db: f64,
    pub compared: usize,
    /// True when the mask was empty and the MSE degenerated to 0.
    pub empty_mask: bool,
}

/// `background`: pixels exactly equal to this color in the reference are
/// excluded; pass `None` to compare every pixel. PSNR uses the reference
/// peak and caps at 300 dB.
pub fn compare_images(
    reference: &Image,
    test: &Image,
    background: Option<[f64; 3]>,
) -> Result<CompareResult> {
    if reference.width != test.width || reference.height != test.height {
        return Err(Error::ImageSizeMismatch(
            reference.width,
            reference.height,
            test.width,
            test.height,
        ));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut peak = 0.0f64;
    for (a, b) in reference.pixels.iter().zip(&test.pixels) {
        if let Some(bg) = background {
            if *a == bg {
                continue;
            }
        }
        for ch in 0..3 {
            let d = a[ch] - b[ch];
            sum += d * d;
            peak = peak.max(a[ch]);
        }
        count += 1;
    }
    if count == 0 {
        return Ok(CompareResult {
            mse: 0.0,
            psnr_db: 300.0,
            compared: 0,
            empty_mask: true,
        });
    }
    let mse = sum / (count * 3) as f64;
    Ok(CompareResult {
        mse,
        psnr_db: crate::fixtures::psnr_db(peak, mse),
        compared: count,
        empty_mask: false,
    })
}

/// Reconstructed-map PSNR between two pyramids (used by rotate --verify).
pub fn pyramid_psnr(reference: &HaarPyramid, test: &HaarPyramid) -> Result<f64> {
    let a = inverse_transform(reference)?;
    let b = inverse_transform(test)?;
    let mse = a.mse(&b)?;
    Ok(crate::fixtures::psnr_db(a.peak_abs(), mse))
}

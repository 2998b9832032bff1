//! Scene description: primitives, pinhole camera, plain-text config files,
//! ray intersection, and per-point visibility baking.
//!
//! Config files are `key = value` lines; `#` starts a comment. Keys:
//!
//! ```text
//! camera.position  = x y z        camera.look_at = x y z
//! camera.up        = x y z        camera.fov_deg = 40
//! camera.width     = 96           camera.height  = 96
//! background       = r g b
//! material.NAME.model    = lambertian | phong
//! material.NAME.diffuse  = r g b
//! material.NAME.specular = r g b
//! material.NAME.exponent = 20
//! object.NAME.type     = sphere | mesh
//! object.NAME.center   = x y z   (sphere)
//! object.NAME.radius   = 1.0     (sphere)
//! object.NAME.obj      = path     (mesh, relative to the config file)
//! object.NAME.material = NAME | matte | glossy | mirrorish
//! options.k = 256    options.n = 6    options.d = 64
//! options.start_level = 5    options.mode = haar | spatial
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{read_obj, Mesh};
use crate::render::{Material, RotationMode};
use crate::sphere::Vec3;

pub const EPS_RAY: f64 = 1e-4;

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn normalize(a: Vec3) -> Vec3 {
    let len = dot(a, a).sqrt();
    if len > 0.0 {
        scale(a, 1.0 / len)
    } else {
        [0.0, 1.0, 0.0]
    }
}

#[derive(Debug, Clone)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Ray through the center of pixel (r, c); orthonormal right-handed
    /// basis built from look direction and up.
    pub fn primary_ray(&self, r: usize, c: usize) -> (Vec3, Vec3) {
        let forward = normalize(sub(self.look_at, self.position));
        let right = normalize(cross(forward, self.up));
        let upv = cross(right, forward);
        let half = (self.fov_deg.to_radians() / 2.0).tan();
        let aspect = self.width as f64 / self.height as f64;
        let ndc_x = (2.0 * (c as f64 + 0.5) / self.width as f64 - 1.0) * half * aspect;
        let ndc_y = (1.0 - 2.0 * (r as f64 + 0.5) / self.height as f64) * half;
        let dir = normalize(add(
            forward,
            add(scale(right, ndc_x), scale(upv, ndc_y)),
        ));
        (self.position, dir)
    }
}

#[derive(Debug, Clone)]
pub enum Primitive {
    Sphere { center: Vec3, radius: f64 },
    Mesh(Mesh),
}

#[derive(Debug, Clone)]
pub struct SceneObject {
    pub name: String,
    pub primitive: Primitive,
    pub material: Material,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub camera: Camera,
    pub objects: Vec<SceneObject>,
    pub background: [f64; 3],
    pub options: SceneOptions,
}

/// Rendering options; config values can be overridden from the CLI.
#[derive(Debug, Clone, Copy)]
pub struct SceneOptions {
    pub k: usize,
    pub size_exp: u32,
    pub buckets: usize,
    pub start_level: usize,
    pub mode: RotationMode,
}

impl Default for SceneOptions {
    fn default() -> Self {
        SceneOptions {
            k: 256,
            size_exp: 6,
            buckets: 64,
            start_level: 5,
            mode: RotationMode::Haar,
        }
    }
}

/// One ray-scene intersection.
#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub normal: Vec3,
    pub object: usize,
    /// Index of the nearest visibility sample point of the hit object.
    pub vis_point: usize,
}

impl Scene {
    /// Closest intersection with t > t_min.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (oi, obj) in self.objects.iter().enumerate() {
            match &obj.primitive {
                Primitive::Sphere { center, radius } => {
                    if let Some(t) = sphere_hit(*center, *radius, origin, dir, t_min) {
                        if best.map_or(true, |b| t < b.t) {
                            let point = add(origin, scale(dir, t));
                            let normal = normalize(sub(point, *center));
                            best = Some(Hit {
                                t,
                                point,
                                normal,
                                object: oi,
                                vis_point: 0,
                            });
                        }
                    }
                }
                Primitive::Mesh(mesh) => {
                    for (ti, tri) in mesh.triangles.iter().enumerate() {
                        if let Some((t, u, v)) = triangle_hit(mesh, *tri, origin, dir, t_min) {
                            if best.map_or(true, |b| t < b.t) {
                                let point = add(origin, scale(dir, t));
                                let n = interpolate_normal(mesh, *tri, u, v);
                                let _ = ti;
                                // Nearest vertex by barycentric weight.
                                let w0 = 1.0 - u - v;
                                let vis_point = if w0 >= u && w0 >= v {
                                    tri[0]
                                } else if u >= v {
                                    tri[1]
                                } else {
                                    tri[2]
                                };
                                best = Some(Hit {
                                    t,
                                    point,
                                    normal: n,
                                    object: oi,
                                    vis_point,
                                });
                            }
                        }
                    }
                }
            }
        }
        // Spheres pick the nearest of their lat-long sample points.
        if let Some(hit) = best.as_mut() {
            if let Primitive::Sphere { center, .. } = &self.objects[hit.object].primitive {
                hit.vis_point = nearest_sphere_sample(normalize(sub(hit.point, *center)));
            }
        }
        best
    }

    /// True when any geometry lies along the ray with t > t_min.
    pub fn occluded(&self, origin: Vec3, dir: Vec3, t_min: f64) -> bool {
        for obj in &self.objects {
            match &obj.primitive {
                Primitive::Sphere { center, radius } => {
                    if sphere_hit(*center, *radius, origin, dir, t_min).is_some() {
                        return true;
                    }
                }
                Primitive::Mesh(mesh) => {
                    for tri in &mesh.triangles {
                        if triangle_hit(mesh, *tri, origin, dir, t_min).is_some() {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    /// Visibility sample points (position, shading normal) for one object.
    pub fn visibility_points(&self, object: usize) -> Vec<(Vec3, Vec3)> {
        match &self.objects[object].primitive {
            Primitive::Sphere { center, radius } => sphere_sample_dirs()
                .into_iter()
                .map(|d| (add(*center, scale(d, *radius)), d))
                .collect(),
            Primitive::Mesh(mesh) => mesh
                .positions
                .iter()
                .zip(&mesh.normals)
                .map(|(p, n)| (*p, *n))
                .collect(),
        }
    }
}

fn sphere_hit(center: Vec3, radius: f64, origin: Vec3, dir: Vec3, t_min: f64) -> Option<f64> {
    let oc = sub(origin, center);
    let b = dot(oc, dir);
    let c = dot(oc, oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    for t in [-b - s, -b + s] {
        if t > t_min {
            return Some(t);
        }
    }
    None
}

/// Moeller–Trumbore; returns (t, u, v).
fn triangle_hit(mesh: &Mesh, tri: [usize; 3], origin: Vec3, dir: Vec3, t_min: f64) -> Option<(f64, f64, f64)> {
    let p0 = mesh.positions[tri[0]];
    let e1 = sub(mesh.positions[tri[1]], p0);
    let e2 = sub(mesh.positions[tri[2]], p0);
    let pv = cross(dir, e2);
    let det = dot(e1, pv);
    if det.abs() < 1e-12 {
        return None;
    }
    let inv = 1.0 / det;
    let tv = sub(origin, p0);
    let u = dot(tv, pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qv = cross(tv, e1);
    let v = dot(dir, qv) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = dot(e2, qv) * inv;
    (t > t_min).then_some((t, u, v))
}

fn interpolate_normal(mesh: &Mesh, tri: [usize; 3], u: f64, v: f64) -> Vec3 {
    let w = 1.0 - u - v;
    normalize(add(
        add(
            scale(mesh.normals[tri[0]], w),
            scale(mesh.normals[tri[1]], u),
        ),
        scale(mesh.normals[tri[2]], v),
    ))
}

/// 8x8 lat-long grid of directions used as sphere visibility samples.
const SPHERE_VIS_GRID: usize = 8;

fn sphere_sample_dirs() -> Vec<Vec3> {
    let g = SPHERE_VIS_GRID;
    let mut dirs = Vec::with_capacity(g * g);
    for i in 0..g {
        let theta = std::f64::consts::PI * (i as f64 + 0.5) / g as f64;
        for j in 0..g {
            let phi = std::f64::consts::TAU * (j as f64 + 0.5) / g as f64;
            dirs.push(crate::sphere::dir_from_angles(theta, phi));
        }
    }
    dirs
}

fn nearest_sphere_sample(d: Vec3) -> usize {
    let g = SPHERE_VIS_GRID;
    let (theta, phi) = crate::sphere::angles_from_dir(d);
    let i = ((theta / std::f64::consts::PI * g as f64) as usize).min(g - 1);
    let j = ((phi / std::f64::consts::TAU * g as f64) as usize).min(g - 1);
    i * g + j
}

/// Parses a scene config; `path` supplies the base directory for mesh
/// references and the file name used in error messages.
pub fn parse_scene(text: &str, path: &Path) -> Result<Scene> {
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let perr = |line: usize, msg: String| Error::ConfigParse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(perr(i + 1, "expected `key = value`".into()));
        };
        let key = k.trim().to_string();
        if kv.contains_key(&key) {
            return Err(perr(i + 1, format!("duplicate key {key}")));
        }
        kv.insert(key, (i + 1, v.trim().to_string()));
    }

    let take = |kv: &BTreeMap<String, (usize, String)>, key: &str| -> Option<(usize, String)> {
        kv.get(key).cloned()
    };
    let vec3 = |entry: &(usize, String)| -> Result<Vec3> {
        let parts: Vec<f64> = entry
            .1
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| perr(entry.0, format!("expected three numbers, got {:?}", entry.1)))?;
        if parts.len() != 3 {
            return Err(perr(entry.0, format!("expected three numbers, got {:?}", entry.1)));
        }
        Ok([parts[0], parts[1], parts[2]])
    };
    let num = |entry: &(usize, String)| -> Result<f64> {
        entry
            .1
            .parse()
            .map_err(|_| perr(entry.0, format!("expected a number, got {:?}", entry.1)))
    };

    let camera = Camera {
        position: vec3(&take(&kv, "camera.position").ok_or_else(|| perr(0, "missing camera.position".into()))?)?,
        look_at: vec3(&take(&kv, "camera.look_at").ok_or_else(|| perr(0, "missing camera.look_at".into()))?)?,
        up: take(&kv, "camera.up").map_or(Ok([0.0, 1.0, 0.0]), |e| vec3(&e))?,
        fov_deg: take(&kv, "camera.fov_deg").map_or(Ok(40.0), |e| num(&e))?,
        width: take(&kv, "camera.width").map_or(Ok(96.0), |e| num(&e))? as usize,
        height: take(&kv, "camera.height").map_or(Ok(96.0), |e| num(&e))? as usize,
    };
    if camera.width == 0 || camera.height == 0 {
        return Err(perr(0, "camera dimensions must be positive".into()));
    }
    let background = take(&kv, "background").map_or(Ok([0.0, 0.0, 0.0]), |e| vec3(&e))?;

    // Collect material.NAME.* and object.NAME.* groups.
    let mut material_names: Vec<String> = Vec::new();
    let mut object_names: Vec<String> = Vec::new();
    for key in kv.keys() {
        if let Some(rest) = key.strip_prefix("material.") {
            if let Some((name, _)) = rest.split_once('.') {
                if !material_names.iter().any(|n| n == name) {
                    material_names.push(name.to_string());
                }
            }
        }
        if let Some(rest) = key.strip_prefix("object.") {
            if let Some((name, _)) = rest.split_once('.') {
                if !object_names.iter().any(|n| n == name) {
                    object_names.push(name.to_string());
                }
            }
        }
    }

    let mut materials: BTreeMap<String, Material> = BTreeMap::new();
    for name in &material_names {
        let get = |field: &str| take(&kv, &format!("material.{name}.{field}"));
        let model = get("model").map_or_else(|| "lambertian".to_string(), |e| e.1);
        let diffuse = get("diffuse").map_or(Ok([0.5; 3]), |e| vec3(&e))?;
        let specular = get("specular").map_or(Ok([0.0; 3]), |e| vec3(&e))?;
        let exponent = get("exponent").map_or(Ok(0.0), |e| num(&e))?;
        let mat = match model.as_str() {
            "lambertian" => Material::lambertian(diffuse),
            "phong" => Material::phong(diffuse, specular, exponent),
            other => {
                let line = get("model").map(|e| e.0).unwrap_or(0);
                return Err(perr(line, format!("unknown material model {other:?}")));
            }
        };
        mat.validate()
            .map_err(|e| perr(0, format!("material {name}: {e}")))?;
        materials.insert(name.clone(), mat);
    }

    let mut objects = Vec::new();
    for name in &object_names {
        let get = |field: &str| take(&kv, &format!("object.{name}.{field}"));
        let (tline, ty) = get("type").ok_or_else(|| perr(0, format!("object {name}: missing type")))?;
        let mat_name = get("material").map_or_else(|| "matte".to_string(), |e| e.1);
        let material = materials
            .get(&mat_name)
            .copied()
            .or_else(|| Material::preset(&mat_name))
            .ok_or_else(|| perr(tline, format!("object {name}: unknown material {mat_name:?}")))?;
        let primitive = match ty.as_str() {
            "sphere" => Primitive::Sphere {
                center: get("center").map_or(Ok([0.0; 3]), |e| vec3(&e))?,
                radius: get("radius").map_or(Ok(1.0), |e| num(&e))?,
            },
            "mesh" => {
                let (oline, rel) = get("obj")
                    .ok_or_else(|| perr(tline, format!("object {name}: mesh needs obj = path")))?;
                let mesh_path: PathBuf = dir.join(rel);
                let mesh = read_obj(&mesh_path).map_err(|e| perr(oline, e.to_string()))?;
                Primitive::Mesh(mesh)
            }
            other => return Err(perr(tline, format!("unknown object type {other:?}"))),
        };
        objects.push(SceneObject {
            name: name.clone(),
            primitive,
            material,
        });
    }
    if objects.is_empty() {
        // An empty scene renders pure background; allowed.
    }

    let mut options = SceneOptions::default();
    if let Some(e) = take(&kv, "options.k") {
        options.k = num(&e)? as usize;
    }
    if let Some(e) = take(&kv, "options.n") {
        options.size_exp = num(&e)? as u32;
    }
    if let Some(e) = take(&kv, "options.d") {
        options.buckets = num(&e)? as usize;
    }
    if let Some(e) = take(&kv, "options.start_level") {
        options.start_level = num(&e)? as usize;
    }
    if let Some(e) = take(&kv, "options.mode") {
        options.mode = match e.1.as_str() {
            "haar" => RotationMode::Haar,
            "spatial" | "spatial_oracle" => RotationMode::SpatialOracle,
            other => return Err(perr(e.0, format!("unknown mode {other:?}"))),
        };
    }
    Ok(Scene {
        camera,
        objects,
        background,
        options,
    })
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_scene(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# sample
camera.position = 0 0 3
camera.look_at = 0 0 0
camera.fov_deg = 45
camera.width = 32
camera.height = 24
background = 0.1 0.2 0.3
object.ball.type = sphere
object.ball.center = 0 0 0
object.ball.radius = 1
object.ball.material = glossy
options.k = 64
options.mode = spatial
";

    #[test]
    fn parses_sample_scene() {
        let scene = parse_scene(SAMPLE, Path::new("test.scene")).unwrap();
        assert_eq!(scene.camera.width, 32);
        assert_eq!(scene.objects.len(), 1);
        assert_eq!(scene.options.k, 64);
        assert!(matches!(scene.options.mode, RotationMode::SpatialOracle));
        assert_eq!(scene.background, [0.1, 0.2, 0.3]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "camera.position = 0 0 3\ncamera.look_at = 0 0\n";
        let err = parse_scene(bad, Path::new("bad.scene")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.scene:2"), "{msg}");
        let bad = "camera.position = 0 0 3\nnonsense line\n";
        let err = parse_scene(bad, Path::new("bad.scene")).unwrap_err();
        assert!(err.to_string().contains(":2"), "{err}");
    }

    #[test]
    fn camera_rays_hit_center() {
        let scene = parse_scene(SAMPLE, Path::new("s.scene")).unwrap();
        let (o, d) = scene.camera.primary_ray(12, 16);
        // Center ray points roughly at the origin.
        assert!(dot(d, normalize(sub([0.0; 3], o))) > 0.99);
        let hit = scene.intersect(o, d, EPS_RAY).unwrap();
        assert!((hit.t - 2.0).abs() < 0.1, "t {}", hit.t);
        // Normal points back toward the camera.
        assert!(dot(hit.normal, d) < 0.0);
    }

    #[test]
    fn sphere_and_triangle_intersection() {
        let mesh = Mesh {
            positions: vec![[-1.0, 0.0, -1.0], [1.0, 0.0, -1.0], [0.0, 0.0, 1.0]],
            normals: vec![[0.0, 1.0, 0.0]; 3],
            triangles: vec![[0, 1, 2]],
        };
        let scene = Scene {
            camera: Camera {
                position: [0.0, 2.0, 0.0],
                look_at: [0.0, 0.0, 0.0],
                up: [0.0, 0.0, 1.0],
                fov_deg: 40.0,
                width: 8,
                height: 8,
            },
            objects: vec![SceneObject {
                name: "tri".into(),
                primitive: Primitive::Mesh(mesh),
                material: Material::preset("matte").unwrap(),
            }],
            background: [0.0; 3],
            options: SceneOptions::default(),
        };
        let hit = scene.intersect([0.0, 2.0, 0.0], [0.0, -1.0, 0.0], EPS_RAY).unwrap();
        assert!((hit.t - 2.0).abs() < 1e-12);
        assert!(scene.occluded([0.0, 2.0, 0.0], [0.0, -1.0, 0.0], EPS_RAY));
        assert!(!scene.occluded([0.0, 2.0, 0.0], [0.0, 1.0, 0.0], EPS_RAY));
    }
}

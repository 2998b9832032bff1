//! File formats: PFM (float32, linear) and PPM (8-bit, gamma 2.2) images,
//! a v/vn/f subset of Wavefront OBJ, and helpers bridging square images to
//! [`LatLongMap`].
//!
//! PFM scanlines are stored bottom-to-top as the format prescribes; a
//! negative scale marks little-endian data. Lat-long maps put row 0 (the
//! north pole) at the top of the image.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::map::LatLongMap;

/// A render target or loaded image: row-major, top-down, RGB f64.
#[derive(Debug, Clone)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// `pixels[r * width + c]` = linear RGB.
    pub pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    pub fn peak(&self) -> f64 {
        self.pixels
            .iter()
            .flat_map(|p| p.iter())
            .fold(0.0f64, |m, v| m.max(*v))
    }
}

fn fmt_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::FileFormat {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Writes a color PFM (scale -1.0, little-endian, bottom-up scanlines).
pub fn write_pfm(path: &Path, img: &Image) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(f);
    let header = format!("PF\n{} {}\n-1.0\n", img.width, img.height);
    let mut run = || -> std::io::Result<()> {
        w.write_all(header.as_bytes())?;
        for r in (0..img.height).rev() {
            for c in 0..img.width {
                for ch in 0..3 {
                    let v = img.pixels[r * img.width + c][ch] as f32;
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    };
    run().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a PFM image ("PF" color or "Pf" grayscale, either endianness).
pub fn read_pfm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !(bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(fmt_err(path, "truncated PFM header"));
        }
        let s = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        pos += 1; // single whitespace after each token
        Ok(s)
    };
    let magic = token(&bytes)?;
    let color = match magic.as_str() {
        "PF" => true,
        "Pf" => false,
        other => return Err(fmt_err(path, format!("bad PFM magic {other:?}"))),
    };
    let width: usize = token(&bytes)?
        .parse()
        .map_err(|_| fmt_err(path, "bad width"))?;
    let height: usize = token(&bytes)?
        .parse()
        .map_err(|_| fmt_err(path, "bad height"))?;
    let scale: f64 = token(&bytes)?
        .parse()
        .map_err(|_| fmt_err(path, "bad scale"))?;
    let little = scale < 0.0;
    let comps = if color { 3 } else { 1 };
    let need = width * height * comps * 4;
    if bytes.len() < pos + need {
        return Err(fmt_err(path, "truncated PFM payload"));
    }
    let data = &bytes[pos..pos + need];
    let mut img = Image::new(width, height);
    for sr in 0..height {
        let r = height - 1 - sr; // bottom-up storage
        for c in 0..width {
            let base = (sr * width + c) * comps * 4;
            let mut px = [0.0f64; 3];
            for k in 0..comps {
                let raw: [u8; 4] = data[base + 4 * k..base + 4 * k + 4].try_into().unwrap();
                let v = if little {
                    f32::from_le_bytes(raw)
                } else {
                    f32::from_be_bytes(raw)
                };
                if !v.is_finite() {
                    return Err(fmt_err(path, "non-finite sample"));
                }
                px[k] = v as f64;
            }
            if !color {
                px = [px[0]; 3];
            }
            img.pixels[r * width + c] = px;
        }
    }
    Ok(img)
}

/// Writes an 8-bit P6 PPM preview with gamma 2.2 encoding.
pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(f);
    let mut run = || -> std::io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
        for px in &img.pixels {
            for ch in 0..3 {
                let v = px[ch].clamp(0.0, 1.0).powf(1.0 / 2.2);
                w.write_all(&[(v * 255.0).round() as u8])?;
            }
        }
        Ok(())
    };
    run().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a binary P6 PPM and linearizes it with gamma 2.2.
pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        loop {
            while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !(bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(fmt_err(path, "truncated PPM header"));
        }
        let s = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        pos += 1;
        Ok(s)
    };
    let magic = token(&bytes)?;
    if magic != "P6" {
        return Err(fmt_err(path, format!("bad PPM magic {magic:?}")));
    }
    let width: usize = token(&bytes)?
        .parse()
        .map_err(|_| fmt_err(path, "bad width"))?;
    let height: usize = token(&bytes)?
        .parse()
        .map_err(|_| fmt_err(path, "bad height"))?;
    let maxval: usize = token(&bytes)?
        .parse()
        .map_err(|_| fmt_err(path, "bad maxval"))?;
    if maxval != 255 {
        return Err(fmt_err(path, "only maxval 255 supported"));
    }
    let need = width * height * 3;
    if bytes.len() < pos + need {
        return Err(fmt_err(path, "truncated PPM payload"));
    }
    let mut img = Image::new(width, height);
    for i in 0..width * height {
        let mut px = [0.0; 3];
        for ch in 0..3 {
            px[ch] = (bytes[pos + 3 * i + ch] as f64 / 255.0).powf(2.2);
        }
        img.pixels[i] = px;
    }
    Ok(img)
}

/// Loads a PFM or PPM (by extension) as a lat-long map; the image must be a
/// power-of-two square with side >= 2.
pub fn read_map(path: &Path) -> Result<LatLongMap> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let img = match ext.as_str() {
        "pfm" => read_pfm(path)?,
        "ppm" => read_ppm(path)?,
        other => return Err(fmt_err(path, format!("unsupported image extension {other:?}"))),
    };
    image_to_map(&img).map_err(|e| match e {
        Error::NonPowerOfTwo { width, height } => fmt_err(
            path,
            format!("map images must be power-of-two squares, got {width}x{height}"),
        ),
        other => other,
    })
}

/// Square power-of-two image -> 3-channel lat-long map.
pub fn image_to_map(img: &Image) -> Result<LatLongMap> {
    if img.width != img.height || !img.width.is_power_of_two() || img.width < 2 {
        return Err(Error::NonPowerOfTwo {
            width: img.width,
            height: img.height,
        });
    }
    let n = img.width.trailing_zeros();
    let side = img.width;
    let mut data = vec![0.0; 3 * side * side];
    for ch in 0..3 {
        for r in 0..side {
            for c in 0..side {
                data[ch * side * side + r * side + c] = img.pixels[r * side + c][ch];
            }
        }
    }
    LatLongMap::from_samples(n, 3, data)
}

/// Lat-long map -> image (single-channel maps replicate to gray).
pub fn map_to_image(map: &LatLongMap) -> Image {
    let side = map.side();
    let mut img = Image::new(side, side);
    for r in 0..side {
        for c in 0..side {
            let px = if map.channels() == 3 {
                [map.get(0, r, c), map.get(1, r, c), map.get(2, r, c)]
            } else {
                [map.get(0, r, c); 3]
            };
            img.pixels[r * side + c] = px;
        }
    }
    img
}

/// Triangle mesh with per-vertex normals.
#[derive(Debug, Clone, Default)]
pub struct Mesh {
    pub positions: Vec<[f64; 3]>,
    pub normals: Vec<[f64; 3]>,
    /// Vertex indices, three per triangle.
    pub triangles: Vec<[usize; 3]>,
}

/// Parses the v/vn/f subset of Wavefront OBJ. Faces triangulate as fans;
/// missing normals are rebuilt as area-weighted vertex normals.
pub fn read_obj(path: &Path) -> Result<Mesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut positions: Vec<[f64; 3]> = Vec::new();
    let mut file_normals: Vec<[f64; 3]> = Vec::new();
    // (position index, normal index or usize::MAX) per corner.
    let mut faces: Vec<Vec<(usize, usize)>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let tag = it.next().unwrap();
        let parse3 = |it: &mut dyn Iterator<Item = &str>| -> Result<[f64; 3]> {
            let mut v = [0.0; 3];
            for slot in v.iter_mut() {
                *slot = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| fmt_err(path, format!("line {}: expected 3 numbers", ln + 1)))?;
            }
            Ok(v)
        };
        match tag {
            "v" => positions.push(parse3(&mut it)?),
            "vn" => file_normals.push(parse3(&mut it)?),
            "f" => {
                let mut corners = Vec::new();
                for spec in it {
                    let mut parts = spec.split('/');
                    let vi: isize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| fmt_err(path, format!("line {}: bad face index", ln + 1)))?;
                    let _vt = parts.next();
                    let ni: Option<isize> = parts.next().and_then(|s| s.parse().ok());
                    if vi < 1 || vi as usize > positions.len() {
                        return Err(fmt_err(path, format!("line {}: vertex index out of range", ln + 1)));
                    }
                    let n_idx = match ni {
                        Some(i) if i >= 1 && i as usize <= file_normals.len() => i as usize - 1,
                        Some(_) => {
                            return Err(fmt_err(
                                path,
                                format!("line {}: normal index out of range", ln + 1),
                            ))
                        }
                        None => usize::MAX,
                    };
                    corners.push((vi as usize - 1, n_idx));
                }
                if corners.len() < 3 {
                    return Err(fmt_err(path, format!("line {}: face needs 3+ vertices", ln + 1)));
                }
                faces.push(corners);
            }
            _ => {} // vt, o, g, s, usemtl: ignored
        }
    }
    let mut mesh = Mesh {
        positions: positions.clone(),
        normals: vec![[0.0; 3]; positions.len()],
        triangles: Vec::new(),
    };
    let mut have_normals = vec![false; positions.len()];
    for corners in &faces {
        for i in 1..corners.len() - 1 {
            let tri = [corners[0], corners[i], corners[i + 1]];
            mesh.triangles
                .push([tri[0].0, tri[1].0, tri[2].0]);
            for (vi, ni) in tri {
                if ni != usize::MAX {
                    mesh.normals[vi] = file_normals[ni];
                    have_normals[vi] = true;
                }
            }
        }
    }
    // Fill any vertices that had no vn with area-weighted face normals.
    if !have_normals.iter().all(|&b| b) {
        for &[a, b, c] in &mesh.triangles {
            let (pa, pb, pc) = (mesh.positions[a], mesh.positions[b], mesh.positions[c]);
            let u = sub(pb, pa);
            let v = sub(pc, pa);
            let n = cross(u, v); // length = 2 * area
            for vi in [a, b, c] {
                if !have_normals[vi] {
                    mesh.normals[vi] = add(mesh.normals[vi], n);
                }
            }
        }
    }
    for n in mesh.normals.iter_mut() {
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if len > 0.0 {
            *n = [n[0] / len, n[1] / len, n[2] / len];
        } else {
            *n = [0.0, 1.0, 0.0];
        }
    }
    if mesh.triangles.is_empty() {
        return Err(fmt_err(path, "no faces"));
    }
    Ok(mesh)
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_roundtrip_is_float32_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pfm");
        let mut img = Image::new(8, 4);
        for (i, px) in img.pixels.iter_mut().enumerate() {
            *px = [i as f64 * 0.125, -(i as f64), 1.0 / (i as f64 + 1.0)];
        }
        // Quantize to f32 first so the roundtrip is bit-exact.
        for px in img.pixels.iter_mut() {
            for v in px.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
        write_pfm(&path, &img).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(back.width, 8);
        assert_eq!(back.pixels, img.pixels);
    }

    #[test]
    fn ppm_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        let mut img = Image::new(4, 4);
        for (i, px) in img.pixels.iter_mut().enumerate() {
            *px = [i as f64 / 15.0, 0.5, 1.0 - i as f64 / 15.0];
        }
        write_ppm(&path, &img).unwrap();
        let back = read_ppm(&path).unwrap();
        for (a, b) in back.pixels.iter().zip(&img.pixels) {
            for ch in 0..3 {
                assert!((a[ch] - b[ch]).abs() < 0.02, "{} vs {}", a[ch], b[ch]);
            }
        }
    }

    #[test]
    fn map_image_bridge() {
        let m = LatLongMap::from_fn(3, 3, |t, p, ch| t.sin() + p.cos() + ch as f64).unwrap();
        let img = map_to_image(&m);
        let back = image_to_map(&img).unwrap();
        assert_eq!(back.samples(), m.samples());
        let bad = Image::new(6, 6);
        assert!(image_to_map(&bad).is_err());
    }

    #[test]
    fn obj_parses_and_builds_normals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("quad.obj");
        std::fs::write(
            &path,
            "# quad\nv 0 0 0\nv 1 0 0\nv 1 0 1\nv 0 0 1\nf 1 2 3 4\n",
        )
        .unwrap();
        let mesh = read_obj(&path).unwrap();
        assert_eq!(mesh.triangles.len(), 2);
        for n in &mesh.normals {
            assert!((n[1].abs() - 1.0).abs() < 1e-12, "normal {n:?}");
        }
        std::fs::write(&path, "v 0 0 0\nf 1 2 3\n").unwrap();
        assert!(read_obj(&path).is_err());
    }
}

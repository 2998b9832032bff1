//! Implementations of the CLI commands. Each returns a [`RunReport`] that
//! the binary prints as text and optionally writes as CSV.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fixtures::{phong_lobe_map, random_rotation_uniform};
use crate::haar::{forward_transform, inverse_transform, read_pyramid, write_pyramid, HaarPyramid};
use crate::io::{map_to_image, read_map, read_pfm, read_ppm, write_pfm, write_ppm, Image};
use crate::map::LatLongMap;
use crate::render::{
    compare_images, pyramid_psnr, render_image, RenderOptions, RotationMode,
};
use crate::render::scene::load_scene;
use crate::report::{fmt_num, RunReport};
use crate::rot::{build_rotated_pyramid, coeffs_to_derivatives, derivatives_to_coeffs,
    downsample_fields, synthesize_coarser_direct};
use crate::sphere::{rotate_map_spatial, RotationSpec};

fn read_haar(path: &Path) -> Result<HaarPyramid> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_pyramid(&mut std::io::BufReader::new(f))
}

fn write_haar(path: &Path, pyr: &HaarPyramid) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(f);
    write_pyramid(pyr, &mut w).map_err(|e| Error::io(path.display().to_string(), e))
}

/// FNV-1a over the image's f64 bytes; stable across runs and thread counts.
pub fn image_hash(img: &Image) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for px in &img.pixels {
        for v in px {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        }
    }
    h
}

/// `transform <image> <pyramid>`: forward transform with an optional cap on
/// the number of detail levels kept (coarsest first).
pub fn cmd_transform(input: &Path, output: &Path, levels: Option<usize>) -> Result<RunReport> {
    let mut report = RunReport::new("transform");
    report.push("input", input.display().to_string());
    report.push("output", output.display().to_string());
    let t0 = Instant::now();
    let map = read_map(input)?;
    let t_read = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let mut pyr = forward_transform(&map);
    let t_fwd = t1.elapsed().as_secs_f64();
    // Parseval residual of the full transform, before any truncation.
    let energy = pyr.energy();
    if let Some(keep) = levels {
        for l in keep..pyr.size_exp() as usize {
            let lev = &mut pyr.levels[l];
            lev.h.iter_mut().for_each(|v| *v = 0.0);
            lev.v.iter_mut().for_each(|v| *v = 0.0);
            lev.d.iter_mut().for_each(|v| *v = 0.0);
        }
        report.push("levels_kept", keep.to_string());
    }
    let mut worst = 0.0f64;
    for ch in 0..map.channels() {
        let ms: f64 = map
            .channel(ch)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            / (map.side() * map.side()) as f64;
        if ms > 0.0 {
            worst = worst.max((ms - energy[ch]).abs() / ms);
        }
    }
    write_haar(output, &pyr)?;
    report.push("size_exp", pyr.size_exp().to_string());
    report.push("channels", pyr.channels().to_string());
    report.push_num("parseval_residual", worst);
    report.push_ms("read_ms", t_read);
    report.push_ms("transform_ms", t_fwd);
    Ok(report)
}

/// `inverse <pyramid> <image>`: exact synthesis; output format by extension.
pub fn cmd_inverse(input: &Path, output: &Path) -> Result<RunReport> {
    let mut report = RunReport::new("inverse");
    report.push("input", input.display().to_string());
    report.push("output", output.display().to_string());
    let pyr = read_haar(input)?;
    let t0 = Instant::now();
    let map = inverse_transform(&pyr)?;
    report.push_ms("inverse_ms", t0.elapsed().as_secs_f64());
    let img = map_to_image(&map);
    match output.extension().and_then(|e| e.to_str()) {
        Some("ppm") => write_ppm(output, &img)?,
        _ => write_pfm(output, &img)?,
    }
    report.push("size_exp", pyr.size_exp().to_string());
    Ok(report)
}

/// `rotate <in.haar> <out.haar> --alpha --beta --gamma ...`.
#[allow(clippy::too_many_arguments)]
pub fn cmd_rotate(
    input: &Path,
    output: &Path,
    alpha_deg: f64,
    beta_deg: f64,
    gamma_deg: f64,
    start_level: usize,
    mode: RotationMode,
    verify: bool,
) -> Result<RunReport> {
    let mut report = RunReport::new("rotate");
    report.push("input", input.display().to_string());
    report.push("output", output.display().to_string());
    report.push("alpha_deg", fmt_num(alpha_deg));
    report.push("beta_deg", fmt_num(beta_deg));
    report.push("gamma_deg", fmt_num(gamma_deg));
    report.push("start_level", start_level.to_string());
    report.push(
        "mode",
        match mode {
            RotationMode::Haar => "haar",
            RotationMode::SpatialOracle => "spatial",
        },
    );
    let pyr = read_haar(input)?;
    let rot = RotationSpec::from_euler(
        alpha_deg.to_radians(),
        beta_deg.to_radians(),
        gamma_deg.to_radians(),
    );
    let spatial = |p: &HaarPyramid| -> Result<HaarPyramid> {
        let map = inverse_transform(p)?;
        Ok(forward_transform(&rotate_map_spatial(&map, &rot)))
    };
    let t0 = Instant::now();
    let rotated = match mode {
        RotationMode::Haar => build_rotated_pyramid(&pyr, &rot, start_level)?,
        RotationMode::SpatialOracle => spatial(&pyr)?,
    };
    report.push_ms("rotate_ms", t0.elapsed().as_secs_f64());
    if verify {
        let oracle = match mode {
            RotationMode::Haar => spatial(&pyr)?,
            RotationMode::SpatialOracle => build_rotated_pyramid(&pyr, &rot, start_level)?,
        };
        let psnr = match mode {
            RotationMode::Haar => pyramid_psnr(&oracle, &rotated)?,
            RotationMode::SpatialOracle => pyramid_psnr(&rotated, &oracle)?,
        };
        report.push_num("verify_psnr_db", psnr);
    }
    write_haar(output, &rotated)?;
    Ok(report)
}

pub struct RenderOverrides {
    pub k: Option<usize>,
    pub size_exp: Option<u32>,
    pub buckets: Option<usize>,
    pub start_level: Option<usize>,
    pub mode: Option<RotationMode>,
    pub verify: bool,
}

/// `render <scene> --env <map> --out <image>`.
pub fn cmd_render(
    scene_path: &Path,
    env_path: &Path,
    out_path: &Path,
    over: &RenderOverrides,
) -> Result<RunReport> {
    let mut report = RunReport::new("render");
    report.push("scene", scene_path.display().to_string());
    report.push("env", env_path.display().to_string());
    report.push("output", out_path.display().to_string());
    let scene = load_scene(scene_path)?;
    let mut options: RenderOptions = scene.options;
    if let Some(k) = over.k {
        options.k = k;
    }
    if let Some(n) = over.size_exp {
        options.size_exp = n;
    }
    if let Some(d) = over.buckets {
        options.buckets = d;
    }
    if let Some(s) = over.start_level {
        options.start_level = s;
    }
    if let Some(m) = over.mode {
        options.mode = m;
    }
    let env = read_map(env_path)?;
    if env.size_exp() != options.size_exp {
        return Err(Error::SizeMismatch(env.size_exp(), options.size_exp));
    }
    report.push("k", options.k.to_string());
    report.push("n", options.size_exp.to_string());
    report.push("d", options.buckets.to_string());
    report.push("start_level", options.start_level.to_string());
    report.push(
        "mode",
        match options.mode {
            RotationMode::Haar => "haar",
            RotationMode::SpatialOracle => "spatial",
        },
    );
    let t0 = Instant::now();
    let (img, mask) = render_image(&scene, &env, &options)?;
    report.push_ms("render_ms", t0.elapsed().as_secs_f64());
    report.push("hit_pixels", mask.iter().filter(|&&h| h).count().to_string());
    report.push("image_hash", format!("{:016x}", image_hash(&img)));
    write_pfm(out_path, &img)?;
    let preview = out_path.with_extension("ppm");
    write_ppm(&preview, &img)?;
    report.push("preview", preview.display().to_string());
    if over.verify {
        let mut other = options;
        other.mode = match options.mode {
            RotationMode::Haar => RotationMode::SpatialOracle,
            RotationMode::SpatialOracle => RotationMode::Haar,
        };
        let (oracle_img, _) = render_image(&scene, &env, &other)?;
        let (reference, test) = match options.mode {
            RotationMode::Haar => (&oracle_img, &img),
            RotationMode::SpatialOracle => (&img, &oracle_img),
        };
        let cmp = compare_images(reference, test, Some(scene.background))?;
        report.push_num("verify_mse", cmp.mse);
        report.push_num("verify_psnr_db", cmp.psnr_db);
    }
    Ok(report)
}

/// `compare <reference> <test>`: MSE and PSNR per the render-module rules.
pub fn cmd_compare(
    reference: &Path,
    test: &Path,
    background: Option<[f64; 3]>,
) -> Result<RunReport> {
    let mut report = RunReport::new("compare");
    report.push("reference", reference.display().to_string());
    report.push("test", test.display().to_string());
    let load = |p: &Path| -> Result<Image> {
        match p.extension().and_then(|e| e.to_str()) {
            Some("ppm") => read_ppm(p),
            _ => read_pfm(p),
        }
    };
    let a = load(reference)?;
    let b = load(test)?;
    let r = compare_images(&a, &b, background)?;
    if r.empty_mask {
        report.push("warning", "empty comparison mask (all background)");
    }
    report.push("compared_pixels", r.compared.to_string());
    report.push_num("mse", r.mse);
    report.push_num("psnr_db", r.psnr_db);
    Ok(report)
}

fn median_ms(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples[samples.len() / 2] * 1e3
}

/// `bench`: wall-clock scaling of the Haar-domain rotation and of the
/// recursive vs direct coarse synthesis, with pass/fail ratio checks.
pub fn cmd_bench(
    sizes: &[u32],
    start_levels: &[usize],
    trials: usize,
    seed: u64,
    csv: Option<&Path>,
) -> Result<RunReport> {
    let mut report = RunReport::new("bench");
    report.push("sizes", sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "));
    report.push(
        "start_levels",
        start_levels.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "),
    );
    report.push("trials", trials.to_string());
    report.push("seed", seed.to_string());
    if rayon::current_num_threads() > 1 {
        report.push(
            "note",
            "ratios reflect the active thread pool; set HAARLIGHT_THREADS=1 for \
             single-threaded algorithmic scaling",
        );
    }
    let trials = trials.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot = random_rotation_uniform(&mut rng);
    let header = vec![
        "kind".to_string(),
        "n".to_string(),
        "start_level".to_string(),
        "coeffs".to_string(),
        "time_ms".to_string(),
        "time_direct_ms".to_string(),
    ];
    let mut rows: Vec<Vec<String>> = Vec::new();

    // Scaling in the coefficient count: full pyramids, start at the top.
    let mut scaling_times = Vec::new();
    for &n in sizes {
        if n < 2 {
            return Err(Error::MalformedPyramid("bench sizes must be >= 2".into()));
        }
        let map = phong_lobe_map(n, 1.1, 0.9, 20.0);
        let pyr = forward_transform(&map);
        let start = n as usize - 1;
        let mut samples = Vec::with_capacity(trials);
        let _ = build_rotated_pyramid(&pyr, &rot, start)?; // warm-up
        for _ in 0..trials {
            let t = Instant::now();
            let out = build_rotated_pyramid(&pyr, &rot, start)?;
            samples.push(t.elapsed().as_secs_f64());
            std::hint::black_box(&out);
        }
        let ms = median_ms(&mut samples);
        scaling_times.push((n, ms));
        rows.push(vec![
            "scaling".into(),
            n.to_string(),
            start.to_string(),
            (1u64 << (2 * n)).to_string(),
            fmt_num(ms),
            String::new(),
        ]);
    }
    for pair in scaling_times.windows(2) {
        let (n0, t0) = pair[0];
        let (n1, t1) = pair[1];
        if n1 == n0 + 1 && t0 > 0.0 {
            let ratio = t1 / t0;
            report.push_num(&format!("scaling_ratio_{n0}_{n1}"), ratio);
            report.push(
                &format!("scaling_ratio_{n0}_{n1}_in_3_6"),
                if (3.0..=6.0).contains(&ratio) { "pass" } else { "fail" },
            );
        }
    }

    // Start-level drops: coefficients truncated to levels <= s, so the cost
    // tracks the retained count N / 4^k.
    if let Some(&n_max) = sizes.iter().max() {
        let map = phong_lobe_map(n_max, 1.1, 0.9, 20.0);
        let full = forward_transform(&map);
        let mut drop_times = Vec::new();
        for &s in start_levels {
            if s < 1 || s >= n_max as usize {
                return Err(Error::BadStartLevel {
                    start_level: s,
                    max: n_max as usize - 1,
                });
            }
            let mut pyr = full.clone();
            for l in s + 1..n_max as usize {
                let lev = &mut pyr.levels[l];
                lev.h.iter_mut().for_each(|v| *v = 0.0);
                lev.v.iter_mut().for_each(|v| *v = 0.0);
                lev.d.iter_mut().for_each(|v| *v = 0.0);
            }
            let _ = build_rotated_pyramid(&pyr, &rot, s)?;
            let mut samples = Vec::with_capacity(trials);
            for _ in 0..trials {
                let t = Instant::now();
                let out = build_rotated_pyramid(&pyr, &rot, s)?;
                samples.push(t.elapsed().as_secs_f64());
                std::hint::black_box(&out);
            }
            let ms = median_ms(&mut samples);
            drop_times.push((s, ms));
            rows.push(vec![
                "level_drop".into(),
                n_max.to_string(),
                s.to_string(),
                (1u64 << (2 * (s + 1))).to_string(),
                fmt_num(ms),
                String::new(),
            ]);
        }
        let mut sorted = drop_times.clone();
        sorted.sort_by_key(|&(s, _)| std::cmp::Reverse(s));
        for pair in sorted.windows(2) {
            let (s_hi, t_hi) = pair[0];
            let (s_lo, t_lo) = pair[1];
            if s_hi == s_lo + 1 && t_lo > 0.0 {
                let ratio = t_hi / t_lo;
                report.push_num(&format!("drop_ratio_{s_hi}_{s_lo}"), ratio);
                report.push(
                    &format!("drop_ratio_{s_hi}_{s_lo}_in_2_8"),
                    if (2.0..=8.0).contains(&ratio) { "pass" } else { "fail" },
                );
            }
        }
    }

    // Recursive vs direct synthesis of all coarser levels.
    for &n in sizes {
        let map = phong_lobe_map(n, 1.1, 0.9, 20.0);
        let pyr = forward_transform(&map);
        let fields = coeffs_to_derivatives(&pyr, n)?;
        let mut rec_samples = Vec::with_capacity(trials);
        let mut dir_samples = Vec::with_capacity(trials);
        for _ in 0..trials {
            let t = Instant::now();
            let mut state = fields.clone();
            for l in (0..n as usize).rev() {
                let lev = derivatives_to_coeffs(&state);
                std::hint::black_box(&lev);
                if l > 0 {
                    state = downsample_fields(&state);
                }
            }
            rec_samples.push(t.elapsed().as_secs_f64());
            let t = Instant::now();
            for target in 0..n {
                let lev = synthesize_coarser_direct(&fields, target)?;
                std::hint::black_box(&lev);
            }
            dir_samples.push(t.elapsed().as_secs_f64());
        }
        rows.push(vec![
            "synthesis".into(),
            n.to_string(),
            (n - 1).to_string(),
            (1u64 << (2 * n)).to_string(),
            fmt_num(median_ms(&mut rec_samples)),
            fmt_num(median_ms(&mut dir_samples)),
        ]);
    }

    report.table = Some((header, rows));
    if let Some(path) = csv {
        report.write_csv(path)?;
        report.push("csv", path.display().to_string());
    }
    Ok(report)
}

/// Parses `r,g,b` or `r g b` into a color triple.
pub fn parse_color(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .collect();
    if parts.len() != 3 {
        return Err(format!("expected three components, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p.parse().map_err(|_| format!("bad number {p:?}"))?;
    }
    Ok(out)
}

/// Writes a map as a PFM file (fixture helper used by the CLI and tests).
pub fn write_map_pfm(path: &Path, map: &LatLongMap) -> Result<()> {
    write_pfm(path, &map_to_image(map))
}

/// Bounded thread pool honoring HAARLIGHT_THREADS; called once at startup.
pub fn init_thread_pool() {
    if let Ok(v) = std::env::var("HAARLIGHT_THREADS") {
        if let Ok(k) = v.parse::<usize>() {
            if k >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
        }
    }
}

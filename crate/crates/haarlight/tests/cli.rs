//! End-to-end tests of the `haarlight` binary: file round trips, report
//! contents, exit codes, and determinism of rendered output.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use haarlight::cli::write_map_pfm;
use haarlight::fixtures::{phong_lobe_map, synthetic_environment};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_haarlight"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn haarlight")
}

fn stdout_field(out: &Output, key: &str) -> String {
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            if k == key {
                return v.to_string();
            }
        }
    }
    panic!("field {key} missing in output:\n{text}");
}

fn tmp() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().to_path_buf();
    (dir, p)
}

#[test]
fn transform_then_inverse_roundtrip() {
    let (_guard, dir) = tmp();
    let env = synthetic_environment(5, 0, 11);
    let src = dir.join("env.pfm");
    write_map_pfm(&src, &env).unwrap();
    let pyr = dir.join("env.haar");
    let out = run(&[
        "transform",
        src.to_str().unwrap(),
        pyr.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let residual: f64 = stdout_field(&out, "parseval_residual").parse().unwrap();
    assert!(residual < 1e-9);

    let back = dir.join("back.pfm");
    let out = run(&["inverse", pyr.to_str().unwrap(), back.to_str().unwrap()]);
    assert!(out.status.success());

    // Per-pixel error bounded by float32 storage.
    let out = run(&[
        "compare",
        src.to_str().unwrap(),
        back.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let psnr: f64 = stdout_field(&out, "psnr_db").parse().unwrap();
    assert!(psnr > 120.0, "roundtrip psnr {psnr}");
}

#[test]
fn rotate_zero_angles_is_identity_and_verify_reports_psnr() {
    let (_guard, dir) = tmp();
    let lobe = phong_lobe_map(6, 1.1, 0.9, 20.0);
    let src = dir.join("lobe.pfm");
    write_map_pfm(&src, &lobe).unwrap();
    let pyr = dir.join("lobe.haar");
    assert!(run(&["transform", src.to_str().unwrap(), pyr.to_str().unwrap()])
        .status
        .success());

    // Zero angles: output equals input bit-for-bit.
    let same = dir.join("same.haar");
    let out = run(&[
        "rotate",
        pyr.to_str().unwrap(),
        same.to_str().unwrap(),
        "--start-level",
        "5",
    ]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(&pyr).unwrap(),
        std::fs::read(&same).unwrap(),
        "identity rotation changed the pyramid file"
    );

    // A real rotation with --verify reports PSNR against the oracle.
    let rot = dir.join("rot.haar");
    let out = run(&[
        "rotate",
        pyr.to_str().unwrap(),
        rot.to_str().unwrap(),
        "--alpha",
        "25",
        "--beta",
        "-40",
        "--gamma",
        "10",
        "--start-level",
        "5",
        "--verify",
    ]);
    assert!(out.status.success());
    let psnr: f64 = stdout_field(&out, "verify_psnr_db").parse().unwrap();
    assert!(psnr >= 40.0, "verify psnr {psnr}");
}

#[test]
fn compare_examples_and_exit_codes() {
    let (_guard, dir) = tmp();
    let env = synthetic_environment(4, 2, 3);
    let a = dir.join("a.pfm");
    write_map_pfm(&a, &env).unwrap();

    // Identical files cap at 300 dB.
    let out = run(&["compare", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(stdout_field(&out, "psnr_db"), "300");

    // A +0.01 offset against a peak-1 reference reads 40 dB.
    let mut shifted = env.clone();
    for v in shifted.samples_mut() {
        *v = (*v as f32 + 0.01f32) as f64; // stay exact under f32 IO
    }
    let b = dir.join("b.pfm");
    write_map_pfm(&b, &shifted).unwrap();
    let out = run(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    let psnr: f64 = stdout_field(&out, "psnr_db").parse().unwrap();
    assert!((psnr - 40.0).abs() < 0.1, "psnr {psnr}");

    // Background-only mask: MSE 0 with a warning.
    let zero_img = haarlight::io::Image::new(8, 8);
    let z = dir.join("z.pfm");
    haarlight::io::write_pfm(&z, &zero_img).unwrap();
    let out = run(&[
        "compare",
        z.to_str().unwrap(),
        z.to_str().unwrap(),
        "--background",
        "0,0,0",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout_field(&out, "mse"), "0");
    assert!(String::from_utf8_lossy(&out.stdout).contains("warning"));

    // Missing file: IO error, exit code 1.
    let out = run(&["compare", "nope.pfm", a.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    // Size mismatch: validation error, exit code 2.
    let small = synthetic_environment(3, 0, 1);
    let c = dir.join("c.pfm");
    write_map_pfm(&c, &small).unwrap();
    let out = run(&["compare", a.to_str().unwrap(), c.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn transform_constant_image_has_zero_details() {
    let (_guard, dir) = tmp();
    let konst =
        haarlight::map::LatLongMap::from_fn(4, 3, |_, _, ch| 0.25 + 0.1 * ch as f64).unwrap();
    let src = dir.join("const.pfm");
    write_map_pfm(&src, &konst).unwrap();
    let out_path = dir.join("const.haar");
    assert!(run(&["transform", src.to_str().unwrap(), out_path.to_str().unwrap()])
        .status
        .success());
    let f = std::fs::File::open(&out_path).unwrap();
    let pyr = haarlight::haar::read_pyramid(&mut std::io::BufReader::new(f)).unwrap();
    assert!((pyr.scaling[0] - 0.25).abs() < 1e-6);
    for lev in &pyr.levels {
        assert!(lev.is_zero());
    }
}

#[test]
fn transform_256_under_one_second() {
    let (_guard, dir) = tmp();
    let env = synthetic_environment(8, 1, 9);
    let src = dir.join("big.pfm");
    write_map_pfm(&src, &env).unwrap();
    let out_path = dir.join("big.haar");
    let t = std::time::Instant::now();
    assert!(run(&["transform", src.to_str().unwrap(), out_path.to_str().unwrap()])
        .status
        .success());
    let secs = t.elapsed().as_secs_f64();
    assert!(secs < 1.0, "256^2 transform took {secs:.2}s");
}

#[test]
fn transform_rejects_bad_dimensions() {
    let (_guard, dir) = tmp();
    // 6x4 PFM: not a power-of-two square.
    let img = haarlight::io::Image::new(6, 4);
    let p = dir.join("bad.pfm");
    haarlight::io::write_pfm(&p, &img).unwrap();
    let out = run(&["transform", p.to_str().unwrap(), dir.join("o.haar").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

fn write_sample_scene(dir: &Path) -> PathBuf {
    let scene = dir.join("ball.scene");
    std::fs::write(
        &scene,
        "\
camera.position = 0 0.4 3
camera.look_at = 0 0 0
camera.fov_deg = 40
camera.width = 16
camera.height = 16
background = 0 0 0
object.ball.type = sphere
object.ball.center = 0 0 0
object.ball.radius = 1
object.ball.material = glossy
options.k = 48
options.n = 5
options.d = 16
options.start_level = 4
options.mode = haar
",
    )
    .unwrap();
    scene
}

#[test]
fn render_hash_is_stable_and_verify_compares_modes() {
    let (_guard, dir) = tmp();
    let scene = write_sample_scene(&dir);
    let env = synthetic_environment(5, 0, 21);
    let env_path = dir.join("env.pfm");
    write_map_pfm(&env_path, &env).unwrap();

    let render = |out_name: &str, extra: &[&str]| -> Output {
        let out_path = dir.join(out_name);
        let mut args = vec![
            "render".to_string(),
            scene.to_str().unwrap().to_string(),
            "--env".into(),
            env_path.to_str().unwrap().to_string(),
            "--out".into(),
            out_path.to_str().unwrap().to_string(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        bin().args(&args).output().unwrap()
    };
    let a = render("a.pfm", &[]);
    assert!(a.status.success(), "{a:?}");
    let b = render("b.pfm", &[]);
    assert_eq!(
        stdout_field(&a, "image_hash"),
        stdout_field(&b, "image_hash"),
        "render hash differs between runs"
    );
    // The preview PPM is written alongside.
    assert!(dir.join("a.ppm").exists());

    // Single-threaded run produces the same bytes.
    let out_c = dir.join("c.pfm");
    let c = bin()
        .env("HAARLIGHT_THREADS", "1")
        .args([
            "render",
            scene.to_str().unwrap(),
            "--env",
            env_path.to_str().unwrap(),
            "--out",
            out_c.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(c.status.success());
    assert_eq!(stdout_field(&a, "image_hash"), stdout_field(&c, "image_hash"));

    // Haar vs spatial agreement at the shipped sample resolution (n = 6);
    // the quick determinism checks above run on a coarser setup.
    let env6 = synthetic_environment(6, 0, 21);
    let env6_path = dir.join("env6.pfm");
    write_map_pfm(&env6_path, &env6).unwrap();
    let out_v = dir.join("v.pfm");
    let v = bin()
        .args([
            "render",
            scene.to_str().unwrap(),
            "--env",
            env6_path.to_str().unwrap(),
            "--out",
            out_v.to_str().unwrap(),
            "--n",
            "6",
            "--k",
            "128",
            "--start-level",
            "5",
            "--verify",
        ])
        .output()
        .unwrap();
    assert!(v.status.success());
    let psnr: f64 = stdout_field(&v, "verify_psnr_db").parse().unwrap();
    assert!(psnr >= 40.0, "mode-vs-mode psnr {psnr}");
}

#[test]
fn render_k_sweep_mse_monotone() {
    let (_guard, dir) = tmp();
    let scene = write_sample_scene(&dir);
    let env = synthetic_environment(5, 1, 22);
    let env_path = dir.join("env.pfm");
    write_map_pfm(&env_path, &env).unwrap();

    // Reference: full-K oracle render.
    let reference = dir.join("ref.pfm");
    let out = bin()
        .args([
            "render",
            scene.to_str().unwrap(),
            "--env",
            env_path.to_str().unwrap(),
            "--out",
            reference.to_str().unwrap(),
            "--k",
            "1024",
            "--mode",
            "spatial",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());

    let mut prev = f64::INFINITY;
    for k in ["4", "16", "64", "256"] {
        let img = dir.join(format!("k{k}.pfm"));
        let out = bin()
            .args([
                "render",
                scene.to_str().unwrap(),
                "--env",
                env_path.to_str().unwrap(),
                "--out",
                img.to_str().unwrap(),
                "--k",
                k,
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        let cmp = run(&[
            "compare",
            reference.to_str().unwrap(),
            img.to_str().unwrap(),
        ]);
        let mse: f64 = stdout_field(&cmp, "mse").parse().unwrap();
        assert!(
            mse <= prev * (1.0 + 1e-9),
            "K={k}: mse {mse} above previous {prev}"
        );
        prev = mse;
    }
}

#[test]
fn bench_single_trial_emits_valid_csv() {
    let (_guard, dir) = tmp();
    let csv = dir.join("bench.csv");
    let out = run(&[
        "bench",
        "--sizes",
        "5,6",
        "--start-levels",
        "4,3",
        "--trials",
        "1",
        "--seed",
        "7",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("key,value"));
    assert!(text.contains("kind,n,start_level,coeffs,time_ms,time_direct_ms"));
    assert!(text.contains("scaling,5"));
    assert!(text.contains("synthesis,6"));
    // Text report repeats the same table rows.
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    for line in text.lines().filter(|l| l.starts_with("scaling,")) {
        assert!(stdout.contains(&format!("row = {line}")), "{line} not in text report");
    }
}

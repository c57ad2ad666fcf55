use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cassi_cli::manifest::RunManifest;
use cassi_cli::scube::ScubeFile;
use cassi_core::forward_model::dense_oracle;
use cassi_core::metrics;
use cassi_core::{Mask, Plane, SensingOperator, ShiftSpec, SpectralCube};
use tempfile::TempDir;

fn cassi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cassi"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = cassi(dir, args);
    assert_eq!(
        code(&out),
        0,
        "{args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(path: impl AsRef<Path>) -> ScubeFile {
    ScubeFile::decode(&std::fs::read(path).unwrap()).unwrap()
}

fn write_cube(path: &Path, cube: &SpectralCube, wavelengths: Option<Vec<f32>>) {
    let mut f = ScubeFile::from_cube(cube, None);
    f.wavelengths = wavelengths;
    std::fs::write(path, f.encode()).unwrap();
}

/// Header plus payload assembled byte by byte.
fn hand_scube(bands: u32, rows: u32, cols: u32, data: &[f32]) -> Vec<u8> {
    let mut b = b"SCUB".to_vec();
    b.push(1);
    for d in [bands, rows, cols] {
        b.extend_from_slice(&d.to_le_bytes());
    }
    for v in data {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

/// A tiny synthetic problem plus the generator knobs that keep runs short.
fn small_problem(dir: &Path) {
    ok(
        dir,
        &[
            "synth",
            "--bands",
            "2",
            "--rows",
            "16",
            "--cols",
            "16",
            "--seed",
            "4",
            "--out-cube",
            "scene.scube",
            "--out-mask",
            "mask.scube",
        ],
    );
    ok(
        dir,
        &[
            "simulate",
            "--cube",
            "scene.scube",
            "--mask",
            "mask.scube",
            "--out",
            "y.scube",
        ],
    );
}

const QUICK: &[&str] = &[
    "--widths",
    "4,8",
    "--inner-base",
    "5",
    "--inner-step",
    "2",
    "--inner-cap",
    "12",
    "--outer",
    "3",
];

fn reconstruct(dir: &Path, mode: &str, out: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "reconstruct",
        "--meas",
        "y.scube",
        "--mask",
        "mask.scube",
        "--truth",
        "scene.scube",
        "--mode",
        mode,
        "--out",
        out,
    ];
    args.extend_from_slice(QUICK);
    args.extend_from_slice(extra);
    cassi(dir, &args)
}

#[test]
fn worked_example_from_hand_written_files() {
    let dir = TempDir::new().unwrap();
    let (a, b, c, e) = (0.25f32, 0.75, 1.5, 2.0);
    std::fs::write(dir.path().join("x.scube"), hand_scube(2, 1, 2, &[a, b, c, e])).unwrap();
    std::fs::write(dir.path().join("m.scube"), hand_scube(1, 1, 2, &[1.0, 0.5])).unwrap();
    ok(
        dir.path(),
        &[
            "simulate", "--cube", "x.scube", "--mask", "m.scube", "--shift", "1", "--out", "y.scube",
        ],
    );
    let y = read(dir.path().join("y.scube"));
    assert_eq!((y.bands, y.rows, y.cols), (1, 1, 3));
    assert_eq!(y.data, vec![a, 0.5 * b + c, 0.5 * e]);
    assert_eq!(
        std::fs::read(dir.path().join("y.scube")).unwrap(),
        hand_scube(1, 1, 3, &[0.25, 1.875, 1.0])
    );

    let mask = Mask::new(Plane::from_vec(1, 2, vec![1.0, 0.5]).unwrap()).unwrap();
    let h = dense_oracle(&SensingOperator::new(mask, ShiftSpec::new(1), 2).unwrap()).unwrap();
    let dense = h.matvec(&[a, b, c, e].map(f64::from));
    let got: Vec<f64> = y.data.iter().map(|&v| f64::from(v)).collect();
    assert_eq!(got, dense);
}

#[test]
fn noiseless_simulate_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    small_problem(dir.path());
    ok(
        dir.path(),
        &[
            "simulate",
            "--cube",
            "scene.scube",
            "--mask",
            "mask.scube",
            "--out",
            "y2.scube",
        ],
    );
    let (p, q) = (dir.path().join("y.scube"), dir.path().join("y2.scube"));
    assert_eq!(std::fs::read(p).unwrap(), std::fs::read(q).unwrap());
}

#[test]
fn snr_target_recorded_in_manifest() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "synth",
            "--rows",
            "32",
            "--cols",
            "32",
            "--out-cube",
            "scene.scube",
            "--out-mask",
            "mask.scube",
        ],
    );
    for seed in ["0", "1", "2"] {
        let out = format!("y{seed}.scube");
        ok(
            dir.path(),
            &[
                "simulate",
                "--cube",
                "scene.scube",
                "--mask",
                "mask.scube",
                "--snr",
                "25",
                "--seed",
                seed,
                "--out",
                &out,
            ],
        );
        let m = RunManifest::read(&dir.path().join(format!("{out}.manifest.json"))).unwrap();
        let noise = m.noise.unwrap();
        assert!(
            (noise.achieved_snr_db - 25.0).abs() <= 0.2,
            "achieved {}",
            noise.achieved_snr_db
        );
        assert!(noise.photon_scale > 0.0);
        assert_eq!(m.inputs.len(), 2);
    }
}

#[test]
fn outputs_never_overwritten_without_force() {
    let dir = TempDir::new().unwrap();
    small_problem(dir.path());
    let y = dir.path().join("y.scube");
    std::fs::write(&y, b"sentinel").unwrap();
    let out = cassi(
        dir.path(),
        &[
            "simulate",
            "--cube",
            "scene.scube",
            "--mask",
            "mask.scube",
            "--out",
            "y.scube",
        ],
    );
    assert_eq!(code(&out), 2);
    assert_eq!(std::fs::read(&y).unwrap(), b"sentinel");
    ok(
        dir.path(),
        &[
            "simulate",
            "--cube",
            "scene.scube",
            "--mask",
            "mask.scube",
            "--out",
            "y.scube",
            "--force",
        ],
    );
    assert_eq!(read(&y).rows, 16);

    std::fs::create_dir(dir.path().join("img")).unwrap();
    std::fs::write(dir.path().join("img/channel_000.png"), b"keep").unwrap();
    let out = cassi(
        dir.path(),
        &["render", "--cube", "scene.scube", "--channels", "0,1", "--out", "img"],
    );
    assert_eq!(code(&out), 2);
    assert_eq!(std::fs::read(dir.path().join("img/channel_000.png")).unwrap(), b"keep");
    assert!(!dir.path().join("img/channel_001.png").exists());
}

#[test]
fn invalid_mode_is_a_config_error_with_no_outputs() {
    let dir = TempDir::new().unwrap();
    small_problem(dir.path());
    let out = reconstruct(dir.path(), "dual_dip", "r.scube", &[]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("r.scube").exists());
    assert!(!dir.path().join("r.scube.manifest.json").exists());
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = TempDir::new().unwrap();
    small_problem(dir.path());
    let d = dir.path();
    std::fs::write(d.join("junk.scube"), b"not a cube").unwrap();
    let parse = cassi(
        d,
        &[
            "simulate",
            "--cube",
            "junk.scube",
            "--mask",
            "mask.scube",
            "--out",
            "a.scube",
        ],
    );
    assert_eq!(code(&parse), 3);
    let missing = cassi(
        d,
        &[
            "simulate",
            "--cube",
            "nope.scube",
            "--mask",
            "mask.scube",
            "--out",
            "a.scube",
        ],
    );
    assert_eq!(code(&missing), 3);

    std::fs::write(d.join("small_mask.scube"), hand_scube(1, 8, 8, &[1.0; 64])).unwrap();
    let dim = cassi(
        d,
        &[
            "simulate",
            "--cube",
            "scene.scube",
            "--mask",
            "small_mask.scube",
            "--out",
            "a.scube",
        ],
    );
    assert_eq!(code(&dim), 4);
    let dim = cassi(
        d,
        &[
            "reconstruct",
            "--meas",
            "y.scube",
            "--mask",
            "mask.scube",
            "--bands",
            "3",
            "--out",
            "a.scube",
        ],
    );
    assert_eq!(code(&dim), 4);
    assert!(!d.join("a.scube").exists());

    let usage = cassi(d, &["render", "--cube", "scene.scube", "--out", "img"]);
    assert_eq!(code(&usage), 2);
    assert_eq!(code(&cassi(d, &["simulate", "--cube"])), 2);

    let diverged = reconstruct(
        d,
        "pnp_dip",
        "div.scube",
        &["--precision", "f64", "--learning-rate", "1e300"],
    );
    assert_eq!(code(&diverged), 5, "{}", String::from_utf8_lossy(&diverged.stderr));
    assert!(!d.join("div.scube").exists());
    let m = RunManifest::read(&d.join("div.scube.manifest.json")).unwrap();
    assert!(m.error.unwrap().contains("diverged"));
    assert!(m.outputs.is_empty());
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = TempDir::new().unwrap();
    small_problem(dir.path());
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"mode": "admm_tv", "mu": 0.05, "outer_iters": 2, "tv": {"iters": 7}}"#,
    )
    .unwrap();
    ok(
        d,
        &[
            "reconstruct",
            "--meas",
            "y.scube",
            "--mask",
            "mask.scube",
            "--config",
            "cfg.json",
            "--mu",
            "0.02",
            "--seed",
            "9",
            "--out",
            "r.scube",
        ],
    );
    let m = RunManifest::read(&d.join("r.scube.manifest.json")).unwrap();
    let cassi_cli::manifest::CommandRecord::Reconstruct(rec) = m.run else {
        panic!("wrong record")
    };
    assert_eq!(rec.config.mode, cassi_core::SolverMode::AdmmTv);
    assert_eq!(rec.config.mu, 0.02);
    assert_eq!(rec.config.outer_iters, 2);
    assert_eq!(rec.config.tv.iters, 7);
    assert_eq!(
        rec.config.tv.tolerance,
        cassi_core::solver::TvSettings::default().tolerance
    );
    assert_eq!(rec.config.seeds, cassi_core::solver::Seeds::from_base(9));
    assert_eq!(rec.bands, 2);

    std::fs::write(d.join("typo.json"), r#"{"tv": {"iter": 7}}"#).unwrap();
    let out = cassi(
        d,
        &[
            "reconstruct",
            "--meas",
            "y.scube",
            "--mask",
            "mask.scube",
            "--config",
            "typo.json",
            "--out",
            "t.scube",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tv.iter"));
    std::fs::write(d.join("broken.json"), "{ mu: ").unwrap();
    let out = cassi(
        d,
        &[
            "reconstruct",
            "--meas",
            "y.scube",
            "--mask",
            "mask.scube",
            "--config",
            "broken.json",
            "--out",
            "t.scube",
        ],
    );
    assert_eq!(code(&out), 3);
}

#[test]
fn paper_defaults_echoed_in_manifest() {
    let dir = TempDir::new().unwrap();
    small_problem(dir.path());
    let out = reconstruct(dir.path(), "pnp_dip", "r.scube", &["--mu", "0.01", "--rho", "0.001"]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("r.scube.manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(m["run"]["config"]["mu"], 0.01);
    assert_eq!(m["run"]["config"]["rho"], 0.001);
    assert_eq!(m["run"]["config"]["mode"], "pnp_dip");
    assert_eq!(m["report"]["diagnostics"].as_array().unwrap().len(), 3);
    assert!(m["metrics"]["psnr_db"].is_f64());
}

fn parse_csv(text: &str) -> Vec<(String, f64, f64)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(r.headers().unwrap(), vec!["channel", "psnr_db", "ssim"]);
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].to_string(), rec[1].parse().unwrap(), rec[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn evaluate_csv_matches_in_process_metrics() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_problem(d);
    let truth: Vec<f64> = read(d.join("scene.scube")).data.iter().map(|&v| f64::from(v)).collect();
    let noisy: Vec<f64> = truth
        .iter()
        .enumerate()
        .map(|(i, v)| v + 0.05 * ((i * 7919 % 13) as f64 / 13.0 - 0.5))
        .collect();
    let est = SpectralCube::from_vec(2, 16, 16, noisy).unwrap();
    write_cube(&d.join("est.scube"), &est, None);
    std::fs::write(
        d.join("regions.json"),
        r#"[{"name": "corner", "row": 0, "col": 0, "height": 4, "width": 4}]"#,
    )
    .unwrap();
    let out = ok(
        d,
        &[
            "evaluate",
            "--truth",
            "scene.scube",
            "--est",
            "est.scube",
            "--regions",
            "regions.json",
            "--csv",
            "m.csv",
            "--json",
            "m.json",
        ],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("region corner"));

    let t = read(d.join("scene.scube")).to_cube().unwrap();
    let e = read(d.join("est.scube")).to_cube().unwrap();
    let reference = metrics::evaluate(&t, &e, &[]).unwrap();
    let rows = parse_csv(&std::fs::read_to_string(d.join("m.csv")).unwrap());
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].0, "0");
    assert_eq!(rows[2].0, "avg");
    for (m, (_, p, s)) in rows[..2].iter().enumerate() {
        assert!((p - reference.psnr_per_channel[m]).abs() <= 1e-10);
        assert!((s - reference.ssim_per_channel[m]).abs() <= 1e-10);
    }
    assert!((rows[2].1 - reference.psnr_db).abs() <= 1e-10);
    assert!((rows[2].2 - reference.ssim).abs() <= 1e-10);
    let json: metrics::MetricReport = serde_json::from_slice(&std::fs::read(d.join("m.json")).unwrap()).unwrap();
    assert_eq!(json.spectral_correlation.len(), 1);
}

#[test]
fn evaluate_flags_identical_cubes() {
    let dir = TempDir::new().unwrap();
    small_problem(dir.path());
    let out = ok(
        dir.path(),
        &[
            "evaluate",
            "--truth",
            "scene.scube",
            "--est",
            "scene.scube",
            "--csv",
            "m.csv",
        ],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("identical"));
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(csv, "channel,psnr_db,ssim\n0,inf,1\n1,inf,1\navg,inf,1\n");
}

fn decode_png(path: PathBuf) -> image::DynamicImage {
    image::open(path).unwrap()
}

#[test]
fn render_grayscale_levels() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut cube = SpectralCube::filled(2, 3, 5, 0.5);
    cube.channel_mut(1).fill(0.0);
    write_cube(&d.join("c.scube"), &cube, None);
    ok(d, &["render", "--cube", "c.scube", "--channels", "all", "--out", "img"]);
    let half = decode_png(d.join("img/channel_000.png")).into_luma8();
    assert_eq!(half.dimensions(), (5, 3));
    assert!(half.pixels().all(|p| p.0 == [128]));
    let black = decode_png(d.join("img/channel_001.png")).into_luma8();
    assert!(black.pixels().all(|p| p.0 == [0]));

    // no wavelengths in this file
    let out = cassi(d, &["render", "--cube", "c.scube", "--srgb", "--out", "rgb"]);
    assert_eq!(code(&out), 2);
    assert!(!d.join("rgb").exists());
}

#[test]
fn render_srgb_of_green_light() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut cube = SpectralCube::zeros(3, 2, 2);
    cube.channel_mut(1).fill(0.3);
    write_cube(&d.join("mono.scube"), &cube, Some(vec![450.0, 550.0, 650.0]));
    ok(d, &["render", "--cube", "mono.scube", "--srgb", "--out", "img"]);
    let rgb = decode_png(d.join("img/srgb.png")).into_rgb8();
    for p in rgb.pixels() {
        let [r, g, b] = p.0;
        assert!(g > r && g > b, "{r} {g} {b}");
    }
    write_cube(
        &d.join("dark.scube"),
        &SpectralCube::zeros(3, 2, 2),
        Some(vec![450.0, 550.0, 650.0]),
    );
    ok(d, &["render", "--cube", "dark.scube", "--srgb", "--out", "dark"]);
    assert!(decode_png(d.join("dark/srgb.png"))
        .into_rgb8()
        .pixels()
        .all(|p| p.0 == [0, 0, 0]));
}

#[test]
fn replay_reproduces_and_detects_tampering() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_problem(d);
    assert_eq!(code(&reconstruct(d, "pnp_dip_tv", "r.scube", &[])), 0);
    let manifest = d.join("r.scube.manifest.json");
    let out = ok(d, &["replay", "--manifest", "r.scube.manifest.json"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("3 iterations"));
    ok(d, &["replay", "--manifest", "y.scube.manifest.json"]);
    ok(d, &["replay", "--manifest", "scene.scube.manifest.json"]);

    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    let f = v["report"]["diagnostics"][1]["fidelity"].as_f64().unwrap();
    v["report"]["diagnostics"][1]["fidelity"] = serde_json::json!(f * (1.0 + f64::EPSILON));
    std::fs::write(d.join("tampered.json"), serde_json::to_vec(&v).unwrap()).unwrap();
    let out = cassi(d, &["replay", "--manifest", "tampered.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("diagnostics"));

    ok(
        d,
        &[
            "simulate",
            "--cube",
            "scene.scube",
            "--mask",
            "mask.scube",
            "--snr",
            "30",
            "--out",
            "y.scube",
            "--force",
        ],
    );
    let out = cassi(d, &["replay", "--manifest", "r.scube.manifest.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn thread_cap_is_validated() {
    let dir = TempDir::new().unwrap();
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_cassi"))
            .current_dir(dir.path())
            .env("SCI_RECON_THREADS", v)
            .args([
                "synth",
                "--rows",
                "8",
                "--cols",
                "8",
                "--out-cube",
                &format!("c{v}.scube"),
                "--out-mask",
                &format!("m{v}.scube"),
            ])
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("1")), 0);
    assert_eq!(code(&run("zero")), 2);
}

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cassi_core::forward_model::add_poisson_noise;
use cassi_core::metrics::{self, MetricReport, Region};
use cassi_core::scene::{random_mask, synthetic_scene, SceneSpec};
use cassi_core::solver::Seeds;
use cassi_core::{run, CoreError, SensingOperator, ShiftSpec, SolverConfig, SolverMode, SpectralCube};
use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};
use serde_json::Value;

use crate::args::{EvaluateArgs, ReconstructArgs, RenderArgs, ReplayArgs, SimulateArgs, SynthArgs};
use crate::cie::{to_u8, SrgbProjector};
use crate::error::{CliError, Result};
use crate::manifest::{
    CommandRecord, FileDigest, NoiseRecord, ReconstructRecord, RunManifest, SimulateRecord, SynthRecord,
};
use crate::scube::{read_bytes, read_scube, ScubeFile};
use crate::write_output;

/// A command's results, computed but not yet written.
pub struct Outcome {
    pub manifest: RunManifest,
    pub files: Vec<(PathBuf, Vec<u8>)>,
    /// Set when the run failed after producing a partial manifest.
    pub failure: Option<CliError>,
}

fn absolute(path: &Path) -> Result<String> {
    std::path::absolute(path)
        .map(|p| p.display().to_string())
        .map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })
}

fn default_manifest(out: &Path) -> PathBuf {
    let mut s = OsString::from(out.as_os_str());
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Fails before any work is done if an output would be clobbered.
fn preflight(paths: &[&Path], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(CliError::Exists(p.to_path_buf())),
        None => Ok(()),
    }
}

fn finish(outcome: Outcome, manifest_path: &Path, force: bool) -> Result<()> {
    for (path, bytes) in &outcome.files {
        write_output(path, bytes, force)?;
    }
    outcome.manifest.write(manifest_path, force)?;
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let manifest_path = a.manifest.clone().unwrap_or_else(|| default_manifest(&a.out_cube));
    preflight(&[&a.out_cube, &a.out_mask, &manifest_path], a.force)?;
    let rec = SynthRecord {
        bands: a.bands,
        rows: a.rows,
        cols: a.cols,
        seed: a.seed,
        mask_kind: a.mask_kind.into(),
        first_nm: a.first_nm,
        last_nm: a.last_nm,
        out_cube: absolute(&a.out_cube)?,
        out_mask: absolute(&a.out_mask)?,
    };
    let outcome = execute_synth(&rec)?;
    finish(outcome, &manifest_path, a.force)?;
    println!("wrote {} and {}", a.out_cube.display(), a.out_mask.display());
    Ok(())
}

pub fn execute_synth(rec: &SynthRecord) -> Result<Outcome> {
    let mut spec = SceneSpec::new(rec.bands, rec.rows, rec.cols, rec.seed);
    spec.first_nm = rec.first_nm;
    spec.last_nm = rec.last_nm;
    let scene = synthetic_scene(&spec)?;
    let mask = random_mask(rec.rows, rec.cols, rec.mask_kind, rec.seed.wrapping_add(1))?;
    let cube_bytes = ScubeFile::from_cube(&scene.cube, Some(&scene.wavelengths)).encode();
    let mask_bytes = ScubeFile::from_plane(mask.plane()).encode();
    let (cube_path, mask_path) = (PathBuf::from(&rec.out_cube), PathBuf::from(&rec.out_mask));
    let mut manifest = RunManifest::new(CommandRecord::Synth(rec.clone()));
    manifest.outputs = vec![
        FileDigest::new("cube", &cube_path, &cube_bytes),
        FileDigest::new("mask", &mask_path, &mask_bytes),
    ];
    Ok(Outcome {
        manifest,
        files: vec![(cube_path, cube_bytes), (mask_path, mask_bytes)],
        failure: None,
    })
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let manifest_path = a.manifest.clone().unwrap_or_else(|| default_manifest(&a.out));
    preflight(&[&a.out, &manifest_path], a.force)?;
    let rec = SimulateRecord {
        cube: absolute(&a.cube)?,
        mask: absolute(&a.mask)?,
        shift: a.shift,
        snr_db: a.snr,
        seed: a.seed,
        out: absolute(&a.out)?,
    };
    let outcome = execute_simulate(&rec)?;
    if let Some(n) = &outcome.manifest.noise {
        println!(
            "achieved SNR {:.3} dB (target {} dB, photon scale {:.6e})",
            n.achieved_snr_db, n.target_snr_db, n.photon_scale
        );
    }
    finish(outcome, &manifest_path, a.force)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn execute_simulate(rec: &SimulateRecord) -> Result<Outcome> {
    let (cube_path, mask_path) = (PathBuf::from(&rec.cube), PathBuf::from(&rec.mask));
    let (cube_file, cube_bytes) = read_scube(&cube_path)?;
    let (mask_file, mask_bytes) = read_scube(&mask_path)?;
    let cube = cube_file.to_cube()?;
    let mask = mask_file.to_mask()?;
    let op = SensingOperator::new(mask, ShiftSpec::new(rec.shift), cube.bands())?;
    let clean = op.encode(&cube)?;
    let mut manifest = RunManifest::new(CommandRecord::Simulate(rec.clone()));
    manifest.inputs = vec![
        FileDigest::new("cube", &cube_path, &cube_bytes),
        FileDigest::new("mask", &mask_path, &mask_bytes),
    ];
    let y = match rec.snr_db {
        Some(target) => {
            let noisy = add_poisson_noise(&clean, target, rec.seed)?;
            manifest.noise = Some(NoiseRecord::from((&noisy, target)));
            noisy.measurement
        }
        None => clean,
    };
    let out = PathBuf::from(&rec.out);
    let bytes = ScubeFile::from_plane(&y).encode();
    manifest.outputs = vec![FileDigest::new("measurement", &out, &bytes)];
    Ok(Outcome {
        manifest,
        files: vec![(out, bytes)],
        failure: None,
    })
}

/// Channel count implied by a measurement and mask of the given widths.
pub fn derive_bands(
    meas: (usize, usize),
    mask: (usize, usize),
    shift: usize,
    requested: Option<usize>,
) -> Result<usize> {
    let mismatch = |msg: String| Err(CliError::Core(CoreError::DimensionMismatch(msg)));
    if meas.0 != mask.0 {
        return mismatch(format!("measurement has {} rows, mask {}", meas.0, mask.0));
    }
    if meas.1 < mask.1 {
        return mismatch(format!("measurement width {} below mask width {}", meas.1, mask.1));
    }
    let extra = meas.1 - mask.1;
    if shift == 0 {
        if extra != 0 {
            return mismatch(format!(
                "zero shift needs equal widths, found {} and {}",
                meas.1, mask.1
            ));
        }
        return requested.ok_or_else(|| CliError::Usage("--bands is required when --shift is 0".into()));
    }
    if !extra.is_multiple_of(shift) {
        return mismatch(format!("width excess {extra} is not a multiple of shift {shift}"));
    }
    let bands = extra / shift + 1;
    match requested {
        Some(b) if b != bands => mismatch(format!("--bands {b} but the measurement width implies {bands}")),
        _ => Ok(bands),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::parse(path, e))
}

/// Overlays `over` onto `base`; keys absent from `base` are rejected.
fn merge(base: &mut Value, over: Value, at: &str) -> std::result::Result<(), String> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &path)?,
                    None => return Err(path),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Flags over config file over mode defaults.
pub fn resolve_config(a: &ReconstructArgs) -> Result<SolverConfig> {
    let file = match &a.config {
        Some(p) => {
            let v = read_json(p)?;
            if !v.is_object() {
                return Err(CliError::parse(p, "config must be a JSON object"));
            }
            Some((p, v))
        }
        None => None,
    };
    let mode_name = a.mode.clone().or_else(|| {
        file.as_ref()
            .and_then(|(_, v)| v.get("mode"))
            .and_then(Value::as_str)
            .map(String::from)
    });
    let mode = match mode_name {
        Some(s) => s.parse::<SolverMode>()?,
        None => SolverMode::PnpDip,
    };
    let mut cfg = SolverConfig::for_mode(mode);
    if a.full_scale {
        cfg = cfg.full_scale();
    }
    if let Some((path, over)) = file {
        let mut base = serde_json::to_value(&cfg).expect("config serializes");
        merge(&mut base, over, "").map_err(|key| CliError::Usage(format!("unknown config key `{key}`")))?;
        cfg = serde_json::from_value(base).map_err(|e| CliError::parse(path, e))?;
        cfg.mode = mode;
    }
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.mu, a.mu);
    set(&mut cfg.rho, a.rho);
    set(&mut cfg.eta, a.eta);
    set(&mut cfg.eta_decay, a.eta_decay);
    set(&mut cfg.lambda, a.lambda);
    set(&mut cfg.network.learning_rate, a.learning_rate);
    if let Some(k) = a.outer {
        cfg.outer_iters = k;
    }
    if let Some(v) = a.inner_base {
        cfg.schedule.base = v;
    }
    if let Some(v) = a.inner_step {
        cfg.schedule.step = v;
    }
    if let Some(v) = a.inner_cap {
        cfg.schedule.cap = v;
    }
    if a.sole_iters.is_some() {
        cfg.sole_iters = a.sole_iters;
    }
    if let Some(w) = &a.widths {
        cfg.network.widths = w.clone();
    }
    if let Some(p) = a.precision {
        cfg.network.precision = p.into();
    }
    cfg.warm_start |= a.warm_start;
    cfg.normalized_init |= a.normalized_init;
    if let Some(s) = a.seed {
        cfg.seeds = Seeds::from_base(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn reconstruct(a: &ReconstructArgs) -> Result<()> {
    let config = resolve_config(a)?;
    let manifest_path = a.manifest.clone().unwrap_or_else(|| default_manifest(&a.out));
    preflight(&[&a.out, &manifest_path], a.force)?;
    let (meas, _) = read_scube(&a.meas)?;
    let (mask, _) = read_scube(&a.mask)?;
    let bands = derive_bands((meas.rows, meas.cols), (mask.rows, mask.cols), a.shift, a.bands)?;
    let rec = ReconstructRecord {
        meas: absolute(&a.meas)?,
        mask: absolute(&a.mask)?,
        shift: a.shift,
        bands,
        truth: a.truth.as_deref().map(absolute).transpose()?,
        out: absolute(&a.out)?,
        config,
    };
    let outcome = execute_reconstruct(&rec)?;
    if let Some(report) = &outcome.manifest.report {
        if let Some(last) = report.diagnostics.last() {
            let psnr = last.psnr_db.map(|p| format!(", PSNR {p:.3} dB")).unwrap_or_default();
            println!(
                "{}: {} outer iterations, fidelity ratio {:.4e}{psnr}",
                rec.config.mode,
                report.diagnostics.len(),
                last.fidelity_ratio
            );
        } else if let Some(m) = &report.final_metrics {
            println!("{}: PSNR {:.3} dB, SSIM {:.4}", rec.config.mode, m.psnr_db, m.ssim);
        }
    }
    let failed = outcome.failure.is_some();
    finish(outcome, &manifest_path, a.force)?;
    if !failed {
        println!("wrote {}", a.out.display());
    }
    Ok(())
}

pub fn execute_reconstruct(rec: &ReconstructRecord) -> Result<Outcome> {
    let (meas_path, mask_path) = (PathBuf::from(&rec.meas), PathBuf::from(&rec.mask));
    let (meas_file, meas_bytes) = read_scube(&meas_path)?;
    let (mask_file, mask_bytes) = read_scube(&mask_path)?;
    let y = meas_file.to_measurement()?;
    let op = SensingOperator::new(mask_file.to_mask()?, ShiftSpec::new(rec.shift), rec.bands)?;
    if y.dims() != op.measurement_dims() {
        return Err(CoreError::DimensionMismatch(format!(
            "measurement is {:?}, operator expects {:?}",
            y.dims(),
            op.measurement_dims()
        ))
        .into());
    }
    let mut manifest = RunManifest::new(CommandRecord::Reconstruct(Box::new(rec.clone())));
    manifest.inputs = vec![
        FileDigest::new("measurement", &meas_path, &meas_bytes),
        FileDigest::new("mask", &mask_path, &mask_bytes),
    ];
    let mut wavelengths = None;
    let truth = match &rec.truth {
        Some(p) => {
            let path = PathBuf::from(p);
            let (file, bytes) = read_scube(&path)?;
            manifest.inputs.push(FileDigest::new("truth", &path, &bytes));
            wavelengths = file.wavelength_grid().transpose()?;
            Some(file.to_cube()?)
        }
        None => None,
    };
    match run(&rec.config, &op, &y, truth.as_ref()) {
        Ok((x, mut report)) => {
            let out = PathBuf::from(&rec.out);
            report.output_paths = vec![rec.out.clone()];
            let bytes = ScubeFile::from_cube(&x, wavelengths.as_ref()).encode();
            manifest.outputs = vec![FileDigest::new("reconstruction", &out, &bytes)];
            manifest.metrics = report.final_metrics.clone();
            manifest.report = Some(report);
            Ok(Outcome {
                manifest,
                files: vec![(out, bytes)],
                failure: None,
            })
        }
        Err(failure) => {
            manifest.error = Some(failure.error.to_string());
            manifest.report = Some(*failure.partial);
            Ok(Outcome {
                manifest,
                files: Vec::new(),
                failure: Some(failure.error.into()),
            })
        }
    }
}

/// `channel,psnr_db,ssim` rows, then an `avg` row.
pub fn metrics_csv(report: &MetricReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["channel", "psnr_db", "ssim"]).expect("in-memory write");
    for (m, (p, s)) in report.psnr_per_channel.iter().zip(&report.ssim_per_channel).enumerate() {
        w.write_record([m.to_string(), p.to_string(), s.to_string()])
            .expect("in-memory write");
    }
    w.write_record(["avg".to_string(), report.psnr_db.to_string(), report.ssim.to_string()])
        .expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

pub fn metrics_table(report: &MetricReport) -> String {
    let mut s = format!("{:>8} {:>12} {:>10}\n", "channel", "psnr_db", "ssim");
    for (m, (p, q)) in report.psnr_per_channel.iter().zip(&report.ssim_per_channel).enumerate() {
        let _ = writeln!(s, "{m:>8} {p:>12.4} {q:>10.6}");
    }
    let _ = writeln!(s, "{:>8} {:>12.4} {:>10.6}", "avg", report.psnr_db, report.ssim);
    if report.psnr_identical {
        s.push_str("estimate identical to reference\n");
    }
    for (name, r) in &report.spectral_correlation {
        let _ = writeln!(s, "region {name}: spectral correlation {r:.6}");
    }
    s
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let outputs: Vec<&Path> = [a.csv.as_deref(), a.json.as_deref()].into_iter().flatten().collect();
    preflight(&outputs, a.force)?;
    let truth = read_scube(&a.truth)?.0.to_cube()?;
    let est = read_scube(&a.est)?.0.to_cube()?;
    let regions: Vec<Region> = match &a.regions {
        Some(p) => serde_json::from_value(read_json(p)?).map_err(|e| CliError::parse(p, e))?,
        None => Vec::new(),
    };
    let report = metrics::evaluate(&truth, &est, &regions)?;
    print!("{}", metrics_table(&report));
    if let Some(p) = &a.csv {
        write_output(p, metrics_csv(&report).as_bytes(), a.force)?;
    }
    if let Some(p) = &a.json {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_output(p, json.as_bytes(), a.force)?;
    }
    Ok(())
}

fn parse_channels(spec: &str, bands: usize) -> Result<Vec<usize>> {
    if spec == "all" {
        return Ok((0..bands).collect());
    }
    spec.split(',')
        .map(|t| {
            let m: usize = t
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad channel index `{t}`")))?;
            if m >= bands {
                return Err(CliError::Usage(format!(
                    "channel {m} out of range for {bands} channels"
                )));
            }
            Ok(m)
        })
        .collect()
}

fn png(width: usize, height: usize, color: ExtendedColorType, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(data, width as u32, height as u32, color)
        .expect("in-memory PNG encoding");
    out
}

pub fn gray_png(cube: &SpectralCube, m: usize) -> Vec<u8> {
    let data: Vec<u8> = cube.channel(m).iter().map(|&v| to_u8(v)).collect();
    png(cube.cols(), cube.rows(), ExtendedColorType::L8, &data)
}

pub fn srgb_png(cube: &SpectralCube, projector: &SrgbProjector) -> Vec<u8> {
    let (bands, rows, cols) = cube.dims();
    let mut data = Vec::with_capacity(3 * rows * cols);
    let mut spectrum = vec![0.0; bands];
    for u in 0..rows {
        for v in 0..cols {
            for (m, s) in spectrum.iter_mut().enumerate() {
                *s = cube.get(m, u, v);
            }
            data.extend(projector.srgb(&spectrum).map(to_u8));
        }
    }
    png(cols, rows, ExtendedColorType::Rgb8, &data)
}

pub fn render(a: &RenderArgs) -> Result<()> {
    if a.channels.is_none() && !a.srgb {
        return Err(CliError::Usage("choose --channels and/or --srgb".into()));
    }
    let (file, _) = read_scube(&a.cube)?;
    let cube = file.to_cube()?;
    let channels = match &a.channels {
        Some(s) => parse_channels(s, cube.bands())?,
        None => Vec::new(),
    };
    let projector = if a.srgb {
        let grid = file
            .wavelength_grid()
            .ok_or_else(|| CliError::Usage("--srgb needs wavelength metadata in the cube file".into()))??;
        let p = SrgbProjector::new(grid.as_slice())
            .ok_or_else(|| CliError::Usage("wavelengths lie outside the visible range".into()))?;
        Some(p)
    } else {
        None
    };
    let mut files: Vec<(PathBuf, Vec<u8>)> = channels
        .iter()
        .map(|&m| (a.out.join(format!("channel_{m:03}.png")), gray_png(&cube, m)))
        .collect();
    if let Some(p) = &projector {
        files.push((a.out.join("srgb.png"), srgb_png(&cube, p)));
    }
    let paths: Vec<&Path> = files.iter().map(|(p, _)| p.as_path()).collect();
    preflight(&paths, a.force)?;
    for (p, bytes) in &files {
        write_output(p, bytes, a.force)?;
    }
    println!("wrote {} images to {}", files.len(), a.out.display());
    Ok(())
}

fn same<T: PartialEq>(what: &str, recorded: &T, fresh: &T) -> Result<()> {
    if recorded == fresh {
        Ok(())
    } else {
        Err(CliError::Replay(format!("{what} differs")))
    }
}

/// Checks everything a rerun must reproduce; timings are exempt.
pub fn compare_manifests(recorded: &RunManifest, fresh: &RunManifest) -> Result<()> {
    for (r, f) in recorded.inputs.iter().zip(&fresh.inputs) {
        if r.fnv1a64 != f.fnv1a64 {
            return Err(CliError::Replay(format!(
                "input {} changed since the recorded run",
                r.path
            )));
        }
    }
    same("input list", &recorded.inputs.len(), &fresh.inputs.len())?;
    same("noise record", &recorded.noise, &fresh.noise)?;
    same("error", &recorded.error, &fresh.error)?;
    match (&recorded.report, &fresh.report) {
        (Some(r), Some(f)) => {
            same("diagnostics trace", &r.diagnostics, &f.diagnostics)?;
            same("sole loss trace", &r.sole_loss_trace, &f.sole_loss_trace)?;
            same("warm start summary", &r.warm_start, &f.warm_start)?;
            same("generator step count", &r.generator_steps, &f.generator_steps)?;
            same("final metrics", &r.final_metrics, &f.final_metrics)?;
        }
        (None, None) => {}
        _ => return Err(CliError::Replay("report presence differs".into())),
    }
    same("metrics", &recorded.metrics, &fresh.metrics)?;
    same("output digests", &recorded.outputs, &fresh.outputs)
}

pub fn replay(a: &ReplayArgs) -> Result<()> {
    let recorded = RunManifest::read(&a.manifest)?;
    let fresh = match &recorded.run {
        CommandRecord::Synth(r) => execute_synth(r)?,
        CommandRecord::Simulate(r) => execute_simulate(r)?,
        CommandRecord::Reconstruct(r) => execute_reconstruct(r)?,
    };
    compare_manifests(&recorded, &fresh.manifest)?;
    let iters = recorded.report.as_ref().map_or(0, |r| r.diagnostics.len());
    println!(
        "replay matches: {iters} iterations, {} output digests",
        recorded.outputs.len()
    );
    Ok(())
}

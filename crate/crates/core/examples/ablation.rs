//! Runs solver modes on one synthetic 64x64x8 scene and prints PSNR/SSIM.
//!
//! ```text
//! cargo run --release -p cassi-core --example ablation -- [seed] [mode,mode,...] [--full-scale]
//! ```

use std::time::Instant;

use cassi_core::scene::{random_mask, synthetic_scene, MaskKind, SceneSpec};
use cassi_core::solver::Seeds;
use cassi_core::{run, SensingOperator, ShiftSpec, SolverConfig, SolverMode};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let full = args.iter().any(|a| a == "--full-scale");
    let mut positional = args.iter().filter(|a| !a.starts_with("--"));
    let seed: u64 = positional
        .next()
        .map_or(0, |s| s.parse().expect("seed must be an integer"));
    let modes: Vec<SolverMode> = positional.next().map_or_else(
        || SolverMode::ALL.to_vec(),
        |s| s.split(',').map(|m| m.parse().expect("unknown mode")).collect(),
    );

    let scene = synthetic_scene(&SceneSpec::new(8, 64, 64, seed)).unwrap();
    let mask = random_mask(64, 64, MaskKind::Binary, seed.wrapping_add(1)).unwrap();
    let op = SensingOperator::new(mask, ShiftSpec::new(1), 8).unwrap();
    let y = op.encode(&scene.cube).unwrap();
    for mode in modes {
        let mut cfg = SolverConfig::for_mode(mode);
        if full {
            cfg = cfg.full_scale();
        }
        cfg.seeds = Seeds::from_base(seed);
        let start = Instant::now();
        match run(&cfg, &op, &y, Some(&scene.cube)) {
            Ok((_, report)) => {
                let m = report.final_metrics.as_ref().expect("truth given");
                println!(
                    "{mode:>16}  PSNR {:6.2} dB  SSIM {:.3}  {:6.1} s",
                    m.psnr_db,
                    m.ssim,
                    start.elapsed().as_secs_f64()
                );
            }
            Err(failure) => println!("{mode:>16}  failed: {}", failure.error),
        }
    }
}

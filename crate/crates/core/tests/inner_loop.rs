use cassi_core::scene::{random_mask, synthetic_scene, MaskKind, SceneSpec};
use cassi_core::untrained_prior::{train_inner_loop, DipLossSpec, GeneratorConfig, InnerSchedule, SeedInput};
use cassi_core::{SensingOperator, ShiftSpec, SpectralCube};

fn setup(bands: usize, size: usize, seed: u64) -> (SensingOperator, SpectralCube) {
    let scene = synthetic_scene(&SceneSpec::new(bands, size, size, seed)).unwrap();
    let mask = random_mask(size, size, MaskKind::Binary, seed + 1000).unwrap();
    (
        SensingOperator::new(mask, ShiftSpec::new(1), bands).unwrap(),
        scene.cube,
    )
}

#[test]
fn sole_fit_reaches_small_residual() {
    let (op, truth) = setup(2, 8, 4);
    let y = op.encode(&truth).unwrap();
    let cfg = GeneratorConfig {
        bands: 2,
        rows: 8,
        cols: 8,
        widths: vec![16, 32],
        leaky_slope: 0.1,
    };
    let e = SeedInput::for_config(&cfg, 1);
    let schedule = InnerSchedule { iters: 2000, seed: 2 };
    let fit = train_inner_loop::<f64>(&op, &y, &DipLossSpec::sole(), &cfg, &e, schedule, 1e-3).unwrap();
    let hp = op.encode(&fit.prior).unwrap();
    let r: f64 = hp
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let ratio = r / y.norm();
    assert!(ratio <= 0.05, "residual ratio {ratio}");
    assert_eq!(fit.losses.len(), 2000);
}

#[test]
fn final_loss_below_initial_on_most_runs() {
    let mut descended = 0;
    let runs = 20;
    for seed in 0..runs {
        let (op, truth) = setup(4, 32, 50 + seed);
        let y = op.encode(&truth).unwrap();
        let cfg = GeneratorConfig::desk_scale(4, 32, 32);
        let e = SeedInput::for_config(&cfg, seed);
        // a rough target standing in for the x-step output
        let x = op.adjoint(&y).unwrap();
        let b = SpectralCube::zeros(4, 32, 32);
        let spec = DipLossSpec::dual(0.001, 0.01, &x, &b);
        let schedule = InnerSchedule {
            iters: 50,
            seed: 100 + seed,
        };
        let fit = train_inner_loop::<f32>(&op, &y, &spec, &cfg, &e, schedule, 1e-3).unwrap();
        if fit.losses.last() <= fit.losses.first() {
            descended += 1;
        }
    }
    assert!(descended * 100 >= 95 * runs, "{descended}/{runs} runs descended");
}

#[test]
fn one_step_is_deterministic() {
    let (op, truth) = setup(2, 8, 9);
    let y = op.encode(&truth).unwrap();
    let cfg = GeneratorConfig {
        bands: 2,
        rows: 8,
        cols: 8,
        widths: vec![4, 4],
        leaky_slope: 0.1,
    };
    let e = SeedInput::for_config(&cfg, 3);
    let schedule = InnerSchedule { iters: 1, seed: 4 };
    let a = train_inner_loop::<f32>(&op, &y, &DipLossSpec::sole(), &cfg, &e, schedule, 1e-3).unwrap();
    let b = train_inner_loop::<f32>(&op, &y, &DipLossSpec::sole(), &cfg, &e, schedule, 1e-3).unwrap();
    assert_eq!(a.prior, b.prior);
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.losses.len(), 1);
    let zero = InnerSchedule { iters: 0, seed: 4 };
    assert!(train_inner_loop::<f32>(&op, &y, &DipLossSpec::sole(), &cfg, &e, zero, 1e-3).is_err());
}

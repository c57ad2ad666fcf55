//! Shared fixtures for the criterion benches.

use cassi_core::scene::{random_mask, synthetic_scene, MaskKind, SceneSpec};
use cassi_core::{Measurement, SensingOperator, ShiftSpec, SpectralCube};

pub struct Fixture {
    pub op: SensingOperator,
    pub truth: SpectralCube,
    pub y: Measurement,
}

pub fn fixture(bands: usize, size: usize, step: usize) -> Fixture {
    let scene = synthetic_scene(&SceneSpec::new(bands, size, size, 7)).expect("scene");
    let mask = random_mask(size, size, MaskKind::Binary, 11).expect("mask");
    let op = SensingOperator::new(mask, ShiftSpec::new(step), bands).expect("operator");
    let y = op.encode(&scene.cube).expect("encode");
    Fixture {
        op,
        truth: scene.cube,
        y,
    }
}

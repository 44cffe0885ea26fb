use tta_core::sampler::{rotation_list, RotationStream};
use tta_core::surrogate::{
    equivariant_oracle, predict, ExternalModel, ExternalModelConfig, ExternalModelError, Model, ModelError,
    ModelInput, OracleParams,
};
use tta_core::tensor::{OrientationTensor, SymTensor3, TensorPath};
use tta_core::tta::{run_tta_with_rotations, TtaConfig, TtaError};

fn fixture(mode: &str) -> ExternalModelConfig {
    let mut c = ExternalModelConfig::new(vec![env!("CARGO_BIN_EXE_tta-fixture-model").to_owned(), mode.to_owned()]);
    c.timeout_ms = 2_000;
    c
}

fn input(t: usize) -> ModelInput {
    let steps = (1..=t).map(|k| SymTensor3::new([1e-3, -4e-4, 2e-4, 5e-4, -1e-4, 3e-4]).scale(k as f64)).collect();
    ModelInput::new(
        OrientationTensor::new(SymTensor3::new([0.5, 0.3, 0.2, 0.05, -0.02, 0.01])).unwrap(),
        0.12,
        TensorPath::new(steps).unwrap(),
    )
    .unwrap()
}

fn external_err(r: Result<impl std::fmt::Debug, ExternalModelError>) -> ExternalModelError {
    r.expect_err("expected an error")
}

#[test]
fn echo_round_trips_exactly() {
    let m = ExternalModel::spawn(fixture("echo")).unwrap();
    let x = input(7);
    let out = m.predict(&x).unwrap();
    assert_eq!(out.stress, x.strain);
    // second request on the same worker
    assert_eq!(m.predict(&x).unwrap().stress, x.strain);
}

#[test]
fn oracle_fixture_matches_builtin() {
    let m = Model::External(ExternalModel::spawn(fixture("oracle")).unwrap());
    let x = input(12);
    let got = predict(&m, &x).unwrap();
    assert_eq!(got.stress, equivariant_oracle(&OracleParams::default(), &x).stress);
}

#[test]
fn short_response_is_a_length_error() {
    let m = ExternalModel::spawn(fixture("short")).unwrap();
    assert!(matches!(external_err(m.predict(&input(5))), ExternalModelError::Length { .. }));
}

#[test]
fn nan_literal_is_rejected() {
    let m = ExternalModel::spawn(fixture("nan")).unwrap();
    let e = external_err(m.predict(&input(4)));
    assert!(matches!(e, ExternalModelError::NonFinite { step: 0 }), "{e}");
}

#[test]
fn wrong_id_is_rejected() {
    let m = ExternalModel::spawn(fixture("bad-id")).unwrap();
    assert!(matches!(external_err(m.predict(&input(3))), ExternalModelError::IdMismatch { .. }));
}

#[test]
fn garbage_is_malformed() {
    let m = ExternalModel::spawn(fixture("garbage")).unwrap();
    assert!(matches!(external_err(m.predict(&input(3))), ExternalModelError::Malformed { .. }));
}

#[test]
fn early_exit_is_reported() {
    let m = ExternalModel::spawn(fixture("exit")).unwrap();
    let e = external_err(m.predict(&input(3)));
    assert!(matches!(e, ExternalModelError::Exited { .. } | ExternalModelError::Io(_)), "{e}");
}

#[test]
fn silent_model_times_out() {
    let mut c = fixture("sleep");
    c.timeout_ms = 200;
    let m = ExternalModel::spawn(c).unwrap();
    let start = std::time::Instant::now();
    assert!(matches!(external_err(m.predict(&input(3))), ExternalModelError::Timeout { .. }));
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn missing_program_fails_to_spawn() {
    let c = ExternalModelConfig::new(vec!["/nonexistent/model".into()]);
    assert!(matches!(ExternalModel::spawn(c).err(), Some(ExternalModelError::Spawn { .. })));
}

#[test]
fn tta_over_worker_pool_matches_builtin() {
    let mut c = fixture("oracle");
    c.workers = 3;
    let ext = Model::External(ExternalModel::spawn(c).unwrap());
    let builtin = Model::Equivariant(OracleParams::default());
    let cfg = TtaConfig { n_rotations: 24, seed: 5, ..Default::default() };
    let rotations = rotation_list(&mut RotationStream::new(5), 24);
    let x = input(10);
    let a = run_tta_with_rotations(&ext, &x, &rotations, &cfg).unwrap();
    let b = run_tta_with_rotations(&builtin, &x, &rotations, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tta_reports_failing_rotation() {
    let ext = Model::External(ExternalModel::spawn(fixture("short")).unwrap());
    let cfg = TtaConfig { n_rotations: 3, ..Default::default() };
    let err = run_tta_with_rotations(&ext, &input(4), &cfg.rotations(), &cfg).unwrap_err();
    match err {
        TtaError::Model { rotation, source: ModelError::External(ExternalModelError::Length { .. }) } => {
            assert_eq!(rotation, 0)
        }
        other => panic!("unexpected {other}"),
    }
}

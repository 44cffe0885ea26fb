//! Rotation test-time augmentation: rotate the input, predict, rotate the
//! prediction back, then aggregate and measure the spread.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Sample;
use crate::sampler::{rotation_list, RotationStream};
use crate::surrogate::{predict, ModelError, ModelInput, Predictor};
use crate::tensor::{inverse_rotate_sym, rotate_sym, von_mises_path, Rotation3, SymTensor3, TensorPath};

#[derive(Debug, Error)]
pub enum TtaError {
    #[error("rotation {rotation}: {source}")]
    Model {
        rotation: usize,
        #[source]
        source: ModelError,
    },
    #[error("no predictions to aggregate")]
    EmptyInput,
    #[error("the verbatim divisor needs at least one rotation besides the identity")]
    VerbatimWithoutRotations,
    #[error("spread needs at least 2 predictions, got {0}")]
    TooFewPredictions(usize),
    #[error("prediction {index} has {got} steps, expected {expected}")]
    LengthMismatch { index: usize, expected: usize, got: usize },
    #[error("invalid TTA configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Divisor applied to the sum of back-rotated predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivisorMode {
    /// Number of predictions, `N + 1` with the identity included.
    #[default]
    Count,
    /// `N`, the number of random rotations, with the sum still running over
    /// `i = 0..N`.
    PaperVerbatim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtaConfig {
    pub n_rotations: usize,
    pub seed: u64,
    pub include_identity: bool,
    pub mean_divisor_mode: DivisorMode,
    /// Include the identity prediction in the standard deviations (divisor
    /// `N + 1`) instead of summing `i = 1..N` over `N`.
    pub sd_include_identity: bool,
}

impl Default for TtaConfig {
    fn default() -> Self {
        TtaConfig {
            n_rotations: 200,
            seed: 0,
            include_identity: true,
            mean_divisor_mode: DivisorMode::Count,
            sd_include_identity: false,
        }
    }
}

impl TtaConfig {
    pub fn validate(&self) -> Result<(), TtaError> {
        if self.n_rotations == 0 && !self.include_identity {
            return Err(TtaError::InvalidConfig("zero rotations without the identity leaves nothing to predict".into()));
        }
        if self.mean_divisor_mode == DivisorMode::PaperVerbatim {
            if !self.include_identity {
                return Err(TtaError::InvalidConfig("the verbatim divisor assumes the identity at index 0".into()));
            }
            if self.n_rotations == 0 {
                return Err(TtaError::VerbatimWithoutRotations);
            }
        }
        Ok(())
    }

    /// Rotations used for one TTA run, identity first when included.
    pub fn rotations(&self) -> Vec<Rotation3> {
        let list = rotation_list(&mut RotationStream::new(self.seed), self.n_rotations);
        if self.include_identity {
            list
        } else {
            list[1..].to_vec()
        }
    }

    fn options(&self) -> SpreadOptions {
        SpreadOptions {
            divisor: self.mean_divisor_mode,
            skip_first_in_sd: self.include_identity && !self.sd_include_identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SpreadOptions {
    divisor: DivisorMode,
    skip_first_in_sd: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtaResult {
    /// Back-rotated predictions in rotation-list order.
    pub predictions: Vec<TensorPath>,
    pub aggregated: TensorPath,
    pub sd: Vec<[f64; 6]>,
    pub vm_individual: Vec<Vec<f64>>,
    pub vm_aggregated: Vec<f64>,
    pub vm_sd: Vec<f64>,
    /// True when `predictions[0]` is the unrotated prediction.
    pub identity_first: bool,
}

impl TtaResult {
    pub fn len(&self) -> usize {
        self.aggregated.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The unrotated prediction, when the identity is part of the list.
    pub fn initial(&self) -> Option<&TensorPath> {
        self.identity_first.then(|| &self.predictions[0])
    }
}

/// `a ← R a Rᵀ`, every strain step `ε(t) ← R ε(t) Rᵀ`, volume fraction kept.
pub fn rotate_input(input: &ModelInput, r: &Rotation3) -> ModelInput {
    ModelInput { a: input.a.rotated(r), vf: input.vf, strain: input.strain.rotated(r) }
}

pub fn run_tta(model: &dyn Predictor, input: &ModelInput, cfg: &TtaConfig) -> Result<TtaResult, TtaError> {
    cfg.validate()?;
    let rotations = cfg.rotations();
    run_tta_with_rotations(model, input, &rotations, cfg)
}

/// TTA over a caller-supplied rotation list, so a whole dataset can share one
/// list. `rotations[0]` must be the identity when `cfg.include_identity`.
pub fn run_tta_with_rotations(
    model: &dyn Predictor,
    input: &ModelInput,
    rotations: &[Rotation3],
    cfg: &TtaConfig,
) -> Result<TtaResult, TtaError> {
    if rotations.is_empty() {
        return Err(TtaError::EmptyInput);
    }
    let predictions = back_rotated_predictions(model, input, rotations)?;
    assemble(predictions, cfg.options(), cfg.include_identity)
}

/// Predicts on every rotated copy of `input` and rotates each output back.
/// Calls may run in parallel; the output keeps rotation order and the first
/// failure in that order is reported.
pub fn back_rotated_predictions(
    model: &dyn Predictor,
    input: &ModelInput,
    rotations: &[Rotation3],
) -> Result<Vec<TensorPath>, TtaError> {
    let results: Vec<Result<TensorPath, TtaError>> = rotations
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let rotated = rotate_input(input, r);
            predict(model, &rotated)
                .map(|out| out.stress.inverse_rotated(r))
                .map_err(|source| TtaError::Model { rotation: i, source })
        })
        .collect();
    results.into_iter().collect()
}

fn assemble(predictions: Vec<TensorPath>, opts: SpreadOptions, identity_first: bool) -> Result<TtaResult, TtaError> {
    let aggregated = aggregate_mean(&predictions, opts.divisor)?;
    let vm_individual: Vec<Vec<f64>> = predictions.iter().map(von_mises_path).collect();
    let vm_aggregated = von_mises_path(&aggregated);
    let (sd, vm_sd) = if predictions.len() >= 2 {
        (
            spread(&predictions, &aggregated, !opts.skip_first_in_sd)?,
            von_mises_spread(&vm_individual, &vm_aggregated, !opts.skip_first_in_sd)?,
        )
    } else {
        (vec![[0.0; 6]; aggregated.len()], vec![0.0; aggregated.len()])
    };
    Ok(TtaResult { predictions, aggregated, sd, vm_individual, vm_aggregated, vm_sd, identity_first })
}

/// Re-aggregates the first `count` predictions of an existing result.
pub fn prefix_result(full: &TtaResult, count: usize, cfg: &TtaConfig) -> Result<TtaResult, TtaError> {
    let count = count.min(full.predictions.len());
    assemble(full.predictions[..count].to_vec(), cfg.options(), full.identity_first)
}

/// Compensated (Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = NeumaierSum::default();
    xs.into_iter().for_each(|x| acc.add(x));
    acc.total()
}

fn check_lengths(predictions: &[TensorPath]) -> Result<usize, TtaError> {
    let first = predictions.first().ok_or(TtaError::EmptyInput)?;
    let t = first.len();
    for (index, p) in predictions.iter().enumerate() {
        if p.len() != t {
            return Err(TtaError::LengthMismatch { index, expected: t, got: p.len() });
        }
    }
    Ok(t)
}

/// Per-step, per-component mean of the back-rotated predictions, summed in
/// index order with compensation.
pub fn aggregate_mean(predictions: &[TensorPath], mode: DivisorMode) -> Result<TensorPath, TtaError> {
    let t_len = check_lengths(predictions)?;
    let divisor = match mode {
        DivisorMode::Count => predictions.len(),
        DivisorMode::PaperVerbatim => match predictions.len() - 1 {
            0 => return Err(TtaError::VerbatimWithoutRotations),
            n => n,
        },
    } as f64;
    let steps = (0..t_len)
        .map(|t| {
            let mut v = [0.0; 6];
            for (k, x) in v.iter_mut().enumerate() {
                *x = compensated_sum(predictions.iter().map(|p| p[t].0[k])) / divisor;
            }
            SymTensor3::new(v)
        })
        .collect();
    Ok(TensorPath::new(steps).expect("non-empty"))
}

/// Per-step standard deviation of every component about `aggregated`. The
/// first prediction (the identity) is left out unless `include_first`; the
/// divisor is the number of terms summed.
pub fn pointwise_sd(
    predictions: &[TensorPath],
    aggregated: &TensorPath,
    include_first: bool,
) -> Result<Vec<[f64; 6]>, TtaError> {
    check_lengths(predictions)?;
    spread(predictions, aggregated, include_first)
}

fn spread(predictions: &[TensorPath], aggregated: &TensorPath, include_first: bool) -> Result<Vec<[f64; 6]>, TtaError> {
    if predictions.len() < 2 {
        return Err(TtaError::TooFewPredictions(predictions.len()));
    }
    let terms = if include_first { predictions } else { &predictions[1..] };
    let n = terms.len() as f64;
    Ok((0..aggregated.len())
        .map(|t| {
            let mean = aggregated[t].0;
            let mut v = [0.0; 6];
            for (k, x) in v.iter_mut().enumerate() {
                let ss = compensated_sum(terms.iter().map(|p| (p[t].0[k] - mean[k]).powi(2)));
                *x = (ss / n).sqrt();
            }
            v
        })
        .collect())
}

/// Standard deviation of the individual von Mises paths about the von Mises
/// path of the aggregated tensor, same index convention as [`pointwise_sd`].
pub fn von_mises_sd(vm_individual: &[Vec<f64>], vm_aggregated: &[f64], include_first: bool) -> Result<Vec<f64>, TtaError> {
    for (index, v) in vm_individual.iter().enumerate() {
        if v.len() != vm_aggregated.len() {
            return Err(TtaError::LengthMismatch { index, expected: vm_aggregated.len(), got: v.len() });
        }
    }
    von_mises_spread(vm_individual, vm_aggregated, include_first)
}

fn von_mises_spread(vm_individual: &[Vec<f64>], vm_aggregated: &[f64], include_first: bool) -> Result<Vec<f64>, TtaError> {
    if vm_individual.len() < 2 {
        return Err(TtaError::TooFewPredictions(vm_individual.len()));
    }
    let terms = if include_first { vm_individual } else { &vm_individual[1..] };
    let n = terms.len() as f64;
    Ok(vm_aggregated
        .iter()
        .enumerate()
        .map(|(t, m)| (compensated_sum(terms.iter().map(|v| (v[t] - m).powi(2))) / n).sqrt())
        .collect())
}

/// Mean over the dataset of the worst round-trip error `|x - Rᵀ(R x Rᵀ)R|`,
/// for the model inputs, the targets and the model outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub samples: usize,
    pub samples_with_target: usize,
    pub input_err: f64,
    pub target_err: f64,
    pub output_err: f64,
}

fn round_trip_error<'a>(xs: impl IntoIterator<Item = &'a SymTensor3>, r: &Rotation3) -> f64 {
    xs.into_iter()
        .map(|x| inverse_rotate_sym(&rotate_sym(x, r), r).sub(x).max_abs())
        .fold(0.0, f64::max)
}

/// Draws one rotation per sample from `stream`, or uses the identity for
/// every sample when `stream` is `None`.
pub fn numerics_audit(
    dataset: &[Sample],
    model: &dyn Predictor,
    mut stream: Option<&mut RotationStream>,
) -> Result<AuditReport, TtaError> {
    if dataset.is_empty() {
        return Err(TtaError::EmptyDataset);
    }
    let rotations: Vec<Rotation3> = dataset
        .iter()
        .map(|_| stream.as_deref_mut().map_or(Rotation3::identity(), RotationStream::sample_rotation))
        .collect();
    let per_sample: Result<Vec<(f64, Option<f64>, f64)>, TtaError> = dataset
        .par_iter()
        .zip(rotations.par_iter())
        .map(|(s, r)| {
            let input = s.model_input();
            let input_err = round_trip_error(std::iter::once(input.a.tensor()).chain(input.strain.iter()), r);
            let target_err = s.target_stress.as_ref().map(|p| round_trip_error(p.iter(), r));
            let output = predict(model, &input).map_err(|source| TtaError::Model { rotation: 0, source })?;
            let output_err = round_trip_error(output.stress.iter(), r);
            Ok((input_err, target_err, output_err))
        })
        .collect();
    let per_sample = per_sample?;
    let m = per_sample.len() as f64;
    let targets: Vec<f64> = per_sample.iter().filter_map(|x| x.1).collect();
    Ok(AuditReport {
        samples: per_sample.len(),
        samples_with_target: targets.len(),
        input_err: compensated_sum(per_sample.iter().map(|x| x.0)) / m,
        target_err: if targets.is_empty() { 0.0 } else { compensated_sum(targets.iter().copied()) / targets.len() as f64 },
        output_err: compensated_sum(per_sample.iter().map(|x| x.2)) / m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::sample_orientation_tensor;
    use crate::surrogate::{ModelOutput, OracleParams};
    use crate::tensor::{OrientationTensor, TensorPath};

    fn scalar_paths(values: &[f64]) -> Vec<TensorPath> {
        values.iter().map(|&v| TensorPath::new(vec![SymTensor3::new([v, 0.0, 0.0, 0.0, 0.0, 0.0])]).unwrap()).collect()
    }

    fn sample_input(seed: u64, t: usize) -> ModelInput {
        let mut s = RotationStream::substream(seed, 3);
        let a = sample_orientation_tensor(&mut s);
        let steps = (1..=t)
            .map(|k| SymTensor3::new([6e-4, -2e-4, 1e-4, 3e-4, -1e-4, 2e-4]).scale(k as f64))
            .collect();
        ModelInput::new(a, 0.12, TensorPath::new(steps).unwrap()).unwrap()
    }

    #[test]
    fn rotate_input_cases() {
        let x = ModelInput::new(
            OrientationTensor::new(SymTensor3::diag(0.6, 0.3, 0.1)).unwrap(),
            0.11,
            TensorPath::new(vec![SymTensor3::new([1e-3, 0.0, 0.0, 2e-4, 0.0, 0.0])]).unwrap(),
        )
        .unwrap();
        assert_eq!(rotate_input(&x, &Rotation3::identity()), x);
        let q = Rotation3::from_matrix([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let y = rotate_input(&x, &q);
        assert_eq!(*y.a.tensor(), SymTensor3::diag(0.3, 0.6, 0.1));
        assert_eq!(y.vf, 0.11);
        let r = Rotation3::about_axis([0.3, -1.0, 2.0], 1.234);
        assert!((rotate_input(&x, &r).a.tensor().trace() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn aggregate_examples() {
        let same = vec![TensorPath::constant(SymTensor3::new([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), 3).unwrap(); 5];
        assert_eq!(aggregate_mean(&same, DivisorMode::Count).unwrap(), same[0]);
        let two = scalar_paths(&[0.0, 2.0]);
        assert_eq!(aggregate_mean(&two, DivisorMode::Count).unwrap()[0].0[0], 1.0);
        assert_eq!(aggregate_mean(&two, DivisorMode::PaperVerbatim).unwrap()[0].0[0], 2.0);
        assert!(matches!(aggregate_mean(&[], DivisorMode::Count), Err(TtaError::EmptyInput)));
        assert!(matches!(
            aggregate_mean(&scalar_paths(&[1.0]), DivisorMode::PaperVerbatim),
            Err(TtaError::VerbatimWithoutRotations)
        ));
    }

    #[test]
    fn aggregate_rejects_ragged_input() {
        let mut p = scalar_paths(&[1.0, 2.0]);
        p.push(TensorPath::constant(SymTensor3::ZERO, 2).unwrap());
        assert!(matches!(aggregate_mean(&p, DivisorMode::Count), Err(TtaError::LengthMismatch { index: 2, .. })));
    }

    #[test]
    fn pointwise_sd_examples() {
        let same = scalar_paths(&[4.0, 4.0, 4.0]);
        let agg = aggregate_mean(&same, DivisorMode::Count).unwrap();
        assert_eq!(pointwise_sd(&same, &agg, false).unwrap()[0], [0.0; 6]);

        // identity prediction 2, rotated ones {1, 3}, mean 2
        let p = scalar_paths(&[2.0, 1.0, 3.0]);
        let agg = aggregate_mean(&p, DivisorMode::Count).unwrap();
        assert_eq!(agg[0].0[0], 2.0);
        assert_eq!(pointwise_sd(&p, &agg, false).unwrap()[0][0], 1.0);
        // including i = 0: sqrt((0 + 1 + 1) / 3)
        assert!((pointwise_sd(&p, &agg, true).unwrap()[0][0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);

        let c = -3.5;
        let scaled: Vec<_> = p.iter().map(|x| x.map(|s| s.scale(c))).collect();
        let agg_s = aggregate_mean(&scaled, DivisorMode::Count).unwrap();
        assert!((pointwise_sd(&scaled, &agg_s, false).unwrap()[0][0] - c.abs()).abs() < 1e-14);
        assert!(matches!(pointwise_sd(&p[..1], &agg, false), Err(TtaError::TooFewPredictions(1))));
    }

    #[test]
    fn von_mises_sd_examples() {
        let same = vec![vec![5.0, 6.0]; 4];
        assert_eq!(von_mises_sd(&same, &[5.0, 6.0], false).unwrap(), vec![0.0, 0.0]);
        let v = vec![vec![9.0], vec![1.0], vec![3.0]];
        assert_eq!(von_mises_sd(&v, &[2.0], false).unwrap(), vec![1.0]);
        assert!(von_mises_sd(&v, &[100.0], true).unwrap()[0] >= 0.0);
        assert!(von_mises_sd(&v[..1], &[2.0], false).is_err());
    }

    #[test]
    fn equivariant_model_makes_tta_a_no_op() {
        let model = crate::surrogate::Model::Equivariant(OracleParams::default());
        let x = sample_input(4, 40);
        let cfg = TtaConfig { n_rotations: 24, seed: 77, ..Default::default() };
        let res = run_tta(&model, &x, &cfg).unwrap();
        assert_eq!(res.predictions.len(), 25);
        let first = &res.predictions[0];
        for p in &res.predictions {
            for (a, b) in p.iter().zip(first.iter()) {
                assert!(a.sub(b).max_abs() <= 1e-10);
            }
        }
        assert!(res.sd.iter().flatten().all(|&s| s <= 1e-10));
        assert!(res.vm_sd.iter().all(|&s| s <= 1e-9));
        assert_eq!(res.vm_aggregated, von_mises_path(&res.aggregated));
    }

    #[test]
    fn zero_rotations_returns_identity_prediction() {
        let model = crate::surrogate::Model::Noisy(OracleParams { noise_amp: 1.0, ..Default::default() });
        let x = sample_input(5, 10);
        let res = run_tta(&model, &x, &TtaConfig { n_rotations: 0, ..Default::default() }).unwrap();
        assert_eq!(res.aggregated, res.predictions[0]);
        assert!(res.vm_sd.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn noisy_model_spread_tracks_amplitude() {
        let amp = 2.0;
        let model = crate::surrogate::Model::Noisy(OracleParams { noise_amp: amp, noise_seed: 12, ..Default::default() });
        let x = sample_input(6, 30);
        let res = run_tta(&model, &x, &TtaConfig { n_rotations: 64, seed: 3, ..Default::default() }).unwrap();
        let all: Vec<f64> = res.sd.iter().flatten().copied().collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!(mean >= 0.2 * amp && mean <= 3.0 * amp, "mean sd {mean}");
    }

    #[test]
    fn aggregation_is_order_stable() {
        let model = crate::surrogate::Model::Noisy(OracleParams { noise_amp: 5.0, noise_seed: 1, ..Default::default() });
        let x = sample_input(8, 12);
        let cfg = TtaConfig { n_rotations: 40, seed: 9, ..Default::default() };
        let rotations = cfg.rotations();
        let preds = back_rotated_predictions(&model, &x, &rotations).unwrap();
        let mut reversed = preds.clone();
        reversed.reverse();
        let a = aggregate_mean(&preds, DivisorMode::Count).unwrap();
        let b = aggregate_mean(&reversed, DivisorMode::Count).unwrap();
        for (p, q) in a.iter().zip(b.iter()) {
            assert!(p.sub(q).max_abs() <= 1e-12);
        }
    }

    struct CovariantFixture;

    impl Predictor for CovariantFixture {
        // g(x) = 3 ε + 0.5 (a ε + ε a), equivariant by construction
        fn predict_raw(&self, input: &ModelInput) -> Result<ModelOutput, ModelError> {
            let a = *input.a.tensor();
            Ok(ModelOutput { stress: input.strain.map(|e| e.scale(3.0).add(&SymTensor3::sym_product(&a, e).scale(0.5))) })
        }
        fn describe(&self) -> String {
            "covariant".into()
        }
    }

    #[test]
    fn back_rotation_recovers_covariant_fixture() {
        let x = sample_input(10, 8);
        let cfg = TtaConfig { n_rotations: 30, seed: 2, ..Default::default() };
        let res = run_tta(&CovariantFixture, &x, &cfg).unwrap();
        for p in &res.predictions[1..] {
            for (a, b) in p.iter().zip(res.predictions[0].iter()) {
                assert!(a.sub(b).max_abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn model_errors_carry_rotation_index() {
        struct FailAfterFirst;
        impl Predictor for FailAfterFirst {
            fn predict_raw(&self, input: &ModelInput) -> Result<ModelOutput, ModelError> {
                if input.a.tensor().0[3] == 0.0 && input.a.tensor().0[4] == 0.0 {
                    Ok(ModelOutput { stress: input.strain.clone() })
                } else {
                    Err(ModelError::InvalidInput("rotated".into()))
                }
            }
            fn describe(&self) -> String {
                "fail".into()
            }
        }
        let x = ModelInput::new(
            OrientationTensor::new(SymTensor3::diag(0.5, 0.3, 0.2)).unwrap(),
            0.1,
            TensorPath::new(vec![SymTensor3::ZERO; 2]).unwrap(),
        )
        .unwrap();
        let err = run_tta(&FailAfterFirst, &x, &TtaConfig { n_rotations: 5, ..Default::default() }).unwrap_err();
        assert!(matches!(err, TtaError::Model { rotation: 1, .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        assert!(TtaConfig { n_rotations: 0, include_identity: false, ..Default::default() }.validate().is_err());
        assert!(TtaConfig { n_rotations: 0, mean_divisor_mode: DivisorMode::PaperVerbatim, ..Default::default() }
            .validate()
            .is_err());
        let cfg = TtaConfig { n_rotations: 3, include_identity: false, ..Default::default() };
        assert_eq!(cfg.rotations().len(), 3);
        assert_ne!(cfg.rotations()[0], Rotation3::identity());
    }

    #[test]
    fn prefix_matches_direct_run() {
        let model = crate::surrogate::Model::Noisy(OracleParams { noise_amp: 1.0, noise_seed: 5, ..Default::default() });
        let x = sample_input(11, 6);
        let cfg = TtaConfig { n_rotations: 20, seed: 4, ..Default::default() };
        let full = run_tta(&model, &x, &cfg).unwrap();
        let small = run_tta(&model, &x, &TtaConfig { n_rotations: 7, ..cfg }).unwrap();
        assert_eq!(prefix_result(&full, 8, &cfg).unwrap(), small);
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        assert_eq!(compensated_sum([1.0, 1e100, 1.0, -1e100]), 2.0);
    }
}

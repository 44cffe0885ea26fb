//! Predictors `f(a, v_f, ε(t)) -> σ(t)`.
//!
//! Two analytic oracles are built in. Both are isotropic tensor polynomials
//! in `(a, ε)` with a von Mises cap, so the plain oracle is exactly
//! rotation-equivariant and TTA must leave its output unchanged. The noisy
//! oracle adds a deterministic perturbation in the working frame, which
//! breaks equivariance the way a trained network does. Anything else runs as
//! an external process over the line protocol in [`external`].

pub mod external;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{von_mises, OrientationTensor, SymTensor3, TensorError, TensorPath};

pub use external::{ExternalModel, ExternalModelConfig, ExternalModelError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    External(#[from] ExternalModelError),
    #[error("invalid oracle parameters: {0}")]
    InvalidParams(String),
    #[error("invalid model input: {0}")]
    InvalidInput(String),
    #[error("model returned {got} steps for an input of {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub a: OrientationTensor,
    pub vf: f64,
    pub strain: TensorPath,
}

impl ModelInput {
    pub fn new(a: OrientationTensor, vf: f64, strain: TensorPath) -> Result<Self, ModelError> {
        if !(vf > 0.0 && vf < 1.0) {
            return Err(ModelError::InvalidInput(format!("volume fraction {vf} outside (0, 1)")));
        }
        strain
            .check_finite()
            .map_err(|e: TensorError| ModelError::InvalidInput(format!("strain: {e}")))?;
        Ok(ModelInput { a, vf, strain })
    }

    pub fn len(&self) -> usize {
        self.strain.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub stress: TensorPath,
}

/// Material constants of the built-in oracles, all in MPa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleParams {
    pub lambda: f64,
    pub mu: f64,
    /// Fiber coupling stiffness.
    pub kappa: f64,
    /// Von Mises cap.
    pub sigma_y: f64,
    pub noise_amp: f64,
    /// Extra amplitude per MPa of noise-free von Mises stress at the step.
    /// Zero gives a constant amplitude.
    pub noise_rel: f64,
    pub noise_seed: u64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams { lambda: 2400.0, mu: 1100.0, kappa: 30000.0, sigma_y: 120.0, noise_amp: 0.0, noise_rel: 0.0, noise_seed: 0 }
    }
}

impl OracleParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [("lambda", self.lambda), ("mu", self.mu), ("kappa", self.kappa), ("sigma_y", self.sigma_y)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_amp >= 0.0 && self.noise_amp.is_finite()) {
            return Err(ModelError::InvalidParams(format!("noise_amp must be >= 0, got {}", self.noise_amp)));
        }
        if !(self.noise_rel >= 0.0 && self.noise_rel.is_finite()) {
            return Err(ModelError::InvalidParams(format!("noise_rel must be >= 0, got {}", self.noise_rel)));
        }
        Ok(())
    }
}

/// Anything that maps a model input to a stress path. Implementations must be
/// callable from several threads at once.
pub trait Predictor: Send + Sync {
    fn predict_raw(&self, input: &ModelInput) -> Result<ModelOutput, ModelError>;

    fn describe(&self) -> String;
}

/// Dispatches to `model` and enforces the output length contract.
pub fn predict(model: &dyn Predictor, input: &ModelInput) -> Result<ModelOutput, ModelError> {
    let out = model.predict_raw(input)?;
    if out.stress.len() != input.len() {
        return Err(ModelError::LengthMismatch { expected: input.len(), got: out.stress.len() });
    }
    Ok(out)
}

pub enum Model {
    Equivariant(OracleParams),
    Noisy(OracleParams),
    External(ExternalModel),
}

impl Predictor for Model {
    fn predict_raw(&self, input: &ModelInput) -> Result<ModelOutput, ModelError> {
        match self {
            Model::Equivariant(p) => Ok(equivariant_oracle(p, input)),
            Model::Noisy(p) => Ok(noisy_oracle(p, input)),
            Model::External(m) => Ok(m.predict(input)?),
        }
    }

    fn describe(&self) -> String {
        match self {
            Model::Equivariant(_) => "equivariant".into(),
            Model::Noisy(_) => "noisy".into(),
            Model::External(m) => format!("external:{}", m.config().command.join(" ")),
        }
    }
}

/// Stress for one step: linear trial stress, deviator scaled back onto the
/// von Mises cap when exceeded.
pub fn oracle_step(params: &OracleParams, a: &SymTensor3, vf: f64, eps: &SymTensor3) -> SymTensor3 {
    let trial = SymTensor3::identity()
        .scale(params.lambda * eps.trace())
        .add(&eps.scale(2.0 * params.mu))
        .add(&SymTensor3::sym_product(a, eps).scale(vf * params.kappa));
    let vm = von_mises(&trial);
    if vm > params.sigma_y {
        let p = trial.trace() / 3.0;
        trial.deviator().scale(params.sigma_y / vm).add(&SymTensor3::identity().scale(p))
    } else {
        trial
    }
}

/// Memoryless, exactly equivariant oracle. Ignores the noise settings.
pub fn equivariant_oracle(params: &OracleParams, input: &ModelInput) -> ModelOutput {
    let a = input.a.tensor();
    let stress = input.strain.map(|eps| oracle_step(params, a, input.vf, eps));
    ModelOutput { stress }
}

/// Equivariant oracle plus a zero-mean perturbation of amplitude
/// `noise_amp + noise_rel · σ_v(t)` per step and component. The perturbation is a hash of the quantized
/// inputs, so the same input always gets the same noise while every rotated
/// copy of it gets its own.
pub fn noisy_oracle(params: &OracleParams, input: &ModelInput) -> ModelOutput {
    let base = equivariant_oracle(params, input);
    if params.noise_amp == 0.0 && params.noise_rel == 0.0 {
        return base;
    }
    let mut h = splitmix64(params.noise_seed);
    for &c in input.a.tensor().components() {
        h = splitmix64(h ^ quantize(c));
    }
    h = splitmix64(h ^ quantize(input.vf));
    let prefix = h;

    let steps = base
        .stress
        .iter()
        .zip(input.strain.iter())
        .enumerate()
        .map(|(t, (sigma, eps))| {
            let mut h = splitmix64(prefix ^ t as u64);
            for &c in eps.components() {
                h = splitmix64(h ^ quantize(c));
            }
            let amp = params.noise_amp + params.noise_rel * von_mises(sigma);
            let mut v = *sigma.components();
            for (k, x) in v.iter_mut().enumerate() {
                let u = unit_interval(splitmix64(h ^ (k as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407)));
                *x += amp * (2.0 * u - 1.0);
            }
            SymTensor3::new(v)
        })
        .collect();
    ModelOutput { stress: TensorPath::new(steps).expect("length preserved") }
}

/// Grid used to quantize inputs before hashing.
pub const NOISE_QUANTUM: f64 = 1e-9;

fn quantize(x: f64) -> u64 {
    (x / NOISE_QUANTUM).round() as i64 as u64
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

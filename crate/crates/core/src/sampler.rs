//! Seeded rotation sampling (Arvo's construction) and synthetic fiber
//! orientation draws.
//!
//! Every stream is a ChaCha20 generator keyed by the 64-bit seed with a
//! 64-bit stream id. Distinct stream ids give independent substreams, so a
//! sample's draws do not depend on the order in which samples are visited.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::tensor::{rotate_sym, OrientationTensor, Rotation3, SymTensor3};

/// Stream id reserved for TTA rotation lists. Synthetic-data substreams start
/// above it.
pub const ROTATION_STREAM: u64 = 0;

/// Lower and upper bounds of the synthetic fiber volume fraction.
pub const VOLUME_FRACTION_RANGE: (f64, f64) = (0.10, 0.15);

#[derive(Debug, Clone)]
pub struct RotationStream {
    seed: u64,
    stream: u64,
    counter: u64,
    rng: ChaCha20Rng,
}

impl RotationStream {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, ROTATION_STREAM)
    }

    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RotationStream { seed, stream, counter: 0, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Number of rotations drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Uniform in `[0, 1)` with 53 bits of mantissa.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(rand_distr::StandardNormal)
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    /// Next Haar-uniform rotation.
    pub fn sample_rotation(&mut self) -> Rotation3 {
        let x1 = self.uniform();
        let x2 = self.uniform();
        let x3 = self.uniform();
        self.counter += 1;
        arvo_rotation(x1, x2, x3)
    }
}

/// Arvo's map from three uniforms to SO(3): a rotation about `x3` by `2π x1`
/// followed by `2vvᵀ - I`, the negated Householder reflection through `v`.
/// The product has determinant `(+1)(+1) = +1`.
pub fn arvo_rotation(x1: f64, x2: f64, x3: f64) -> Rotation3 {
    let theta = 2.0 * PI * x1;
    let phi = 2.0 * PI * x2;
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let r = x3.sqrt();
    let v = [cp * r, sp * r, (1.0 - x3).sqrt()];

    let rz = [[ct, -st, 0.0], [st, ct, 0.0], [0.0, 0.0, 1.0]];
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                let h = 2.0 * v[i] * v[k] - if i == k { 1.0 } else { 0.0 };
                acc += h * rz[k][j];
            }
            m[i][j] = acc;
        }
    }
    let rot = Rotation3::from_matrix_unchecked(m);
    assert!(
        (rot.det() - 1.0).abs() <= Rotation3::TOL && rot.orthogonality_deviation() <= Rotation3::TOL,
        "Arvo construction produced an improper rotation"
    );
    rot
}

pub fn identity_rotation() -> Rotation3 {
    Rotation3::identity()
}

/// `[I, R_1, ..., R_n]`. A list for `n` is a prefix of the list for any
/// larger count drawn from an equal stream.
pub fn rotation_list(stream: &mut RotationStream, n: usize) -> Vec<Rotation3> {
    let mut list = Vec::with_capacity(n + 1);
    list.push(identity_rotation());
    list.extend((0..n).map(|_| stream.sample_rotation()));
    list
}

/// Unit fiber direction from its polar angle `theta` (to `x3`) and azimuth `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberDirection {
    pub p: [f64; 3],
    pub theta: f64,
    pub phi: f64,
}

pub fn fiber_from_angles(theta: f64, phi: f64) -> FiberDirection {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    FiberDirection { p: [st * cp, st * sp, ct], theta, phi }
}

/// Point uniform on the 2-simplex via sorted stick-breaking. Consumes two
/// uniforms.
pub fn sample_simplex_diagonal(stream: &mut RotationStream) -> [f64; 3] {
    let u = stream.uniform();
    let w = stream.uniform();
    let (lo, hi) = if u <= w { (u, w) } else { (w, u) };
    [lo, hi - lo, 1.0 - hi]
}

/// Random diagonal spectrum on the simplex, conjugated by a random rotation.
pub fn sample_orientation_tensor(stream: &mut RotationStream) -> OrientationTensor {
    let [d1, d2, d3] = sample_simplex_diagonal(stream);
    let r = stream.sample_rotation();
    let a = rotate_sym(&SymTensor3::diag(d1, d2, d3), &r);
    // rounding can push the trace off by a few ulp; the tolerance absorbs it
    OrientationTensor::new(a).expect("conjugated simplex point is a valid orientation tensor")
}

pub fn sample_volume_fraction(stream: &mut RotationStream) -> f64 {
    let (lo, hi) = VOLUME_FRACTION_RANGE;
    lo + (hi - lo) * stream.uniform()
}

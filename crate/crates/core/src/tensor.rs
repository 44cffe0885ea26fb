//! Symmetric second-order tensors in Voigt storage, proper rotations, and
//! per-step tensor paths.
//!
//! Component order is `[11, 22, 33, 12, 13, 23]` everywhere. Shear slots hold
//! tensor components (`x12`), never engineering shear (`2 x12`). Rotations act
//! on the reconstructed 3×3 matrix, so no Voigt-space rotation matrix with
//! shear factors is ever built.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Mat3 = [[f64; 3]; 3];

/// Voigt index of the upper-triangle entry `(row, col)`.
const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Labels in storage order, used for reports and CSV headers.
pub const COMPONENT_LABELS: [&str; 6] = ["11", "22", "33", "12", "13", "23"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("non-finite tensor component {index} ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("orientation tensor trace is {trace}, expected 1")]
    Trace { trace: f64 },
    #[error("orientation tensor has negative eigenvalue {eigenvalue}")]
    NotPositiveSemiDefinite { eigenvalue: f64 },
    #[error("matrix is not orthogonal (max |R Rt - I| = {deviation:e})")]
    NotOrthogonal { deviation: f64 },
    #[error("matrix determinant is {det}, expected +1")]
    NotProper { det: f64 },
    #[error("tensor path must contain at least one step")]
    EmptyPath,
}

/// Symmetric 3×3 tensor stored as six Voigt components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymTensor3(pub [f64; 6]);

impl SymTensor3 {
    pub const ZERO: SymTensor3 = SymTensor3([0.0; 6]);

    pub const fn new(v: [f64; 6]) -> Self {
        SymTensor3(v)
    }

    pub const fn diag(d1: f64, d2: f64, d3: f64) -> Self {
        SymTensor3([d1, d2, d3, 0.0, 0.0, 0.0])
    }

    pub fn identity() -> Self {
        Self::diag(1.0, 1.0, 1.0)
    }

    /// Checked constructor rejecting NaN/Inf components.
    pub fn try_new(v: [f64; 6]) -> Result<Self, TensorError> {
        let t = SymTensor3(v);
        t.check_finite()?;
        Ok(t)
    }

    pub fn check_finite(&self) -> Result<(), TensorError> {
        match self.0.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            Some((index, &value)) => Err(TensorError::NonFinite { index, value }),
            None => Ok(()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn components(&self) -> &[f64; 6] {
        &self.0
    }

    /// Reads the upper triangle of `m`. The lower triangle is ignored.
    pub fn from_matrix(m: &Mat3) -> Self {
        let mut v = [0.0; 6];
        for (k, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
            v[k] = m[i][j];
        }
        SymTensor3(v)
    }

    pub fn to_matrix(&self) -> Mat3 {
        let v = &self.0;
        [[v[0], v[3], v[4]], [v[3], v[1], v[5]], [v[4], v[5], v[2]]]
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    pub fn scale(&self, c: f64) -> Self {
        SymTensor3(self.0.map(|x| x * c))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut v = self.0;
        for (x, y) in v.iter_mut().zip(other.0.iter()) {
            *x += y;
        }
        SymTensor3(v)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Deviatoric part `x - tr(x)/3 I`.
    pub fn deviator(&self) -> Self {
        let p = self.trace() / 3.0;
        let v = &self.0;
        SymTensor3([v[0] - p, v[1] - p, v[2] - p, v[3], v[4], v[5]])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Symmetric product `a·b + b·a`, returned in Voigt form.
    pub fn sym_product(a: &Self, b: &Self) -> Self {
        let am = a.to_matrix();
        let bm = b.to_matrix();
        let ab = mat_mul(&am, &bm);
        let mut v = [0.0; 6];
        for (k, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
            // (ab)^T = ba for symmetric a, b
            v[k] = ab[i][j] + ab[j][i];
        }
        SymTensor3(v)
    }

    /// Eigenvalues in ascending order (cyclic Jacobi).
    pub fn eigenvalues(&self) -> [f64; 3] {
        let mut m = self.to_matrix();
        for _ in 0..64 {
            let off = m[0][1].abs() + m[0][2].abs() + m[1][2].abs();
            let scale = m[0][0].abs() + m[1][1].abs() + m[2][2].abs() + off;
            if off <= f64::EPSILON * 1e-3 * scale.max(f64::MIN_POSITIVE) {
                break;
            }
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let mut g = IDENTITY;
                g[p][p] = c;
                g[q][q] = c;
                g[p][q] = s;
                g[q][p] = -s;
                m = mat_mul(&mat_mul(&transpose(&g), &m), &g);
                m[p][q] = 0.0;
                m[q][p] = 0.0;
            }
        }
        let mut e = [m[0][0], m[1][1], m[2][2]];
        e.sort_by(f64::total_cmp);
        e
    }
}

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

pub fn det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Orientation tensor: trace one, positive semi-definite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SymTensor3", into = "SymTensor3")]
pub struct OrientationTensor(SymTensor3);

impl OrientationTensor {
    pub const TRACE_TOL: f64 = 1e-9;
    pub const EIGEN_TOL: f64 = 1e-9;

    pub fn new(t: SymTensor3) -> Result<Self, TensorError> {
        t.check_finite()?;
        let trace = t.trace();
        if (trace - 1.0).abs() > Self::TRACE_TOL {
            return Err(TensorError::Trace { trace });
        }
        let min = t.eigenvalues()[0];
        if min < -Self::EIGEN_TOL {
            return Err(TensorError::NotPositiveSemiDefinite { eigenvalue: min });
        }
        Ok(OrientationTensor(t))
    }

    /// Isotropic orientation `I/3`.
    pub fn isotropic() -> Self {
        OrientationTensor(SymTensor3::identity().scale(1.0 / 3.0))
    }

    pub fn tensor(&self) -> &SymTensor3 {
        &self.0
    }

    /// Conjugation by a proper rotation keeps trace and spectrum, so the
    /// invariants carry over without re-checking.
    pub fn rotated(&self, r: &Rotation3) -> Self {
        OrientationTensor(rotate_sym(&self.0, r))
    }

    pub fn inverse_rotated(&self, r: &Rotation3) -> Self {
        OrientationTensor(inverse_rotate_sym(&self.0, r))
    }
}

impl TryFrom<SymTensor3> for OrientationTensor {
    type Error = TensorError;

    fn try_from(t: SymTensor3) -> Result<Self, Self::Error> {
        OrientationTensor::new(t)
    }
}

impl From<OrientationTensor> for SymTensor3 {
    fn from(a: OrientationTensor) -> Self {
        a.0
    }
}

/// Proper orthogonal 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(Mat3);

impl Rotation3 {
    pub const TOL: f64 = 1e-12;

    pub const fn identity() -> Self {
        Rotation3(IDENTITY)
    }

    pub fn from_matrix(m: Mat3) -> Result<Self, TensorError> {
        let deviation = orthogonality_deviation(&m);
        if !(deviation <= Self::TOL) {
            return Err(TensorError::NotOrthogonal { deviation });
        }
        let d = det(&m);
        if !((d - 1.0).abs() <= Self::TOL) {
            return Err(TensorError::NotProper { det: d });
        }
        Ok(Rotation3(m))
    }

    /// Right-handed rotation by `angle` radians about the unit `axis`.
    pub fn about_axis(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let [x, y, z] = axis.map(|c| c / n);
        let (s, c) = angle.sin_cos();
        let k = 1.0 - c;
        Rotation3([
            [c + x * x * k, x * y * k - z * s, x * z * k + y * s],
            [y * x * k + z * s, c + y * y * k, y * z * k - x * s],
            [z * x * k - y * s, z * y * k + x * s, c + z * z * k],
        ])
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation3(transpose(&self.0))
    }

    /// `self · other`
    pub fn compose(&self, other: &Self) -> Self {
        Rotation3(mat_mul(&self.0, &other.0))
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn orthogonality_deviation(&self) -> f64 {
        orthogonality_deviation(&self.0)
    }

    pub fn det(&self) -> f64 {
        det(&self.0)
    }

    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation3(m)
    }
}

fn orthogonality_deviation(m: &Mat3) -> f64 {
    let p = mat_mul(m, &transpose(m));
    let mut dev = 0.0_f64;
    for i in 0..3 {
        for j in 0..3 {
            let e = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((p[i][j] - e).abs());
        }
    }
    dev
}

/// `r · X · rᵀ` in Voigt form. Only the upper triangle of the product is read.
pub fn rotate_sym(x: &SymTensor3, r: &Rotation3) -> SymTensor3 {
    let rm = r.matrix();
    let p = mat_mul(&mat_mul(rm, &x.to_matrix()), &transpose(rm));
    SymTensor3::from_matrix(&p)
}

/// `rᵀ · X · r`, the inverse of [`rotate_sym`].
pub fn inverse_rotate_sym(x: &SymTensor3, r: &Rotation3) -> SymTensor3 {
    let rm = r.matrix();
    let p = mat_mul(&mat_mul(&transpose(rm), &x.to_matrix()), rm);
    SymTensor3::from_matrix(&p)
}

/// Equivalent (von Mises) stress using all six components.
pub fn von_mises(x: &SymTensor3) -> f64 {
    let [s11, s22, s33, s12, s13, s23] = x.0;
    let normal = 0.5 * ((s11 - s22).powi(2) + (s22 - s33).powi(2) + (s33 - s11).powi(2));
    let shear = 3.0 * (s12 * s12 + s13 * s13 + s23 * s23);
    (normal + shear).sqrt()
}

/// Ordered sequence of tensors over pseudo time steps, `T >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SymTensor3>", into = "Vec<SymTensor3>")]
pub struct TensorPath(Vec<SymTensor3>);

impl TensorPath {
    pub fn new(steps: Vec<SymTensor3>) -> Result<Self, TensorError> {
        if steps.is_empty() {
            return Err(TensorError::EmptyPath);
        }
        Ok(TensorPath(steps))
    }

    pub fn constant(x: SymTensor3, len: usize) -> Result<Self, TensorError> {
        Self::new(vec![x; len])
    }

    pub fn check_finite(&self) -> Result<(), TensorError> {
        self.0.iter().try_for_each(SymTensor3::check_finite)
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn steps(&self) -> &[SymTensor3] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SymTensor3> {
        self.0.iter()
    }

    pub fn into_steps(self) -> Vec<SymTensor3> {
        self.0
    }

    /// Applies `f` to every step; the length is preserved.
    pub fn map(&self, f: impl FnMut(&SymTensor3) -> SymTensor3) -> Self {
        TensorPath(self.0.iter().map(f).collect())
    }

    pub fn rotated(&self, r: &Rotation3) -> Self {
        self.map(|x| rotate_sym(x, r))
    }

    pub fn inverse_rotated(&self, r: &Rotation3) -> Self {
        self.map(|x| inverse_rotate_sym(x, r))
    }

    /// Single component `k` over time.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.0.iter().map(|x| x.0[k]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, x| m.max(x.max_abs()))
    }
}

impl TryFrom<Vec<SymTensor3>> for TensorPath {
    type Error = TensorError;

    fn try_from(steps: Vec<SymTensor3>) -> Result<Self, Self::Error> {
        TensorPath::new(steps)
    }
}

impl From<TensorPath> for Vec<SymTensor3> {
    fn from(p: TensorPath) -> Self {
        p.0
    }
}

impl std::ops::Index<usize> for TensorPath {
    type Output = SymTensor3;

    fn index(&self, t: usize) -> &SymTensor3 {
        &self.0[t]
    }
}

pub fn von_mises_path(p: &TensorPath) -> Vec<f64> {
    p.iter().map(von_mises).collect()
}

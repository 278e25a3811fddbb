//! Truncated model of a separable complex Hilbert space.
//!
//! Vectors live in the span of the first `dim` canonical basis vectors of
//! ℓ². The inner product is linear in the first argument and conjugate
//! linear in the second, `⟨u, v⟩ = Σ u_j · conj(v_j)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, LabError, Result};

pub type C64 = Complex64;

/// Numerical thresholds shared by every stage of the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Largest admissible entrywise deviation of a Gram matrix from identity.
    pub ortho_tol: f64,
    /// Relative norm below which a Gram-Schmidt step counts as dependent.
    pub breakdown_tol: f64,
    /// Slack for identity checks (Pythagoras, Bessel, Parseval).
    pub eq_slack: f64,
    /// Post/pre projection norm ratio that triggers a second pass.
    pub reorthog_threshold: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            ortho_tol: 1e-10,
            breakdown_tol: 1e-10,
            eq_slack: 1e-10,
            reorthog_threshold: std::f64::consts::FRAC_1_SQRT_2,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("ortho_tol", self.ortho_tol),
            ("breakdown_tol", self.breakdown_tol),
            ("eq_slack", self.eq_slack),
            ("reorthog_threshold", self.reorthog_threshold),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(LabError::Config(format!(
                    "tolerance {name} must be finite and strictly positive, got {value}"
                )));
            }
        }
        if self.breakdown_tol >= 1.0 {
            return Err(LabError::Config(format!(
                "breakdown_tol must be < 1, got {}",
                self.breakdown_tol
            )));
        }
        Ok(())
    }
}

/// Ambient space: the truncation dimension together with its tolerances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HilbertModel {
    dim: usize,
    tol: ToleranceConfig,
}

impl HilbertModel {
    pub fn new(dim: usize, tol: ToleranceConfig) -> Result<Self> {
        if dim < 2 {
            return Err(LabError::InvalidInput(format!(
                "ambient dimension must be at least 2, got {dim}"
            )));
        }
        tol.validate()?;
        Ok(Self { dim, tol })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tol(&self) -> &ToleranceConfig {
        &self.tol
    }

    pub fn zero(&self) -> HVector {
        HVector::zeros(self.dim)
    }

    /// Canonical basis vector, zero-based.
    pub fn basis(&self, index: usize) -> Result<HVector> {
        HVector::basis(self.dim, index)
    }

    pub fn vector(&self, coeffs: Vec<C64>) -> Result<HVector> {
        ensure_dim(self.dim, coeffs.len())?;
        HVector::new(coeffs)
    }

    pub fn random_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> HVector {
        HVector::random_unit(self.dim, rng)
    }

    pub fn certify(&self, vectors: Vec<HVector>) -> Result<OrthonormalSystem> {
        if let Some(v) = vectors.first() {
            ensure_dim(self.dim, v.dim())?;
        }
        OrthonormalSystem::certify(vectors, &self.tol)
    }
}

/// A vector of the truncated space, stored by its canonical coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<C64>", into = "Vec<C64>")]
pub struct HVector {
    coeffs: Vec<C64>,
}

impl TryFrom<Vec<C64>> for HVector {
    type Error = LabError;

    fn try_from(coeffs: Vec<C64>) -> Result<Self> {
        HVector::new(coeffs)
    }
}

impl From<HVector> for Vec<C64> {
    fn from(v: HVector) -> Self {
        v.coeffs
    }
}

impl HVector {
    /// Rejects empty input and non-finite entries.
    pub fn new(coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(LabError::InvalidInput("vector must be nonempty".into()));
        }
        if let Some(j) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(LabError::InvalidInput(format!(
                "non-finite coordinate at index {j}"
            )));
        }
        Ok(Self { coeffs })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            coeffs: vec![C64::new(0.0, 0.0); dim],
        }
    }

    /// Canonical basis vector `e_{index+1}` (zero-based index).
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(LabError::InvalidInput(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut v = Self::zeros(dim);
        v.coeffs[index] = C64::new(1.0, 0.0);
        Ok(v)
    }

    /// Complex Gaussian direction, normalized.
    pub fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        loop {
            let coeffs: Vec<C64> = (0..dim)
                .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let v = Self { coeffs };
            let n = v.norm();
            if n > 0.0 {
                return v.scale(C64::new(1.0 / n, 0.0));
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub(crate) fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(LabError::NumericFailure(format!(
                "non-finite intermediate in {context}"
            )))
        }
    }

    pub fn inner(&self, other: &HVector) -> Result<C64> {
        inner_product(self, other)
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        norm(self)
    }

    pub fn scale(&self, alpha: C64) -> HVector {
        HVector {
            coeffs: self.coeffs.iter().map(|&c| alpha * c).collect(),
        }
    }

    /// `self += alpha · x`.
    pub fn axpy(&mut self, alpha: C64, x: &HVector) -> Result<()> {
        ensure_dim(self.dim(), x.dim())?;
        axpy_slice(&mut self.coeffs, alpha, &x.coeffs);
        Ok(())
    }

    pub fn add(&self, other: &HVector) -> Result<HVector> {
        let mut out = self.clone();
        out.axpy(C64::new(1.0, 0.0), other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &HVector) -> Result<HVector> {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    pub fn normalized(&self) -> Result<HVector> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(LabError::InvalidInput(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        Ok(self.scale(C64::new(1.0 / n, 0.0)))
    }

    /// Largest deviation in modulus between coordinates.
    pub fn max_abs_diff(&self, other: &HVector) -> Result<f64> {
        ensure_dim(self.dim(), other.dim())?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Rotates by a unimodular scalar so that the largest-modulus coordinate
    /// is real and positive. Near-ties (within 1e-9 relative) resolve to the
    /// lowest index. Returns the rotated vector and the applied factor.
    pub fn with_canonical_phase(&self) -> (HVector, C64) {
        let max = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            return (self.clone(), C64::new(1.0, 0.0));
        }
        let pivot = self
            .coeffs
            .iter()
            .position(|c| c.norm() >= max * (1.0 - 1e-9))
            .unwrap_or(0);
        let c = self.coeffs[pivot];
        let factor = c.conj() / c.norm();
        (self.scale(factor), factor)
    }
}

pub(crate) fn dot(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a * b.conj()).sum()
}

pub(crate) fn axpy_slice(y: &mut [C64], alpha: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `⟨u, v⟩ = Σ u_j · conj(v_j)`.
pub fn inner_product(u: &HVector, v: &HVector) -> Result<C64> {
    ensure_dim(u.dim(), v.dim())?;
    Ok(dot(&u.coeffs, &v.coeffs))
}

pub fn norm(u: &HVector) -> f64 {
    u.norm_sq().sqrt()
}

/// Coefficients `α_j` together with their energy `Σ|α_j|²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSequence {
    values: Vec<C64>,
    energy: f64,
}

impl CoefficientSequence {
    pub fn new(values: Vec<C64>) -> Result<Self> {
        if let Some(j) = values.iter().position(|c| !c.is_finite()) {
            return Err(LabError::InvalidInput(format!(
                "non-finite coefficient at index {j}"
            )));
        }
        let energy = values.iter().map(|c| c.norm_sqr()).sum();
        Ok(Self { values, energy })
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Running sums `Σ_{j≤n} |α_j|²` for `n = 1..len`.
    pub fn partial_energies(&self) -> Vec<f64> {
        self.values
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c.norm_sqr();
                Some(*acc)
            })
            .collect()
    }
}

/// An ordered orthonormal family with its measured Gram defect.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrthonormalSystem {
    vectors: Vec<HVector>,
    gram_defect: f64,
}

impl OrthonormalSystem {
    /// Measures the Gram defect and rejects the family if it exceeds
    /// `tol.ortho_tol`.
    pub fn certify(vectors: Vec<HVector>, tol: &ToleranceConfig) -> Result<Self> {
        let system = Self::measure(vectors)?;
        if system.gram_defect > tol.ortho_tol {
            return Err(LabError::InvalidInput(format!(
                "family is not orthonormal: Gram defect {:.3e} exceeds {:.3e}",
                system.gram_defect, tol.ortho_tol
            )));
        }
        Ok(system)
    }

    /// Builds the system without enforcing the tolerance. Operations that
    /// require orthonormality re-check `gram_defect` themselves.
    pub fn measure(vectors: Vec<HVector>) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| LabError::InvalidInput("orthonormal system must be nonempty".into()))?;
        let dim = first.dim();
        for v in &vectors {
            ensure_dim(dim, v.dim())?;
        }
        if vectors.len() > dim {
            return Err(LabError::InvalidInput(format!(
                "{} vectors cannot be orthonormal in dimension {dim}",
                vectors.len()
            )));
        }
        let gram_defect = gram_defect(&vectors);
        if !gram_defect.is_finite() {
            return Err(LabError::NumericFailure("non-finite Gram matrix".into()));
        }
        Ok(Self {
            vectors,
            gram_defect,
        })
    }

    pub fn vectors(&self) -> &[HVector] {
        &self.vectors
    }

    pub fn gram_defect(&self) -> f64 {
        self.gram_defect
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors[0].dim()
    }

    /// The first `n` vectors.
    pub fn prefix(&self, n: usize) -> Result<OrthonormalSystem> {
        if n == 0 || n > self.len() {
            return Err(LabError::InvalidInput(format!(
                "prefix length {n} out of range 1..={}",
                self.len()
            )));
        }
        Self::measure(self.vectors[..n].to_vec())
    }

    pub(crate) fn ensure_certified(&self, tol: &ToleranceConfig) -> Result<()> {
        if self.gram_defect > tol.ortho_tol {
            Err(LabError::InvalidInput(format!(
                "uncertified system: Gram defect {:.3e} exceeds {:.3e}",
                self.gram_defect, tol.ortho_tol
            )))
        } else {
            Ok(())
        }
    }

    /// `⟨u, θ_j⟩` for every member, without certification checks.
    pub(crate) fn coefficients_of(&self, u: &HVector) -> Result<Vec<C64>> {
        ensure_dim(self.ambient_dim(), u.dim())?;
        Ok(self
            .vectors
            .iter()
            .map(|t| dot(&u.coeffs, &t.coeffs))
            .collect())
    }
}

/// Max entrywise deviation of the Gram matrix from the identity.
pub fn gram_defect(vectors: &[HVector]) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, a) in vectors.iter().enumerate() {
        for (k, b) in vectors.iter().enumerate().skip(j) {
            let g = dot(&a.coeffs, &b.coeffs);
            let target = if j == k {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            };
            let dev = (g - target).norm();
            if dev.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(dev);
        }
    }
    worst
}

/// `α_m = ⟨u, θ_m⟩` for each member of a certified system.
pub fn project_coefficients(
    u: &HVector,
    theta: &OrthonormalSystem,
    tol: &ToleranceConfig,
) -> Result<CoefficientSequence> {
    theta.ensure_certified(tol)?;
    CoefficientSequence::new(theta.coefficients_of(u)?)
}

/// `Σ_j α_j θ_j`.
pub fn expand(theta: &OrthonormalSystem, alpha: &CoefficientSequence) -> Result<HVector> {
    if alpha.len() != theta.len() {
        return Err(LabError::InvalidInput(format!(
            "{} coefficients for a system of {} vectors",
            alpha.len(),
            theta.len()
        )));
    }
    let mut out = HVector::zeros(theta.ambient_dim());
    for (a, t) in alpha.values().iter().zip(theta.vectors()) {
        axpy_slice(&mut out.coeffs, *a, &t.coeffs);
    }
    out.ensure_finite("expand")?;
    Ok(out)
}

/// `‖u − Σ_j ⟨u, θ_j⟩ θ_j‖`: zero exactly when `u` lies in the span.
pub fn projection_residual(
    u: &HVector,
    theta: &OrthonormalSystem,
    tol: &ToleranceConfig,
) -> Result<f64> {
    theta.ensure_certified(tol)?;
    Ok(residual_vector(u, theta)?.norm())
}

pub(crate) fn residual_vector(u: &HVector, theta: &OrthonormalSystem) -> Result<HVector> {
    let coeffs = theta.coefficients_of(u)?;
    let mut r = u.clone();
    for (a, t) in coeffs.iter().zip(theta.vectors()) {
        axpy_slice(&mut r.coeffs, -*a, &t.coeffs);
    }
    Ok(r)
}

/// Partial Bessel sums of `u` against `Θ` and the Parseval gap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesselReport {
    pub partial_energies: Vec<f64>,
    pub norm_sq: f64,
    /// `‖u‖² − Σ_j |⟨u, θ_j⟩|²`.
    pub parseval_defect: f64,
    /// `‖u − Σ_j ⟨u, θ_j⟩ θ_j‖`.
    pub expansion_residual: f64,
}

impl BesselReport {
    pub fn final_energy(&self) -> f64 {
        self.partial_energies.last().copied().unwrap_or(0.0)
    }
}

pub fn bessel_parseval_report(
    u: &HVector,
    theta: &OrthonormalSystem,
    tol: &ToleranceConfig,
) -> Result<BesselReport> {
    let coeffs = project_coefficients(u, theta, tol)?;
    let partial_energies = coeffs.partial_energies();
    let norm_sq = u.norm_sq();
    let final_energy = partial_energies.last().copied().unwrap_or(0.0);
    let expansion_residual = residual_vector(u, theta)?.norm();
    Ok(BesselReport {
        partial_energies,
        norm_sq,
        parseval_defect: norm_sq - final_energy,
        expansion_residual,
    })
}

//! Bounded operators on the truncated space and invariant-subspace
//! diagnostics.
//!
//! Operators are applied lazily. A dense matrix is only materialized when a
//! null-space or eigen computation needs one.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, LabError, Result};
use crate::hilbert::{projection_residual, HVector, OrthonormalSystem, ToleranceConfig, C64};

/// A bounded operator `T` on the `dim`-dimensional truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    dim: usize,
    #[serde(flatten)]
    kind: OperatorKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    /// `e_j ↦ e_{j+1}`, `e_N ↦ 0`.
    UnilateralShift,
    /// `e_j ↦ w_j e_{j+1}`; the last weight is unused at truncation.
    WeightedShift { weights: Vec<C64> },
    /// `e_j ↦ d_j e_j`.
    Diagonal { entries: Vec<C64> },
    /// Row-major matrix.
    Dense { matrix: Vec<Vec<C64>> },
    /// `Σ_i c_i A_i`.
    ScaledSum { terms: Vec<(C64, OperatorSpec)> },
    /// `A_1 A_2 ⋯ A_k`: the last factor acts first.
    Composition { factors: Vec<OperatorSpec> },
}

impl OperatorSpec {
    pub fn new(dim: usize, kind: OperatorKind) -> Result<Self> {
        let spec = Self { dim, kind };
        spec.validate()?;
        Ok(spec)
    }

    pub fn unilateral_shift(dim: usize) -> Result<Self> {
        Self::new(dim, OperatorKind::UnilateralShift)
    }

    pub fn weighted_shift(weights: Vec<C64>) -> Result<Self> {
        Self::new(weights.len(), OperatorKind::WeightedShift { weights })
    }

    pub fn diagonal(entries: Vec<C64>) -> Result<Self> {
        Self::new(entries.len(), OperatorKind::Diagonal { entries })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::diagonal(vec![C64::new(1.0, 0.0); dim])
    }

    pub fn dense(matrix: Vec<Vec<C64>>) -> Result<Self> {
        Self::new(matrix.len(), OperatorKind::Dense { matrix })
    }

    pub fn from_matrix(m: &DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(LabError::InvalidInput(
                "operator matrix must be square".into(),
            ));
        }
        let rows = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect();
        Self::dense(rows)
    }

    pub fn scaled_sum(terms: Vec<(C64, OperatorSpec)>) -> Result<Self> {
        let dim = terms
            .first()
            .map(|(_, op)| op.dim)
            .ok_or_else(|| LabError::InvalidInput("empty operator sum".into()))?;
        Self::new(dim, OperatorKind::ScaledSum { terms })
    }

    pub fn composition(factors: Vec<OperatorSpec>) -> Result<Self> {
        let dim = factors
            .first()
            .map(|op| op.dim)
            .ok_or_else(|| LabError::InvalidInput("empty operator composition".into()))?;
        Self::new(dim, OperatorKind::Composition { factors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(LabError::InvalidInput(format!(
                "operator dimension must be at least 2, got {}",
                self.dim
            )));
        }
        let finite = |xs: &[C64], what: &str| -> Result<()> {
            ensure_dim(self.dim, xs.len())?;
            if xs.iter().all(|c| c.is_finite()) {
                Ok(())
            } else {
                Err(LabError::InvalidInput(format!("non-finite {what}")))
            }
        };
        match &self.kind {
            OperatorKind::UnilateralShift => Ok(()),
            OperatorKind::WeightedShift { weights } => finite(weights, "shift weight"),
            OperatorKind::Diagonal { entries } => finite(entries, "diagonal entry"),
            OperatorKind::Dense { matrix } => {
                ensure_dim(self.dim, matrix.len())?;
                matrix
                    .iter()
                    .try_for_each(|row| finite(row, "matrix entry"))
            }
            OperatorKind::ScaledSum { terms } => {
                if terms.is_empty() {
                    return Err(LabError::InvalidInput("empty operator sum".into()));
                }
                for (c, op) in terms {
                    if !c.is_finite() {
                        return Err(LabError::InvalidInput("non-finite sum coefficient".into()));
                    }
                    ensure_dim(self.dim, op.dim)?;
                    op.validate()?;
                }
                Ok(())
            }
            OperatorKind::Composition { factors } => {
                if factors.is_empty() {
                    return Err(LabError::InvalidInput("empty operator composition".into()));
                }
                for op in factors {
                    ensure_dim(self.dim, op.dim)?;
                    op.validate()?;
                }
                Ok(())
            }
        }
    }

    fn apply_raw(&self, v: &[C64], adjoint: bool) -> Vec<C64> {
        let n = self.dim;
        let zero = C64::new(0.0, 0.0);
        match &self.kind {
            OperatorKind::UnilateralShift => {
                let mut out = vec![zero; n];
                if adjoint {
                    out[..n - 1].copy_from_slice(&v[1..]);
                } else {
                    out[1..].copy_from_slice(&v[..n - 1]);
                }
                out
            }
            OperatorKind::WeightedShift { weights } => {
                let mut out = vec![zero; n];
                for j in 0..n - 1 {
                    if adjoint {
                        out[j] = weights[j].conj() * v[j + 1];
                    } else {
                        out[j + 1] = weights[j] * v[j];
                    }
                }
                out
            }
            OperatorKind::Diagonal { entries } => entries
                .iter()
                .zip(v)
                .map(|(d, x)| if adjoint { d.conj() * x } else { d * x })
                .collect(),
            OperatorKind::Dense { matrix } => {
                if adjoint {
                    let mut out = vec![zero; n];
                    for (row, &vi) in matrix.iter().zip(v) {
                        for (o, a) in out.iter_mut().zip(row) {
                            *o += a.conj() * vi;
                        }
                    }
                    out
                } else {
                    matrix
                        .iter()
                        .map(|row| row.iter().zip(v).map(|(a, x)| a * x).sum())
                        .collect()
                }
            }
            OperatorKind::ScaledSum { terms } => {
                let mut out = vec![zero; n];
                for (c, op) in terms {
                    let c = if adjoint { c.conj() } else { *c };
                    for (o, t) in out.iter_mut().zip(op.apply_raw(v, adjoint)) {
                        *o += c * t;
                    }
                }
                out
            }
            OperatorKind::Composition { factors } => {
                let mut cur = v.to_vec();
                if adjoint {
                    for op in factors {
                        cur = op.apply_raw(&cur, true);
                    }
                } else {
                    for op in factors.iter().rev() {
                        cur = op.apply_raw(&cur, false);
                    }
                }
                cur
            }
        }
    }

    /// Dense realization, column `j` = `T e_j`.
    pub fn to_matrix(&self) -> DMatrix<C64> {
        let n = self.dim;
        let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        let mut e = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            e[j] = C64::new(1.0, 0.0);
            for (i, x) in self.apply_raw(&e, false).into_iter().enumerate() {
                m[(i, j)] = x;
            }
            e[j] = C64::new(0.0, 0.0);
        }
        m
    }
}

/// `T v`.
pub fn apply(op: &OperatorSpec, v: &HVector) -> Result<HVector> {
    ensure_dim(op.dim, v.dim())?;
    let out = HVector::new(op.apply_raw(v.coeffs(), false))
        .map_err(|_| LabError::NumericFailure("operator application overflowed".into()))?;
    Ok(out)
}

/// `T* v`.
pub fn apply_adjoint(op: &OperatorSpec, v: &HVector) -> Result<HVector> {
    ensure_dim(op.dim, v.dim())?;
    HVector::new(op.apply_raw(v.coeffs(), true))
        .map_err(|_| LabError::NumericFailure("adjoint application overflowed".into()))
}

/// Power iteration on `T*T`. Returns the largest observed `‖Tv‖ / ‖v‖`,
/// which can only undershoot the operator norm.
pub fn operator_norm_estimate(op: &OperatorSpec, iters: usize, seed: u64) -> Result<f64> {
    if iters == 0 {
        return Err(LabError::InvalidInput("iters must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = HVector::random_unit(op.dim, &mut rng);
    let mut best: f64 = 0.0;
    for _ in 0..iters {
        let tv = apply(op, &v)?;
        best = best.max(tv.norm());
        let next = apply_adjoint(op, &tv)?;
        let n = next.norm();
        if n == 0.0 {
            break;
        }
        v = next.scale(C64::new(1.0 / n, 0.0));
    }
    Ok(best)
}

/// Orthonormal basis of a subspace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubspaceBasis {
    pub system: OrthonormalSystem,
}

impl SubspaceBasis {
    pub fn new(system: OrthonormalSystem) -> Self {
        Self { system }
    }

    /// `span(e_{i+1} : i ∈ indices)` (zero-based indices).
    pub fn canonical(dim: usize, indices: &[usize], tol: &ToleranceConfig) -> Result<Self> {
        let vectors = indices
            .iter()
            .map(|&i| HVector::basis(dim, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(OrthonormalSystem::certify(vectors, tol)?))
    }

    pub fn dim(&self) -> usize {
        self.system.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.system.ambient_dim()
    }

    /// Neither `{0}` nor the whole space.
    pub fn is_nontrivial(&self) -> bool {
        (1..self.ambient_dim()).contains(&self.dim())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantSubspaceReport {
    pub basis: SubspaceBasis,
    pub invariance_residual: f64,
    pub nontrivial: bool,
    /// Set when the subspace is an eigenline.
    pub eigenvalue: Option<C64>,
}

/// `max_q ‖(I − P_S) T q‖ / max(1, ‖T q‖)` over the basis of `S`.
pub fn invariance_residual(
    op: &OperatorSpec,
    subspace: &SubspaceBasis,
    tol: &ToleranceConfig,
) -> Result<f64> {
    subspace.system.ensure_certified(tol)?;
    ensure_dim(op.dim, subspace.ambient_dim())?;
    let mut worst: f64 = 0.0;
    for q in subspace.system.vectors() {
        let tq = apply(op, q)?;
        let r = projection_residual(&tq, &subspace.system, tol)?;
        worst = worst.max(r / tq.norm().max(1.0));
    }
    Ok(worst)
}

/// Orthonormal basis of the numerical kernel: right singular vectors whose
/// singular value is at most `breakdown_tol · ‖T‖`. `None` means `T` is
/// numerically injective.
pub fn kernel_basis(op: &OperatorSpec, tol: &ToleranceConfig) -> Result<Option<SubspaceBasis>> {
    tol.validate()?;
    let n = op.dim;
    let m = op.to_matrix();
    let svd = m
        .try_svd(false, true, f64::EPSILON, 10_000)
        .ok_or_else(|| LabError::NumericFailure("SVD did not converge".into()))?;
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        let all: Vec<usize> = (0..n).collect();
        return SubspaceBasis::canonical(n, &all, tol).map(Some);
    }
    let v_t = svd
        .v_t
        .ok_or_else(|| LabError::NumericFailure("SVD returned no right singular vectors".into()))?;
    let threshold = tol.breakdown_tol * sigma_max;
    let mut vectors = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= threshold {
            let q = HVector::new((0..n).map(|j| v_t[(k, j)].conj()).collect())?;
            vectors.push(q.with_canonical_phase().0);
        }
    }
    if vectors.is_empty() {
        return Ok(None);
    }
    let system = OrthonormalSystem::certify(vectors, tol)?;
    for q in system.vectors() {
        let tq = apply(op, q)?.norm();
        if tq > 10.0 * tol.breakdown_tol * sigma_max {
            return Err(LabError::NumericFailure(format!(
                "kernel vector has ‖Tq‖ = {tq:.3e} above 10·breakdown_tol·‖T‖"
            )));
        }
    }
    Ok(Some(SubspaceBasis::new(system)))
}

/// A one-dimensional invariant subspace spanned by a unit eigenvector of the
/// dense realization. The eigenvalue of largest modulus is chosen; near-ties
/// go to the earliest position on the Schur diagonal.
pub fn finite_dim_invariant_subspace(
    op: &OperatorSpec,
    tol: &ToleranceConfig,
) -> Result<InvariantSubspaceReport> {
    let n = op.dim;
    if n < 2 {
        return Err(LabError::InvalidInput(
            "dimension must be at least 2".into(),
        ));
    }
    let m = op.to_matrix();
    let schur = m.clone().try_schur(f64::EPSILON, 10_000).ok_or_else(|| {
        LabError::NumericFailure(format!("Schur iteration did not converge (n = {n})"))
    })?;
    let (_, t) = schur.unpack();
    let eigenvalues: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let max_mod = eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let lambda = eigenvalues
        .iter()
        .copied()
        .find(|l| l.norm() >= max_mod * (1.0 - 1e-12))
        .unwrap_or(eigenvalues[0]);

    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] -= lambda;
    }
    let svd = shifted
        .try_svd(false, true, f64::EPSILON, 10_000)
        .ok_or_else(|| LabError::NumericFailure("SVD of T − λI did not converge".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| LabError::NumericFailure("SVD returned no right singular vectors".into()))?;
    let (k_min, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (k, &s)| if s < acc.1 { (k, s) } else { acc },
            );
    let q = HVector::new((0..n).map(|j| v_t[(k_min, j)].conj()).collect())?
        .normalized()?
        .with_canonical_phase()
        .0;

    let tq = apply(op, &q)?;
    let rayleigh = tq.inner(&q)?;
    let mut resid = tq.clone();
    resid.axpy(-rayleigh, &q)?;
    let op_norm = svd_norm(&m)?;
    if resid.norm() > 1e-8 * op_norm.max(1.0) {
        return Err(LabError::NumericFailure(format!(
            "eigenvector residual {:.3e} exceeds 1e-8·max(1, ‖T‖) (λ = {lambda}, ‖T‖ = {op_norm:.3e})",
            resid.norm()
        )));
    }
    let basis = SubspaceBasis::new(OrthonormalSystem::certify(vec![q], tol)?);
    let invariance_residual = invariance_residual(op, &basis, tol)?;
    Ok(InvariantSubspaceReport {
        nontrivial: basis.is_nontrivial(),
        basis,
        invariance_residual,
        eigenvalue: Some(lambda),
    })
}

/// Largest singular value of a dense matrix.
pub(crate) fn svd_norm(m: &DMatrix<C64>) -> Result<f64> {
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or_else(|| LabError::NumericFailure("SVD did not converge".into()))?;
    Ok(svd.singular_values.iter().copied().fold(0.0, f64::max))
}

/// Exact operator norm at truncation via the SVD of the dense realization.
pub fn operator_norm(op: &OperatorSpec) -> Result<f64> {
    svd_norm(&op.to_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn e(dim: usize, j: usize) -> HVector {
        HVector::basis(dim, j).unwrap()
    }

    #[test]
    fn apply_examples() {
        let s = OperatorSpec::unilateral_shift(4).unwrap();
        assert_eq!(apply(&s, &e(4, 0)).unwrap(), e(4, 1));
        assert_eq!(apply(&s, &e(4, 3)).unwrap(), HVector::zeros(4));

        let d = OperatorSpec::diagonal(vec![c(1.0), c(2.0), c(3.0)]).unwrap();
        let ones = HVector::from_real(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            apply(&d, &ones).unwrap(),
            HVector::from_real(&[1.0, 2.0, 3.0]).unwrap()
        );

        let w = OperatorSpec::weighted_shift(vec![c(2.0), c(3.0), c(5.0)]).unwrap();
        assert_eq!(
            apply(&w, &ones).unwrap(),
            HVector::from_real(&[0.0, 2.0, 3.0]).unwrap()
        );

        assert!(matches!(
            apply(&s, &ones),
            Err(LabError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn composition_applies_last_factor_first() {
        let s = OperatorSpec::unilateral_shift(3).unwrap();
        let d = OperatorSpec::diagonal(vec![c(1.0), c(2.0), c(3.0)]).unwrap();
        // D S e1 = D e2 = 2 e2, S D e1 = S e1 = e2
        let ds = OperatorSpec::composition(vec![d.clone(), s.clone()]).unwrap();
        assert_eq!(apply(&ds, &e(3, 0)).unwrap(), e(3, 1).scale(c(2.0)));
        let sd = OperatorSpec::composition(vec![s, d]).unwrap();
        assert_eq!(apply(&sd, &e(3, 0)).unwrap(), e(3, 1));
    }

    #[test]
    fn adjoint_matches_conjugate_transpose() {
        let m = vec![
            vec![C64::new(1.0, 2.0), C64::new(0.0, -1.0)],
            vec![C64::new(3.0, 0.0), C64::new(0.5, 0.5)],
        ];
        let a = OperatorSpec::dense(m).unwrap();
        let op = OperatorSpec::scaled_sum(vec![
            (C64::new(0.0, 1.0), a.clone()),
            (c(2.0), OperatorSpec::unilateral_shift(2).unwrap()),
        ])
        .unwrap();
        let op = OperatorSpec::composition(vec![op, a]).unwrap();
        let mat = op.to_matrix();
        let adj = mat.adjoint();
        for j in 0..2 {
            let col = apply_adjoint(&op, &e(2, j)).unwrap();
            for i in 0..2 {
                assert!((col.coeffs()[i] - adj[(i, j)]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(OperatorSpec::unilateral_shift(1).is_err());
        assert!(OperatorSpec::dense(vec![vec![c(1.0)], vec![c(1.0)]]).is_err());
        assert!(OperatorSpec::diagonal(vec![c(1.0), C64::new(f64::NAN, 0.0)]).is_err());
        let s3 = OperatorSpec::unilateral_shift(3).unwrap();
        let s4 = OperatorSpec::unilateral_shift(4).unwrap();
        assert!(OperatorSpec::scaled_sum(vec![(c(1.0), s3), (c(1.0), s4)]).is_err());
        assert!(OperatorSpec::composition(vec![]).is_err());
    }

    #[test]
    fn norm_estimate_examples() {
        let s = OperatorSpec::unilateral_shift(16).unwrap();
        let est = operator_norm_estimate(&s, 20, 7).unwrap();
        assert!((est - 1.0).abs() < 1e-6);

        let d = OperatorSpec::diagonal(vec![c(0.5), C64::new(0.0, -3.0), c(1.0), c(2.0)]).unwrap();
        let est = operator_norm_estimate(&d, 200, 1).unwrap();
        assert!((est - 3.0).abs() < 1e-6);
        assert!(est <= 3.0 + 1e-10);

        let z = OperatorSpec::dense(vec![vec![c(0.0); 3]; 3]).unwrap();
        assert_eq!(operator_norm_estimate(&z, 5, 0).unwrap(), 0.0);
        assert!(operator_norm_estimate(&z, 0, 0).is_err());

        assert_eq!(
            operator_norm_estimate(&d, 50, 3).unwrap(),
            operator_norm_estimate(&d, 50, 3).unwrap()
        );
    }

    #[test]
    fn kernel_examples() {
        let tol = ToleranceConfig::default();
        let d = OperatorSpec::diagonal(vec![c(0.0), c(1.0), c(1.0)]).unwrap();
        let k = kernel_basis(&d, &tol).unwrap().unwrap();
        assert_eq!(k.dim(), 1);
        assert!(k.system.vectors()[0].max_abs_diff(&e(3, 0)).unwrap() < 1e-14);

        let s = OperatorSpec::unilateral_shift(6).unwrap();
        let k = kernel_basis(&s, &tol).unwrap().unwrap();
        assert_eq!(k.dim(), 1);
        assert!(k.system.vectors()[0].max_abs_diff(&e(6, 5)).unwrap() < 1e-14);

        let inj = OperatorSpec::diagonal(vec![c(1.0), c(2.0), c(3.0)]).unwrap();
        assert!(kernel_basis(&inj, &tol).unwrap().is_none());

        let zero = OperatorSpec::dense(vec![vec![c(0.0); 3]; 3]).unwrap();
        let k = kernel_basis(&zero, &tol).unwrap().unwrap();
        assert_eq!(k.dim(), 3);
        assert!(!k.is_nontrivial());
    }

    #[test]
    fn invariance_residual_examples() {
        let tol = ToleranceConfig::default();
        let n = 8;
        let s = OperatorSpec::unilateral_shift(n).unwrap();
        let tail = SubspaceBasis::canonical(n, &(1..n).collect::<Vec<_>>(), &tol).unwrap();
        assert_eq!(invariance_residual(&s, &tail, &tol).unwrap(), 0.0);

        let head = SubspaceBasis::canonical(n, &[0], &tol).unwrap();
        assert_eq!(invariance_residual(&s, &head, &tol).unwrap(), 1.0);

        let d = OperatorSpec::diagonal((0..n).map(|j| c(j as f64 - 3.0)).collect()).unwrap();
        let subset = SubspaceBasis::canonical(n, &[0, 2, 5], &tol).unwrap();
        assert_eq!(invariance_residual(&d, &subset, &tol).unwrap(), 0.0);
    }

    #[test]
    fn eigenline_examples() {
        let tol = ToleranceConfig::default();
        let d = OperatorSpec::diagonal(vec![c(1.0), c(2.0)]).unwrap();
        let r = finite_dim_invariant_subspace(&d, &tol).unwrap();
        assert!(r.nontrivial);
        assert!(r.invariance_residual < 1e-14);
        assert!((r.eigenvalue.unwrap() - c(2.0)).norm() < 1e-12);
        assert!(r.basis.system.vectors()[0].max_abs_diff(&e(2, 1)).unwrap() < 1e-12);

        let s = OperatorSpec::unilateral_shift(4).unwrap();
        let r = finite_dim_invariant_subspace(&s, &tol).unwrap();
        assert!(r.nontrivial);
        assert!(r.invariance_residual <= 1e-8);
        // defective eigenvalue: only resolved to about sqrt(eps)
        assert!(r.eigenvalue.unwrap().norm() < 1e-6);
        let q = &r.basis.system.vectors()[0];
        assert!(q.max_abs_diff(&e(4, 3)).unwrap() < 1e-6);
        assert!(apply(&s, q).unwrap().norm() <= 1e-6);
    }
}

//! Gram-Schmidt orthogonalization with breakdown detection.
//!
//! Each step applies `w_{n+1} = u_{n+1} − Σ_j ⟨u_{n+1}, w_j⟩ / ‖w_j‖² · w_j`
//! against the raw orthogonal vectors `w_j`, either all coefficients at once
//! (classical) or one projection at a time (modified). With
//! reorthogonalization enabled a second pass runs whenever the projected
//! norm drops below `reorthog_threshold · ‖u_{n+1}‖`.
//!
//! A step whose result satisfies `‖w_k‖ ≤ breakdown_tol · ‖u_k‖` is a
//! breakdown: the input is treated as numerically dependent and the
//! process halts at `k`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, LabError, Result};
use crate::hilbert::{axpy_slice, dot, HVector, OrthonormalSystem, ToleranceConfig, C64};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GsVariant {
    Classical,
    #[default]
    Modified,
}

impl std::str::FromStr for GsVariant {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Self::Classical),
            "modified" => Ok(Self::Modified),
            other => Err(LabError::Config(format!(
                "unknown Gram-Schmidt variant {other:?} (expected classical or modified)"
            ))),
        }
    }
}

impl std::fmt::Display for GsVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Classical => "classical",
            Self::Modified => "modified",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GSConfig {
    pub variant: GsVariant,
    pub reorthogonalize: bool,
    pub thresholds: ToleranceConfig,
}

impl Default for GSConfig {
    fn default() -> Self {
        Self {
            variant: GsVariant::Modified,
            reorthogonalize: true,
            thresholds: ToleranceConfig::default(),
        }
    }
}

/// Result of a single [`Orthogonalizer::push`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Step {
    /// The vector was accepted as step `index` (1-based) with `‖w‖ = norm`.
    Accepted { index: usize, norm: f64 },
    /// Step `index` produced `‖w‖ = residual ≤ breakdown_tol · ‖u‖`.
    Breakdown { index: usize, residual: f64 },
}

/// Incremental Gram-Schmidt state. Keeps both the raw `w_j` and the
/// normalized `e_j = w_j / ‖w_j‖`.
#[derive(Clone, Debug)]
pub struct Orthogonalizer {
    cfg: GSConfig,
    dim: usize,
    raw: Vec<HVector>,
    raw_norm_sq: Vec<f64>,
    normalized: Vec<HVector>,
    reorth_passes: usize,
    canonical_phase: bool,
    breakdown: Option<usize>,
}

impl Orthogonalizer {
    pub fn new(dim: usize, cfg: GSConfig) -> Result<Self> {
        cfg.thresholds.validate()?;
        Ok(Self {
            cfg,
            dim,
            raw: Vec::new(),
            raw_norm_sq: Vec::new(),
            normalized: Vec::new(),
            reorth_passes: 0,
            canonical_phase: false,
            breakdown: None,
        })
    }

    /// Rotate every accepted `w_j` (and `e_j`) so the largest-modulus
    /// coordinate of `e_j` is real positive.
    pub fn with_canonical_phase(mut self, on: bool) -> Self {
        self.canonical_phase = on;
        self
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self) -> &[HVector] {
        &self.raw
    }

    pub fn normalized(&self) -> &[HVector] {
        &self.normalized
    }

    pub fn breakdown_index(&self) -> Option<usize> {
        self.breakdown
    }

    /// Number of second passes triggered so far.
    pub fn reorth_passes(&self) -> usize {
        self.reorth_passes
    }

    pub fn push(&mut self, u: &HVector) -> Result<Step> {
        ensure_dim(self.dim, u.dim())?;
        u.ensure_finite("Gram-Schmidt input")?;
        if let Some(k) = self.breakdown {
            return Err(LabError::InvalidInput(format!(
                "orthogonalizer halted by breakdown at step {k}"
            )));
        }
        if self.raw.len() == self.dim {
            return Err(LabError::InvalidInput(format!(
                "cannot extend an orthogonal family beyond dimension {}",
                self.dim
            )));
        }
        let index = self.raw.len() + 1;
        let u_norm = u.norm();
        if index == 1 && u_norm == 0.0 {
            return Err(LabError::InvalidInput(
                "first Gram-Schmidt vector must be nonzero".into(),
            ));
        }

        let mut w = u.coeffs().to_vec();
        self.project_out(&mut w);
        let mut w_norm = norm_of(&w);
        if self.cfg.reorthogonalize
            && index > 1
            && w_norm < self.cfg.thresholds.reorthog_threshold * u_norm
        {
            self.reorth_passes += 1;
            self.project_out(&mut w);
            w_norm = norm_of(&w);
        }
        if !w_norm.is_finite() || w.iter().any(|c| !c.is_finite()) {
            return Err(LabError::NumericFailure(format!(
                "non-finite intermediate at Gram-Schmidt step {index}"
            )));
        }
        if w_norm <= self.cfg.thresholds.breakdown_tol * u_norm {
            self.breakdown = Some(index);
            return Ok(Step::Breakdown {
                index,
                residual: w_norm,
            });
        }

        let mut w = HVector::new(w)?;
        let mut e = w.scale(C64::new(1.0 / w_norm, 0.0));
        if self.canonical_phase {
            let (rotated, factor) = e.with_canonical_phase();
            e = rotated;
            w = w.scale(factor);
        }
        self.raw_norm_sq.push(w_norm * w_norm);
        self.raw.push(w);
        self.normalized.push(e);
        Ok(Step::Accepted {
            index,
            norm: w_norm,
        })
    }

    fn project_out(&self, v: &mut [C64]) {
        match self.cfg.variant {
            GsVariant::Classical => {
                let coeffs: Vec<C64> = self
                    .raw
                    .iter()
                    .zip(&self.raw_norm_sq)
                    .map(|(w, &nsq)| dot(v, w.coeffs()) / nsq)
                    .collect();
                for (c, w) in coeffs.iter().zip(&self.raw) {
                    axpy_slice(v, -*c, w.coeffs());
                }
            }
            GsVariant::Modified => {
                for (w, &nsq) in self.raw.iter().zip(&self.raw_norm_sq) {
                    let c = dot(v, w.coeffs()) / nsq;
                    axpy_slice(v, -c, w.coeffs());
                }
            }
        }
    }

    /// The normalized vectors as a measured (not yet certified) system.
    pub fn system(&self) -> Result<OrthonormalSystem> {
        OrthonormalSystem::measure(self.normalized.clone())
    }
}

fn norm_of(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct OrthogonalizationOutcome {
    /// The raw orthogonal vectors `w_j`.
    pub raw_orthogonal: Vec<HVector>,
    /// `e_j = w_j / ‖w_j‖`.
    pub system: OrthonormalSystem,
    /// First 1-based step whose residual fell below the breakdown threshold.
    pub breakdown_index: Option<usize>,
    /// `‖u_k − P_k u_k‖` for each completed step `k`, where `P_k` projects
    /// onto `span(e_1..e_k)`.
    pub span_residuals: Vec<f64>,
}

impl OrthogonalizationOutcome {
    pub fn completed(&self) -> usize {
        self.raw_orthogonal.len()
    }
}

pub fn orthogonalize(us: &[HVector], cfg: &GSConfig) -> Result<OrthogonalizationOutcome> {
    let first = us
        .first()
        .ok_or_else(|| LabError::InvalidInput("nothing to orthogonalize".into()))?;
    let dim = first.dim();
    for u in us {
        ensure_dim(dim, u.dim())?;
    }
    let mut gs = Orthogonalizer::new(dim, *cfg)?;
    for u in us {
        if gs.len() == dim {
            // every further vector is dependent on a full basis
            gs.breakdown = Some(dim + 1);
            break;
        }
        if let Step::Breakdown { .. } = gs.push(u)? {
            break;
        }
    }
    let system = gs.system()?;
    if system.gram_defect() > cfg.thresholds.ortho_tol {
        return Err(LabError::NumericFailure(format!(
            "orthogonality lost: Gram defect {:.3e} exceeds {:.3e}",
            system.gram_defect(),
            cfg.thresholds.ortho_tol
        )));
    }
    let span_residuals = us
        .iter()
        .take(system.len())
        .enumerate()
        .map(|(k, u)| residual_against(u, &system.vectors()[..=k]))
        .collect();
    Ok(OrthogonalizationOutcome {
        raw_orthogonal: gs.raw,
        system,
        breakdown_index: gs.breakdown,
        span_residuals,
    })
}

pub(crate) fn residual_against(u: &HVector, basis: &[HVector]) -> f64 {
    let mut r = u.coeffs().to_vec();
    let coeffs: Vec<C64> = basis.iter().map(|t| dot(u.coeffs(), t.coeffs())).collect();
    for (a, t) in coeffs.iter().zip(basis) {
        axpy_slice(&mut r, -*a, t.coeffs());
    }
    norm_of(&r)
}

/// `max_{k≤n} ‖u_k − P_n u_k‖` with `P_n` the projector onto
/// `span(e_1..e_n)`. Zero certifies `span(u_1..u_n) ⊆ span(e_1..e_n)`; the
/// reverse inclusion holds by construction.
pub fn span_preservation_residual(
    us: &[HVector],
    outcome: &OrthogonalizationOutcome,
    n: usize,
) -> Result<f64> {
    span_residual(us, &outcome.system, n)
}

pub(crate) fn span_residual(us: &[HVector], system: &OrthonormalSystem, n: usize) -> Result<f64> {
    if n == 0 || n > system.len() || n > us.len() {
        return Err(LabError::InvalidInput(format!(
            "span check at n = {n} outside the {} completed steps",
            system.len().min(us.len())
        )));
    }
    let basis = &system.vectors()[..n];
    Ok(us[..n]
        .iter()
        .map(|u| residual_against(u, basis))
        .fold(0.0, f64::max))
}

//! Orbit chains: `x`, its orbit `T x, T² x, …`, the orthonormalized orbit
//! `θ_j`, the coefficients `a_j = ⟨x, θ_j⟩`, the residuals
//! `x_n = x − Σ_{j≤n} a_j θ_j` and the directions `y_n = x_n / ‖x_n‖`.
//!
//! Every `y_n` is a unit vector orthogonal to `θ_1..θ_n`, so for any probe
//! `z`
//!
//! ```text
//! |⟨z, y_n⟩|² + Σ_{j≤n} |⟨z, θ_j⟩|² ≤ ‖z‖²
//! ```
//!
//! The left side is checked for every probe and step; a violation is an
//! [`LabError::Inconsistency`]. When `x` lies in the span of the `θ_j`, the
//! directions also live there and `|⟨z, y_n⟩|` is bounded by the Bessel
//! tail `(Σ_{j>n} |⟨z, θ_j⟩|²)^{1/2}`. That tail is what drives the verdict.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, LabError, Result};
use crate::gram_schmidt::{residual_against, GSConfig, Orthogonalizer, Step};
use crate::hilbert::{
    axpy_slice, dot, CoefficientSequence, HVector, OrthonormalSystem, ToleranceConfig, C64,
};
use crate::operators::{
    apply, invariance_residual, InvariantSubspaceReport, OperatorSpec, SubspaceBasis,
};

/// Orbit vectors are rescaled to unit norm once their norm leaves this band.
pub const RESCALE_BAND: (f64, f64) = (1e-12, 1e12);

/// `(T x, …, T^depth x)`, with `x` prepended when `include_x0` is set.
/// Computed by repeated application.
pub fn build_orbit(
    op: &OperatorSpec,
    x: &HVector,
    depth: usize,
    include_x0: bool,
) -> Result<Vec<HVector>> {
    check_seed(op, x, depth)?;
    let mut out = Vec::with_capacity(depth + include_x0 as usize);
    if include_x0 {
        out.push(x.clone());
    }
    let mut cur = x.clone();
    for k in 1..=depth {
        cur = apply(op, &cur).map_err(|_| {
            LabError::NumericFailure(format!("orbit overflow at T^{k} x; use the rescaled orbit"))
        })?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// Orbit with norm control: `vectors[k-1] = T^k x / 10^{log10_scales[k-1]}`.
#[derive(Clone, Debug, Serialize)]
pub struct ScaledOrbit {
    pub vectors: Vec<HVector>,
    pub log10_scales: Vec<f64>,
}

pub fn build_orbit_rescaled(op: &OperatorSpec, x: &HVector, depth: usize) -> Result<ScaledOrbit> {
    check_seed(op, x, depth)?;
    let mut vectors = Vec::with_capacity(depth);
    let mut log10_scales = Vec::with_capacity(depth);
    let mut cur = x.clone();
    let mut log_scale = 0.0;
    for _ in 0..depth {
        cur = apply(op, &cur)?;
        let n = cur.norm();
        if n > 0.0 && !(RESCALE_BAND.0..=RESCALE_BAND.1).contains(&n) {
            cur = cur.scale(C64::new(1.0 / n, 0.0));
            log_scale += n.log10();
        }
        vectors.push(cur.clone());
        log10_scales.push(log_scale);
    }
    Ok(ScaledOrbit {
        vectors,
        log10_scales,
    })
}

fn check_seed(op: &OperatorSpec, x: &HVector, depth: usize) -> Result<()> {
    ensure_dim(op.dim(), x.dim())?;
    if x.norm() == 0.0 {
        return Err(LabError::InvalidInput("seed vector must be nonzero".into()));
    }
    if depth == 0 || depth > op.dim() {
        return Err(LabError::InvalidInput(format!(
            "orbit depth {depth} outside 1..={}",
            op.dim()
        )));
    }
    Ok(())
}

/// How the orthonormal basis of `span(T x, …, T^n x)` is generated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitGenerator {
    /// Step `k + 1` orthogonalizes `T θ_k` (same span, well conditioned).
    #[default]
    Arnoldi,
    /// Step `k` orthogonalizes the rescaled power `T^k x` directly.
    Powers,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitChain {
    pub x: HVector,
    /// Rescaled `T x, …, T^depth x`.
    pub orbit: ScaledOrbit,
    pub generator: OrbitGenerator,
    pub theta: OrthonormalSystem,
    /// `a_j = ⟨x, θ_j⟩`.
    pub a: CoefficientSequence,
    /// `x_n` for `n = 1..=theta.len()`.
    pub residuals: Vec<HVector>,
    /// `y_n` for `n = 1..=m`, where `m` is the last step with
    /// `‖x_n‖ > breakdown_tol · ‖x‖`.
    pub directions: Vec<HVector>,
    /// First step at which the orbit became numerically dependent. A chain
    /// that completes `depth` steps checks step `depth + 1` as well.
    pub breakdown_index: Option<usize>,
    pub requested_depth: usize,
}

impl OrbitChain {
    pub fn depth(&self) -> usize {
        self.theta.len()
    }

    pub fn residual_norms(&self) -> Vec<f64> {
        self.residuals.iter().map(HVector::norm).collect()
    }

    /// `‖x_K‖` at the final depth `K`.
    pub fn final_residual_norm(&self) -> f64 {
        self.residuals
            .last()
            .map(HVector::norm)
            .unwrap_or_else(|| self.x.norm())
    }

    /// Measures the five properties of the orthonormalized orbit.
    pub fn certify(&self) -> Result<ThirdClaimCertificate> {
        let k = self.depth();
        let thetas = self.theta.vectors();
        let span_residual = self
            .orbit
            .vectors
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, u)| {
                let n = u.norm();
                if n == 0.0 {
                    0.0
                } else {
                    residual_against(u, &thetas[..=i]) / n
                }
            })
            .fold(0.0, f64::max);

        let x_norm_sq = self.x.norm_sq();
        let partial = self.a.partial_energies();
        let mut reconstruction_error: f64 = 0.0;
        let mut pythagoras_error: f64 = 0.0;
        let mut ladder_monotone = true;
        let mut prev = self.x.norm();
        let mut rebuilt = HVector::zeros(self.x.dim());
        for (n, (xn, t)) in self.residuals.iter().zip(thetas).enumerate() {
            rebuilt.axpy(self.a.values()[n], t)?;
            let err = xn.add(&rebuilt)?.sub(&self.x)?.norm();
            reconstruction_error = reconstruction_error.max(err);
            let pyth = (xn.norm_sq() - (x_norm_sq - partial[n])).abs() / x_norm_sq.max(1.0);
            pythagoras_error = pythagoras_error.max(pyth);
            let nrm = xn.norm();
            if nrm > prev * (1.0 + 1e-12) + 1e-15 {
                ladder_monotone = false;
            }
            prev = nrm;
        }

        let mut tail_orthogonality: f64 = 0.0;
        for (n, y) in self.directions.iter().enumerate() {
            for t in &thetas[..=n] {
                tail_orthogonality = tail_orthogonality.max(dot(y.coeffs(), t.coeffs()).norm());
            }
        }

        Ok(ThirdClaimCertificate {
            span_residual,
            gram_defect: self.theta.gram_defect(),
            nonvanishing_steps: self.directions.len(),
            depth: k,
            tail_orthogonality,
            reconstruction_error,
            pythagoras_error,
            ladder_monotone,
        })
    }
}

/// Numerical evidence for the properties of the orthonormalized orbit:
/// span agreement (items 1-2), nonvanishing residuals (3), orthogonality of
/// residuals to the basis (4) and the reconstruction `x = x_n + Σ a_j θ_j`
/// (5).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThirdClaimCertificate {
    /// `max_k ‖T^k x − P_k T^k x‖ / ‖T^k x‖`.
    pub span_residual: f64,
    pub gram_defect: f64,
    /// Number of steps with `x_n` numerically nonzero.
    pub nonvanishing_steps: usize,
    pub depth: usize,
    /// `max_{j≤n} |⟨y_n, θ_j⟩|`.
    pub tail_orthogonality: f64,
    /// `max_n ‖x_n + Σ_{j≤n} a_j θ_j − x‖`.
    pub reconstruction_error: f64,
    /// `max_n |‖x_n‖² − (‖x‖² − Σ_{j≤n} |a_j|²)| / max(1, ‖x‖²)`.
    pub pythagoras_error: f64,
    pub ladder_monotone: bool,
}

impl ThirdClaimCertificate {
    pub fn holds(&self, tol: &ToleranceConfig, x_norm: f64) -> bool {
        self.span_residual <= 100.0 * tol.ortho_tol
            && self.gram_defect <= tol.ortho_tol
            && self.nonvanishing_steps >= 1
            && self.tail_orthogonality <= 10.0 * tol.ortho_tol
            && self.reconstruction_error <= tol.eq_slack * x_norm.max(1.0)
            && self.pythagoras_error <= tol.eq_slack
            && self.ladder_monotone
    }
}

/// Builds the orbit chain with the default (Arnoldi) generator.
pub fn third_claim_chain(
    op: &OperatorSpec,
    x: &HVector,
    depth: usize,
    cfg: &GSConfig,
) -> Result<OrbitChain> {
    third_claim_chain_with(op, x, depth, cfg, OrbitGenerator::Arnoldi)
}

pub fn third_claim_chain_with(
    op: &OperatorSpec,
    x: &HVector,
    depth: usize,
    cfg: &GSConfig,
    generator: OrbitGenerator,
) -> Result<OrbitChain> {
    let orbit = build_orbit_rescaled(op, x, depth)?;
    let tx = &orbit.vectors[0];
    if tx.norm() == 0.0 {
        return Err(LabError::InvalidInput(
            "T x = 0: the seed lies in Ker(T), which is itself a nontrivial invariant subspace"
                .into(),
        ));
    }
    let dim = op.dim();
    let mut gs = Orthogonalizer::new(dim, *cfg)?.with_canonical_phase(true);

    let mut breakdown = None;
    for k in 1..=depth {
        let u = generator_vector(op, &orbit, &gs, generator, k)?;
        if let Step::Breakdown { index, .. } = gs.push(&u)? {
            breakdown = Some(index);
            break;
        }
    }
    if breakdown.is_none() {
        breakdown = lookahead_breakdown(op, x, &orbit, &gs, generator)?;
    }

    let theta = gs.system()?;
    if theta.gram_defect() > cfg.thresholds.ortho_tol {
        return Err(LabError::NumericFailure(format!(
            "orbit basis lost orthogonality: Gram defect {:.3e} exceeds {:.3e}",
            theta.gram_defect(),
            cfg.thresholds.ortho_tol
        )));
    }
    let a = CoefficientSequence::new(theta.coefficients_of(x)?)?;
    let residuals = residual_ladder(x, &theta, &a);
    let cutoff = cfg.thresholds.breakdown_tol * x.norm();
    let directions = residuals
        .iter()
        .take_while(|r| r.norm() > cutoff)
        .map(|r| r.normalized())
        .collect::<Result<Vec<_>>>()?;

    Ok(OrbitChain {
        x: x.clone(),
        orbit,
        generator,
        theta,
        a,
        residuals,
        directions,
        breakdown_index: breakdown,
        requested_depth: depth,
    })
}

fn generator_vector(
    op: &OperatorSpec,
    orbit: &ScaledOrbit,
    gs: &Orthogonalizer,
    generator: OrbitGenerator,
    k: usize,
) -> Result<HVector> {
    match (generator, gs.normalized().last()) {
        (OrbitGenerator::Arnoldi, Some(last)) => apply(op, last),
        (OrbitGenerator::Arnoldi, None) | (OrbitGenerator::Powers, _) => {
            Ok(orbit.vectors[k - 1].clone())
        }
    }
}

/// Tests whether one more orbit step would be dependent.
fn lookahead_breakdown(
    op: &OperatorSpec,
    x: &HVector,
    orbit: &ScaledOrbit,
    gs: &Orthogonalizer,
    generator: OrbitGenerator,
) -> Result<Option<usize>> {
    let next = gs.len() + 1;
    if gs.len() == op.dim() {
        return Ok(Some(next));
    }
    let u = match generator {
        OrbitGenerator::Arnoldi => apply(op, gs.normalized().last().expect("nonempty basis"))?,
        OrbitGenerator::Powers => {
            let last = orbit.vectors.last().unwrap_or(x);
            let u = apply(op, last)?;
            let n = u.norm();
            if n > 0.0 {
                u.scale(C64::new(1.0 / n, 0.0))
            } else {
                u
            }
        }
    };
    let mut probe = gs.clone();
    Ok(match probe.push(&u)? {
        Step::Breakdown { index, .. } => Some(index),
        Step::Accepted { .. } => None,
    })
}

/// `x_n = x − Σ_{j≤n} a_j θ_j`, each re-projected once against
/// `θ_1..θ_n` to remove rounding leakage.
fn residual_ladder(
    x: &HVector,
    theta: &OrthonormalSystem,
    a: &CoefficientSequence,
) -> Vec<HVector> {
    let thetas = theta.vectors();
    let mut running = x.coeffs().to_vec();
    let mut out = Vec::with_capacity(thetas.len());
    for (n, (t, aj)) in thetas.iter().zip(a.values()).enumerate() {
        axpy_slice(&mut running, -*aj, t.coeffs());
        let mut xn = running.clone();
        for s in &thetas[..=n] {
            let c = dot(&xn, s.coeffs());
            axpy_slice(&mut xn, -c, s.coeffs());
        }
        out.push(HVector::new(xn).expect("finite residual"));
    }
    out
}

/// A labelled test vector for weak-convergence probing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub label: String,
    pub vector: HVector,
}

impl Probe {
    pub fn new(label: impl Into<String>, vector: HVector) -> Self {
        Self {
            label: label.into(),
            vector,
        }
    }
}

/// Canonical `e_1..e_depth`, the normalized seed, and `random` seeded unit
/// vectors.
pub fn default_probes(x: &HVector, depth: usize, random: usize, seed: u64) -> Result<Vec<Probe>> {
    let dim = x.dim();
    let mut probes = Vec::with_capacity(depth + 1 + random);
    for j in 0..depth.min(dim) {
        probes.push(Probe::new(format!("e{}", j + 1), HVector::basis(dim, j)?));
    }
    probes.push(Probe::new("x", x.normalized()?));
    probes.extend(random_probes(dim, random, seed));
    Ok(probes)
}

pub fn random_probes(dim: usize, count: usize, seed: u64) -> Vec<Probe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| Probe::new(format!("r{}", i + 1), HVector::random_unit(dim, &mut rng)))
        .collect()
}

/// Distance of `x` from the span of the orbit basis, and whether the basis
/// is complete with respect to the probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CyclicityReport {
    /// `‖x_K‖` at the final depth `K`.
    pub defect: f64,
    /// Parseval defect `‖z‖² − Σ_j |⟨z, θ_j⟩|²` per probe.
    pub probe_defects: Vec<f64>,
    pub span_dim: usize,
    pub ambient_dim: usize,
    pub dense_at_truncation: bool,
}

/// Heuristic constants behind the weak-convergence verdict. The inequality
/// checks are hard guarantees; these labels are not.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerdictThresholds {
    /// A probe value within `tail_factor ×` its Bessel tail counts as
    /// controlled by the tail.
    pub tail_factor: f64,
    /// Values below this are treated as zero.
    pub floor: f64,
    /// Relative change between the last two steps below which a value has
    /// stabilized.
    pub stabilization: f64,
    /// Relative Parseval defect below which a vector counts as captured by
    /// the span.
    pub completeness_tol: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        Self {
            tail_factor: 10.0,
            floor: 1e-6,
            stabilization: 1e-3,
            completeness_tol: 1e-8,
        }
    }
}

pub fn completeness_defect(chain: &OrbitChain, probes: &[Probe]) -> Result<CyclicityReport> {
    completeness_defect_with(chain, probes, &VerdictThresholds::default())
}

pub fn completeness_defect_with(
    chain: &OrbitChain,
    probes: &[Probe],
    thresholds: &VerdictThresholds,
) -> Result<CyclicityReport> {
    let theta = &chain.theta;
    let mut probe_defects = Vec::with_capacity(probes.len());
    let mut dense = captured(
        chain.x.norm_sq(),
        chain.final_residual_norm().powi(2),
        thresholds,
    );
    for p in probes {
        let energy: f64 = theta
            .coefficients_of(&p.vector)?
            .iter()
            .map(|c| c.norm_sqr())
            .sum();
        let nsq = p.vector.norm_sq();
        let d = nsq - energy;
        dense &= captured(nsq, d, thresholds);
        probe_defects.push(d);
    }
    Ok(CyclicityReport {
        defect: chain.final_residual_norm(),
        probe_defects,
        span_dim: theta.len(),
        ambient_dim: theta.ambient_dim(),
        dense_at_truncation: dense,
    })
}

fn captured(norm_sq: f64, parseval_defect: f64, t: &VerdictThresholds) -> bool {
    parseval_defect <= t.completeness_tol * norm_sq.max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    WeakLimitZeroTrend,
    NonzeroWeakLimit,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::WeakLimitZeroTrend => "weak_limit_zero_trend",
            Self::NonzeroWeakLimit => "nonzero_weak_limit",
            Self::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakConvergenceReport {
    pub labels: Vec<String>,
    /// `values[p][n-1] = |⟨z_p, y_n⟩|` for `n = 1..=m`.
    pub values: Vec<Vec<f64>>,
    /// `bessel_bounds[p][n-1] = ‖z_p − Σ_{j≤n} ⟨z_p, θ_j⟩ θ_j‖`, which equals
    /// `(‖z_p‖² − Σ_{j≤n} |⟨z_p, θ_j⟩|²)^{1/2}`, for `n = 1..=K`.
    pub bessel_bounds: Vec<Vec<f64>>,
    /// Parseval defect of each probe against the full basis.
    pub completeness_defects: Vec<f64>,
    /// `(Σ_{m<j≤K} |⟨z_p, θ_j⟩|²)^{1/2}` at the last direction `m`.
    pub final_tails: Vec<f64>,
    /// `max (|⟨z, y_n⟩|² + Σ_{j≤n} |⟨z, θ_j⟩|²) / ‖z‖²` over probes and steps.
    pub max_master_ratio: f64,
    pub seed_captured: bool,
    pub thresholds: VerdictThresholds,
    pub verdict: Verdict,
}

pub fn weak_convergence_probe(
    chain: &OrbitChain,
    probes: &[Probe],
    tol: &ToleranceConfig,
) -> Result<WeakConvergenceReport> {
    weak_convergence_probe_with(chain, probes, tol, &VerdictThresholds::default())
}

pub fn weak_convergence_probe_with(
    chain: &OrbitChain,
    probes: &[Probe],
    tol: &ToleranceConfig,
    thresholds: &VerdictThresholds,
) -> Result<WeakConvergenceReport> {
    let m = chain.directions.len();
    if m == 0 {
        return Err(LabError::InvalidInput(
            "no directions: every residual x_n vanished (finite-dimensional saturation)".into(),
        ));
    }
    let k = chain.depth();
    let mut labels = Vec::with_capacity(probes.len());
    let mut values = Vec::with_capacity(probes.len());
    let mut bessel_bounds = Vec::with_capacity(probes.len());
    let mut completeness_defects = Vec::with_capacity(probes.len());
    let mut final_tails = Vec::with_capacity(probes.len());
    let mut max_master_ratio: f64 = 0.0;

    for p in probes {
        let z = &p.vector;
        ensure_dim(chain.x.dim(), z.dim())?;
        let zsq = z.norm_sq();
        if zsq == 0.0 {
            return Err(LabError::InvalidInput(format!("probe {} is zero", p.label)));
        }
        let coeffs = chain.theta.coefficients_of(z)?;
        let energies: Vec<f64> = coeffs.iter().map(|c| c.norm_sqr()).collect();
        let mut partial = Vec::with_capacity(k);
        let mut acc = 0.0;
        for e in &energies {
            acc += e;
            partial.push(acc);
        }
        // ‖z − P_n z‖ from the projected vector itself; the subtraction
        // ‖z‖² − Σ|⟨z,θ_j⟩|² loses accuracy as the bound approaches zero
        let mut rest = z.coeffs().to_vec();
        let mut bounds = Vec::with_capacity(k);
        for (c, t) in coeffs.iter().zip(chain.theta.vectors()) {
            axpy_slice(&mut rest, -*c, t.coeffs());
            bounds.push(rest.iter().map(|r| r.norm_sqr()).sum::<f64>().sqrt());
        }
        let mut vals = Vec::with_capacity(m);
        for (n, y) in chain.directions.iter().enumerate() {
            let v = dot(z.coeffs(), y.coeffs()).norm();
            let ratio = (v * v + partial[n]) / zsq;
            if ratio > 1.0 + tol.eq_slack {
                return Err(LabError::Inconsistency(format!(
                    "Bessel bound violated for probe {} at n = {}: |<z,y_n>|^2 + sum |<z,theta_j>|^2 = {:.17e} > ||z||^2 = {:.17e}",
                    p.label,
                    n + 1,
                    v * v + partial[n],
                    zsq
                )));
            }
            max_master_ratio = max_master_ratio.max(ratio);
            vals.push(v);
        }
        let tail = energies[m.min(k)..].iter().sum::<f64>().sqrt();
        labels.push(p.label.clone());
        values.push(vals);
        bessel_bounds.push(bounds);
        completeness_defects.push(zsq - acc);
        final_tails.push(tail);
    }

    let seed_captured = captured(
        chain.x.norm_sq(),
        chain.final_residual_norm().powi(2),
        thresholds,
    );
    let verdict = decide(&values, &final_tails, seed_captured, thresholds);
    Ok(WeakConvergenceReport {
        labels,
        values,
        bessel_bounds,
        completeness_defects,
        final_tails,
        max_master_ratio,
        seed_captured,
        thresholds: *thresholds,
        verdict,
    })
}

/// No probes means no evidence. Zero trend: every probe value at the last step is within
/// `tail_factor ×` its Bessel tail (or below the floor). Nonzero limit: the
/// seed is not captured and some probe value sits above that level and has
/// stopped changing.
fn decide(
    values: &[Vec<f64>],
    tails: &[f64],
    seed_captured: bool,
    t: &VerdictThresholds,
) -> Verdict {
    if values.is_empty() {
        return Verdict::Inconclusive;
    }
    let level = |tail: f64| (t.tail_factor * tail).max(t.floor);
    let all_controlled = values
        .iter()
        .zip(tails)
        .all(|(v, &tail)| *v.last().expect("nonempty series") <= level(tail));
    if all_controlled {
        return Verdict::WeakLimitZeroTrend;
    }
    let stable_witness = values.iter().zip(tails).any(|(v, &tail)| {
        let last = v[v.len() - 1];
        v.len() >= 2
            && last > level(tail)
            && (last - v[v.len() - 2]).abs() <= t.stabilization * last
    });
    if !seed_captured && stable_witness {
        Verdict::NonzeroWeakLimit
    } else {
        Verdict::Inconclusive
    }
}

/// Extends `span(Θ)` under `T` until it is numerically invariant (or fills
/// the space) and reports the resulting subspace.
pub fn orbit_closure(
    op: &OperatorSpec,
    theta: &OrthonormalSystem,
    cfg: &GSConfig,
) -> Result<InvariantSubspaceReport> {
    let mut gs = Orthogonalizer::new(op.dim(), *cfg)?.with_canonical_phase(true);
    for t in theta.vectors() {
        if let Step::Breakdown { index, .. } = gs.push(t)? {
            return Err(LabError::NumericFailure(format!(
                "basis vector {index} dependent while reloading the orbit basis"
            )));
        }
    }
    while gs.len() < op.dim() {
        let u = apply(op, gs.normalized().last().expect("nonempty basis"))?;
        if let Step::Breakdown { .. } = gs.push(&u)? {
            break;
        }
    }
    let system = gs.system()?;
    if system.gram_defect() > cfg.thresholds.ortho_tol {
        return Err(LabError::NumericFailure(format!(
            "orbit closure basis lost orthogonality: Gram defect {:.3e}",
            system.gram_defect()
        )));
    }
    let basis = SubspaceBasis::new(system);
    let residual = invariance_residual(op, &basis, &cfg.thresholds)?;
    Ok(InvariantSubspaceReport {
        nontrivial: basis.is_nontrivial(),
        basis,
        invariance_residual: residual,
        eigenvalue: None,
    })
}

/// Outcome of the full pipeline on one `(T, x)` pair.
#[derive(Clone, Debug, Serialize)]
pub struct FourthClaimVerdict {
    pub chain: OrbitChain,
    pub certificate: ThirdClaimCertificate,
    pub cyclicity: CyclicityReport,
    pub weak: WeakConvergenceReport,
    pub verdict: Verdict,
    /// Invariance residual of `span(θ_1..θ_K)` itself.
    pub depth_span_invariance_residual: f64,
    /// Closure of the orbit of `T x` at truncation.
    pub orbit_closure: InvariantSubspaceReport,
}

impl FourthClaimVerdict {
    /// The orbit closure misses part of the space: a closed nontrivial
    /// invariant subspace.
    pub fn exhibits_invariant_subspace(&self, tol: &ToleranceConfig) -> bool {
        self.orbit_closure.nontrivial && self.orbit_closure.invariance_residual <= tol.breakdown_tol
    }
}

pub fn fourth_claim_verdict(
    op: &OperatorSpec,
    x: &HVector,
    depth: usize,
    probes: &[Probe],
    cfg: &GSConfig,
) -> Result<FourthClaimVerdict> {
    fourth_claim_verdict_with(
        op,
        x,
        depth,
        probes,
        cfg,
        OrbitGenerator::Arnoldi,
        &VerdictThresholds::default(),
    )
}

pub fn fourth_claim_verdict_with(
    op: &OperatorSpec,
    x: &HVector,
    depth: usize,
    probes: &[Probe],
    cfg: &GSConfig,
    generator: OrbitGenerator,
    thresholds: &VerdictThresholds,
) -> Result<FourthClaimVerdict> {
    let chain = third_claim_chain_with(op, x, depth, cfg, generator)?;
    let certificate = chain.certify()?;
    let cyclicity = completeness_defect_with(&chain, probes, thresholds)?;
    let weak = weak_convergence_probe_with(&chain, probes, &cfg.thresholds, thresholds)?;
    let depth_span_invariance_residual = invariance_residual(
        op,
        &SubspaceBasis::new(chain.theta.clone()),
        &cfg.thresholds,
    )?;
    let orbit_closure = orbit_closure(op, &chain.theta, cfg)?;
    Ok(FourthClaimVerdict {
        verdict: weak.verdict,
        chain,
        certificate,
        cyclicity,
        weak,
        depth_span_invariance_residual,
        orbit_closure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shift(n: usize) -> OperatorSpec {
        OperatorSpec::unilateral_shift(n).unwrap()
    }

    fn ramp(n: usize) -> OperatorSpec {
        OperatorSpec::diagonal(
            (0..n)
                .map(|k| C64::new(1.0 + k as f64 / (n - 1) as f64, 0.0))
                .collect(),
        )
        .unwrap()
    }

    fn ones(n: usize) -> HVector {
        HVector::from_real(&vec![1.0; n]).unwrap()
    }

    #[test]
    fn orbit_of_shift() {
        let e1 = HVector::basis(6, 0).unwrap();
        let orbit = build_orbit(&shift(6), &e1, 3, false).unwrap();
        assert_eq!(orbit.len(), 3);
        for (k, v) in orbit.iter().enumerate() {
            assert_eq!(*v, HVector::basis(6, k + 1).unwrap());
        }
        let with_x0 = build_orbit(&shift(6), &e1, 3, true).unwrap();
        assert_eq!(with_x0.len(), 4);
        assert_eq!(with_x0[0], e1);
        assert!(build_orbit(&shift(6), &e1, 0, false).is_err());
    }

    #[test]
    fn rescaled_orbit_keeps_directions() {
        let mut entries = vec![C64::new(0.0, 0.0); 6];
        entries[0] = C64::new(1e5, 0.0);
        entries[1] = C64::new(2e5, 0.0);
        let t = OperatorSpec::diagonal(entries).unwrap();
        let x = HVector::from_real(&[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let o = build_orbit_rescaled(&t, &x, 6).unwrap();
        assert_eq!(o.vectors.len(), 6);
        for v in &o.vectors {
            let n = v.norm();
            assert!(n > RESCALE_BAND.0 && n < RESCALE_BAND.1);
        }
        // T^6 x ∝ (1, 64)
        let last = &o.vectors[5];
        let ratio = last.coeffs()[1] / last.coeffs()[0];
        assert!((ratio - C64::new(64.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn shift_chain_from_e1() {
        let n = 32;
        let e1 = HVector::basis(n, 0).unwrap();
        let chain = third_claim_chain(&shift(n), &e1, 8, &GSConfig::default()).unwrap();
        assert_eq!(chain.depth(), 8);
        assert_eq!(chain.breakdown_index, None);
        for (j, t) in chain.theta.vectors().iter().enumerate() {
            assert!(t.max_abs_diff(&HVector::basis(n, j + 1).unwrap()).unwrap() < 1e-15);
        }
        assert!(chain.a.values().iter().all(|a| a.norm() == 0.0));
        for y in &chain.directions {
            assert!(y.max_abs_diff(&e1).unwrap() < 1e-15);
        }
        let cert = chain.certify().unwrap();
        assert!(cert.holds(&ToleranceConfig::default(), 1.0));
        assert_eq!(cert.nonvanishing_steps, 8);
    }

    #[test]
    fn seed_in_kernel_is_rejected() {
        let e_last = HVector::basis(8, 7).unwrap();
        let err = third_claim_chain(&shift(8), &e_last, 2, &GSConfig::default()).unwrap_err();
        assert!(matches!(err, LabError::InvalidInput(_)));
    }

    #[test]
    fn full_depth_diagonal_saturates() {
        let n = 64;
        let chain = third_claim_chain(&ramp(n), &ones(n), n, &GSConfig::default()).unwrap();
        assert_eq!(chain.depth(), n);
        assert_eq!(chain.breakdown_index, Some(n + 1));
        assert!(chain.final_residual_norm() <= 1e-8);
        let probes = default_probes(&ones(n), 16, 4, 7).unwrap();
        let cyc = completeness_defect(&chain, &probes).unwrap();
        assert!(cyc.dense_at_truncation);
        assert!(cyc.probe_defects.iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn generators_agree_while_well_conditioned() {
        let n = 24;
        let cfg = GSConfig::default();
        let a =
            third_claim_chain_with(&ramp(n), &ones(n), 5, &cfg, OrbitGenerator::Arnoldi).unwrap();
        let b =
            third_claim_chain_with(&ramp(n), &ones(n), 5, &cfg, OrbitGenerator::Powers).unwrap();
        for (u, v) in a.theta.vectors().iter().zip(b.theta.vectors()) {
            assert!(u.max_abs_diff(v).unwrap() < 1e-8);
        }
        for (ra, rb) in a.residual_norms().iter().zip(b.residual_norms()) {
            assert!((ra - rb).abs() < 1e-8);
        }
    }

    #[test]
    fn raw_powers_saturate_early_on_the_ramp() {
        let n = 64;
        let cfg = GSConfig::default();
        let b =
            third_claim_chain_with(&ramp(n), &ones(n), 48, &cfg, OrbitGenerator::Powers).unwrap();
        assert!(b.breakdown_index.unwrap() < 48);
        let a =
            third_claim_chain_with(&ramp(n), &ones(n), 48, &cfg, OrbitGenerator::Arnoldi).unwrap();
        assert_eq!(a.depth(), 48);
    }

    #[test]
    fn probe_values_for_the_shift() {
        let n = 32;
        let e1 = HVector::basis(n, 0).unwrap();
        let chain = third_claim_chain(&shift(n), &e1, 8, &GSConfig::default()).unwrap();
        let probes = default_probes(&e1, 8, 2, 1).unwrap();
        let w = weak_convergence_probe(&chain, &probes, &ToleranceConfig::default()).unwrap();
        assert_eq!(w.labels[0], "e1");
        assert!(w.values[0].iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!(
            w.values[1].iter().all(|v| *v < 1e-15),
            "e2 = θ_1 is orthogonal to every y_n"
        );
        assert_eq!(w.verdict, Verdict::NonzeroWeakLimit);
        assert!(!w.seed_captured);
        assert!(w.max_master_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn self_probe_recovers_residual_norms() {
        let n = 40;
        let x = ones(n);
        let chain = third_claim_chain(&ramp(n), &x, 10, &GSConfig::default()).unwrap();
        let probes = vec![Probe::new("x", x.clone())];
        let w = weak_convergence_probe(&chain, &probes, &ToleranceConfig::default()).unwrap();
        for (v, r) in w.values[0].iter().zip(chain.residual_norms()) {
            assert!((v - r).abs() <= 1e-10 * x.norm());
        }
    }

    #[test]
    fn empty_probe_set_is_inconclusive() {
        let e1 = HVector::basis(16, 0).unwrap();
        let chain = third_claim_chain(&shift(16), &e1, 4, &GSConfig::default()).unwrap();
        let w = weak_convergence_probe(&chain, &[], &ToleranceConfig::default()).unwrap();
        assert_eq!(w.verdict, Verdict::Inconclusive);
        let zero = vec![Probe::new("z", HVector::zeros(16))];
        assert!(weak_convergence_probe(&chain, &zero, &ToleranceConfig::default()).is_err());
    }

    #[test]
    fn shift_pipeline_finds_the_orbit_closure() {
        let n = 32;
        let e1 = HVector::basis(n, 0).unwrap();
        let probes = default_probes(&e1, 8, 2, 1).unwrap();
        let v = fourth_claim_verdict(&shift(n), &e1, 8, &probes, &GSConfig::default()).unwrap();
        assert_eq!(v.verdict, Verdict::NonzeroWeakLimit);
        assert!((v.depth_span_invariance_residual - 1.0).abs() < 1e-12);
        assert_eq!(v.orbit_closure.basis.dim(), n - 1);
        assert!(v.exhibits_invariant_subspace(&ToleranceConfig::default()));
    }
}

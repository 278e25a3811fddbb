use serde::{Deserialize, Serialize};

use crate::chain::{
    CyclicityReport, FourthClaimVerdict, OrbitGenerator, ThirdClaimCertificate, Verdict,
    WeakConvergenceReport,
};
use crate::gram_schmidt::GSConfig;

use super::config::ScenarioConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub requested_depth: usize,
    pub depth: usize,
    pub generator: OrbitGenerator,
    pub breakdown_index: Option<usize>,
    /// Number of normalized directions `y_n`.
    pub directions: usize,
    /// `|a_j|`, `j = 1..=depth`.
    pub a_moduli: Vec<f64>,
    /// `‖x_n‖`, `n = 1..=depth`.
    pub residual_norms: Vec<f64>,
    /// `log10` of the rescaling applied to each stored power `T^k x`.
    pub log10_scales: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceSummary {
    /// Invariance residual of `span(θ_1..θ_K)`.
    pub depth_span_residual: f64,
    pub orbit_closure_dim: usize,
    pub orbit_closure_residual: f64,
    pub orbit_closure_nontrivial: bool,
    pub exhibits_invariant_subspace: bool,
}

/// Reference values `2(1 − 2^{-n})` of the functional asserted for the
/// weak limit. Carried for comparison only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimedFunctional {
    pub values: Vec<f64>,
    pub note: String,
}

impl ClaimedFunctional {
    pub fn for_steps(m: usize) -> Self {
        Self {
            values: (1..=m)
                .map(|n| 2.0 * (1.0 - 0.5f64.powi(n as i32)))
                .collect(),
            note: "informational; not used by any check or verdict".into(),
        }
    }
}

/// Deterministic part of a run: identical inputs give byte-identical JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub tool: ToolInfo,
    pub scenario: ScenarioConfig,
    pub gs: GSConfig,
    pub operator_norm: f64,
    pub chain: ChainSummary,
    pub certificate: ThirdClaimCertificate,
    pub cyclicity: CyclicityReport,
    pub weak: WeakConvergenceReport,
    pub invariance: InvarianceSummary,
    pub verdict: Verdict,
    pub claimed_functional: ClaimedFunctional,
}

impl ReportBody {
    pub fn new(scenario: ScenarioConfig, operator_norm: f64, v: &FourthClaimVerdict) -> Self {
        let chain = &v.chain;
        let gs = scenario.gs_config();
        Self {
            tool: ToolInfo::current(),
            gs,
            operator_norm,
            chain: ChainSummary {
                requested_depth: chain.requested_depth,
                depth: chain.depth(),
                generator: chain.generator,
                breakdown_index: chain.breakdown_index,
                directions: chain.directions.len(),
                a_moduli: chain.a.values().iter().map(|a| a.norm()).collect(),
                residual_norms: chain.residual_norms(),
                log10_scales: chain.orbit.log10_scales.clone(),
            },
            certificate: v.certificate,
            cyclicity: v.cyclicity.clone(),
            weak: v.weak.clone(),
            invariance: InvarianceSummary {
                depth_span_residual: v.depth_span_invariance_residual,
                orbit_closure_dim: v.orbit_closure.basis.dim(),
                orbit_closure_residual: v.orbit_closure.invariance_residual,
                orbit_closure_nontrivial: v.orbit_closure.nontrivial,
                exhibits_invariant_subspace: v.exhibits_invariant_subspace(&gs.thresholds),
            },
            verdict: v.verdict,
            claimed_functional: ClaimedFunctional::for_steps(chain.directions.len()),
            scenario,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `n,a_modulus,residual_norm` for the coefficient and residual ladders.
    pub fn ladder_csv(&self) -> String {
        let mut out = String::from("n,a_modulus,residual_norm\n");
        for (n, (a, r)) in self
            .chain
            .a_moduli
            .iter()
            .zip(&self.chain.residual_norms)
            .enumerate()
        {
            out.push_str(&format!("{},{a:e},{r:e}\n", n + 1));
        }
        out
    }
}

/// Run metadata that varies between otherwise identical runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub wall_time_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub body: ReportBody,
    pub meta: RunMeta,
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chain::{
    default_probes, random_probes, OrbitGenerator, Probe, Verdict, VerdictThresholds,
};
use crate::error::{LabError, Result};
use crate::gram_schmidt::{GSConfig, GsVariant};
use crate::hilbert::{HVector, ToleranceConfig, C64};
use crate::operators::OperatorSpec;

/// A scalar written either as a real number or as `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Real(f64),
    Complex([f64; 2]),
}

impl Scalar {
    pub fn value(self) -> C64 {
        match self {
            Scalar::Real(x) => C64::new(x, 0.0),
            Scalar::Complex([re, im]) => C64::new(re, im),
        }
    }
}

/// A length-`dim` sequence of scalars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sequence {
    Explicit(Vec<Scalar>),
    Constant(Scalar),
    /// Evenly spaced reals from `start` to `end` inclusive.
    Linspace([f64; 2]),
    /// `c / j` for `j = 1..=dim`.
    Harmonic(f64),
}

impl Sequence {
    fn realize(&self, dim: usize) -> Result<Vec<C64>> {
        let out: Vec<C64> = match self {
            Sequence::Explicit(xs) => {
                if xs.len() != dim {
                    return Err(LabError::Config(format!(
                        "explicit sequence has {} entries, expected {dim}",
                        xs.len()
                    )));
                }
                xs.iter().map(|s| s.value()).collect()
            }
            Sequence::Constant(c) => vec![c.value(); dim],
            Sequence::Linspace([a, b]) => (0..dim)
                .map(|k| C64::new(a + (b - a) * k as f64 / (dim - 1) as f64, 0.0))
                .collect(),
            Sequence::Harmonic(c) => (1..=dim).map(|j| C64::new(c / j as f64, 0.0)).collect(),
        };
        if out.iter().any(|c| !c.is_finite()) {
            return Err(LabError::Config("sequence has non-finite entries".into()));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumTerm {
    pub coef: Scalar,
    pub operator: OperatorDescription,
}

/// Dimension-free description of an operator; realized against the
/// scenario's `dim` and `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorDescription {
    UnilateralShift,
    Identity,
    WeightedShift {
        weights: Sequence,
    },
    Diagonal {
        entries: Sequence,
    },
    Dense {
        matrix: Vec<Vec<Scalar>>,
    },
    /// Complex Gaussian entries with standard deviation `scale` per entry
    /// (default `1/√dim`).
    RandomDense {
        #[serde(default)]
        scale: Option<f64>,
        #[serde(default)]
        seed: Option<u64>,
    },
    ScaledSum {
        terms: Vec<SumTerm>,
    },
    /// `A_1 A_2 ⋯ A_k`, the last factor acting first.
    Composition {
        factors: Vec<OperatorDescription>,
    },
}

impl OperatorDescription {
    pub fn realize(&self, dim: usize, seed: u64) -> Result<OperatorSpec> {
        let spec = match self {
            Self::UnilateralShift => OperatorSpec::unilateral_shift(dim),
            Self::Identity => OperatorSpec::identity(dim),
            Self::WeightedShift { weights } => OperatorSpec::weighted_shift(weights.realize(dim)?),
            Self::Diagonal { entries } => OperatorSpec::diagonal(entries.realize(dim)?),
            Self::Dense { matrix } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                    return Err(LabError::Config(format!(
                        "dense matrix must be {dim}×{dim}"
                    )));
                }
                OperatorSpec::dense(
                    matrix
                        .iter()
                        .map(|row| row.iter().map(|s| s.value()).collect())
                        .collect(),
                )
            }
            Self::RandomDense { scale, seed: own } => {
                let scale = scale.unwrap_or(1.0 / (dim as f64).sqrt());
                let mut rng = ChaCha8Rng::seed_from_u64(own.unwrap_or(seed));
                // each of re, im has variance scale²/2
                let s = scale * std::f64::consts::FRAC_1_SQRT_2;
                let mut entry = || {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(s * re, s * im)
                };
                OperatorSpec::dense(
                    (0..dim)
                        .map(|_| (0..dim).map(|_| entry()).collect())
                        .collect(),
                )
            }
            Self::ScaledSum { terms } => OperatorSpec::scaled_sum(
                terms
                    .iter()
                    .map(|t| Ok((t.coef.value(), t.operator.realize(dim, seed)?)))
                    .collect::<Result<Vec<_>>>()?,
            ),
            Self::Composition { factors } => OperatorSpec::composition(
                factors
                    .iter()
                    .map(|f| f.realize(dim, seed))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        spec.map_err(|e| match e {
            LabError::InvalidInput(msg) => LabError::Config(format!("operator: {msg}")),
            LabError::DimensionMismatch { expected, found } => LabError::Config(format!(
                "operator: dimension mismatch (expected {expected}, found {found})"
            )),
            other => other,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedVector {
    /// `e_k`, one-based.
    Canonical(usize),
    AllOnes,
    /// Seeded complex Gaussian unit vector.
    Random(u64),
}

impl SeedVector {
    pub fn realize(&self, dim: usize) -> Result<HVector> {
        match *self {
            SeedVector::Canonical(k) => {
                if k == 0 || k > dim {
                    return Err(LabError::Config(format!(
                        "canonical seed index {k} outside 1..={dim}"
                    )));
                }
                HVector::basis(dim, k - 1)
            }
            SeedVector::AllOnes => HVector::from_real(&vec![1.0; dim]),
            SeedVector::Random(seed) => Ok(HVector::random_unit(
                dim,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalProbes {
    /// `e_1..e_depth`.
    #[default]
    UpToDepth,
    None,
    /// One-based indices.
    List(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSetConfig {
    pub canonical: CanonicalProbes,
    pub include_seed: bool,
    pub random: usize,
}

impl Default for ProbeSetConfig {
    fn default() -> Self {
        Self {
            canonical: CanonicalProbes::UpToDepth,
            include_seed: true,
            random: 8,
        }
    }
}

impl ProbeSetConfig {
    pub fn realize(&self, x: &HVector, depth: usize, seed: u64) -> Result<Vec<Probe>> {
        let dim = x.dim();
        if *self == Self::default() {
            return default_probes(x, depth, self.random, seed);
        }
        let indices: Vec<usize> = match &self.canonical {
            CanonicalProbes::UpToDepth => (1..=depth.min(dim)).collect(),
            CanonicalProbes::None => Vec::new(),
            CanonicalProbes::List(ks) => ks.clone(),
        };
        let mut probes = Vec::new();
        for k in indices {
            if k == 0 || k > dim {
                return Err(LabError::Config(format!(
                    "probe index {k} outside 1..={dim}"
                )));
            }
            probes.push(Probe::new(format!("e{k}"), HVector::basis(dim, k - 1)?));
        }
        if self.include_seed {
            probes.push(Probe::new("x", x.normalized()?));
        }
        probes.extend(random_probes(dim, self.random, seed));
        Ok(probes)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsOverrides {
    pub variant: GsVariant,
    pub reorthogonalize: Option<bool>,
}

/// One experiment: an operator, a seed vector, a depth and the probe set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub dim: usize,
    pub depth: usize,
    pub operator: OperatorDescription,
    pub seed_vector: SeedVector,
    #[serde(default)]
    pub probes: ProbeSetConfig,
    #[serde(default)]
    pub gs: GsOverrides,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub verdict_thresholds: VerdictThresholds,
    #[serde(default)]
    pub generator: OrbitGenerator,
    #[serde(default)]
    pub seed: u64,
    /// Documented outcome; informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_verdict: Option<Verdict>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    /// Largest admissible depth: `dim − dim/4`, which keeps the orbit clear
    /// of the truncation edge.
    pub fn max_depth(dim: usize) -> usize {
        dim - dim / 4
    }

    pub fn gs_config(&self) -> GSConfig {
        GSConfig {
            variant: self.gs.variant,
            reorthogonalize: self.gs.reorthogonalize.unwrap_or(true),
            thresholds: self.tolerances,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(LabError::Config("name: must be nonempty".into()));
        }
        if !self
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
            || self.name.starts_with('.')
        {
            return Err(LabError::Config(format!(
                "name: {:?} may only contain ASCII letters, digits, '_', '-' and '.'",
                self.name
            )));
        }
        if self.dim < 2 {
            return Err(LabError::Config(format!(
                "dim: must be at least 2, got {}",
                self.dim
            )));
        }
        if self.depth == 0 {
            return Err(LabError::Config("depth: must be at least 1".into()));
        }
        if self.depth > self.dim {
            return Err(LabError::Config(format!(
                "depth: {} exceeds dim {}",
                self.depth, self.dim
            )));
        }
        let cap = Self::max_depth(self.dim);
        if self.depth > cap {
            return Err(LabError::Config(format!(
                "depth: {} exceeds dim − dim/4 = {cap} (truncation margin)",
                self.depth
            )));
        }
        self.tolerances.validate()?;
        let t = &self.verdict_thresholds;
        if [t.tail_factor, t.floor, t.stabilization, t.completeness_tol]
            .iter()
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(LabError::Config(
                "verdict_thresholds: all values must be finite and positive".into(),
            ));
        }
        self.seed_vector.realize(self.dim)?;
        Ok(())
    }

    /// Operator, seed vector and probes for this scenario.
    pub fn realize(&self) -> Result<(OperatorSpec, HVector, Vec<Probe>)> {
        self.validate()?;
        let op = self.operator.realize(self.dim, self.seed)?;
        let x = self.seed_vector.realize(self.dim)?;
        let probes = self.probes.realize(&x, self.depth, self.seed)?;
        Ok((op, x, probes))
    }
}

/// Command-line overrides applied on top of a loaded configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub depth: Option<usize>,
    pub gs_variant: Option<GsVariant>,
    pub reorthogonalize: Option<bool>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = self.dim {
            cfg.dim = d;
        }
        if let Some(d) = self.depth {
            cfg.depth = d;
        }
        if let Some(v) = self.gs_variant {
            cfg.gs.variant = v;
        }
        if let Some(r) = self.reorthogonalize {
            cfg.gs.reorthogonalize = Some(r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScenarioConfig {
        ScenarioConfig::from_json(
            r#"{"name": "t", "dim": 8, "depth": 4,
                "operator": {"kind": "unilateral_shift"},
                "seed_vector": {"canonical": 1}}"#,
        )
        .unwrap()
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = base();
        assert_eq!(cfg.probes, ProbeSetConfig::default());
        assert_eq!(cfg.gs_config(), GSConfig::default());
        assert_eq!(cfg.generator, OrbitGenerator::Arnoldi);
        let (_, x, probes) = cfg.realize().unwrap();
        assert_eq!(x, HVector::basis(8, 0).unwrap());
        // e1..e4, x, r1..r8
        assert_eq!(probes.len(), 13);
        assert_eq!(probes[4].label, "x");
    }

    #[test]
    fn depth_checks() {
        let mut cfg = base();
        cfg.depth = 9;
        assert!(matches!(cfg.validate(), Err(LabError::Config(m)) if m.contains("exceeds dim")));
        cfg.depth = 7;
        assert!(matches!(cfg.validate(), Err(LabError::Config(m)) if m.contains("margin")));
        cfg.depth = 6;
        cfg.validate().unwrap();
    }

    #[test]
    fn bad_fields_are_rejected() {
        let mut cfg = base();
        cfg.name = "a/b".into();
        assert!(cfg.validate().is_err());
        let mut cfg = base();
        cfg.seed_vector = SeedVector::Canonical(0);
        assert!(cfg.validate().is_err());
        assert!(ScenarioConfig::from_json(r#"{"name": "t"}"#).is_err());
        assert!(ScenarioConfig::from_json(
            r#"{"name": "t", "dim": 8, "depth": 4, "bogus": 1,
                "operator": {"kind": "identity"}, "seed_vector": "all_ones"}"#
        )
        .is_err());
    }

    #[test]
    fn sequences_and_operators_realize() {
        let lin = Sequence::Linspace([1.0, 2.0]).realize(5).unwrap();
        assert_eq!(lin[0], C64::new(1.0, 0.0));
        assert_eq!(lin[4], C64::new(2.0, 0.0));
        assert_eq!(
            Sequence::Harmonic(1.0).realize(4).unwrap()[3],
            C64::new(0.25, 0.0)
        );
        assert!(Sequence::Explicit(vec![Scalar::Real(1.0)])
            .realize(3)
            .is_err());

        let desc: OperatorDescription = serde_json::from_str(
            r#"{"kind": "scaled_sum", "terms": [
                {"coef": 2.0, "operator": {"kind": "identity"}},
                {"coef": [0.0, 1.0], "operator": {"kind": "random_dense", "seed": 3}}]}"#,
        )
        .unwrap();
        let a = desc.realize(6, 0).unwrap();
        let b = desc.realize(6, 99).unwrap();
        assert_eq!(a, b, "explicit operator seed wins over the scenario seed");

        let bad = OperatorDescription::Dense {
            matrix: vec![vec![Scalar::Real(1.0)]],
        };
        assert!(matches!(bad.realize(2, 0), Err(LabError::Config(_))));
    }

    #[test]
    fn custom_probe_sets() {
        let x = HVector::basis(6, 0).unwrap();
        let set = ProbeSetConfig {
            canonical: CanonicalProbes::List(vec![2, 6]),
            include_seed: false,
            random: 1,
        };
        let labels: Vec<_> = set
            .realize(&x, 3, 0)
            .unwrap()
            .into_iter()
            .map(|p| p.label)
            .collect();
        assert_eq!(labels, ["e2", "e6", "r1"]);
        let empty = ProbeSetConfig {
            canonical: CanonicalProbes::None,
            include_seed: false,
            random: 0,
        };
        assert!(empty.realize(&x, 3, 0).unwrap().is_empty());
        let bad = ProbeSetConfig {
            canonical: CanonicalProbes::List(vec![7]),
            ..empty
        };
        assert!(bad.realize(&x, 3, 0).is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = base();
        Overrides {
            seed: Some(5),
            depth: Some(2),
            gs_variant: Some(GsVariant::Classical),
            reorthogonalize: Some(false),
            ..Default::default()
        }
        .apply(&mut cfg);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.depth, 2);
        assert_eq!(cfg.gs_config().variant, GsVariant::Classical);
        assert!(!cfg.gs_config().reorthogonalize);
    }
}

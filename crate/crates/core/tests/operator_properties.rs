use orbitlab::hilbert::{inner_product, HVector, ToleranceConfig, C64};
use orbitlab::operators::{
    apply, apply_adjoint, finite_dim_invariant_subspace, invariance_residual, kernel_basis,
    operator_norm, operator_norm_estimate, OperatorSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn dense(dim: usize, rng: &mut ChaCha8Rng) -> OperatorSpec {
    OperatorSpec::dense(
        (0..dim)
            .map(|_| (0..dim).map(|_| scalar(rng)).collect())
            .collect(),
    )
    .unwrap()
}

fn random_operator(dim: usize, rng: &mut ChaCha8Rng, nest: u32) -> OperatorSpec {
    let pick = if nest == 0 {
        rng.random_range(0..4)
    } else {
        rng.random_range(0..6)
    };
    match pick {
        0 => OperatorSpec::unilateral_shift(dim).unwrap(),
        1 => OperatorSpec::weighted_shift((0..dim).map(|_| scalar(rng)).collect()).unwrap(),
        2 => OperatorSpec::diagonal((0..dim).map(|_| scalar(rng)).collect()).unwrap(),
        3 => dense(dim, rng),
        4 => OperatorSpec::scaled_sum(
            (0..2)
                .map(|_| (scalar(rng), random_operator(dim, rng, nest - 1)))
                .collect(),
        )
        .unwrap(),
        _ => OperatorSpec::composition(
            (0..2)
                .map(|_| random_operator(dim, rng, nest - 1))
                .collect(),
        )
        .unwrap(),
    }
}

/// `G · D · H` with `nullity` zeros on the diagonal of `D`.
fn rank_deficient(dim: usize, nullity: usize, rng: &mut ChaCha8Rng) -> OperatorSpec {
    let d: Vec<C64> = (0..dim)
        .map(|i| {
            if i < nullity {
                C64::new(0.0, 0.0)
            } else {
                C64::new(rng.random_range(0.5..2.0), 0.0)
            }
        })
        .collect();
    let g = dense(dim, rng);
    let h = dense(dim, rng);
    let m = g.to_matrix() * OperatorSpec::diagonal(d).unwrap().to_matrix() * h.to_matrix();
    OperatorSpec::from_matrix(&m).unwrap()
}

proptest! {
    #[test]
    fn apply_is_linear(seed in any::<u64>(), dim in 2usize..24) {
        let tol = ToleranceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = random_operator(dim, &mut rng, 2);
        let u = HVector::random_unit(dim, &mut rng);
        let v = HVector::random_unit(dim, &mut rng);
        let (a, b) = (scalar(&mut rng), scalar(&mut rng));
        let lhs = apply(&op, &u.scale(a).add(&v.scale(b)).unwrap()).unwrap();
        let rhs = apply(&op, &u).unwrap().scale(a).add(&apply(&op, &v).unwrap().scale(b)).unwrap();
        let norm = operator_norm(&op).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= tol.eq_slack * norm.max(1.0));
    }

    #[test]
    fn adjoint_pairs_with_apply(seed in any::<u64>(), dim in 2usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = random_operator(dim, &mut rng, 2);
        let u = HVector::random_unit(dim, &mut rng);
        let v = HVector::random_unit(dim, &mut rng);
        let lhs = inner_product(&apply(&op, &u).unwrap(), &v).unwrap();
        let rhs = inner_product(&u, &apply_adjoint(&op, &v).unwrap()).unwrap();
        let norm = operator_norm(&op).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * norm.max(1.0));
    }

    #[test]
    fn kernel_is_invariant(seed in any::<u64>(), dim in 3usize..20, nullity in 1usize..4) {
        let tol = ToleranceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nullity = nullity.min(dim - 1);
        let op = rank_deficient(dim, nullity, &mut rng);
        let norm = operator_norm(&op).unwrap();
        let ker = kernel_basis(&op, &tol).unwrap().expect("rank-deficient operator has a kernel");
        prop_assert_eq!(ker.dim(), nullity);
        for q in ker.system.vectors() {
            prop_assert!(apply(&op, q).unwrap().norm() <= 1e-8 * norm);
        }
        prop_assert!(invariance_residual(&op, &ker, &tol).unwrap() <= 10.0 * tol.breakdown_tol);
    }

    #[test]
    fn eigenline_is_invariant(seed in any::<u64>(), dim in 2usize..=32) {
        let tol = ToleranceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = dense(dim, &mut rng);
        let rep = finite_dim_invariant_subspace(&op, &tol).unwrap();
        let norm = operator_norm(&op).unwrap();
        prop_assert!(rep.nontrivial);
        prop_assert_eq!(rep.basis.dim(), 1);
        let q = &rep.basis.system.vectors()[0];
        let tq = apply(&op, q).unwrap();
        let rayleigh = inner_product(&tq, q).unwrap();
        let r = tq.sub(&q.scale(rayleigh)).unwrap().norm();
        prop_assert!(r <= 1e-8 * norm.max(1.0));
        prop_assert!(rep.invariance_residual <= 1e-8 * norm.max(1.0));
    }

    #[test]
    fn norm_estimate_dominates_samples(seed in any::<u64>(), dim in 2usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = random_operator(dim, &mut rng, 1);
        let est = operator_norm_estimate(&op, 200, seed).unwrap();
        let exact = operator_norm(&op).unwrap();
        prop_assert!(est <= exact * (1.0 + 1e-12) + 1e-15);
        for _ in 0..8 {
            let v = HVector::random_unit(dim, &mut rng);
            prop_assert!(apply(&op, &v).unwrap().norm() <= est + 1e-6);
        }
    }
}

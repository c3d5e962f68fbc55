use ising_causal::exact::{exact_log_partition, exact_marginals, gibbs_moments, treatment_averaged_effects, OracleLimit};
use ising_causal::model::{conditional_field, hamiltonian, make_interaction};
use ising_causal::{CovariateMatrix, InteractionKind, InteractionMatrix, OutcomeParams, Spin};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn spins(n: usize) -> impl Strategy<Value = Vec<Spin>> {
    prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1 } else { -1 }), n)
}

fn random_symmetric(n: usize, scale: f64, vals: &[f64]) -> InteractionMatrix {
    let mut k = 0;
    InteractionMatrix::from_upper(n, |_, _| {
        k += 1;
        scale * vals[k % vals.len()]
    })
}

fn covariates(n: usize, vals: &[f64]) -> CovariateMatrix {
    CovariateMatrix::new(n, 2, (0..2 * n).map(|i| vals[i % vals.len()].clamp(-1.0, 1.0)).collect()).unwrap()
}

fn spectral(v: &[f64], n: usize) -> f64 {
    DMatrix::from_row_slice(n, n, v)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|e| e.abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn global_spin_flip(y in spins(9), t in spins(9), vals in prop::collection::vec(-1.0f64..1.0, 40),
                        tau in -2.0f64..2.0, th in prop::collection::vec(-1.0f64..1.0, 2), g in -1.0f64..1.0) {
        let a = random_symmetric(9, 0.3, &vals);
        let x = covariates(9, &vals);
        let p = OutcomeParams::new(tau, th).with_gamma(g);
        let neg: Vec<Spin> = y.iter().map(|s| -s).collect();
        let h1 = hamiltonian(&y, &t, &x, &a, &p).unwrap();
        let h2 = hamiltonian(&neg, &t, &x, &a, &p.negated()).unwrap();
        prop_assert!((h1 - h2).abs() <= 1e-12 * (1.0 + h1.abs()));
    }

    #[test]
    fn conditional_field_is_affine(y in spins(7), t in spins(7), vals in prop::collection::vec(-1.0f64..1.0, 30),
                                   i in 0usize..7, tau in -2.0f64..2.0, d in -1.0f64..1.0) {
        let a = random_symmetric(7, 0.5, &vals);
        let x = covariates(7, &vals);
        let base = OutcomeParams::new(tau, vec![0.2, -0.4]).with_gamma(0.1);
        let f = |p: &OutcomeParams| conditional_field(i, &y, &t, &x, &a, p).unwrap();
        let f0 = f(&base);
        let mut q = base.clone();
        q.tau += d;
        prop_assert!((f(&q) - f0 - d * f64::from(t[i])).abs() < 1e-12);
        let mut q = base.clone();
        q.gamma += d;
        prop_assert!((f(&q) - f0 - d).abs() < 1e-12);
        for k in 0..2 {
            let mut q = base.clone();
            q.theta[k] += d;
            prop_assert!((f(&q) - f0 - d * x.row(i)[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn generators_reproducible_and_bounded(seed in 0u64..10_000, n in 4usize..40, beta in 0.0f64..1.0, p in 0.0f64..1.0) {
        // A d-regular ring with weight β/d is dense-bounded once d ≥ βn.
        let degree = 2 * (n / 4).max(1);
        let kinds = [
            InteractionKind::CurieWeiss { beta },
            InteractionKind::BlockModel { alpha: beta, beta: beta / 2.0 },
            InteractionKind::ErdosRenyi { beta, p },
            InteractionKind::RegularGraph { beta: beta * degree as f64 / n as f64, degree },
        ];
        for kind in &kinds {
            let a = make_interaction(kind, n, seed).unwrap();
            let b = make_interaction(kind, n, seed).unwrap();
            prop_assert_eq!(a.entries(), b.entries());
            prop_assert!(a.max_scaled_entry() <= 1.0 + 1e-12);
        }
        let g = InteractionKind::Gaussian { beta };
        prop_assert_eq!(make_interaction(&g, n, seed).unwrap(), make_interaction(&g, n, seed).unwrap());
    }

    #[test]
    fn marginals_bounded(t in spins(8), vals in prop::collection::vec(-3.0f64..3.0, 30), tau in -8.0f64..8.0) {
        let a = random_symmetric(8, 1.0, &vals);
        let x = covariates(8, &vals);
        let m = exact_marginals(&a, &t, &x, &OutcomeParams::new(tau, vec![1.0, -2.0]), &OracleLimit::default()).unwrap();
        prop_assert!(m.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn log_partition_stability(n in 2usize..10, va in prop::collection::vec(-1.0f64..1.0, 50),
                               vb in prop::collection::vec(-1.0f64..1.0, 50),
                               h in prop::collection::vec(-2.0f64..2.0, 10), dh in prop::collection::vec(-0.5f64..0.5, 10)) {
        let a = random_symmetric(n, 0.6, &va);
        let b = a.add_scaled(&random_symmetric(n, 0.2, &vb), 1.0).unwrap();
        let h1 = &h[..n];
        let h2: Vec<f64> = h1.iter().zip(&dh).map(|(x, d)| x + d).collect();
        let lim = OracleLimit::default();
        let fa = gibbs_moments(&a, h1, &lim).unwrap().log_z / n as f64;
        let fb = gibbs_moments(&b, &h2, &lim).unwrap().log_z / n as f64;
        let bound = spectral(&a.difference(&b).unwrap(), n)
            + dh[..n].iter().map(|d| d.abs()).fold(0.0, f64::max);
        prop_assert!((fa - fb).abs() <= bound + 1e-12);
    }
}

#[test]
fn log_partition_is_the_oracle_entry_point() {
    let a = InteractionMatrix::zeros(3);
    let x = CovariateMatrix::empty(3);
    let z = exact_log_partition(&a, &[1, -1, 1], &x, &OutcomeParams::tau_only(0.0), &OracleLimit::default()).unwrap();
    assert!((z - 3.0 * 2f64.ln()).abs() < 1e-14);
}

#[test]
fn effects_stable_under_small_perturbations() {
    // Perturbation of spectral norm δ = 0.01 moves DE by at most 2η + 4δ/η,
    // minimized at η = √(2δ): 4√(2δ).
    let delta: f64 = 0.01;
    let bound = 4.0 * (2.0 * delta).sqrt();
    let lim = OracleLimit::default();
    for seed in 0..5u64 {
        let n = 10;
        let a = make_interaction(&InteractionKind::CurieWeiss { beta: 0.5 + 0.2 * seed as f64 }, n, seed).unwrap();
        let g = make_interaction(&InteractionKind::Gaussian { beta: 1.0 }, n, seed).unwrap();
        let scale = delta / spectral(g.entries(), n);
        let b = a.add_scaled(&g, scale).unwrap();
        let x = CovariateMatrix::empty(n);
        let p = OutcomeParams::tau_only(0.4);
        let (da, ia) = treatment_averaged_effects(&a, &x, &p, &lim).unwrap();
        let (db, ib) = treatment_averaged_effects(&b, &x, &p, &lim).unwrap();
        assert!((da - db).abs() <= bound, "seed {seed}");
        assert!((ia - ib).abs() <= bound, "seed {seed}");
    }
}

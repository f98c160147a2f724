//! Library results against independent reference computations.

mod common;

use common::{
    box_qp_enumerate, budget_projection_enumerate, eig_max, max_abs_diff,
    polytope_projection_enumerate,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rjacobi::diagnostics::solve_centralized;
use rjacobi::ev::{ev_bounds, EvScenario};
use rjacobi::instances::{random_quadratic, RandomSpec, ReferenceFamily};
use rjacobi::iteration::{gradient_step, jacobi_step};
use rjacobi::problem::frozen_gradient;
use rjacobi::sets::project_budget;
use rjacobi::spectral::{lambda_max_op, lambda_max_sym, KroneckerOnes};
use rjacobi::{compute_bounds, BlockPartition, FeasibleSet, QuadraticObjective, SmoothObjective};

fn random_symmetric(seed: u64, n: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

fn box_bounds(set: &FeasibleSet) -> (Vec<f64>, Vec<f64>) {
    let (l, u) = set.bounds();
    (l.to_vec(), u.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_iteration_matches_eigendecomposition(seed in any::<u64>(), n in 1usize..12) {
        let m = random_symmetric(seed, n);
        let got = lambda_max_sym(&m).unwrap();
        let want = eig_max(&m);
        prop_assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()), "{got} vs {want}");
    }

    #[test]
    fn jacobi_step_matches_enumerated_local_qps(seed in any::<u64>(), m in 1usize..=4, c in 0.05f64..3.0) {
        let p = random_quadratic(seed, RandomSpec::new(m, 3)).unwrap();
        let obj = p.objective();
        let part = obj.partition();
        let x = p.sample(&mut ChaCha8Rng::seed_from_u64(seed ^ 1)).unwrap();
        let got = jacobi_step(&p, &x, c).unwrap();
        let q = obj.q_mat();
        for i in 0..m {
            let r = part.range(i);
            let n_i = r.len();
            let h = q.view((r.start, r.start), (n_i, n_i)).into_owned() + DMatrix::identity(n_i, n_i) * c;
            let b: Vec<f64> = r.clone().map(|row| {
                let coupling: f64 = (0..x.len()).filter(|col| !r.contains(col)).map(|col| q[(row, col)] * x[col]).sum();
                2.0 * coupling - 2.0 * c * x[row] + obj.q_vec()[row]
            }).collect();
            let (l, u) = box_bounds(&p.sets()[i]);
            let (want, _) = box_qp_enumerate(&h, &b, &l, &u);
            prop_assert!(max_abs_diff(&got[r.clone()], &want) < 1e-8, "agent {i}: {:?} vs {want:?}", &got[r]);
        }
    }

    #[test]
    fn gradient_step_matches_dense_formula(seed in any::<u64>(), m in 1usize..=3, c in 0.1f64..4.0) {
        let p = random_quadratic(seed, RandomSpec::new(m, 3)).unwrap();
        let obj = p.objective();
        let part = obj.partition();
        let d = obj.block_decompose();
        let x = p.sample(&mut ChaCha8Rng::seed_from_u64(seed ^ 2)).unwrap();
        let got = gradient_step(&p, &d, &x, c).unwrap();
        let q = obj.q_mat();
        let g = q * nalgebra::DVector::from_column_slice(&x) * 2.0 + nalgebra::DVector::from_column_slice(obj.q_vec());
        for i in 0..m {
            let r = part.range(i);
            let n_i = r.len();
            let w = q.view((r.start, r.start), (n_i, n_i)).into_owned() / c + DMatrix::identity(n_i, n_i);
            let w_inv = w.clone().try_inverse().unwrap();
            let gi = g.rows(r.start, n_i).into_owned();
            let y = nalgebra::DVector::from_column_slice(&x[r.clone()]) - w_inv * gi / (2.0 * c);
            // Weighted projection: min (z − y)ᵀW(z − y) = zᵀWz − 2(Wy)ᵀz + const.
            let b: Vec<f64> = (&w * &y).iter().map(|v| -2.0 * v).collect();
            let (l, u) = box_bounds(&p.sets()[i]);
            let (want, _) = box_qp_enumerate(&w, &b, &l, &u);
            prop_assert!(max_abs_diff(&got[r.clone()], &want) < 1e-8);
        }
    }

    #[test]
    fn weighted_box_projection_matches_enumeration(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let w = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
        let l: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.0)).collect();
        let u: Vec<f64> = l.iter().map(|x| x + rng.random_range(0.1..2.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let set = FeasibleSet::boxed(l.clone(), u.clone()).unwrap();
        let got = set.project_weighted(&v, &w).unwrap();
        let b: Vec<f64> = (&w * nalgebra::DVector::from_column_slice(&v)).iter().map(|x| -2.0 * x).collect();
        let (want, _) = box_qp_enumerate(&w, &b, &l, &u);
        prop_assert!(max_abs_diff(&got, &want) < 1e-8, "{got:?} vs {want:?}");
    }

    #[test]
    fn polytope_projection_matches_enumeration(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.5)).collect();
        let u: Vec<f64> = l.iter().map(|x| x + rng.random_range(0.2..2.0)).collect();
        let point: Vec<f64> = l.iter().zip(&u).map(|(l, u)| l + rng.random_range(0.0..=1.0) * (u - l)).collect();
        let rows = rng.random_range(1..=3);
        let a: Vec<Vec<f64>> = (0..rows).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|r| r.iter().zip(&point).map(|(x, y)| x * y).sum::<f64>() + rng.random_range(0.0..0.5))
            .collect();
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let spd = &m * m.transpose() + DMatrix::identity(n, n) * 0.05;
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let set = FeasibleSet::polytope(a.clone(), b.clone(), l.clone(), u.clone(), point).unwrap();
        let want = polytope_projection_enumerate(&v, &DMatrix::identity(n, n), &a, &b, &l, &u);
        let got = set.project_euclidean(&v).unwrap();
        prop_assert!(max_abs_diff(&got, &want) < 1e-7, "euclidean {got:?} vs {want:?}");
        let want = polytope_projection_enumerate(&v, &spd, &a, &b, &l, &u);
        let got = set.project_weighted(&v, &spd).unwrap();
        prop_assert!(max_abs_diff(&got, &want) < 1e-6, "weighted {got:?} vs {want:?}");
    }

    #[test]
    fn budget_projection_matches_enumeration(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let l: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.0)).collect();
        let u: Vec<f64> = l.iter().map(|x| x + rng.random_range(0.1..2.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (lo, hi): (f64, f64) = (l.iter().sum(), u.iter().sum());
        let gamma = lo + rng.random_range(0.0..=1.0) * (hi - lo);
        let got = project_budget(&v, &w, &l, &u, gamma).unwrap();
        let want = budget_projection_enumerate(&v, &w, &l, &u, gamma);
        prop_assert!(max_abs_diff(&got, &want) < 1e-9, "{got:?} vs {want:?}");
    }

    #[test]
    fn centralized_oracle_matches_enumeration(seed in any::<u64>(), m in 1usize..=3) {
        let p = random_quadratic(seed, RandomSpec::new(m, 2)).unwrap();
        let obj = p.objective();
        let (l, u): (Vec<f64>, Vec<f64>) = p.sets().iter().fold((vec![], vec![]), |(mut l, mut u), s| {
            let (a, b) = box_bounds(s);
            l.extend(a);
            u.extend(b);
            (l, u)
        });
        let (_, want) = box_qp_enumerate(obj.q_mat(), obj.q_vec(), &l, &u);
        let got = solve_centralized(&p, None).unwrap();
        prop_assert!((got.f - want).abs() <= 1e-8 * (1.0 + want.abs()), "{} vs {want}", got.f);
    }

    #[test]
    fn frozen_gradient_matches_dense_assembly(seed in any::<u64>(), m in 1usize..=4) {
        let p = random_quadratic(seed, RandomSpec::new(m, 3)).unwrap();
        let obj = p.objective();
        let part = obj.partition();
        let n = obj.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let z = p.sample(&mut rng).unwrap();
        let y = p.sample(&mut rng).unwrap();
        // ∇_y Σᵢ f(Eᵢz + (I − Eᵢ)y) = Σᵢ (I − Eᵢ)(2Q(Eᵢz + (I − Eᵢ)y) + q).
        let q = obj.q_mat();
        let mut want = nalgebra::DVector::zeros(n);
        for i in 0..m {
            let r = part.range(i);
            let e = DMatrix::from_fn(n, n, |a, b| if a == b && r.contains(&a) { 1.0 } else { 0.0 });
            let rest = DMatrix::identity(n, n) - &e;
            let point = &e * nalgebra::DVector::from_column_slice(&z) + &rest * nalgebra::DVector::from_column_slice(&y);
            want += &rest * (q * point * 2.0 + nalgebra::DVector::from_column_slice(obj.q_vec()));
        }
        let got = frozen_gradient(obj, &z, &y).unwrap();
        prop_assert!(max_abs_diff(&got, want.as_slice()) < 1e-10);
        // At z = y this is (m − 1)∇f(y).
        let at_y = frozen_gradient(obj, &y, &y).unwrap();
        let g = obj.gradient(&y);
        let scaled: Vec<f64> = g.iter().map(|v| (m as f64 - 1.0) * v).collect();
        prop_assert!(max_abs_diff(&at_y, &scaled) < 1e-10);
    }
}

#[test]
fn reference_families_against_eigendecomposition() {
    for m in [2, 5, 10] {
        for fam in ReferenceFamily::ALL {
            let obj = fam.objective(m).unwrap();
            let d = obj.block_decompose();
            let b = compute_bounds(&obj, None).unwrap();
            assert!(
                (b.lambda_qz_max - eig_max(&d.qz)).abs() < 1e-9,
                "{fam} m={m}"
            );
            assert!(
                (b.lambda_q_max - eig_max(obj.q_mat())).abs() < 1e-9,
                "{fam} m={m}"
            );
        }
    }
}

#[test]
fn kronecker_spectrum_against_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for m in [1usize, 2, 3, 7, 20] {
        let p: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..1.0)).collect();
        let full = KroneckerOnes::full(m, p.clone());
        let hollow = KroneckerOnes::hollow(m, p.clone());
        let a = lambda_max_op(&full).unwrap();
        let b = lambda_max_op(&hollow).unwrap();
        assert!((a - eig_max(&full.to_dense())).abs() < 1e-9);
        assert!((b - eig_max(&hollow.to_dense())).abs() < 1e-9);
    }
}

#[test]
fn ev_coupling_eigenvalue_closed_form() {
    for m in [2usize, 5, 20, 100, 400] {
        let scn =
            EvScenario::uniform(vec![0.15; 6], vec![1.0; 6], vec![0.01; m], 0.0, 0.02).unwrap();
        let b = ev_bounds(&scn).unwrap();
        let want = (m as f64 - 1.0) * 0.15 / m as f64;
        assert!(
            (b.lambda_qz_max - want).abs() < 1e-9,
            "m={m}: {}",
            b.lambda_qz_max
        );
        if m <= 20 {
            let (dense, _) = rjacobi::ev::assemble_dense(&scn).unwrap();
            assert!((eig_max(&dense.objective().block_decompose().qz) - want).abs() < 1e-9);
        }
    }
}

#[test]
fn singular_quadratic_oracle_value() {
    // (x1 + x2)² − (x1 + x2) on [0,1]² has optimal value −1/4.
    let p = rjacobi::instances::singular_pair();
    let s = solve_centralized(&p, None).unwrap();
    assert!((s.f + 0.25).abs() < 1e-12);
}

#[test]
fn log_sum_exp_lipschitz_against_eigendecomposition() {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.0, -1.0]);
    let obj = rjacobi::LogSumExp::new(a.clone(), 0.7, BlockPartition::scalar(2).unwrap()).unwrap();
    let want = eig_max(&(a.transpose() * &a)) / 0.7;
    assert!((obj.lipschitz() - want).abs() < 1e-10 * want);
}

#[test]
fn strict_pd_constructor_agrees_with_eigenvalues() {
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..6);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let shift = rng.random_range(-0.5..0.5);
        let q = &a * a.transpose() + DMatrix::identity(n, n) * shift;
        let min = common::eig_min(&q);
        let strict = QuadraticObjective::new_strict(
            q.clone(),
            vec![0.0; n],
            BlockPartition::scalar(n).unwrap(),
        );
        if min > 1e-9 {
            assert!(strict.is_ok(), "seed {seed}: λmin = {min}");
        }
        if min < -1e-9 {
            assert!(strict.is_err());
            let max = eig_max(&q);
            if min < -1e-8 * max.abs().max(1e-300) {
                assert!(QuadraticObjective::new(
                    q,
                    vec![0.0; n],
                    BlockPartition::scalar(n).unwrap()
                )
                .is_err());
            }
        }
    }
}

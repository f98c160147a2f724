//! Reference computations that share no code with the library's solvers.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Largest eigenvalue by full symmetric eigendecomposition.
pub fn eig_max(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.max()
}

pub fn eig_min(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

fn qp_value(h: &DMatrix<f64>, b: &[f64], z: &[f64]) -> f64 {
    let zv = DVector::from_column_slice(z);
    (zv.transpose() * h * &zv)[(0, 0)] + b.iter().zip(z).map(|(x, y)| x * y).sum::<f64>()
}

/// `min zᵀHz + bᵀz` over `l ≤ z ≤ u` by enumerating which coordinates sit at
/// their lower bound, upper bound, or float. For each pattern the floating
/// coordinates solve the stationarity system (least squares when singular);
/// the best feasible candidate is returned.
pub fn box_qp_enumerate(h: &DMatrix<f64>, b: &[f64], l: &[f64], u: &[f64]) -> (Vec<f64>, f64) {
    let n = b.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut pattern = vec![0u8; n];
        let mut c = code;
        for p in pattern.iter_mut() {
            *p = (c % 3) as u8;
            c /= 3;
        }
        let mut z = vec![0.0; n];
        let free: Vec<usize> = (0..n).filter(|&j| pattern[j] == 2).collect();
        for j in 0..n {
            match pattern[j] {
                0 => z[j] = l[j],
                1 => z[j] = u[j],
                _ => {}
            }
        }
        if !free.is_empty() {
            let k = free.len();
            let hff = DMatrix::from_fn(k, k, |r, c| h[(free[r], free[c])]);
            let rhs = DVector::from_fn(k, |r, _| {
                let j = free[r];
                let fixed: f64 = (0..n)
                    .filter(|c| pattern[*c] != 2)
                    .map(|c| h[(j, c)] * z[c])
                    .sum();
                -(b[j] + 2.0 * fixed) / 2.0
            });
            let sol = hff.svd(true, true).solve(&rhs, 1e-12).expect("svd solve");
            for (r, &j) in free.iter().enumerate() {
                z[j] = sol[r];
            }
        }
        if (0..n).any(|j| z[j] < l[j] - 1e-12 || z[j] > u[j] + 1e-12) {
            continue;
        }
        let v = qp_value(h, b, &z);
        if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((z, v));
        }
    }
    best.expect("the box is nonempty")
}

/// `min Σ w (z − v)²` over `l ≤ z ≤ u, Σz = γ` by enumerating bound patterns
/// and solving for the multiplier on the floating set.
pub fn budget_projection_enumerate(
    v: &[f64],
    w: &[f64],
    l: &[f64],
    u: &[f64],
    gamma: f64,
) -> Vec<f64> {
    let n = v.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut z = vec![0.0; n];
        let mut c = code;
        let mut free = Vec::new();
        for j in 0..n {
            match c % 3 {
                0 => z[j] = l[j],
                1 => z[j] = u[j],
                _ => free.push(j),
            }
            c /= 3;
        }
        let fixed: f64 = (0..n).filter(|j| !free.contains(j)).map(|j| z[j]).sum();
        if free.is_empty() {
            if (fixed - gamma).abs() > 1e-12 {
                continue;
            }
        } else {
            // z_j = v_j − μ/(2w_j) and Σ z = γ.
            let sv: f64 = free.iter().map(|&j| v[j]).sum();
            let si: f64 = free.iter().map(|&j| 1.0 / (2.0 * w[j])).sum();
            let mu = (sv + fixed - gamma) / si;
            for &j in &free {
                z[j] = v[j] - mu / (2.0 * w[j]);
            }
        }
        if (0..n).any(|j| z[j] < l[j] - 1e-12 || z[j] > u[j] + 1e-12) {
            continue;
        }
        let val: f64 = (0..n).map(|j| w[j] * (z[j] - v[j]).powi(2)).sum();
        if best.as_ref().is_none_or(|(_, b)| val < *b) {
            best = Some((z, val));
        }
    }
    best.expect("budget feasible").0
}

/// `min (z − v)ᵀW(z − v)` over `az ≤ b, l ≤ z ≤ u` by solving the KKT system
/// for every subset of at most `n` active constraints and keeping the best
/// primal and dual feasible point.
pub fn polytope_projection_enumerate(
    v: &[f64],
    w: &DMatrix<f64>,
    a: &[Vec<f64>],
    b: &[f64],
    l: &[f64],
    u: &[f64],
) -> Vec<f64> {
    let n = v.len();
    let mut rows: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), u[j]));
        e[j] = -1.0;
        rows.push((e, -l[j]));
    }
    let wv = w * DVector::from_column_slice(v);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0..1usize << rows.len() {
        let active: Vec<usize> = (0..rows.len()).filter(|k| mask >> k & 1 == 1).collect();
        if active.len() > n {
            continue;
        }
        let k = active.len();
        let mut lhs = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        lhs.view_mut((0, 0), (n, n)).copy_from(&(w * 2.0));
        for i in 0..n {
            rhs[i] = 2.0 * wv[i];
        }
        for (r, &c) in active.iter().enumerate() {
            for i in 0..n {
                lhs[(i, n + r)] = rows[c].0[i];
                lhs[(n + r, i)] = rows[c].0[i];
            }
            rhs[n + r] = rows[c].1;
        }
        let svd = lhs.svd(true, true);
        if svd.singular_values.min() < 1e-10 {
            continue;
        }
        let sol = svd.solve(&rhs, 0.0).expect("svd solve");
        let z: Vec<f64> = (0..n).map(|i| sol[i]).collect();
        if (0..k).any(|r| sol[n + r] < -1e-10) {
            continue;
        }
        if rows
            .iter()
            .any(|(g, h)| g.iter().zip(&z).map(|(x, y)| x * y).sum::<f64>() > h + 1e-10)
        {
            continue;
        }
        let d = DVector::from_fn(n, |i, _| z[i] - v[i]);
        let val = d.dot(&(w * &d));
        if best.as_ref().is_none_or(|(_, bv)| val < *bv) {
            best = Some((z, val));
        }
    }
    best.expect("a KKT point exists").0
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

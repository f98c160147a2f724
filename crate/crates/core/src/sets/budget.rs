//! Diagonally weighted projection onto `{l ≤ z ≤ u, Σ z = γ}` by bisection on
//! the budget multiplier.

use crate::error::{Error, Result};

/// Maximum bisection steps on the multiplier.
pub const MAX_BISECTION: usize = 200;
/// Budget residual accepted as exact, relative to `1 + |γ|`.
pub const BUDGET_TOL: f64 = 1e-12;

fn clip_at(mu: f64, v: &[f64], w: &[f64], l: &[f64], u: &[f64], out: &mut [f64]) {
    for j in 0..v.len() {
        out[j] = (v[j] - mu / (2.0 * w[j])).clamp(l[j], u[j]);
    }
}

/// `argmin_{l ≤ z ≤ u, Σz = γ} Σⱼ wⱼ (zⱼ − vⱼ)²` for positive weights `w`.
///
/// Stationarity gives `z(μ) = clip(v − μ/(2w), l, u)`, and `Σ z(μ)` is
/// nonincreasing in `μ`, so the multiplier is found by bisection. Once the
/// bracket pins down which components are free, the multiplier is solved for
/// exactly on that free set.
pub fn project_budget(v: &[f64], w: &[f64], l: &[f64], u: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let n = v.len();
    let lo_sum: f64 = l.iter().sum();
    let hi_sum: f64 = u.iter().sum();
    let tol = BUDGET_TOL * (1.0 + gamma.abs());
    if gamma < lo_sum - tol || gamma > hi_sum + tol {
        return Err(Error::infeasible(format!(
            "budget {gamma} outside [{lo_sum}, {hi_sum}]"
        )));
    }
    if gamma >= hi_sum - tol {
        return Ok(u.to_vec());
    }
    if gamma <= lo_sum + tol {
        return Ok(l.to_vec());
    }
    if n == 1 {
        return Ok(vec![gamma]);
    }

    // At mu_lo every component sits at its upper bound, at mu_hi at its lower.
    let mut mu_lo = f64::INFINITY;
    let mut mu_hi = f64::NEG_INFINITY;
    for j in 0..n {
        mu_lo = mu_lo.min(2.0 * w[j] * (v[j] - u[j]));
        mu_hi = mu_hi.max(2.0 * w[j] * (v[j] - l[j]));
    }

    let mut z = vec![0.0; n];
    let mut trial = vec![0.0; n];
    for _ in 0..MAX_BISECTION {
        let mid = 0.5 * (mu_lo + mu_hi);
        clip_at(mid, v, w, l, u, &mut z);
        let excess = z.iter().sum::<f64>() - gamma;
        if excess.abs() <= tol {
            return Ok(z);
        }
        if excess > 0.0 {
            mu_lo = mid;
        } else {
            mu_hi = mid;
        }

        // Exact multiplier for the current free set.
        let mut free_v = 0.0;
        let mut free_inv = 0.0;
        let mut fixed = 0.0;
        for j in 0..n {
            let raw = v[j] - mid / (2.0 * w[j]);
            if raw > l[j] && raw < u[j] {
                free_v += v[j];
                free_inv += 1.0 / (2.0 * w[j]);
            } else {
                fixed += z[j];
            }
        }
        if free_inv > 0.0 {
            let mu = (free_v - gamma + fixed) / free_inv;
            if mu >= mu_lo && mu <= mu_hi {
                clip_at(mu, v, w, l, u, &mut trial);
                let excess = trial.iter().sum::<f64>() - gamma;
                if excess.abs() <= tol {
                    return Ok(trial);
                }
            }
        }
        if mu_hi - mu_lo <= f64::EPSILON * mu_lo.abs().max(mu_hi.abs()) {
            break;
        }
    }
    // Bracket exhausted: spread the leftover over the free components.
    let mid = 0.5 * (mu_lo + mu_hi);
    clip_at(mid, v, w, l, u, &mut z);
    let mut rest = gamma - z.iter().sum::<f64>();
    for _ in 0..n {
        if rest.abs() <= tol {
            break;
        }
        let room: Vec<usize> = (0..n)
            .filter(|&j| if rest > 0.0 { z[j] < u[j] } else { z[j] > l[j] })
            .collect();
        if room.is_empty() {
            break;
        }
        let share = rest / room.len() as f64;
        for j in room {
            let nz = (z[j] + share).clamp(l[j], u[j]);
            rest -= nz - z[j];
            z[j] = nz;
        }
    }
    if rest.abs() > 1e-10 * (1.0 + gamma.abs()) {
        return Err(Error::NumericalFailure {
            what: "budget bisection",
            iterations: MAX_BISECTION,
            residual: rest.abs(),
        });
    }
    Ok(z)
}

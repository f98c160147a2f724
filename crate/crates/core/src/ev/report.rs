use std::io::Write;

use serde::{Deserialize, Serialize};

use super::EvScenario;
use crate::error::{check_dim, Result};

/// Slack used to decide whether a slot's fleet demand sits strictly inside
/// its aggregate rate bounds.
const ACTIVE_TOL: f64 = 1e-9;

/// Per-slot demand split and a flatness measure of the total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValleyReport {
    pub nonpev: Vec<f64>,
    pub pev: Vec<f64>,
    pub total: Vec<f64>,
    /// Slots where the fleet demand is strictly between the sums of the
    /// vehicles' lower and upper rate bounds.
    pub active_slots: Vec<usize>,
    /// `max − min` of the total over the active slots; zero when none are.
    pub flatness: f64,
}

pub fn valley_report(scn: &EvScenario, x: &[f64]) -> Result<ValleyReport> {
    let h = scn.horizon;
    check_dim(scn.m * h, x.len())?;
    let mut pev = vec![0.0; h];
    let mut lo = vec![0.0; h];
    let mut hi = vec![0.0; h];
    for (i, block) in x.chunks(h).enumerate() {
        for t in 0..h {
            pev[t] += block[t];
            lo[t] += scn.rate_lower[i][t];
            hi[t] += scn.rate_upper[i][t];
        }
    }
    let total: Vec<f64> = scn.d.iter().zip(&pev).map(|(d, e)| d + e).collect();
    let active_slots: Vec<usize> = (0..h)
        .filter(|&t| {
            let tol = ACTIVE_TOL * (1.0 + hi[t].abs());
            pev[t] > lo[t] + tol && pev[t] < hi[t] - tol
        })
        .collect();
    let flatness = if active_slots.is_empty() {
        0.0
    } else {
        let (mn, mx) = active_slots
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| {
                (a.min(total[t]), b.max(total[t]))
            });
        mx - mn
    };
    Ok(ValleyReport {
        nonpev: scn.d.clone(),
        pev,
        total,
        active_slots,
        flatness,
    })
}

impl ValleyReport {
    /// `t,nonpev,pev,total` with 17 significant digits.
    pub fn write_profile_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "nonpev", "pev", "total"])?;
        for t in 0..self.total.len() {
            wr.write_record([
                t.to_string(),
                format!("{:.16e}", self.nonpev[t]),
                format!("{:.16e}", self.pev[t]),
                format!("{:.16e}", self.total[t]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

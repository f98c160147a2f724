use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sets::FeasibleSet;

/// A resolved charging scenario: every field is explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvScenario {
    pub m: usize,
    pub horizon: usize,
    /// Price coefficient per slot.
    pub p: Vec<f64>,
    /// Non-PEV demand per slot.
    pub d: Vec<f64>,
    /// Energy each vehicle must receive over the horizon.
    pub gamma: Vec<f64>,
    /// Per-vehicle, per-slot rate bounds.
    pub rate_lower: Vec<Vec<f64>>,
    pub rate_upper: Vec<Vec<f64>>,
    /// Seed used to draw `gamma`, when it was drawn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl EvScenario {
    pub fn new(
        p: Vec<f64>,
        d: Vec<f64>,
        gamma: Vec<f64>,
        rate_lower: Vec<Vec<f64>>,
        rate_upper: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let s = Self {
            m: gamma.len(),
            horizon: p.len(),
            p,
            d,
            gamma,
            rate_lower,
            rate_upper,
            seed: None,
        };
        s.validate()?;
        Ok(s)
    }

    /// Uniform bounds for every vehicle and slot.
    pub fn uniform(
        p: Vec<f64>,
        d: Vec<f64>,
        gamma: Vec<f64>,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        let h = p.len();
        let m = gamma.len();
        Self::new(
            p,
            d,
            gamma,
            vec![vec![lower; h]; m],
            vec![vec![upper; h]; m],
        )
    }

    pub fn validate(&self) -> Result<()> {
        let (m, h) = (self.m, self.horizon);
        if m == 0 || h == 0 {
            return Err(Error::invalid("need at least one vehicle and one slot"));
        }
        if self.p.len() != h || self.d.len() != h {
            return Err(Error::invalid(format!(
                "p and d must have {h} entries (got {} and {})",
                self.p.len(),
                self.d.len()
            )));
        }
        if self.gamma.len() != m || self.rate_lower.len() != m || self.rate_upper.len() != m {
            return Err(Error::invalid(format!(
                "gamma and rate bounds must cover {m} vehicles"
            )));
        }
        if self.p.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("prices must be positive"));
        }
        if self.d.iter().chain(&self.gamma).any(|v| !v.is_finite()) {
            return Err(Error::invalid("demand and energy targets must be finite"));
        }
        for i in 0..m {
            if self.rate_lower[i].len() != h || self.rate_upper[i].len() != h {
                return Err(Error::invalid(format!(
                    "vehicle {i}: rate bounds must have {h} entries"
                )));
            }
            self.vehicle_set(i)?;
        }
        Ok(())
    }

    /// The budget box of vehicle `i`.
    pub fn vehicle_set(&self, i: usize) -> Result<FeasibleSet> {
        FeasibleSet::budget_box(
            self.rate_lower[i].clone(),
            self.rate_upper[i].clone(),
            self.gamma[i],
        )
        .map_err(|e| e.for_agent(i))
    }

    pub fn sets(&self) -> Result<Vec<FeasibleSet>> {
        (0..self.m).map(|i| self.vehicle_set(i)).collect()
    }

    /// Diagonal of `P = diag(p)/m`.
    pub fn p_scaled(&self) -> Vec<f64> {
        let m = self.m as f64;
        self.p.iter().map(|v| v / m).collect()
    }

    /// `dᵀPd`, the part of the cost no vehicle can influence.
    pub fn offset(&self) -> f64 {
        self.p_scaled()
            .iter()
            .zip(&self.d)
            .map(|(p, d)| p * d * d)
            .sum()
    }

    /// The fleet of the hundred-vehicle study: `γ ~ U[0.1, 0.3]`, rates in
    /// `[0, 0.02]`, 25 slots at price 0.15, synthetic demand.
    pub fn study_fleet(seed: u64) -> Self {
        Self::sampled(100, 25, 0.15, (0.1, 0.3), 0.02, seed)
    }

    /// The thousand-vehicle variant: `γ ~ U[0.005, 0.025]`, rates in `[0, 0.0025]`.
    pub fn large_fleet(seed: u64) -> Self {
        Self::sampled(1000, 25, 0.15, (0.005, 0.025), 0.0025, seed)
    }

    /// A fleet on the default synthetic demand with seeded uniform targets.
    pub fn sampled(
        m: usize,
        horizon: usize,
        price: f64,
        gamma_range: (f64, f64),
        upper: f64,
        seed: u64,
    ) -> Self {
        let d = SynthDemand::default()
            .profile(horizon)
            .expect("default profile is valid");
        let gamma = sample_gamma(m, gamma_range, seed);
        let mut s = Self::uniform(vec![price; horizon], d, gamma, 0.0, upper).expect("valid fleet");
        s.seed = Some(seed);
        s
    }
}

fn sample_gamma(m: usize, (lo, hi): (f64, f64), seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        })
        .collect()
}

/// Parameters of the smooth overnight-valley profile
/// `base − depth·exp(−(t − center)²/width²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthDemand {
    pub base: f64,
    pub valley_depth: f64,
    pub valley_center: f64,
    pub valley_width: f64,
}

impl Default for SynthDemand {
    fn default() -> Self {
        Self {
            base: 8.0,
            valley_depth: 3.0,
            valley_center: 3.0,
            valley_width: 4.0,
        }
    }
}

impl SynthDemand {
    pub fn profile(&self, horizon: usize) -> Result<Vec<f64>> {
        synth_demand(
            horizon,
            self.base,
            self.valley_depth,
            self.valley_center,
            self.valley_width,
        )
    }
}

pub fn synth_demand(
    horizon: usize,
    base: f64,
    valley_depth: f64,
    valley_center: f64,
    valley_width: f64,
) -> Result<Vec<f64>> {
    if !(valley_depth >= 0.0 && base > valley_depth) {
        return Err(Error::invalid("need base > valley_depth ≥ 0"));
    }
    if !(valley_width > 0.0) {
        return Err(Error::invalid("valley_width must be positive"));
    }
    Ok((0..horizon)
        .map(|t| {
            let u = (t as f64 - valley_center) / valley_width;
            base - valley_depth * (-u * u).exp()
        })
        .collect())
}

#[derive(Debug, Deserialize)]
struct DemandRow {
    t: usize,
    demand: f64,
}

/// Reads a `t,demand` CSV (header required, slots `0..horizon` in order).
pub fn read_demand_csv<R: std::io::Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "demand" {
        return Err(Error::invalid("demand CSV must have the header `t,demand`"));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<DemandRow>() {
        let row = row?;
        if row.t != out.len() {
            return Err(Error::invalid(format!(
                "demand CSV: expected slot {}, found {}",
                out.len(),
                row.t
            )));
        }
        out.push(row.demand);
    }
    if out.is_empty() {
        return Err(Error::invalid("demand CSV has no rows"));
    }
    Ok(out)
}

/// A scalar applied to every entry, or explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerSlot {
    Scalar(f64),
    Values(Vec<f64>),
}

impl PerSlot {
    fn expand(&self, horizon: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            PerSlot::Scalar(v) => Ok(vec![*v; horizon]),
            PerSlot::Values(v) if v.len() == horizon => Ok(v.clone()),
            PerSlot::Values(v) => Err(Error::invalid(format!(
                "{what}: expected {horizon} values, got {}",
                v.len()
            ))),
        }
    }
}

/// Rate bounds: scalar, one value per slot, or one row per vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateBounds {
    Shared(PerSlot),
    PerVehicle(Vec<Vec<f64>>),
}

impl RateBounds {
    fn expand(&self, m: usize, horizon: usize, what: &str) -> Result<Vec<Vec<f64>>> {
        match self {
            RateBounds::Shared(s) => Ok(vec![s.expand(horizon, what)?; m]),
            RateBounds::PerVehicle(rows) if rows.len() == m => Ok(rows.clone()),
            RateBounds::PerVehicle(rows) => Err(Error::invalid(format!(
                "{what}: expected {m} rows, got {}",
                rows.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DemandSpec {
    Values(Vec<f64>),
    Synth { synth: SynthDemand },
    Csv { csv: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Values(Vec<f64>),
    Uniform {
        uniform_range: [f64; 2],
        #[serde(default)]
        seed: Option<u64>,
    },
}

/// Scenario file contents before defaults and sampling are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvScenarioSpec {
    pub m: usize,
    pub horizon: usize,
    pub p: PerSlot,
    pub d: DemandSpec,
    pub gamma: GammaSpec,
    pub rate_lower: RateBounds,
    pub rate_upper: RateBounds,
}

impl EvScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Expands the spec. Relative demand-CSV paths are taken from `base_dir`;
    /// `seed` replaces the seed in the file, which defaults to 0.
    pub fn resolve(&self, base_dir: Option<&Path>, seed: Option<u64>) -> Result<EvScenario> {
        let (m, h) = (self.m, self.horizon);
        let p = self.p.expand(h, "p")?;
        let d = match &self.d {
            DemandSpec::Values(v) => PerSlot::Values(v.clone()).expand(h, "d")?,
            DemandSpec::Synth { synth } => synth.profile(h)?,
            DemandSpec::Csv { csv } => {
                let path = match base_dir {
                    Some(dir) if csv.is_relative() => dir.join(csv),
                    _ => csv.clone(),
                };
                let d = read_demand_csv(std::fs::File::open(&path)?)?;
                if d.len() != h {
                    return Err(Error::invalid(format!(
                        "{}: expected {h} slots, got {}",
                        path.display(),
                        d.len()
                    )));
                }
                d
            }
        };
        let (gamma, used_seed) = match &self.gamma {
            GammaSpec::Values(v) => {
                if v.len() != m {
                    return Err(Error::invalid(format!(
                        "gamma: expected {m} values, got {}",
                        v.len()
                    )));
                }
                (v.clone(), None)
            }
            GammaSpec::Uniform {
                uniform_range: [lo, hi],
                seed: file_seed,
            } => {
                if !(lo <= hi) {
                    return Err(Error::invalid(
                        "gamma uniform_range must be [lo, hi] with lo ≤ hi",
                    ));
                }
                let s = seed.or(*file_seed).unwrap_or(0);
                (sample_gamma(m, (*lo, *hi), s), Some(s))
            }
        };
        let mut scn = EvScenario::new(
            p,
            d,
            gamma,
            self.rate_lower.expand(m, h, "rate_lower")?,
            self.rate_upper.expand(m, h, "rate_upper")?,
        )?;
        scn.seed = used_seed;
        Ok(scn)
    }
}

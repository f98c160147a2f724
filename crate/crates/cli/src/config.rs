use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use rjacobi::spectral::DEFAULT_MARGIN;
use rjacobi::{CChoice, CPolicy, Method};
use serde::Deserialize;

/// Settings shared by every subcommand. Each may also come from `--config`;
/// flags win over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON config file with any of the flag names below as keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Quadratic problem file.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// EV scenario file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Regularization coefficient.
    #[arg(long, conflicts_with = "c_policy")]
    pub c: Option<f64>,
    /// Threshold to sit above: thm1, thm3, eq38 or grad.
    #[arg(long)]
    pub c_policy: Option<CPolicy>,
    /// Relative margin above the policy threshold.
    #[arg(long)]
    pub margin: Option<f64>,
    /// jacobi, jacobi-projection or gradient.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Stop once ‖x_{k+1} − x_k‖ falls to this value.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Relative objective gap used for iteration counts.
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Lipschitz constant of the gradient, for the eq38 threshold.
    #[arg(long)]
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    problem: Option<PathBuf>,
    scenario: Option<PathBuf>,
    c: Option<f64>,
    c_policy: Option<CPolicy>,
    margin: Option<f64>,
    method: Option<Method>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    rel_tol: Option<f64>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    lipschitz: Option<f64>,
}

/// Where `c` comes from once file and flags are merged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CSource {
    Manual(f64),
    Policy(Option<CPolicy>, f64),
}

impl CSource {
    /// Resolves against a default policy when none was named.
    pub fn choice(self, default: CPolicy) -> CChoice {
        match self {
            CSource::Manual(c) => CChoice::Manual(c),
            CSource::Policy(p, margin) => CChoice::Policy {
                policy: p.unwrap_or(default),
                margin,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub c: CSource,
    pub method: Option<Method>,
    pub max_iter: usize,
    pub tol: f64,
    pub rel_tol: f64,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub lipschitz: Option<f64>,
}

fn relative_to(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> anyhow::Result<Self> {
        let (file, base) = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let cfg: FileConfig = serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))?;
                (cfg, path.parent().map(Path::to_path_buf))
            }
            None => (FileConfig::default(), None),
        };
        if file.c.is_some() && file.c_policy.is_some() {
            bail!("config sets both c and c_policy; give exactly one");
        }
        // A c source on the command line replaces the file's entirely.
        let c = if let Some(c) = args.c {
            CSource::Manual(c)
        } else if args.c_policy.is_some() {
            CSource::Policy(
                args.c_policy,
                args.margin.or(file.margin).unwrap_or(DEFAULT_MARGIN),
            )
        } else if let Some(c) = file.c {
            if args.margin.is_some() {
                bail!("--margin needs a c policy, but the config sets a manual c");
            }
            CSource::Manual(c)
        } else {
            CSource::Policy(
                file.c_policy,
                args.margin.or(file.margin).unwrap_or(DEFAULT_MARGIN),
            )
        };
        let file_path = |p: Option<PathBuf>| p.map(|p| relative_to(base.as_deref(), p));
        let cfg = RunConfig {
            problem: args.problem.clone().or_else(|| file_path(file.problem)),
            scenario: args.scenario.clone().or_else(|| file_path(file.scenario)),
            c,
            method: args.method.or(file.method),
            max_iter: args
                .max_iter
                .or(file.max_iter)
                .unwrap_or(rjacobi::iteration::DEFAULT_MAX_ITER),
            tol: args
                .tol
                .or(file.tol)
                .unwrap_or(rjacobi::iteration::DEFAULT_TOL_STEP),
            rel_tol: args.rel_tol.or(file.rel_tol).unwrap_or(1e-6),
            out: args.out.clone().or_else(|| file_path(file.out)),
            seed: args.seed.or(file.seed),
            lipschitz: args.lipschitz.or(file.lipschitz),
        };
        for p in [&cfg.problem, &cfg.scenario].into_iter().flatten() {
            if !p.is_file() {
                bail!("input file {} does not exist", p.display());
            }
        }
        if !(cfg.rel_tol > 0.0) {
            bail!("rel_tol must be positive");
        }
        Ok(cfg)
    }

    /// Exactly one of `--problem` and `--scenario`.
    pub fn input(&self) -> anyhow::Result<Input<'_>> {
        match (&self.problem, &self.scenario) {
            (Some(p), None) => Ok(Input::Problem(p)),
            (None, Some(s)) => Ok(Input::Scenario(s)),
            (Some(_), Some(_)) => bail!("give either a problem or a scenario, not both"),
            (None, None) => bail!("missing input: pass --problem or --scenario"),
        }
    }

    pub fn out_dir(&self) -> anyhow::Result<&Path> {
        let dir = self.out.as_deref().context("missing --out directory")?;
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }
}

pub enum Input<'a> {
    Problem(&'a Path),
    Scenario(&'a Path),
}

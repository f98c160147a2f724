use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rjacobi::diagnostics::solve_centralized;
use rjacobi::ev::{
    assemble_dense, assemble_implicit, ev_bounds, run_aggregate, valley_report, EvScenario,
    EvScenarioSpec,
};
use rjacobi::io::ProblemFile;
use rjacobi::iteration::RunError;
use rjacobi::{
    compute_bounds, pick_c, run, CPolicy, IterationConfig, IterationTrace, Method, Problem,
    QuadraticObjective, SmoothObjective, SpectralBounds,
};
use serde_json::{json, Value};

use crate::config::{Input, RunConfig};

/// Multiples of the value-convergence threshold swept by `compare`.
pub const C_GRID: [f64; 7] = [0.0, 0.338, 0.507, 0.677, 1.0, 1.353, 2.706];

/// A run that hit its iteration cap. Artifacts are already on disk.
#[derive(Debug)]
pub struct NotConverged(pub String);

impl fmt::Display for NotConverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} did not converge within the iteration cap", self.0)
    }
}

impl std::error::Error for NotConverged {}

fn load_problem(path: &Path) -> anyhow::Result<Problem<QuadraticObjective>> {
    Ok(ProblemFile::read(path)
        .with_context(|| format!("reading problem {}", path.display()))?
        .problem()?)
}

fn load_scenario(path: &Path, seed: Option<u64>) -> anyhow::Result<EvScenario> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
    let spec = EvScenarioSpec::from_json(&text)
        .with_context(|| format!("parsing scenario {}", path.display()))?;
    Ok(spec.resolve(path.parent(), seed)?)
}

/// Rounds every number to 12 significant digits.
fn round_sig(v: Value) -> Value {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(f) if !n.is_u64() && !n.is_i64() => {
                let r: f64 = format!("{f:.11e}").parse().expect("formatted float parses");
                json!(r)
            }
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_sig).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_sig(v))).collect()),
        other => other,
    }
}

fn write_json(path: &Path, value: &Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn with_lipschitz(b: SpectralBounds, l: Option<f64>) -> anyhow::Result<SpectralBounds> {
    Ok(match l {
        Some(l) => {
            SpectralBounds::from_eigenvalues(b.agents, b.lambda_qz_max, b.lambda_q_max, Some(l))?
        }
        None => b,
    })
}

fn quadratic_bounds(
    p: &Problem<QuadraticObjective>,
    lipschitz: Option<f64>,
) -> anyhow::Result<SpectralBounds> {
    let l = lipschitz.unwrap_or_else(|| p.objective().lipschitz());
    Ok(compute_bounds(p.objective(), Some(l))?)
}

fn start_point<F: SmoothObjective>(p: &Problem<F>, seed: Option<u64>) -> anyhow::Result<Vec<f64>> {
    Ok(match seed {
        Some(s) => p.sample(&mut ChaCha8Rng::seed_from_u64(s))?,
        None => p.feasible_point()?,
    })
}

/// Splits a run result into the trace and an optional error, so the trace
/// can be written before the error propagates.
fn settle(r: Result<IterationTrace, RunError>) -> (IterationTrace, Option<rjacobi::Error>) {
    match r {
        Ok(t) => (t, None),
        Err(RunError { error, trace }) => (trace, Some(error)),
    }
}

fn shift_objectives(t: &mut IterationTrace, offset: f64) {
    for r in &mut t.records {
        if let Some(f) = r.objective.as_mut() {
            *f += offset;
        }
    }
}

pub fn bounds(cfg: &RunConfig) -> anyhow::Result<()> {
    let b = match cfg.input()? {
        Input::Problem(path) => quadratic_bounds(&load_problem(path)?, cfg.lipschitz)?,
        Input::Scenario(path) => {
            with_lipschitz(ev_bounds(&load_scenario(path, cfg.seed)?)?, cfg.lipschitz)?
        }
    };
    let value = round_sig(serde_json::to_value(b)?);
    println!("{}", serde_json::to_string_pretty(&value)?);
    if cfg.out.is_some() {
        write_json(&cfg.out_dir()?.join("bounds.json"), &value)?;
    }
    Ok(())
}

pub fn solve(cfg: &RunConfig) -> anyhow::Result<()> {
    let Input::Problem(path) = cfg.input()? else {
        bail!("solve takes a --problem file; use ev-sim for scenarios");
    };
    let p = load_problem(path)?;
    let b = quadratic_bounds(&p, cfg.lipschitz)?;
    let method = cfg.method.unwrap_or(Method::Jacobi);
    let default = if method == Method::Gradient {
        CPolicy::Grad
    } else {
        CPolicy::Thm3
    };
    let c = pick_c(&b, cfg.c.choice(default))?;
    let config = IterationConfig::new(c, method)
        .max_iter(cfg.max_iter)
        .tol_step(cfg.tol)
        .record_residual(true);
    config.validate()?;
    let x0 = start_point(&p, cfg.seed)?;
    let out = cfg.out_dir()?;

    let (trace, err) = settle(run(&p, &config, Some(&x0)));
    trace.write_csv_file(&out.join("trace.csv"))?;
    if let Some(e) = err {
        return Err(e.into());
    }
    let oracle = solve_centralized(&p, Some(&x0))?;
    let f = trace.final_objective().context("empty trace")?;
    let gap = f - oracle.f;
    write_json(
        &out.join("solution.json"),
        &json!({
            "method": method,
            "c": c,
            "converged": trace.converged,
            "iterations": trace.iterations,
            "f": f,
            "x": trace.x_final,
            "oracle": { "f": oracle.f, "x": oracle.x, "residual": oracle.residual },
            "gap": gap,
            "relative_gap": gap / (1.0 + oracle.f.abs()),
        }),
    )?;
    println!(
        "{method} c={c:.6e}: {} after {} iterations, f={f:.12e}, oracle f*={:.12e}, gap={gap:.3e}",
        if trace.converged {
            "converged"
        } else {
            "not converged"
        },
        trace.iterations,
        oracle.f
    );
    if !trace.converged {
        return Err(NotConverged(method.to_string()).into());
    }
    Ok(())
}

pub fn compare(cfg: &RunConfig) -> anyhow::Result<()> {
    // Scenarios keep the implicit form for the Jacobi runs; the gradient
    // method needs the dense matrix.
    let (p, offset, implicit) = match cfg.input()? {
        Input::Problem(path) => (load_problem(path)?, 0.0, None),
        Input::Scenario(path) => {
            let scn = load_scenario(path, cfg.seed)?;
            let (dense, offset) = assemble_dense(&scn)?;
            (dense, offset, Some(assemble_implicit(&scn)?))
        }
    };
    let b = quadratic_bounds(&p, cfg.lipschitz)?;
    let margin = match cfg.c {
        crate::config::CSource::Policy(_, m) => m,
        crate::config::CSource::Manual(_) => rjacobi::spectral::DEFAULT_MARGIN,
    };
    let c_jacobi = pick_c(&b, cfg.c.choice(CPolicy::Thm3))?;
    let c_grad = pick_c(
        &b,
        rjacobi::CChoice::Policy {
            policy: CPolicy::Grad,
            margin,
        },
    )?;
    let x0 = start_point(&p, cfg.seed)?;
    let out = cfg.out_dir()?;
    let f_star = solve_centralized(&p, Some(&x0))?.f + offset;

    let launch =
        |method: Method, c: f64| -> anyhow::Result<(IterationTrace, Option<rjacobi::Error>)> {
            let config = IterationConfig::new(c, method)
                .max_iter(cfg.max_iter)
                .tol_step(cfg.tol);
            config.validate()?;
            Ok(match (&implicit, method) {
                (Some(imp), Method::Jacobi) => settle(run_aggregate(imp, &config, Some(&x0))),
                _ => {
                    let (mut trace, err) = settle(run(&p, &config, Some(&x0)));
                    shift_objectives(&mut trace, offset);
                    (trace, err)
                }
            })
        };

    let mut not_converged = Vec::new();
    let mut summary = Vec::new();
    for (method, c) in [(Method::Jacobi, c_jacobi), (Method::Gradient, c_grad)] {
        let (trace, err) = launch(method, c)?;
        trace.write_csv_file(&out.join(format!("trace_{method}.csv")))?;
        if let Some(e) = err {
            return Err(e.into());
        }
        if !trace.converged {
            not_converged.push(method.to_string());
        }
        let k = trace.iterations_to_relative(f_star, cfg.rel_tol);
        println!(
            "{method:>8} c={c:.6e} iterations={} converged={} k(rel {:.0e})={}",
            trace.iterations,
            trace.converged,
            cfg.rel_tol,
            k.map_or("-".into(), |k| k.to_string())
        );
        summary.push(
            json!({ "method": method, "c": c, "iterations": trace.iterations,
            "converged": trace.converged, "iterations_to_rel_tol": k }),
        );
    }

    let threshold = b.c_thm3;
    let mut grid = String::from("multiplier,c,iterations_to_rel_tol,converged,iterations\n");
    println!(
        "c-grid over {threshold:.6e} (jacobi, relative {:.0e} against f*={f_star:.12e})",
        cfg.rel_tol
    );
    println!(
        "{:>10} {:>14} {:>8} {:>10}",
        "multiplier", "c", "k", "converged"
    );
    for mult in C_GRID {
        let c = mult * threshold;
        let (trace, err) = launch(Method::Jacobi, c)?;
        if let Some(e) = err {
            return Err(e.into());
        }
        let k = trace.iterations_to_relative(f_star, cfg.rel_tol);
        let ks = k.map_or(String::new(), |k| k.to_string());
        grid.push_str(&format!(
            "{mult},{c:.16e},{ks},{},{}\n",
            trace.converged, trace.iterations
        ));
        println!(
            "{mult:>10} {c:>14.6e} {:>8} {:>10}",
            if ks.is_empty() { "-" } else { &ks },
            trace.converged
        );
    }
    fs::write(out.join("c_grid.csv"), grid)?;
    write_json(
        &out.join("compare.json"),
        &json!({ "f_star": f_star, "threshold": threshold, "runs": summary }),
    )?;
    if !not_converged.is_empty() {
        return Err(NotConverged(not_converged.join(" and ")).into());
    }
    Ok(())
}

pub fn ev_sim(cfg: &RunConfig) -> anyhow::Result<()> {
    let Input::Scenario(path) = cfg.input()? else {
        bail!("ev-sim takes a --scenario file");
    };
    if let Some(m) = cfg.method.filter(|m| *m != Method::Jacobi) {
        bail!("ev-sim runs the aggregate Jacobi iteration only, not {m}");
    }
    let scn = load_scenario(path, cfg.seed)?;
    let p = assemble_implicit(&scn)?;
    let b = with_lipschitz(ev_bounds(&scn)?, cfg.lipschitz)?;
    let c = pick_c(&b, cfg.c.choice(CPolicy::Thm3))?;
    let config = IterationConfig::new(c, Method::Jacobi)
        .max_iter(cfg.max_iter)
        .tol_step(cfg.tol);
    config.validate()?;
    let out = cfg.out_dir()?;

    let (trace, err) = settle(run_aggregate(&p, &config, None));
    trace.write_csv_file(&out.join("trace.csv"))?;
    if let Some(e) = err {
        return Err(e.into());
    }
    let report = valley_report(&scn, &trace.x_final)?;
    let file = fs::File::create(out.join("profile.csv"))?;
    report.write_profile_csv(std::io::BufWriter::new(file))?;
    let oracle = solve_centralized(&p, None)?;
    let f = trace.final_objective().context("empty trace")?;
    let k = trace.iterations_to_relative(oracle.f, cfg.rel_tol);
    write_json(
        &out.join("report.json"),
        &json!({
            "m": scn.m,
            "horizon": scn.horizon,
            "seed": scn.seed,
            "lambda_qz_max": b.lambda_qz_max,
            "c_thm3": b.c_thm3,
            "c": c,
            "converged": trace.converged,
            "iterations": trace.iterations,
            "f": f,
            "f_star": oracle.f,
            "relative_gap": (f - oracle.f) / oracle.f.abs().max(f64::MIN_POSITIVE),
            "iterations_to_rel_tol": k,
            "valley": report,
        }),
    )?;
    println!(
        "m={} horizon={} c={c:.6e}: {} after {} iterations, f={f:.12e}, f*={:.12e}, flatness={:.3e}",
        scn.m,
        scn.horizon,
        if trace.converged { "converged" } else { "not converged" },
        trace.iterations,
        oracle.f,
        report.flatness
    );
    if !trace.converged {
        return Err(NotConverged("ev-sim".into()).into());
    }
    Ok(())
}

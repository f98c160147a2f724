//! Fleet charging: vehicles share a per-slot price on total demand and must
//! each receive a fixed energy within rate bounds. The Jacobi update only
//! needs the broadcast total demand.

mod objective;
mod report;
mod scenario;

pub use objective::{
    aggregate_jacobi_step, assemble_dense, assemble_implicit, ev_bounds, run_aggregate,
    solve_diagonal_qp, EvObjective, DENSE_MAX_AGENTS,
};
pub use report::{valley_report, ValleyReport};
pub use scenario::{
    read_demand_csv, synth_demand, DemandSpec, EvScenario, EvScenarioSpec, GammaSpec, PerSlot,
    RateBounds, SynthDemand,
};

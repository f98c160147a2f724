//! Fixtures shared by the criterion benches.

use rjacobi::ev::{assemble_implicit, EvObjective, EvScenario};
use rjacobi::instances::{random_quadratic, RandomSpec};
use rjacobi::{Problem, QuadraticObjective};

/// A dense coupled quadratic with `agents` blocks of up to `max_block` coordinates.
pub fn quadratic(agents: usize, max_block: usize) -> Problem<QuadraticObjective> {
    random_quadratic(
        17,
        RandomSpec {
            agents,
            max_block,
            budgets: true,
            singular: false,
        },
    )
    .expect("fixture instance builds")
}

/// The m-vehicle, 25-slot fleet in implicit form.
pub fn fleet(m: usize) -> (EvScenario, Problem<EvObjective>) {
    let scn = EvScenario::sampled(m, 25, 0.15, (0.1, 0.3), 0.02, 1);
    let p = assemble_implicit(&scn).expect("fixture fleet assembles");
    (scn, p)
}

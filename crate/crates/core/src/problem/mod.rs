//! Problem data: the agent partition, quadratic and general smooth objectives,
//! and the `Q_d` / `Q_z` split.

mod instance;
mod partition;
mod quadratic;
mod smooth;

pub use instance::Problem;
pub use partition::BlockPartition;
pub use quadratic::{BlockDecomposition, QuadraticObjective};
pub use smooth::{frozen_gradient, partial_sum, stacked_gradient, LogSumExp, SmoothObjective};

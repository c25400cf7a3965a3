//! Per-building PV and battery sizing and dispatch as a linear program with binary
//! installation decisions.

mod costs;
mod formulation;
mod program;
mod solve;

pub use costs::{annuity_factor, CostModel};
pub use formulation::{formulate_program, BuildingInput, DesignProgram, Layout};
pub use program::{Column, LpSolution, MathProgram, Row, SolverOptions};
pub use solve::{dispatch_fixed, solve_design, solve_design_report, SolveReport};

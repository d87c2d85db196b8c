//! Closed-form minimax inventory policies for the multi-stage newsvendor under
//! martingale demand, with a brute-force DP oracle, worst-case simulation, the
//! independent-demand baseline and large-horizon diagnostics.

pub mod asymptotics;
pub mod closed_form;
pub mod dp_oracle;
pub mod error;
pub mod independent_model;
pub mod model;
pub mod rational;
pub mod worst_case_sim;

pub use asymptotics::{convergence_report, large_b_ratio_limit, ratio_limit, ConvergenceEntry, LimitLaw, LimitParams};
pub use closed_form::{build_thresholds, ClosedForm, PolicyReport, RegionIndex, ThresholdTable};
pub use dp_oracle::{
    breakpoint_closure_grid, solve_independent_dp, solve_martingale_dp, upper_concave_envelope, DPTables,
    EnvelopeResult, Grid, VerifyReport,
};
pub use error::{Error, Result};
pub use independent_model::{finite_ratio, full_inventory_value, ind_policy_value, IndReport};
pub use model::{measure_mean, stage_cost, DiscreteMeasure, ProblemInstance, Step, Trajectory};
pub use rational::{q, Rational};
pub use worst_case_sim::{
    chain_schedule, enumerate_exact, simulate, simulate_under, stopping_law, ChainSchedule, CostEstimate, Enumeration,
    Simulation, StoppingLaw,
};

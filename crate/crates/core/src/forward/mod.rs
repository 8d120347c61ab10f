//! Forward simulation: state, cost, spike variations and expansions.

mod convergence;
mod spike;
mod state;
mod study;
mod variation;

pub use convergence::{terminal_mean_convergence, GridConvergencePoint};
pub use spike::{apply_spike, SpikeSpec, SpikeWindow};
pub use state::{
    evaluate_cost, path_costs, simulate_state, streamed_path_costs, CostEstimate, StateEnsemble,
};
pub use study::{
    dyadic_ladder, expansion_residual, ladder_study, CrossTermEstimate, CurvePoint, LadderConfig, LadderReport,
    RungReport, SupEstimate,
};
pub use variation::{
    simulate_first_variation, simulate_second_variation, simulate_variations, variational_inequality_lhs, CrossWeight,
    VariationEnsemble,
};

pub(crate) use state::{base_records, check_inputs};
pub(crate) use spike::spike_row;
pub(crate) use variation::{check_guard, run_expansion, Integrate, SpikedRecords};

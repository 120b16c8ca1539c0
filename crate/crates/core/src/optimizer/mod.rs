//! Pool allocation and model-free tuning of leased elements.

pub mod allocation;
pub mod run;
pub mod spsa;

pub use allocation::{
    allocate, AllocationError, AllocationLease, AllocationPolicy, LeaseId, LeaseIds, LeaseState,
    PoolView, RisId, RisPool,
};
pub use run::{
    objective, optimize, trajectory_csv, FeedbackChannel, FeedbackError, LeaseOptimizer,
    LeaseUpdate, MeasurementRequest, ObjectiveError, OptimizeError, OptimizeOutcome,
    OptimizeSettings, Phase, TrajectoryPoint, TRAJECTORY_HEADER,
};
pub use spsa::{GainSchedule, OptimizerError, OptimizerState, ProbePair};

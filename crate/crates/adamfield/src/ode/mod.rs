//! The ODE companion of the Adam recursion on the training-time grid:
//! ρ-partitions, the approximation-process family with its explicit bounds,
//! fixed-step integration of `dΨ = f(Ψ) dt`, and the windowwise error
//! recursion.

pub mod approx;
pub mod integrate;
pub mod partition;
pub mod recursion;

pub use approx::{
    approx_processes, estimate_regularity, prop_bounds_report, rho_partition_to_horizon,
    ApproxConfig, ApproxPaths, BoundRow, PropBoundsReport, RegularityEstimate,
};
pub use integrate::{integrate_ode, OdePath};
pub use partition::{
    kappa_constants, partition_properties_check, rho_partition, KappaConstants, PartitionReport,
    RhoPartition,
};
pub use recursion::{error_sequence, ErrorRecursion, RecursionConfig, RecursionWindow};

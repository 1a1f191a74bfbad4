//! Planar gradient-flow bifurcation analysis for the fold, cusp and
//! elliptic-umbilic generating families.
//!
//! The pipeline: `field_models` defines the flows, `critical_points` finds
//! and classifies their rest points and traces the caustic,
//! `flow_engine` integrates trajectories and measures the separatrix
//! splitting between saddles, `bifurcation_tracer` continues the splitting
//! zeros into bifurcation branches, `diagram_validator` checks the resulting
//! diagrams against the combinatorial rules, and `cli_report` drives it all
//! from a config file and writes CSV/JSON/SVG artifacts.

pub mod bifurcation_tracer;
pub mod cli_report;
pub mod critical_points;
pub mod diagram_validator;
pub mod field_models;
pub mod flow_engine;
pub mod linalg;
pub(crate) mod parallel;

pub use field_models::{
    BaseKind, FieldValue, GeneratingFamily, ParameterPoint, PhasePoint,
};

//! Tissue deformation: spring lattice, thin-plate-spline interpolation and
//! flow-field advection.

mod events;
mod flow;
mod grid;
mod tps;

pub use events::{sample_force_event, ForceEvent, SpringMotion, SpringMotionParams};
pub use flow::{advect_with_flow, read_flow_file, write_flow_file, FlowField, FlowReader, FLOW_MAGIC};
pub use grid::{build_control_grid, spring_force, step_spring_system, ControlGrid, Spring};
pub use tps::{apply_tps, fit_tps, TpsWarp};

//! Random sampling primitives: counter-based streams, shock schedules,
//! correlated normal increments, sum-of-uniforms families and jump sizes.

mod jumps;
mod normals;
mod rng;
mod schedule;
mod sou;

pub use jumps::{sample_jump_sizes, sample_jump_sizes_into};
pub use normals::{correlated_normals, correlated_normals_into};
pub use rng::{Purpose, RngStream};
pub use schedule::{merge_shock_schedules, sample_poisson_schedule, sample_shock_instants, JumpSchedule};
pub use sou::{sou_correlated_uniforms, SouError, SouFamily, SouTable, EMBEDDED_SOU_TABLE};

//! Synthetic proposal populations and scheme comparisons.

mod experiment;
mod scene;

pub use experiment::{measure_reference_ratio, run_comparison, ExperimentResult, SceneStats, SchemeSummary};
pub use scene::{generate_scene, Scene, SceneSpec};

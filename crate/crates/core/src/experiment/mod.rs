//! Training runs, seed grids, reward statistics and on-disk run logs.

pub mod config;
pub mod io;
pub mod presets;
pub mod run;
pub mod stats;

pub use config::{Architecture, TrainConfig};
pub use presets::Group;
pub use run::{run_grid, run_training, EpisodeRecord, RunLog, Trainer};
pub use stats::{aggregate_stats, RewardStats, Summary};

use crate::error::Result;

/// Runs every config of every group on one shared pool of `jobs` workers and
/// hands the logs back grouped as given.
pub fn run_groups(groups: &[Group], jobs: usize) -> Vec<Vec<Result<RunLog>>> {
    let flat: Vec<TrainConfig> = groups.iter().flat_map(|g| g.runs.iter().cloned()).collect();
    let mut results = run_grid(&flat, jobs).into_iter();
    groups
        .iter()
        .map(|g| results.by_ref().take(g.runs.len()).collect())
        .collect()
}

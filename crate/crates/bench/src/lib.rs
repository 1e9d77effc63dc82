//! Shared fixtures for the benchmarks.

use trendcause::ingest::apply_split;
use trendcause::synth::{generate, SynthConfig};
use trendcause::TrajectorySet;

/// Seeded planted-edge data, split with the usual validation and test windows.
pub fn fixture(units: usize, styles: usize, length: usize) -> TrajectorySet {
    let cfg = SynthConfig { units, styles, length, seed: 1, ..Default::default() }.with_random_edges(0.9);
    let set = generate(&cfg).expect("valid synth config").set;
    apply_split(&set, 4, 26, 8).expect("long enough to split")
}

//! Exerted influence over sliding windows.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rank_entities;
use crate::error::{Error, Result};
use crate::influence::{build_influence_tensor, GrangerConfig};
use crate::types::{Axis, TrajectorySet};

/// A year and a half of weekly buckets.
pub const DEFAULT_WINDOW: usize = 78;
/// Three months of weekly buckets.
pub const DEFAULT_STRIDE: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub axis: Axis,
    pub ids: Vec<String>,
    pub window_starts: Vec<usize>,
    /// `scores[entity][window]`: exerted influence.
    pub scores: Vec<Vec<f64>>,
}

impl Dynamics {
    pub fn series(&self, id: &str) -> Option<&[f64]> {
        self.ids.iter().position(|x| x == id).map(|i| self.scores[i].as_slice())
    }

    /// Long format `window_start,id,score`, window-major.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("window_start,id,score\n");
        for (w, start) in self.window_starts.iter().enumerate() {
            for (i, id) in self.ids.iter().enumerate() {
                let _ = writeln!(s, "{start},{id},{}", self.scores[i][w]);
            }
        }
        s
    }
}

/// Runs the influence tests and ranking on windows `[k * stride, k * stride
/// + window)` of the fitting region (everything before the test window when
/// a split is present).
pub fn influence_dynamics(
    ts: &TrajectorySet,
    axis: Axis,
    window: usize,
    stride: usize,
    cfg: &GrangerConfig,
) -> Result<Dynamics> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidArgument("window and stride must be positive".into()));
    }
    let end = ts.pre_test_len();
    if end < window {
        return Err(Error::TooShort { needed: window, have: end });
    }
    let starts: Vec<usize> = (0..).map(|k| k * stride).take_while(|s| s + window <= end).collect();
    let rankings = starts
        .par_iter()
        .map(|&s| {
            let slice = ts.slice(s..s + window)?;
            Ok(rank_entities(&build_influence_tensor(&slice, axis, cfg)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let ids = match axis {
        Axis::Unit => ts.units().to_vec(),
        Axis::Style => ts.styles().to_vec(),
    };
    let scores = ids
        .iter()
        .map(|id| {
            rankings
                .iter()
                .map(|r| r.get(id).map_or(0.0, |row| row.exerted))
                .collect()
        })
        .collect();
    Ok(Dynamics { axis, ids, window_starts: starts, scores })
}

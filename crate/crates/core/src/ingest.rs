//! Event logs to trajectory sets: aggregation, deseasonalizing, global
//! trends and train/validation/test splits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::styles::StyleModel;
use crate::types::{EventRecord, Split, TimeIndex, Trajectory, TrajectorySet};

/// Maps raw event time stamps onto bucket indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucketing {
    pub epoch: i64,
    /// Bucket width in raw time units; 1 means stamps are already buckets,
    /// 604800 turns unix seconds into weeks.
    pub width: i64,
}

impl Default for Bucketing {
    fn default() -> Self {
        Self { epoch: 0, width: 1 }
    }
}

impl Bucketing {
    pub const WEEK_SECONDS: i64 = 7 * 24 * 3600;

    pub fn bucket(&self, t: i64) -> Result<TimeIndex> {
        if self.width <= 0 {
            return Err(Error::InvalidArgument("bucket width must be positive".into()));
        }
        let b = (t - self.epoch).div_euclid(self.width);
        if b < 0 {
            return Err(Error::InvalidArgument(format!(
                "time stamp {t} precedes the bucketing epoch {}",
                self.epoch
            )));
        }
        Ok(b as TimeIndex)
    }
}

/// Style names used for trajectories built from a `K`-style model.
pub fn style_names(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("S{i}")).collect()
}

/// Mean style posterior per (style, unit, bucket).
///
/// `units` is the registered unit table; when `None` the sorted set of units
/// seen in the events is used. Buckets without events carry the previous
/// value forward; leading gaps take the first observed value.
pub fn build_trajectories(
    events: &[EventRecord],
    model: &StyleModel,
    units: Option<&[String]>,
    bucketing: Bucketing,
) -> Result<TrajectorySet> {
    if events.is_empty() {
        return Err(Error::Empty("event log"));
    }
    let units: Vec<String> = match units {
        Some(u) => u.to_vec(),
        None => {
            let mut u: Vec<String> = events.iter().map(|e| e.unit.clone()).collect();
            u.sort();
            u.dedup();
            u
        }
    };
    let unit_pos: BTreeMap<&str, usize> =
        units.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();

    let mut keyed = Vec::with_capacity(events.len());
    for e in events {
        let u = *unit_pos
            .get(e.unit.as_str())
            .ok_or_else(|| Error::UnknownUnit(e.unit.clone()))?;
        if e.attrs.len() != model.n_attributes() {
            return Err(Error::Dimension {
                expected: model.n_attributes(),
                got: e.attrs.len(),
            });
        }
        keyed.push((u, bucketing.bucket(e.t)?, e));
    }
    // Canonical order makes the floating-point sums independent of input order.
    keyed.sort_by(|a, b| {
        (a.0, a.1).cmp(&(b.0, b.1)).then_with(|| {
            a.2.attrs
                .as_slice()
                .iter()
                .zip(b.2.attrs.as_slice())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });

    let first = keyed.iter().map(|k| k.1).min().expect("non-empty");
    let last = keyed.iter().map(|k| k.1).max().expect("non-empty");
    let len = (last - first + 1) as usize;
    let k = model.n_styles();
    // sums[unit][bucket] = (per-style posterior sums, count)
    let mut sums = vec![vec![(vec![0.0; k], 0usize); len]; units.len()];
    for (u, b, e) in keyed {
        let post = model.posterior(e.attrs.as_slice())?;
        let cell = &mut sums[u][(b - first) as usize];
        for (acc, p) in cell.0.iter_mut().zip(&post) {
            *acc += p;
        }
        cell.1 += 1;
    }

    let mut values = vec![Vec::with_capacity(len); k * units.len()];
    for (u, per_bucket) in sums.iter().enumerate() {
        let Some(first_seen) = per_bucket.iter().position(|c| c.1 > 0) else {
            return Err(Error::InsufficientData(format!(
                "unit `{}` has no events",
                units[u]
            )));
        };
        for s in 0..k {
            let mut carry = per_bucket[first_seen].0[s] / per_bucket[first_seen].1 as f64;
            let series = &mut values[s * units.len() + u];
            for cell in per_bucket {
                if cell.1 > 0 {
                    carry = cell.0[s] / cell.1 as f64;
                }
                series.push(carry);
            }
        }
    }
    TrajectorySet::new(style_names(k), units, first, values)
}

/// Subtracts the value one `period` earlier; the first `period` points are
/// dropped and any split is re-derived on the shorter series with the same
/// validation and test lengths.
pub fn deseasonalize(traj: &Trajectory, period: usize) -> Result<Trajectory> {
    if period == 0 {
        return Err(Error::InvalidArgument("period must be positive".into()));
    }
    if traj.len() <= period {
        return Err(Error::TooShort {
            needed: period + 1,
            have: traj.len(),
        });
    }
    let values: Vec<f64> = (period..traj.len())
        .map(|t| traj.values[t] - traj.values[t - period])
        .collect();
    let split = match traj.split {
        Some(s) => Some(Split::new(values.len(), s.val_len(), s.test_len(), 1)?),
        None => None,
    };
    Ok(Trajectory {
        style: traj.style.clone(),
        unit: traj.unit.clone(),
        start: traj.start + period as TimeIndex,
        values,
        split,
    })
}

/// [`deseasonalize`] applied to every trajectory of a set.
pub fn deseasonalize_set(ts: &TrajectorySet, period: usize) -> Result<TrajectorySet> {
    let mut values = Vec::with_capacity(ts.n_trajectories());
    let mut split = None;
    for traj in ts.trajectories() {
        let d = deseasonalize(&traj, period)?;
        split = d.split;
        values.push(d.values);
    }
    TrajectorySet::from_parts(
        ts.styles().to_vec(),
        ts.units().to_vec(),
        ts.start() + period as TimeIndex,
        ts.resolution().to_string(),
        split,
        values,
    )
}

/// Unweighted mean over units of one style's trajectories.
pub fn global_trend(ts: &TrajectorySet, style: &str) -> Result<Trajectory> {
    let s = ts.style_index(style)?;
    let n = ts.n_units() as f64;
    let values = (0..ts.len())
        .map(|t| (0..ts.n_units()).map(|u| ts.series(s, u)[t]).sum::<f64>() / n)
        .collect();
    Ok(Trajectory {
        style: style.to_string(),
        unit: crate::influence::GLOBAL_ID.to_string(),
        start: ts.start(),
        values,
        split: ts.split(),
    })
}

/// Stamps train/validation/test boundaries on every trajectory. At least
/// `max_lag + 1` training points must remain.
pub fn apply_split(
    ts: &TrajectorySet,
    val: usize,
    test: usize,
    max_lag: usize,
) -> Result<TrajectorySet> {
    let split = Split::new(ts.len(), val, test, max_lag + 1)?;
    let mut out = ts.clone();
    out.set_split(Some(split));
    Ok(out)
}

/// Validation and test lengths used throughout: 4 and 26 weeks.
pub const DEFAULT_VAL: usize = 4;
pub const DEFAULT_TEST: usize = 26;
pub const DEFAULT_PERIOD: usize = 52;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Forecaster;
use crate::error::{Error, Result};
use crate::metrics::{mae, mape_detailed};
use crate::types::TrajectorySet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScore {
    pub style: String,
    pub unit: String,
    pub mae: f64,
    /// `None` when every truth value in the window is (near) zero.
    pub mape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub mae: f64,
    /// Mean over trajectories with a defined MAPE.
    pub mape: Option<f64>,
    pub per_trajectory: Vec<TrajectoryScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub horizon: usize,
    pub models: BTreeMap<String, ModelScore>,
}

impl ForecastReport {
    /// Models ordered by MAE, ties by name.
    pub fn ranking(&self) -> Vec<(&str, &ModelScore)> {
        let mut v: Vec<(&str, &ModelScore)> = self.models.iter().map(|(k, s)| (k.as_str(), s)).collect();
        v.sort_by(|a, b| a.1.mae.total_cmp(&b.1.mae).then_with(|| a.0.cmp(b.0)));
        v
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `model,mae,mape` rows in ranking order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,mae,mape\n");
        for (name, score) in self.ranking() {
            let mape = score.mape.map(|m| format!("{m:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{name},{:.6},{mape}", score.mae);
        }
        s
    }
}

pub fn score_forecasts(ts: &TrajectorySet, forecasts: &[Vec<f64>], horizon: usize) -> Result<ModelScore> {
    let origin = ts.pre_test_len();
    if forecasts.len() != ts.n_trajectories() {
        return Err(Error::LengthMismatch { left: ts.n_trajectories(), right: forecasts.len() });
    }
    let mut per = Vec::with_capacity(forecasts.len());
    for (i, f) in forecasts.iter().enumerate() {
        let truth = &ts.series_at(i)[origin..origin + horizon];
        let (s, u) = ts.coords(i);
        let m = match mape_detailed(f, truth) {
            Ok(m) => Some(m.percent),
            Err(Error::MapeUndefined) => None,
            Err(e) => return Err(e),
        };
        per.push(TrajectoryScore {
            style: ts.styles()[s].clone(),
            unit: ts.units()[u].clone(),
            mae: mae(f, truth)?,
            mape: m,
        });
    }
    let mae = per.iter().map(|p| p.mae).sum::<f64>() / per.len() as f64;
    let defined: Vec<f64> = per.iter().filter_map(|p| p.mape).collect();
    let mape = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(ModelScore { mae, mape, per_trajectory: per })
}

/// Fits every model on the pre-test region and scores the first `horizon`
/// steps of the test window.
pub fn evaluate(models: &[Box<dyn Forecaster>], ts: &TrajectorySet, horizon: usize) -> Result<ForecastReport> {
    let split = ts.require_split()?;
    if horizon == 0 || horizon > split.test_len() {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} must lie in 1..={}",
            split.test_len()
        )));
    }
    let mut out = BTreeMap::new();
    for m in models {
        let name = m.name();
        log::info!("evaluating {name}");
        let fitted = m.fit(ts)?;
        let f = fitted.forecast(ts, horizon)?;
        if out.insert(name.clone(), score_forecasts(ts, &f, horizon)?).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate model name `{name}`")));
        }
    }
    Ok(ForecastReport { horizon, models: out })
}

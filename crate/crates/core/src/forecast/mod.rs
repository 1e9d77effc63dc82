//! Forecasting models and the evaluation harness.
//!
//! Every model is fitted on the region before the test window (train plus
//! validation) and forecasts from its start.

pub mod baselines;
pub mod coherent;
pub mod evaluate;
pub mod mlp;
pub mod var;

pub use baselines::{
    forecast_ar, forecast_arima, forecast_expsmooth, forecast_geomodel, forecast_naive, ArimaFit,
    ArimaOrder, ExpSmoothFit, GeoModelFit, NaiveMethod,
};
pub use coherent::{
    forecast_coherent, select_alpha, train_coherent, CoherentBank, CoherentConfig,
    CombinedForecaster,
};
pub use evaluate::{evaluate, score_forecasts, ForecastReport, ModelScore, TrajectoryScore};
pub use var::{forecast_var, VarModel, VarScope};

use crate::error::{Error, Result};
use crate::influence::{build_influence_tensor, fit_ar, GrangerConfig};
use crate::types::{Axis, InfluenceTensor, TrajectorySet};

/// Default forecast horizon: six months of weekly buckets.
pub const DEFAULT_HORIZON: usize = 26;

pub trait Forecaster: Send + Sync {
    fn name(&self) -> String;
    /// Fits on the pre-test region of `ts`.
    fn fit(&self, ts: &TrajectorySet) -> Result<Box<dyn Fitted>>;
}

pub trait Fitted: Send + Sync {
    /// `horizon` steps from the start of the test window, one sequence per
    /// trajectory in set order.
    fn forecast(&self, ts: &TrajectorySet, horizon: usize) -> Result<Vec<Vec<f64>>>;
    fn parameters(&self) -> Vec<f64>;
}

/// Where a learned model gets its influence edges from.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorSource {
    /// Run the influence tests on the fitting region.
    Discover(GrangerConfig),
    Given(InfluenceTensor),
}

impl TensorSource {
    fn resolve(&self, ts: &TrajectorySet, axis: Axis) -> Result<InfluenceTensor> {
        let t = match self {
            TensorSource::Discover(cfg) => build_influence_tensor(ts, axis, cfg)?,
            TensorSource::Given(t) => t.clone(),
        };
        if t.axis() != axis {
            return Err(Error::AxisMismatch);
        }
        Ok(t)
    }
}

/// Every model the harness knows how to run.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Naive { method: NaiveMethod, seed: u64 },
    Ar { order: usize },
    Arima { order: ArimaOrder },
    ExpSmooth,
    GeoModel { period: usize },
    Var { scope: VarScope, order: usize },
    /// Influence-aware networks along one axis; `None` trains without
    /// influencer inputs.
    Coherent {
        axis: Option<Axis>,
        tensors: TensorSource,
        config: CoherentConfig,
    },
    /// Mixture of the style- and unit-influence banks.
    Combined {
        style: TensorSource,
        unit: TensorSource,
        config: CoherentConfig,
    },
}

impl ModelSpec {
    /// Baselines plus the learned variants, all with default settings.
    pub fn default_suite(seed: u64, granger: &GrangerConfig, config: &CoherentConfig) -> Vec<ModelSpec> {
        let mut v: Vec<ModelSpec> = NaiveMethod::ALL
            .iter()
            .map(|&method| ModelSpec::Naive { method, seed })
            .collect();
        let discover = TensorSource::Discover(granger.clone());
        let config = CoherentConfig { seed, ..config.clone() };
        v.extend([
            ModelSpec::Ar { order: 8 },
            ModelSpec::Arima { order: ArimaOrder::default() },
            ModelSpec::ExpSmooth,
            ModelSpec::GeoModel { period: 52 },
            ModelSpec::Var { scope: VarScope::AllUnitsPerStyle, order: 1 },
            ModelSpec::Var { scope: VarScope::AllStylesPerUnit, order: 1 },
            ModelSpec::Coherent { axis: None, tensors: discover.clone(), config: config.clone() },
            ModelSpec::Coherent { axis: Some(Axis::Unit), tensors: discover.clone(), config: config.clone() },
            ModelSpec::Coherent { axis: Some(Axis::Style), tensors: discover.clone(), config: config.clone() },
            ModelSpec::Combined { style: discover.clone(), unit: discover, config },
        ]);
        v
    }

    /// Looks a model up by its report name, with the suite's settings.
    /// `no-influence-no-coherence` is accepted too although the suite
    /// leaves it out.
    pub fn by_name(name: &str, seed: u64, granger: &GrangerConfig, config: &CoherentConfig) -> Result<ModelSpec> {
        if name == "no-influence-no-coherence" {
            return Ok(ModelSpec::Coherent {
                axis: None,
                tensors: TensorSource::Discover(granger.clone()),
                config: CoherentConfig { seed, lambda: 0.0, ..config.clone() },
            });
        }
        Self::default_suite(seed, granger, config)
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model `{name}`")))
    }

    pub fn into_forecaster(self) -> Box<dyn Forecaster> {
        Box::new(self)
    }
}

impl Forecaster for ModelSpec {
    fn name(&self) -> String {
        match self {
            ModelSpec::Naive { method, .. } => format!("naive-{}", method.name()),
            ModelSpec::Ar { .. } => "ar".into(),
            ModelSpec::Arima { .. } => "arima".into(),
            ModelSpec::ExpSmooth => "expsmooth".into(),
            ModelSpec::GeoModel { .. } => "geomodel".into(),
            ModelSpec::Var { scope: VarScope::AllUnitsPerStyle, .. } => "var-units".into(),
            ModelSpec::Var { scope: VarScope::AllStylesPerUnit, .. } => "var-styles".into(),
            ModelSpec::Coherent { axis: None, config, .. } if config.lambda == 0.0 => {
                "no-influence-no-coherence".into()
            }
            ModelSpec::Coherent { axis: None, .. } => "no-influence".into(),
            ModelSpec::Coherent { axis: Some(Axis::Unit), .. } => "unit-influence".into(),
            ModelSpec::Coherent { axis: Some(Axis::Style), .. } => "style-influence".into(),
            ModelSpec::Combined { .. } => "combined".into(),
        }
    }

    fn fit(&self, ts: &TrajectorySet) -> Result<Box<dyn Fitted>> {
        let origin = ts.pre_test_len();
        let history = |i: usize| &ts.series_at(i)[..origin];
        let n = ts.n_trajectories();
        Ok(match self {
            ModelSpec::Naive { method, seed } => Box::new(NaiveFit { method: *method, seed: *seed }),
            ModelSpec::Ar { order } => Box::new(PerTrajectory(
                (0..n).map(|i| fit_ar(history(i), *order, None).map(PerModel::Ar)).collect::<Result<_>>()?,
            )),
            ModelSpec::Arima { order } => Box::new(PerTrajectory(
                (0..n)
                    .map(|i| ArimaFit::fit(history(i), *order).map(PerModel::Arima))
                    .collect::<Result<_>>()?,
            )),
            ModelSpec::ExpSmooth => {
                let n_val = ts.require_split()?.val_len().max(1);
                Box::new(PerTrajectory(
                    (0..n)
                        .map(|i| ExpSmoothFit::fit(history(i), n_val).map(PerModel::ExpSmooth))
                        .collect::<Result<_>>()?,
                ))
            }
            ModelSpec::GeoModel { period } => Box::new(PerTrajectory(
                (0..n)
                    .map(|i| GeoModelFit::fit(history(i), *period).map(PerModel::Geo))
                    .collect::<Result<_>>()?,
            )),
            ModelSpec::Var { scope, order } => {
                let groups = var::var_groups(ts, *scope);
                let models = groups
                    .iter()
                    .map(|g| {
                        let h: Vec<&[f64]> = g.iter().map(|&i| history(i)).collect();
                        VarModel::fit(&h, *order)
                    })
                    .collect::<Result<_>>()?;
                Box::new(VarFit { groups, models })
            }
            ModelSpec::Coherent { axis, tensors, config } => {
                let tensor = axis.map(|a| tensors.resolve(ts, a)).transpose()?;
                Box::new(train_coherent(ts, tensor.as_ref(), config)?)
            }
            ModelSpec::Combined { style, unit, config } => {
                let ts_style = style.resolve(ts, Axis::Style)?;
                let ts_unit = unit.resolve(ts, Axis::Unit)?;
                let fs = train_coherent(ts, Some(&ts_style), config)?;
                let fu = train_coherent(ts, Some(&ts_unit), config)?;
                Box::new(select_alpha(fs, fu, ts)?)
            }
        })
    }
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    Ok(())
}

struct NaiveFit {
    method: NaiveMethod,
    seed: u64,
}

impl Fitted for NaiveFit {
    fn forecast(&self, ts: &TrajectorySet, horizon: usize) -> Result<Vec<Vec<f64>>> {
        let origin = ts.pre_test_len();
        (0..ts.n_trajectories())
            .map(|i| {
                let (s, u) = ts.coords(i);
                let seed = coherent::network_seed(self.seed, s, u, 0);
                forecast_naive(self.method, &ts.series_at(i)[..origin], horizon, seed)
            })
            .collect()
    }

    fn parameters(&self) -> Vec<f64> {
        Vec::new()
    }
}

enum PerModel {
    Ar(crate::influence::ArModel),
    Arima(ArimaFit),
    ExpSmooth(ExpSmoothFit),
    Geo(GeoModelFit),
}

struct PerTrajectory(Vec<PerModel>);

impl Fitted for PerTrajectory {
    fn forecast(&self, ts: &TrajectorySet, horizon: usize) -> Result<Vec<Vec<f64>>> {
        check_horizon(horizon)?;
        let origin = ts.pre_test_len();
        Ok(self
            .0
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let h = &ts.series_at(i)[..origin];
                match m {
                    PerModel::Ar(m) => baselines::ar_recursive(m, h, horizon),
                    PerModel::Arima(m) => m.forecast(h, horizon),
                    PerModel::ExpSmooth(m) => m.forecast(h, horizon),
                    PerModel::Geo(m) => m.forecast(h.len(), horizon),
                }
            })
            .collect())
    }

    fn parameters(&self) -> Vec<f64> {
        self.0
            .iter()
            .flat_map(|m| match m {
                PerModel::Ar(m) => m.parameters(),
                PerModel::Arima(m) => m.parameters(),
                PerModel::ExpSmooth(m) => vec![m.decay],
                PerModel::Geo(m) => m.parameters(),
            })
            .collect()
    }
}

struct VarFit {
    groups: Vec<Vec<usize>>,
    models: Vec<VarModel>,
}

impl Fitted for VarFit {
    fn forecast(&self, ts: &TrajectorySet, horizon: usize) -> Result<Vec<Vec<f64>>> {
        check_horizon(horizon)?;
        let origin = ts.pre_test_len();
        let mut out = vec![Vec::new(); ts.n_trajectories()];
        for (g, m) in self.groups.iter().zip(&self.models) {
            let h: Vec<&[f64]> = g.iter().map(|&i| &ts.series_at(i)[..origin]).collect();
            for (&i, f) in g.iter().zip(m.forecast(&h, horizon)) {
                out[i] = f;
            }
        }
        Ok(out)
    }

    fn parameters(&self) -> Vec<f64> {
        self.models.iter().flat_map(|m| m.parameters()).collect()
    }
}

impl Fitted for CoherentBank {
    fn forecast(&self, ts: &TrajectorySet, horizon: usize) -> Result<Vec<Vec<f64>>> {
        check_horizon(horizon)?;
        forecast_coherent(self, ts, horizon)
    }

    fn parameters(&self) -> Vec<f64> {
        CoherentBank::parameters(self)
    }
}

impl Fitted for CombinedForecaster {
    fn forecast(&self, ts: &TrajectorySet, horizon: usize) -> Result<Vec<Vec<f64>>> {
        check_horizon(horizon)?;
        CombinedForecaster::forecast(self, ts, horizon)
    }

    fn parameters(&self) -> Vec<f64> {
        CombinedForecaster::parameters(self)
    }
}

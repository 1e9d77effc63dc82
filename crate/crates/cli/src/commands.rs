use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use trendcause::analysis::{
    correlate_metadata, export_graph, influence_dynamics, rank_entities, rank_entities_weighted, spearman,
    CorrelationMode, Threshold, Weighting,
};
use trendcause::forecast::{evaluate, score_forecasts, ForecastReport, Forecaster, ModelSpec, TensorSource};
use trendcause::influence::{build_influence_tensor_detailed, unit_to_global};
use trendcause::ingest::{apply_split, build_trajectories, deseasonalize_set, Bucketing};
use trendcause::styles::{fit_gmm, fit_nmf, StyleModel};
use trendcause::synth::{generate, SynthConfig};
use trendcause::{io, AttributeVector, Axis, InfluenceTensor, TrajectorySet};

use crate::args::*;
use crate::run::{manifest_path, unix_now, Failure, RunConfig, RunManifest};

type Outcome<T = ()> = std::result::Result<T, Failure>;

pub struct Context {
    data_dir: Option<PathBuf>,
    config_path: Option<PathBuf>,
    pub cfg: RunConfig,
    pub seed: u64,
    seed_given: bool,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Context {
    pub fn new(global: &Global) -> Outcome<Self> {
        let data_dir = global.data_dir.clone();
        let resolve = |p: &Path| match &data_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        };
        let config_path = global.config.as_deref().map(resolve);
        let cfg: RunConfig = match &config_path {
            Some(p) => serde_json::from_str(&io::read_text(p)?)
                .map_err(|e| Failure::data(format!("{}: {e}", p.display())))?,
            None => RunConfig::default(),
        };
        let given = global.seed.or(cfg.seed);
        Ok(Self {
            data_dir,
            config_path,
            cfg,
            seed: given.unwrap_or(0),
            seed_given: given.is_some(),
            inputs: Vec::new(), outputs: Vec::new() })
    }

    fn path(&self, p: &Path) -> PathBuf {
        match &self.data_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn input(&mut self, p: &Path) -> PathBuf {
        let p = self.path(p);
        self.inputs.push(p.clone());
        p
    }

    fn write(&mut self, p: &Path, text: &str) -> Outcome {
        let p = self.path(p);
        io::write_text(&p, text)?;
        self.outputs.push(p);
        Ok(())
    }

    fn write_trajectories(&mut self, p: &Path, ts: &TrajectorySet) -> Outcome {
        let p = self.path(p);
        io::write_trajectories(&p, ts)?;
        self.outputs.push(p.clone());
        self.outputs.push(io::manifest_path(&p));
        Ok(())
    }

    fn read_trajectories(&mut self, p: &Path) -> Outcome<TrajectorySet> {
        let p = self.input(p);
        Ok(io::read_trajectories(&p)?)
    }

    pub fn finish(&self, command: &str, started: u64) -> Outcome {
        let Some(first) = self.outputs.first() else { return Ok(()) };
        let show = |v: &[PathBuf]| v.iter().map(|p| p.display().to_string()).collect();
        let m = RunManifest {
            command: command.to_string(),
            config: self.config_path.as_ref().map(|p| p.display().to_string()),
            inputs: show(&self.inputs),
            outputs: show(&self.outputs),
            seed: self.seed,
            started_unix: started,
            finished_unix: unix_now(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        io::write_text(manifest_path(first), &serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }

    fn split(&self, args: &SplitArgs, ts: TrajectorySet) -> Outcome<TrajectorySet> {
        if args.no_split {
            return Ok(ts);
        }
        let val = args.val.unwrap_or(self.cfg.val);
        let test = args.test.unwrap_or(self.cfg.test);
        Ok(apply_split(&ts, val, test, self.cfg.granger.max_lag)?)
    }

    fn tensor(&mut self, args: &TensorArgs) -> Outcome<InfluenceTensor> {
        let text = io::read_text(self.input(&args.tensor))?;
        let axis = axis(args.axis);
        Ok(match &args.input {
            Some(p) => {
                let ts = self.read_trajectories(p)?;
                io::tensor_for_set(&text, axis, &ts)?
            }
            None => io::tensor_from_edges_only(&text, axis)?,
        })
    }

    fn models(&mut self, list: &str, unit: Option<&Path>, style: Option<&Path>, ts: &TrajectorySet) -> Outcome<Vec<ModelSpec>> {
        let g = &self.cfg.granger;
        let c = &self.cfg.coherent;
        let mut specs = if list == "all" {
            ModelSpec::default_suite(self.seed, g, c)
        } else {
            list.split(',')
                .map(|n| ModelSpec::by_name(n.trim(), self.seed, g, c))
                .collect::<trendcause::Result<Vec<_>>>()?
        };
        let mut given = |p: Option<&Path>, ax: Axis| -> Outcome<Option<TensorSource>> {
            let Some(p) = p else { return Ok(None) };
            let text = io::read_text(self.input(p))?;
            Ok(Some(TensorSource::Given(io::tensor_for_set(&text, ax, ts)?)))
        };
        let unit = given(unit, Axis::Unit)?;
        let style = given(style, Axis::Style)?;
        for spec in &mut specs {
            match spec {
                ModelSpec::Coherent { axis: Some(Axis::Unit), tensors, .. } => {
                    if let Some(u) = &unit {
                        *tensors = u.clone();
                    }
                }
                ModelSpec::Coherent { axis: Some(Axis::Style), tensors, .. } => {
                    if let Some(s) = &style {
                        *tensors = s.clone();
                    }
                }
                ModelSpec::Combined { style: st, unit: un, .. } => {
                    if let Some(u) = &unit {
                        *un = u.clone();
                    }
                    if let Some(s) = &style {
                        *st = s.clone();
                    }
                }
                _ => {}
            }
        }
        Ok(specs)
    }

    fn horizon(&self, flag: Option<usize>, ts: &TrajectorySet) -> Outcome<usize> {
        let split = ts.require_split()?;
        Ok(flag.unwrap_or_else(|| self.cfg.horizon.min(split.test_len())))
    }
}

fn axis(a: AxisArg) -> Axis {
    match a {
        AxisArg::Unit => Axis::Unit,
        AxisArg::Style => Axis::Style,
    }
}

/// Forecast CSV `model,style,unit,step,value`, steps counted from 1.
fn forecasts_to_csv(ts: &TrajectorySet, all: &[(String, Vec<Vec<f64>>)]) -> String {
    let mut s = String::from("model,style,unit,step,value\n");
    for (name, fc) in all {
        for (i, series) in fc.iter().enumerate() {
            let (st, un) = ts.coords(i);
            for (h, v) in series.iter().enumerate() {
                let _ = writeln!(s, "{name},{},{},{},{v}", ts.styles()[st], ts.units()[un], h + 1);
            }
        }
    }
    s
}

fn parse_forecasts(text: &str, ts: &TrajectorySet, horizon: usize) -> Outcome<BTreeMap<String, Vec<Vec<f64>>>> {
    let mut lines = text.lines();
    if lines.next() != Some("model,style,unit,step,value") {
        return Err(Failure::data("forecast CSV header must be `model,style,unit,step,value`"));
    }
    let mut out: BTreeMap<String, Vec<Vec<Option<f64>>>> = BTreeMap::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let bad = || Failure::data(format!("forecast CSV row {}: malformed", n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        let i = ts.index(ts.style_index(f[1])?, ts.unit_index(f[2])?);
        let step: usize = f[3].parse().map_err(|_| bad())?;
        let v: f64 = f[4].parse().map_err(|_| bad())?;
        let grid = out.entry(f[0].to_string()).or_insert_with(|| vec![Vec::new(); ts.n_trajectories()]);
        if step == 0 {
            return Err(bad());
        }
        if grid[i].len() < step {
            grid[i].resize(step, None);
        }
        grid[i][step - 1] = Some(v);
    }
    out.into_iter()
        .map(|(name, grid)| {
            let rows = grid
                .into_iter()
                .map(|row| {
                    if row.len() < horizon {
                        return None;
                    }
                    row.into_iter().take(horizon).collect::<Option<Vec<f64>>>()
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Failure::data(format!("model `{name}` lacks forecasts for {horizon} steps everywhere")))?;
            Ok((name, rows))
        })
        .collect()
}

fn fit_and_forecast(specs: Vec<ModelSpec>, ts: &TrajectorySet, horizon: usize) -> Outcome<Vec<(String, Vec<Vec<f64>>)>> {
    specs
        .into_iter()
        .map(|spec| {
            let name = spec.name();
            log::info!("fitting {name}");
            let fc = spec.fit(ts)?.forecast(ts, horizon)?;
            Ok((name, fc))
        })
        .collect()
}

pub fn run(cmd: &Command, ctx: &mut Context) -> Outcome {
    match cmd {
        Command::Ingest { events, out } => {
            let mut ev = io::read_events(ctx.input(events))?;
            if let Some(m) = ev.first().map(|e| e.attrs.len()) {
                if let Some(bad) = ev.iter().find(|e| e.attrs.len() != m) {
                    return Err(Failure::data(format!(
                        "event of unit `{}` at t={} has {} attributes, expected {m}",
                        bad.unit,
                        bad.t,
                        bad.attrs.len()
                    )));
                }
            }
            ev.sort_by(|a, b| (a.t, &a.unit).cmp(&(b.t, &b.unit)));
            ctx.write(out, &io::events_to_jsonl(&ev)?)
        }
        Command::Styles { events, k, kind, out } => {
            let ev = io::read_events(ctx.input(events))?;
            let data: Vec<AttributeVector> = ev.into_iter().map(|e| e.attrs).collect();
            let model = match kind {
                StyleKind::Gmm => StyleModel::Gmm(fit_gmm(&data, *k, ctx.seed)?.model),
                StyleKind::Nmf => StyleModel::Nmf(fit_nmf(&data, *k, ctx.seed)?.model),
            };
            ctx.write(out, &model.to_json()?)
        }
        Command::Trajectories { events, model, bucket_width, epoch, split, out } => {
            let ev = io::read_events(ctx.input(events))?;
            let model = StyleModel::from_json(&io::read_text(ctx.input(model))?)?;
            let ts = build_trajectories(&ev, &model, None, Bucketing { epoch: *epoch, width: *bucket_width })?;
            let ts = ctx.split(split, ts)?;
            ctx.write_trajectories(out, &ts)
        }
        Command::Deseasonalize { input, period, out } => {
            let ts = ctx.read_trajectories(input)?;
            let d = deseasonalize_set(&ts, period.unwrap_or(ctx.cfg.period))?;
            ctx.write_trajectories(out, &d)
        }
        Command::Granger { input, axis: ax, alpha, out } => {
            let ts = ctx.read_trajectories(input)?;
            let mut g = ctx.cfg.granger.clone();
            if let Some(a) = alpha {
                g.alpha = *a;
            }
            let json = match ax {
                GrangerAxis::Global => {
                    let mut edges = Vec::new();
                    for style in ts.styles() {
                        edges.extend(unit_to_global(&ts, style, &g)?);
                    }
                    serde_json::to_string_pretty(&edges)?
                }
                GrangerAxis::Unit | GrangerAxis::Style => {
                    let a = if *ax == GrangerAxis::Unit { Axis::Unit } else { Axis::Style };
                    let build = build_influence_tensor_detailed(&ts, a, &g)?;
                    for f in &build.failures {
                        log::warn!("{f}");
                    }
                    io::tensor_to_json(&build.tensor)?
                }
            };
            ctx.write(out, &json)
        }
        Command::Forecast { input, models, horizon, unit_tensor, style_tensor, out } => {
            let ts = ctx.read_trajectories(input)?;
            let h = ctx.horizon(*horizon, &ts)?;
            let specs = ctx.models(models, unit_tensor.as_deref(), style_tensor.as_deref(), &ts)?;
            let all = fit_and_forecast(specs, &ts, h)?;
            ctx.write(out, &forecasts_to_csv(&ts, &all))
        }
        Command::Evaluate { input, forecasts, models, horizon, out, table } => {
            let ts = ctx.read_trajectories(input)?;
            let h = ctx.horizon(*horizon, &ts)?;
            let report = match (forecasts, models) {
                (Some(f), _) => {
                    let text = io::read_text(ctx.input(f))?;
                    let mut report = ForecastReport { horizon: h, models: BTreeMap::new() };
                    for (name, fc) in parse_forecasts(&text, &ts, h)? {
                        report.models.insert(name, score_forecasts(&ts, &fc, h)?);
                    }
                    report
                }
                (None, list) => {
                    let specs = ctx.models(list.as_deref().unwrap_or("all"), None, None, &ts)?;
                    let boxed: Vec<Box<dyn Forecaster>> = specs.into_iter().map(ModelSpec::into_forecaster).collect();
                    evaluate(&boxed, &ts, h)?
                }
            };
            ctx.write(out, &report.to_json()?)?;
            ctx.write(table, &report.to_csv())
        }
        Command::Rank { tensor, weighting, out } => {
            let t = ctx.tensor(tensor)?;
            let r = match weighting {
                WeightingArg::Lag => rank_entities(&t),
                WeightingArg::DeltaMse => rank_entities_weighted(&t, Weighting::DeltaMse),
            };
            ctx.write(out, &r.to_csv())
        }
        Command::Dynamics { input, axis: ax, window, stride, out } => {
            let ts = ctx.read_trajectories(input)?;
            let d = influence_dynamics(
                &ts,
                axis(*ax),
                window.unwrap_or(ctx.cfg.window),
                stride.unwrap_or(ctx.cfg.stride),
                &ctx.cfg.granger,
            )?;
            ctx.write(out, &d.to_csv())
        }
        Command::Correlate { tensor, metadata, mode, reference, out } => {
            let t = ctx.tensor(tensor)?;
            let ranking = rank_entities(&t);
            let (mode_name, rho, n) = match (reference, metadata) {
                (Some(r), _) => {
                    let text = io::read_text(ctx.input(r))?;
                    let ids: Vec<String> = text
                        .lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty() && *l != "id")
                        .map(String::from)
                        .collect();
                    ("reference", spearman(&ranking.ids(), &ids)?, ids.len())
                }
                (None, Some(m)) => {
                    let meta = io::parse_metadata(&io::read_text(ctx.input(m))?)?;
                    let mode = match mode {
                        ModeArg::WorldRank => CorrelationMode::WorldRank,
                        ModeArg::Direction => CorrelationMode::Direction,
                    };
                    let name = if mode == CorrelationMode::WorldRank { "world_rank" } else { "direction" };
                    (name, correlate_metadata(&ranking, &meta, mode, &t)?, ranking.rows.len())
                }
                (None, None) => return Err(Failure::usage("either --metadata or --reference is required")),
            };
            let json = serde_json::json!({ "mode": mode_name, "rho": rho, "n": n });
            ctx.write(out, &serde_json::to_string_pretty(&json)?)
        }
        Command::Synth { synth_config, split, out_dir } => {
            let mut cfg: SynthConfig = match synth_config {
                Some(p) => {
                    let p = ctx.input(p);
                    serde_json::from_str(&io::read_text(&p)?)
                        .map_err(|e| Failure::data(format!("{}: {e}", p.display())))?
                }
                None => SynthConfig::default(),
            };
            // An explicit seed beats the one in the synth config.
            if ctx.seed_given {
                cfg.seed = ctx.seed;
            }
            ctx.seed = cfg.seed;
            let out = generate(&cfg)?;
            let ts = ctx.split(split, out.set)?;
            ctx.write_trajectories(&out_dir.join("trajectories.csv"), &ts)?;
            ctx.write(&out_dir.join("truth-unit.json"), &io::tensor_to_json(&out.unit_truth)?)?;
            ctx.write(&out_dir.join("truth-style.json"), &io::tensor_to_json(&out.style_truth)?)
        }
        Command::ExportGraph { tensor, threshold, out } => {
            let t = ctx.tensor(tensor)?;
            let th = match threshold {
                ThresholdArg::AboveMean => Threshold::AboveMean,
                ThresholdArg::Raw => Threshold::Raw,
            };
            ctx.write(out, &export_graph(&t, th))
        }
    }
}

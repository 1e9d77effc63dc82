//! File formats: events, trajectory sets, tensors and metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AttributeVector, Axis, EventRecord, InfluenceEdge, InfluenceTensor, Split, TimeIndex, TrajectorySet};

pub const MANIFEST_FORMAT: &str = "trendcause-trajectories/1";

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))
}

/// Writes `text`, creating parent directories as needed.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}

/// Events as JSON lines `{"unit", "t", "attrs"}`; blank lines are skipped.
pub fn parse_events_jsonl(text: &str) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: EventRecord =
            serde_json::from_str(line).map_err(|err| Error::Parse(format!("line {}: {err}", i + 1)))?;
        out.push(EventRecord { attrs: AttributeVector::new(e.attrs.0)?, ..e });
    }
    Ok(out)
}

/// Events as CSV `unit,t,a0,...,a{M-1}` with a header row.
pub fn parse_events_csv(text: &str) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "unit" || &headers[1] != "t" {
        return Err(Error::Parse("event CSV header must be `unit,t,a0,...`".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Parse(format!("row {}: bad {what}", i + 2));
        let t = rec[1].trim().parse::<i64>().map_err(|_| bad("time stamp"))?;
        let attrs = rec
            .iter()
            .skip(2)
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad("attribute")))
            .collect::<Result<Vec<_>>>()?;
        out.push(EventRecord { unit: rec[0].to_string(), t, attrs: AttributeVector::new(attrs)? });
    }
    Ok(out)
}

/// Picks the event parser from the file extension (`.csv` or JSON lines).
pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<EventRecord>> {
    let text = read_text(&path)?;
    let is_csv = path.as_ref().extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_events_csv(&text)
    } else {
        parse_events_jsonl(&text)
    }
}

pub fn events_to_jsonl(events: &[EventRecord]) -> Result<String> {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e)?);
        s.push('\n');
    }
    Ok(s)
}

/// Side file describing a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryManifest {
    pub format: String,
    pub resolution: String,
    pub start: TimeIndex,
    pub len: usize,
    pub styles: Vec<String>,
    pub units: Vec<String>,
    pub split: Option<Split>,
}

impl TrajectoryManifest {
    pub fn of(ts: &TrajectorySet) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            resolution: ts.resolution().into(),
            start: ts.start(),
            len: ts.len(),
            styles: ts.styles().to_vec(),
            units: ts.units().to_vec(),
            split: ts.split(),
        }
    }
}

/// `style,unit,t,value` rows, style-major, `t` on the absolute bucket axis.
pub fn trajectories_to_csv(ts: &TrajectorySet) -> String {
    let mut s = String::from("style,unit,t,value\n");
    for (si, style) in ts.styles().iter().enumerate() {
        for (ui, unit) in ts.units().iter().enumerate() {
            for (k, v) in ts.series(si, ui).iter().enumerate() {
                let _ = writeln!(s, "{style},{unit},{},{v}", ts.start() + k as TimeIndex);
            }
        }
    }
    s
}

/// Parses a trajectory CSV. With a manifest, the style/unit tables, time
/// range and split come from it and the CSV must match exactly; without one,
/// styles and units keep their order of first appearance.
pub fn parse_trajectories(csv_text: &str, manifest: Option<&TrajectoryManifest>) -> Result<TrajectorySet> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let h = rdr.headers()?.clone();
    if h.iter().collect::<Vec<_>>() != ["style", "unit", "t", "value"] {
        return Err(Error::Parse("trajectory CSV header must be `style,unit,t,value`".into()));
    }
    let mut styles: Vec<String> = Vec::new();
    let mut units: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, usize, TimeIndex), f64> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Parse(format!("row {}: bad {what}", i + 2));
        let idx = |table: &mut Vec<String>, id: &str| match table.iter().position(|x| x == id) {
            Some(p) => p,
            None => {
                table.push(id.to_string());
                table.len() - 1
            }
        };
        let s = idx(&mut styles, &rec[0]);
        let u = idx(&mut units, &rec[1]);
        let t = rec[2].trim().parse::<TimeIndex>().map_err(|_| bad("time index"))?;
        let v = rec[3].trim().parse::<f64>().map_err(|_| bad("value"))?;
        if cells.insert((s, u, t), v).is_some() {
            return Err(Error::Parse(format!("row {}: duplicate ({}, {}, {t})", i + 2, &rec[0], &rec[1])));
        }
    }
    if cells.is_empty() {
        return Err(Error::Empty("trajectory CSV"));
    }
    let (start, len) = match manifest {
        Some(m) => {
            if m.format != MANIFEST_FORMAT {
                return Err(Error::Parse(format!("unsupported manifest format `{}`", m.format)));
            }
            let same = |a: &[String], b: &[String]| {
                a.len() == b.len() && a.iter().all(|x| b.contains(x))
            };
            if !same(&styles, &m.styles) || !same(&units, &m.units) {
                return Err(Error::IdMismatch("trajectory CSV does not match its manifest".into()));
            }
            (m.start, m.len)
        }
        None => {
            let lo = cells.keys().map(|k| k.2).min().unwrap_or(0);
            let hi = cells.keys().map(|k| k.2).max().unwrap_or(0);
            (lo, (hi - lo + 1) as usize)
        }
    };
    let (styles_out, units_out) = match manifest {
        Some(m) => (m.styles.clone(), m.units.clone()),
        None => (styles.clone(), units.clone()),
    };
    let mut values = Vec::with_capacity(styles_out.len() * units_out.len());
    for style in &styles_out {
        let s = styles.iter().position(|x| x == style).expect("checked above");
        for unit in &units_out {
            let u = units.iter().position(|x| x == unit).expect("checked above");
            let series = (0..len as TimeIndex)
                .map(|k| {
                    cells.get(&(s, u, start + k)).copied().ok_or_else(|| {
                        Error::Parse(format!("missing value for ({style}, {unit}) at t={}", start + k))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            values.push(series);
        }
    }
    if cells.len() != values.len() * len {
        return Err(Error::Parse("trajectory CSV has values outside the manifest's time range".into()));
    }
    let mut ts = TrajectorySet::new(styles_out, units_out, start, values)?;
    if let Some(m) = manifest {
        ts = ts.with_resolution(m.resolution.clone());
        if let Some(split) = m.split {
            if split.len != len || split.train_end > split.val_end || split.val_end > split.len {
                return Err(Error::Parse("manifest split does not fit the trajectories".into()));
            }
        }
        ts.set_split(m.split);
    }
    Ok(ts)
}

/// Manifest path next to a trajectory CSV: `x.csv` -> `x.manifest.json`.
pub fn manifest_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("manifest.json")
}

pub fn write_trajectories(path: impl AsRef<Path>, ts: &TrajectorySet) -> Result<()> {
    let path = path.as_ref();
    write_text(path, &trajectories_to_csv(ts))?;
    write_text(manifest_path(path), &serde_json::to_string_pretty(&TrajectoryManifest::of(ts))?)
}

/// Reads a trajectory CSV plus its manifest when one sits beside it.
pub fn read_trajectories(path: impl AsRef<Path>) -> Result<TrajectorySet> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mpath = manifest_path(path);
    let manifest = if mpath.exists() {
        let m: TrajectoryManifest = serde_json::from_str(&read_text(&mpath)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", mpath.display())))?;
        Some(m)
    } else {
        None
    };
    parse_trajectories(&text, manifest.as_ref())
}

pub fn tensor_to_json(t: &InfluenceTensor) -> Result<String> {
    Ok(serde_json::to_string_pretty(t.edges())?)
}

/// Rebuilds a tensor from its edge array on the given entity/context
/// tables. Edges naming anything outside the tables are rejected.
pub fn tensor_from_json(text: &str, axis: Axis, entities: Vec<String>, contexts: Vec<String>) -> Result<InfluenceTensor> {
    let edges: Vec<InfluenceEdge> = serde_json::from_str(text)?;
    InfluenceTensor::from_edges(axis, entities, contexts, edges)
}

/// Like [`tensor_from_json`] with tables taken from a trajectory set.
pub fn tensor_for_set(text: &str, axis: Axis, ts: &TrajectorySet) -> Result<InfluenceTensor> {
    let empty = InfluenceTensor::empty_for(ts, axis);
    tensor_from_json(text, axis, empty.entities().to_vec(), empty.contexts().to_vec())
}

/// Without a trajectory set, the tables are the sorted ids seen in edges.
pub fn tensor_from_edges_only(text: &str, axis: Axis) -> Result<InfluenceTensor> {
    let edges: Vec<InfluenceEdge> = serde_json::from_str(text)?;
    let mut ids: Vec<String> = edges.iter().flat_map(|e| [e.src.clone(), e.dst.clone()]).collect();
    ids.sort();
    ids.dedup();
    let mut ctx: Vec<String> = edges.iter().map(|e| e.context.clone()).collect();
    ctx.sort();
    ctx.dedup();
    InfluenceTensor::from_edges(axis, ids, ctx, edges)
}

/// Metadata CSV `id,value`.
pub fn parse_metadata(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let h = rdr.headers()?.clone();
    if h.iter().collect::<Vec<_>>() != ["id", "value"] {
        return Err(Error::Parse("metadata CSV header must be `id,value`".into()));
    }
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v = rec[1]
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("row {}: bad value", i + 2)))?;
        if !v.is_finite() {
            return Err(Error::NonFinite("metadata"));
        }
        if out.insert(rec[0].to_string(), v).is_some() {
            return Err(Error::Parse(format!("row {}: duplicate id `{}`", i + 2, &rec[0])));
        }
    }
    Ok(out)
}

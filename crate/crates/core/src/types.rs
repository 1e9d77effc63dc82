//! Shared domain types: events, trajectories, splits and influence tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of one temporal bucket (one week by default).
pub type TimeIndex = u64;

/// Per-event attribute probabilities, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeVector(pub Vec<f64>);

impl AttributeVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("attribute vector"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(
                "attribute probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// One observation: a photo or transaction attributed to a unit at a time.
///
/// `t` is the raw time stamp as read from the input; it is mapped onto a
/// [`TimeIndex`] bucket by [`crate::ingest::Bucketing`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub unit: String,
    pub t: i64,
    pub attrs: AttributeVector,
}

/// Which entity plays the role of influencer/influenced in a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Units influence units; contexts are styles.
    Unit,
    /// Styles influence styles; contexts are units.
    Style,
}

impl Axis {
    pub fn swapped(self) -> Axis {
        match self {
            Axis::Unit => Axis::Style,
            Axis::Style => Axis::Unit,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(Axis::Unit),
            "style" => Ok(Axis::Style),
            other => Err(Error::InvalidArgument(format!("unknown axis `{other}`"))),
        }
    }
}

/// Train / validation / test boundaries, as counts of points from the start.
///
/// Training covers `0..train_end`, validation `train_end..val_end` and the
/// test window `val_end..len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_end: usize,
    pub val_end: usize,
    pub len: usize,
}

impl Split {
    /// Reserves the last `test` points for testing and the `val` before them
    /// for validation. At least `min_train` training points must remain.
    pub fn new(len: usize, val: usize, test: usize, min_train: usize) -> Result<Self> {
        let needed = val + test + min_train.max(1);
        if len < needed {
            return Err(Error::TooShort { needed, have: len });
        }
        Ok(Self {
            train_end: len - val - test,
            val_end: len - test,
            len,
        })
    }

    pub fn val_len(&self) -> usize {
        self.val_end - self.train_end
    }

    pub fn test_len(&self) -> usize {
        self.len - self.val_end
    }
}

/// Popularity sequence of one (style, unit) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub style: String,
    pub unit: String,
    pub start: TimeIndex,
    pub values: Vec<f64>,
    pub split: Option<Split>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Every (style, unit) trajectory of a dataset on a shared time axis.
///
/// Values are stored style-major: trajectory `(s, u)` sits at
/// `s * n_units + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    styles: Vec<String>,
    units: Vec<String>,
    start: TimeIndex,
    resolution: String,
    split: Option<Split>,
    values: Vec<Vec<f64>>,
}

impl TrajectorySet {
    pub fn new(
        styles: Vec<String>,
        units: Vec<String>,
        start: TimeIndex,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if styles.is_empty() || units.is_empty() {
            return Err(Error::Empty("trajectory set"));
        }
        if values.len() != styles.len() * units.len() {
            return Err(Error::Dimension {
                expected: styles.len() * units.len(),
                got: values.len(),
            });
        }
        let len = values[0].len();
        if len == 0 {
            return Err(Error::Empty("trajectory"));
        }
        for v in &values {
            if v.len() != len {
                return Err(Error::LengthMismatch {
                    left: len,
                    right: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("trajectory"));
            }
        }
        Ok(Self {
            styles,
            units,
            start,
            resolution: "week".to_string(),
            split: None,
            values,
        })
    }

    pub fn with_resolution(mut self, resolution: impl Into<String>) -> Self {
        self.resolution = resolution.into();
        self
    }

    pub fn styles(&self) -> &[String] {
        &self.styles
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn n_styles(&self) -> usize {
        self.styles.len()
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_trajectories(&self) -> usize {
        self.values.len()
    }

    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> TimeIndex {
        self.start
    }

    pub fn resolution(&self) -> &str {
        &self.resolution
    }

    pub fn split(&self) -> Option<Split> {
        self.split
    }

    /// The split, or an error naming the operation that needs one.
    pub fn require_split(&self) -> Result<Split> {
        self.split
            .ok_or_else(|| Error::InvalidArgument("trajectory set has no split applied".into()))
    }

    /// Number of leading points that may be used for fitting: everything
    /// before the test window, or the whole series when no split is set.
    pub fn pre_test_len(&self) -> usize {
        self.split.map_or(self.len(), |s| s.val_end)
    }

    pub fn index(&self, style: usize, unit: usize) -> usize {
        style * self.units.len() + unit
    }

    /// `(style, unit)` of a flat trajectory index.
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.units.len(), idx % self.units.len())
    }

    pub fn series(&self, style: usize, unit: usize) -> &[f64] {
        &self.values[self.index(style, unit)]
    }

    pub fn series_at(&self, idx: usize) -> &[f64] {
        &self.values[idx]
    }

    pub fn all_series(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Mutable access to one series; lengths cannot change.
    pub fn series_mut(&mut self, style: usize, unit: usize) -> &mut [f64] {
        let idx = self.index(style, unit);
        &mut self.values[idx]
    }

    pub fn style_index(&self, style: &str) -> Result<usize> {
        self.styles
            .iter()
            .position(|s| s == style)
            .ok_or_else(|| Error::UnknownStyle(style.to_string()))
    }

    pub fn unit_index(&self, unit: &str) -> Result<usize> {
        self.units
            .iter()
            .position(|u| u == unit)
            .ok_or_else(|| Error::UnknownUnit(unit.to_string()))
    }

    pub fn trajectory(&self, style: usize, unit: usize) -> Trajectory {
        Trajectory {
            style: self.styles[style].clone(),
            unit: self.units[unit].clone(),
            start: self.start,
            values: self.series(style, unit).to_vec(),
            split: self.split,
        }
    }

    pub fn trajectories(&self) -> impl Iterator<Item = Trajectory> + '_ {
        (0..self.n_trajectories()).map(|i| {
            let (s, u) = self.coords(i);
            self.trajectory(s, u)
        })
    }

    pub(crate) fn set_split(&mut self, split: Option<Split>) {
        self.split = split;
    }

    /// Same data with the roles of styles and units exchanged.
    pub fn transposed(&self) -> TrajectorySet {
        let mut values = Vec::with_capacity(self.values.len());
        for u in 0..self.n_units() {
            for s in 0..self.n_styles() {
                values.push(self.series(s, u).to_vec());
            }
        }
        TrajectorySet {
            styles: self.units.clone(),
            units: self.styles.clone(),
            start: self.start,
            resolution: self.resolution.clone(),
            split: self.split,
            values,
        }
    }

    /// Restricts every series to `range` (indices into the current series).
    /// The split is dropped.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<TrajectorySet> {
        if range.end > self.len() || range.start >= range.end {
            return Err(Error::InvalidArgument(format!(
                "slice {}..{} outside series of length {}",
                range.start,
                range.end,
                self.len()
            )));
        }
        Ok(TrajectorySet {
            styles: self.styles.clone(),
            units: self.units.clone(),
            start: self.start + range.start as TimeIndex,
            resolution: self.resolution.clone(),
            split: None,
            values: self.values.iter().map(|v| v[range.clone()].to_vec()).collect(),
        })
    }

    pub(crate) fn from_parts(
        styles: Vec<String>,
        units: Vec<String>,
        start: TimeIndex,
        resolution: String,
        split: Option<Split>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut ts = Self::new(styles, units, start, values)?.with_resolution(resolution);
        if let Some(s) = split {
            if s.len != ts.len() || s.train_end > s.val_end || s.val_end > s.len {
                return Err(Error::Parse("split boundaries do not match series".into()));
            }
        }
        ts.split = split;
        Ok(ts)
    }
}

/// One discovered influence relation.
///
/// `p_value` is the multiplicity-adjusted p-value the decision was taken on,
/// so it is always below the significance level of the run that found it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceEdge {
    pub src: String,
    pub dst: String,
    pub context: String,
    pub lag: u8,
    #[serde(rename = "p")]
    pub p_value: f64,
    pub delta_mse: f64,
}

/// Lag-valued influence tensor `B[src, dst, context]`; zero means none.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceTensor {
    axis: Axis,
    entities: Vec<String>,
    contexts: Vec<String>,
    lags: Vec<u8>,
    edges: Vec<InfluenceEdge>,
}

impl InfluenceTensor {
    pub const MAX_LAG: u8 = 8;

    pub fn empty(axis: Axis, entities: Vec<String>, contexts: Vec<String>) -> Self {
        let n = entities.len();
        let c = contexts.len();
        Self {
            axis,
            entities,
            contexts,
            lags: vec![0; n * n * c],
            edges: Vec::new(),
        }
    }

    /// Empty tensor of the given axis over the entities/contexts of `ts`.
    pub fn empty_for(ts: &TrajectorySet, axis: Axis) -> Self {
        match axis {
            Axis::Unit => Self::empty(axis, ts.units().to_vec(), ts.styles().to_vec()),
            Axis::Style => Self::empty(axis, ts.styles().to_vec(), ts.units().to_vec()),
        }
    }

    pub fn from_edges(
        axis: Axis,
        entities: Vec<String>,
        contexts: Vec<String>,
        edges: impl IntoIterator<Item = InfluenceEdge>,
    ) -> Result<Self> {
        let mut t = Self::empty(axis, entities, contexts);
        for e in edges {
            t.insert(e)?;
        }
        Ok(t)
    }

    fn slot(&self, src: usize, dst: usize, ctx: usize) -> usize {
        let n = self.entities.len();
        (ctx * n + src) * n + dst
    }

    /// Adds (or replaces) an edge. Self-loops and out-of-range lags are rejected.
    pub fn insert(&mut self, edge: InfluenceEdge) -> Result<()> {
        let src = self.entity_index(&edge.src)?;
        let dst = self.entity_index(&edge.dst)?;
        let ctx = self
            .contexts
            .iter()
            .position(|c| *c == edge.context)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown context `{}`", edge.context)))?;
        if src == dst {
            return Err(Error::InvalidArgument(format!(
                "self influence on `{}` is not allowed",
                edge.src
            )));
        }
        if edge.lag == 0 || edge.lag > Self::MAX_LAG {
            return Err(Error::InvalidArgument(format!("lag {} outside 1..=8", edge.lag)));
        }
        let slot = self.slot(src, dst, ctx);
        self.lags[slot] = edge.lag;
        let key = (ctx, src, dst);
        let pos = self.edges.binary_search_by(|e| self.edge_key(e).cmp(&key));
        match pos {
            Ok(i) => self.edges[i] = edge,
            Err(i) => self.edges.insert(i, edge),
        }
        Ok(())
    }

    fn edge_key(&self, e: &InfluenceEdge) -> (usize, usize, usize) {
        let pos = |v: &[String], s: &str| v.iter().position(|x| x == s).unwrap_or(usize::MAX);
        (
            pos(&self.contexts, &e.context),
            pos(&self.entities, &e.src),
            pos(&self.entities, &e.dst),
        )
    }

    pub fn entity_index(&self, id: &str) -> Result<usize> {
        self.entities
            .iter()
            .position(|e| e == id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown entity `{id}`")))
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn contexts(&self) -> &[String] {
        &self.contexts
    }

    /// Discovered lag, 0 when there is no influence.
    pub fn lag(&self, src: usize, dst: usize, ctx: usize) -> u8 {
        self.lags[self.slot(src, dst, ctx)]
    }

    /// Edges ordered by (context, src, dst) table position.
    pub fn edges(&self) -> &[InfluenceEdge] {
        &self.edges
    }

    pub fn nonzero(&self) -> usize {
        self.edges.len()
    }

    pub fn same_axes(&self, other: &InfluenceTensor) -> bool {
        self.axis == other.axis && self.entities == other.entities && self.contexts == other.contexts
    }
}

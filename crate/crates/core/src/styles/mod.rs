//! Style discovery over attribute vectors and per-event style posteriors.

mod gmm;
mod nmf;

use serde::{Deserialize, Serialize};

pub use gmm::{fit_gmm, GmmFit, GmmModel, VARIANCE_FLOOR};
pub use nmf::{fit_nmf, NmfFit, NmfModel};

use crate::error::{Error, Result};
use crate::types::AttributeVector;

/// Format tag written into serialized style models.
pub const MODEL_FORMAT: &str = "trendcause-style-model/1";

/// EM / multiplicative-update stopping rules shared by both model kinds.
pub const MAX_ITERATIONS: usize = 500;
pub const TOLERANCE: f64 = 1e-6;

/// A fitted style model: `K` styles over `M` attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StyleModel {
    Gmm(GmmModel),
    Nmf(NmfModel),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    k: usize,
    m: usize,
    #[serde(flatten)]
    model: StyleModel,
}

impl StyleModel {
    pub fn n_styles(&self) -> usize {
        match self {
            StyleModel::Gmm(g) => g.n_components(),
            StyleModel::Nmf(n) => n.n_factors(),
        }
    }

    pub fn n_attributes(&self) -> usize {
        match self {
            StyleModel::Gmm(g) => g.n_attributes(),
            StyleModel::Nmf(n) => n.n_attributes(),
        }
    }

    /// Probability of each style given one attribute vector.
    pub fn posterior(&self, attrs: &[f64]) -> Result<Vec<f64>> {
        if attrs.len() != self.n_attributes() {
            return Err(Error::Dimension {
                expected: self.n_attributes(),
                got: attrs.len(),
            });
        }
        match self {
            StyleModel::Gmm(g) => Ok(g.posterior(attrs)),
            StyleModel::Nmf(n) => Ok(n.posterior(attrs)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            k: self.n_styles(),
            m: self.n_attributes(),
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Parse(format!(
                "unsupported style model format `{}`",
                file.format
            )));
        }
        let model = file.model;
        model.validate()?;
        if model.n_styles() != file.k || model.n_attributes() != file.m {
            return Err(Error::Parse("style model header does not match parameters".into()));
        }
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        match self {
            StyleModel::Gmm(g) => g.validate(),
            StyleModel::Nmf(n) => n.validate(),
        }
    }
}

pub(crate) fn as_rows(data: &[AttributeVector]) -> Result<(usize, Vec<&[f64]>)> {
    let first = data.first().ok_or(Error::Empty("attribute data"))?;
    let m = first.len();
    if m == 0 {
        return Err(Error::Empty("attribute vector"));
    }
    let mut rows = Vec::with_capacity(data.len());
    for a in data {
        if a.len() != m {
            return Err(Error::Dimension {
                expected: m,
                got: a.len(),
            });
        }
        rows.push(a.as_slice());
    }
    Ok((m, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_format_tag() {
        let g = GmmModel::from_parameters(
            vec![0.25, 0.75],
            vec![vec![0.1, 0.2], vec![0.8, 0.9]],
            vec![vec![0.01, 0.02], vec![0.03, 0.04]],
        )
        .unwrap();
        let model = StyleModel::Gmm(g);
        let text = model.to_json().unwrap();
        assert!(text.contains(MODEL_FORMAT));
        assert!(text.contains("\"kind\": \"gmm\""));
        assert_eq!(StyleModel::from_json(&text).unwrap(), model);
        let bad = text.replace(MODEL_FORMAT, "other/9");
        assert!(StyleModel::from_json(&bad).is_err());
    }

    #[test]
    fn posterior_dimension_checked() {
        let g = GmmModel::from_parameters(vec![1.0], vec![vec![0.5]], vec![vec![0.1]]).unwrap();
        assert!(matches!(
            StyleModel::Gmm(g).posterior(&[0.1, 0.2]),
            Err(Error::Dimension { .. })
        ));
    }
}

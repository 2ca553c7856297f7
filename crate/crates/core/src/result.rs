//! Registration output and its JSON document form.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::geometry::RigidTransform;
use crate::hough::BinKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hough,
    Ransac,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Hough => "hough",
            Method::Ransac => "ransac",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hough" => Ok(Method::Hough),
            "ransac" => Ok(Method::Ransac),
            other => Err(format!("unknown method `{other}` (expected hough or ransac)")),
        }
    }
}

/// Wall-clock seconds per pipeline stage, in execution order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timings(pub Vec<(String, f64)>);

impl Timings {
    pub fn push(&mut self, stage: &str, d: Duration) {
        self.0.push((stage.to_string(), d.as_secs_f64()));
    }

    pub fn total(&self) -> f64 {
        self.0.iter().map(|(_, s)| s).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub method: Method,
    pub transform: RigidTransform,
    /// Hough only.
    pub winning_bin: Option<BinKey>,
    /// Vote mass of the winning bin (Hough) or inlier count (RANSAC).
    pub winning_mass: f64,
    pub n_correspondences: usize,
    pub n_triplets_sampled: usize,
    pub n_triplets_accepted: usize,
    /// Triplets that passed filtering but whose pose solve failed.
    pub n_votes_dropped: usize,
    pub timings: Timings,
    pub config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultDoc {
    method: Method,
    transform: Vec<f64>,
    winning_bin: Option<[i32; 6]>,
    winning_mass: f64,
    n_correspondences: usize,
    n_triplets_sampled: usize,
    n_triplets_accepted: usize,
    n_votes_dropped: usize,
    timings: Option<serde_json::Map<String, serde_json::Value>>,
    config: serde_json::Value,
}

impl RegistrationResult {
    /// Pretty JSON. Timings are written as `null` unless requested, so that
    /// identical runs serialize to identical bytes.
    pub fn to_json(&self, include_timings: bool) -> String {
        let timings = include_timings.then(|| {
            self.timings
                .0
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::from(*v)))
                .collect()
        });
        let doc = ResultDoc {
            method: self.method,
            transform: self.transform.to_row_major().to_vec(),
            winning_bin: self.winning_bin.map(|b| b.0),
            winning_mass: self.winning_mass,
            n_correspondences: self.n_correspondences,
            n_triplets_sampled: self.n_triplets_sampled,
            n_triplets_accepted: self.n_triplets_accepted,
            n_votes_dropped: self.n_votes_dropped,
            timings,
            config: self.config.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("result serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let doc: ResultDoc = serde_json::from_str(s)?;
        let m: [f64; 16] = doc
            .transform
            .as_slice()
            .try_into()
            .map_err(|_| serde::de::Error::invalid_length(doc.transform.len(), &"16 numbers"))?;
        let timings = doc
            .timings
            .unwrap_or_default()
            .into_iter()
            .map(|(k, v)| (k, v.as_f64().unwrap_or(0.0)))
            .collect();
        Ok(Self {
            method: doc.method,
            transform: RigidTransform::from_row_major(&m),
            winning_bin: doc.winning_bin.map(BinKey),
            winning_mass: doc.winning_mass,
            n_correspondences: doc.n_correspondences,
            n_triplets_sampled: doc.n_triplets_sampled,
            n_triplets_accepted: doc.n_triplets_accepted,
            n_votes_dropped: doc.n_votes_dropped,
            timings: Timings(timings),
            config: doc.config,
        })
    }
}

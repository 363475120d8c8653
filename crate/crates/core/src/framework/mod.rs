//! Runs the registered binary classifiers side by side on each topoplot and
//! merges their votes.

mod metrics;
mod pipeline;

pub use metrics::{evaluate, CategoryMetrics, Confusion, Metrics};
pub use pipeline::{
    bench, run_pipeline, write_detection_stream, BenchReport, ComponentDetection, PipelineConfig,
    PipelineOutput, Stage, SubTrialOutcome, SubTrialResult, TimingReport,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{RasterConvention, TrainedModel};
use crate::synthgen::UBS;
use crate::topomap::RgbImage;

/// Name of an artifact class handled by one classifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ArtifactCategory(String);

impl ArtifactCategory {
    pub fn new(name: &str) -> Result<Self> {
        let ok = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !ok {
            return Err(Error::Registry(format!("invalid category name `{name}`")));
        }
        if name.eq_ignore_ascii_case(UBS) {
            return Err(Error::Registry("UBS is the absence of a category".into()));
        }
        Ok(Self(name.to_string()))
    }

    /// B_V, H_E and E_I.
    pub fn standard() -> [ArtifactCategory; 3] {
        ["B_V", "H_E", "E_I"].map(|n| Self(n.to_string()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ArtifactCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ArtifactCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(s)
    }
}

impl TryFrom<String> for ArtifactCategory {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::new(&s)
    }
}

impl From<ArtifactCategory> for String {
    fn from(c: ArtifactCategory) -> String {
        c.0
    }
}

/// One classifier's vote on one topoplot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDecision {
    pub category: ArtifactCategory,
    /// Probability of the artifact class.
    pub score: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Ubs,
    Artifacts(Vec<ArtifactCategory>),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Ubs => f.write_str(UBS),
            Verdict::Artifacts(cats) => {
                let names: Vec<&str> = cats.iter().map(|c| c.name()).collect();
                f.write_str(&names.join("+"))
            }
        }
    }
}

/// Merged votes of every registered classifier on one topoplot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Sorted by category name.
    pub decisions: Vec<CategoryDecision>,
    pub verdict: Verdict,
    /// Every pair of categories that fired together.
    pub double_detections: Vec<(ArtifactCategory, ArtifactCategory)>,
}

impl Detection {
    /// Derives the verdict and double detections from the votes.
    pub fn from_decisions(mut decisions: Vec<CategoryDecision>) -> Self {
        decisions.sort_by(|a, b| a.category.cmp(&b.category));
        let positives: Vec<ArtifactCategory> = decisions
            .iter()
            .filter(|d| d.positive)
            .map(|d| d.category.clone())
            .collect();
        let mut double_detections = Vec::new();
        for (i, a) in positives.iter().enumerate() {
            for b in &positives[i + 1..] {
                double_detections.push((a.clone(), b.clone()));
            }
        }
        let verdict = if positives.is_empty() {
            Verdict::Ubs
        } else {
            Verdict::Artifacts(positives)
        };
        Self {
            decisions,
            verdict,
            double_detections,
        }
    }

    pub fn is_ubs(&self) -> bool {
        self.verdict == Verdict::Ubs
    }

    pub fn is_double(&self) -> bool {
        !self.double_detections.is_empty()
    }

    pub fn decision(&self, category: &str) -> Option<&CategoryDecision> {
        self.decisions.iter().find(|d| d.category.name() == category)
    }

    /// Whether `category` is among the positive votes.
    pub fn flags(&self, category: &str) -> bool {
        self.decision(category).is_some_and(|d| d.positive)
    }

    pub fn positives(&self) -> impl Iterator<Item = &ArtifactCategory> {
        self.decisions.iter().filter(|d| d.positive).map(|d| &d.category)
    }
}

#[derive(Debug, Clone)]
struct Entry {
    model: Arc<TrainedModel>,
    threshold: f64,
}

/// Registered classifiers keyed by category. Models are shared read-only;
/// registering a category never touches the others.
#[derive(Debug, Clone)]
pub struct Registry {
    raster: RasterConvention,
    entries: BTreeMap<ArtifactCategory, Entry>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::new(RasterConvention::default())
    }
}

impl Registry {
    /// Empty registry accepting models trained on `raster`.
    pub fn new(raster: RasterConvention) -> Self {
        Self {
            raster,
            entries: BTreeMap::new(),
        }
    }

    /// Registers with the argmax threshold 0.5.
    pub fn register(&mut self, model: impl Into<Arc<TrainedModel>>, category: ArtifactCategory) -> Result<()> {
        self.register_with_threshold(model, category, 0.5)
    }

    pub fn register_with_threshold(
        &mut self,
        model: impl Into<Arc<TrainedModel>>,
        category: ArtifactCategory,
        threshold: f64,
    ) -> Result<()> {
        let model = model.into();
        if self.entries.contains_key(&category) {
            return Err(Error::Registry(format!("category `{category}` is already registered")));
        }
        if model.metadata.raster != self.raster {
            return Err(Error::Compatibility(format!(
                "model for `{category}` expects {:?}, registry uses {:?}",
                model.metadata.raster, self.raster
            )));
        }
        let input = model.spec().input;
        if (input.rows, input.cols) != (self.raster.rows, self.raster.cols) {
            return Err(Error::Compatibility(format!(
                "model for `{category}` takes {}×{} input, registry uses {}×{}",
                input.rows, input.cols, self.raster.rows, self.raster.cols
            )));
        }
        if !(0.0..1.0).contains(&threshold) {
            return Err(Error::Range(format!("threshold {threshold} outside [0, 1)")));
        }
        self.entries.insert(category, Entry { model, threshold });
        Ok(())
    }

    pub fn raster(&self) -> &RasterConvention {
        &self.raster
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn categories(&self) -> impl Iterator<Item = &ArtifactCategory> {
        self.entries.keys()
    }

    pub fn contains(&self, category: &str) -> bool {
        self.entries.keys().any(|c| c.name() == category)
    }

    pub fn model(&self, category: &str) -> Option<&Arc<TrainedModel>> {
        self.entries
            .iter()
            .find(|(c, _)| c.name() == category)
            .map(|(_, e)| &e.model)
    }

    pub fn threshold(&self, category: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(c, _)| c.name() == category)
            .map(|(_, e)| e.threshold)
    }

    pub fn classify(&self, image: &RgbImage) -> Result<Detection> {
        Ok(self.classify_batch(&[image])?.remove(0))
    }

    /// Each classifier sees the whole batch independently; results are in
    /// input order.
    pub fn classify_batch(&self, images: &[&RgbImage]) -> Result<Vec<Detection>> {
        if self.entries.is_empty() {
            return Err(Error::Registry("no classifiers registered".into()));
        }
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let entries: Vec<(&ArtifactCategory, &Entry)> = self.entries.iter().collect();
        let votes = crate::par::map(&entries, |(_, e)| e.model.predict_batch(images, e.threshold))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok((0..images.len())
            .map(|i| {
                let decisions = entries
                    .iter()
                    .zip(&votes)
                    .map(|((cat, _), preds)| CategoryDecision {
                        category: (*cat).clone(),
                        score: preds[i].score,
                        positive: preds[i].positive,
                    })
                    .collect();
                Detection::from_decisions(decisions)
            })
            .collect())
    }
}

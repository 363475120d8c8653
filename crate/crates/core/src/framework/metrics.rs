use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ArtifactCategory, Detection, Registry, Verdict};
use crate::error::{Error, Result};
use crate::synthgen::UBS;
use crate::topomap::RgbImage;

/// One-vs-rest confusion counts for one classifier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn percent(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn errors(&self) -> usize {
        self.fp + self.fn_
    }

    /// Percent; `None` on an empty confusion matrix.
    pub fn accuracy(&self) -> Option<f64> {
        percent(self.tp + self.tn, self.total())
    }

    /// Percent; `None` without positives.
    pub fn sensitivity(&self) -> Option<f64> {
        percent(self.tp, self.tp + self.fn_)
    }

    /// Percent; `None` without negatives.
    pub fn specificity(&self) -> Option<f64> {
        percent(self.tn, self.tn + self.fp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: ArtifactCategory,
    pub confusion: Confusion,
    /// Misclassified examples by true label: false negatives under the
    /// category's own label, false positives under every other label.
    pub errors_by_label: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// UBS followed by the registered categories.
    pub labels: Vec<String>,
    pub categories: Vec<CategoryMetrics>,
    pub corpus_size: usize,
    /// Examples whose verdict is exactly their label (UBS, or the single
    /// matching category).
    pub exact_matches: usize,
    /// Topoplots flagged by at least one classifier.
    pub positive_detections: usize,
    /// Topoplots flagged by two or more classifiers.
    pub double_detections: usize,
    /// Per category pair `A|B`.
    pub double_pairs: BTreeMap<String, usize>,
}

impl Metrics {
    /// Scores detections against labels drawn from `categories` ∪ {UBS}.
    pub fn from_detections<S: AsRef<str>>(
        categories: &[ArtifactCategory],
        detections: &[Detection],
        labels: &[S],
    ) -> Result<Self> {
        if detections.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} detections for {} labels",
                detections.len(),
                labels.len()
            )));
        }
        let mut names: Vec<String> = vec![UBS.to_string()];
        names.extend(categories.iter().map(|c| c.name().to_string()));
        for label in labels {
            let label = label.as_ref();
            if !names.iter().any(|n| n == label) {
                return Err(Error::Data(format!("label `{label}` is neither UBS nor a registered category")));
            }
        }
        let mut per_cat: Vec<CategoryMetrics> = categories
            .iter()
            .map(|c| CategoryMetrics {
                category: c.clone(),
                confusion: Confusion::default(),
                errors_by_label: names.iter().map(|n| (n.clone(), 0)).collect(),
            })
            .collect();
        let mut exact_matches = 0;
        let mut positive_detections = 0;
        let mut double_detections = 0;
        let mut double_pairs = BTreeMap::new();
        for (det, label) in detections.iter().zip(labels) {
            let label = label.as_ref();
            for m in &mut per_cat {
                let truth = m.category.name() == label;
                let flagged = det.flags(m.category.name());
                let c = &mut m.confusion;
                match (truth, flagged) {
                    (true, true) => c.tp += 1,
                    (false, false) => c.tn += 1,
                    (false, true) => c.fp += 1,
                    (true, false) => c.fn_ += 1,
                }
                if truth != flagged {
                    *m.errors_by_label.get_mut(label).expect("label checked above") += 1;
                }
            }
            let exact = match &det.verdict {
                Verdict::Ubs => label == UBS,
                Verdict::Artifacts(cats) => cats.len() == 1 && cats[0].name() == label,
            };
            exact_matches += exact as usize;
            positive_detections += (!det.is_ubs()) as usize;
            double_detections += det.is_double() as usize;
            for (a, b) in &det.double_detections {
                *double_pairs.entry(format!("{a}|{b}")).or_insert(0) += 1;
            }
        }
        Ok(Self {
            labels: names,
            categories: per_cat,
            corpus_size: labels.len(),
            exact_matches,
            positive_detections,
            double_detections,
            double_pairs,
        })
    }

    /// Percent of examples with an exactly correct verdict.
    pub fn overall_accuracy(&self) -> Option<f64> {
        percent(self.exact_matches, self.corpus_size)
    }

    /// Percent of flagged topoplots flagged more than once.
    pub fn double_detection_rate(&self) -> Option<f64> {
        percent(self.double_detections, self.positive_detections)
    }

    pub fn category(&self, name: &str) -> Option<&CategoryMetrics> {
        self.categories.iter().find(|m| m.category.name() == name)
    }

    /// One row per classifier: confusion counts, errors per true label,
    /// total errors and percentages (empty when undefined).
    pub fn to_csv(&self) -> String {
        let pct = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.4}"));
        let mut out = String::from("category,tp,fp,tn,fn");
        for l in &self.labels {
            let _ = write!(out, ",errors_{l}");
        }
        out.push_str(",total_errors,accuracy,sensitivity,specificity\n");
        for m in &self.categories {
            let c = &m.confusion;
            let _ = write!(out, "{},{},{},{},{}", m.category, c.tp, c.fp, c.tn, c.fn_);
            for l in &self.labels {
                let _ = write!(out, ",{}", m.errors_by_label[l]);
            }
            let _ = writeln!(
                out,
                ",{},{},{},{}",
                c.errors(),
                pct(c.accuracy()),
                pct(c.sensitivity()),
                pct(c.specificity())
            );
        }
        out
    }

    /// Error counts per true label, totals and percentages, one row per
    /// classifier, followed by the raw confusion counts.
    pub fn table(&self) -> String {
        let fmt_pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.1}"));
        let mut out = String::new();
        let _ = write!(out, "{:<8}", "CNN");
        for l in &self.labels {
            let _ = write!(out, "{l:>12}");
        }
        let _ = writeln!(out, "{:>8}{:>8}{:>8}{:>8}", "TOTAL", "ACC%", "SENS%", "SPEC%");
        for m in &self.categories {
            let _ = write!(out, "{:<8}", m.category.name());
            for l in &self.labels {
                let n = m.errors_by_label[l];
                let cell = if l == m.category.name() {
                    format!("{n} (FN)")
                } else {
                    n.to_string()
                };
                let _ = write!(out, "{cell:>12}");
            }
            let c = &m.confusion;
            let _ = writeln!(
                out,
                "{:>8}{:>8}{:>8}{:>8}",
                c.errors(),
                fmt_pct(c.accuracy()),
                fmt_pct(c.sensitivity()),
                fmt_pct(c.specificity())
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<8}{:>8}{:>8}{:>8}{:>8}", "CNN", "TP", "FP", "TN", "FN");
        for m in &self.categories {
            let c = &m.confusion;
            let _ = writeln!(out, "{:<8}{:>8}{:>8}{:>8}{:>8}", m.category.name(), c.tp, c.fp, c.tn, c.fn_);
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "overall accuracy {} % over {} topoplots",
            fmt_pct(self.overall_accuracy()),
            self.corpus_size
        );
        let _ = writeln!(
            out,
            "double detections {} of {} flagged ({} %)",
            self.double_detections,
            self.positive_detections,
            fmt_pct(self.double_detection_rate())
        );
        for (pair, n) in &self.double_pairs {
            let _ = writeln!(out, "  {pair}: {n}");
        }
        out
    }
}

/// Classifies every image and scores the registry against `labels`.
pub fn evaluate<S: AsRef<str>>(registry: &Registry, images: &[&RgbImage], labels: &[S]) -> Result<Metrics> {
    let categories: Vec<ArtifactCategory> = registry.categories().cloned().collect();
    if images.len() != labels.len() {
        return Err(Error::Data(format!("{} images for {} labels", images.len(), labels.len())));
    }
    // reject bad labels before running any classifier
    for label in labels {
        let label = label.as_ref();
        if label != UBS && !categories.iter().any(|c| c.name() == label) {
            return Err(Error::Data(format!("label `{label}` is neither UBS nor a registered category")));
        }
    }
    let detections = registry.classify_batch(images)?;
    Metrics::from_detections(&categories, &detections, labels)
}

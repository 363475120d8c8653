use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use serde_json::json;

use super::{Detection, Registry, Verdict};
use crate::eeg_io::{notch_filter, window_subtrials, Montage, Recording, SubTrial};
use crate::error::{Error, Result};
use crate::ica::{center_whiten, component_weights, fast_ica, pca_whiten, variance_rank, IcaConfig, IcaResult};
use crate::topomap::{project_electrodes, render_topoplot, RgbImage, ScalpLayout};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub window_s: f64,
    pub hop_s: f64,
    /// Power-line frequencies to notch out; empty disables filtering.
    pub notch_freqs: Vec<f64>,
    pub notch_bandwidth_hz: f64,
    /// Components per window, capped by the channel count.
    pub max_components: usize,
    /// Keep only the leading principal subspace holding this fraction of
    /// the variance; `None` decomposes every channel.
    pub variance_kept: Option<f64>,
    /// Window `i` is decomposed with seed `ica.seed + i`.
    pub ica: IcaConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_s: 8.0,
            hop_s: 4.0,
            notch_freqs: vec![50.0],
            notch_bandwidth_hz: 2.0,
            max_components: 32,
            variance_kept: Some(0.99),
            ica: IcaConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0) || !(self.hop_s > 0.0) {
            return Err(Error::Config(format!(
                "window {} s and hop {} s must be positive",
                self.window_s, self.hop_s
            )));
        }
        if self.max_components == 0 {
            return Err(Error::Config("at least one component per window".into()));
        }
        if let Some(f) = self.variance_kept {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("variance fraction {f} outside (0, 1]")));
            }
        }
        if !(self.notch_bandwidth_hz > 0.0) {
            return Err(Error::Config(format!(
                "notch bandwidth {} Hz must be positive",
                self.notch_bandwidth_hz
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Ica,
    Topoplots,
    Classification,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Ica, Stage::Topoplots, Stage::Classification];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ica => "ica",
            Stage::Topoplots => "topoplot generation",
            Stage::Classification => "classification",
        }
    }
}

/// Wall time of the three processing stages.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimingReport {
    pub ica: Duration,
    pub topoplots: Duration,
    pub classification: Duration,
}

impl TimingReport {
    pub fn stages(&self) -> [(Stage, Duration); 3] {
        [
            (Stage::Ica, self.ica),
            (Stage::Topoplots, self.topoplots),
            (Stage::Classification, self.classification),
        ]
    }

    pub fn total(&self) -> Duration {
        self.ica + self.topoplots + self.classification
    }
}

impl fmt::Display for TimingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (stage, d) in self.stages() {
            writeln!(f, "{:<20} {:>9.4} s", stage.name(), d.as_secs_f64())?;
        }
        write!(f, "{:<20} {:>9.4} s", "total", self.total().as_secs_f64())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentDetection {
    pub component: usize,
    pub detection: Detection,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubTrialOutcome {
    Classified(Vec<ComponentDetection>),
    /// ICA did not converge; no component was classified.
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubTrialResult {
    pub index: usize,
    pub start_s: f64,
    pub outcome: SubTrialOutcome,
}

impl SubTrialResult {
    pub fn components(&self) -> &[ComponentDetection] {
        match &self.outcome {
            SubTrialOutcome::Classified(c) => c,
            SubTrialOutcome::Skipped { .. } => &[],
        }
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self.outcome, SubTrialOutcome::Skipped { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// In sub-trial order, components in index order.
    pub subtrials: Vec<SubTrialResult>,
    pub timing: TimingReport,
}

impl PipelineOutput {
    /// Every classified component with its sub-trial index.
    pub fn detections(&self) -> impl Iterator<Item = (usize, &ComponentDetection)> {
        self.subtrials
            .iter()
            .flat_map(|s| s.components().iter().map(move |c| (s.index, c)))
    }
}

fn decompose_window(window: &SubTrial, index: usize, cfg: &PipelineConfig) -> Result<IcaResult> {
    let x = &window.samples;
    let n_ch = x.nrows();
    let cap = cfg.max_components.min(n_ch);
    let n = match cfg.variance_kept {
        Some(f) => variance_rank(x, f)?.min(cap),
        None => cap,
    };
    let white = if n == n_ch { center_whiten(x)? } else { pca_whiten(x, n)? };
    let ica = IcaConfig {
        seed: cfg.ica.seed.wrapping_add(index as u64),
        ..cfg.ica
    };
    fast_ica(&white, n, &ica)
}

fn process(
    windows: &[SubTrial],
    sample_rate: u32,
    channel_names: &[String],
    layout: &ScalpLayout,
    registry: &Registry,
    cfg: &PipelineConfig,
    keep_unconverged: bool,
) -> Result<(Vec<SubTrialResult>, TimingReport)> {
    let indexed: Vec<(usize, &SubTrial)> = windows.iter().enumerate().collect();

    let t = Instant::now();
    let icas = crate::par::map(&indexed, |&(i, w)| decompose_window(w, i, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let ica_time = t.elapsed();

    let t = Instant::now();
    let rendered = crate::par::map(&icas, |ica| -> Result<Option<Vec<RgbImage>>> {
        if !ica.converged && !keep_unconverged {
            return Ok(None);
        }
        (0..ica.n_components())
            .map(|k| Ok(render_topoplot(&component_weights(ica, k, channel_names)?, layout)?.image))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let render_time = t.elapsed();

    let t = Instant::now();
    let images: Vec<&RgbImage> = rendered.iter().flatten().flatten().collect();
    let mut detections = registry.classify_batch(&images)?.into_iter();
    let classify_time = t.elapsed();

    let results = indexed
        .iter()
        .zip(rendered.iter().zip(&icas))
        .map(|(&(index, w), (imgs, ica))| {
            let start_s = w.start_sample as f64 / sample_rate as f64;
            let outcome = match imgs {
                Some(imgs) => SubTrialOutcome::Classified(
                    (0..imgs.len())
                        .map(|component| ComponentDetection {
                            component,
                            detection: detections.next().expect("one detection per image"),
                        })
                        .collect(),
                ),
                None => {
                    let reason = format!("ICA did not converge in {} iterations", ica.iterations);
                    log::warn!("sub-trial {index} at {start_s} s skipped: {reason}");
                    SubTrialOutcome::Skipped { reason }
                }
            };
            SubTrialResult {
                index,
                start_s,
                outcome,
            }
        })
        .collect();
    Ok((
        results,
        TimingReport {
            ica: ica_time,
            topoplots: render_time,
            classification: classify_time,
        },
    ))
}

fn prepare(rec: &Recording, cfg: &PipelineConfig) -> Result<(Vec<SubTrial>, ScalpLayout)> {
    cfg.validate()?;
    let filtered = if cfg.notch_freqs.is_empty() {
        rec.clone()
    } else {
        notch_filter(rec, &cfg.notch_freqs, cfg.notch_bandwidth_hz)?
    };
    let windows = window_subtrials(&filtered, cfg.window_s, cfg.hop_s)?;
    let layout = project_electrodes(&Montage::standard_1020(), rec.channel_names())?;
    Ok((windows, layout))
}

/// Notch filter, cut overlapping sub-trials, then per sub-trial: ICA,
/// one topoplot per component, classification by every registered model.
pub fn run_pipeline(rec: &Recording, registry: &Registry, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let (windows, layout) = prepare(rec, cfg)?;
    let (subtrials, timing) = process(&windows, rec.sample_rate(), rec.channel_names(), &layout, registry, cfg, false)?;
    Ok(PipelineOutput { subtrials, timing })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub runs: usize,
    pub components: usize,
    /// Per-stage medians.
    pub median: TimingReport,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "median of {} runs, {} topoplots per run",
            self.runs, self.components
        )?;
        write!(f, "{}", self.median)
    }
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

/// Times the three stages on the first sub-trial, `runs` times, with one
/// component per channel (up to `max_components`). Components are rendered
/// and classified whether or not ICA converged.
pub fn bench(rec: &Recording, registry: &Registry, cfg: &PipelineConfig, runs: usize) -> Result<BenchReport> {
    if runs < 5 {
        return Err(Error::Config(format!("bench needs at least 5 runs, got {runs}")));
    }
    let cfg = &PipelineConfig {
        variance_kept: None,
        ..cfg.clone()
    };
    let (windows, layout) = prepare(rec, cfg)?;
    let first = &windows[..1];
    let mut timings = Vec::with_capacity(runs);
    let mut components = 0;
    for _ in 0..runs {
        let (res, t) = process(first, rec.sample_rate(), rec.channel_names(), &layout, registry, cfg, true)?;
        components = res[0].components().len();
        timings.push(t);
    }
    let pick = |f: fn(&TimingReport) -> Duration| median(timings.iter().map(f).collect());
    Ok(BenchReport {
        runs,
        components,
        median: TimingReport {
            ica: pick(|t| t.ica),
            topoplots: pick(|t| t.topoplots),
            classification: pick(|t| t.classification),
        },
    })
}

/// One JSON object per line: a record per classified component, or one per
/// skipped sub-trial.
pub fn write_detection_stream(out: &PipelineOutput, mut w: impl Write) -> std::io::Result<()> {
    for s in &out.subtrials {
        match &s.outcome {
            SubTrialOutcome::Skipped { reason } => {
                let rec = json!({
                    "subtrial_index": s.index,
                    "start_s": s.start_s,
                    "skipped": true,
                    "reason": reason,
                });
                writeln!(w, "{rec}")?;
            }
            SubTrialOutcome::Classified(components) => {
                for c in components {
                    let d = &c.detection;
                    let scores: serde_json::Map<String, serde_json::Value> = d
                        .decisions
                        .iter()
                        .map(|x| (x.category.to_string(), json!(x.score)))
                        .collect();
                    let verdict = match &d.verdict {
                        Verdict::Ubs => json!("UBS"),
                        Verdict::Artifacts(cats) => json!(cats),
                    };
                    let rec = json!({
                        "subtrial_index": s.index,
                        "component_index": c.component,
                        "scores": scores,
                        "verdict": verdict,
                        "double_detections": d.double_detections,
                    });
                    writeln!(w, "{rec}")?;
                }
            }
        }
    }
    Ok(())
}

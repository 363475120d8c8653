use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::archetype::{gen_weights, Archetype, ArchetypeParams, UBS};
use crate::eeg_io::{Montage, DEAP_CHANNELS};
use crate::error::{Error, Result};
use crate::ica::ComponentWeights;
use crate::nn::LabeledImage;
use crate::par;
use crate::topomap::{load_png, project_electrodes, render_topoplot, write_png, RgbImage};

pub const MANIFEST_FILE: &str = "labels.csv";
pub const CORPUS_INFO_FILE: &str = "corpus.json";
pub const IMAGE_DIR: &str = "images";
pub const ARTIFACT_LABELS: [&str; 3] = ["B_V", "H_E", "E_I"];

/// Positive count and one-vs-rest negative count of each CNN's training set
/// in the reference composition.
pub const TABLE1: [(&str, usize, usize); 3] = [("B_V", 1341, 5020), ("H_E", 398, 4823), ("E_I", 1592, 6044)];

fn scaled(n: usize, scale: f64) -> usize {
    (n as f64 * scale).round() as usize
}

fn table1_row(category: &str) -> Result<(usize, usize)> {
    TABLE1
        .iter()
        .find(|r| r.0 == category)
        .map(|r| (r.1, r.2))
        .ok_or_else(|| Error::Data(format!("no reference composition for `{category}`")))
}

/// UBS images in `category`'s negative set: its negative total minus the
/// other artifact classes.
pub fn table1_negative_ubs(category: &str, scale: f64) -> Result<usize> {
    let (_, negatives) = table1_row(category)?;
    let others: usize = TABLE1
        .iter()
        .filter(|r| r.0 != category)
        .map(|r| scaled(r.1, scale))
        .sum();
    Ok(scaled(negatives, scale).saturating_sub(others))
}

/// Per-label counts reproducing every one-vs-rest set of the reference
/// composition at `scale`.
pub fn table1_counts(scale: f64) -> Result<BTreeMap<String, usize>> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Range(format!("scale {scale} must be positive")));
    }
    let mut counts: BTreeMap<String, usize> = TABLE1
        .iter()
        .map(|r| (r.0.to_string(), scaled(r.1, scale)))
        .collect();
    let ubs = ARTIFACT_LABELS
        .iter()
        .map(|c| table1_negative_ubs(c, scale))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .max()
        .unwrap_or(0);
    counts.insert(UBS.to_string(), ubs);
    if counts.values().any(|&c| c == 0) {
        return Err(Error::Range(format!("scale {scale} leaves a label empty")));
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Preset {
    Table1 { scale: f64 },
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub counts: BTreeMap<String, usize>,
    /// Per-sample noise level is drawn uniformly from this range.
    pub noise: (f64, f64),
    pub seed: u64,
    pub preset: Preset,
}

impl CorpusConfig {
    pub const DEFAULT_NOISE: (f64, f64) = (0.0, 0.1);

    pub fn table1(scale: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            counts: table1_counts(scale)?,
            noise: Self::DEFAULT_NOISE,
            seed,
            preset: Preset::Table1 { scale },
        })
    }

    pub fn custom(counts: BTreeMap<String, usize>, seed: u64) -> Self {
        Self {
            counts,
            noise: Self::DEFAULT_NOISE,
            seed,
            preset: Preset::Custom,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.is_empty() || self.counts.values().any(|&c| c == 0) {
            return Err(Error::Range("every label needs a positive count".into()));
        }
        for label in self.counts.keys() {
            Archetype::for_label(label)?;
        }
        let (lo, hi) = self.noise;
        if !(0.0 <= lo && lo <= hi && hi <= 0.5) {
            return Err(Error::Range(format!("noise range {lo}..{hi} outside [0, 0.5]")));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    /// Path relative to the corpus directory.
    pub file: String,
    pub label: String,
    pub archetype: Archetype,
    pub seed: u64,
}

/// One generated sample before or after rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub row: ManifestRow,
    pub params: ArchetypeParams,
}

/// Expands the configuration into per-sample parameters. Label blocks come
/// in label order; archetypes alternate within a label.
pub fn plan_samples(cfg: &CorpusConfig) -> Result<Vec<Sample>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.total());
    for (label, &count) in &cfg.counts {
        let kinds = Archetype::for_label(label)?;
        for i in 0..count {
            let archetype = kinds[i % kinds.len()];
            let seed: u64 = rng.random();
            let mut local = ChaCha8Rng::seed_from_u64(seed);
            let noise = if cfg.noise.1 > cfg.noise.0 {
                local.random_range(cfg.noise.0..cfg.noise.1)
            } else {
                cfg.noise.0
            };
            let index = out.len();
            out.push(Sample {
                row: ManifestRow {
                    file: format!("{IMAGE_DIR}/{index:06}_{}.png", archetype.name().to_lowercase()),
                    label: label.clone(),
                    archetype,
                    seed,
                },
                params: ArchetypeParams::sample(archetype, noise, seed),
            });
        }
    }
    Ok(out)
}

/// Weights and topoplot image of every planned sample, in order.
pub fn render_samples(samples: &[Sample], montage: &Montage) -> Result<Vec<(ComponentWeights, RgbImage)>> {
    let layout = project_electrodes(montage, &DEAP_CHANNELS)?;
    par::map(samples, |s| {
        let (w, _) = gen_weights(&s.params, montage)?;
        let img = render_topoplot(&w, &layout)?.image;
        Ok((w, img))
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub config: CorpusConfig,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub info: Option<CorpusInfo>,
}

impl Manifest {
    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            *out.entry(r.label.clone()).or_insert(0) += 1;
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("file,label,archetype,seed\n");
        for r in &self.rows {
            writeln!(s, "{},{},{},{}", r.file, r.label, r.archetype, r.seed).unwrap();
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Vec<ManifestRow>> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "file,label,archetype,seed" => {}
            other => return Err(Error::Parse(format!("manifest header `{}`", other.unwrap_or("")))),
        }
        lines
            .map(|l| {
                let f: Vec<&str> = l.split(',').map(str::trim).collect();
                let [file, label, archetype, seed] = f[..] else {
                    return Err(Error::Parse(format!("manifest row `{l}`")));
                };
                Ok(ManifestRow {
                    file: file.to_string(),
                    label: label.to_string(),
                    archetype: archetype.parse()?,
                    seed: seed
                        .parse()
                        .map_err(|_| Error::Parse(format!("manifest seed `{seed}`")))?,
                })
            })
            .collect()
    }
}

/// Generates, renders and writes a labeled corpus: `images/*.png`,
/// `labels.csv` and `corpus.json`.
pub fn gen_corpus(cfg: &CorpusConfig, out_dir: &Path) -> Result<Manifest> {
    let samples = plan_samples(cfg)?;
    let montage = Montage::standard_1020();
    let images_dir = out_dir.join(IMAGE_DIR);
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let layout = project_electrodes(&montage, &DEAP_CHANNELS)?;
    par::map(&samples, |s| {
        let (w, _) = gen_weights(&s.params, &montage)?;
        write_png(&render_topoplot(&w, &layout)?.image, &out_dir.join(&s.row.file))
    })
    .into_iter()
    .collect::<Result<Vec<()>>>()?;
    let manifest = Manifest {
        rows: samples.into_iter().map(|s| s.row).collect(),
        info: Some(CorpusInfo {
            config: cfg.clone(),
            size: cfg.total(),
        }),
    };
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_csv()).map_err(|e| Error::io(&path, e))?;
    let path = out_dir.join(CORPUS_INFO_FILE);
    let json = serde_json::to_string_pretty(&manifest.info).expect("corpus info serializes");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// A corpus held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: Manifest,
    pub images: Vec<RgbImage>,
}

impl Corpus {
    /// Generates a corpus without touching the filesystem.
    pub fn generate(cfg: &CorpusConfig) -> Result<Self> {
        let samples = plan_samples(cfg)?;
        let rendered = render_samples(&samples, &Montage::standard_1020())?;
        Ok(Self {
            manifest: Manifest {
                rows: samples.into_iter().map(|s| s.row).collect(),
                info: Some(CorpusInfo {
                    config: cfg.clone(),
                    size: cfg.total(),
                }),
            },
            images: rendered.into_iter().map(|(_, img)| img).collect(),
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let rows = Manifest::parse_csv(&text)?;
        let info_path = dir.join(CORPUS_INFO_FILE);
        let info = match std::fs::read_to_string(&info_path) {
            Ok(t) => serde_json::from_str(&t).map_err(|e| Error::Parse(format!("{}: {e}", info_path.display())))?,
            Err(_) => None,
        };
        let paths: Vec<PathBuf> = rows.iter().map(|r| dir.join(&r.file)).collect();
        let images = par::map(&paths, |p| load_png(p)).into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self {
            manifest: Manifest { rows, info },
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Scale of the reference composition this corpus was generated with.
    pub fn table1_scale(&self) -> Option<f64> {
        match self.manifest.info.as_ref()?.config.preset {
            Preset::Table1 { scale } => Some(scale),
            Preset::Custom => None,
        }
    }

    /// Positives are `category`; negatives are every other label. UBS
    /// negatives are capped at `ubs_limit` (taken in manifest order).
    pub fn one_vs_rest(&self, category: &str, ubs_limit: Option<usize>) -> Result<Vec<LabeledImage>> {
        if !self.manifest.rows.iter().any(|r| r.label == category) {
            return Err(Error::Data(format!("corpus has no `{category}` examples")));
        }
        let mut ubs_taken = 0;
        let mut out = Vec::new();
        for (row, img) in self.manifest.rows.iter().zip(&self.images) {
            if row.label == UBS {
                if ubs_limit.is_some_and(|l| ubs_taken >= l) {
                    continue;
                }
                ubs_taken += 1;
            }
            out.push(LabeledImage {
                image: img.clone(),
                positive: row.label == category,
            });
        }
        Ok(out)
    }

    /// One-vs-rest set, sized like the reference composition when the
    /// corpus was generated from it.
    pub fn training_set(&self, category: &str) -> Result<Vec<LabeledImage>> {
        let limit = match self.table1_scale() {
            Some(scale) => Some(table1_negative_ubs(category, scale)?),
            None => None,
        };
        self.one_vs_rest(category, limit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_quarter_scale() {
        let c = table1_counts(0.25).unwrap();
        assert_eq!(c["B_V"], 335);
        assert_eq!(c["H_E"], 100);
        assert_eq!(c["E_I"], 398);
        // E_I's negative set needs the most UBS: 1511 − 335 − 100
        assert_eq!(c[UBS], 1076);
        let bv_negatives = c["H_E"] + c["E_I"] + table1_negative_ubs("B_V", 0.25).unwrap();
        assert_eq!(bv_negatives, 1255);
        for (cat, pos, neg) in TABLE1 {
            let others: usize = TABLE1.iter().filter(|r| r.0 != cat).map(|r| scaled(r.1, 0.25)).sum();
            assert_eq!(others + table1_negative_ubs(cat, 0.25).unwrap(), scaled(neg, 0.25));
            assert_eq!(c[cat], scaled(pos, 0.25));
        }
    }

    #[test]
    fn full_scale_reproduces_reference_sets() {
        let c = table1_counts(1.0).unwrap();
        assert_eq!(c[UBS], 4305);
        assert_eq!(table1_negative_ubs("B_V", 1.0).unwrap() + 398 + 1592, 5020);
        assert_eq!(table1_negative_ubs("H_E", 1.0).unwrap() + 1341 + 1592, 4823);
        assert_eq!(table1_negative_ubs("E_I", 1.0).unwrap() + 1341 + 398, 6044);
    }

    #[test]
    fn plan_is_deterministic_and_alternates_archetypes() {
        let cfg = CorpusConfig::table1(0.02, 7).unwrap();
        let a = plan_samples(&cfg).unwrap();
        assert_eq!(a, plan_samples(&cfg).unwrap());
        let bv: Vec<_> = a.iter().filter(|s| s.row.label == "B_V").collect();
        assert_eq!(bv[0].row.archetype, Archetype::Beog);
        assert_eq!(bv[1].row.archetype, Archetype::Veog);
        assert!(a.iter().all(|s| (0.0..0.1).contains(&s.params.noise)));
        let other = CorpusConfig::table1(0.02, 8).unwrap();
        assert_ne!(a, plan_samples(&other).unwrap());
    }

    #[test]
    fn write_and_reload_corpus() {
        let counts: BTreeMap<String, usize> =
            [("B_V", 3), ("H_E", 2), ("E_I", 2), (UBS, 5)].map(|(k, v)| (k.to_string(), v)).into();
        let cfg = CorpusConfig::custom(counts, 11);
        let dir = tempfile::tempdir().unwrap();
        let m = gen_corpus(&cfg, dir.path()).unwrap();
        assert_eq!(m.rows.len(), 12);
        let pngs = std::fs::read_dir(dir.path().join(IMAGE_DIR)).unwrap().count();
        assert_eq!(pngs, 12);
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(text.starts_with("file,label,archetype,seed\n"));
        assert_eq!(text.lines().count(), 13);

        let loaded = Corpus::load(dir.path()).unwrap();
        let memory = Corpus::generate(&cfg).unwrap();
        assert_eq!(loaded.images, memory.images);
        assert_eq!(loaded.manifest, memory.manifest);
        assert_eq!(loaded.manifest.counts()["B_V"], 3);

        let set = loaded.one_vs_rest("B_V", Some(2)).unwrap();
        assert_eq!(set.len(), 3 + 2 + 2 + 2);
        assert_eq!(set.iter().filter(|s| s.positive).count(), 3);
        assert!(matches!(loaded.one_vs_rest("XX", None), Err(Error::Data(_))));
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = CorpusConfig::custom([("B_V".to_string(), 0)].into(), 1);
        assert!(plan_samples(&cfg).is_err());
        cfg.counts.insert("B_V".into(), 2);
        cfg.noise = (0.2, 0.1);
        assert!(plan_samples(&cfg).is_err());
        cfg.noise = (0.0, 0.1);
        cfg.counts.insert("XX".into(), 2);
        assert!(matches!(plan_samples(&cfg), Err(Error::Data(_))));
        assert!(table1_counts(0.0).is_err());
    }
}

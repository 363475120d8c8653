use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use icascope::eeg_io::{load_recording, save_recording, Format, Recording};
use icascope::framework::{
    bench, evaluate, run_pipeline, write_detection_stream, ArtifactCategory, CategoryDecision, Detection,
    Metrics, PipelineConfig, Registry, Verdict,
};
use icascope::ica::IcaConfig;
use icascope::nn::{build_architecture, train, TrainConfig, TrainedModel};
use icascope::synthgen::{
    clean_recording, gen_corpus, inject_artifact, Corpus, CorpusConfig, RecordingConfig, MANIFEST_FILE, UBS,
};
use icascope::topomap::{load_png, RgbImage};
use icascope::Error;

use crate::{
    BenchArgs, ClassifyArgs, Command, EvalArgs, PipelineArgs, PresetArg, RecordingArgs, SimulateArgs, SynthArgs,
    TrainArgs,
};

pub enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Classify(a) => classify(a),
        Command::Eval(a) => eval(a),
        Command::Simulate(a) => simulate(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Bench(a) => bench_cmd(a),
    }
}

/// CRC-32 over the manifest and every image in manifest order.
fn corpus_checksum(dir: &Path, files: &[String]) -> Result<u32, Failure> {
    let mut h = crc32fast::Hasher::new();
    for f in std::iter::once(MANIFEST_FILE).chain(files.iter().map(String::as_str)) {
        let path = dir.join(f);
        h.update(&fs::read(&path).map_err(|e| io_err(&path, e))?);
    }
    Ok(h.finalize())
}

fn synth(a: SynthArgs) -> CmdResult {
    let mut cfg = match a.preset {
        PresetArg::Table1 => {
            if !a.counts.is_empty() {
                return Err(usage("--count only applies to --preset custom"));
            }
            CorpusConfig::table1(a.scale, a.seed).map_err(|e| usage(e.to_string()))?
        }
        PresetArg::Custom => {
            if a.counts.is_empty() {
                return Err(usage("--preset custom needs at least one --count LABEL=N"));
            }
            CorpusConfig::custom(a.counts.into_iter().collect(), a.seed)
        }
    };
    cfg.noise = (0.0, a.noise_max);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let manifest = gen_corpus(&cfg, &a.out)?;
    let files: Vec<String> = manifest.rows.iter().map(|r| r.file.clone()).collect();
    println!("manifest: {}", a.out.join(MANIFEST_FILE).display());
    for (label, n) in manifest.counts() {
        println!("{label:<4} {n}");
    }
    println!("total {}", manifest.rows.len());
    println!("checksum {:08x}", corpus_checksum(&a.out, &files)?);
    Ok(())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn train_cmd(a: TrainArgs) -> CmdResult {
    if a.repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    let base = TrainConfig {
        learning_rate: a.learning_rate,
        momentum: a.momentum,
        batch_size: a.batch_size,
        max_epochs: a.max_epochs,
        clip_norm: a.clip_norm,
        patience: a.patience,
        train_fraction: a.train_fraction,
        validation_fraction: 1.0 - a.train_fraction,
        seed: a.seed,
    };
    base.validate().map_err(|e| usage(e.to_string()))?;
    let corpus = Corpus::load(&a.corpus)?;
    let cat = a.category.name();
    let data = corpus.training_set(cat)?;
    let positives = data.iter().filter(|d| d.positive).count();
    println!("{cat}: {} examples ({positives} positive)", data.len());
    let spec = build_architecture(a.category);
    let mut accs = Vec::with_capacity(a.repeats);
    let mut best: Option<(f64, TrainedModel)> = None;
    for r in 0..a.repeats {
        let cfg = TrainConfig {
            seed: a.seed.wrapping_add(r as u64),
            ..base.clone()
        };
        let (model, history) = train(&spec, &data, &cfg)?;
        let history_path = if a.repeats == 1 {
            a.out.join(format!("{cat}_history.csv"))
        } else {
            a.out.join(format!("{cat}_history_r{r}.csv"))
        };
        let mut csv = Vec::new();
        history.write_csv(&mut csv).expect("writing to memory");
        write_file(&history_path, &csv)?;
        let kept = history.best().copied().ok_or_else(|| Error::State("training ran no epochs".into()))?;
        let acc = 100.0 * kept.validation_accuracy;
        println!(
            "seed {}: {} epochs, kept epoch {}, final val acc = {acc:.2} %, checksum {:08x}",
            cfg.seed,
            history.epochs.len(),
            kept.epoch,
            model.checksum()
        );
        accs.push(acc);
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, model));
        }
    }
    let (_, model) = best.expect("at least one repeat");
    let model_path = a.out.join(format!("{cat}.mdl"));
    write_file(&model_path, &model.to_bytes())?;
    println!("model: {}", model_path.display());
    let (mean, std) = mean_std(&accs);
    println!("acc = {mean:.1} ± {std:.1} %");
    Ok(())
}

fn load_registry(dir: &Path) -> Result<Registry, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mdl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!("no .mdl model files in {}", dir.display())).into());
    }
    let mut registry = Registry::default();
    for p in paths {
        let model = TrainedModel::load(&p)?;
        let category = ArtifactCategory::new(model.class_name())?;
        registry.register(model, category)?;
    }
    Ok(registry)
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    Ok(paths)
}

fn verdict_cell(d: &Detection) -> String {
    d.verdict.to_string()
}

fn doubles_cell(d: &Detection) -> String {
    d.double_detections
        .iter()
        .map(|(a, b)| format!("{a}|{b}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn classify(a: ClassifyArgs) -> CmdResult {
    let registry = load_registry(&a.models.models)?;
    let paths = png_files(&a.input)?;
    let images = paths.iter().map(|p| load_png(p)).collect::<Result<Vec<RgbImage>, _>>()?;
    let refs: Vec<&RgbImage> = images.iter().collect();
    let detections = registry.classify_batch(&refs)?;
    let cats: Vec<String> = registry.categories().map(|c| c.to_string()).collect();
    let mut out = format!("file,{},verdict,double_detections\n", cats.join(","));
    for (p, d) in paths.iter().zip(&detections) {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let scores: Vec<String> = d.decisions.iter().map(|x| format!("{:.6}", x.score)).collect();
        out.push_str(&format!("{name},{},{},{}\n", scores.join(","), verdict_cell(d), doubles_cell(d)));
    }
    match &a.out {
        Some(path) => write_file(path, out.as_bytes())?,
        None => print!("{out}"),
    }
    let flagged = detections.iter().filter(|d| !d.is_ubs()).count();
    eprintln!("{} topoplots, {flagged} flagged", detections.len());
    Ok(())
}

/// Reads `label,<category>...` rows; a value above 0.5 is a positive vote.
fn read_predictions(path: &Path) -> Result<(Vec<ArtifactCategory>, Vec<Detection>, Vec<String>), Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::trim)
        .collect();
    let label_col = header
        .iter()
        .position(|h| *h == "label")
        .ok_or_else(|| Error::Parse("predictions need a `label` column".into()))?;
    let cat_cols: Vec<(usize, ArtifactCategory)> = header
        .iter()
        .enumerate()
        .filter(|(i, h)| *i != label_col && **h != "file")
        .map(|(i, h)| Ok((i, ArtifactCategory::new(h)?)))
        .collect::<Result<_, Error>>()?;
    let mut detections = Vec::new();
    let mut labels = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(Error::Parse(format!("predictions row {} has {} cells", n + 2, cells.len())).into());
        }
        let decisions = cat_cols
            .iter()
            .map(|(i, c)| {
                let score: f64 = cells[*i]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad score `{}` in row {}", cells[*i], n + 2)))?;
                Ok(CategoryDecision {
                    category: c.clone(),
                    score,
                    positive: score > 0.5,
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        detections.push(Detection::from_decisions(decisions));
        labels.push(cells[label_col].to_string());
    }
    let mut cats: Vec<ArtifactCategory> = cat_cols.into_iter().map(|(_, c)| c).collect();
    cats.sort();
    Ok((cats, detections, labels))
}

fn eval(a: EvalArgs) -> CmdResult {
    let metrics: Metrics = match (&a.models, &a.corpus, &a.predictions) {
        (Some(models), Some(corpus), None) => {
            let registry = load_registry(models)?;
            let corpus = Corpus::load(corpus)?;
            let refs: Vec<&RgbImage> = corpus.images.iter().collect();
            let labels: Vec<&str> = corpus.manifest.rows.iter().map(|r| r.label.as_str()).collect();
            evaluate(&registry, &refs, &labels)?
        }
        (None, None, Some(pred)) => {
            let (cats, detections, labels) = read_predictions(pred)?;
            Metrics::from_detections(&cats, &detections, &labels)?
        }
        _ => return Err(usage("use either --models with --corpus, or --predictions")),
    };
    print!("{}", metrics.table());
    if let Some(path) = &a.out {
        write_file(path, metrics.to_csv().as_bytes())?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let cfg = RecordingConfig {
        duration_s: a.seconds,
        sample_rate: a.sample_rate,
        seed: a.seed,
        ..RecordingConfig::default()
    };
    let mut rec = clean_recording(&cfg)?.recording;
    if let Some(kind) = a.artifact {
        let epochs = if a.epochs.is_empty() {
            vec![(0.0, rec.duration_s())]
        } else {
            a.epochs.clone()
        };
        rec = inject_artifact(&rec, kind, a.amplitude, &epochs, a.seed.wrapping_add(1))?.recording;
    }
    save_recording(&rec, &a.out, Format::from_path(&a.out))?;
    println!(
        "{}: {} channels, {} samples at {} Hz",
        a.out.display(),
        rec.n_channels(),
        rec.n_samples(),
        rec.sample_rate()
    );
    Ok(())
}

fn pipeline_config(r: &RecordingArgs) -> Result<PipelineConfig, Failure> {
    let cfg = PipelineConfig {
        window_s: r.window,
        hop_s: r.hop,
        notch_freqs: if r.no_notch { Vec::new() } else { r.notch.clone() },
        notch_bandwidth_hz: r.notch_bandwidth,
        max_components: r.max_components,
        variance_kept: (!r.all_components).then_some(r.variance),
        ica: IcaConfig {
            max_iter: r.max_iter,
            seed: r.seed,
            ..IcaConfig::default()
        },
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn load_rec(path: &Path) -> Result<Recording, Failure> {
    Ok(load_recording(path, Format::from_path(path))?)
}

fn pipeline(a: PipelineArgs) -> CmdResult {
    let cfg = pipeline_config(&a.recording)?;
    let registry = load_registry(&a.models.models)?;
    let rec = load_rec(&a.recording.recording)?;
    let out = run_pipeline(&rec, &registry, &cfg)?;
    let mut stream = Vec::new();
    write_detection_stream(&out, &mut stream).expect("writing to memory");
    match &a.out {
        Some(path) => write_file(path, &stream)?,
        None => std::io::stdout()
            .write_all(&stream)
            .map_err(|e| io_err(Path::new("<stdout>"), e))?,
    }
    let skipped = out.subtrials.iter().filter(|s| s.is_skipped()).count();
    let mut verdicts: BTreeMap<String, usize> = BTreeMap::new();
    for (_, c) in out.detections() {
        let key = match &c.detection.verdict {
            Verdict::Ubs => UBS.to_string(),
            v => v.to_string(),
        };
        *verdicts.entry(key).or_insert(0) += 1;
    }
    eprintln!(
        "{} sub-trials ({skipped} skipped), {} components",
        out.subtrials.len(),
        out.detections().count()
    );
    for (v, n) in &verdicts {
        eprintln!("  {v}: {n}");
    }
    eprintln!("{}", out.timing);
    Ok(())
}

fn bench_cmd(a: BenchArgs) -> CmdResult {
    if a.runs < 5 {
        return Err(usage(format!("--runs must be at least 5, got {}", a.runs)));
    }
    let cfg = pipeline_config(&a.recording)?;
    let registry = load_registry(&a.models.models)?;
    let rec = load_rec(&a.recording.recording)?;
    let report = bench(&rec, &registry, &cfg, a.runs)?;
    println!("{report}");
    Ok(())
}

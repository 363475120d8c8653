//! Labeled synthetic component weights, topoplot corpora and recordings.

mod archetype;
mod corpus;
mod recording;

pub use archetype::{gen_weights, Archetype, ArchetypeParams, BORDER_CHANNELS, UBS};
pub use corpus::{
    gen_corpus, plan_samples, render_samples, table1_counts, table1_negative_ubs, Corpus,
    CorpusConfig, CorpusInfo, Manifest, ManifestRow, Preset, Sample, ARTIFACT_LABELS,
    CORPUS_INFO_FILE, IMAGE_DIR, MANIFEST_FILE, TABLE1,
};
pub use recording::{clean_recording, inject_artifact, Injection, RecordingConfig, SyntheticRecording};

//! Training windows: chronological splits, window-length selection,
//! sliding-window sequences and a synthetic corpus.

mod acf;
mod build;
mod sequence;
mod split;
mod synth;

pub use acf::{
    acf, pooled_window_length, select_window_length, significance_bound, WindowSelection, MAX_LAG,
    MAX_WINDOW, MIN_SERIES, MIN_WINDOW,
};
pub use build::{
    build_sequences, max_temperature_series, AccessAudit, AccessReport, Dataset, DatasetOptions,
    Phase, ProcessedVolcano, SplitRecord, WindowPolicy,
};
pub use sequence::{gap_days, SceneSequence};
pub use split::{chronological_split, split_sizes, Split, SplitMode, SplitParts};
pub use synth::{
    render_scene, synthesize_corpus, write_corpus, Blob, SynthConfig, SyntheticVolcano,
};

//! Benchmarking: error metrics, synthetic instances, rendered test faces,
//! and the sampling-strategy ablation.

pub mod ablate;
pub mod demo;
pub mod metrics;
pub mod render;
pub mod synth;

pub use ablate::{ablation_tsv, run_ablation, AblationConfig, AblationRow};
pub use demo::{demo_corpus, demo_ensemble, demo_scheme, DemoCorpus, DemoFace};
pub use metrics::{
    ced_curve, default_thresholds, interocular, mnle, EvalReport, MetricSubset, FAILURE_THRESHOLD,
};
pub use render::render_face;
pub use synth::{synthesize, synthesize_mode, SynthConfig, SyntheticInstance};

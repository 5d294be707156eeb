//! Command-line interface: training, alignment, evaluation, demo corpus
//! synthesis, and the sampling ablation.
//!
//! Every command is deterministic in its inputs and `--seed`: running it
//! twice produces byte-identical output files.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{derive_seed, BoostConfig, DescriptorConfig, SamplingStrategy, SearchConfig, ShapeTrainConfig};
use crate::error::{Error, Result};
use crate::eval::{
    ablation_tsv, default_thresholds, demo_corpus, demo_ensemble, mnle, run_ablation,
    AblationConfig, EvalReport, MetricSubset, SynthConfig,
};
use crate::fitter::align_face;
use crate::geometry::FaceBox;
use crate::img::GrayImageF;
use crate::io::{
    load_face_boxes, load_gray, load_model_file, read_annotations, read_results_file,
    save_model_file, write_results_file, AnnotationRecord, ConfigSnapshot, ResultRecord,
};
use crate::shape::{calibrate_box_placement, train_mode_model, ModeId, ModelEnsemble, Shape};

/// Face boxes derived from annotations inflate the landmark bounds by this
/// factor when no detector boxes are supplied.
pub const ANNOTATION_BOX_EXPAND: f64 = 1.3;

#[derive(Parser, Debug)]
#[command(name = "rclm", version, about = "Occlusion-robust face alignment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train an ensemble from annotated faces.
    Train(TrainArgs),
    /// Align faces in images with a trained model.
    Align(AlignArgs),
    /// Score alignment results against ground-truth annotations.
    Eval(EvalArgs),
    /// Render a synthetic demo corpus with full ground truth.
    Synth(SynthArgs),
    /// Compare hypothesis sampling strategies on planted instances.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Ground-truth annotations (JSONL). Records carry an optional
    /// pose/expression label; unlabeled records train the (0, 0) model.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Directory image paths in the annotation file are relative to
    /// (default: the annotation file's directory).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Detector face boxes, one `path x y w h` line per face, matched to
    /// annotations by order of appearance per image. Without this, boxes
    /// are derived from the annotated landmarks.
    #[arg(long)]
    pub boxes: Option<PathBuf>,
    /// Skip detector training; the model then only fits externally supplied
    /// candidates.
    #[arg(long)]
    pub shape_only: bool,
    /// Boosting rounds per landmark detector.
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Face boxes to align, one `path x y w h` line per face.
    #[arg(long)]
    pub boxes: PathBuf,
    /// Directory image paths in the boxes file are relative to (default:
    /// the boxes file's directory).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Hypothesis sampling strategy (default: the model's training
    /// configuration).
    #[arg(long)]
    pub strategy: Option<SamplingStrategy>,
    /// Hypothesis budget per pose/expression model.
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output results (JSONL), one record per aligned face.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Alignment results (JSONL).
    #[arg(long)]
    pub results: PathBuf,
    /// Ground-truth annotations (JSONL). Annotated faces missing from the
    /// results count as failures.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Landmark subset to score.
    #[arg(long, default_value = "full")]
    pub subset: MetricSubset,
    /// Output report (JSON). Written alongside a summary line on stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the cumulative error curve as TSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Pose families to render.
    #[arg(long, default_value_t = 2)]
    pub poses: usize,
    /// Expression families per pose.
    #[arg(long, default_value_t = 2)]
    pub expressions: usize,
    /// Faces per pose/expression family.
    #[arg(long, default_value_t = 40)]
    pub per_mode: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; receives images/, boxes.txt, and
    /// annotations.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Strategies to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![
        SamplingStrategy::Uniform,
        SamplingStrategy::Confidence,
        SamplingStrategy::Greedy,
    ])]
    pub strategies: Vec<SamplingStrategy>,
    /// Hypothesis budgets to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![50, 200, 1000])]
    pub budgets: Vec<usize>,
    /// Planted instances per cell.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Fraction of landmarks occluded per instance.
    #[arg(long, default_value_t = 0.3)]
    pub occlusion_rate: f64,
    /// Clutter detections per landmark.
    #[arg(long, default_value_t = 2)]
    pub clutter: usize,
    /// Detection position noise, in pixels.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    /// Give clutter the high confidences instead of the true detections.
    #[arg(long)]
    pub adversarial: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output table (TSV); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Align(a) => align(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Ablate(a) => ablate(a),
    }
}

fn parent_dir(file: &Path) -> PathBuf {
    file.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Consumes face boxes per image in order of appearance, so corpora with
/// several faces in one image pair the n-th annotation with the n-th box.
struct BoxQueue {
    by_image: HashMap<PathBuf, std::collections::VecDeque<FaceBox>>,
}

impl BoxQueue {
    fn load(path: &Path) -> Result<Self> {
        let mut by_image: HashMap<PathBuf, std::collections::VecDeque<FaceBox>> = HashMap::new();
        for r in load_face_boxes(path)? {
            by_image.entry(r.image).or_default().push_back(r.face);
        }
        Ok(BoxQueue { by_image })
    }

    fn next_for(&mut self, image: &Path) -> Option<FaceBox> {
        self.by_image.get_mut(image)?.pop_front()
    }
}

fn annotation_box(record: &AnnotationRecord) -> Result<FaceBox> {
    record.points.face_box(ANNOTATION_BOX_EXPAND).map_err(|_| {
        Error::InvalidParameter(format!(
            "annotation {} spans no area; supply --boxes",
            record.image.display()
        ))
    })
}

fn train(args: TrainArgs) -> Result<()> {
    let records = read_annotations(&args.annotations)?;
    if records.is_empty() {
        return Err(Error::EmptyInput("annotation file has no records"));
    }
    let images_root = args
        .images
        .clone()
        .unwrap_or_else(|| parent_dir(&args.annotations));
    let mut boxes = match &args.boxes {
        Some(p) => Some(BoxQueue::load(p)?),
        None => None,
    };

    // One training group per labeled mode, in id order.
    let mut groups: BTreeMap<ModeId, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let id = r.mode.unwrap_or(ModeId { pose: 0, expression: 0 });
        groups.entry(id).or_default().push(i);
    }
    let pose_count = groups.keys().map(|id| id.pose + 1).max().unwrap();

    let shape_cfg = ShapeTrainConfig {
        seed: args.seed,
        ..ShapeTrainConfig::default()
    };
    let boost_cfg = BoostConfig {
        rounds: args.rounds.unwrap_or(BoostConfig::default().rounds),
        ..BoostConfig::default()
    };
    let desc_cfg = DescriptorConfig::default();

    let mut image_cache: HashMap<PathBuf, GrayImageF> = HashMap::new();
    let mut modes = Vec::new();
    for (mode_index, (&id, members)) in groups.iter().enumerate() {
        let scheme = scheme_for_landmark_count(records[members[0]].points.len())?;
        let shapes: Vec<Shape> = members.iter().map(|&i| records[i].points.clone()).collect();
        let mut mode = train_mode_model(id, &scheme, &shapes, &shape_cfg)?;

        if !args.shape_only {
            let mut mode_images = Vec::with_capacity(members.len());
            let mut mode_boxes = Vec::with_capacity(members.len());
            for &i in members {
                let r = &records[i];
                let full = images_root.join(&r.image);
                if !image_cache.contains_key(&full) {
                    image_cache.insert(full.clone(), load_gray(&full)?);
                }
                mode_images.push(image_cache[&full].clone());
                let fb = match &mut boxes {
                    Some(q) => q.next_for(&r.image).ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "no face box left for {}",
                            r.image.display()
                        ))
                    })?,
                    None => annotation_box(r)?,
                };
                mode_boxes.push(fb);
            }
            mode.detectors = Some(crate::appearance::train_mode_detectors(
                &mode_images,
                &mode_boxes,
                &shapes,
                &desc_cfg,
                &boost_cfg,
                derive_seed(args.seed, mode_index as u64),
            )?);
            mode.box_calibration = Some(calibrate_box_placement(&shapes, &mode_boxes)?);
            eprintln!("trained detectors for mode {id} ({} faces)", members.len());
        }
        modes.push(mode);
    }

    let ensemble = ModelEnsemble::new(pose_count, modes)?;
    let snapshot = ConfigSnapshot {
        shape: shape_cfg,
        boost: boost_cfg,
        search: SearchConfig::default(),
        fit: crate::config::FitConfig {
            seed: args.seed,
            ..crate::config::FitConfig::default()
        },
    };
    save_model_file(&args.out, &ensemble, &snapshot)?;
    println!(
        "wrote {} ({} modes, {} faces)",
        args.out.display(),
        ensemble.modes.len(),
        records.len()
    );
    Ok(())
}

/// Picks the landmark layout for a corpus by its landmark count. Standard
/// frontal and half-profile markups are recognized; anything else trains
/// under the generic layout, which has no contour refinement.
fn scheme_for_landmark_count(n: usize) -> Result<crate::scheme::LandmarkScheme> {
    use crate::scheme::LandmarkScheme;
    match n {
        68 => Ok(LandmarkScheme::frontal_68()),
        40 => Ok(LandmarkScheme::profile_40()),
        10 => Ok(crate::eval::demo_scheme()),
        n if n >= 4 => Ok(LandmarkScheme::synthetic(n, 0)),
        n => Err(Error::InvalidParameter(format!(
            "{n}-landmark corpora are too small to align"
        ))),
    }
}

fn align(args: AlignArgs) -> Result<()> {
    let (ensemble, snapshot) = load_model_file(&args.model)?;
    let images_root = args
        .images
        .clone()
        .unwrap_or_else(|| parent_dir(&args.boxes));
    let faces = load_face_boxes(&args.boxes)?;

    let mut fit_cfg = snapshot.fit.clone();
    if let Some(s) = args.strategy {
        fit_cfg.strategy = s;
    }
    if let Some(m) = args.max_iter {
        fit_cfg.max_iter = m;
    }
    if let Some(s) = args.seed {
        fit_cfg.seed = s;
    }
    let search_cfg = snapshot.search.clone();

    let mut image_cache: HashMap<PathBuf, GrayImageF> = HashMap::new();
    let mut results = Vec::new();
    let mut failures = 0usize;
    for record in &faces {
        let full = images_root.join(&record.image);
        if !image_cache.contains_key(&full) {
            image_cache.insert(full.clone(), load_gray(&full)?);
        }
        let image = &image_cache[&full];
        match align_face(image, &record.face, &ensemble, &fit_cfg, &search_cfg) {
            Ok(outcome) => results.push(ResultRecord::from_outcome(&record.image, &outcome)),
            Err(Error::AlignmentFailed(why)) => {
                failures += 1;
                eprintln!("alignment failed for {}: {why}", record.image.display());
            }
            Err(e) => return Err(e),
        }
    }
    write_results_file(&args.out, &results)?;
    println!(
        "aligned {}/{} faces -> {}",
        results.len(),
        faces.len(),
        args.out.display()
    );
    if failures > 0 {
        eprintln!("{failures} faces failed to align");
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let annotations = read_annotations(&args.annotations)?;
    if annotations.is_empty() {
        return Err(Error::EmptyInput("annotation file has no records"));
    }
    let results = read_results_file(&args.results)?;
    let scheme = scheme_for_landmark_count(annotations[0].points.len())?;

    // Results are matched to annotations by image path, in order of
    // appearance per path so multi-face images pair up positionally.
    let mut by_image: HashMap<PathBuf, std::collections::VecDeque<&ResultRecord>> = HashMap::new();
    for r in &results {
        by_image.entry(r.image.clone()).or_default().push_back(r);
    }

    let mut errors = Vec::with_capacity(annotations.len());
    for ann in &annotations {
        let matched = by_image.get_mut(&ann.image).and_then(|q| q.pop_front());
        let e = match matched {
            // An absent or unusable result is an unbounded error: the face
            // was not aligned.
            None => f64::INFINITY,
            Some(r) => mnle(&r.points, &ann.points, &scheme, args.subset)?,
        };
        errors.push(e);
    }

    let report = EvalReport::from_errors(errors, args.subset, &default_thresholds());
    println!(
        "{} faces, subset {:?}: mean normalized error {:.4} over successes, failure rate {:.3}",
        annotations.len(),
        args.subset,
        report.mnle,
        report.failure_rate
    );
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
        println!("report -> {}", out.display());
    }
    if let Some(curve) = &args.curve {
        std::fs::write(curve, report.curve_tsv())?;
        println!("curve -> {}", curve.display());
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let ensemble = demo_ensemble(args.poses, args.expressions)?;
    let corpus = demo_corpus(&ensemble, args.per_mode, args.seed)?;
    corpus.write_to_dir(&args.out)?;
    println!(
        "rendered {} faces ({} modes x {}) -> {}",
        corpus.faces.len(),
        ensemble.modes.len(),
        args.per_mode,
        args.out.display()
    );
    Ok(())
}

fn ablate(args: AblateArgs) -> Result<()> {
    let ensemble = demo_ensemble(2, 2)?;
    let cfg = AblationConfig {
        strategies: args.strategies,
        budgets: args.budgets,
        instances: args.count,
        synth: SynthConfig {
            occlusion_rate: args.occlusion_rate,
            clutter: args.clutter,
            noise_sigma: args.noise,
            adversarial_confidence: args.adversarial,
            ..SynthConfig::default()
        },
        seed: args.seed,
        ..AblationConfig::default()
    };
    let rows = run_ablation(&ensemble, &cfg)?;
    let table = ablation_tsv(&rows);
    match &args.out {
        Some(out) => {
            std::fs::write(out, &table)?;
            println!("ablation table -> {}", out.display());
        }
        None => print!("{table}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_tree_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn strategy_lists_parse_from_comma_syntax() {
        let cli = Cli::try_parse_from([
            "rclm",
            "ablate",
            "--strategies",
            "uniform,greedy",
            "--budgets",
            "10,20",
            "--count",
            "3",
        ])
        .unwrap();
        match cli.command {
            Command::Ablate(a) => {
                assert_eq!(
                    a.strategies,
                    vec![SamplingStrategy::Uniform, SamplingStrategy::Greedy]
                );
                assert_eq!(a.budgets, vec![10, 20]);
                assert_eq!(a.count, 3);
            }
            other => panic!("wrong command {other:?}"),
        }
    }

    #[test]
    fn unknown_subset_is_rejected_at_parse_time() {
        assert!(Cli::try_parse_from([
            "rclm", "eval", "--results", "r", "--annotations", "a", "--subset", "outer"
        ])
        .is_err());
    }
}

//! Command-line surface for the pipeline: synthetic-scene generation,
//! lifting, frame construction, context rendering, single-question
//! answering, and the evaluation harness.
//!
//! Exit codes are a stable contract: 0 ok, 2 usage, 3 grounding, 4 expert
//! transport/protocol, 5 degenerate frame, 6 extraction, 1 other failures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use alloframe::consensus::ObjectState;
use alloframe::eval::{
    generate_for_scenes, run_eval, EvalScene, QuestionsFile, SceneQuestion,
};
use alloframe::geometry::{
    build_frame_with_hints, camera_frame, forward_from_constraint, CameraView, ReferenceFrame,
    Vec3,
};
use alloframe::grounding::{estimate_front_world, Orientation8, RelaxationTrace};
use alloframe::pipeline::{
    answer_question, lift_one_object, AnswerOptions, Experts, PipelineConfig, PipelineError,
};
use alloframe::prompting::{
    build_geometry_context, render_context, FrameKind, FrameSpec, FrontSource,
};
use alloframe::synth::{
    add_depth_noise, bundle::ManifestView, default_bounds, generate_scene, read_bundle,
    render_views, write_bundle, QuestionFamily,
};

#[derive(Parser)]
#[command(name = "alloframe", version, about = "Geometric spatial-QA pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene bundle with ground truth.
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long = "n-objects", default_value_t = 6)]
        n_objects: usize,
        #[arg(long, default_value_t = 6)]
        views: usize,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
        /// Additive Gaussian depth noise, sigma as a fraction of each
        /// pixel's depth.
        #[arg(long = "depth-noise", default_value_t = 0.0)]
        depth_noise: f64,
    },
    /// Ground and lift objects from a scene bundle into object states.
    Lift {
        #[arg(long)]
        scene: PathBuf,
        /// Comma-separated object descriptions.
        #[arg(long)]
        objects: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "use-gt-masks")]
        use_gt_masks: bool,
    },
    /// Build a reference frame from lifted states.
    Frame {
        #[arg(long)]
        states: PathBuf,
        #[arg(long = "ref")]
        reference: String,
        /// Forward axis toward this auxiliary object (external constraint).
        #[arg(long)]
        aux: Option<String>,
        /// View whose camera judged the orientation label.
        #[arg(long = "orient-view")]
        orient_view: Option<String>,
        /// 8-way facing label estimated for the reference object.
        #[arg(long = "orient-label")]
        orient_label: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the geometry context for lifted states in a frame.
    Context {
        #[arg(long)]
        states: PathBuf,
        /// A frame JSON path, or `camera:VIEW_ID` for the camera frame.
        #[arg(long)]
        frame: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        precision: usize,
    },
    /// Answer one question end to end, printing the answer and a trace.
    Answer {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Bypass key-object extraction (comma-separated names).
        #[arg(long)]
        objects: Option<String>,
        /// Camera view for the egocentric stream.
        #[arg(long)]
        view: Option<String>,
        #[arg(long = "use-gt-masks")]
        use_gt_masks: bool,
        #[arg(long = "use-gt-orientation")]
        use_gt_orientation: bool,
    },
    /// Evaluate over a directory of scene bundles.
    Eval {
        #[arg(long)]
        scenes: PathBuf,
        /// Pre-generated questions file; mutually exclusive with --generate.
        #[arg(long)]
        questions: Option<PathBuf>,
        /// Generate this many questions across the scenes.
        #[arg(long)]
        generate: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Families to generate, comma-separated; default all allocentric
        /// plus the camera family.
        #[arg(long)]
        families: Option<String>,
        #[arg(long = "use-gt-masks")]
        use_gt_masks: bool,
        #[arg(long = "use-gt-orientation")]
        use_gt_orientation: bool,
        /// Save the generated question set alongside the report.
        #[arg(long = "dump-questions")]
        dump_questions: Option<PathBuf>,
    },
}

/// Lifted states on disk: enough to rebuild frames and contexts without the
/// original bundle (views echoed, full clouds included).
#[derive(Serialize, Deserialize)]
struct StatesFile {
    schema_version: u32,
    views: Vec<ManifestView>,
    objects: Vec<StateEntry>,
}

#[derive(Serialize, Deserialize)]
struct StateEntry {
    name: String,
    centroid: [f64; 3],
    extent: [f64; 3],
    source_views: Vec<String>,
    points: Vec<[f64; 3]>,
    mask_areas: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    traces: BTreeMap<String, RelaxationTrace>,
}

impl StateEntry {
    fn to_state(&self) -> ObjectState {
        ObjectState {
            name: self.name.clone(),
            points: self.points.iter().map(|p| Vec3::from_array(*p)).collect(),
            centroid: Vec3::from_array(self.centroid),
            extent: Vec3::from_array(self.extent),
            source_views: self.source_views.clone(),
        }
    }
}

/// Frame on disk: origin plus rotation columns, validated before writing.
#[derive(Serialize, Deserialize)]
struct FrameFile {
    schema_version: u32,
    kind: FrameKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    front_source: Option<FrontSource>,
    origin: [f64; 3],
    right: [f64; 3],
    down: [f64; 3],
    front: [f64; 3],
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig, PipelineError> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => match std::env::var_os("ALLOFRAME_CONFIG") {
            Some(env_path) => PipelineConfig::load(Path::new(&env_path)),
            None => Ok(PipelineConfig::default()),
        },
    }
}

fn split_names(list: &str) -> Vec<String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| PipelineError::Io(format!("serializing {path:?}: {e}")))?;
    std::fs::write(path, text).map_err(|e| PipelineError::Io(format!("writing {path:?}: {e}")))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Usage(format!("cannot read {path:?}: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Usage(format!("malformed {path:?}: {e}")))
}

fn view_from_manifest(mv: &ManifestView) -> Result<CameraView, PipelineError> {
    Ok(CameraView {
        view_id: mv.id.clone(),
        width: mv.width,
        height: mv.height,
        intrinsics: mv.intrinsics(),
        pose: mv.pose()?,
        depth: Vec::new(),
    })
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Synth { seed, n_objects, views, out, force, depth_noise } => {
            let scene = generate_scene(seed, n_objects, views, default_bounds())
                .map_err(|e| PipelineError::Io(e.to_string()))?;
            let mut bundle = render_views(&scene);
            if depth_noise > 0.0 {
                add_depth_noise(&mut bundle, depth_noise, seed);
            }
            write_bundle(&bundle, &out, force)?;
            println!(
                "wrote scene bundle: {} objects, {} views -> {}",
                bundle.object_names.len(),
                bundle.views.len(),
                out.display()
            );
            Ok(())
        }

        Command::Lift { scene, objects, config, out, use_gt_masks } => {
            let config = load_config(&config)?;
            let experts = Experts::from_config(&config.experts)?;
            let bundle = read_bundle(&scene)?;
            let opts = AnswerOptions { use_gt_masks, ..AnswerOptions::default() };
            let names = split_names(&objects);
            if names.is_empty() {
                return Err(PipelineError::Usage("--objects lists no names".to_string()));
            }
            let mut entries = Vec::new();
            for name in &names {
                let lifted = lift_one_object(&bundle, name, &config, &experts, &opts)?;
                entries.push(StateEntry {
                    name: lifted.state.name.clone(),
                    centroid: lifted.state.centroid.to_array(),
                    extent: lifted.state.extent.to_array(),
                    source_views: lifted.state.source_views.clone(),
                    points: lifted.state.points.iter().map(|p| p.to_array()).collect(),
                    mask_areas: lifted.mask_areas,
                    traces: lifted.traces,
                });
            }
            let states = StatesFile {
                schema_version: 1,
                views: bundle.views.iter().map(ManifestView::from_view).collect(),
                objects: entries,
            };
            write_json(&out, &states)?;
            println!("lifted {} objects -> {}", names.len(), out.display());
            Ok(())
        }

        Command::Frame { states, reference, aux, orient_view, orient_label, out } => {
            let states: StatesFile = read_json(&states)?;
            let find = |name: &str| -> Result<&StateEntry, PipelineError> {
                states
                    .objects
                    .iter()
                    .find(|o| o.name == name)
                    .ok_or_else(|| PipelineError::Usage(format!("states file has no object {name:?}")))
            };
            let ref_entry = find(&reference)?;
            let origin = Vec3::from_array(ref_entry.centroid);

            let (front, front_source, hint_view_id) = match (&aux, &orient_label) {
                (Some(_), Some(_)) => {
                    return Err(PipelineError::Usage(
                        "--aux and --orient-label are mutually exclusive".to_string(),
                    ))
                }
                (Some(aux_name), None) => {
                    if *aux_name == reference {
                        return Err(PipelineError::DegenerateFrame {
                            stage: "frame",
                            source: alloframe::geometry::GeometryError::DegenerateFrame {
                                reason: "reference and auxiliary object coincide".to_string(),
                            },
                        });
                    }
                    let aux_entry = find(aux_name)?;
                    let front = forward_from_constraint(origin, Vec3::from_array(aux_entry.centroid))
                        .map_err(|source| PipelineError::DegenerateFrame { stage: "frame", source })?;
                    let first = states.views.first().ok_or_else(|| {
                        PipelineError::Usage("states file lists no views".to_string())
                    })?;
                    (front, FrontSource::Constraint { aux_object: aux_name.clone() }, first.id.clone())
                }
                (None, Some(label_text)) => {
                    let label = Orientation8::parse(label_text).ok_or_else(|| {
                        PipelineError::Usage(format!("unknown orientation label {label_text:?}"))
                    })?;
                    let view_id = orient_view.clone().ok_or_else(|| {
                        PipelineError::Usage("--orient-label needs --orient-view".to_string())
                    })?;
                    let mv = states.views.iter().find(|v| v.id == view_id).ok_or_else(|| {
                        PipelineError::Usage(format!("states file has no view {view_id:?}"))
                    })?;
                    let view = view_from_manifest(mv)?;
                    (estimate_front_world(&view, label), FrontSource::Intrinsic { view_id: view_id.clone() }, view_id)
                }
                (None, None) => {
                    return Err(PipelineError::Usage(
                        "pass --aux NAME or --orient-view ID --orient-label L".to_string(),
                    ))
                }
            };

            let mv = states
                .views
                .iter()
                .find(|v| v.id == hint_view_id)
                .ok_or_else(|| PipelineError::Usage(format!("no view {hint_view_id:?}")))?;
            let view = view_from_manifest(mv)?;
            let hints = [view.axis_in_world(Vec3::Y), view.axis_in_world(Vec3::Z)];
            let frame = build_frame_with_hints(origin, front, &hints)
                .map_err(|source| PipelineError::DegenerateFrame { stage: "frame", source })?;
            frame
                .validate()
                .map_err(|source| PipelineError::DegenerateFrame { stage: "frame", source })?;

            write_json(
                &out,
                &FrameFile {
                    schema_version: 1,
                    kind: FrameKind::Ego,
                    ref_object: Some(reference.clone()),
                    front_source: Some(front_source),
                    origin: frame.origin.to_array(),
                    right: frame.right().to_array(),
                    down: frame.down().to_array(),
                    front: frame.front().to_array(),
                },
            )?;
            println!("wrote frame for {reference:?} -> {}", out.display());
            Ok(())
        }

        Command::Context { states, frame, out, precision } => {
            let states: StatesFile = read_json(&states)?;
            let (reference_frame, spec) = if let Some(view_id) = frame.strip_prefix("camera:") {
                let mv = states.views.iter().find(|v| v.id == view_id).ok_or_else(|| {
                    PipelineError::Usage(format!("states file has no view {view_id:?}"))
                })?;
                (camera_frame(&view_from_manifest(mv)?), FrameSpec::camera())
            } else {
                let file: FrameFile = read_json(Path::new(&frame))?;
                let frame = ReferenceFrame {
                    origin: Vec3::from_array(file.origin),
                    rotation: alloframe::geometry::Mat3::from_cols(
                        Vec3::from_array(file.right),
                        Vec3::from_array(file.down),
                        Vec3::from_array(file.front),
                    ),
                };
                frame
                    .validate()
                    .map_err(|source| PipelineError::DegenerateFrame { stage: "context", source })?;
                let spec = FrameSpec {
                    kind: file.kind,
                    ref_object: file.ref_object,
                    front_source: file.front_source,
                };
                (frame, spec)
            };

            let owned: Vec<ObjectState> = states.objects.iter().map(StateEntry::to_state).collect();
            let refs: Vec<&ObjectState> = owned.iter().collect();
            let context = build_geometry_context(&refs, &reference_frame, &spec).map_err(|e| {
                PipelineError::Extraction { stage: "context", detail: e.to_string() }
            })?;
            let text = render_context(&context, precision)
                .map_err(|e| PipelineError::Io(e.to_string()))?;
            std::fs::write(&out, &text)
                .map_err(|e| PipelineError::Io(format!("writing {out:?}: {e}")))?;
            println!("wrote context ({} objects) -> {}", context.entries.len(), out.display());
            Ok(())
        }

        Command::Answer {
            scene,
            question,
            config,
            objects,
            view,
            use_gt_masks,
            use_gt_orientation,
        } => {
            let config = load_config(&config)?;
            let experts = Experts::from_config(&config.experts)?;
            let bundle = read_bundle(&scene)?;
            let opts = AnswerOptions {
                use_gt_masks,
                use_gt_orientation,
                view,
                objects_override: objects.as_deref().map(split_names),
            };
            let outcome = answer_question(&bundle, &question, &config, &experts, &opts)?;
            println!("{}", outcome.answer);
            let trace = serde_json::json!({
                "question": question,
                "route": outcome.route.as_str(),
                "answer": outcome.answer,
                "stages": outcome.trace.stages,
            });
            println!("{}", serde_json::to_string_pretty(&trace).expect("trace serializes"));
            Ok(())
        }

        Command::Eval {
            scenes,
            questions,
            generate,
            config,
            report,
            parallel,
            families,
            use_gt_masks,
            use_gt_orientation,
            dump_questions,
        } => {
            let config = load_config(&config)?;
            let experts = Experts::from_config(&config.experts)?;
            let opts = AnswerOptions {
                use_gt_masks,
                use_gt_orientation,
                ..AnswerOptions::default()
            };

            let mut scene_dirs: Vec<PathBuf> = std::fs::read_dir(&scenes)
                .map_err(|e| PipelineError::Usage(format!("cannot list {scenes:?}: {e}")))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.join("manifest.json").exists())
                .collect();
            scene_dirs.sort();
            if scene_dirs.is_empty() {
                return Err(PipelineError::Usage(format!(
                    "{scenes:?} contains no scene bundles"
                )));
            }
            let mut bundles: Vec<(String, alloframe::synth::SceneBundle)> = Vec::new();
            for dir in &scene_dirs {
                let name = dir
                    .file_name()
                    .map(|n| n.to_string_lossy().to_string())
                    .unwrap_or_else(|| dir.display().to_string());
                bundles.push((name, read_bundle(dir)?));
            }

            let eval_scenes: Vec<EvalScene> = match (&questions, generate) {
                (Some(_), Some(_)) | (None, None) => {
                    return Err(PipelineError::Usage(
                        "pass exactly one of --questions FILE or --generate N".to_string(),
                    ))
                }
                (Some(path), None) => {
                    let file: QuestionsFile = read_json(path)?;
                    bundles
                        .into_iter()
                        .map(|(name, bundle)| {
                            let questions = file
                                .questions
                                .iter()
                                .filter(|q| q.scene == name)
                                .map(|q| q.question.clone())
                                .collect();
                            EvalScene { name, bundle, questions }
                        })
                        .collect()
                }
                (None, Some(n)) => {
                    let family_list: Vec<QuestionFamily> = match &families {
                        None => QuestionFamily::ALL.to_vec(),
                        Some(list) => split_names(list)
                            .iter()
                            .map(|name| {
                                QuestionFamily::parse(name).ok_or_else(|| {
                                    PipelineError::Usage(format!("unknown family {name:?}"))
                                })
                            })
                            .collect::<Result<Vec<_>, _>>()?,
                    };
                    generate_for_scenes(&mut bundles, n, config.seed, &family_list)
                        .map_err(|e| PipelineError::Io(e.to_string()))?
                }
            };

            if let Some(path) = &dump_questions {
                let file = QuestionsFile {
                    questions: eval_scenes
                        .iter()
                        .flat_map(|s| {
                            s.questions.iter().map(|q| SceneQuestion {
                                scene: s.name.clone(),
                                question: q.clone(),
                            })
                        })
                        .collect(),
                };
                write_json(path, &file)?;
            }

            let result = run_eval(&eval_scenes, &config, &experts, &opts, parallel.max(1));
            for stats in &result.per_family {
                println!(
                    "{:<14} n={:<5} correct={:<5} accuracy={:.4}",
                    stats.family, stats.n, stats.correct, stats.accuracy
                );
            }
            if let Some(avg) = result.allocentric_avg {
                println!("allocentric avg: {avg:.4}");
            }
            if let Some(avg) = result.egocentric_avg {
                println!("egocentric avg:  {avg:.4}");
            }
            println!("overall: {:.4}", result.overall_accuracy());
            write_json(&report, &result)?;
            println!("wrote report -> {}", report.display());
            Ok(())
        }
    }
}

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use reach_core::capture::{
    calibrate_offset, detect_jumps, detect_jumps_track, detect_marker_swaps, order_sequences, sample_tasks,
    synchronize, transition_cost, BvhClip, Calibration, HeadsetTrack, JumpReport, JumpThresholds, MarkerFrame,
    MarkerSwap, QaReport, SequenceSpec, SyncConfig,
};
use reach_core::corpus::{self, generate_procedural, load_corpus, write_corpus, CorpusConfig};
use reach_core::geometry::{Skeleton, Vec3};
use reach_core::io::{self, Checkpoint};
use reach_core::metrics::{make_split, MetricReport, SequenceMetrics, SplitKind, SplitSpec};
use reach_core::pipeline::{evaluate_run, generate_run, select, train_run, RunConfig};
use reach_core::refiner::EpochLog;
use reach_core::scene::{SceneModel, SceneSpec};
use reach_core::{Error, Execution, Result};

use crate::{Command, Common, SplitChoice};

fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    path.as_deref().map(io::read_json).transpose().map(Option::unwrap_or_default)
}

/// The run configuration with `--seed` applied to training.
fn run_config(common: &Common) -> Result<RunConfig> {
    let mut run: RunConfig = load_config(&common.config)?;
    if let Some(s) = common.seed {
        run.train.seed = s;
    }
    Ok(run)
}

fn ignore_seed(common: &Common) {
    if common.seed.is_some() {
        log::debug!("this command is deterministic; --seed has no effect");
    }
}

fn print(value: &serde_json::Value) {
    println!("{value}");
}

/// `report.csv` -> `report.json`, `preds.bin` -> `preds.json`.
fn sibling_json(out: &Path) -> PathBuf {
    out.with_extension("json")
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    config_hash: String,
    corpus_manifest_sha256: String,
    split: SplitSpec,
}

fn read_split(path: &Path) -> Result<SplitSpec> {
    Ok(io::read_json::<SplitFile>(path)?.split)
}

fn manifest_sha(dir: &Path) -> Result<String> {
    Ok(io::sha256_hex(&io::read_bytes(&dir.join(corpus::MANIFEST_FILE))?))
}

/// Path of `file` relative to `dir` when it lies inside it.
fn inside(dir: &Path, file: &Path) -> Option<String> {
    let dir = dir.canonicalize().ok()?;
    let parent = file.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let full = parent.canonicalize().ok()?.join(file.file_name()?);
    full.strip_prefix(&dir).ok().map(|p| p.to_string_lossy().replace('\\', "/"))
}

pub fn run(command: Command, exec: Execution) -> Result<()> {
    match command {
        Command::GenCorpus { common } => {
            let mut cfg: CorpusConfig = load_config(&common.config)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let skel = Skeleton::body22();
            let c = generate_procedural(&cfg, &skel, exec)?;
            let m = write_corpus(&common.out, &c, &cfg, &skel)?;
            print(&json!({
                "sequences": m.sequence_count,
                "skipped": m.skipped,
                "scenes": m.scenes.len(),
                "config_hash": m.config_hash,
            }));
        }
        Command::Split { common, corpus: dir, kind, train_ratio, holdout_tasks } => {
            let kind = match &common.config {
                Some(p) => io::read_json::<SplitKind>(p)?,
                None => match kind {
                    SplitChoice::Random => SplitKind::Random { train_ratio },
                    SplitChoice::Task => SplitKind::Task { holdout_tasks },
                },
            };
            let seed = common.seed.unwrap_or(0);
            let c = load_corpus(&dir)?;
            let split = make_split(&c.sequences, kind, seed)?;
            let file = SplitFile {
                config_hash: io::config_hash(&(kind, seed)),
                corpus_manifest_sha256: manifest_sha(&dir)?,
                split,
            };
            io::write_json(&common.out, &file)?;
            if let Some(rel) = inside(&dir, &common.out) {
                let mut m = c.manifest;
                m.splits.retain(|r| r.path != rel);
                m.splits.push(corpus::file_ref(&dir, &rel)?);
                m.splits.sort_by(|a, b| a.path.cmp(&b.path));
                corpus::write_manifest(&dir, &m)?;
            }
            print(&json!({"train": file.split.train.len(), "test": file.split.test.len(), "config_hash": file.config_hash}));
        }
        Command::Train { common, corpus: dir, split, epochs } => {
            let mut run = run_config(&common)?;
            if let Some(e) = epochs {
                run.train.epochs = e;
            }
            let c = load_corpus(&dir)?;
            let split = split.as_deref().map(read_split).transpose()?;
            let r = train_run(&c, split.as_ref(), &run, exec)?;
            let bytes = r.checkpoint.to_bytes();
            io::atomic_write(&common.out, &bytes)?;
            let mut csv = format!("{}\n", EpochLog::CSV_HEADER);
            for e in &r.log {
                csv.push_str(&e.csv_row());
                csv.push('\n');
            }
            let log_path = common.out.with_extension("log.csv");
            io::atomic_write(&log_path, csv.as_bytes())?;
            let meta = json!({
                "config_hash": run.hash(),
                "checkpoint_sha256": io::sha256_hex(&bytes),
                "corpus_manifest_sha256": manifest_sha(&dir)?,
                "skeleton_hash": r.checkpoint.skeleton_hash,
                "epochs": run.train.epochs,
                "final_loss": r.log.last().map(|e| e.loss),
                "log": log_path.file_name().map(|n| n.to_string_lossy().into_owned()),
            });
            io::write_json(&sibling_json(&common.out), &meta)?;
            print(&meta);
        }
        Command::Generate { common, checkpoint, corpus: dir, split } => {
            let ck = Checkpoint::read(&checkpoint)?;
            if common.config.is_some() {
                if run_config(&common)?.hash() != ck.config_hash {
                    return Err(Error::HashMismatch("run configuration differs from the checkpoint's".into()));
                }
            }
            let c = load_corpus(&dir)?;
            let split = split.as_deref().map(read_split).transpose()?;
            let preds = generate_run(&ck, &c, split.as_ref().map(|s| s.test.as_slice()), exec)?;
            let bytes = io::encode_sequences(&preds);
            io::atomic_write(&common.out, &bytes)?;
            let meta = json!({
                "config_hash": ck.config_hash,
                "checkpoint_sha256": io::sha256_hex(&io::read_bytes(&checkpoint)?),
                "corpus_manifest_sha256": manifest_sha(&dir)?,
                "sequences_sha256": io::sha256_hex(&bytes),
                "count": preds.len(),
            });
            io::write_json(&sibling_json(&common.out), &meta)?;
            print(&meta);
        }
        Command::Evaluate { common, corpus: dir, predictions, checkpoint, split } => {
            ignore_seed(&common);
            let run: RunConfig = load_config(&common.config)?;
            run.thresholds.validate()?;
            let c = load_corpus(&dir)?;
            if let Some(p) = &checkpoint {
                let ck = Checkpoint::read(p)?;
                if ck.skeleton_hash != c.manifest.skeleton_hash {
                    return Err(Error::HashMismatch(format!(
                        "checkpoint skeleton {} vs corpus skeleton {}",
                        ck.skeleton_hash, c.manifest.skeleton_hash
                    )));
                }
            }
            let split = split.as_deref().map(read_split).transpose()?;
            let ids = split.as_ref().map(|s| s.test.as_slice());
            let preds = match &predictions {
                Some(p) => {
                    let all = io::read_sequences(p)?;
                    match ids {
                        Some(ids) => all.into_iter().filter(|s| ids.contains(&s.id)).collect(),
                        None => all,
                    }
                }
                None => select(&c.sequences, ids)?,
            };
            let ev = evaluate_run(&c, &preds, &run.eval_options(), exec)?;
            io::atomic_write(&common.out, ev.to_csv().as_bytes())?;
            #[derive(Serialize)]
            struct Report<'a> {
                config_hash: String,
                skeleton_hash: &'a str,
                summary: MetricReport,
                rows: &'a [SequenceMetrics],
            }
            let report = Report {
                config_hash: io::config_hash(&run.eval_options()),
                skeleton_hash: &c.manifest.skeleton_hash,
                summary: ev.summary,
                rows: &ev.rows,
            };
            io::write_json(&sibling_json(&common.out), &report)?;
            print(&serde_json::to_value(ev.summary)?);
        }
        Command::Qa { common, sequences, bvh, bvh_scale, markers } => {
            ignore_seed(&common);
            let th: JumpThresholds = load_config(&common.config)?;
            if sequences.is_none() && bvh.is_none() && markers.is_none() {
                return Err(Error::InvalidArgument("give at least one of --sequences, --bvh, --markers".into()));
            }
            #[derive(Serialize)]
            struct QaOut {
                config_hash: String,
                sequences: Vec<QaReport>,
                bvh: Option<JumpReport>,
                marker_swaps: Option<Vec<MarkerSwap>>,
            }
            let mut out = QaOut { config_hash: io::config_hash(&th), sequences: Vec::new(), bvh: None, marker_swaps: None };
            if let Some(p) = &sequences {
                let seqs = io::read_sequences(p)?;
                out.sequences = exec
                    .try_map(&seqs, |s| detect_jumps(s, &th).map(|j| QaReport::new(s.id, Vec::new(), j, &th)))?;
            }
            if let Some(p) = &bvh {
                let clip = BvhClip::parse(&io::read_text(p)?)?;
                out.bvh = Some(detect_jumps_track(&clip.to_joint_track(bvh_scale), &th)?);
            }
            if let Some(p) = &markers {
                let frames: Vec<MarkerFrame> = io::read_json(p)?;
                out.marker_swaps = Some(detect_marker_swaps(&frames)?);
            }
            io::write_json(&common.out, &out)?;
            let flagged = out.sequences.iter().filter(|r| !r.flags.is_empty()).count();
            print(&json!({
                "flagged_sequences": flagged,
                "bvh_flagged": out.bvh.map(|b| b.flagged),
                "marker_swaps": out.marker_swaps.as_ref().map(Vec::len),
            }));
        }
        Command::Sync { common, headset, mocap } => {
            ignore_seed(&common);
            let cfg: SyncConfig = load_config(&common.config)?;
            let track: HeadsetTrack = io::read_json(&headset)?;
            let head: Vec<Vec3> = io::read_json(&mocap)?;
            let r = synchronize(&head, &track, &cfg, exec)?;
            io::write_json(&common.out, &json!({"config_hash": io::config_hash(&cfg), "result": r}))?;
            print(&json!({"offset": r.offset, "peak_correlation": r.peak_correlation, "first_frame": r.first_frame}));
        }
        Command::Calibrate { common, input } => {
            ignore_seed(&common);
            if common.config.is_some() {
                log::debug!("calibrate has no configuration; --config ignored");
            }
            #[derive(Deserialize)]
            struct Instance {
                r_e: Vec3,
                r_ht: Vec3,
                f_h: Vec3,
            }
            #[derive(Serialize)]
            struct Solved {
                calibration: Option<Calibration>,
                residual: Option<f64>,
                error: Option<String>,
            }
            let instances: Vec<Instance> = io::read_json(&input)?;
            let solved: Vec<Solved> = instances
                .iter()
                .map(|i| match calibrate_offset(&i.r_e, &i.r_ht, &i.f_h) {
                    Ok(c) => Solved { residual: Some(c.residual(&i.r_e, &i.r_ht, &i.f_h)), calibration: Some(c), error: None },
                    Err(e) => Solved { calibration: None, residual: None, error: Some(e.to_string()) },
                })
                .collect();
            io::write_json(&common.out, &json!({"config_hash": io::config_hash(&()), "instances": solved}))?;
            let failed = solved.iter().filter(|s| s.error.is_some()).count();
            print(&json!({"solved": solved.len() - failed, "failed": failed}));
            if failed > 0 {
                return Err(Error::InvalidArgument(format!("{failed} calibration instance(s) are singular")));
            }
        }
        Command::SampleTasks { common, scene, per_pair, max_surface_dist } => {
            if common.config.is_some() {
                log::debug!("sample-tasks takes its settings from flags; --config ignored");
            }
            let seed = common.seed.unwrap_or(0);
            let text = io::read_text(&scene)?;
            let spec = SceneSpec::from_json(&text).map_err(|e| match e {
                Error::Json(j) => io::json_error(&text, j),
                other => other,
            })?;
            let model = SceneModel::new(spec)?;
            let sampling = sample_tasks(&model.spec().tasks, &model, per_pair, seed, max_surface_dist)?;
            let ordered: Vec<SequenceSpec> = order_sequences(&sampling.specs);
            let out = json!({
                "config_hash": io::config_hash(&(per_pair, max_surface_dist, seed)),
                "goal_attempts": sampling.goal_attempts,
                "goals_accepted": sampling.goals_accepted,
                "transition_cost_sampled": transition_cost(&sampling.specs),
                "transition_cost_ordered": transition_cost(&ordered),
                "specs": ordered,
            });
            io::write_json(&common.out, &out)?;
            print(&json!({"specs": sampling.specs.len(), "goal_attempts": sampling.goal_attempts}));
        }
    }
    Ok(())
}

//! The `segment`, `refine`, `run` and `eval` subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use eventscope::agent::{load_demonstrations, select_demonstrations, Demonstration, Task};
use eventscope::domain::{EventRegion, TimeRange};
use eventscope::eval::{
    eval_dvc, eval_qa, load_dvc_dataset, load_qa_dataset, token_f1, DvcEntry, DvcRecord, QaItem, QaPrediction,
};
use eventscope::media::{load_manifest, FrameManifest};
use eventscope::pipeline::{run_video, VideoRun};
use eventscope::providers::short_digest;
use eventscope::refine::{refine_event, RefineError, RefinementTrace};
use eventscope::segment::{segment_manifest, SegmentError};

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;
use crate::output::{to_json, write_atomic};

/// A region with its frame indices and seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionOut {
    pub begin: usize,
    pub end: usize,
    pub start_s: f64,
    pub end_s: f64,
}

impl RegionOut {
    fn new(manifest: &FrameManifest, r: EventRegion) -> Self {
        let t = manifest.time_range(&r).expect("regions come from this manifest");
        Self {
            begin: r.begin,
            end: r.end,
            start_s: t.start_s,
            end_s: t.end_s,
        }
    }

    pub fn region(&self) -> EventRegion {
        EventRegion {
            begin: self.begin,
            end: self.end,
        }
    }
}

fn regions_out(manifest: &FrameManifest, regions: &[EventRegion]) -> Vec<RegionOut> {
    regions.iter().map(|&r| RegionOut::new(manifest, r)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentState {
    pub stable: bool,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentVideo {
    pub video_id: String,
    pub regions: Vec<RegionOut>,
    pub s1: Vec<SegmentState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentOutput {
    pub config: serde_json::Value,
    pub videos: Vec<SegmentVideo>,
}

/// Manifest files from a mix of files and directories, sorted by video id.
pub fn collect_manifests(paths: &[PathBuf]) -> Result<Vec<FrameManifest>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::Data("no manifests given".into()));
    }
    let mut manifests = files
        .iter()
        .map(|f| load_manifest(f).map_err(|e| CliError::Data(format!("{}: {e}", f.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    manifests.sort_by(|a, b| a.video.video_id.cmp(&b.video.video_id));
    if let Some(w) = manifests
        .windows(2)
        .find(|w| w[0].video.video_id == w[1].video.video_id)
    {
        return Err(CliError::Data(format!(
            "duplicate manifest for video {}",
            w[0].video.video_id
        )));
    }
    Ok(manifests)
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency.videos)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn segment_error(e: SegmentError) -> CliError {
    match e {
        SegmentError::Provider(p) => CliError::Provider(p.to_string()),
        SegmentError::Config(c) => CliError::Config(c),
        other => CliError::Data(other.to_string()),
    }
}

pub fn cmd_segment(manifests: &[PathBuf], config: Option<&Path>, o: &Overrides) -> Result<String, CliError> {
    let cfg = RunConfig::resolve(config, o)?;
    let kit = cfg.toolkit()?;
    let manifests = collect_manifests(manifests)?;
    let s1 = cfg.pipeline().s1;
    let videos = pool(&cfg)?.install(|| {
        manifests
            .par_iter()
            .map(|m| {
                let states = segment_manifest(m, &kit, &s1).map_err(segment_error)?;
                let regions: Vec<EventRegion> = states.iter().map(|s| s.region).collect();
                Ok(SegmentVideo {
                    video_id: m.video.video_id.clone(),
                    regions: regions_out(m, &regions),
                    s1: states
                        .iter()
                        .map(|s| SegmentState {
                            stable: s.stable,
                            epochs_run: s.epochs_run,
                        })
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    Ok(to_json(&SegmentOutput {
        config: cfg.snapshot(),
        videos,
    }))
}

/// Regions given either as `segment` output or as a bare list.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RegionsFile {
    Segment(SegmentOutput),
    List(Vec<EventRegion>),
}

fn load_regions(path: &Path, video_id: &str) -> Result<Vec<EventRegion>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let parsed: RegionsFile =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    match parsed {
        RegionsFile::List(r) => Ok(r),
        RegionsFile::Segment(s) => s
            .videos
            .into_iter()
            .find(|v| v.video_id == video_id)
            .map(|v| v.regions.iter().map(RegionOut::region).collect())
            .ok_or_else(|| CliError::Data(format!("{}: no regions for video {video_id}", path.display()))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutput {
    pub config: serde_json::Value,
    pub video_id: String,
    pub instructions: Vec<String>,
    pub regions: Vec<RegionOut>,
    pub traces: Vec<RefinementTrace>,
}

fn refine_error(e: RefineError) -> CliError {
    match e {
        RefineError::Provider(p) => CliError::Provider(p.to_string()),
        RefineError::Config(c) => CliError::Config(c),
        other => CliError::Data(other.to_string()),
    }
}

/// Refine each region against its instruction line; one line applies to all regions.
pub fn cmd_refine(
    manifest: &Path,
    regions: &Path,
    instructions: &Path,
    config: Option<&Path>,
    o: &Overrides,
) -> Result<String, CliError> {
    let cfg = RunConfig::resolve(config, o)?;
    let kit = cfg.toolkit()?;
    let m = load_manifest(manifest).map_err(|e| CliError::Data(format!("{}: {e}", manifest.display())))?;
    let regions = load_regions(regions, &m.video.video_id)?;
    let text = std::fs::read_to_string(instructions)
        .map_err(|e| CliError::Data(format!("{}: {e}", instructions.display())))?;
    let lines: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    let instructions: Vec<String> = match (lines.len(), regions.len()) {
        (0, _) => return Err(CliError::Data(format!("{}: no instructions", instructions.display()))),
        (1, n) => vec![lines[0].clone(); n],
        (a, b) if a == b => lines,
        (a, b) => return Err(CliError::Data(format!("{a} instructions for {b} regions"))),
    };
    let s2 = cfg.pipeline().s2;
    let results = regions
        .par_iter()
        .zip(&instructions)
        .map(|(&r, l)| {
            let mut session = kit.session().for_video(&m.video);
            refine_event(&mut session, &m, r, l, &s2).map_err(refine_error)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (refined, traces): (Vec<EventRegion>, Vec<RefinementTrace>) = results.into_iter().unzip();
    Ok(to_json(&RefineOutput {
        config: cfg.snapshot(),
        video_id: m.video.video_id.clone(),
        instructions,
        regions: regions_out(&m, &refined),
        traces,
    }))
}

/// Ground-truth boundaries: a map from video id to `[start, end]` pairs in
/// seconds, or a DVC dataset file.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ProposalEntry {
    Spans(Vec<[f64; 2]>),
    Dataset(DvcEntry),
}

pub fn load_true_proposals(path: &Path) -> Result<BTreeMap<String, Vec<TimeRange>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let raw: BTreeMap<String, ProposalEntry> =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    raw.into_iter()
        .map(|(id, entry)| {
            let spans = match entry {
                ProposalEntry::Spans(s) => s,
                ProposalEntry::Dataset(d) => d.timestamps,
            };
            let ranges = spans
                .iter()
                .map(|&[s, e]| TimeRange::new(s, e).map_err(|err| CliError::Data(format!("{id}: {err}"))))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((id, ranges))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunVideoSummary {
    pub video_id: String,
    pub regions: Vec<RegionOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Responses {
    pub task: Task,
    pub run_id: String,
    pub config: serde_json::Value,
    pub videos: Vec<RunVideoSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub qa: Vec<QaPrediction>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub dvc: BTreeMap<String, Vec<DvcRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub run_id: String,
    pub config: serde_json::Value,
    pub run: VideoRun,
}

pub struct RunArgs<'a> {
    pub manifests: &'a [PathBuf],
    pub dataset: Option<&'a Path>,
    pub out_dir: &'a Path,
    pub true_proposals: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub overrides: &'a Overrides,
}

fn demonstrations(cfg: &RunConfig) -> Result<Vec<Demonstration>, CliError> {
    let Some(path) = &cfg.demos else {
        return Ok(Vec::new());
    };
    let all = load_demonstrations(path).map_err(|e| CliError::Config(e.to_string()))?;
    let p = cfg.pipeline();
    select_demonstrations(&all, p.task, p.agent.n_shots).map_err(|e| CliError::Config(e.to_string()))
}

fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(short_digest(&bytes))
}

/// Run the full pipeline. Writes `responses.json` and `traces/<video_id>.json`
/// under `out_dir` and returns the responses.
pub fn cmd_run(args: &RunArgs<'_>) -> Result<Responses, CliError> {
    let cfg = RunConfig::resolve(args.config, args.overrides)?;
    let pipeline = cfg.pipeline();
    let demos = demonstrations(&cfg)?;
    let kit = cfg.toolkit()?;
    let mut manifests = collect_manifests(args.manifests)?;

    let mut questions: BTreeMap<String, Vec<(String, QaItem)>> = BTreeMap::new();
    let mut dataset_digest = String::new();
    match (pipeline.task, args.dataset) {
        (Task::Qa, None) => return Err(CliError::Data("the qa task needs --dataset".into())),
        (Task::Qa, Some(path)) => {
            let ds = load_qa_dataset(path).map_err(|e| CliError::Data(e.to_string()))?;
            for (id, item) in ds.items {
                questions.entry(item.video_id.clone()).or_default().push((id, item));
            }
            dataset_digest = file_digest(path)?;
        }
        (Task::Dvc, Some(path)) => {
            let ds = load_dvc_dataset(path).map_err(|e| CliError::Data(e.to_string()))?;
            let wanted: Vec<&str> = ds.iter().map(|d| d.video_id.as_str()).collect();
            manifests.retain(|m| wanted.contains(&m.video.video_id.as_str()));
            dataset_digest = file_digest(path)?;
        }
        (Task::Dvc, None) => {}
    }
    if pipeline.task == Task::Qa {
        if let Some(v) = questions
            .keys()
            .find(|v| !manifests.iter().any(|m| &m.video.video_id == *v))
        {
            return Err(CliError::Data(format!("no manifest for dataset video {v}")));
        }
        manifests.retain(|m| questions.contains_key(&m.video.video_id));
    }
    if manifests.is_empty() {
        return Err(CliError::Data("no videos to run".into()));
    }

    let proposals = match args.true_proposals {
        Some(path) => {
            let spans = load_true_proposals(path)?;
            let mut by_video = BTreeMap::new();
            for m in &manifests {
                let ranges = spans.get(&m.video.video_id).ok_or_else(|| {
                    CliError::Data(format!(
                        "{}: no proposals for video {}",
                        path.display(),
                        m.video.video_id
                    ))
                })?;
                by_video.insert(
                    m.video.video_id.clone(),
                    ranges.iter().map(|r| m.region_for(r)).collect::<Vec<_>>(),
                );
            }
            Some(by_video)
        }
        None => None,
    };

    let snapshot = cfg.snapshot();
    let mut id_input = serde_json::to_string(&snapshot).expect("snapshot serializes");
    id_input.push_str(&dataset_digest);
    for m in &manifests {
        id_input.push_str(&short_digest(m.to_json().as_bytes()));
    }
    if let Some(p) = args.true_proposals {
        id_input.push_str(&file_digest(p)?);
    }
    let run_id = short_digest(id_input.as_bytes());

    let no_questions = Vec::new();
    let runs = pool(&cfg)?.install(|| {
        manifests
            .par_iter()
            .map(|m| {
                let id = &m.video.video_id;
                let given = proposals.as_ref().map(|p| p[id].as_slice());
                let qs = questions.get(id).unwrap_or(&no_questions);
                run_video(&kit, m, given, qs, &pipeline, &demos).map_err(CliError::from)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut responses = Responses {
        task: pipeline.task,
        run_id: run_id.clone(),
        config: snapshot.clone(),
        videos: Vec::new(),
        qa: Vec::new(),
        dvc: BTreeMap::new(),
    };
    for (m, run) in manifests.iter().zip(&runs) {
        responses.videos.push(RunVideoSummary {
            video_id: run.video_id.clone(),
            regions: regions_out(m, &run.regions()),
        });
        responses.qa.extend(run.qa.iter().map(|q| q.prediction(&run.video_id)));
        if pipeline.task == Task::Dvc {
            responses.dvc.insert(run.video_id.clone(), run.dvc.clone());
        }
    }

    let traces = args.out_dir.join("traces");
    for run in runs {
        let file = TraceFile {
            run_id: run_id.clone(),
            config: snapshot.clone(),
            run,
        };
        write_atomic(&traces.join(format!("{}.json", file.run.video_id)), &to_json(&file))?;
    }
    write_atomic(&args.out_dir.join("responses.json"), &to_json(&responses))?;
    Ok(responses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub task: Task,
    pub run_id: String,
    pub config: serde_json::Value,
    pub report: serde_json::Value,
}

pub fn cmd_eval(responses: &Path, dataset: &Path) -> Result<String, CliError> {
    let text =
        std::fs::read_to_string(responses).map_err(|e| CliError::Data(format!("{}: {e}", responses.display())))?;
    let r: Responses =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", responses.display())))?;
    let report = match r.task {
        Task::Qa => {
            let ds = load_qa_dataset(dataset).map_err(|e| CliError::Data(e.to_string()))?;
            serde_json::to_value(eval_qa(&r.qa, &ds).map_err(|e| CliError::Data(e.to_string()))?)
        }
        Task::Dvc => {
            let ds = load_dvc_dataset(dataset).map_err(|e| CliError::Data(e.to_string()))?;
            serde_json::to_value(eval_dvc(&r.dvc, &ds, &token_f1).map_err(|e| CliError::Data(e.to_string()))?)
        }
    }
    .expect("reports serialize");
    Ok(to_json(&EvalOutput {
        task: r.task,
        run_id: r.run_id,
        config: r.config,
        report,
    }))
}

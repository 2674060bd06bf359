//! Small synthetic videos with known answers, shared by tests, the CLI's
//! bundled fixtures and the acceptance suite.

use std::collections::BTreeMap;

use crate::domain::{EmbeddingVec, EventRegion, VideoMeta};
use crate::eval::{CaptionedSpan, DvcItem, QaDataset, QaItem, QuestionType};
use crate::media::{sample_uniform, FrameManifest};
use crate::providers::stub::{
    CaptionStub, ImageStub, LlmRule, LlmStub, OieFallback, OieStub, SceneGraphStub, StubSpec, TextStub,
};
use crate::providers::{SceneEntity, SceneTriple};

pub const PEAKED_FRAMES: usize = 60;
pub const PEAKED_TRUTH: EventRegion = EventRegion { begin: 20, end: 40 };
pub const PEAKED_START: EventRegion = EventRegion { begin: 30, end: 50 };
const PEAKED_FALLOFF: f64 = 30.0;

pub fn video_meta(video_id: &str, frames: usize) -> VideoMeta {
    VideoMeta {
        video_id: video_id.to_string(),
        duration_s: frames.saturating_sub(1) as f64,
        fps_native: 30.0,
        width: 640,
        height: 360,
    }
}

/// `frames` frames sampled at 1 fps, without precomputed embeddings.
pub fn uniform_manifest(video_id: &str, frames: usize) -> FrameManifest {
    let video = video_meta(video_id, frames);
    let frames = sample_uniform(&video, 1.0).expect("synthetic video is valid");
    FrameManifest {
        video,
        sampling_fps: 1.0,
        frames,
    }
}

pub fn axis(dim: usize, i: usize) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

/// Consecutive blocks of identical frames, block `i` along axis `i`.
pub fn blocks_embeddings(lengths: &[usize]) -> Vec<EmbeddingVec> {
    lengths
        .iter()
        .enumerate()
        .flat_map(|(i, &len)| std::iter::repeat_n(axis(lengths.len(), i), len))
        .map(|v| EmbeddingVec::new(v).expect("axis vectors are finite"))
        .collect()
}

/// Block boundaries matching [`blocks_embeddings`].
pub fn blocks_regions(lengths: &[usize]) -> Vec<EventRegion> {
    let mut begin = 0;
    lengths
        .iter()
        .map(|&len| {
            let r = EventRegion {
                begin,
                end: begin + len - 1,
            };
            begin += len;
            r
        })
        .collect()
}

/// Frame `j` has cosine `s_j` to the unit x axis: 1 inside `truth`, then
/// falling linearly to 0 over 30 frames of distance.
pub fn peaked_similarity(j: usize, truth: EventRegion) -> f64 {
    let d = if j < truth.begin {
        truth.begin - j
    } else {
        j.saturating_sub(truth.end)
    };
    (1.0 - d as f64 / PEAKED_FALLOFF).max(0.0)
}

pub fn peaked_vector(j: usize, truth: EventRegion) -> Vec<f32> {
    let s = peaked_similarity(j, truth);
    vec![s as f32, (1.0 - s * s).max(0.0).sqrt() as f32]
}

pub fn peaked_embeddings(frames: usize, truth: EventRegion) -> Vec<EmbeddingVec> {
    (0..frames)
        .map(|j| EmbeddingVec::new(peaked_vector(j, truth)).expect("finite"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct PeakedWorld {
    pub manifest: FrameManifest,
    pub stubs: StubSpec,
    pub instruction: String,
    pub truth: EventRegion,
    pub start: EventRegion,
}

/// A 60-frame video whose keyframe/assertion similarity peaks over
/// [`PEAKED_TRUTH`], with an instruction that decomposes into five assertions.
pub fn peaked_world() -> PeakedWorld {
    peaked_world_with(PEAKED_FRAMES, PEAKED_TRUTH, PEAKED_START)
}

pub fn peaked_world_with(frames: usize, truth: EventRegion, start: EventRegion) -> PeakedWorld {
    similarity_world(frames, |j| peaked_vector(j, truth), truth, start)
}

/// Similarity rises linearly from the first frame to the last, so every move
/// to the right improves alignment. `truth` is the last `start`-sized window.
pub fn ramp_world(frames: usize, start: EventRegion) -> PeakedWorld {
    let truth = EventRegion {
        begin: frames - start.len(),
        end: frames - 1,
    };
    let vector = |j: usize| {
        let s = j as f64 / (frames - 1) as f64;
        vec![s as f32, (1.0 - s * s).max(0.0).sqrt() as f32]
    };
    similarity_world(frames, vector, truth, start)
}

fn similarity_world(
    frames: usize,
    vector: impl Fn(usize) -> Vec<f32>,
    truth: EventRegion,
    start: EventRegion,
) -> PeakedWorld {
    let manifest = uniform_manifest("peaked", frames);
    let instruction = "a person picks up a cup from the table".to_string();
    let tuples: Vec<Vec<String>> = [
        ["a person", "picks up", "a cup"],
        ["a person", "reaches", "the table"],
        ["the cup", "is on", "the table"],
        ["a person", "holds", "the cup"],
        ["a person", "stands near", "the table"],
    ]
    .iter()
    .map(|t| t.iter().map(|s| s.to_string()).collect())
    .collect();
    let mut table = BTreeMap::new();
    table.insert(instruction.clone(), tuples);
    let by_index = (0..frames).map(|j| (j, vector(j))).collect();
    let stubs = StubSpec {
        image: ImageStub::Lookup {
            by_source: BTreeMap::new(),
            by_index,
            default: None,
        },
        text: TextStub::Fixed { vector: vec![1.0, 0.0] },
        oie: OieStub::Scripted {
            table,
            fallback: OieFallback::Echo,
        },
        ..Default::default()
    };
    PeakedWorld {
        manifest,
        stubs,
        instruction,
        truth,
        start,
    }
}

pub const QA_FRAMES: usize = 30;
pub const QA_BLOCK_SPLIT: usize = 15;
pub const QA_GT_WIDTH: usize = 5;
pub const QA_MARKER_CAPTION: &str = "a person holds the cup";
pub const QA_INSTRUCTION: &str = "person holds cup";
const QA_OPTIONS: [&str; 4] = ["The cup", "The phone", "The book", "The towel"];

fn triple(subject: &str, predicate: &str, object: &str, confidence: f64) -> SceneTriple {
    SceneTriple {
        subject: SceneEntity {
            label: subject.into(),
            bbox: [10.0, 20.0, 200.0, 340.0],
        },
        predicate: predicate.into(),
        object: SceneEntity {
            label: object.into(),
            bbox: [220.0, 100.0, 400.0, 300.0],
        },
        confidence,
    }
}

/// Triples shared by every synthetic frame: one above and one below the default threshold.
pub fn default_triples() -> Vec<SceneTriple> {
    vec![
        triple("person", "near", "table", 0.8),
        triple("light", "above", "table", 0.3),
    ]
}

#[derive(Debug, Clone)]
pub struct QaWorld {
    pub manifests: Vec<FrameManifest>,
    pub dataset: QaDataset,
    pub stubs: StubSpec,
    /// Planted ground-truth segment of each video.
    pub truth: Vec<EventRegion>,
}

/// `items` videos of 30 frames, one question each.
///
/// Frames `15..30` share one embedding, so a single centered event grows over
/// exactly that half and misses the answer. The ground truth is a 5-frame
/// segment in the first half whose frames carry the marker caption and align
/// with the instruction the scripted LLM proposes, with alignment fading
/// over 10 frames around it. The LLM answers correctly only when a marker
/// caption is in the prompt, and says "A" otherwise.
pub fn qa_world(items: usize) -> QaWorld {
    let reply_styles = ["(C)", "Answer: {L}", "{L}", "{L}. {T}", "{T}", "The answer is ({L})"];
    let mut manifests = Vec::with_capacity(items);
    let mut qa_items = Vec::with_capacity(items);
    let mut truth = Vec::with_capacity(items);
    let mut captions = BTreeMap::new();
    let mut rules = Vec::new();
    for k in 0..items {
        let video_id = format!("qa{k:02}");
        let g0 = (k * 3) % (QA_BLOCK_SPLIT - QA_GT_WIDTH + 1);
        let gt = EventRegion {
            begin: g0,
            end: g0 + QA_GT_WIDTH - 1,
        };
        let mut manifest = uniform_manifest(&video_id, QA_FRAMES);
        for f in &mut manifest.frames {
            let j = f.index;
            let v = if j >= QA_BLOCK_SPLIT {
                vec![0.0, 1.0, 0.0]
            } else {
                let d = if j < gt.begin {
                    gt.begin - j
                } else {
                    j.saturating_sub(gt.end)
                };
                let w = (1.0 - d as f32 / 10.0).max(0.0);
                vec![1.0 - w, 0.0, w]
            };
            f.embedding = Some(v);
            if gt.contains_index(j) {
                captions.insert(f.source.clone(), QA_MARKER_CAPTION.to_string());
            } else if j < QA_BLOCK_SPLIT {
                captions.insert(f.source.clone(), "a person stands in a kitchen".to_string());
            }
        }
        let answer_index = k % QA_OPTIONS.len();
        let mut options: Vec<String> = QA_OPTIONS.iter().map(|s| s.to_string()).collect();
        options.swap(0, answer_index);
        let question = format!("Which object did the person pick up in clip {k}?");
        let letter = (b'A' + answer_index as u8) as char;
        let style = if answer_index == 2 {
            reply_styles[0]
        } else {
            reply_styles[1 + k % 5]
        };
        let reply = style
            .replace("{L}", &letter.to_string())
            .replace("{T}", &options[answer_index]);
        rules.push(LlmRule {
            contains: vec![format!("Question: {question}"), format!("Caption: {QA_MARKER_CAPTION}")],
            excludes: vec![],
            reply,
        });
        qa_items.push(QaItem {
            question_id: Some(format!("{video_id}-q0")),
            video_id,
            question,
            question_type: QuestionType::ALL[k % 4],
            options,
            answer_index,
        });
        manifests.push(manifest);
        truth.push(gt);
    }
    rules.push(LlmRule {
        contains: vec!["Question:".into()],
        excludes: vec![],
        reply: "A".into(),
    });
    rules.push(LlmRule {
        contains: vec!["Instruction:".into()],
        excludes: vec![],
        reply: format!("Instruction: {QA_INSTRUCTION}"),
    });
    let mut table = BTreeMap::new();
    table.insert(QA_INSTRUCTION.to_string(), vec![0.0, 0.0, 1.0]);
    let stubs = StubSpec {
        seed: 7,
        image: ImageStub::Hash { dim: 3 },
        text: TextStub::Lookup {
            table,
            default: None,
            hash_fallback_dim: Some(3),
        },
        caption: CaptionStub::Scripted {
            by_source: captions,
            by_index: BTreeMap::new(),
            default: Some("an empty hallway".into()),
        },
        scene_graph: SceneGraphStub::Fixed {
            triples: default_triples(),
        },
        oie: OieStub::Echo,
        llm: LlmStub::Scripted {
            by_hash: BTreeMap::new(),
            rules,
            default: Some("I am not sure.".into()),
            max_prompt_tokens: 4096,
        },
    };
    QaWorld {
        manifests,
        dataset: QaDataset::new(qa_items).expect("synthetic items are valid"),
        stubs,
        truth,
    }
}

pub const DVC_FRAMES: usize = 30;
const DVC_SCRIPTS: [[&str; 3]; 2] = [
    [
        "a man chops onions",
        "he fries the onions in a pan",
        "he serves the dish",
    ],
    [
        "a girl ties her shoes",
        "she runs along the beach",
        "she stretches by the water",
    ],
];

#[derive(Debug, Clone)]
pub struct DvcWorld {
    pub manifests: Vec<FrameManifest>,
    pub dataset: Vec<DvcItem>,
    pub stubs: StubSpec,
}

/// Two 30-frame videos of three 10-frame scenes. Each scene has its own
/// caption, and the scripted LLM repeats the caption it sees as the instruction.
pub fn dvc_world() -> DvcWorld {
    let lengths = [10, 10, 10];
    let blocks = blocks_regions(&lengths);
    let mut manifests = Vec::new();
    let mut dataset = Vec::new();
    let mut captions = BTreeMap::new();
    let mut rules = Vec::new();
    let mut table = BTreeMap::new();
    for (v, script) in DVC_SCRIPTS.iter().enumerate() {
        let video_id = format!("dvc{v:02}");
        let mut manifest = uniform_manifest(&video_id, DVC_FRAMES);
        let embeddings = blocks_embeddings(&lengths);
        for (f, e) in manifest.frames.iter_mut().zip(embeddings) {
            f.embedding = Some(e.into_values());
        }
        let mut references = Vec::new();
        for (b, region) in blocks.iter().enumerate() {
            for j in region.begin..=region.end {
                captions.insert(manifest.frames[j].source.clone(), script[b].to_string());
            }
            rules.push(LlmRule {
                contains: vec![format!("Caption: {}", script[b]), "Instruction:".into()],
                excludes: vec![],
                reply: script[b].to_string(),
            });
            table.insert(script[b].to_string(), axis(3, b));
            references.push(CaptionedSpan {
                range: manifest.time_range(region).expect("block fits"),
                caption: script[b].to_string(),
            });
        }
        dataset.push(DvcItem {
            video_id,
            duration: manifest.video.duration_s,
            references,
        });
        manifests.push(manifest);
    }
    // a single-tuple OIE keeps each caption as one assertion
    let oie_table = table
        .keys()
        .map(|k| (k.clone(), vec![vec![k.clone(), "happens".to_string()]]))
        .collect::<BTreeMap<_, _>>();
    let assertion_table = table.into_iter().map(|(k, v)| (format!("{k} happens"), v)).collect();
    let stubs = StubSpec {
        seed: 11,
        image: ImageStub::Hash { dim: 3 },
        text: TextStub::Lookup {
            table: assertion_table,
            default: None,
            hash_fallback_dim: Some(3),
        },
        caption: CaptionStub::Scripted {
            by_source: captions,
            by_index: BTreeMap::new(),
            default: None,
        },
        scene_graph: SceneGraphStub::Fixed {
            triples: default_triples(),
        },
        oie: OieStub::Scripted {
            table: oie_table,
            fallback: OieFallback::Echo,
        },
        llm: LlmStub::Scripted {
            by_hash: BTreeMap::new(),
            rules,
            default: Some("something happens".into()),
            max_prompt_tokens: 4096,
        },
    };
    DvcWorld {
        manifests,
        dataset,
        stubs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_regions_tile_the_video() {
        let r = blocks_regions(&[3, 5, 10]);
        assert_eq!(
            r,
            vec![
                EventRegion { begin: 0, end: 2 },
                EventRegion { begin: 3, end: 7 },
                EventRegion { begin: 8, end: 17 },
            ]
        );
        assert_eq!(blocks_embeddings(&[3, 5, 10]).len(), 18);
    }

    #[test]
    fn peaked_profile() {
        assert_eq!(peaked_similarity(30, PEAKED_TRUTH), 1.0);
        assert_eq!(peaked_similarity(50, PEAKED_TRUTH), 1.0 - 10.0 / 30.0);
        assert_eq!(peaked_similarity(5, PEAKED_TRUTH), 0.5);
        assert_eq!(peaked_similarity(59 + 40, PEAKED_TRUTH), 0.0);
        let v = peaked_vector(45, PEAKED_TRUTH);
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn stub_specs_survive_json() {
        for spec in [peaked_world().stubs, qa_world(3).stubs, dvc_world().stubs] {
            let text = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<StubSpec>(&text).unwrap(), spec);
        }
    }
}

//! Datasets and metrics for question answering and dense captioning.

mod answer;
mod soda;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::TimeRange;

pub use answer::{match_answer, normalize};
pub use soda::{soda_style_score, token_f1, CaptionedSpan, SodaScore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("reply matches no single option: {0:?}")]
    AmbiguousAnswer(String),
    #[error("prediction ids do not match dataset ids (missing {missing:?}, unexpected {unexpected:?})")]
    IdMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("{path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("invalid dataset: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QuestionType {
    Interaction,
    Sequence,
    Prediction,
    Feasibility,
}

impl QuestionType {
    pub const ALL: [QuestionType; 4] = [
        QuestionType::Interaction,
        QuestionType::Sequence,
        QuestionType::Prediction,
        QuestionType::Feasibility,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaItem {
    /// Optional explicit id; defaults to `<video_id>#<line>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    pub video_id: String,
    pub question: String,
    pub question_type: QuestionType,
    pub options: Vec<String>,
    pub answer_index: usize,
}

impl QaItem {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.question.trim().is_empty() {
            return Err(EvalError::Validation(format!("{}: empty question", self.video_id)));
        }
        if !(2..=26).contains(&self.options.len()) {
            return Err(EvalError::Validation(format!(
                "{}: need 2 to 26 options, got {}",
                self.video_id,
                self.options.len()
            )));
        }
        if self.answer_index >= self.options.len() {
            return Err(EvalError::Validation(format!(
                "{}: answer_index {} out of range for {} options",
                self.video_id,
                self.answer_index,
                self.options.len()
            )));
        }
        Ok(())
    }
}

/// A QA dataset with resolved, unique item ids.
#[derive(Debug, Clone, PartialEq)]
pub struct QaDataset {
    pub items: Vec<(String, QaItem)>,
}

impl QaDataset {
    pub fn new(items: Vec<QaItem>) -> Result<Self, EvalError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(items.len());
        for (line, item) in items.into_iter().enumerate() {
            item.validate()?;
            let id = item
                .question_id
                .clone()
                .unwrap_or_else(|| format!("{}#{}", item.video_id, line));
            if !seen.insert(id.clone()) {
                return Err(EvalError::Validation(format!("duplicate item id {id}")));
            }
            out.push((id, item));
        }
        Ok(Self { items: out })
    }

    pub fn parse_jsonl(text: &str, origin: &str) -> Result<Self, EvalError> {
        let items = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str::<QaItem>(l).map_err(|e| EvalError::Parse {
                    path: format!("{origin}:{}", n + 1),
                    detail: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(items)
    }

    pub fn to_jsonl(&self) -> String {
        self.items
            .iter()
            .map(|(_, i)| serde_json::to_string(i).expect("qa item serializes") + "\n")
            .collect()
    }
}

pub fn load_qa_dataset(path: impl AsRef<Path>) -> Result<QaDataset, EvalError> {
    let path = path.as_ref();
    let text = read(path)?;
    QaDataset::parse_jsonl(&text, &path.display().to_string())
}

fn read(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|e| EvalError::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// One video of an ActivityNet-Captions style file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DvcEntry {
    pub duration: f64,
    pub timestamps: Vec<[f64; 2]>,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvcItem {
    pub video_id: String,
    pub duration: f64,
    pub references: Vec<CaptionedSpan>,
}

impl DvcItem {
    fn from_entry(video_id: &str, e: &DvcEntry) -> Result<Self, EvalError> {
        let bad = |d: String| EvalError::Validation(format!("{video_id}: {d}"));
        if !(e.duration.is_finite() && e.duration > 0.0) {
            return Err(bad(format!("duration must be > 0, got {}", e.duration)));
        }
        if e.timestamps.is_empty() {
            return Err(bad("no references".into()));
        }
        if e.timestamps.len() != e.sentences.len() {
            return Err(bad(format!(
                "{} timestamps but {} sentences",
                e.timestamps.len(),
                e.sentences.len()
            )));
        }
        let references = e
            .timestamps
            .iter()
            .zip(&e.sentences)
            .map(|(&[s, t], sentence)| {
                let range = TimeRange::new(s, t).map_err(|err| bad(err.to_string()))?;
                if range.end_s > e.duration + 1e-6 {
                    return Err(bad(format!("range [{s}, {t}] exceeds duration {}", e.duration)));
                }
                Ok(CaptionedSpan {
                    range,
                    caption: sentence.clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            video_id: video_id.to_string(),
            duration: e.duration,
            references,
        })
    }

    pub fn to_entry(&self) -> DvcEntry {
        DvcEntry {
            duration: self.duration,
            timestamps: self
                .references
                .iter()
                .map(|r| [r.range.start_s, r.range.end_s])
                .collect(),
            sentences: self.references.iter().map(|r| r.caption.clone()).collect(),
        }
    }
}

pub fn parse_dvc_dataset(text: &str, origin: &str) -> Result<Vec<DvcItem>, EvalError> {
    let raw: BTreeMap<String, DvcEntry> = serde_json::from_str(text).map_err(|e| EvalError::Parse {
        path: origin.to_string(),
        detail: e.to_string(),
    })?;
    raw.iter().map(|(id, e)| DvcItem::from_entry(id, e)).collect()
}

pub fn load_dvc_dataset(path: impl AsRef<Path>) -> Result<Vec<DvcItem>, EvalError> {
    let path = path.as_ref();
    parse_dvc_dataset(&read(path)?, &path.display().to_string())
}

pub fn dvc_to_json(items: &[DvcItem]) -> String {
    let map: BTreeMap<&str, DvcEntry> = items.iter().map(|i| (i.video_id.as_str(), i.to_entry())).collect();
    serde_json::to_string_pretty(&map).expect("dvc entries serialize")
}

/// A model answer for one QA item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPrediction {
    pub id: String,
    pub video_id: String,
    pub answer_index: Option<usize>,
    pub raw_text: String,
    #[serde(default)]
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeAccuracy {
    pub correct: usize,
    pub total: usize,
    /// Percent.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItemRecord {
    pub id: String,
    pub question_type: QuestionType,
    pub predicted: Option<usize>,
    pub answer_index: usize,
    pub correct: bool,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub per_type: BTreeMap<QuestionType, TypeAccuracy>,
    /// Unweighted mean over question types that have items.
    pub mean: f64,
    pub items: Vec<QaItemRecord>,
}

fn check_ids<'a>(expected: impl Iterator<Item = &'a str>, got: impl Iterator<Item = &'a str>) -> Result<(), EvalError> {
    let e: BTreeSet<&str> = expected.collect();
    let g: BTreeSet<&str> = got.collect();
    if e == g {
        return Ok(());
    }
    Err(EvalError::IdMismatch {
        missing: e.difference(&g).map(|s| s.to_string()).collect(),
        unexpected: g.difference(&e).map(|s| s.to_string()).collect(),
    })
}

pub fn eval_qa(predictions: &[QaPrediction], dataset: &QaDataset) -> Result<QaReport, EvalError> {
    check_ids(
        dataset.items.iter().map(|(id, _)| id.as_str()),
        predictions.iter().map(|p| p.id.as_str()),
    )?;
    if predictions.len() != dataset.items.len() {
        return Err(EvalError::Validation("duplicate prediction ids".into()));
    }
    let by_id: BTreeMap<&str, &QaPrediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut counts: BTreeMap<QuestionType, (usize, usize)> = BTreeMap::new();
    let mut items = Vec::with_capacity(dataset.items.len());
    for (id, item) in &dataset.items {
        let p = by_id[id.as_str()];
        let correct = !p.ambiguous && p.answer_index == Some(item.answer_index);
        let c = counts.entry(item.question_type).or_default();
        c.0 += usize::from(correct);
        c.1 += 1;
        items.push(QaItemRecord {
            id: id.clone(),
            question_type: item.question_type,
            predicted: p.answer_index,
            answer_index: item.answer_index,
            correct,
            ambiguous: p.ambiguous,
        });
    }
    let per_type: BTreeMap<QuestionType, TypeAccuracy> = counts
        .into_iter()
        .map(|(t, (correct, total))| {
            let accuracy = 100.0 * correct as f64 / total as f64;
            (
                t,
                TypeAccuracy {
                    correct,
                    total,
                    accuracy,
                },
            )
        })
        .collect();
    let mean = if per_type.is_empty() {
        0.0
    } else {
        per_type.values().map(|a| a.accuracy).sum::<f64>() / per_type.len() as f64
    };
    Ok(QaReport { per_type, mean, items })
}

/// Predicted captions for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvcRecord {
    pub start_s: f64,
    pub end_s: f64,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvcVideoScore {
    pub video_id: String,
    #[serde(flatten)]
    pub score: SodaScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvcReport {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    pub videos: Vec<DvcVideoScore>,
}

/// Mean per-video SODA-style scores. Videos without predictions score zero.
pub fn eval_dvc(
    predictions: &BTreeMap<String, Vec<DvcRecord>>,
    dataset: &[DvcItem],
    cap_score: &dyn Fn(&str, &str) -> f64,
) -> Result<DvcReport, EvalError> {
    let known: BTreeSet<&str> = dataset.iter().map(|d| d.video_id.as_str()).collect();
    let unexpected: Vec<String> = predictions
        .keys()
        .filter(|k| !known.contains(k.as_str()))
        .cloned()
        .collect();
    if !unexpected.is_empty() {
        return Err(EvalError::IdMismatch {
            missing: Vec::new(),
            unexpected,
        });
    }
    if dataset.is_empty() {
        return Err(EvalError::Validation("empty DVC dataset".into()));
    }
    let mut videos = Vec::with_capacity(dataset.len());
    for item in dataset {
        let preds = predictions
            .get(&item.video_id)
            .map(|v| {
                v.iter()
                    .map(|r| {
                        Ok(CaptionedSpan {
                            range: TimeRange::new(r.start_s, r.end_s)
                                .map_err(|e| EvalError::Validation(format!("{}: {e}", item.video_id)))?,
                            caption: r.caption.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>, EvalError>>()
            })
            .transpose()?
            .unwrap_or_default();
        videos.push(DvcVideoScore {
            video_id: item.video_id.clone(),
            score: soda_style_score(&preds, &item.references, cap_score),
        });
    }
    let n = videos.len() as f64;
    let mean = |f: fn(&SodaScore) -> f64| videos.iter().map(|v| f(&v.score)).sum::<f64>() / n;
    Ok(DvcReport {
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        f: mean(|s| s.f),
        videos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(video: &str, t: QuestionType, answer: usize) -> QaItem {
        QaItem {
            question_id: None,
            video_id: video.into(),
            question: "What happened?".into(),
            question_type: t,
            options: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            answer_index: answer,
        }
    }

    fn pred(id: &str, answer: Option<usize>) -> QaPrediction {
        QaPrediction {
            id: id.into(),
            video_id: id.split('#').next().unwrap().into(),
            answer_index: answer,
            raw_text: String::new(),
            ambiguous: answer.is_none(),
        }
    }

    #[test]
    fn qa_accuracy_by_type() {
        let ds = QaDataset::new(vec![
            item("v1", QuestionType::Interaction, 0),
            item("v2", QuestionType::Interaction, 1),
            item("v3", QuestionType::Sequence, 2),
            item("v4", QuestionType::Sequence, 3),
        ])
        .unwrap();
        let all = vec![
            pred("v1#0", Some(0)),
            pred("v2#1", Some(1)),
            pred("v3#2", Some(2)),
            pred("v4#3", Some(3)),
        ];
        let r = eval_qa(&all, &ds).unwrap();
        assert_eq!(r.mean, 100.0);
        assert_eq!(r.per_type.len(), 2);

        let half = vec![
            pred("v1#0", Some(0)),
            pred("v2#1", None),
            pred("v3#2", Some(2)),
            pred("v4#3", Some(3)),
        ];
        let r = eval_qa(&half, &ds).unwrap();
        assert_eq!(r.per_type[&QuestionType::Interaction].accuracy, 50.0);
        assert_eq!(r.per_type[&QuestionType::Sequence].accuracy, 100.0);
        // empty types are left out of the mean
        assert_eq!(r.mean, 75.0);

        let wrong_ids = vec![pred("v1#0", Some(0))];
        assert!(matches!(eval_qa(&wrong_ids, &ds), Err(EvalError::IdMismatch { .. })));
    }

    #[test]
    fn qa_jsonl_round_trip_and_validation() {
        let ds = QaDataset::new(vec![item("v1", QuestionType::Prediction, 2)]).unwrap();
        let back = QaDataset::parse_jsonl(&ds.to_jsonl(), "mem").unwrap();
        assert_eq!(back, ds);
        let bad = r#"{"video_id":"v","question":"q","question_type":"Sequence","options":["x","y"],"answer_index":2}"#;
        assert!(matches!(
            QaDataset::parse_jsonl(bad, "mem"),
            Err(EvalError::Validation(_))
        ));
        let unknown = r#"{"video_id":"v","question":"q","question_type":"Other","options":["x","y"],"answer_index":0}"#;
        assert!(matches!(
            QaDataset::parse_jsonl(unknown, "mem"),
            Err(EvalError::Parse { .. })
        ));
    }

    #[test]
    fn dvc_dataset_round_trip_and_validation() {
        let text =
            r#"{"v1": {"duration": 20.0, "timestamps": [[0, 5], [4, 12.5]], "sentences": ["a man runs", "he stops"]}}"#;
        let items = parse_dvc_dataset(text, "mem").unwrap();
        assert_eq!(items[0].references.len(), 2);
        assert_eq!(parse_dvc_dataset(&dvc_to_json(&items), "mem").unwrap(), items);
        let beyond = r#"{"v1": {"duration": 10.0, "timestamps": [[0, 12]], "sentences": ["x"]}}"#;
        assert!(matches!(
            parse_dvc_dataset(beyond, "mem"),
            Err(EvalError::Validation(_))
        ));
    }

    #[test]
    fn dvc_self_match_and_missing_video() {
        let text = r#"{"v1": {"duration": 20.0, "timestamps": [[0, 5]], "sentences": ["a man runs"]},
                       "v2": {"duration": 20.0, "timestamps": [[2, 6]], "sentences": ["a dog"]}}"#;
        let items = parse_dvc_dataset(text, "mem").unwrap();
        let mut preds = BTreeMap::new();
        preds.insert(
            "v1".to_string(),
            vec![DvcRecord {
                start_s: 0.0,
                end_s: 5.0,
                caption: "a man runs".into(),
            }],
        );
        let r = eval_dvc(&preds, &items, &token_f1).unwrap();
        assert_eq!(r.videos[0].score.f, 1.0);
        assert!(r.videos[1].score.empty_predictions);
        assert_eq!(r.f, 0.5);
        preds.insert("v9".into(), vec![]);
        assert!(matches!(
            eval_dvc(&preds, &items, &token_f1),
            Err(EvalError::IdMismatch { .. })
        ));
    }
}

//! Benchmark harness: JSONL sample loading, concurrent pipeline runs and
//! point-in-box scoring.

mod overlay;
mod report;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::backend::Backend;
use crate::geometry::{point_in_box, BoundingBox};
use crate::imageops::RasterImage;
use crate::pipeline::{self, GroundingConfig, GroundingResult, PipelineError};

pub use overlay::{emit_overlays, overlay_file_names};
pub use report::to_canonical_json;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}, field `{field}`: {message}")]
    InvalidField {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("line {line}: duplicate sample id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("overlay: {0}")]
    Overlay(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSample {
    pub id: String,
    /// Resolved against the dataset file's directory.
    pub image_path: PathBuf,
    pub instruction: String,
    pub gt_box: BoundingBox,
    pub tags: BTreeMap<String, String>,
}

fn field<'a>(
    obj: &'a serde_json::Map<String, Value>,
    line: usize,
    name: &'static str,
) -> Result<&'a Value, BenchError> {
    obj.get(name).ok_or(BenchError::InvalidField {
        line,
        field: name,
        message: "missing".into(),
    })
}

fn text_field(
    obj: &serde_json::Map<String, Value>,
    line: usize,
    name: &'static str,
) -> Result<String, BenchError> {
    let invalid = |message: &str| BenchError::InvalidField {
        line,
        field: name,
        message: message.into(),
    };
    let s = field(obj, line, name)?
        .as_str()
        .ok_or_else(|| invalid("expected a string"))?;
    if s.trim().is_empty() {
        return Err(invalid("must not be empty"));
    }
    Ok(s.to_string())
}

fn parse_sample(raw: &str, line: usize, base: &Path) -> Result<BenchmarkSample, BenchError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| BenchError::Malformed {
        line,
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(BenchError::Malformed {
            line,
            message: "expected a JSON object".into(),
        });
    };
    let id = text_field(&obj, line, "id")?;
    let image = text_field(&obj, line, "image")?;
    let instruction = text_field(&obj, line, "instruction")?;

    let bad_box = |message: String| BenchError::InvalidField {
        line,
        field: "gt_box",
        message,
    };
    let coords: Vec<f64> = field(&obj, line, "gt_box")?
        .as_array()
        .ok_or_else(|| bad_box("expected an array".into()))?
        .iter()
        .map(Value::as_f64)
        .collect::<Option<_>>()
        .ok_or_else(|| bad_box("expected numbers".into()))?;
    let [x1, y1, x2, y2] = coords[..] else {
        return Err(bad_box(format!("expected 4 numbers, got {}", coords.len())));
    };
    if x1 < 0.0 || y1 < 0.0 {
        return Err(bad_box(format!("negative corner ({x1}, {y1})")));
    }
    let gt_box = BoundingBox::new(x1, y1, x2, y2).map_err(|e| bad_box(e.to_string()))?;

    let tags = match obj.get("tags") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(Value::Object(m)) => m
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => Ok((k.clone(), s.clone())),
                _ => Err(BenchError::InvalidField {
                    line,
                    field: "tags",
                    message: format!("value for {k:?} must be a string"),
                }),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => {
            return Err(BenchError::InvalidField {
                line,
                field: "tags",
                message: "expected an object of strings".into(),
            })
        }
    };

    Ok(BenchmarkSample {
        id,
        image_path: base.join(image),
        instruction,
        gt_box,
        tags,
    })
}

/// Reads a JSONL dataset. Blank lines are skipped; image files are not
/// touched until the sample runs.
pub fn load_samples(path: &Path) -> Result<Vec<BenchmarkSample>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let sample = parse_sample(raw, line, base)?;
        if !seen.insert(sample.id.clone()) {
            return Err(BenchError::DuplicateId {
                line,
                id: sample.id,
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// One sample's pipeline run. Failures are kept as messages and scored as
/// misses.
#[derive(Debug, Clone)]
pub struct SampleRun {
    pub id: String,
    pub outcome: Result<GroundingResult, String>,
    pub wall_time_s: f64,
}

impl SampleRun {
    pub fn predicted_box(&self) -> Option<BoundingBox> {
        self.outcome.as_ref().ok().map(|r| r.predicted_box)
    }
}

pub fn run_sample<B: Backend + ?Sized>(
    backend: &B,
    sample: &BenchmarkSample,
    cfg: &GroundingConfig,
) -> SampleRun {
    let start = Instant::now();
    let outcome = RasterImage::open(&sample.image_path)
        .map_err(|e| format!("{}: {e}", sample.image_path.display()))
        .and_then(|image| {
            if !image.dims().frame().contains_box(&sample.gt_box) {
                return Err(format!(
                    "gt_box {} lies outside the {} image",
                    sample.gt_box,
                    image.dims()
                ));
            }
            pipeline::ground(backend, &image, &sample.instruction, cfg).map_err(|e| e.to_string())
        });
    SampleRun {
        id: sample.id.clone(),
        outcome,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

/// Runs every sample with at most `min(concurrency, capacity)` in flight and
/// returns the runs sorted by id. Configuration and capability problems
/// abort before any sample starts.
pub fn run_samples<B: Backend + ?Sized>(
    backend: &B,
    samples: &[BenchmarkSample],
    cfg: &GroundingConfig,
    concurrency: Option<usize>,
) -> Result<Vec<SampleRun>, BenchError> {
    cfg.validate()?;
    let caps = backend
        .capabilities()
        .map_err(|e| PipelineError::Capability(e.to_string()))?;
    cfg.check_capabilities(&caps)?;

    let workers = concurrency
        .unwrap_or(caps.concurrent_capacity)
        .min(caps.concurrent_capacity)
        .min(samples.len())
        .max(1);
    let next = AtomicUsize::new(0);
    let runs = Mutex::new(Vec::with_capacity(samples.len()));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(sample) = samples.get(i) else { break };
                let run = run_sample(backend, sample, cfg);
                runs.lock().unwrap_or_else(|e| e.into_inner()).push(run);
            });
        }
    });
    let mut runs = runs.into_inner().unwrap_or_else(|e| e.into_inner());
    runs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub id: String,
    /// `[x1, y1, x2, y2]` in original image pixels.
    pub predicted_box: Option<[f64; 4]>,
    pub centroid: Option<[f64; 2]>,
    pub hit: bool,
    /// Diagnostic only; never part of the headline accuracy.
    pub iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct HitCount {
    pub hits: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl HitCount {
    fn add(&mut self, hit: bool) {
        self.total += 1;
        self.hits += usize::from(hit);
        self.accuracy = self.hits as f64 / self.total as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub total: usize,
    pub hits: usize,
    pub accuracy: f64,
    /// `"hits/total"`, exact.
    pub accuracy_fraction: String,
    /// tag key -> tag value -> counts.
    pub per_tag: BTreeMap<String, BTreeMap<String, HitCount>>,
    /// Sorted by id.
    pub samples: Vec<SampleRecord>,
}

/// Per-sample evidence handed to [`evaluate_with`].
#[derive(Debug, Clone, Default)]
pub struct Prediction {
    pub bbox: Option<BoundingBox>,
    pub diagnostics: Vec<String>,
    pub wall_time_s: Option<f64>,
}

/// Scores `predictions` against `samples`. A sample without a prediction
/// is a miss.
pub fn evaluate(
    predictions: &BTreeMap<String, BoundingBox>,
    samples: &[BenchmarkSample],
) -> EvalReport {
    evaluate_with(samples, |id| Prediction {
        bbox: predictions.get(id).copied(),
        ..Default::default()
    })
}

/// Scores pipeline runs; wall times are included only on request since they
/// make the report non-reproducible.
pub fn evaluate_runs(
    runs: &[SampleRun],
    samples: &[BenchmarkSample],
    include_timings: bool,
) -> EvalReport {
    let by_id: BTreeMap<&str, &SampleRun> = runs.iter().map(|r| (r.id.as_str(), r)).collect();
    evaluate_with(samples, |id| {
        let Some(run) = by_id.get(id) else {
            return Prediction::default();
        };
        let mut diagnostics = Vec::new();
        let bbox = match &run.outcome {
            Ok(result) => {
                let d = &result.diagnostics;
                if !d.probing_fallback_rounds.is_empty() {
                    diagnostics.push(format!(
                        "probing tokens not found in rounds {:?}",
                        d.probing_fallback_rounds
                    ));
                }
                if let Some(msg) = &d.parse_fallback {
                    diagnostics.push(format!("box taken from attention peak: {msg}"));
                }
                Some(result.predicted_box)
            }
            Err(msg) => {
                diagnostics.push(format!("error: {msg}"));
                None
            }
        };
        Prediction {
            bbox,
            diagnostics,
            wall_time_s: include_timings.then_some(run.wall_time_s),
        }
    })
}

pub fn evaluate_with<F>(samples: &[BenchmarkSample], mut predict: F) -> EvalReport
where
    F: FnMut(&str) -> Prediction,
{
    let mut ordered: Vec<&BenchmarkSample> = samples.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let mut overall = HitCount::default();
    let mut per_tag: BTreeMap<String, BTreeMap<String, HitCount>> = BTreeMap::new();
    let mut records = Vec::with_capacity(ordered.len());
    for sample in ordered {
        let Prediction {
            bbox,
            mut diagnostics,
            wall_time_s,
        } = predict(&sample.id);
        if bbox.is_none() && diagnostics.is_empty() {
            diagnostics.push("missing prediction".into());
        }
        let centroid = bbox.map(|b| b.centroid());
        let hit = centroid.is_some_and(|c| point_in_box(c, &sample.gt_box));
        overall.add(hit);
        for (k, v) in &sample.tags {
            per_tag
                .entry(k.clone())
                .or_default()
                .entry(v.clone())
                .or_default()
                .add(hit);
        }
        records.push(SampleRecord {
            id: sample.id.clone(),
            predicted_box: bbox.map(|b| b.to_array()),
            centroid: centroid.map(|c| [c.x, c.y]),
            hit,
            iou: bbox.map(|b| b.iou(&sample.gt_box)),
            wall_time_s,
            diagnostics,
        });
    }
    EvalReport {
        total: overall.total,
        hits: overall.hits,
        accuracy: overall.accuracy,
        accuracy_fraction: format!("{}/{}", overall.hits, overall.total),
        per_tag,
        samples: records,
    }
}

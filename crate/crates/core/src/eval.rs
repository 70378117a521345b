//! Attack success rate and evaluation reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{AttackError, FrameView, PatchLayer, RasterCache, TargetDraw};
use crate::oracle::{check_scores, Oracle, OracleError};
use crate::patchgen::{PatchError, PatchTheta};
use crate::rng::{self, tag};
use crate::scene::SceneSample;
use crate::transforms::{EotConfig, TransformError};

/// Detection threshold for both the clean gate and attack success.
pub const DETECTION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no confidences to aggregate")]
    NoConfidences,
    #[error("confidence {0} outside [0, 1]")]
    BadConfidence(f64),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<AttackError> for EvalError {
    fn from(e: AttackError) -> Self {
        match e {
            AttackError::Patch(e) => Self::Patch(e),
            AttackError::Transform(e) => Self::Transform(e),
        }
    }
}

/// Fraction of attacked confidences below the detection threshold.
pub fn asr(attacked: &[f64]) -> Result<f64, EvalError> {
    if attacked.is_empty() {
        return Err(EvalError::NoConfidences);
    }
    if let Some(&bad) = attacked.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(EvalError::BadConfidence(bad));
    }
    let evaded = attacked.iter().filter(|&&c| c < DETECTION_THRESHOLD).count();
    Ok(evaded as f64 / attacked.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub sample_id: String,
    pub box_index: usize,
    pub clean_conf: f64,
    pub attacked_conf: f64,
    /// `attacked_conf < 0.5`.
    pub success: bool,
}

impl TargetResult {
    pub fn clean_detected(&self) -> bool {
        self.clean_conf >= DETECTION_THRESHOLD
    }
}

/// Every ground-truth box appears in `per_target`; only boxes detected on
/// the clean frame count toward the rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_targets: usize,
    pub n_clean_detected: usize,
    pub n_successful: usize,
    /// `None` when nothing was detected cleanly.
    pub asr: Option<f64>,
    /// Mean of `clean_conf - attacked_conf` over clean detections.
    pub mean_confidence_drop: Option<f64>,
    pub per_target: Vec<TargetResult>,
}

impl EvalReport {
    pub fn from_targets(per_target: Vec<TargetResult>) -> Self {
        let detected: Vec<&TargetResult> = per_target.iter().filter(|t| t.clean_detected()).collect();
        let n_clean_detected = detected.len();
        let n_successful = detected.iter().filter(|t| t.success).count();
        let (asr, mean_confidence_drop) = if n_clean_detected == 0 {
            (None, None)
        } else {
            let n = n_clean_detected as f64;
            let drop = detected.iter().map(|t| t.clean_conf - t.attacked_conf).sum::<f64>() / n;
            (Some(n_successful as f64 / n), Some(drop))
        };
        Self {
            n_targets: per_target.len(),
            n_clean_detected,
            n_successful,
            asr,
            mean_confidence_drop,
            per_target,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,box_index,clean_conf,attacked_conf,success\n");
        for t in &self.per_target {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_field(&t.sample_id),
                t.box_index,
                t.clean_conf,
                t.attacked_conf,
                t.success
            );
        }
        out
    }

    /// Writes the JSON report to `json_path` and the per-target table next
    /// to it with a `.csv` extension. Returns the CSV path.
    pub fn write(&self, json_path: impl AsRef<Path>) -> Result<PathBuf, EvalError> {
        let json_path = json_path.as_ref();
        let csv_path = json_path.with_extension("csv");
        for (path, text) in [(json_path, self.to_json()), (csv_path.as_path(), self.to_csv())] {
            fs::write(path, text).map_err(|source| EvalError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
        Ok(csv_path)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Scores every ground-truth box without and with the patch. With `eot`,
/// each target gets one transform draw from the stream `(seed, i, b)`, and
/// the clean score is taken under that same draw so the patch is the only
/// difference between the two frames.
pub fn evaluate(
    theta: &PatchTheta,
    dataset: &[SceneSample],
    oracle: &(impl Oracle + ?Sized),
    eot: Option<&EotConfig>,
    anchor: f64,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if let Some(cfg) = eot {
        cfg.validate()?;
    }
    let rasters = RasterCache::build(theta, dataset.iter().flat_map(|s| &s.boxes))?;
    let per_sample = dataset
        .par_iter()
        .enumerate()
        .map(|(i, sample)| -> Result<Vec<TargetResult>, EvalError> {
            let (w, h) = (sample.image.width(), sample.image.height());
            let mut out = Vec::with_capacity(sample.boxes.len());
            for (b, target) in sample.boxes.iter().enumerate() {
                let mut rng = rng::stream(seed, &[tag::EVAL, i as u64, b as u64]);
                let draw = TargetDraw::sample(&mut rng, eot, target, w, h)?;
                let clean = FrameView::new(&sample.image, target, None, &draw);
                let clean_conf = oracle.score_source(&clean, &[draw.moved])?[0];
                let layer = PatchLayer::new(theta, &rasters, target, &draw, anchor)?;
                let attacked = FrameView::new(&sample.image, target, Some(&layer), &draw);
                let attacked_conf = oracle.score_source(&attacked, &[draw.moved])?[0];
                check_scores(&[clean_conf, attacked_conf])?;
                out.push(TargetResult {
                    sample_id: sample.id.clone(),
                    box_index: b,
                    clean_conf,
                    attacked_conf,
                    success: attacked_conf < DETECTION_THRESHOLD,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_targets(per_sample.into_iter().flatten().collect()))
}

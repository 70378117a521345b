//! Detector oracles: anything that maps `(image, boxes)` to one objectness
//! per box.

mod bridge;
mod toy;

pub use bridge::{BridgeEndpoint, BridgeOracle, BridgeRequest, BridgeResponse};
pub use toy::{
    logistic, ncc, procedural_template, toy_score, ToyDetectorConfig, ToyOracle, TEMPLATE_ASSET, TEMPLATE_H, TEMPLATE_W,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{materialize, BBox, GrayImage, ImageError, PixelSource};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("bridge transport failure: {0}")]
    Transport(String),
    #[error("bridge answered request {expected} with id {found}")]
    IdMismatch { expected: i64, found: i64 },
    #[error("bridge reported an error: {0}")]
    Remote(String),
    #[error("malformed bridge response: {0}")]
    Malformed(String),
    #[error("oracle returned {value} for box {index}, outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
}

impl OracleError {
    /// Whether repeating the query on a fresh connection may succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Self::Transport(_) | Self::IdMismatch { .. })
    }
}

/// One scored box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub objectness: f64,
    pub class_id: i64,
}

/// Black-box detector contract. Scores are in `[0, 1]`, one per box, in
/// request order, and identical inputs give identical scores.
pub trait Oracle: Sync {
    fn score(&self, image: &GrayImage, boxes: &[BBox]) -> Result<Vec<f64>, OracleError>;

    /// Scores a frame that is computed on demand. The default evaluates the
    /// whole frame first; oracles that only look at the boxes override it.
    fn score_source(&self, source: &dyn PixelSource, boxes: &[BBox]) -> Result<Vec<f64>, OracleError> {
        for b in boxes {
            source.check_box(b)?;
        }
        self.score(&materialize(source), boxes)
    }

    fn detect(&self, image: &GrayImage, boxes: &[BBox]) -> Result<Vec<Detection>, OracleError> {
        let scores = self.score(image, boxes)?;
        Ok(boxes
            .iter()
            .zip(scores)
            .map(|(&bbox, objectness)| Detection {
                bbox,
                objectness,
                class_id: 0,
            })
            .collect())
    }
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn score(&self, image: &GrayImage, boxes: &[BBox]) -> Result<Vec<f64>, OracleError> {
        (**self).score(image, boxes)
    }

    fn score_source(&self, source: &dyn PixelSource, boxes: &[BBox]) -> Result<Vec<f64>, OracleError> {
        (**self).score_source(source, boxes)
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn score(&self, image: &GrayImage, boxes: &[BBox]) -> Result<Vec<f64>, OracleError> {
        (**self).score(image, boxes)
    }

    fn score_source(&self, source: &dyn PixelSource, boxes: &[BBox]) -> Result<Vec<f64>, OracleError> {
        (**self).score_source(source, boxes)
    }
}

/// Rejects scores outside `[0, 1]` (NaN included).
pub fn check_scores(scores: &[f64]) -> Result<(), OracleError> {
    match scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
        Some(index) => Err(OracleError::OutOfRange {
            index,
            value: scores[index],
        }),
        None => Ok(()),
    }
}

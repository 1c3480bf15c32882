//! On-disk artifacts: NPY tensors, PNG images, RLE masks and JSON Lines records.
//!
//! Everything here is either pure or touches only the file handle it was given.

mod npy;
mod png;
mod records;
mod rle;

pub use npy::{read_tensor, write_tensor, TensorFile};
pub use png::{read_png, write_png};
pub use records::{read_jsonl, write_jsonl, AnnotationRecord};
pub use rle::{decode_rle, encode_rle, RleMask};

use crate::affinity::FeatureMap;
use crate::grid::Grid;
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("malformed NPY header: {0}")]
    MalformedHeader(String),
    #[error("unsupported dtype {0:?}, only '<f4' is accepted")]
    UnsupportedDtype(String),
    #[error("fortran-ordered payloads are not supported")]
    UnsupportedLayout,
    #[error("unsupported tensor rank {0}, expected 2 or 3")]
    UnsupportedRank(usize),
    #[error("payload truncated: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("shape implies {expected} elements but {actual} were given")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("RLE counts do not cover the mask area")]
    CountsOverflow,
    #[error("image codec: {0}")]
    Image(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TensorFile {
    pub fn from_grid<T: Scalar>(grid: &Grid<T>) -> Self {
        let data = grid
            .as_slice()
            .iter()
            .map(|v| v.to_f64_lossy() as f32)
            .collect();
        Self::new(vec![grid.height(), grid.width()], data).expect("grid shape is rank 2")
    }

    pub fn from_features<T: Scalar>(f: &FeatureMap<T>) -> Self {
        let data = f
            .as_slice()
            .iter()
            .map(|v| v.to_f64_lossy() as f32)
            .collect();
        Self::new(vec![f.channels(), f.height(), f.width()], data).expect("feature shape is rank 3")
    }

    pub fn to_grid<T: Scalar>(&self) -> Result<Grid<T>, TensorError> {
        match *self.shape() {
            [h, w] => Ok(Grid::from_vec(
                h,
                w,
                self.data().iter().map(|&v| T::lit(v as f64)).collect(),
            )
            .expect("validated element count")),
            _ => Err(TensorError::UnsupportedRank(self.shape().len())),
        }
    }

    pub fn to_features<T: Scalar>(&self) -> Result<FeatureMap<T>, TensorError> {
        match *self.shape() {
            [c, h, w] => Ok(FeatureMap::from_vec(
                c,
                h,
                w,
                self.data().iter().map(|&v| T::lit(v as f64)).collect(),
            )
            .expect("validated element count")),
            _ => Err(TensorError::UnsupportedRank(self.shape().len())),
        }
    }
}

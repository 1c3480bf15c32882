//! Class-agnostic instance pseudo-masks from dense patch features and depth.
//!
//! A semantic affinity graph over patches is optionally sharpened around depth
//! discontinuities, cut by normalized cuts, and each semantic cut is refined by a
//! min-cut on a 3D neighbour graph built from the depth map. Sweeping the graph
//! threshold yields a per-patch confidence; a dense CRF refines masks at pixel
//! resolution.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix it to `f64`.

pub mod affinity;
pub mod augment;
pub mod confidence;
pub mod grid;
pub mod localcut;
pub mod ncut;
pub mod pipeline;
pub mod refine;
pub mod scalar;
pub mod tensorio;

pub use affinity::{AffinityMatrix, ExponentCombine, FeatureMap, SpatialImportanceMap};
pub use augment::{CompositeImage, PseudoAnnotationSet, PseudoInstance};
pub use confidence::SpatialConfidenceMap;
pub use grid::{Grid, ImageRgb, Mask};
pub use localcut::{CapacityFn, CutResult, PointCloud, SpatialGraph};
pub use ncut::{Bipartition, EigenSolution};
pub use pipeline::{process_image, run_batch, PipelineConfig, PipelineError};
pub use scalar::Scalar;
pub use tensorio::{AnnotationRecord, RleMask, TensorFile};

pub type Features = FeatureMap<f64>;
pub type Affinity = AffinityMatrix<f64>;
pub type DepthMap = Grid<f64>;
pub type SoftMask = Grid<f64>;
pub type Image = ImageRgb<f64>;
pub type Eigen = EigenSolution<f64>;
pub type Cloud = PointCloud<f64>;
pub type ConfidenceMap = SpatialConfidenceMap<f64>;
pub type Annotations = PseudoAnnotationSet<f64>;

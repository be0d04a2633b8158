//! Saliency-guided mixup for 3D point clouds.
//!
//! The engine picks salient query points in two clouds, weights every point
//! with a Gaussian kernel centred on its cloud's query, and interpolates the
//! clouds point-by-point under an optimal bijective assignment. The result is
//! a continuous mixed shape together with a soft label.
//!
//! Module map:
//!
//! * [`pointcloud`]: geometric types, normalization, synthetic shapes,
//!   corruptions and the text file formats.
//! * [`assignment`]: exact, greedy and brute-force bijective matching.
//! * [`sampling`]: the seedable [`Rng`](sampling::Rng), saliency-driven query
//!   sampling and the symmetric Beta prior.
//! * [`mixup`]: the saliency-guided mix plus the PointMixup and RSMix baselines.
//! * [`saliency`]: saliency maps from files, a geometric heuristic, or model
//!   gradients.
//! * [`toymodel`]: a small max-pooled point classifier with hand-written
//!   backpropagation and a desk-scale training loop.
//! * [`manifest`]: dataset manifests tying clouds, labels and saliency together.

pub mod assignment;
pub mod error;
pub mod manifest;
pub mod mixup;
pub mod pointcloud;
pub mod saliency;
pub mod sampling;
pub mod toymodel;

pub use error::{Error, Result};
pub use pointcloud::{LabeledCloud, Point3, PointCloud, PointLabels, SaliencyMap, SoftLabel};
pub use sampling::Rng;

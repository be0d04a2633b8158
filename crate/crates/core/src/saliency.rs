//! Per-point saliency maps.
//!
//! Three sources: a sidecar file, a model-free geometric heuristic (distance
//! from the centroid) and the norm of the loss gradient with respect to each
//! point's coordinates under a [`TinyPointNet`].

use std::path::PathBuf;

use crate::pointcloud::{read_saliency, PointCloud, SaliencyMap, SoftLabel};
use crate::toymodel::TinyPointNet;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub enum SaliencyProvider {
    File(PathBuf),
    Heuristic,
    Model(TinyPointNet),
}

impl SaliencyProvider {
    /// Saliency for `cloud`; the label is only used by the model variant.
    pub fn compute(&self, cloud: &PointCloud, label: &SoftLabel) -> Result<SaliencyMap> {
        let map = match self {
            SaliencyProvider::File(path) => read_saliency(path)?,
            SaliencyProvider::Heuristic => heuristic_saliency(cloud),
            SaliencyProvider::Model(model) => gradient_saliency(model, cloud, label)?,
        };
        if map.len() != cloud.len() {
            return Err(Error::invalid(format!(
                "saliency has {} scores for {} points",
                map.len(),
                cloud.len()
            )));
        }
        Ok(map)
    }
}

/// `s_i = ‖∂ℓ/∂p_i‖` with ℓ the cross-entropy of the model against `label`.
pub fn gradient_saliency(model: &TinyPointNet, cloud: &PointCloud, label: &SoftLabel) -> Result<SaliencyMap> {
    let grads = model.loss_and_gradients(cloud, label)?;
    let scores: Vec<f64> = grads.inputs.iter().map(|g| g.norm()).collect();
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite input gradient at point {i}")));
    }
    SaliencyMap::new(scores)
}

/// Distance of every point from the centroid.
pub fn heuristic_saliency(cloud: &PointCloud) -> SaliencyMap {
    let c = cloud.centroid();
    SaliencyMap::new(cloud.points().iter().map(|p| p.distance(&c)).collect())
        .expect("distances are finite and non-negative")
}

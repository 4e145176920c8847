use rstar::RTree;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::maps::{NormalMap, SilhouetteMask};

/// Precision, recall and their harmonic mean at one distance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

/// Geometry and normal accuracy of one reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub chamfer: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub mae_deg: f64,
}

/// Euclidean distance from every point of `from` to its nearest neighbor in `to`.
pub fn nearest_distances(from: &[Vec3], to: &[Vec3]) -> Result<Vec<f64>> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::Metric("point sets must be non-empty".into()));
    }
    let tree = RTree::bulk_load(to.iter().map(|p| [p.x, p.y, p.z]).collect());
    Ok(from
        .iter()
        .map(|p| {
            let q = tree
                .nearest_neighbor(&[p.x, p.y, p.z])
                .expect("tree is non-empty");
            (p - Vec3::from(*q)).norm()
        })
        .collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Symmetric Chamfer distance: the average of both mean nearest-neighbor
/// distances.
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    Ok(0.5 * mean(&nearest_distances(a, b)?) + 0.5 * mean(&nearest_distances(b, a)?))
}

/// Fraction of `a` strictly closer than `tau` to `b` (precision), the same
/// for `b` against `a` (recall), and their harmonic mean.
pub fn fscore(a: &[Vec3], b: &[Vec3], tau: f64) -> Result<FScore> {
    if !(tau > 0.0) {
        return Err(Error::Metric(format!(
            "threshold must be positive, got {tau}"
        )));
    }
    let within = |d: Vec<f64>| d.iter().filter(|&&x| x < tau).count() as f64 / d.len() as f64;
    let precision = within(nearest_distances(a, b)?);
    let recall = within(nearest_distances(b, a)?);
    let fscore = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(FScore {
        precision,
        recall,
        fscore,
    })
}

/// Angle between two unit normals in degrees.
pub fn angle_deg(a: &Vec3, b: &Vec3) -> f64 {
    // atan2 stays accurate near 0° and 180°, where acos of the dot product does not
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

/// Per-pixel angular errors over pixels inside `mask` where both maps hold
/// a finite normal.
pub fn normal_errors(pred: &NormalMap, gt: &NormalMap, mask: &SilhouetteMask) -> Result<Vec<f64>> {
    if pred.dims() != gt.dims() || mask.dims() != gt.dims() {
        return Err(Error::ShapeMismatch(format!(
            "normal maps are {:?} and {:?}, mask is {:?}",
            pred.dims(),
            gt.dims(),
            mask.dims()
        )));
    }
    let finite = |n: &Option<Vec3>| n.filter(|v| v.iter().all(|c| c.is_finite()));
    Ok(pred
        .data()
        .iter()
        .zip(gt.data())
        .zip(mask.data())
        .filter_map(|((p, g), &m)| match (m, finite(p), finite(g)) {
            (true, Some(p), Some(g)) => Some(angle_deg(&p.normalize(), &g.normalize())),
            _ => None,
        })
        .collect())
}

/// Mean angular error in degrees; see [`normal_errors`] for which pixels count.
pub fn normal_mae(pred: &NormalMap, gt: &NormalMap, mask: &SilhouetteMask) -> Result<f64> {
    let errors = normal_errors(pred, gt, mask)?;
    if errors.is_empty() {
        return Err(Error::Metric(
            "no pixel has both a predicted and a reference normal".into(),
        ));
    }
    Ok(mean(&errors))
}

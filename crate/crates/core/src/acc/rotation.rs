//! Rotation normalisation of a gesture segment.
//!
//! The least-squares plane of the acceleration cloud is rotated onto the
//! x-y plane and the segment's reference vector onto +x. The reference
//! vector is the net in-plane acceleration between the first and last
//! inflection points of the motion along the dominant in-plane axis.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::AccStream;
use crate::error::{Error, Result};

pub const MIN_SEGMENT_LEN: usize = 16;
/// Second eigenvalue below this fraction of the first means no plane.
const RANK_TOLERANCE: f64 = 1e-10;
/// Mean in-plane acceleration, relative to the spread, below which the
/// reference falls back to the dominant axis.
const MEAN_CUE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalized {
    pub segment: AccStream,
    /// In-plane direction mapped to +x, in the original frame.
    pub reference_vector: [f64; 3],
    /// Proper rotation applied to every sample (row-major).
    pub rotation: [[f64; 3]; 3],
}

fn centered(points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let mean = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    points.iter().map(|p| p - mean).collect()
}

/// Eigenpairs of the scatter matrix sorted by decreasing eigenvalue.
fn principal_axes(points: &[Vector3<f64>]) -> ([f64; 3], [Vector3<f64>; 3]) {
    let scatter: Matrix3<f64> = points.iter().map(|p| p * p.transpose()).sum();
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    (
        order.map(|k| eig.eigenvalues[k].max(0.0)),
        order.map(|k| eig.eigenvectors.column(k).into_owned()),
    )
}

/// Plane normal oriented along the net angular momentum of the trajectory;
/// falls back to the skew of the out-of-plane residual.
fn oriented_normal(normal: Vector3<f64>, pts: &[Vector3<f64>]) -> Vector3<f64> {
    let momentum: Vector3<f64> = pts.windows(2).map(|w| w[0].cross(&w[1])).sum();
    let scale: f64 = pts.iter().map(|p| p.norm_squared()).sum::<f64>().max(1e-300);
    let along = normal.dot(&momentum);
    if along.abs() > 1e-9 * scale {
        return if along > 0.0 { normal } else { -normal };
    }
    let skew: f64 = pts.iter().map(|p| normal.dot(p).powi(3)).sum();
    if skew.abs() > 1e-12 * scale.powf(1.5) {
        return if skew > 0.0 { normal } else { -normal };
    }
    let k = normal.iamax();
    if normal[k] >= 0.0 {
        normal
    } else {
        -normal
    }
}

/// Indices where the second difference of `s` changes sign.
fn inflections(s: &[f64]) -> Vec<usize> {
    let d2: Vec<f64> = s.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect();
    let mut out = Vec::new();
    let mut last = 0.0f64;
    for (i, &v) in d2.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && v.signum() != last.signum() {
            out.push(i + 1);
        }
        last = v;
    }
    out
}

/// In-plane sum of the acceleration samples between the first and last
/// inflection point of the motion along the dominant axis. When that sum is
/// negligible the dominant axis is used, signed by the skew along it.
fn reference_direction(
    raw: &[Vector3<f64>],
    pts: &[Vector3<f64>],
    normal: &Vector3<f64>,
    dominant: &Vector3<f64>,
) -> Vector3<f64> {
    let in_plane = |v: Vector3<f64>| v - normal * normal.dot(&v);
    let s: Vec<f64> = pts.iter().map(|p| dominant.dot(p)).collect();
    let marks = inflections(&s);
    let span = match (marks.first(), marks.last()) {
        (Some(&a), Some(&b)) if b > a => a..b + 1,
        _ => 0..raw.len(),
    };
    let count = span.len() as f64;
    let net: Vector3<f64> = in_plane(raw[span].iter().sum());
    let spread = (pts.iter().map(|p| p.norm_squared()).sum::<f64>() / pts.len() as f64).sqrt();
    if net.norm() / count > MEAN_CUE * spread {
        return net;
    }
    let skew: f64 = s.iter().map(|v| v.powi(3)).sum();
    if skew < 0.0 {
        -dominant
    } else {
        *dominant
    }
}

pub fn rotation_normalize(segment: &AccStream) -> Result<Normalized> {
    let n = segment.len();
    if n < MIN_SEGMENT_LEN {
        return Err(Error::TooShort { needed: MIN_SEGMENT_LEN, got: n });
    }
    let points: Vec<Vector3<f64>> = segment.samples().iter().map(|s| Vector3::from(*s)).collect();
    let pts = centered(&points);
    let (values, axes) = principal_axes(&pts);
    if values[0] <= 1e-300 || values[1] <= RANK_TOLERANCE * values[0] {
        return Err(Error::NoDominantPlane);
    }
    let ez = oriented_normal(axes[2], &pts);
    let reference = reference_direction(&points, &pts, &ez, &axes[0]);
    let ex = (reference - ez * ez.dot(&reference)).normalize();
    let ey = ez.cross(&ex);
    let rotation = [
        [ex[0], ex[1], ex[2]],
        [ey[0], ey[1], ey[2]],
        [ez[0], ez[1], ez[2]],
    ];
    Ok(Normalized {
        segment: segment.transformed(&rotation)?,
        reference_vector: [reference[0], reference[1], reference[2]],
        rotation,
    })
}

//! Graph-Laplacian angle assignment from pairwise angular differences, and
//! least-squares reconstruction once every line has an angle.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::basis::{BasisSpec, HbCoefficients};
use crate::error::{Error, Result};
use crate::linalg::cg_real;
use crate::projection::{ProjectionDataset, Projector};

pub const DEFAULT_EPSILON: f64 = 20.0;
pub const DEFAULT_CUTOFF_DEG: f64 = 5.0;

const EIG_TOL: f64 = 1e-9;
const EIG_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub e: Array2<f64>,
    pub epsilon: f64,
    pub cutoff_deg: f64,
}

/// `E(i, j) = exp(-d_ij^2 / epsilon)` where `d_ij <= cutoff` (degrees), else 0.
pub fn weight_matrix(angle_diffs: &Array2<f64>, epsilon: f64, cutoff_deg: f64) -> Result<WeightMatrix> {
    let (n, n2) = angle_diffs.dim();
    if n != n2 {
        return Err(Error::InvalidArgument(format!("angle differences must be square, got {n}x{n2}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (angle_diffs[[i, j]], angle_diffs[[j, i]]);
            if a < 0.0 || (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "angle differences must be symmetric and nonnegative at ({i}, {j})"
                )));
            }
        }
    }
    let e = angle_diffs.mapv(|d| if d <= cutoff_deg { (-d * d / epsilon).exp() } else { 0.0 });
    Ok(WeightMatrix { e, epsilon, cutoff_deg })
}

/// Circular angular differences in degrees, in `[0, 180]`.
pub fn angle_differences(angles: &[f64]) -> Array2<f64> {
    let n = angles.len();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d = (angles[i] - angles[j]).rem_euclid(2.0 * PI);
            let d = d.min(2.0 * PI - d).to_degrees();
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

fn count_components(adj: &[Vec<(usize, f64)>]) -> usize {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for &(j, _) in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    components
}

/// Embed each line at `(psi_2(i), psi_3(i))`, the two leading non-trivial
/// eigenvectors of `D^{-1/2} E D^{-1/2}`, and return the polar angles.
pub fn laplacian_embed(w: &WeightMatrix) -> Result<Vec<f64>> {
    let n = w.e.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let adj: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| (0..n).filter(|&j| w.e[[i, j]] > 0.0).map(|j| (j, w.e[[i, j]])).collect())
        .collect();
    let components = count_components(&adj);
    if components > 1 {
        return Err(Error::Disconnected { components });
    }
    let deg: Vec<f64> = adj.iter().map(|r| r.iter().map(|(_, v)| v).sum()).collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let norm: Vec<Vec<(usize, f64)>> = adj
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().map(|&(j, v)| (j, v * inv_sqrt[i] * inv_sqrt[j])).collect())
        .collect();
    // (S + I) / 2 has spectrum in [0, 1] with the same eigenvectors
    let apply = |x: &Array1<f64>| -> Array1<f64> {
        Array1::from_shape_fn(n, |i| 0.5 * (x[i] + norm[i].iter().map(|&(j, v)| v * x[j]).sum::<f64>()))
    };
    let mut trivial = Array1::from_iter(deg.iter().map(|d| d.sqrt()));
    trivial /= trivial.dot(&trivial).sqrt();
    let mut found: Vec<Array1<f64>> = vec![trivial];
    for e in 0..2 {
        // deterministic start
        let mut x = Array1::from_shape_fn(n, |i| ((i as f64 + 1.0) * (1.7 + e as f64)).sin() + 0.01 * i as f64 / n as f64);
        let deflate = |x: &mut Array1<f64>, found: &[Array1<f64>]| {
            for f in found {
                let c = f.dot(x);
                x.scaled_add(-c, f);
            }
            let nx = x.dot(x).sqrt();
            if nx > 0.0 {
                *x /= nx;
            }
        };
        deflate(&mut x, &found);
        for _ in 0..EIG_MAX_ITER {
            let mut y = apply(&x);
            deflate(&mut y, &found);
            let diff = (&y - &x).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
            x = y;
            if diff < EIG_TOL {
                break;
            }
        }
        found.push(x);
    }
    Ok((0..n).map(|i| found[2][i].atan2(found[1][i]).rem_euclid(2.0 * PI)).collect())
}

/// Angles `2 pi r / L` assigned by the rank `r` of each line's estimate.
pub fn equispaced_assignment(estimates: &[f64]) -> Vec<f64> {
    let n = estimates.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| estimates[a].total_cmp(&estimates[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = 2.0 * PI * rank as f64 / n as f64;
    }
    out
}

/// Least squares `min_c sum_l |H_{theta_l} c - y_l|^2` by conjugate
/// gradients on the normal equations, with a ridge of `1e-8 trace(A) / dim`.
pub fn reconstruct_known_angles(spec: Arc<BasisSpec>, dataset: &ProjectionDataset, angles: &[f64]) -> Result<HbCoefficients> {
    if angles.len() != dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "{} angles for {} lines",
            angles.len(),
            dataset.len()
        )));
    }
    if spec.m() != dataset.m {
        return Err(Error::InvalidArgument(format!(
            "basis grid m = {} but dataset m = {}",
            spec.m(),
            dataset.m
        )));
    }
    let proj = Projector::new(spec.clone());
    let flat: Vec<f64> = (0..dataset.len()).flat_map(|i| dataset.line(i).iter().copied()).collect();
    let b = proj.templates_adjoint(&flat, angles);
    let ridge = 1e-8 * proj.normal_trace(angles) / spec.len() as f64;
    let x = cg_real(
        |v| {
            let mut out = proj.templates_adjoint(&proj.templates(v, angles), angles);
            for (o, vi) in out.iter_mut().zip(v) {
                *o += ridge * vi;
            }
            out
        },
        &b,
        1e-10,
        2000,
    );
    HbCoefficients::new(spec, x)
}

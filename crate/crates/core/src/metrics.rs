//! Reconstruction quality: PSNR, correlation, PMF distance and alignment
//! over the O(2) ambiguity.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::projection::AnglePmf;

const PSNR_CAP_DB: f64 = 200.0;

fn check_shape(a: &Image, b: &Image) -> Result<()> {
    if a.size() != b.size() {
        return Err(Error::InvalidArgument(format!(
            "image sizes differ: {} vs {}",
            a.size(),
            b.size()
        )));
    }
    Ok(())
}

/// `10 log10(peak^2 / MSE)` with `peak = max(ref)`, capped at 200 dB.
pub fn psnr(img: &Image, reference: &Image) -> Result<f64> {
    check_shape(img, reference)?;
    let peak = reference.max();
    if reference.data().iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("reference image is identically zero".into()));
    }
    let mse = img
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / img.data().len() as f64;
    let peak2 = peak * peak;
    if mse < peak2 * 1e-20 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak2 / mse).log10()).min(PSNR_CAP_DB))
}

/// Pearson correlation of the flattened images.
pub fn cc(img: &Image, reference: &Image) -> Result<f64> {
    check_shape(img, reference)?;
    pearson(img.data(), reference.data())
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InvalidArgument("correlation of a constant image".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Total-variation distance `||p - q||_1 / 2`.
pub fn d_tv(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "PMF lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Apply "reflect (optional), then rotate by `alpha`" to a PMF on `[0, 2 pi)`.
/// Reflection sends angle `theta` to `-theta`; rotation adds `alpha`.
/// Non-integer bin shifts are split linearly between neighbours.
pub fn transform_pmf(pmf: &AnglePmf, alpha: f64, reflect: bool) -> AnglePmf {
    let n = pmf.len();
    let mut out = vec![0.0; n];
    let shift = alpha / (2.0 * PI) * n as f64;
    for (j, &p) in pmf.probs().iter().enumerate() {
        let base = if reflect { (n - j) % n } else { j } as f64;
        let pos = (base + shift).rem_euclid(n as f64);
        let lo = pos.floor();
        let frac = pos - lo;
        let lo = lo as usize % n;
        out[lo] += p * (1.0 - frac);
        out[(lo + 1) % n] += p * frac;
    }
    AnglePmf::from_weights(&out, 2.0 * PI).expect("mass is preserved")
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub rotation_index: usize,
    pub reflected: bool,
    pub cc: f64,
    pub aligned_image: Image,
    pub aligned_pmf: Option<AnglePmf>,
}

/// Grid search over `n_rot` rotations and an optional reflection for the
/// transform `G` maximizing `cc(G img, ref)`. Ties go to the smallest
/// rotation index, unreflected first. The same `G` is applied to `pmf`.
pub fn align_o2(
    img: &Image,
    reference: &Image,
    pmf: Option<&AnglePmf>,
    n_rot: usize,
) -> Result<AlignmentResult> {
    check_shape(img, reference)?;
    if n_rot == 0 {
        return Err(Error::InvalidArgument("n_rot must be positive".into()));
    }
    let candidates: Vec<(bool, usize)> = [false, true]
        .iter()
        .flat_map(|&r| (0..n_rot).map(move |k| (r, k)))
        .collect();
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|&(r, k)| {
            let alpha = 2.0 * PI * k as f64 / n_rot as f64;
            let t = img.transform_o2(alpha, r);
            pearson(t.data(), reference.data()).unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    // candidates are ordered by (reflected, index) so the first maximum wins
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let (reflected, rotation_index) = candidates[best];
    let alpha = 2.0 * PI * rotation_index as f64 / n_rot as f64;
    Ok(AlignmentResult {
        rotation_index,
        reflected,
        cc: scores[best],
        aligned_image: img.transform_o2(alpha, reflected),
        aligned_pmf: pmf.map(|p| transform_pmf(p, alpha, reflected)),
    })
}

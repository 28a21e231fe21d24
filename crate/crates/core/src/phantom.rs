//! Synthetic test images. Edges are softened with a raised-cosine ramp so the
//! images are close to band-limited, and every image is zero outside 95% of
//! the unit ball, nonnegative and scaled to peak 1.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    SheppLike,
    Disks,
    Blobs,
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "shepp-like" => Ok(Self::SheppLike),
            "disks" => Ok(Self::Disks),
            "blobs" => Ok(Self::Blobs),
            other => Err(Error::InvalidArgument(format!("unknown phantom kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SheppLike => "shepp-like",
            Self::Disks => "disks",
            Self::Blobs => "blobs",
        })
    }
}

/// 1 inside, 0 outside, cosine ramp of width `w` centred on the boundary.
/// `d` is the signed distance (negative inside).
fn soft_step(d: f64, w: f64) -> f64 {
    if d <= -w / 2.0 {
        1.0
    } else if d >= w / 2.0 {
        0.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * d / w).sin())
    }
}

struct Ellipse {
    value: f64,
    a: f64,
    b: f64,
    x0: f64,
    y0: f64,
    phi: f64,
}

impl Ellipse {
    /// Approximate signed distance in units of the ball radius.
    fn inside(&self, x: f64, y: f64, w: f64) -> f64 {
        let (s, c) = self.phi.sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = (c * dx + s * dy) / self.a;
        let v = (-s * dx + c * dy) / self.b;
        let rho = (u * u + v * v).sqrt();
        // scale normalized radius back to a distance along the short axis
        soft_step((rho - 1.0) * self.a.min(self.b), w)
    }
}

fn shepp_ellipses() -> Vec<Ellipse> {
    let e = |value, a, b, x0, y0, deg: f64| Ellipse {
        value,
        a,
        b,
        x0,
        y0,
        phi: deg.to_radians(),
    };
    // modified Shepp-Logan, shifted off-centre to break its mirror symmetry
    vec![
        e(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
        e(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
        e(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
        e(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
        e(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
        e(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
        e(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
        e(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
        e(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
        e(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
        e(0.25, 0.12, 0.08, 0.35, -0.35, 30.0),
    ]
}

/// Deterministic phantom of the given kind on an `m x m` grid.
pub fn phantom(kind: PhantomKind, m: usize, seed: u64) -> Image {
    let radius = m as f64 / 2.0;
    let support = 0.95;
    // edge width in units of the ball radius: about 1.5 pixels
    let w = 3.0 / m as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field: Box<dyn Fn(f64, f64) -> f64> = match kind {
        PhantomKind::SheppLike => {
            let ell = shepp_ellipses();
            Box::new(move |x, y| ell.iter().map(|e| e.value * e.inside(x, y, w)).sum())
        }
        PhantomKind::Disks => {
            let mut disks = vec![(0.0, 0.0, 0.8, 0.3)];
            while disks.len() < 6 {
                let r = rng.gen_range(0.1..0.28);
                let rho = rng.gen_range(0.0..(0.78 - r));
                let ang = rng.gen_range(0.0..std::f64::consts::TAU);
                let value = rng.gen_range(0.3..0.7);
                disks.push((rho * ang.cos(), rho * ang.sin(), r, value));
            }
            Box::new(move |x, y| {
                disks
                    .iter()
                    .map(|&(x0, y0, r, v)| {
                        let d = ((x - x0).powi(2) + (y - y0).powi(2)).sqrt() - r;
                        v * soft_step(d, w)
                    })
                    .sum()
            })
        }
        PhantomKind::Blobs => {
            let blobs: Vec<(f64, f64, f64, f64)> = (0..6)
                .map(|_| {
                    let rho = rng.gen_range(0.0..0.55);
                    let ang = rng.gen_range(0.0..std::f64::consts::TAU);
                    (
                        rho * ang.cos(),
                        rho * ang.sin(),
                        rng.gen_range(0.08..0.2),
                        rng.gen_range(0.3..1.0),
                    )
                })
                .collect();
            Box::new(move |x, y| {
                let r = (x * x + y * y).sqrt();
                let window = soft_step(r - 0.85, 0.1);
                window
                    * blobs
                        .iter()
                        .map(|&(x0, y0, s, v)| {
                            v * (-((x - x0).powi(2) + (y - y0).powi(2)) / (2.0 * s * s)).exp()
                        })
                        .sum::<f64>()
            })
        }
    };
    let mut img = Image::from_fn(m, |x, y| {
        let (u, v) = (x / radius, y / radius);
        if u * u + v * v >= support * support {
            0.0
        } else {
            field(u, v).max(0.0)
        }
    });
    let peak = img.max();
    if peak > 0.0 {
        img.data_mut().iter_mut().for_each(|v| *v /= peak);
    }
    img
}

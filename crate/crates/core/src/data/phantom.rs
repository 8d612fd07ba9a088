//! Synthetic two-contrast phantoms sharing one geometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

#[derive(Clone, Debug)]
struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    angle: f64,
    /// Tissue parameter in `(0, 1]`, shared by both contrasts.
    tissue: f64,
}

/// Edge transition width in pixels.
const EDGE: f64 = 1.2;

fn membership(e: &Ellipse, y: f64, x: f64) -> f64 {
    let (s, c) = e.angle.sin_cos();
    let (dy, dx) = (y - e.cy, x - e.cx);
    let u = (c * dx + s * dy) / e.rx;
    let v = (-s * dx + c * dy) / e.ry;
    let r = (u * u + v * v).sqrt();
    // signed distance to the boundary, roughly in pixels
    let d = (1.0 - r) * e.rx.min(e.ry);
    1.0 / (1.0 + (-d / (EDGE / 4.0)).exp())
}

/// Label map in `[0, 1]` (0 is background) followed by a smooth bias field, both shared across contrasts.
pub struct Geometry {
    pub body: Tensor,
    pub tissue: Tensor,
    pub field: Tensor,
}

pub fn geometry(seed: u64, h: usize, w: usize) -> Geometry {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (h as f64, w as f64);
    let outer = Ellipse {
        cy: hf / 2.0 + rng.random_range(-0.03..0.03) * hf,
        cx: wf / 2.0 + rng.random_range(-0.03..0.03) * wf,
        ry: hf * rng.random_range(0.38..0.45),
        rx: wf * rng.random_range(0.32..0.42),
        angle: rng.random_range(-0.3..0.3),
        tissue: 0.35,
    };
    let n_inner = rng.random_range(6..11);
    let inner: Vec<Ellipse> = (0..n_inner)
        .map(|_| {
            let ry = outer.ry * rng.random_range(0.08..0.35);
            let rx = outer.rx * rng.random_range(0.08..0.35);
            let t: f64 = rng.random_range(0.0..0.6);
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Ellipse {
                cy: outer.cy + t * outer.ry * a.sin(),
                cx: outer.cx + t * outer.rx * a.cos(),
                ry,
                rx,
                angle: rng.random_range(0.0..std::f64::consts::PI),
                tissue: rng.random_range(0.1..1.0),
            }
        })
        .collect();
    let (fy, fx, fp) = (
        rng.random_range(0.5..1.5),
        rng.random_range(0.5..1.5),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let mut body = Tensor::zeros(&[h, w]);
    let mut tissue = Tensor::zeros(&[h, w]);
    let mut field = Tensor::zeros(&[h, w]);
    for y in 0..h {
        for x in 0..w {
            let (yf, xf) = (y as f64, x as f64);
            let b = membership(&outer, yf, xf);
            let mut t = outer.tissue;
            for e in &inner {
                let m = membership(e, yf, xf);
                t = t * (1.0 - m) + e.tissue * m;
            }
            body.set(&[y, x], b);
            tissue.set(&[y, x], t);
            let ph = std::f64::consts::TAU * (fy * yf / hf + fx * xf / wf) + fp;
            field.set(&[y, x], 1.0 + 0.08 * ph.sin());
        }
    }
    Geometry { body, tissue, field }
}

/// Renders the geometry through a tissue-to-intensity curve.
pub fn render(g: &Geometry, curve: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_fn(g.body.shape(), |i| g.body.get(i) * curve(g.tissue.get(i)) * g.field.get(i))
}

/// First contrast: intensity grows with the tissue parameter.
pub fn contrast_a(t: f64) -> f64 {
    0.15 + 0.85 * t
}

/// Second contrast: inverted and compressed.
pub fn contrast_b(t: f64) -> f64 {
    0.1 + 0.9 * (1.0 - t).powf(1.5)
}

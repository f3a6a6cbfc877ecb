//! Luminosity and contrast normalization of the green channel.
//!
//! Each in-mask pixel is z-scored against the mean and standard deviation of
//! the in-mask pixels of a square window around it, clamped to `±clip` and
//! mapped affinely to `[0, 1]`. Pixels outside the mask are set to 0.5.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Mask, ScalarField};
use crate::scalar::Real;

/// FOV diameter the default window radius refers to.
pub const REFERENCE_FOV_DIAMETER: f64 = 2000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub window_radius: usize,
    pub epsilon: f64,
    pub clip: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { window_radius: 50, epsilon: 1e-4, clip: 3.0 }
    }
}

impl PreprocessConfig {
    /// Default window radius rescaled from a ~2000 px FOV to `diameter`.
    pub fn for_fov_diameter(diameter: f64) -> Self {
        let r = (50.0 * diameter / REFERENCE_FOV_DIAMETER).round().max(1.0) as usize;
        Self { window_radius: r, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_radius < 1 {
            return Err(Error::config("window_radius must be >= 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be > 0"));
        }
        if !(self.clip > 0.0) {
            return Err(Error::config("clip must be > 0"));
        }
        Ok(())
    }
}

/// Summed-area tables over the masked pixels: count, sum and sum of squares.
struct Integrals {
    stride: usize,
    count: Vec<f64>,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integrals {
    fn build(values: &[f64], mask: &[bool], w: usize, h: usize) -> Self {
        let stride = w + 1;
        let len = stride * (h + 1);
        let (mut count, mut sum, mut sq) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        for y in 0..h {
            let (mut rc, mut rs, mut rq) = (0.0, 0.0, 0.0);
            for x in 0..w {
                let i = y * w + x;
                if mask[i] {
                    rc += 1.0;
                    rs += values[i];
                    rq += values[i] * values[i];
                }
                let o = (y + 1) * stride + x + 1;
                count[o] = count[o - stride] + rc;
                sum[o] = sum[o - stride] + rs;
                sq[o] = sq[o - stride] + rq;
            }
        }
        Self { stride, count, sum, sq }
    }

    /// Totals over the inclusive rectangle `[x0, x1] x [y0, y1]`.
    #[inline]
    fn rect(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> (f64, f64, f64) {
        let s = self.stride;
        let (a, b, c, d) = (y0 * s + x0, y0 * s + x1 + 1, (y1 + 1) * s + x0, (y1 + 1) * s + x1 + 1);
        let f = |t: &[f64]| t[d] - t[b] - t[c] + t[a];
        (f(&self.count), f(&self.sum), f(&self.sq))
    }
}

/// Produces the normalized image. The output carries `mask`.
pub fn normalize<T: Real>(green: &ScalarField<T>, mask: &Mask, cfg: &PreprocessConfig) -> Result<ScalarField<T>> {
    cfg.validate()?;
    let (w, h) = (green.width(), green.height());
    if mask.width() != w || mask.height() != h {
        return Err(Error::DimensionMismatch { expected: w * h, got: mask.width() * mask.height() });
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if 2 * cfg.window_radius >= w.min(h) {
        return Err(Error::config(format!(
            "window_radius {} must be below half the smaller image side ({})",
            cfg.window_radius,
            w.min(h)
        )));
    }
    let m = mask.as_slice();
    // Centering on the global mean keeps the sums of squares well conditioned.
    let raw: Vec<f64> = green.as_slice().iter().map(|v| v.as_f64()).collect();
    let (n, total) = raw.iter().zip(m).filter(|(_, &k)| k).fold((0.0, 0.0), |(n, s), (&v, _)| (n + 1.0, s + v));
    let shift = total / n;
    let centered: Vec<f64> = raw.iter().map(|v| v - shift).collect();
    let tables = Integrals::build(&centered, m, w, h);

    let r = cfg.window_radius;
    let (eps, clip) = (cfg.epsilon, cfg.clip);
    let mut out = vec![T::lit(0.5); w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
        for (x, o) in row.iter_mut().enumerate() {
            let i = y * w + x;
            if !m[i] {
                continue;
            }
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
            let (cnt, s, q) = tables.rect(x0, y0, x1, y1);
            let mean = s / cnt;
            let std = (q / cnt - mean * mean).max(0.0).sqrt();
            let z = ((centered[i] - mean) / std.max(eps)).clamp(-clip, clip);
            *o = T::lit((z + clip) / (2.0 * clip));
        }
    });
    ScalarField::new(w, h, out)?.with_mask(mask.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(r: usize) -> PreprocessConfig {
        PreprocessConfig { window_radius: r, ..Default::default() }
    }

    /// Direct window scan used as the reference for the integral-image path.
    fn brute(field: &ScalarField<f64>, mask: &Mask, c: &PreprocessConfig) -> Vec<f64> {
        let (w, h) = (field.width(), field.height());
        let r = c.window_radius as i64;
        let mut out = vec![0.5; w * h];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                if !mask.get(x as usize, y as usize) {
                    continue;
                }
                let mut vals = Vec::new();
                for yy in (y - r).max(0)..=(y + r).min(h as i64 - 1) {
                    for xx in (x - r).max(0)..=(x + r).min(w as i64 - 1) {
                        if mask.get(xx as usize, yy as usize) {
                            vals.push(field.get(xx as usize, yy as usize));
                        }
                    }
                }
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let z = ((field.get(x as usize, y as usize) - mean) / var.sqrt().max(c.epsilon)).clamp(-c.clip, c.clip);
                out[(y as usize) * w + x as usize] = (z + c.clip) / (2.0 * c.clip);
            }
        }
        out
    }

    #[test]
    fn constant_image_is_neutral() {
        let f = ScalarField::filled(20, 20, 0.37f64);
        let out = normalize(&f, &Mask::full(20, 20), &cfg(4)).unwrap();
        assert!(out.as_slice().iter().all(|v| (v - 0.5).abs() < 1e-9));
    }

    #[test]
    fn outside_mask_is_half_and_range_bounded() {
        let f = ScalarField::from_fn(24, 24, |x, y| ((x * 7 + y * 13) % 11) as f64 / 10.0);
        let mask = Mask::from_fn(24, 24, |x, _| x > 5);
        let out = normalize(&f, &mask, &cfg(3)).unwrap();
        for y in 0..24 {
            for x in 0..24 {
                let v = out.get(x, y);
                assert!((0.0..=1.0).contains(&v));
                if x <= 5 {
                    assert_eq!(v, 0.5);
                }
            }
        }
        let reference = brute(&f, &mask, &cfg(3));
        for (a, b) in out.as_slice().iter().zip(&reference) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn checkerboard_local_mean() {
        let f = ScalarField::from_fn(40, 40, |x, y| ((x + y) % 2) as f64);
        let out = normalize(&f, &Mask::full(40, 40), &cfg(8)).unwrap();
        for (cx, cy) in [(8usize, 8usize), (20, 20), (31, 12)] {
            let mut s = 0.0;
            let mut n = 0.0;
            for y in cy - 8..=cy + 8 {
                for x in cx - 8..=cx + 8 {
                    s += out.get(x, y);
                    n += 1.0;
                }
            }
            assert!((s / n - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn ramp_does_not_change_dot_contrast() {
        let (w, h) = (120usize, 40usize);
        let dot = |x: usize, y: usize, cx: usize| {
            let d2 = (x as f64 - cx as f64).powi(2) + (y as f64 - 20.0).powi(2);
            -0.02 * (-d2 / 2.0).exp()
        };
        let f = ScalarField::from_fn(w, h, |x, y| 0.2 + 0.5 * x as f64 / w as f64 + dot(x, y, 20) + dot(x, y, 100));
        let c = PreprocessConfig { window_radius: 8, epsilon: 1e-4, clip: 50.0 };
        let out = normalize(&f, &Mask::full(w, h), &c).unwrap();
        let contrast = |cx: usize| out.get(cx, 20) - out.get(cx, 30);
        let (a, b) = (contrast(20), contrast(100));
        assert!(a < 0.0);
        assert!(((a - b) / a).abs() < 0.01, "{a} vs {b}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = ScalarField::filled(10, 10, 0.5);
        assert!(matches!(normalize(&f, &Mask::empty(10, 10), &cfg(2)), Err(Error::EmptyMask)));
        assert!(matches!(normalize(&f, &Mask::full(10, 10), &cfg(5)), Err(Error::InvalidConfig(_))));
        let bad = PreprocessConfig { epsilon: 0.0, ..cfg(2) };
        assert!(normalize(&f, &Mask::full(10, 10), &bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn affine_invariance(seed in 0u64..1000, a in 2.0f64..10.0) {
            let f = ScalarField::from_fn(30, 30, |x, y| {
                let v = ((x as u64 * 2654435761 + y as u64 * 40503 + seed * 97) % 1000) as f64 / 1000.0;
                v * 0.5
            });
            let g = f.map(|v| a * v + 0.1);
            let c = cfg(4);
            let (p, q) = (normalize(&f, &Mask::full(30, 30), &c).unwrap(), normalize(&g, &Mask::full(30, 30), &c).unwrap());
            for (u, v) in p.as_slice().iter().zip(q.as_slice()) {
                prop_assert!((u - v).abs() < 1e-6);
            }
        }
    }
}

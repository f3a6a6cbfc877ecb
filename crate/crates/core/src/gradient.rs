//! Multi-scale, multi-orientation gradient-weighted images.
//!
//! For each scale `sigma` the image is convolved with the x- and
//! y-derivatives of a Gaussian; a derivative pair rotated by `theta` is a
//! linear combination of those two responses, so every orientation reuses
//! the same two separable passes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientConfig {
    /// Gaussian standard deviations in pixels.
    pub scales: Vec<f64>,
    /// Kernel rotation angles in radians, each within `[0, pi/2]`.
    pub orientations: Vec<f64>,
    /// Kernel half-width in units of sigma.
    pub kernel_truncation: f64,
    /// Amplitude of the 2-D Gaussian. `None` uses `1 / sqrt(2 pi sigma^2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefactor: Option<f64>,
}

impl Default for GradientConfig {
    fn default() -> Self {
        Self {
            scales: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            orientations: orientation_set(7),
            kernel_truncation: 3.0,
            prefactor: None,
        }
    }
}

/// `count` evenly spaced angles from 0 to pi/2 inclusive.
pub fn orientation_set(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|k| std::f64::consts::FRAC_PI_2 * k as f64 / (n - 1) as f64).collect(),
    }
}

impl GradientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::config("scales must be non-empty and positive"));
        }
        let half_pi = std::f64::consts::FRAC_PI_2 + 1e-12;
        if self.orientations.is_empty() || self.orientations.iter().any(|&t| !(0.0..=half_pi).contains(&t)) {
            return Err(Error::config("orientations must be non-empty and within [0, pi/2]"));
        }
        if !(self.kernel_truncation >= 3.0) {
            return Err(Error::config("kernel_truncation must be >= 3"));
        }
        if let Some(p) = self.prefactor {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::config("prefactor must be positive"));
            }
        }
        Ok(())
    }

    pub fn prefactor_for(&self, sigma: f64) -> f64 {
        self.prefactor.unwrap_or_else(|| gaussian_prefactor(sigma))
    }
}

pub fn gaussian_prefactor(sigma: f64) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt()
}

/// Kernel half-width in pixels.
pub fn kernel_radius(sigma: f64, truncation: f64) -> usize {
    (truncation * sigma).ceil().max(1.0) as usize
}

/// Symmetric (edge-duplicating) reflection of an index into `[0, n)`.
#[inline]
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// 1-D Gaussian profile `exp(-x^2 / 2 sigma^2)` and its derivative times
/// `gain`, both indexed from `-radius` to `radius`.
fn kernels(sigma: f64, radius: usize, gain: f64) -> (Vec<f64>, Vec<f64>) {
    let r = radius as i64;
    let smooth: Vec<f64> = (-r..=r).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let deriv = (-r..=r).zip(&smooth).map(|(x, g)| gain * (-(x as f64) / (sigma * sigma)) * g).collect();
    (smooth, deriv)
}

fn convolve_rows<T: Real>(src: &[T], w: usize, h: usize, kernel: &[f64]) -> Vec<T> {
    let r = (kernel.len() / 2) as i64;
    let k: Vec<T> = kernel.iter().map(|&v| T::lit(v)).collect();
    let mut out = vec![T::zero(); w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let line = &src[y * w..(y + 1) * w];
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (j, &kv) in k.iter().enumerate() {
                acc += kv * line[reflect(x as i64 - (j as i64 - r), w)];
            }
            *o = acc;
        }
    });
    out
}

fn convolve_cols<T: Real>(src: &[T], w: usize, h: usize, kernel: &[f64]) -> Vec<T> {
    let r = (kernel.len() / 2) as i64;
    let k: Vec<T> = kernel.iter().map(|&v| T::lit(v)).collect();
    let mut out = vec![T::zero(); w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (j, &kv) in k.iter().enumerate() {
            let sy = reflect(y as i64 - (j as i64 - r), h);
            let line = &src[sy * w..(sy + 1) * w];
            for (o, &v) in row.iter_mut().zip(line) {
                *o += kv * v;
            }
        }
    });
    out
}

/// Responses to the x- and y-derivative of the Gaussian at `sigma`.
pub struct GradientPair<T> {
    pub gx: ScalarField<T>,
    pub gy: ScalarField<T>,
}

pub fn gaussian_gradient<T: Real>(field: &ScalarField<T>, sigma: f64, truncation: f64, prefactor: f64) -> GradientPair<T> {
    let (w, h) = (field.width(), field.height());
    let (smooth, deriv) = kernels(sigma, kernel_radius(sigma, truncation), prefactor);
    let src = field.as_slice();
    let gx = convolve_cols(&convolve_rows(src, w, h, &deriv), w, h, &smooth);
    let gy = convolve_rows(&convolve_cols(src, w, h, &deriv), w, h, &smooth);
    let wrap = |d| ScalarField::new(w, h, d).expect("sized").with_mask(field.mask().clone()).expect("same size");
    GradientPair { gx: wrap(gx), gy: wrap(gy) }
}

fn rotated_magnitude<T: Real>(pair: &GradientPair<T>, theta: f64) -> ScalarField<T> {
    let (c, s) = (T::lit(theta.cos()), T::lit(theta.sin()));
    pair.gx.zip_map(&pair.gy, |gx, gy| {
        let u = c * gx + s * gy;
        let v = c * gy - s * gx;
        (u * u + v * v).sqrt()
    })
}

/// Norm of the two rotated first-order Gaussian-derivative responses.
pub fn gradient_magnitude<T: Real>(normalized: &ScalarField<T>, sigma: f64, theta: f64, cfg: &GradientConfig) -> ScalarField<T> {
    let pair = gaussian_gradient(normalized, sigma, cfg.kernel_truncation, cfg.prefactor_for(sigma));
    rotated_magnitude(&pair, theta)
}

/// `(1 - m^2) / (1 + m^2)`, in `(-1, 1]`.
pub fn weight_transform<T: Real>(magnitude: &ScalarField<T>) -> ScalarField<T> {
    magnitude.map(|m| {
        let m2 = m * m;
        (T::one() - m2) / (T::one() + m2)
    })
}

/// Orientation sums per scale and their total over scales.
pub struct Aggregate<T> {
    pub scales: Vec<f64>,
    pub per_scale: Vec<ScalarField<T>>,
    pub wos: ScalarField<T>,
}

pub fn aggregate<T: Real>(normalized: &ScalarField<T>, cfg: &GradientConfig) -> Result<Aggregate<T>> {
    cfg.validate()?;
    let per_scale: Vec<ScalarField<T>> = cfg
        .scales
        .par_iter()
        .map(|&sigma| {
            let pair = gaussian_gradient(normalized, sigma, cfg.kernel_truncation, cfg.prefactor_for(sigma));
            let mut sum = ScalarField::filled(normalized.width(), normalized.height(), T::zero())
                .with_mask(normalized.mask().clone())
                .expect("same size");
            for &theta in &cfg.orientations {
                let wt = weight_transform(&rotated_magnitude(&pair, theta));
                for (acc, v) in sum.as_mut_slice().iter_mut().zip(wt.as_slice()) {
                    *acc += *v;
                }
            }
            sum
        })
        .collect();
    let mut wos = per_scale[0].clone();
    for s in &per_scale[1..] {
        for (acc, v) in wos.as_mut_slice().iter_mut().zip(s.as_slice()) {
            *acc += *v;
        }
    }
    Ok(Aggregate { scales: cfg.scales.clone(), per_scale, wos })
}

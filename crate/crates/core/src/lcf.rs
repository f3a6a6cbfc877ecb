//! Local convergence index filters: adaptive ring (ARF), sliding band (SBF)
//! and super-elliptical (SEF).
//!
//! Support lines `i = 0..N` leave the query point at angle `2 pi i / N`; the
//! sample at distance `m` on line `i` sits at `(x + m sin t, y + m cos t)`.
//! A sample contributes the cosine between its gradient and the direction
//! back to the query point, so gradients converging on the point score `+1`.
//! A band starting at radius `r` covers the `d` samples `r, r+1, .., r+d-1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::gradient::gaussian_gradient;
use crate::scalar::Real;

/// Gradients below this magnitude carry no direction and contribute 0.
pub const DEGENERATE_GRADIENT: f64 = 1e-12;

/// A later candidate must beat the running maximum by more than this to
/// replace it, so rounding noise cannot break ties away from the smallest
/// radius or orientation.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Kernel half-width, in sigmas, of the gradient feeding the filters.
pub const GRADIENT_TRUNCATION: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupportConfig {
    /// Number of support lines `N`.
    pub num_lines: usize,
    /// Band width `d` in samples.
    pub band_width: usize,
    pub r_min: usize,
    pub r_max: usize,
    /// Gaussian scale of the gradient field.
    pub gradient_sigma: f64,
}

impl Default for SupportConfig {
    fn default() -> Self {
        Self { num_lines: 16, band_width: 2, r_min: 1, r_max: 15, gradient_sigma: 1.0 }
    }
}

impl SupportConfig {
    /// Default radii rescaled from a ~2000 px FOV to `diameter`.
    pub fn for_fov_diameter(diameter: f64) -> Self {
        let d = Self::default();
        let r_max = ((d.r_max as f64) * diameter / crate::preprocess::REFERENCE_FOV_DIAMETER).round() as usize;
        Self { r_max: r_max.max(d.r_min + 1), ..d }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_lines < 8 || !self.num_lines.is_multiple_of(4) {
            return Err(Error::config("num_lines must be >= 8 and divisible by 4"));
        }
        if self.band_width < 1 {
            return Err(Error::config("band_width must be >= 1"));
        }
        if self.r_min >= self.r_max {
            return Err(Error::config("r_min must be below r_max"));
        }
        if !(self.gradient_sigma > 0.0) {
            return Err(Error::config("gradient_sigma must be positive"));
        }
        Ok(())
    }

    /// Samples per line needed by every filter.
    fn samples(&self) -> usize {
        self.r_max + self.band_width
    }
}

/// Per-pixel gradient vectors of an image.
#[derive(Clone, Debug)]
pub struct GradientField<T> {
    width: usize,
    height: usize,
    gx: Vec<T>,
    gy: Vec<T>,
}

impl<T: Real> GradientField<T> {
    pub fn from_components(gx: ScalarField<T>, gy: ScalarField<T>) -> Result<Self> {
        if (gx.width(), gx.height()) != (gy.width(), gy.height()) {
            return Err(Error::DimensionMismatch { expected: gx.as_slice().len(), got: gy.as_slice().len() });
        }
        Ok(Self { width: gx.width(), height: gx.height(), gx: gx.as_slice().to_vec(), gy: gy.as_slice().to_vec() })
    }

    /// Derivative-of-Gaussian gradient of `image` at `sigma`.
    pub fn of_image(image: &ScalarField<T>, sigma: f64) -> Self {
        let pair = gaussian_gradient(image, sigma, GRADIENT_TRUNCATION, 1.0);
        Self::from_components(pair.gx, pair.gy).expect("same size")
    }

    /// Builds a field from a function of pixel coordinates.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut gx = Vec::with_capacity(width * height);
        let mut gy = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x as f64, y as f64);
                gx.push(T::lit(a));
                gy.push(T::lit(b));
            }
        }
        Self { width, height, gx, gy }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn components(&self, x: usize, y: usize) -> (T, T) {
        let i = y * self.width + x;
        (self.gx[i], self.gy[i])
    }

    /// Gradient orientation `atan2(gx, gy)`, measured like the line angles.
    pub fn orientation(&self, x: usize, y: usize) -> f64 {
        let (gx, gy) = self.components(x, y);
        gx.as_f64().atan2(gy.as_f64())
    }

    /// Bilinear interpolation of both components; `None` outside the grid.
    pub fn sample(&self, px: f64, py: f64) -> Option<(f64, f64)> {
        let (wm, hm) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(px >= 0.0 && py >= 0.0 && px <= wm && py <= hm) {
            return None;
        }
        let x0 = (px.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (py.floor() as usize).min(self.height.saturating_sub(2));
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (px - x0 as f64, py - y0 as f64);
        let lerp = |c: &[T]| {
            let at = |x: usize, y: usize| c[y * self.width + x].as_f64();
            let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
            let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
            top * (1.0 - fy) + bottom * fy
        };
        Some((lerp(&self.gx), lerp(&self.gy)))
    }
}

/// Unit vector of support line `i` out of `n`.
#[inline]
fn line_direction(i: usize, n: usize) -> (f64, f64) {
    let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
    (theta.sin(), theta.cos())
}

#[inline]
fn cosine_toward_center(g: (f64, f64), dir: (f64, f64)) -> f64 {
    let norm = g.0.hypot(g.1);
    if norm < DEGENERATE_GRADIENT {
        0.0
    } else {
        -(g.0 * dir.0 + g.1 * dir.1) / norm
    }
}

/// Cosine of the angle between the gradient at polar sample `(line, radius)`
/// around `center` and the direction from that sample back to `center`.
/// Samples outside the grid and degenerate gradients give 0.
pub fn convergence_cosines<T: Real>(field: &GradientField<T>, center: (f64, f64), line: usize, radius: f64, num_lines: usize) -> f64 {
    let dir = line_direction(line, num_lines);
    match field.sample(center.0 + radius * dir.0, center.1 + radius * dir.1) {
        Some(g) => cosine_toward_center(g, dir),
        None => 0.0,
    }
}

/// The six filter values at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LcfValues {
    pub arf_response: f64,
    pub arf_radius: f64,
    pub sbf_response: f64,
    pub sbf_radius: f64,
    pub sef_response: f64,
    pub sef_radius: f64,
}

/// All filter outputs at one point, including the SBF per-line radii.
#[derive(Clone, Debug, PartialEq)]
pub struct PointResponse {
    pub values: LcfValues,
    pub sbf_line_radii: Vec<usize>,
    /// Winning SEF orientation index, `0..N/4`.
    pub sef_orientation: usize,
}

/// Band sums along each line, via per-line prefix sums of the cosines.
struct BandTable {
    n: usize,
    d: usize,
    stride: usize,
    prefix: Vec<f64>,
}

impl BandTable {
    fn build<T: Real>(field: &GradientField<T>, center: (f64, f64), cfg: &SupportConfig) -> Self {
        let n = cfg.num_lines;
        let samples = cfg.samples();
        let stride = samples + 1;
        let mut prefix = vec![0.0; n * stride];
        for i in 0..n {
            let dir = line_direction(i, n);
            let row = &mut prefix[i * stride..(i + 1) * stride];
            for m in 0..samples {
                let p = (center.0 + m as f64 * dir.0, center.1 + m as f64 * dir.1);
                let c = field.sample(p.0, p.1).map_or(0.0, |g| cosine_toward_center(g, dir));
                row[m + 1] = row[m] + c;
            }
        }
        Self { n, d: cfg.band_width, stride, prefix }
    }

    #[inline]
    fn band(&self, line: usize, r: usize) -> f64 {
        let row = &self.prefix[line * self.stride..];
        row[r + self.d] - row[r]
    }

    /// First maximizer over `r in lo..=hi` of the summed bands of `lines`.
    fn best(&self, lines: &[usize], lo: usize, hi: usize) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, lo);
        for r in lo..=hi {
            let s: f64 = lines.iter().map(|&l| self.band(l, r)).sum();
            if s > best.0 + TIE_TOLERANCE {
                best = (s, r);
            }
        }
        best
    }
}

/// Line groups of the super-elliptical support for orientation `a`: two
/// opposite-pair axis groups followed by `N/4 - 1` four-fold groups.
pub fn sef_groups(a: usize, n: usize) -> Vec<Vec<usize>> {
    let q = n / 4;
    let h = n / 2;
    let mut groups = vec![vec![a % n, (a + h) % n], vec![(a + q) % n, (a + 3 * q) % n]];
    for i in 1..q {
        groups.push(vec![(a + i) % n, (a + h + n - i) % n, (a + i + h) % n, (a + n - i) % n]);
    }
    groups
}

fn respond(table: &BandTable, cfg: &SupportConfig) -> PointResponse {
    let n = table.n;
    let norm = (n * table.d) as f64;
    let all: Vec<usize> = (0..n).collect();

    let (arf_sum, arf_r) = table.best(&all, 0, cfg.r_max);

    let mut sbf_sum = 0.0;
    let mut radii = Vec::with_capacity(n);
    for i in 0..n {
        let (s, r) = table.best(&[i], cfg.r_min, cfg.r_max);
        sbf_sum += s;
        radii.push(r);
    }

    let mut sef = (f64::NEG_INFINITY, 0.0, 0usize);
    for a in 0..n / 4 {
        let mut total = 0.0;
        let mut axes = [0usize; 2];
        for (g, lines) in sef_groups(a, n).iter().enumerate() {
            let (s, r) = table.best(lines, cfg.r_min, cfg.r_max);
            total += s;
            if g < 2 {
                axes[g] = r;
            }
        }
        if total > sef.0 + TIE_TOLERANCE {
            sef = (total, (axes[0] + axes[1]) as f64 / 2.0, a);
        }
    }

    PointResponse {
        values: LcfValues {
            arf_response: arf_sum / norm,
            arf_radius: arf_r as f64,
            sbf_response: sbf_sum / norm,
            sbf_radius: radii.iter().sum::<usize>() as f64 / n as f64,
            sef_response: sef.0 / norm,
            sef_radius: sef.1,
        },
        sbf_line_radii: radii,
        sef_orientation: sef.2,
    }
}

/// Evaluates all three filters at an arbitrary point.
pub fn evaluate_point<T: Real>(field: &GradientField<T>, center: (f64, f64), cfg: &SupportConfig) -> PointResponse {
    respond(&BandTable::build(field, center, cfg), cfg)
}

/// Dense response and radius maps of one filter.
#[derive(Clone, Debug)]
pub struct FilterOutput<T> {
    pub response: ScalarField<T>,
    pub radius: ScalarField<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Filter {
    Arf,
    Sbf,
    Sef,
}

/// Dense maps for all three filters, in `[arf, sbf, sef]` order.
pub fn dense_maps<T: Real>(field: &GradientField<T>, cfg: &SupportConfig) -> Result<[FilterOutput<T>; 3]> {
    cfg.validate()?;
    let (w, h) = (field.width, field.height);
    let values: Vec<LcfValues> = (0..w * h)
        .into_par_iter()
        .map(|i| evaluate_point(field, ((i % w) as f64, (i / w) as f64), cfg).values)
        .collect();
    let map = |f: fn(&LcfValues) -> f64| {
        ScalarField::new(w, h, values.iter().map(|v| T::lit(f(v))).collect()).expect("sized")
    };
    Ok([
        FilterOutput { response: map(|v| v.arf_response), radius: map(|v| v.arf_radius) },
        FilterOutput { response: map(|v| v.sbf_response), radius: map(|v| v.sbf_radius) },
        FilterOutput { response: map(|v| v.sef_response), radius: map(|v| v.sef_radius) },
    ])
}

fn dense_one<T: Real>(field: &GradientField<T>, cfg: &SupportConfig, which: Filter) -> Result<FilterOutput<T>> {
    let [arf, sbf, sef] = dense_maps(field, cfg)?;
    Ok(match which {
        Filter::Arf => arf,
        Filter::Sbf => sbf,
        Filter::Sef => sef,
    })
}

/// Adaptive ring filter: one radius shared by all lines, `r in [0, r_max]`.
pub fn arf<T: Real>(field: &GradientField<T>, cfg: &SupportConfig) -> Result<FilterOutput<T>> {
    dense_one(field, cfg, Filter::Arf)
}

/// Sliding band filter: an independent radius per line in `[r_min, r_max]`.
pub fn sbf<T: Real>(field: &GradientField<T>, cfg: &SupportConfig) -> Result<FilterOutput<T>> {
    dense_one(field, cfg, Filter::Sbf)
}

/// Super-elliptical filter: per-group radii under two-fold symmetry,
/// maximized over `N/4` orientations.
pub fn sef<T: Real>(field: &GradientField<T>, cfg: &SupportConfig) -> Result<FilterOutput<T>> {
    dense_one(field, cfg, Filter::Sef)
}

/// Filter values at the listed points of `image`, using its gradient at
/// `cfg.gradient_sigma`.
pub fn lcf_at_points<T: Real>(image: &ScalarField<T>, points: &[(f64, f64)], cfg: &SupportConfig) -> Result<Vec<LcfValues>> {
    cfg.validate()?;
    let (wm, hm) = ((image.width() - 1) as f64, (image.height() - 1) as f64);
    if let Some(&(x, y)) = points.iter().find(|&&(x, y)| !(x >= 0.0 && y >= 0.0 && x <= wm && y <= hm)) {
        return Err(Error::PointOutside { x, y });
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let field = GradientField::of_image(image, cfg.gradient_sigma);
    Ok(points.par_iter().map(|&p| evaluate_point(&field, p, cfg).values).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SupportConfig {
        SupportConfig { num_lines: 16, band_width: 2, r_min: 1, r_max: 8, gradient_sigma: 1.0 }
    }

    #[test]
    fn convergent_and_divergent_fields() {
        let (cx, cy) = (20.0, 20.0);
        let conv = GradientField::<f64>::from_fn(41, 41, |x, y| (-(x - cx), -(y - cy)));
        let div = GradientField::<f64>::from_fn(41, 41, |x, y| (x - cx, y - cy));
        for i in 0..16 {
            for m in 1..10 {
                assert!((convergence_cosines(&conv, (cx, cy), i, m as f64, 16) - 1.0).abs() < 1e-12);
                assert!((convergence_cosines(&div, (cx, cy), i, m as f64, 16) + 1.0).abs() < 1e-12);
            }
        }
        let zero = GradientField::<f64>::from_fn(5, 5, |_, _| (0.0, 0.0));
        assert_eq!(convergence_cosines(&zero, (2.0, 2.0), 3, 1.0, 16), 0.0);
        // Outside the grid.
        assert_eq!(convergence_cosines(&conv, (0.0, 0.0), 8, 3.0, 16), 0.0);
    }

    #[test]
    fn radial_field_responses() {
        let conv = GradientField::<f64>::from_fn(41, 41, |x, y| (20.0 - x, 20.0 - y));
        let r = evaluate_point(&conv, (20.0, 20.0), &small());
        // The centre sample is degenerate, so the ring starting at 0 loses one sample per line.
        assert_eq!(r.values.arf_radius, 1.0);
        assert!((r.values.arf_response - 1.0).abs() < 1e-12);
        assert!((r.values.sbf_response - 1.0).abs() < 1e-12);
        assert!(r.sbf_line_radii.iter().all(|&v| v == 1));
        assert!((r.values.sef_response - 1.0).abs() < 1e-12);
        assert_eq!(r.sef_orientation, 0);
    }

    #[test]
    fn constant_image_gives_zero() {
        let img = ScalarField::filled(30, 30, 0.42f64);
        let v = lcf_at_points(&img, &[(15.0, 15.0), (3.0, 27.0)], &small()).unwrap();
        for p in v {
            assert_eq!(p.arf_response, 0.0);
            assert_eq!(p.sbf_response, 0.0);
            assert_eq!(p.sef_response, 0.0);
        }
    }

    #[test]
    fn sef_groups_partition_lines() {
        for n in [8usize, 16, 32] {
            for a in 0..n / 4 {
                let mut all: Vec<usize> = sef_groups(a, n).concat();
                all.sort_unstable();
                assert_eq!(all, (0..n).collect::<Vec<_>>());
                assert_eq!(sef_groups(a, n).len(), n / 4 + 1);
            }
        }
    }

    #[test]
    fn point_queries_validate() {
        let img = ScalarField::filled(10, 10, 0.0f64);
        assert!(lcf_at_points(&img, &[], &small()).unwrap().is_empty());
        assert!(matches!(lcf_at_points(&img, &[(10.0, 2.0)], &small()), Err(Error::PointOutside { .. })));
        let bad = SupportConfig { num_lines: 10, ..small() };
        assert!(lcf_at_points(&img, &[(1.0, 1.0)], &bad).is_err());
    }
}

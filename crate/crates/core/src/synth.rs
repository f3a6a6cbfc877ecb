//! Ground-truthed synthetic fundus-like scenes and brute-force reference
//! implementations.
//!
//! The references here are written independently of the production filter
//! paths: dense 2-D convolution instead of separable passes, and a literal
//! per-radius re-evaluation of every convergence sum using the arctangent
//! form of the gradient angle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{Annotation, ImageTruth};
use crate::field::{RgbImage, ScalarField};
use crate::lcf::{LcfValues, SupportConfig, DEGENERATE_GRADIENT, GRADIENT_TRUNCATION, TIE_TOLERANCE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Background {
    Flat { level: f64 },
    /// `level + dx * x / width + dy * y / height`.
    Gradient { level: f64, dx: f64, dy: f64 },
    /// Uniform noise of the given amplitude, smoothed at sigma = 1 px.
    Speckle { level: f64, amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlobShape {
    /// Gaussian dip with standard deviation `radius / 2`.
    Gaussian,
    Disk,
    /// Dark ring from `radius` to `radius + width`.
    Annulus { width: f64 },
    /// Filled ellipse with semi-axes `a`, `b`, rotated by `angle` radians.
    Ellipse { a: f64, b: f64, angle: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blob {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    /// Darkening in `(0, 1]` of full scale.
    pub depth: f64,
    pub shape: BlobShape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vessel {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub width: f64,
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub background: Background,
    #[serde(default)]
    pub blobs: Vec<Blob>,
    #[serde(default)]
    pub vessels: Vec<Vessel>,
    /// Bright, unannotated blobs; `depth` is the brightening.
    #[serde(default)]
    pub spots: Vec<Blob>,
    #[serde(default)]
    pub seed: u64,
    /// Circular field of view radius; everything outside is black.
    #[serde(default)]
    pub fov_radius: Option<f64>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::ZeroDimension);
        }
        for b in self.blobs.iter().chain(&self.spots) {
            if !(b.x >= 0.0 && b.y >= 0.0 && b.x <= (self.width - 1) as f64 && b.y <= (self.height - 1) as f64) {
                return Err(Error::config(format!("blob at ({}, {}) outside the scene", b.x, b.y)));
            }
            if !(b.depth > 0.0 && b.depth <= 1.0) || !(b.radius > 0.0) {
                return Err(Error::config("blob depth must be in (0, 1] and radius positive"));
            }
        }
        for v in &self.vessels {
            if !(v.depth > 0.0 && v.depth <= 1.0) || !(v.width > 0.0) {
                return Err(Error::config("vessel depth must be in (0, 1] and width positive"));
            }
        }
        Ok(())
    }
}

/// Rendered scene with its annotations.
#[derive(Clone, Debug)]
pub struct Scene {
    pub image: RgbImage,
    pub truth: ImageTruth,
}

const SUPERSAMPLE: usize = 4;

/// Fraction of the pixel at `(x, y)` covered by `inside`.
fn coverage(x: usize, y: usize, inside: impl Fn(f64, f64) -> bool) -> f64 {
    let mut hits = 0;
    for sy in 0..SUPERSAMPLE {
        for sx in 0..SUPERSAMPLE {
            let px = x as f64 - 0.5 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
            let py = y as f64 - 0.5 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
            if inside(px, py) {
                hits += 1;
            }
        }
    }
    hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64
}

fn blob_profile(b: &Blob, x: usize, y: usize) -> f64 {
    let reach = match &b.shape {
        BlobShape::Gaussian => 2.0 * b.radius,
        BlobShape::Disk => b.radius + 1.0,
        BlobShape::Annulus { width } => b.radius + width + 1.0,
        BlobShape::Ellipse { a, b: bb, .. } => a.max(*bb) + 1.0,
    };
    let (dx, dy) = (x as f64 - b.x, y as f64 - b.y);
    if dx.abs() > reach + 1.0 || dy.abs() > reach + 1.0 {
        return 0.0;
    }
    let amount = match &b.shape {
        BlobShape::Gaussian => {
            let s = b.radius / 2.0;
            (-(dx * dx + dy * dy) / (2.0 * s * s)).exp()
        }
        BlobShape::Disk => coverage(x, y, |px, py| (px - b.x).hypot(py - b.y) <= b.radius),
        BlobShape::Annulus { width } => coverage(x, y, |px, py| {
            let r = (px - b.x).hypot(py - b.y);
            r >= b.radius && r < b.radius + width
        }),
        BlobShape::Ellipse { a, b: minor, angle } => {
            let (c, s) = (angle.cos(), angle.sin());
            coverage(x, y, |px, py| {
                let (u, v) = (px - b.x, py - b.y);
                let (ru, rv) = (c * u + s * v, -s * u + c * v);
                (ru / a).powi(2) + (rv / minor).powi(2) <= 1.0
            })
        }
    };
    b.depth * amount
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p.0 - a.0 - t * vx).hypot(p.1 - a.1 - t * vy)
}

fn vessel_darkening(v: &Vessel, x: usize, y: usize) -> f64 {
    let p = (x as f64, y as f64);
    if segment_distance(p, v.start, v.end) > v.width / 2.0 + 1.0 {
        return 0.0;
    }
    v.depth * coverage(x, y, |px, py| segment_distance((px, py), v.start, v.end) <= v.width / 2.0)
}

/// Uniform noise in `[-amplitude, amplitude]` smoothed with a unit Gaussian.
fn speckle(width: usize, height: usize, amplitude: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..width * height).map(|_| rng.gen_range(-amplitude..=amplitude)).collect();
    let k: Vec<f64> = (-3i64..=3).map(|i| (-(i * i) as f64 / 2.0).exp()).collect();
    let ksum: f64 = k.iter().sum();
    let clampi = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] =
                (0..7).map(|j| k[j] * raw[y * width + clampi(x as i64 + j as i64 - 3, width)]).sum::<f64>() / ksum;
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] =
                (0..7).map(|j| k[j] * tmp[clampi(y as i64 + j as i64 - 3, height) * width + x]).sum::<f64>() / ksum;
        }
    }
    out
}

/// Green-channel intensities of the scene before quantization.
pub fn render_green(spec: &SceneSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = match spec.background {
        Background::Speckle { amplitude, .. } => speckle(w, h, amplitude, &mut rng),
        _ => vec![0.0; w * h],
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let base = match spec.background {
                Background::Flat { level } => level,
                Background::Gradient { level, dx, dy } => level + dx * x as f64 / w as f64 + dy * y as f64 / h as f64,
                Background::Speckle { level, .. } => level,
            } + noise[y * w + x];
            let dark: f64 = spec.blobs.iter().map(|b| blob_profile(b, x, y)).sum::<f64>()
                + spec.vessels.iter().map(|v| vessel_darkening(v, x, y)).sum::<f64>();
            let bright: f64 = spec.spots.iter().map(|b| blob_profile(b, x, y)).sum();
            out[y * w + x] = (base - dark + bright).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Renders the scene into an RGB image plus blob-centre annotations.
pub fn render(spec: &SceneSpec, image_id: &str) -> Result<Scene> {
    let green = render_green(spec)?;
    let (w, h) = (spec.width, spec.height);
    let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut r = Vec::with_capacity(w * h);
    let mut g = Vec::with_capacity(w * h);
    let mut b = Vec::with_capacity(w * h);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    for (i, &v) in green.iter().enumerate() {
        let inside = spec.fov_radius.is_none_or(|rad| ((i % w) as f64 - cx).hypot((i / w) as f64 - cy) <= rad);
        if inside {
            r.push(to_u8(0.45 + 0.5 * v));
            g.push(to_u8(v));
            b.push(to_u8(0.25 * v));
        } else {
            r.push(0);
            g.push(0);
            b.push(0);
        }
    }
    let annotations = spec
        .blobs
        .iter()
        .map(|bl| {
            let radius = match bl.shape {
                BlobShape::Ellipse { a, b, .. } => (a + b) / 2.0,
                _ => bl.radius,
            };
            Annotation { x: bl.x, y: bl.y, radius: Some(radius) }
        })
        .collect();
    Ok(Scene {
        image: RgbImage::from_planes(w, h, r, g, b)?,
        truth: ImageTruth { image_id: image_id.to_owned(), annotations },
    })
}

/// Parameters of a randomly laid out MA-like scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSceneParams {
    pub size: usize,
    pub blobs: usize,
    pub vessels: usize,
    pub blob_radius: (f64, f64),
    pub blob_depth: (f64, f64),
    pub blob_shape: BlobShape,
    /// Bright distractor spots, sized like the blobs.
    pub spots: usize,
    pub spot_height: (f64, f64),
    pub vessel_width: (f64, f64),
    pub vessel_depth: (f64, f64),
    pub vessel_length: (f64, f64),
    pub background_level: f64,
    pub speckle: f64,
}

impl Default for RandomSceneParams {
    fn default() -> Self {
        Self {
            size: 160,
            blobs: 5,
            vessels: 3,
            blob_radius: (5.0, 7.0),
            blob_depth: (0.2, 0.35),
            blob_shape: BlobShape::Disk,
            spots: 0,
            spot_height: (0.2, 0.35),
            vessel_width: (4.0, 7.0),
            vessel_depth: (0.2, 0.35),
            vessel_length: (60.0, 100.0),
            background_level: 0.6,
            speckle: 0.02,
        }
    }
}

/// Random layout with blobs kept apart from each other and from
/// the vessels.
pub fn random_scene(params: &RandomSceneParams, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let s = params.size as f64;
    let margin = 12.0;
    let mut vessels = Vec::new();
    for _ in 0..params.vessels {
        let len = rng.gen_range(params.vessel_length.0..=params.vessel_length.1).min(s - 2.0 * margin);
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let (dx, dy) = (angle.cos() * len / 2.0, angle.sin() * len / 2.0);
        let cx = rng.gen_range(margin + dx.abs()..=s - margin - dx.abs());
        let cy = rng.gen_range(margin + dy.abs()..=s - margin - dy.abs());
        vessels.push(Vessel {
            start: (cx - dx, cy - dy),
            end: (cx + dx, cy + dy),
            width: rng.gen_range(params.vessel_width.0..=params.vessel_width.1),
            depth: rng.gen_range(params.vessel_depth.0..=params.vessel_depth.1),
        });
    }
    let mut placed: Vec<Blob> = Vec::new();
    let targets = [(params.blobs, params.blob_depth), (params.spots, params.spot_height)];
    let mut attempts = 0;
    let mut blob_count = 0;
    for (phase, (count, heights)) in targets.into_iter().enumerate() {
        let mut n = 0;
        while n < count && attempts < 20_000 {
            attempts += 1;
            let radius = rng.gen_range(params.blob_radius.0..=params.blob_radius.1);
            let (x, y) = (rng.gen_range(margin..=s - margin).round(), rng.gen_range(margin..=s - margin).round());
            let clear_of_vessels = vessels.iter().all(|v| segment_distance((x, y), v.start, v.end) > v.width / 2.0 + radius + 10.0);
            let clear_of_blobs = placed.iter().all(|b| (b.x - x).hypot(b.y - y) > b.radius + radius + 10.0);
            if clear_of_vessels && clear_of_blobs {
                let depth = rng.gen_range(heights.0..=heights.1);
                placed.push(Blob { x, y, radius, depth, shape: params.blob_shape.clone() });
                n += 1;
            }
        }
        if phase == 0 {
            blob_count = placed.len();
        }
    }
    let spots = placed.split_off(blob_count);
    let blobs = placed;
    SceneSpec {
        width: params.size,
        height: params.size,
        background: Background::Speckle { level: params.background_level, amplitude: params.speckle },
        blobs,
        vessels,
        spots,
        seed,
        fov_radius: None,
    }
}

fn reflect_index(i: i64, n: i64) -> i64 {
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i;
        }
    }
}

/// Direct 2-D convolution of `field` with a sampled kernel `k(dx, dy)` on
/// `[-r, r]^2`, reflective borders.
fn dense_convolve(field: &ScalarField<f64>, r: i64, k: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let (w, h) = (field.width() as i64, field.height() as i64);
    let mut out = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = reflect_index(x - dx, w);
                    let sy = reflect_index(y - dy, h);
                    acc += k(dx as f64, dy as f64) * field.get(sx as usize, sy as usize);
                }
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

/// Gradient magnitude from densely sampled rotated derivative-of-Gaussian
/// kernels.
pub fn dense_gradient_magnitude(field: &ScalarField<f64>, sigma: f64, theta: f64, truncation: f64, prefactor: f64) -> ScalarField<f64> {
    let r = (truncation * sigma).ceil().max(1.0) as i64;
    let g = |x: f64, y: f64| prefactor * (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
    let (c, s) = (theta.cos(), theta.sin());
    // Derivatives along the rotated axes u = (c, s) and v = (-s, c).
    let du = dense_convolve(field, r, |x, y| -(c * x + s * y) / (sigma * sigma) * g(x, y));
    let dv = dense_convolve(field, r, |x, y| -(-s * x + c * y) / (sigma * sigma) * g(x, y));
    let data = du.iter().zip(&dv).map(|(a, b)| (a * a + b * b).sqrt()).collect();
    ScalarField::new(field.width(), field.height(), data).expect("sized")
}

/// Reference gradient components, unit amplitude, as used by the filters.
pub fn dense_gradient(field: &ScalarField<f64>, sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let r = (GRADIENT_TRUNCATION * sigma).ceil().max(1.0) as i64;
    let g = |x: f64, y: f64| (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
    let gx = dense_convolve(field, r, |x, y| -x / (sigma * sigma) * g(x, y));
    let gy = dense_convolve(field, r, |x, y| -y / (sigma * sigma) * g(x, y));
    (gx, gy)
}

struct OracleGradient {
    w: usize,
    h: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl OracleGradient {
    fn interp(&self, px: f64, py: f64) -> Option<(f64, f64)> {
        if px < 0.0 || py < 0.0 || px > (self.w - 1) as f64 || py > (self.h - 1) as f64 {
            return None;
        }
        let x0 = px.floor() as usize;
        let y0 = py.floor() as usize;
        let x1 = if x0 + 1 < self.w { x0 + 1 } else { x0 };
        let y1 = if y0 + 1 < self.h { y0 + 1 } else { y0 };
        let (ax, ay) = (px - x0 as f64, py - y0 as f64);
        let f = |v: &Vec<f64>| {
            v[y0 * self.w + x0] * (1.0 - ax) * (1.0 - ay)
                + v[y0 * self.w + x1] * ax * (1.0 - ay)
                + v[y1 * self.w + x0] * (1.0 - ax) * ay
                + v[y1 * self.w + x1] * ax * ay
        };
        Some((f(&self.gx), f(&self.gy)))
    }

    /// `cos(phi)` with `phi` the angle between the gradient and the line from
    /// the sample back to the centre: `theta_i + pi - atan2(gx, gy)`.
    fn cos_phi(&self, cx: f64, cy: f64, i: usize, n: usize, m: usize) -> f64 {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        let (px, py) = (cx + m as f64 * theta.sin(), cy + m as f64 * theta.cos());
        match self.interp(px, py) {
            None => 0.0,
            Some((gx, gy)) => {
                if (gx * gx + gy * gy).sqrt() < DEGENERATE_GRADIENT {
                    0.0
                } else {
                    let alpha = gx.atan2(gy);
                    (theta + std::f64::consts::PI - alpha).cos()
                }
            }
        }
    }
}

/// Literal evaluation of the three filters at one point of `image`.
pub fn brute_ci(image: &ScalarField<f64>, point: (f64, f64), cfg: &SupportConfig) -> LcfValues {
    let (gx, gy) = dense_gradient(image, cfg.gradient_sigma);
    let og = OracleGradient { w: image.width(), h: image.height(), gx, gy };
    brute_ci_with(&og, point, cfg)
}

/// Same as [`brute_ci`] for several points sharing one gradient computation.
pub fn brute_ci_many(image: &ScalarField<f64>, points: &[(f64, f64)], cfg: &SupportConfig) -> Vec<LcfValues> {
    let (gx, gy) = dense_gradient(image, cfg.gradient_sigma);
    let og = OracleGradient { w: image.width(), h: image.height(), gx, gy };
    points.iter().map(|&p| brute_ci_with(&og, p, cfg)).collect()
}

fn brute_ci_with(og: &OracleGradient, (cx, cy): (f64, f64), cfg: &SupportConfig) -> LcfValues {
    let n = cfg.num_lines;
    let d = cfg.band_width;
    let cosines: Vec<Vec<f64>> = (0..n).map(|i| (0..cfg.r_max + d).map(|m| og.cos_phi(cx, cy, i, n, m)).collect()).collect();
    let band = |i: usize, r: usize| -> f64 { (r..r + d).map(|m| cosines[i % n][m]).sum() };

    // Adaptive ring.
    let mut arf = (f64::NEG_INFINITY, 0usize);
    for r in 0..=cfg.r_max {
        let mut s = 0.0;
        for i in 0..n {
            s += band(i, r);
        }
        let v = s / (n as f64 * d as f64);
        if v > arf.0 + TIE_TOLERANCE {
            arf = (v, r);
        }
    }

    // Sliding band.
    let mut sbf_total = 0.0;
    let mut sbf_radii = 0.0;
    for i in 0..n {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for r in cfg.r_min..=cfg.r_max {
            let v = band(i, r) / d as f64;
            if v > best.0 + TIE_TOLERANCE {
                best = (v, r);
            }
        }
        sbf_total += best.0;
        sbf_radii += best.1 as f64;
    }

    // Super-elliptical: axis terms weigh 2/N, four-fold terms 4/N.
    let q = n / 4;
    let mut sef = (f64::NEG_INFINITY, 0.0);
    for j in 0..q {
        let term = |lines: &[usize]| -> (f64, usize) {
            let mut best = (f64::NEG_INFINITY, 0usize);
            for r in cfg.r_min..=cfg.r_max {
                let v: f64 = lines.iter().map(|&l| band(l, r)).sum::<f64>() / (lines.len() * d) as f64;
                if v > best.0 + TIE_TOLERANCE {
                    best = (v, r);
                }
            }
            best
        };
        let (t1, r1) = term(&[j, j + n / 2]);
        let (t2, r2) = term(&[j + q, j + 3 * q]);
        let mut value = (2.0 * t1 + 2.0 * t2) / n as f64;
        for i in 1..q {
            let (t, _) = term(&[j + i, j + n / 2 - i, j + i + n / 2, j + n - i]);
            value += 4.0 * t / n as f64;
        }
        if value > sef.0 + TIE_TOLERANCE {
            sef = (value, (r1 + r2) as f64 / 2.0);
        }
    }

    LcfValues {
        arf_response: arf.0,
        arf_radius: arf.1 as f64,
        sbf_response: sbf_total / n as f64,
        sbf_radius: sbf_radii / n as f64,
        sef_response: sef.0,
        sef_radius: sef.1,
    }
}

//! Candidate extraction by iterative thresholding of the per-scale
//! orientation-summed weight images.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Mask, ScalarField};
use crate::regions::{self, centroid, BoundingBox, Pixel, RegionProps};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub threshold_start: f64,
    pub threshold_end: f64,
    pub threshold_step: f64,
    pub max_area: usize,
    pub max_eccentricity: f64,
    pub max_extent: f64,
    /// Rescale every scale's image to `[0, 1]` over the mask first.
    pub per_scale_normalization: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            threshold_start: 0.1,
            threshold_end: 1.0,
            threshold_step: 0.05,
            max_area: 300,
            max_eccentricity: 0.9,
            max_extent: 0.3,
            per_scale_normalization: true,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_start < self.threshold_end) {
            return Err(Error::config("threshold_start must be below threshold_end"));
        }
        if !(self.threshold_step > 0.0) {
            return Err(Error::config("threshold_step must be positive"));
        }
        if self.max_area == 0 || !(self.max_eccentricity > 0.0) || !(self.max_extent > 0.0) {
            return Err(Error::config("region constraints must be positive"));
        }
        Ok(())
    }

    /// `start, start + step, ..` up to and including `end`.
    pub fn thresholds(&self) -> Vec<f64> {
        let count = ((self.threshold_end - self.threshold_start) / self.threshold_step + 1e-9).floor() as usize;
        (0..=count).map(|k| self.threshold_start + k as f64 * self.threshold_step).collect()
    }

    /// The four region predicates, cheapest first.
    pub fn accepts(&self, pixels: &[Pixel]) -> bool {
        if pixels.len() >= self.max_area {
            return false;
        }
        let (_, extent) = regions::area_and_extent(pixels);
        if extent >= self.max_extent {
            return false;
        }
        if regions::euler_number(pixels) > 0 {
            return false;
        }
        regions::moment_ellipse(pixels).2 < self.max_eccentricity
    }
}

/// A connected pixel set proposed as a possible lesion.
#[derive(Debug)]
pub struct CandidateRegion {
    pixels: Vec<Pixel>,
    centroid: (f64, f64),
    pub source_scale: f64,
    pub source_threshold: f64,
    props: OnceLock<RegionProps>,
}

impl Clone for CandidateRegion {
    fn clone(&self) -> Self {
        Self {
            pixels: self.pixels.clone(),
            centroid: self.centroid,
            source_scale: self.source_scale,
            source_threshold: self.source_threshold,
            props: self.props.clone(),
        }
    }
}

impl PartialEq for CandidateRegion {
    fn eq(&self, other: &Self) -> bool {
        self.pixels == other.pixels && self.source_scale == other.source_scale && self.source_threshold == other.source_threshold
    }
}

impl CandidateRegion {
    /// Pixels are stored sorted by `(y, x)` without duplicates.
    pub fn new(mut pixels: Vec<Pixel>, source_scale: f64, source_threshold: f64) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::parse("candidate with no pixels"));
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        pixels.dedup();
        let centroid = centroid(&pixels);
        Ok(Self { pixels, centroid, source_scale, source_threshold, props: OnceLock::new() })
    }

    pub fn pixels(&self) -> &[Pixel] {
        &self.pixels
    }

    pub fn centroid(&self) -> (f64, f64) {
        self.centroid
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox::of(&self.pixels)
    }

    /// Shape descriptors, computed on first use.
    pub fn props(&self) -> &RegionProps {
        self.props.get_or_init(|| regions::region_props(&self.pixels))
    }

    /// Row runs `y:x+len` joined by `;`.
    pub fn pixel_rle(&self) -> String {
        let mut runs: Vec<(u32, u32, u32)> = Vec::new();
        for &(x, y) in &self.pixels {
            match runs.last_mut() {
                Some((ry, rx, len)) if *ry == y && *rx + *len == x => *len += 1,
                _ => runs.push((y, x, 1)),
            }
        }
        runs.iter().map(|(y, x, len)| format!("{y}:{x}+{len}")).collect::<Vec<_>>().join(";")
    }

    pub fn parse_rle(text: &str) -> Result<Vec<Pixel>> {
        let mut out = Vec::new();
        for run in text.split(';').filter(|s| !s.is_empty()) {
            let bad = || Error::parse(format!("bad pixel run `{run}`"));
            let (y, rest) = run.split_once(':').ok_or_else(bad)?;
            let (x, len) = rest.split_once('+').ok_or_else(bad)?;
            let (y, x, len): (u32, u32, u32) =
                (y.trim().parse().map_err(|_| bad())?, x.trim().parse().map_err(|_| bad())?, len.trim().parse().map_err(|_| bad())?);
            out.extend((x..x + len).map(|xx| (xx, y)));
        }
        Ok(out)
    }
}

/// 8-connected components of `pixel < t` inside the mask whose size stays
/// below `limit`; larger components are scanned but not collected.
fn small_components(values: &[f64], mask: &Mask, t: f64, limit: usize) -> Vec<Vec<Pixel>> {
    let (w, h) = (mask.width(), mask.height());
    let inside = mask.as_slice();
    let fg = |i: usize| inside[i] && values[i] < t;
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || !fg(start) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        let mut too_big = false;
        while let Some(i) = stack.pop() {
            if !too_big {
                pixels.push(((i % w) as u32, (i / w) as u32));
                if pixels.len() >= limit {
                    too_big = true;
                    pixels = Vec::new();
                }
            }
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && fg(j) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if !too_big {
            out.push(pixels);
        }
    }
    out
}

/// Affine rescale of the masked values to `[0, 1]`; a flat field maps to 1.
fn unit_range<T: Real>(field: &ScalarField<T>, mask: &Mask) -> Vec<f64> {
    let vals = field.as_slice();
    let inside = mask.as_slice();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (v, &m) in vals.iter().zip(inside) {
        if m {
            lo = lo.min(v.as_f64());
            hi = hi.max(v.as_f64());
        }
    }
    let span = hi - lo;
    vals.iter()
        .map(|v| if span > 0.0 { (v.as_f64() - lo) / span } else { 1.0 })
        .collect()
}

struct Kept {
    pixels: Vec<Pixel>,
    scale: f64,
    threshold: f64,
}

/// Thresholds every scale image at every level, keeps the components that
/// pass the region predicates and merges overlapping survivors.
pub fn extract_candidates<T: Real>(per_scale: &[(f64, ScalarField<T>)], cfg: &ExtractionConfig, mask: &Mask) -> Result<Vec<CandidateRegion>> {
    Ok(deduplicate(emit_regions(per_scale, cfg, mask)?))
}

/// The surviving components of every (scale, threshold) pass, before merging.
pub fn emit_regions<T: Real>(per_scale: &[(f64, ScalarField<T>)], cfg: &ExtractionConfig, mask: &Mask) -> Result<Vec<CandidateRegion>> {
    cfg.validate()?;
    for (_, f) in per_scale {
        if (f.width(), f.height()) != (mask.width(), mask.height()) {
            return Err(Error::DimensionMismatch { expected: mask.as_slice().len(), got: f.as_slice().len() });
        }
    }
    let thresholds = cfg.thresholds();
    let prepared: Vec<(f64, Vec<f64>)> = per_scale
        .iter()
        .map(|(s, f)| {
            let v = if cfg.per_scale_normalization { unit_range(f, mask) } else { f.as_slice().iter().map(|v| v.as_f64()).collect() };
            (*s, v)
        })
        .collect();
    let passes: Vec<(usize, f64)> = (0..prepared.len()).flat_map(|s| thresholds.iter().map(move |&t| (s, t))).collect();
    let kept: Vec<Kept> = passes
        .par_iter()
        .flat_map_iter(|&(s, t)| {
            let (scale, values) = &prepared[s];
            small_components(values, mask, t, cfg.max_area)
                .into_iter()
                .filter(|p| cfg.accepts(p))
                .map(move |pixels| Kept { pixels, scale: *scale, threshold: t })
                .collect::<Vec<_>>()
        })
        .collect();
    kept.into_iter().map(|k| CandidateRegion::new(k.pixels, k.scale, k.threshold)).collect()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Merges regions sharing at least one pixel, transitively. The merged
/// region takes its source scale and threshold from its largest member
/// (earliest on ties). Output is sorted by centroid `y`, then `x`.
pub fn deduplicate(regions: Vec<CandidateRegion>) -> Vec<CandidateRegion> {
    let n = regions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut owner: HashMap<Pixel, usize> = HashMap::new();
    for (i, r) in regions.iter().enumerate() {
        for p in r.pixels() {
            match owner.get(p) {
                Some(&j) => {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
                None => {
                    owner.insert(*p, i);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let root = find(&mut parent, i);
        groups[root].push(i);
    }
    let mut out: Vec<CandidateRegion> = groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            if g.len() == 1 {
                return regions[g[0]].clone();
            }
            let lead = g.iter().copied().fold(g[0], |best, i| if regions[i].area() > regions[best].area() { i } else { best });
            let pixels: Vec<Pixel> = g.iter().flat_map(|&i| regions[i].pixels().iter().copied()).collect();
            CandidateRegion::new(pixels, regions[lead].source_scale, regions[lead].source_threshold).expect("non-empty")
        })
        .collect();
    out.sort_by(|a, b| {
        let (ca, cb) = (a.centroid(), b.centroid());
        ca.1.total_cmp(&cb.1).then(ca.0.total_cmp(&cb.0))
    });
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateRow {
    id: usize,
    cx: f64,
    cy: f64,
    area: usize,
    source_scale: f64,
    source_threshold: f64,
    pixel_rle: String,
}

pub fn write_candidates_csv<W: std::io::Write>(candidates: &[CandidateRegion], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (id, c) in candidates.iter().enumerate() {
        let (cx, cy) = c.centroid();
        w.serialize(CandidateRow {
            id,
            cx,
            cy,
            area: c.area(),
            source_scale: c.source_scale,
            source_threshold: c.source_threshold,
            pixel_rle: c.pixel_rle(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_candidates_csv<R: std::io::Read>(input: R) -> Result<Vec<CandidateRegion>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: CandidateRow = row?;
        out.push(CandidateRegion::new(CandidateRegion::parse_rle(&row.pixel_rle)?, row.source_scale, row.source_threshold)?);
    }
    Ok(out)
}

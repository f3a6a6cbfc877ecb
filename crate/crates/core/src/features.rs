//! The 29 candidate features: intensity, shape and convergence-filter
//! responses, plus z-score normalization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateRegion;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::lcf::{evaluate_point, GradientField, LcfValues, SupportConfig};
use crate::scalar::Real;

pub const NUM_FEATURES: usize = 29;

/// Canonical feature names in vector order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "Gc", "Gmean", "Gmax", "Gmin", "GNmean", "GNmax", "GNmin", "SArea", "SConA", "SSol", "SExt", "SPer", "SCirD", "SAxiA", "SAxiB",
    "SEcc", "SEul", "FNARF", "FNSBF", "FNSEF", "RNARF", "RNSBF", "RGSEF", "FWARF", "FWSBF", "FWSEF", "RWARF", "RWSBF", "RWSEF",
];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.0[i])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Side of the square neighbourhood with three times the candidate area.
pub fn neighbourhood_side(area: usize) -> usize {
    ((3.0 * area as f64).sqrt().round() as usize).max(3)
}

/// Rounded centroid, clamped into the grid.
fn anchor(c: &CandidateRegion, width: usize, height: usize) -> (usize, usize) {
    let (cx, cy) = c.centroid();
    ((cx.round().max(0.0) as usize).min(width - 1), (cy.round().max(0.0) as usize).min(height - 1))
}

/// `Gc, Gmean, Gmax, Gmin, GNmean, GNmax, GNmin`.
pub fn intensity_features<T: Real>(normalized: &ScalarField<T>, c: &CandidateRegion) -> [f64; 7] {
    let (w, h) = (normalized.width(), normalized.height());
    let at = |x: usize, y: usize| normalized.get(x, y).as_f64();
    let (ax, ay) = anchor(c, w, h);

    let (mut sum, mut hi, mut lo) = (0.0, f64::NEG_INFINITY, f64::INFINITY);
    for &(x, y) in c.pixels() {
        let v = at(x as usize, y as usize);
        sum += v;
        hi = hi.max(v);
        lo = lo.min(v);
    }
    let mean = sum / c.area() as f64;

    let side = neighbourhood_side(c.area()) as i64;
    let x0 = (ax as i64 - (side - 1) / 2).max(0) as usize;
    let y0 = (ay as i64 - (side - 1) / 2).max(0) as usize;
    let x1 = ((ax as i64 + side / 2) as usize).min(w - 1);
    let y1 = ((ay as i64 + side / 2) as usize).min(h - 1);
    let (mut nsum, mut nhi, mut nlo, mut count) = (0.0, f64::NEG_INFINITY, f64::INFINITY, 0usize);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let v = at(x, y);
            nsum += v;
            nhi = nhi.max(v);
            nlo = nlo.min(v);
            count += 1;
        }
    }
    [at(ax, ay), mean, hi, lo, nsum / count as f64, nhi, nlo]
}

/// `SArea .. SEul`.
pub fn shape_features(c: &CandidateRegion) -> [f64; 10] {
    let p = c.props();
    [
        p.area as f64,
        p.convex_area as f64,
        p.solidity,
        p.extent,
        p.perimeter,
        p.equiv_diameter,
        p.major_axis,
        p.minor_axis,
        p.eccentricity,
        p.euler_number as f64,
    ]
}

fn lcf_six(v: &LcfValues) -> [f64; 6] {
    [v.arf_response, v.sbf_response, v.sef_response, v.arf_radius, v.sbf_radius, v.sef_radius]
}

/// Gradient fields of the normalized and weighted images, computed once
/// per image and shared by all candidates.
pub struct FeatureContext<'a, T> {
    pub normalized: &'a ScalarField<T>,
    pub weighted: &'a ScalarField<T>,
    normalized_gradient: GradientField<T>,
    weighted_gradient: GradientField<T>,
    pub support: SupportConfig,
}

impl<'a, T: Real> FeatureContext<'a, T> {
    pub fn new(normalized: &'a ScalarField<T>, weighted: &'a ScalarField<T>, support: &SupportConfig) -> Result<Self> {
        support.validate()?;
        if (normalized.width(), normalized.height()) != (weighted.width(), weighted.height()) {
            return Err(Error::DimensionMismatch { expected: normalized.as_slice().len(), got: weighted.as_slice().len() });
        }
        Ok(Self {
            normalized,
            weighted,
            normalized_gradient: GradientField::of_image(normalized, support.gradient_sigma),
            weighted_gradient: GradientField::of_image(weighted, support.gradient_sigma),
            support: support.clone(),
        })
    }

    /// Filter features `FNARF .. RWSEF` at the rounded centroid.
    pub fn lcf_features(&self, c: &CandidateRegion) -> Result<[f64; 12]> {
        let (w, h) = (self.normalized.width(), self.normalized.height());
        let (cx, cy) = c.centroid();
        let (rx, ry) = (cx.round(), cy.round());
        if rx < 0.0 || ry < 0.0 || rx >= w as f64 || ry >= h as f64 || !self.normalized.in_mask(rx as usize, ry as usize) {
            return Err(Error::CentroidOutsideMask { x: cx, y: cy });
        }
        let n = lcf_six(&evaluate_point(&self.normalized_gradient, (rx, ry), &self.support).values);
        let wv = lcf_six(&evaluate_point(&self.weighted_gradient, (rx, ry), &self.support).values);
        let mut out = [0.0; 12];
        out[..6].copy_from_slice(&n);
        out[6..].copy_from_slice(&wv);
        Ok(out)
    }

    pub fn extract(&self, c: &CandidateRegion) -> Result<FeatureVector> {
        let mut v = [0.0; NUM_FEATURES];
        v[..7].copy_from_slice(&intensity_features(self.normalized, c));
        v[7..17].copy_from_slice(&shape_features(c));
        v[17..].copy_from_slice(&self.lcf_features(c)?);
        Ok(FeatureVector(v))
    }

    pub fn extract_all(&self, candidates: &[CandidateRegion]) -> Result<Vec<FeatureVector>> {
        candidates.par_iter().map(|c| self.extract(c)).collect()
    }
}

/// Filter features for one candidate without a shared context.
pub fn lcf_features<T: Real>(normalized: &ScalarField<T>, weighted: &ScalarField<T>, c: &CandidateRegion, cfg: &SupportConfig) -> Result<[f64; 12]> {
    FeatureContext::new(normalized, weighted, cfg)?.lcf_features(c)
}

/// Per-column mean and standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Sample statistics (`n - 1` denominator); a constant column gets std 1.
    pub fn fit(rows: &[FeatureVector]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::TooFewRows);
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; NUM_FEATURES];
        let mut std = vec![0.0; NUM_FEATURES];
        for j in 0..NUM_FEATURES {
            let m = rows.iter().map(|r| r.0[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r.0[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
            let s = var.sqrt();
            mean[j] = m;
            std[j] = if s > 0.0 && s.is_finite() { s } else { 1.0 };
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, v: &FeatureVector) -> FeatureVector {
        FeatureVector(std::array::from_fn(|j| (v.0[j] - self.mean[j]) / self.std[j]))
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != NUM_FEATURES || self.std.len() != NUM_FEATURES {
            return Err(Error::Model(format!("norm stats need {NUM_FEATURES} columns")));
        }
        if self.std.iter().any(|&s| !(s > 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Model("norm stats must be finite with positive std".into()));
        }
        Ok(())
    }
}

/// Feature rows with identifiers and optional labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<RowId>,
    pub rows: Vec<FeatureVector>,
    /// `+1` for lesion, `-1` otherwise.
    pub labels: Option<Vec<i8>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowId {
    pub image: String,
    pub id: usize,
    pub cx: f64,
    pub cy: f64,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Z-scores with freshly fitted statistics, returned for reuse.
    pub fn normalize(&self) -> Result<(FeatureMatrix, NormStats)> {
        let stats = NormStats::fit(&self.rows)?;
        Ok((self.normalized_with(&stats), stats))
    }

    pub fn normalized_with(&self, stats: &NormStats) -> FeatureMatrix {
        FeatureMatrix { ids: self.ids.clone(), rows: self.rows.iter().map(|r| stats.apply(r)).collect(), labels: self.labels.clone() }
    }

    pub fn append(&mut self, other: FeatureMatrix) {
        let had_labels = self.labels.is_some() || self.rows.is_empty();
        match (&mut self.labels, other.labels) {
            (Some(a), Some(b)) => a.extend(b),
            (None, Some(b)) if had_labels => self.labels = Some(b),
            (l, _) => *l = None,
        }
        self.ids.extend(other.ids);
        self.rows.extend(other.rows);
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["image", "id", "cx", "cy", "label"];
        header.extend(FEATURE_NAMES);
        w.write_record(&header)?;
        for (k, (id, row)) in self.ids.iter().zip(&self.rows).enumerate() {
            let mut rec = vec![id.image.clone(), id.id.to_string(), id.cx.to_string(), id.cy.to_string()];
            rec.push(self.labels.as_ref().map_or(String::new(), |l| l[k].to_string()));
            rec.extend(row.0.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| Error::parse(format!("missing column `{name}`")));
        let (ci, cid, cx, cy, cl) = (col("image")?, col("id")?, col("cx")?, col("cy")?, col("label")?);
        let fcols = FEATURE_NAMES.iter().map(|n| col(n)).collect::<Result<Vec<_>>>()?;
        let num = |s: &str, what: &str| s.trim().parse::<f64>().map_err(|_| Error::parse(format!("bad {what} `{s}`")));
        let mut m = FeatureMatrix::default();
        let mut labels = Vec::new();
        let mut all_labelled = true;
        for rec in r.records() {
            let rec = rec?;
            let id = RowId {
                image: rec[ci].to_owned(),
                id: rec[cid].trim().parse().map_err(|_| Error::parse(format!("bad id `{}`", &rec[cid])))?,
                cx: num(&rec[cx], "cx")?,
                cy: num(&rec[cy], "cy")?,
            };
            let mut v = [0.0; NUM_FEATURES];
            for (j, &c) in fcols.iter().enumerate() {
                v[j] = num(&rec[c], FEATURE_NAMES[j])?;
                if !v[j].is_finite() {
                    return Err(Error::parse(format!("non-finite {}", FEATURE_NAMES[j])));
                }
            }
            match rec[cl].trim() {
                "" => all_labelled = false,
                "1" | "+1" => labels.push(1),
                "-1" | "0" => labels.push(-1),
                other => return Err(Error::parse(format!("bad label `{other}`"))),
            }
            m.ids.push(id);
            m.rows.push(FeatureVector(v));
        }
        m.labels = if all_labelled { Some(labels) } else { None };
        Ok(m)
    }
}

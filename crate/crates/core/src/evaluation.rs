//! Lesion-level FROC analysis and image-level ROC AUC.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FPI values at which the FROC score samples sensitivity.
pub const FPI_TARGETS: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
pub const FPI_RANGE: (f64, f64) = (0.125, 8.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub x: f64,
    pub y: f64,
    pub radius: Option<f64>,
}

/// Annotations of one image; an empty list marks a healthy image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTruth {
    pub image_id: String,
    pub annotations: Vec<Annotation>,
}

impl ImageTruth {
    pub fn has_lesions(&self) -> bool {
        !self.annotations.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    pub images: Vec<ImageTruth>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthRow {
    image_id: String,
    x: Option<f64>,
    y: Option<f64>,
    radius: Option<f64>,
}

impl GroundTruth {
    pub fn get(&self, image_id: &str) -> Option<&ImageTruth> {
        self.images.iter().find(|t| t.image_id == image_id)
    }

    pub fn num_annotations(&self) -> usize {
        self.images.iter().map(|t| t.annotations.len()).sum()
    }

    /// Columns `image_id, x, y, radius`; a row with empty `x` and `y`
    /// registers an image without lesions.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let mut map: BTreeMap<String, Vec<Annotation>> = BTreeMap::new();
        let mut order = Vec::new();
        for row in r.deserialize() {
            let row: TruthRow = row?;
            if !map.contains_key(&row.image_id) {
                order.push(row.image_id.clone());
            }
            let list = map.entry(row.image_id.clone()).or_default();
            match (row.x, row.y) {
                (Some(x), Some(y)) => {
                    if !x.is_finite() || !y.is_finite() || row.radius.is_some_and(|r| !(r >= 0.0)) {
                        return Err(Error::parse(format!("bad annotation for `{}`", row.image_id)));
                    }
                    list.push(Annotation { x, y, radius: row.radius });
                }
                (None, None) => {}
                _ => return Err(Error::parse(format!("annotation for `{}` needs both x and y", row.image_id))),
            }
        }
        Ok(Self { images: order.into_iter().map(|id| ImageTruth { annotations: map.remove(&id).unwrap_or_default(), image_id: id }).collect() })
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for t in &self.images {
            if t.annotations.is_empty() {
                w.serialize(TruthRow { image_id: t.image_id.clone(), x: None, y: None, radius: None })?;
            }
            for a in &t.annotations {
                w.serialize(TruthRow { image_id: t.image_id.clone(), x: Some(a.x), y: Some(a.y), radius: a.radius })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

pub fn read_detections_csv<R: std::io::Read>(input: R) -> Result<Vec<Detection>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        let d: Detection = row?;
        if !d.score.is_finite() {
            return Err(Error::parse(format!("non-finite score in `{}`", d.image_id)));
        }
        out.push(d);
    }
    Ok(out)
}

pub fn write_detections_csv<W: std::io::Write>(detections: &[Detection], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for d in detections {
        w.serialize(d)?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of matching one image's detections against its annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchOutcome {
    /// Per detection, in input order.
    pub true_positive: Vec<bool>,
    /// Per annotation.
    pub hit: Vec<bool>,
}

fn by_descending_score(detections: &[&Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score).then(a.cmp(&b)));
    order
}

/// Greedy one-to-one matching in descending score order. A detection hits
/// the nearest unhit annotation within `max(match_radius, radius)`.
pub fn match_detections(detections: &[&Detection], truth: &[Annotation], match_radius: f64) -> MatchOutcome {
    let mut true_positive = vec![false; detections.len()];
    let mut hit = vec![false; truth.len()];
    for i in by_descending_score(detections) {
        let d = detections[i];
        let mut best: Option<(f64, usize)> = None;
        for (k, a) in truth.iter().enumerate() {
            if hit[k] {
                continue;
            }
            let dist = (d.x - a.x).hypot(d.y - a.y);
            if dist <= match_radius.max(a.radius.unwrap_or(0.0)) && best.is_none_or(|(bd, _)| dist < bd) {
                best = Some((dist, k));
            }
        }
        if let Some((_, k)) = best {
            hit[k] = true;
            true_positive[i] = true;
        }
    }
    MatchOutcome { true_positive, hit }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrocPoint {
    /// Lowest score counted as a detection; `None` for the empty set.
    pub threshold: Option<f64>,
    pub fpi: f64,
    pub sensitivity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrocCurve {
    pub points: Vec<FrocPoint>,
}

/// Sweeps the threshold over every distinct score. Detections on images
/// missing from `truth` are rejected.
pub fn froc(detections: &[Detection], truth: &GroundTruth, match_radius: f64) -> Result<FrocCurve> {
    let total = truth.num_annotations();
    if total == 0 {
        return Err(Error::NoAnnotations);
    }
    let images = truth.images.len() as f64;
    let mut per_image: BTreeMap<&str, Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        if truth.get(&d.image_id).is_none() {
            return Err(Error::parse(format!("detection on unknown image `{}`", d.image_id)));
        }
        per_image.entry(d.image_id.as_str()).or_default().push(d);
    }
    let mut scored: Vec<(f64, bool)> = Vec::with_capacity(detections.len());
    for (id, dets) in &per_image {
        let outcome = match_detections(dets, &truth.get(id).expect("checked").annotations, match_radius);
        scored.extend(dets.iter().zip(outcome.true_positive).map(|(d, tp)| (d.score, tp)));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![FrocPoint { threshold: None, fpi: 0.0, sensitivity: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let s = scored[i].0;
        while i < scored.len() && scored[i].0 == s {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(FrocPoint { threshold: Some(s), fpi: fp as f64 / images, sensitivity: tp as f64 / total as f64 });
    }
    Ok(FrocCurve { points })
}

impl FrocCurve {
    /// Sensitivity at `fpi`: linear between points, the upper value on
    /// vertical steps, held constant past the last point.
    pub fn sensitivity_at(&self, fpi: f64) -> f64 {
        let p = &self.points;
        let k = match p.iter().rposition(|q| q.fpi <= fpi) {
            Some(k) => k,
            // Before the first point: interpolate from the origin.
            None => return p.first().map_or(0.0, |q| q.sensitivity * fpi / q.fpi),
        };
        if p[k].fpi == fpi || k + 1 == p.len() {
            return p[k].sensitivity;
        }
        let (a, b) = (p[k], p[k + 1]);
        a.sensitivity + (b.sensitivity - a.sensitivity) * (fpi - a.fpi) / (b.fpi - a.fpi)
    }

    /// Limit of the sensitivity from the left of `fpi`.
    fn sensitivity_before(&self, fpi: f64) -> f64 {
        let p = &self.points;
        match p.iter().position(|q| q.fpi >= fpi) {
            None => p.last().map_or(0.0, |q| q.sensitivity),
            Some(0) => {
                let q = p[0];
                if q.fpi == fpi || q.fpi == 0.0 {
                    q.sensitivity
                } else {
                    q.sensitivity * fpi / q.fpi
                }
            }
            Some(k) if p[k].fpi == fpi => p[k].sensitivity,
            Some(k) => {
                let (a, b) = (p[k - 1], p[k]);
                a.sensitivity + (b.sensitivity - a.sensitivity) * (fpi - a.fpi) / (b.fpi - a.fpi)
            }
        }
    }

    pub fn sensitivities(&self) -> [f64; 7] {
        FPI_TARGETS.map(|f| self.sensitivity_at(f))
    }

    /// Mean sensitivity over the seven target FPIs.
    pub fn score(&self) -> f64 {
        self.sensitivities().iter().sum::<f64>() / FPI_TARGETS.len() as f64
    }

    /// Area under the curve between 1/8 and 8 FPI, divided by 8.
    pub fn partial_auc(&self) -> f64 {
        let (lo, hi) = FPI_RANGE;
        let mut knots = vec![lo];
        knots.extend(self.points.iter().map(|p| p.fpi).filter(|&f| f > lo && f < hi));
        knots.push(hi);
        knots.dedup();
        let mut area = 0.0;
        for w in knots.windows(2) {
            area += (w[1] - w[0]) * (self.sensitivity_at(w[0]) + self.sensitivity_before(w[1])) / 2.0;
        }
        area / hi
    }
}

pub fn froc_score(curve: &FrocCurve) -> f64 {
    curve.score()
}

pub fn froc_partial_auc(curve: &FrocCurve) -> f64 {
    curve.partial_auc()
}

/// Mann-Whitney AUC with ties counted as one half.
pub fn image_roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), got: positive.len() });
    }
    let pos: Vec<f64> = scores.iter().zip(positive).filter(|(_, &p)| p).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(positive).filter(|(_, &p)| !p).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleLabel);
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

/// Highest detection score per image, 0 for images without detections.
pub fn image_scores(detections: &[Detection], truth: &GroundTruth) -> Vec<f64> {
    truth
        .images
        .iter()
        .map(|t| detections.iter().filter(|d| d.image_id == t.image_id).map(|d| d.score).fold(0.0, f64::max))
        .collect()
}

/// Fold index per image: a seeded shuffle dealt round-robin into `k` folds.
pub fn fold_assignment(num_images: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::config("need at least two folds"));
    }
    if num_images < k {
        return Err(Error::TooFewImages { images: num_images, folds: k });
    }
    let mut order: Vec<usize> = (0..num_images).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; num_images];
    for (pos, &img) in order.iter().enumerate() {
        fold[img] = pos % k;
    }
    Ok(fold)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub num_images: usize,
    pub num_annotations: usize,
    pub num_detections: usize,
    pub match_radius: f64,
    pub fpi_targets: [f64; 7],
    pub sensitivities: [f64; 7],
    pub f_score: f64,
    pub f_auc: f64,
    /// Image-level AUC; absent when every image has the same label.
    pub auc: Option<f64>,
    pub curve: FrocCurve,
}

pub fn evaluate(detections: &[Detection], truth: &GroundTruth, match_radius: f64) -> Result<EvaluationReport> {
    let curve = froc(detections, truth, match_radius)?;
    let labels: Vec<bool> = truth.images.iter().map(|t| t.has_lesions()).collect();
    let auc = match image_roc_auc(&image_scores(detections, truth), &labels) {
        Ok(a) => Some(a),
        Err(Error::SingleLabel) => None,
        Err(e) => return Err(e),
    };
    Ok(EvaluationReport {
        num_images: truth.images.len(),
        num_annotations: truth.num_annotations(),
        num_detections: detections.len(),
        match_radius,
        fpi_targets: FPI_TARGETS,
        sensitivities: curve.sensitivities(),
        f_score: curve.score(),
        f_auc: curve.partial_auc(),
        auc,
        curve,
    })
}

impl EvaluationReport {
    /// Mean of the scalar metrics over `reports`; counts and the curve come
    /// from the first. The AUC is averaged over the reports that have one.
    pub fn averaged(reports: &[EvaluationReport]) -> Option<EvaluationReport> {
        let (first, rest) = reports.split_first()?;
        if rest.is_empty() {
            return Some(first.clone());
        }
        let n = reports.len() as f64;
        let mut out = first.clone();
        out.sensitivities = std::array::from_fn(|k| reports.iter().map(|r| r.sensitivities[k]).sum::<f64>() / n);
        out.f_score = reports.iter().map(|r| r.f_score).sum::<f64>() / n;
        out.f_auc = reports.iter().map(|r| r.f_auc).sum::<f64>() / n;
        let aucs: Vec<f64> = reports.iter().filter_map(|r| r.auc).collect();
        out.auc = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
        Some(out)
    }

    /// Curve points as `threshold,fpi,sensitivity` rows.
    pub fn write_curve_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["threshold", "fpi", "sensitivity"])?;
        for p in &self.curve.points {
            w.write_record([p.threshold.map_or(String::new(), |t| t.to_string()), p.fpi.to_string(), p.sensitivity.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(id: &str, x: f64, y: f64, score: f64) -> Detection {
        Detection { image_id: id.into(), x, y, score }
    }

    fn truth_one() -> GroundTruth {
        GroundTruth { images: vec![ImageTruth { image_id: "a".into(), annotations: vec![Annotation { x: 10.0, y: 10.0, radius: None }] }] }
    }

    fn curve(points: &[(f64, f64)]) -> FrocCurve {
        FrocCurve { points: points.iter().map(|&(fpi, sensitivity)| FrocPoint { threshold: None, fpi, sensitivity }).collect() }
    }

    #[test]
    fn matching_rules() {
        let a = [Annotation { x: 10.0, y: 10.0, radius: None }];
        let d1 = det("a", 10.0, 10.0, 0.9);
        let m = match_detections(&[&d1], &a, 5.0);
        assert_eq!(m.true_positive, vec![true]);
        let d2 = det("a", 11.0, 10.0, 0.95);
        let m = match_detections(&[&d1, &d2], &a, 5.0);
        assert_eq!(m.true_positive, vec![false, true]);
        let far = det("a", 16.0, 10.0, 0.9);
        assert_eq!(match_detections(&[&far], &a, 5.0).true_positive, vec![false]);
        let edge = det("a", 15.0, 10.0, 0.9);
        assert_eq!(match_detections(&[&edge], &a, 5.0).true_positive, vec![true]);
        // A larger annotation radius widens the match.
        let big = [Annotation { x: 10.0, y: 10.0, radius: Some(7.0) }];
        assert_eq!(match_detections(&[&far], &big, 5.0).true_positive, vec![true]);
    }

    #[test]
    fn perfect_and_empty_detectors() {
        let t = truth_one();
        let c = froc(&[det("a", 10.0, 10.0, 0.9)], &t, 5.0).unwrap();
        assert_eq!(c.points.last().unwrap().sensitivity, 1.0);
        assert_eq!(c.points.last().unwrap().fpi, 0.0);
        assert_eq!(c.score(), 1.0);

        let e = froc(&[], &t, 5.0).unwrap();
        assert_eq!(e.points, vec![FrocPoint { threshold: None, fpi: 0.0, sensitivity: 0.0 }]);
        assert_eq!(e.score(), 0.0);
        assert_eq!(e.partial_auc(), 0.0);
        assert!(matches!(froc(&[], &GroundTruth { images: vec![] }, 5.0), Err(Error::NoAnnotations)));
    }

    #[test]
    fn healthy_images_count_in_fpi() {
        let mut t = truth_one();
        t.images.push(ImageTruth { image_id: "h".into(), annotations: vec![] });
        let c = froc(&[det("h", 3.0, 3.0, 0.5)], &t, 5.0).unwrap();
        assert_eq!(c.points.last().unwrap().fpi, 0.5);
    }

    #[test]
    fn score_of_constant_curve() {
        let c = curve(&[(0.0, 0.0), (0.0, 0.6)]);
        assert!((c.score() - 0.6).abs() < 1e-15);
        let one = curve(&[(0.0, 0.0), (0.0, 1.0)]);
        assert_eq!(one.partial_auc(), 0.984375);
    }

    #[test]
    fn linear_partial_auc() {
        let c = curve(&[(0.0, 0.0), (0.125, 0.0), (8.0, 1.0)]);
        assert!((c.partial_auc() - 0.5 * 7.875 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn interpolation_and_steps() {
        let c = curve(&[(0.0, 0.0), (1.0, 0.2), (1.0, 0.6), (3.0, 1.0)]);
        assert!((c.sensitivity_at(0.5) - 0.1).abs() < 1e-15);
        assert_eq!(c.sensitivity_at(1.0), 0.6);
        assert!((c.sensitivity_at(2.0) - 0.8).abs() < 1e-15);
        assert_eq!(c.sensitivity_at(10.0), 1.0);
        assert_eq!(c.sensitivity_before(1.0), 0.2);
    }

    #[test]
    fn auc_cases() {
        assert_eq!(image_roc_auc(&[0.9, 0.8, 0.85, 0.1], &[true, true, false, false]).unwrap(), 0.75);
        assert_eq!(image_roc_auc(&[0.4; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(image_roc_auc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert!(matches!(image_roc_auc(&[0.9, 0.1], &[true, true]), Err(Error::SingleLabel)));
    }

    #[test]
    fn folds() {
        let f = fold_assignment(20, 10, 3).unwrap();
        for k in 0..10 {
            assert_eq!(f.iter().filter(|&&v| v == k).count(), 2);
        }
        assert_eq!(f, fold_assignment(20, 10, 3).unwrap());
        let loo = fold_assignment(7, 7, 1).unwrap();
        let mut s = loo.clone();
        s.sort_unstable();
        assert_eq!(s, (0..7).collect::<Vec<_>>());
        assert!(matches!(fold_assignment(3, 5, 0), Err(Error::TooFewImages { .. })));
    }

    #[test]
    fn truth_csv() {
        let text = "image_id,x,y,radius\na,10,12,3\na,4,5,\nh,,,\n";
        let t = GroundTruth::read_csv(text.as_bytes()).unwrap();
        assert_eq!(t.images.len(), 2);
        assert_eq!(t.images[0].annotations[1].radius, None);
        assert!(!t.images[1].has_lesions());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(GroundTruth::read_csv(buf.as_slice()).unwrap(), t);
        assert!(GroundTruth::read_csv("image_id,x,y,radius\na,1,,\n".as_bytes()).is_err());
    }

    #[test]
    fn averaged_reports() {
        let truth = GroundTruth {
            images: vec![
                ImageTruth { image_id: "a".into(), annotations: vec![Annotation { x: 10.0, y: 10.0, radius: None }] },
                ImageTruth { image_id: "b".into(), annotations: vec![] },
            ],
        };
        let hit = evaluate(&[det("a", 10.0, 10.0, 0.9)], &truth, 5.0).unwrap();
        let miss = evaluate(&[det("b", 10.0, 10.0, 0.9)], &truth, 5.0).unwrap();
        let mean = EvaluationReport::averaged(&[hit.clone(), miss.clone()]).unwrap();
        assert_eq!(mean.f_score, (hit.f_score + miss.f_score) / 2.0);
        assert_eq!(mean.auc, Some((hit.auc.unwrap() + miss.auc.unwrap()) / 2.0));
        assert_eq!(mean.curve, hit.curve);
        assert_eq!(EvaluationReport::averaged(std::slice::from_ref(&hit)).unwrap(), hit);
        assert!(EvaluationReport::averaged(&[]).is_none());
    }
}

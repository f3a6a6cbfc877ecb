//! Connected-component labeling and region shape descriptors.

use serde::{Deserialize, Serialize};

use crate::field::Mask;

/// Pixel coordinate `(x, y)`.
pub type Pixel = (u32, u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

const N4: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
const N8: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &N4,
            Connectivity::Eight => &N8,
        }
    }
}

/// Label image: 0 is background, components are numbered from 1 in raster
/// order of their first pixel.
pub struct Labels {
    pub labels: Vec<u32>,
    pub count: usize,
}

pub fn label_components(mask: &Mask, conn: Connectivity) -> Labels {
    let (w, h) = (mask.width(), mask.height());
    let fg = mask.as_slice();
    let mut labels = vec![0u32; w * h];
    let mut count = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !fg[start] || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for &(dx, dy) in conn.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if fg[j] && labels[j] == 0 {
                    labels[j] = count;
                    stack.push(j);
                }
            }
        }
    }
    Labels { labels, count: count as usize }
}

/// Pixel lists of every component, ordered by label; pixels within a
/// component are in raster order.
pub fn components(mask: &Mask, conn: Connectivity) -> Vec<Vec<Pixel>> {
    let w = mask.width();
    let lab = label_components(mask, conn);
    let mut out = vec![Vec::new(); lab.count];
    for (i, &l) in lab.labels.iter().enumerate() {
        if l > 0 {
            out[l as usize - 1].push(((i % w) as u32, (i / w) as u32));
        }
    }
    out
}

/// Shape descriptors of a pixel region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionProps {
    pub area: usize,
    pub convex_area: usize,
    pub perimeter: f64,
    pub eccentricity: f64,
    pub extent: f64,
    pub euler_number: i64,
    pub solidity: f64,
    pub equiv_diameter: f64,
    pub major_axis: f64,
    pub minor_axis: f64,
}

/// Axis-aligned bounding box, inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    pub fn of(pixels: &[Pixel]) -> Self {
        let mut b = BoundingBox { x0: u32::MAX, y0: u32::MAX, x1: 0, y1: 0 };
        for &(x, y) in pixels {
            b.x0 = b.x0.min(x);
            b.y0 = b.y0.min(y);
            b.x1 = b.x1.max(x);
            b.y1 = b.y1.max(y);
        }
        b
    }

    pub fn width(&self) -> usize {
        (self.x1 - self.x0 + 1) as usize
    }

    pub fn height(&self) -> usize {
        (self.y1 - self.y0 + 1) as usize
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }
}

pub fn centroid(pixels: &[Pixel]) -> (f64, f64) {
    let n = pixels.len() as f64;
    let (sx, sy) = pixels.iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x as f64, sy + y as f64));
    (sx / n, sy / n)
}

/// Local bitmap padded by one pixel on each side.
struct Patch {
    w: usize,
    h: usize,
    bits: Vec<bool>,
}

impl Patch {
    fn new(pixels: &[Pixel], bb: &BoundingBox) -> Self {
        let (w, h) = (bb.width() + 2, bb.height() + 2);
        let mut bits = vec![false; w * h];
        for &(x, y) in pixels {
            bits[(y - bb.y0 + 1) as usize * w + (x - bb.x0 + 1) as usize] = true;
        }
        Patch { w, h, bits }
    }

    #[inline]
    fn at(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h && self.bits[y as usize * self.w + x as usize]
    }

    fn mask(&self, fg: bool) -> Mask {
        Mask::new(self.w, self.h, self.bits.iter().map(|&b| b == fg).collect()).expect("sized")
    }
}

/// Cheap descriptors only: area, bounding-box extent.
pub fn area_and_extent(pixels: &[Pixel]) -> (usize, f64) {
    let bb = BoundingBox::of(pixels);
    (pixels.len(), pixels.len() as f64 / bb.area() as f64)
}

/// Objects (8-connected) minus holes (4-connected background pieces not
/// touching the border).
pub fn euler_number(pixels: &[Pixel]) -> i64 {
    let bb = BoundingBox::of(pixels);
    let patch = Patch::new(pixels, &bb);
    let objects = label_components(&patch.mask(true), Connectivity::Eight).count as i64;
    // The padding ring guarantees the outer background is a single piece.
    let background = label_components(&patch.mask(false), Connectivity::Four).count as i64;
    objects - (background - 1)
}

/// Ellipse with the same normalized second central moments:
/// `(major_axis, minor_axis, eccentricity)`.
pub fn moment_ellipse(pixels: &[Pixel]) -> (f64, f64, f64) {
    let n = pixels.len() as f64;
    let (cx, cy) = centroid(pixels);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in pixels {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    // 1/12 is the second moment of a unit-length pixel.
    let uxx = sxx / n + 1.0 / 12.0;
    let uyy = syy / n + 1.0 / 12.0;
    let uxy = sxy / n;
    let common = ((uxx - uyy).powi(2) + 4.0 * uxy * uxy).sqrt();
    let major = 2.0 * 2f64.sqrt() * (uxx + uyy + common).sqrt();
    let minor = 2.0 * 2f64.sqrt() * (uxx + uyy - common).max(0.0).sqrt();
    let ecc = if major > 0.0 {
        2.0 * ((major / 2.0).powi(2) - (minor / 2.0).powi(2)).max(0.0).sqrt() / major
    } else {
        0.0
    };
    (major, minor, ecc)
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull of pixel centers (counter-clockwise in a y-up frame,
/// collinear points removed).
fn convex_hull(pixels: &[Pixel]) -> Vec<(i64, i64)> {
    // Only the row extremes can be hull vertices.
    let mut extremes: std::collections::BTreeMap<i64, (i64, i64)> = Default::default();
    for &(x, y) in pixels {
        let e = extremes.entry(y as i64).or_insert((x as i64, x as i64));
        e.0 = e.0.min(x as i64);
        e.1 = e.1.max(x as i64);
    }
    let mut pts: Vec<(i64, i64)> = Vec::with_capacity(extremes.len() * 2);
    for (&y, &(lo, hi)) in &extremes {
        pts.push((lo, y));
        if hi != lo {
            pts.push((hi, y));
        }
    }
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Number of lattice points inside or on the convex hull of the pixel centers.
pub fn convex_area(pixels: &[Pixel]) -> usize {
    let hull = convex_hull(pixels);
    let bb = BoundingBox::of(pixels);
    let inside = |p: (i64, i64)| -> bool {
        match hull.len() {
            1 => p == hull[0],
            2 => {
                let (a, b) = (hull[0], hull[1]);
                cross(a, b, p) == 0
                    && p.0 >= a.0.min(b.0)
                    && p.0 <= a.0.max(b.0)
                    && p.1 >= a.1.min(b.1)
                    && p.1 <= a.1.max(b.1)
            }
            n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
        }
    };
    let mut count = 0;
    for y in bb.y0..=bb.y1 {
        for x in bb.x0..=bb.x1 {
            if inside((x as i64, y as i64)) {
                count += 1;
            }
        }
    }
    count
}

/// Length of the traced outer boundary: unit steps for axial moves and
/// `sqrt(2)` for diagonal moves between consecutive boundary pixels.
pub fn perimeter(pixels: &[Pixel]) -> f64 {
    let bb = BoundingBox::of(pixels);
    let patch = Patch::new(pixels, &bb);
    // Topmost-leftmost pixel; its west neighbour is background.
    let start = {
        let i = patch.bits.iter().position(|&b| b).expect("non-empty region");
        ((i % patch.w) as i64, (i / patch.w) as i64)
    };
    let next = |p: (i64, i64), backtrack: usize| -> Option<(usize, (i64, i64))> {
        (1..=8).map(|k| (backtrack + k) % 8).find_map(|d| {
            let q = (p.0 + N8[d].0, p.1 + N8[d].1);
            patch.at(q.0, q.1).then_some((d, q))
        })
    };
    let Some((first_dir, first)) = next(start, 4) else {
        return 0.0;
    };
    let step = |d: usize| if d.is_multiple_of(2) { 1.0 } else { std::f64::consts::SQRT_2 };
    let mut length = step(first_dir);
    let (mut cur, mut dir) = (first, first_dir);
    loop {
        let backtrack = if dir % 2 == 0 { (dir + 6) % 8 } else { (dir + 5) % 8 };
        let (d, q) = next(cur, backtrack).expect("boundary continues");
        if cur == start && q == first {
            break;
        }
        length += step(d);
        cur = q;
        dir = d;
    }
    length
}

pub fn region_props(pixels: &[Pixel]) -> RegionProps {
    assert!(!pixels.is_empty(), "region_props on an empty region");
    let (area, extent) = area_and_extent(pixels);
    let convex_area = convex_area(pixels);
    let (major_axis, minor_axis, eccentricity) = moment_ellipse(pixels);
    RegionProps {
        area,
        convex_area,
        perimeter: perimeter(pixels),
        eccentricity,
        extent,
        euler_number: euler_number(pixels),
        solidity: area as f64 / convex_area as f64,
        equiv_diameter: (4.0 * area as f64 / std::f64::consts::PI).sqrt(),
        major_axis,
        minor_axis,
    }
}

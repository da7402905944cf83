//! Planar geometry for cell layouts: Voronoi cells clipped to the study
//! region, exact cell/disc intersection areas, and the distance and angle
//! densities that feed the coverage integrals.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use crate::error::GeometryError;
use crate::scenario::Region;

/// Sites closer than this (km) are treated as duplicates.
pub const DUPLICATE_SITE_TOL_KM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Shoelace area of a polygon; positive for counter-clockwise vertex order.
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += poly[i].cross(poly[(i + 1) % n]);
    }
    0.5 * acc
}

/// Clip a convex polygon against the half-plane `{p : n·p <= c}`.
fn clip_half_plane(poly: &[Point], normal: Point, c: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    let n = poly.len();
    for i in 0..n {
        let cur = poly[i];
        let next = poly[(i + 1) % n];
        let fc = normal.dot(cur) - c;
        let fn_ = normal.dot(next) - c;
        if fc <= 0.0 {
            out.push(cur);
        }
        if (fc < 0.0 && fn_ > 0.0) || (fc > 0.0 && fn_ < 0.0) {
            let t = fc / (fc - fn_);
            out.push(cur + (next - cur) * t);
        }
    }
    out
}

/// A Voronoi cell of one site, clipped to the region rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoronoiCell {
    /// Index of the generating site in the input list.
    pub site_index: usize,
    pub site: Point,
    /// Counter-clockwise vertices (km).
    pub polygon: Vec<Point>,
    /// Cell area (km²).
    pub area: f64,
}

impl VoronoiCell {
    /// Largest distance from the site to any point of the cell.
    pub fn circumradius(&self) -> f64 {
        self.polygon
            .iter()
            .map(|p| p.dist(self.site))
            .fold(0.0, f64::max)
    }

    /// Distance from the site to the closest cell edge.
    pub fn inradius(&self) -> f64 {
        let n = self.polygon.len();
        (0..n)
            .map(|i| segment_distance(self.site, self.polygon[i], self.polygon[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Radii at which the growing disc around the site changes how it meets
    /// the cell boundary (edge tangencies and vertex crossings), sorted.
    pub fn distance_breakpoints(&self) -> Vec<f64> {
        let n = self.polygon.len();
        let mut pts: Vec<f64> = Vec::with_capacity(2 * n);
        for i in 0..n {
            let a = self.polygon[i];
            let b = self.polygon[(i + 1) % n];
            pts.push(a.dist(self.site));
            pts.push(segment_distance(self.site, a, b));
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        pts
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Voronoi tessellation of `sites` restricted to `region`, one cell per site
/// in input order. Each cell is the region rectangle intersected with the
/// half-planes closer to its site than to every other site.
pub fn voronoi_tessellation(
    sites: &[Point],
    region: &Region,
) -> Result<Vec<VoronoiCell>, GeometryError> {
    if sites.is_empty() {
        return Err(GeometryError::NoSites);
    }
    for (i, a) in sites.iter().enumerate() {
        if !region.contains(*a) {
            return Err(GeometryError::SiteOutsideRegion { index: i });
        }
        for (j, b) in sites.iter().enumerate().skip(i + 1) {
            if a.dist(*b) < DUPLICATE_SITE_TOL_KM {
                return Err(GeometryError::DuplicateSite {
                    first: i,
                    second: j,
                });
            }
        }
    }
    let rect = region.corners();
    let cells = sites
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut poly = rect.to_vec();
            for (j, &o) in sites.iter().enumerate() {
                if i == j {
                    continue;
                }
                // |p - s|² <= |p - o|²  <=>  2 (o - s)·p <= |o|² - |s|²
                let normal = (o - s) * 2.0;
                let c = o.norm_sq() - s.norm_sq();
                poly = clip_half_plane(&poly, normal, c);
                if poly.is_empty() {
                    break;
                }
            }
            let area = signed_area(&poly);
            VoronoiCell {
                site_index: i,
                site: s,
                polygon: poly,
                area,
            }
        })
        .collect();
    Ok(cells)
}

/// Signed area of `triangle(O, a, b) ∩ disc(O, r)`; `a`, `b` relative to O.
fn triangle_disc_area(a: Point, b: Point, r: f64) -> f64 {
    let r2 = r * r;
    let sector = |p: Point, q: Point| 0.5 * r2 * p.cross(q).atan2(p.dot(q));
    let tri = |p: Point, q: Point| 0.5 * p.cross(q);

    let da = a.norm_sq();
    let db = b.norm_sq();
    let a_in = da <= r2;
    let b_in = db <= r2;
    if a_in && b_in {
        return tri(a, b);
    }
    // |a + t d|² = r²
    let d = b - a;
    let qa = d.norm_sq();
    if qa == 0.0 {
        return 0.0;
    }
    let qb = 2.0 * a.dot(d);
    let qc = da - r2;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc <= 0.0 {
        return sector(a, b);
    }
    let sq = disc.sqrt();
    let t1 = (-qb - sq) / (2.0 * qa);
    let t2 = (-qb + sq) / (2.0 * qa);
    let p1 = a + d * t1.clamp(0.0, 1.0);
    let p2 = a + d * t2.clamp(0.0, 1.0);
    match (a_in, b_in) {
        (true, false) => tri(a, p2) + sector(p2, b),
        (false, true) => sector(a, p1) + tri(p1, b),
        _ => {
            if t1 >= 1.0 || t2 <= 0.0 || t1 >= t2 {
                sector(a, b)
            } else {
                sector(a, p1) + tri(p1, p2) + sector(p2, b)
            }
        }
    }
}

/// Area of a convex polygon intersected with the disc of radius `radius`
/// centred at `center`. The centre need not lie inside the polygon.
pub fn polygon_disc_area(polygon: &[Point], center: Point, radius: f64) -> f64 {
    if radius <= 0.0 || polygon.len() < 3 {
        return 0.0;
    }
    let n = polygon.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = polygon[i] - center;
        let b = polygon[(i + 1) % n] - center;
        acc += triangle_disc_area(a, b, radius);
    }
    acc.abs()
}

/// Area of the cell that lies within distance `u` of its site.
pub fn cell_disc_area(cell: &VoronoiCell, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= cell.circumradius() {
        return cell.area;
    }
    polygon_disc_area(&cell.polygon, cell.site, u).min(cell.area)
}

/// Density of the site-to-UE distance for a UE uniform over the cell:
/// `(1/A_b) dA(u)/du`, with the derivative taken by central difference.
pub fn cell_distance_pdf(cell: &VoronoiCell, u: f64) -> f64 {
    if u < 0.0 || u > cell.circumradius() || cell.area <= 0.0 {
        return 0.0;
    }
    let h = (1e-3 * u).max(1e-4);
    let lo = (u - h).max(0.0);
    let hi = u + h;
    let d = (cell_disc_area(cell, hi) - cell_disc_area(cell, lo)) / (hi - lo);
    (d / cell.area).max(0.0)
}

/// Distance density for a UE uniform over a disc of radius `radius`.
pub fn circular_distance_pdf(radius: f64, u: f64) -> f64 {
    if (0.0..=radius).contains(&u) {
        2.0 * u / (radius * radius)
    } else {
        0.0
    }
}

/// Distance CDF for a UE uniform over a disc of radius `radius`.
pub fn circular_distance_cdf(radius: f64, u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= radius {
        1.0
    } else {
        u * u / (radius * radius)
    }
}

/// Uniform density of the UE bearing on `[0, 2π)`.
pub fn angle_pdf(v: f64) -> f64 {
    if (0.0..2.0 * PI).contains(&v) {
        1.0 / (2.0 * PI)
    } else {
        0.0
    }
}

/// Law-of-cosines distance from a UE at distance `d` from its serving site
/// to an interferer at distance `d_bj`, with angle `theta` between them.
pub fn interferer_distance(d: f64, d_bj: f64, theta: f64) -> f64 {
    (d * d + d_bj * d_bj - 2.0 * d * d_bj * theta.cos())
        .max(0.0)
        .sqrt()
}

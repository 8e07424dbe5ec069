//! Planar homographies and their robust estimation from point matches.

use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector3};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{MotionError, Result};
use crate::image::Point;

/// 3×3 projective map, kept with `h[2][2] = 1` whenever that entry is non-zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self(Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        Self(Matrix3::from_fn(|r, c| rows[r][c])).normalized()
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn normalized(self) -> Self {
        let s = self.0[(2, 2)];
        if s.abs() > 1e-12 {
            Self(self.0 / s)
        } else {
            self
        }
    }

    pub fn det(&self) -> f64 {
        self.0.determinant()
    }

    pub fn inverse(&self) -> Option<Self> {
        if self.det().abs() <= 1e-9 {
            return None;
        }
        self.0.try_inverse().map(|m| Self(m).normalized())
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Homography) -> Self {
        Self(self.0 * other.0).normalized()
    }

    /// Image of `p`, or `None` when it maps to infinity.
    pub fn project(&self, p: Point) -> Option<Point> {
        let q = self.0 * Vector3::new(p.x, p.y, 1.0);
        if q.z.abs() < 1e-9 {
            return None;
        }
        Some(Point::new(q.x / q.z, q.y / q.z))
    }

    /// Largest displacement of the four corners of a `w`×`h` frame
    /// between this map and `other`.
    pub fn corner_transfer_error(&self, other: &Homography, w: f64, h: f64) -> f64 {
        [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .iter()
            .map(|&(x, y)| {
                let p = Point::new(x, y);
                match (self.project(p), other.project(p)) {
                    (Some(a), Some(b)) => a.dist(b),
                    _ => f64::INFINITY,
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub from: Point,
    pub to: Point,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iters: usize,
    pub inlier_px: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iters: 500,
            inlier_px: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomographyFit {
    pub h: Homography,
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
    pub inlier_error: f64,
}

fn score(h: &Homography, matches: &[Match], px: f64) -> (Vec<bool>, usize, f64) {
    let mut mask = Vec::with_capacity(matches.len());
    let (mut count, mut total) = (0usize, 0.0);
    for m in matches {
        let e = h.project(m.from).map_or(f64::INFINITY, |q| q.dist(m.to));
        let inlier = e <= px;
        if inlier {
            count += 1;
            total += e;
        }
        mask.push(inlier);
    }
    (mask, count, total)
}

fn collinear(a: Point, b: Point, c: Point) -> bool {
    let (ux, uy) = (b.x - a.x, b.y - a.y);
    let (vx, vy) = (c.x - a.x, c.y - a.y);
    let cross = (ux * vy - uy * vx).abs();
    cross <= 1e-6 * ux.hypot(uy) * vx.hypot(vy) + 1e-12
}

fn degenerate(pts: &[Point; 4]) -> bool {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES
        .iter()
        .any(|t| collinear(pts[t[0]], pts[t[1]], pts[t[2]]))
}

/// Exact homography through four correspondences (`h[2][2]` fixed to 1).
pub fn solve_four(matches: &[Match; 4]) -> Option<Homography> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut rhs = SVector::<f64, 8>::zeros();
    for (i, m) in matches.iter().enumerate() {
        let (x, y, xp, yp) = (m.from.x, m.from.y, m.to.x, m.to.y);
        let r = 2 * i;
        let row0 = [x, y, 1.0, 0.0, 0.0, 0.0, -x * xp, -y * xp];
        let row1 = [0.0, 0.0, 0.0, x, y, 1.0, -x * yp, -y * yp];
        for c in 0..8 {
            a[(r, c)] = row0[c];
            a[(r + 1, c)] = row1[c];
        }
        rhs[r] = xp;
        rhs[r + 1] = yp;
    }
    let h = a.lu().solve(&rhs)?;
    if h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let m = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    let hom = Homography(m);
    (hom.det().abs() > 1e-9).then_some(hom)
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizer(pts: impl Iterator<Item = Point> + Clone) -> Matrix3<f64> {
    let n = pts.clone().count() as f64;
    let (cx, cy) = pts.clone().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    let (cx, cy) = (cx / n, cy / n);
    let mean = pts.map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = if mean > 1e-12 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Least-squares homography over all matches via normalized DLT.
pub fn fit_dlt(matches: &[Match]) -> Option<Homography> {
    if matches.len() < 4 {
        return None;
    }
    let t1 = normalizer(matches.iter().map(|m| m.from));
    let t2 = normalizer(matches.iter().map(|m| m.to));
    // SVD needs at least as many rows as unknowns to expose the null vector.
    let rows = (2 * matches.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, m) in matches.iter().enumerate() {
        let p = t1 * Vector3::new(m.from.x, m.from.y, 1.0);
        let q = t2 * Vector3::new(m.to.x, m.to.y, 1.0);
        let (x, y) = (p.x / p.z, p.y / p.z);
        let (xp, yp) = (q.x / q.z, q.y / q.z);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, xp * x, xp * y, xp];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, yp * x, yp * y, yp];
        for c in 0..9 {
            a[(2 * i, c)] = r0[c];
            a[(2 * i + 1, c)] = r1[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))?;
    let h = v_t.row(idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let m = t2.try_inverse()? * hn * t1;
    let hom = Homography(m).normalized();
    (hom.det().abs() > 1e-9 && hom.0.iter().all(|v| v.is_finite())).then_some(hom)
}

fn better(count: usize, err: f64, best: Option<&HomographyFit>) -> bool {
    match best {
        None => true,
        Some(b) => count > b.inlier_count || (count == b.inlier_count && err < b.inlier_error),
    }
}

/// RANSAC over minimal four-point solves, then a normalized-DLT refit on
/// the winning inlier set. The refit replaces the sample model only if it
/// scores at least as well; the returned mask always belongs to the
/// returned model.
pub fn estimate_homography<R: Rng + ?Sized>(
    matches: &[Match],
    params: &RansacParams,
    rng: &mut R,
) -> Result<HomographyFit> {
    if matches.len() < 4 {
        return Err(MotionError::EstimationFailed(format!(
            "need at least 4 matches, got {}",
            matches.len()
        )));
    }
    let mut best: Option<HomographyFit> = None;
    for _ in 0..params.iters {
        let idx = sample(rng, matches.len(), 4);
        let sample4 = [matches[idx.index(0)], matches[idx.index(1)], matches[idx.index(2)], matches[idx.index(3)]];
        if degenerate(&sample4.map(|m| m.from)) || degenerate(&sample4.map(|m| m.to)) {
            continue;
        }
        let Some(h) = solve_four(&sample4) else { continue };
        let (mask, count, err) = score(&h, matches, params.inlier_px);
        if better(count, err, best.as_ref()) {
            best = Some(HomographyFit {
                h,
                inliers: mask,
                inlier_count: count,
                inlier_error: err,
            });
        }
    }
    let Some(best) = best else {
        return Err(MotionError::EstimationFailed(format!(
            "every one of {} samples was degenerate",
            params.iters
        )));
    };
    let inliers: Vec<Match> = matches
        .iter()
        .zip(&best.inliers)
        .filter(|(_, &k)| k)
        .map(|(m, _)| *m)
        .collect();
    if let Some(h) = fit_dlt(&inliers) {
        let (mask, count, err) = score(&h, matches, params.inlier_px);
        if count > best.inlier_count || (count == best.inlier_count && err <= best.inlier_error) {
            return Ok(HomographyFit {
                h,
                inliers: mask,
                inlier_count: count,
                inlier_error: err,
            });
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_sample_is_degenerate() {
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 2.0),
            Point::new(0.0, 5.0),
        ];
        assert!(degenerate(&pts));
        let square = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
        ];
        assert!(!degenerate(&square));
    }

    #[test]
    fn four_point_solve_recovers_translation() {
        let t = Homography::translation(3.0, -2.0);
        let pts = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (7.0, 9.0)];
        let m = pts.map(|(x, y)| {
            let p = Point::new(x, y);
            Match { from: p, to: t.project(p).unwrap() }
        });
        let h = solve_four(&m).unwrap();
        assert!((h.0 - t.0).abs().max() < 1e-9);
    }
}

//! Planar geometry: document quads and 3x3 homographies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Four document corners in source-image pixel coordinates.
///
/// Vertex 0 is the top-left corner of the document; the remaining vertices
/// follow clockwise as seen on screen (y grows downward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad(pub [Point2; 4]);

impl Quad {
    pub fn from_xy(points: [(f64, f64); 4]) -> Self {
        Quad(points.map(|(x, y)| Point2::new(x, y)))
    }

    /// Axis-aligned rectangle `[0,w]x[0,h]`, clockwise from the origin.
    pub fn rect(width: f64, height: f64) -> Self {
        Self::from_xy([(0.0, 0.0), (width, 0.0), (width, height), (0.0, height)])
    }

    /// Shoelace signed area. Positive for clockwise order in image coordinates.
    pub fn signed_area(&self) -> f64 {
        let p = &self.0;
        let mut acc = 0.0;
        for i in 0..4 {
            let a = p[i];
            let b = p[(i + 1) % 4];
            acc += a.x * b.y - b.x * a.y;
        }
        acc / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// True when no two non-adjacent edges cross.
    pub fn is_simple(&self) -> bool {
        let p = &self.0;
        !segments_intersect(p[0], p[1], p[2], p[3]) && !segments_intersect(p[1], p[2], p[3], p[0])
    }

    /// Keeps vertex 0 in place and flips the winding to clockwise if needed.
    pub fn to_clockwise(self) -> Self {
        if self.signed_area() < 0.0 {
            let p = self.0;
            Quad([p[0], p[3], p[2], p[1]])
        } else {
            self
        }
    }

    /// Cyclic shift of the vertex labels by `k` positions.
    pub fn rotated(self, k: usize) -> Self {
        let p = self.0;
        Quad(std::array::from_fn(|i| p[(i + k) % 4]))
    }

    pub fn map(&self, h: &Homography) -> Self {
        Quad(self.0.map(|p| h.apply(p)))
    }
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Row-major projective transform acting on homogeneous column vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub [f64; 9]);

impl Homography {
    pub const IDENTITY: Homography = Homography([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);

    /// Solves for the transform mapping each `src[i]` onto `dst[i]`.
    pub fn from_correspondences(src: &Quad, dst: &Quad) -> Result<Self> {
        // Direct linear transform with h33 = 1: 8 equations, 8 unknowns.
        let mut a = [[0.0f64; 9]; 8];
        for i in 0..4 {
            let (x, y) = (src.0[i].x, src.0[i].y);
            let (u, v) = (dst.0[i].x, dst.0[i].y);
            a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        let sol = solve_augmented(&mut a).ok_or(Error::DegenerateQuad)?;
        Ok(Homography([
            sol[0], sol[1], sol[2], sol[3], sol[4], sol[5], sol[6], sol[7], 1.0,
        ]))
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let m = &self.0;
        let w = m[6] * p.x + m[7] * p.y + m[8];
        Point2::new(
            (m[0] * p.x + m[1] * p.y + m[2]) / w,
            (m[3] * p.x + m[4] * p.y + m[5]) / w,
        )
    }

    pub fn inverse(&self) -> Option<Self> {
        let m = &self.0;
        let c00 = m[4] * m[8] - m[5] * m[7];
        let c01 = m[5] * m[6] - m[3] * m[8];
        let c02 = m[3] * m[7] - m[4] * m[6];
        let det = m[0] * c00 + m[1] * c01 + m[2] * c02;
        if det.abs() < 1e-12 {
            return None;
        }
        let inv = [
            c00,
            m[2] * m[7] - m[1] * m[8],
            m[1] * m[5] - m[2] * m[4],
            c01,
            m[0] * m[8] - m[2] * m[6],
            m[2] * m[3] - m[0] * m[5],
            c02,
            m[1] * m[6] - m[0] * m[7],
            m[0] * m[4] - m[1] * m[3],
        ];
        Some(Homography(inv.map(|v| v / det)))
    }

    pub fn compose(&self, rhs: &Homography) -> Homography {
        let (a, b) = (&self.0, &rhs.0);
        Homography(std::array::from_fn(|k| {
            let (r, c) = (k / 3, k % 3);
            (0..3).map(|i| a[3 * r + i] * b[3 * i + c]).sum()
        }))
    }
}

/// Gaussian elimination with partial pivoting on an 8x9 augmented system.
fn solve_augmented(a: &mut [[f64; 9]; 8]) -> Option<[f64; 8]> {
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..8 {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..9 {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    Some(std::array::from_fn(|i| a[i][8] / a[i][i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homography_maps_corners() {
        let src = Quad::rect(100.0, 50.0);
        let dst = Quad::from_xy([(10.0, 12.0), (95.0, 5.0), (110.0, 70.0), (3.0, 60.0)]);
        let h = Homography::from_correspondences(&src, &dst).unwrap();
        for (s, d) in src.0.iter().zip(dst.0.iter()) {
            let m = h.apply(*s);
            assert!((m.x - d.x).abs() < 1e-9 && (m.y - d.y).abs() < 1e-9);
        }
        let back = h.inverse().unwrap();
        let p = back.apply(h.apply(Point2::new(33.0, 21.0)));
        assert!((p.x - 33.0).abs() < 1e-9 && (p.y - 21.0).abs() < 1e-9);
    }

    #[test]
    fn winding_and_simplicity() {
        let cw = Quad::rect(10.0, 10.0);
        assert!(cw.signed_area() > 0.0);
        let ccw = Quad::from_xy([(0.0, 0.0), (0.0, 10.0), (10.0, 10.0), (10.0, 0.0)]);
        assert_eq!(ccw.to_clockwise(), cw);
        let bowtie = Quad::from_xy([(0.0, 0.0), (10.0, 10.0), (10.0, 0.0), (0.0, 10.0)]);
        assert!(!bowtie.is_simple());
        assert!(cw.is_simple());
    }

    #[test]
    fn collinear_points_are_rejected() {
        let line = Quad::from_xy([(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        let rect = Quad::rect(10.0, 10.0);
        assert!(Homography::from_correspondences(&rect, &line).is_err() || line.area() < 1.0);
    }
}

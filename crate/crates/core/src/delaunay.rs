//! Delaunay triangulation by incremental insertion with Lawson flips.
//!
//! Points are inserted in input order starting from the first non-collinear
//! triple, so the result depends only on the input sequence. Cocircular
//! configurations admit several Delaunay triangulations; among the two
//! diagonals of a cocircular quad we keep the one whose `(min, max)` input
//! index pair is lexicographically smaller. For the four corners of a square
//! listed in order this is the diagonal `0–2`.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Point;

/// Relative tolerance on the orientation and in-circle determinants, a few
/// times their worst-case floating point error bound.
const PREDICATE_EPS: f64 = 1e-14;

/// Triangulated point set. Triangles are counter-clockwise (in a y-up frame)
/// index triples into `vertices`, rotated so the smallest index comes first
/// and sorted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    /// Position of each vertex in the caller's input (duplicates removed).
    pub input_index: Vec<usize>,
}

impl TriangleMesh {
    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }
}

/// Twice the signed area of `abc`, and the magnitude used to judge whether it
/// is numerically zero.
fn orient(a: Point, b: Point, c: Point) -> (f64, f64) {
    let l = (b.x - a.x) * (c.y - a.y);
    let r = (b.y - a.y) * (c.x - a.x);
    (l - r, l.abs() + r.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sign {
    Neg,
    Zero,
    Pos,
}

fn orient_sign(a: Point, b: Point, c: Point) -> Sign {
    let (det, mag) = orient(a, b, c);
    if det.abs() <= PREDICATE_EPS * mag {
        Sign::Zero
    } else if det > 0.0 {
        Sign::Pos
    } else {
        Sign::Neg
    }
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counter-clockwise triangle `abc`, zero when cocircular.
fn incircle_sign(a: Point, b: Point, c: Point, d: Point) -> Sign {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let alift = adx * adx + ady * ady;
    let blift = bdx * bdx + bdy * bdy;
    let clift = cdx * cdx + cdy * cdy;
    let det = alift * (bdx * cdy - cdx * bdy)
        + blift * (cdx * ady - adx * cdy)
        + clift * (adx * bdy - bdx * ady);
    let mag = alift * ((bdx * cdy).abs() + (cdx * bdy).abs())
        + blift * ((cdx * ady).abs() + (adx * cdy).abs())
        + clift * ((adx * bdy).abs() + (bdx * ady).abs());
    if det.abs() <= PREDICATE_EPS * mag {
        Sign::Zero
    } else if det > 0.0 {
        Sign::Pos
    } else {
        Sign::Neg
    }
}

struct Builder<'a> {
    pts: &'a [Point],
    /// Rank used by the cocircular tie-break (input index of each vertex).
    rank: &'a [usize],
    tris: Vec<[usize; 3]>,
    /// Directed edge `(u, w)` -> triangle holding it in counter-clockwise order.
    edges: HashMap<(usize, usize), usize>,
}

enum Location {
    Inside(usize),
    /// On the edge of triangle `t` opposite its local vertex `i`.
    OnEdge(usize, usize),
    Outside,
    Coincident,
}

impl<'a> Builder<'a> {
    fn set_tri(&mut self, t: usize, tri: [usize; 3]) {
        let old = self.tris[t];
        for i in 0..3 {
            let key = (old[i], old[(i + 1) % 3]);
            if self.edges.get(&key) == Some(&t) {
                self.edges.remove(&key);
            }
        }
        self.tris[t] = tri;
        self.link(t);
    }

    fn push_tri(&mut self, tri: [usize; 3]) -> usize {
        self.tris.push(tri);
        let t = self.tris.len() - 1;
        self.link(t);
        t
    }

    fn link(&mut self, t: usize) {
        let tri = self.tris[t];
        for i in 0..3 {
            self.edges.insert((tri[i], tri[(i + 1) % 3]), t);
        }
    }

    /// Apex of the triangle holding directed edge `(u, w)`.
    fn apex(&self, u: usize, w: usize) -> Option<(usize, usize)> {
        let &t = self.edges.get(&(u, w))?;
        let tri = self.tris[t];
        let apex = tri.into_iter().find(|&v| v != u && v != w)?;
        Some((t, apex))
    }

    fn locate(&self, p: Point) -> Location {
        for (t, tri) in self.tris.iter().enumerate() {
            let signs: [Sign; 3] = std::array::from_fn(|i| {
                orient_sign(self.pts[tri[(i + 1) % 3]], self.pts[tri[(i + 2) % 3]], p)
            });
            if signs.contains(&Sign::Neg) {
                continue;
            }
            let zeros: Vec<usize> = (0..3).filter(|&i| signs[i] == Sign::Zero).collect();
            return match zeros.len() {
                0 => Location::Inside(t),
                1 => Location::OnEdge(t, zeros[0]),
                _ => Location::Coincident,
            };
        }
        Location::Outside
    }

    fn insert(&mut self, v: usize) -> bool {
        let p = self.pts[v];
        match self.locate(p) {
            Location::Inside(t) => {
                let [a, b, c] = self.tris[t];
                self.set_tri(t, [a, b, v]);
                self.push_tri([b, c, v]);
                self.push_tri([c, a, v]);
                self.legalize(a, b, v);
                self.legalize(b, c, v);
                self.legalize(c, a, v);
            }
            Location::OnEdge(t, i) => {
                let tri = self.tris[t];
                let (x, u, w) = (tri[i], tri[(i + 1) % 3], tri[(i + 2) % 3]);
                let across = self.apex(w, u);
                self.set_tri(t, [x, u, v]);
                self.push_tri([x, v, w]);
                if let Some((s, y)) = across {
                    self.set_tri(s, [y, w, v]);
                    self.push_tri([y, v, u]);
                }
                self.legalize(x, u, v);
                self.legalize(w, x, v);
                if let Some((_, y)) = across {
                    self.legalize(y, w, v);
                    self.legalize(u, y, v);
                }
            }
            Location::Outside => {
                let visible: Vec<(usize, usize)> = self
                    .edges
                    .keys()
                    .filter(|&&(u, w)| !self.edges.contains_key(&(w, u)))
                    .filter(|&&(u, w)| orient_sign(self.pts[u], self.pts[w], p) == Sign::Neg)
                    .copied()
                    .collect::<std::collections::BTreeSet<_>>()
                    .into_iter()
                    .collect();
                if visible.is_empty() {
                    return false;
                }
                for &(u, w) in &visible {
                    self.push_tri([w, u, v]);
                }
                for &(u, w) in &visible {
                    self.legalize(w, u, v);
                }
            }
            Location::Coincident => return false,
        }
        true
    }

    /// Restores the Delaunay property across edge `(u, w)` of triangle
    /// `(u, w, p)`, recursing on the edges exposed by a flip.
    fn legalize(&mut self, u: usize, w: usize, p: usize) {
        let Some((t, apex)) = self.apex(u, w) else { return };
        if apex != p {
            return;
        }
        let Some((s, q)) = self.apex(w, u) else { return };
        if incircle_sign(self.pts[u], self.pts[w], self.pts[p], self.pts[q]) != Sign::Pos {
            return;
        }
        self.set_tri(t, [u, q, p]);
        self.set_tri(s, [q, w, p]);
        self.legalize(u, q, p);
        self.legalize(q, w, p);
    }

    fn prefers_flip(&self, u: usize, w: usize, p: usize, q: usize) -> bool {
        let key = |a: usize, b: usize| {
            let (ra, rb) = (self.rank[a], self.rank[b]);
            (ra.min(rb), ra.max(rb))
        };
        key(p, q) < key(u, w)
    }

    /// Flips every interior edge that is non-Delaunay, or cocircular with the
    /// other diagonal preferred by the index tie-break. Each tie flip strictly
    /// lowers the lexicographic rank of one edge, so this terminates.
    fn canonicalize(&mut self) {
        let max_passes = 64 + 4 * self.pts.len();
        for _ in 0..max_passes {
            let mut keys: Vec<(usize, usize)> = self
                .edges
                .keys()
                .filter(|&&(u, w)| u < w && self.edges.contains_key(&(w, u)))
                .copied()
                .collect();
            keys.sort_unstable();
            let mut flipped = false;
            for (u, w) in keys {
                let (Some((t, p)), Some((s, q))) = (self.apex(u, w), self.apex(w, u)) else {
                    continue;
                };
                let (pu, pw, pp, pq) = (self.pts[u], self.pts[w], self.pts[p], self.pts[q]);
                let flip = match incircle_sign(pu, pw, pp, pq) {
                    Sign::Pos => true,
                    Sign::Zero => {
                        self.prefers_flip(u, w, p, q)
                            && orient_sign(pu, pq, pp) == Sign::Pos
                            && orient_sign(pq, pw, pp) == Sign::Pos
                    }
                    Sign::Neg => false,
                };
                if flip {
                    self.set_tri(t, [u, q, p]);
                    self.set_tri(s, [q, w, p]);
                    flipped = true;
                }
            }
            if !flipped {
                return;
            }
        }
        log::warn!("delaunay: tie-break pass did not settle after {max_passes} passes");
    }
}

/// Triangulates `points`.
///
/// Exact duplicates (and points closer than a relative 1e-12 of the bounding
/// box) are dropped with a warning; fewer than three distinct points, or all
/// points collinear, is an error.
pub fn delaunay(points: &[Point]) -> Result<TriangleMesh> {
    if let Some(bad) = points.iter().find(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::Triangulation(format!("non-finite point ({}, {})", bad.x, bad.y)));
    }
    let (mut lo, mut hi) = (Point::new(f64::MAX, f64::MAX), Point::new(f64::MIN, f64::MIN));
    for p in points {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let extent = (hi.x - lo.x).max(hi.y - lo.y).max(f64::MIN_POSITIVE);
    let merge_dist = 1e-12 * extent;

    let mut vertices: Vec<Point> = Vec::with_capacity(points.len());
    let mut input_index = Vec::with_capacity(points.len());
    for (k, &p) in points.iter().enumerate() {
        let dup = vertices
            .iter()
            .any(|q: &Point| (q.x - p.x).abs() <= merge_dist && (q.y - p.y).abs() <= merge_dist);
        if dup {
            log::warn!("delaunay: dropping duplicate point {k} at ({}, {})", p.x, p.y);
        } else {
            vertices.push(p);
            input_index.push(k);
        }
    }
    if vertices.len() < 3 {
        return Err(Error::Triangulation(format!(
            "need at least 3 distinct points, got {}",
            vertices.len()
        )));
    }

    let (a, b) = (0, 1);
    let Some(c) = (2..vertices.len())
        .find(|&k| orient_sign(vertices[a], vertices[b], vertices[k]) != Sign::Zero)
    else {
        return Err(Error::Triangulation("all points are collinear".into()));
    };
    let first = if orient_sign(vertices[a], vertices[b], vertices[c]) == Sign::Pos {
        [a, b, c]
    } else {
        [a, c, b]
    };

    let rank: Vec<usize> = (0..vertices.len()).collect();
    let mut builder = Builder {
        pts: &vertices,
        rank: &rank,
        tris: Vec::new(),
        edges: HashMap::new(),
    };
    builder.push_tri(first);
    for v in (2..vertices.len()).filter(|&v| v != c) {
        if !builder.insert(v) {
            log::warn!("delaunay: point {} could not be inserted", input_index[v]);
        }
    }
    builder.canonicalize();

    let mut triangles: Vec<[usize; 3]> = builder
        .tris
        .iter()
        .map(|t| {
            let r = (0..3).min_by_key(|&i| t[i]).unwrap();
            [t[r], t[(r + 1) % 3], t[(r + 2) % 3]]
        })
        .collect();
    triangles.sort_unstable();

    Ok(TriangleMesh {
        vertices,
        triangles,
        input_index,
    })
}

/// Four corners and four edge midpoints of the pixel-centre rectangle
/// `[0, width-1] × [0, height-1]`.
pub fn boundary_points(width: u32, height: u32) -> [Point; 8] {
    let (w, h) = ((width.max(1) - 1) as f64, (height.max(1) - 1) as f64);
    [
        Point::new(0.0, 0.0),
        Point::new(w / 2.0, 0.0),
        Point::new(w, 0.0),
        Point::new(w, h / 2.0),
        Point::new(w, h),
        Point::new(w / 2.0, h),
        Point::new(0.0, h),
        Point::new(0.0, h / 2.0),
    ]
}

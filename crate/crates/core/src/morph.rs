//! Landmark-based face morphing.
//!
//! The two landmark sets are blended, triangulated, and each source image is
//! affinely warped triangle by triangle onto the blended geometry before the
//! two warped images are mixed with the same blend factor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delaunay::{boundary_points, delaunay, TriangleMesh};
use crate::error::{Error, Result};
use crate::model::{ImageBuffer, LandmarkSet, Point};

/// Triangles whose doubled area is below this (px²) are treated as degenerate.
const DEGENERATE_AREA: f64 = 1e-6;
/// Barycentric slack when assigning pixel centres to triangles.
const INSIDE_EPS: f64 = 1e-9;
const UNOWNED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphParams {
    /// Weight of the second image, for both geometry and colour.
    pub alpha: f64,
    /// Add image corners and edge midpoints so the mesh spans the canvas.
    pub boundary_augmentation: bool,
}

impl Default for MorphParams {
    fn default() -> Self {
        MorphParams {
            alpha: 0.5,
            boundary_augmentation: true,
        }
    }
}

/// Blend weights `(w_a, w_b)` for a factor `alpha`, with `w_a + w_b == 1`
/// exactly.
///
/// The weight that is `>= 0.5` is computed first and the other one derived
/// from it by an exact subtraction. Calling with `1 - alpha` then yields
/// exactly the swapped pair, which is what makes swapping the two inputs
/// bit-exact.
pub fn blend_weights(alpha: f64) -> (f64, f64) {
    if alpha >= 0.5 {
        (1.0 - alpha, alpha)
    } else {
        let w_a = 1.0 - alpha;
        (w_a, 1.0 - w_a)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

fn mix(a: Point, b: Point, (w_a, w_b): (f64, f64)) -> Point {
    Point::new(w_a * a.x + w_b * b.x, w_a * a.y + w_b * b.y)
}

/// Point-wise `(1 - alpha)·a + alpha·b`.
pub fn blend_landmarks(a: &LandmarkSet, b: &LandmarkSet, alpha: f64) -> Result<LandmarkSet> {
    check_alpha(alpha)?;
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "landmark canvases {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let w = blend_weights(alpha);
    let points = a
        .points()
        .iter()
        .zip(b.points())
        .map(|(&pa, &pb)| mix(pa, pb, w))
        .collect();
    LandmarkSet::new(points, a.width(), a.height())
}

/// Triangulates a landmark set, optionally with the eight canvas boundary
/// points appended (indices 68..76).
pub fn landmark_mesh(landmarks: &LandmarkSet, boundary_augmentation: bool) -> Result<TriangleMesh> {
    delaunay(&with_boundary(landmarks, boundary_augmentation))
}

fn with_boundary(landmarks: &LandmarkSet, boundary_augmentation: bool) -> Vec<Point> {
    let mut pts = landmarks.points().to_vec();
    if boundary_augmentation {
        pts.extend(boundary_points(landmarks.width(), landmarks.height()));
    }
    pts
}

/// Counters describing how the output was assembled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MorphQuality {
    pub triangles: usize,
    /// Triangles with (near) zero area in the target or either source mesh.
    pub degenerate_triangles: usize,
    /// Pixels of skipped triangles rendered from the nearest valid triangle.
    pub neighbor_filled_pixels: usize,
    /// Pixels no triangle covers (left black); zero with boundary augmentation.
    pub unwritten_pixels: usize,
}

#[derive(Debug, Clone)]
pub struct MorphOutput {
    pub image: ImageBuffer,
    pub mesh: TriangleMesh,
    pub quality: MorphQuality,
}

/// Affine map from target-triangle coordinates to both source triangles.
#[derive(Debug, Clone, Copy)]
struct TriangleMap {
    dst: [Point; 3],
    /// Inverse of the 2x2 edge matrix of `dst`, row-major.
    inv: [f64; 4],
    src_a: [Point; 3],
    src_b: [Point; 3],
    degenerate: bool,
}

fn doubled_area(t: &[Point; 3]) -> f64 {
    (t[1].x - t[0].x) * (t[2].y - t[0].y) - (t[1].y - t[0].y) * (t[2].x - t[0].x)
}

impl TriangleMap {
    fn new(dst: [Point; 3], src_a: [Point; 3], src_b: [Point; 3]) -> Self {
        let det = doubled_area(&dst);
        let degenerate = [det, doubled_area(&src_a), doubled_area(&src_b)]
            .iter()
            .any(|a| a.abs() < DEGENERATE_AREA);
        let (e1, e2) = (
            Point::new(dst[1].x - dst[0].x, dst[1].y - dst[0].y),
            Point::new(dst[2].x - dst[0].x, dst[2].y - dst[0].y),
        );
        let inv = if det.abs() < DEGENERATE_AREA {
            [0.0; 4]
        } else {
            [e2.y / det, -e2.x / det, -e1.y / det, e1.x / det]
        };
        TriangleMap {
            dst,
            inv,
            src_a,
            src_b,
            degenerate,
        }
    }

    /// Barycentric weights of `p` with respect to the target triangle.
    fn barycentric(&self, p: Point) -> [f64; 3] {
        let (dx, dy) = (p.x - self.dst[0].x, p.y - self.dst[0].y);
        let l1 = self.inv[0] * dx + self.inv[1] * dy;
        let l2 = self.inv[2] * dx + self.inv[3] * dy;
        [1.0 - l1 - l2, l1, l2]
    }

    fn contains(&self, p: Point) -> bool {
        self.barycentric(p).iter().all(|&l| l >= -INSIDE_EPS)
    }

    fn bbox(&self, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
        let xs = self.dst.map(|p| p.x);
        let ys = self.dst.map(|p| p.y);
        let lo_x = xs.iter().copied().fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let hi_x = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max).floor();
        let lo_y = ys.iter().copied().fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let hi_y = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max).floor();
        let hi_x = hi_x.min(width as f64 - 1.0);
        let hi_y = hi_y.min(height as f64 - 1.0);
        (lo_x <= hi_x && lo_y <= hi_y).then_some((lo_x as u32, lo_y as u32, hi_x as u32, hi_y as u32))
    }

    /// Distance from `p` to the target triangle (0 inside).
    fn distance(&self, p: Point) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        (0..3)
            .map(|i| segment_distance(p, self.dst[i], self.dst[(i + 1) % 3]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (abx, aby) = (b.x - a.x, b.y - a.y);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * abx + (p.y - a.y) * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.x - a.x - t * abx).powi(2) + (p.y - a.y - t * aby).powi(2)).sqrt()
}

fn apply(l: [f64; 3], t: &[Point; 3]) -> Point {
    Point::new(
        l[0] * t[0].x + l[1] * t[1].x + l[2] * t[2].x,
        l[0] * t[0].y + l[1] * t[1].y + l[2] * t[2].y,
    )
}

/// Bilinear sample with coordinates clamped to the image.
pub(crate) fn sample_bilinear(img: &ImageBuffer, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = (img.width(), img.height());
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as u32, y.floor() as u32);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let (p00, p10, p01, p11) = (img.pixel(x0, y0), img.pixel(x1, y0), img.pixel(x0, y1), img.pixel(x1, y1));
    std::array::from_fn(|c| {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Builds the morph of `image_a` and `image_b`.
///
/// Pixels are owned by exactly one triangle: the first triangle (in mesh
/// order) whose closed area contains the pixel centre. Degenerate triangles
/// own nothing; pixels only they cover are rendered by extrapolating the
/// nearest valid triangle's map.
pub fn warp_blend(
    image_a: &ImageBuffer,
    lm_a: &LandmarkSet,
    image_b: &ImageBuffer,
    lm_b: &LandmarkSet,
    params: &MorphParams,
) -> Result<MorphOutput> {
    check_alpha(params.alpha)?;
    for (img, lm, name) in [(image_a, lm_a, "a"), (image_b, lm_b, "b")] {
        if img.width() != lm.width() || img.height() != lm.height() {
            return Err(Error::DimensionMismatch(format!(
                "image {name} is {}x{} but its landmarks are for {}x{}",
                img.width(),
                img.height(),
                lm.width(),
                lm.height()
            )));
        }
    }
    let blended = blend_landmarks(lm_a, lm_b, params.alpha)?;
    let (width, height) = (blended.width(), blended.height());

    let src_a = with_boundary(lm_a, params.boundary_augmentation);
    let src_b = with_boundary(lm_b, params.boundary_augmentation);
    let mesh = landmark_mesh(&blended, params.boundary_augmentation)?;

    let maps: Vec<TriangleMap> = mesh
        .triangles
        .iter()
        .map(|tri| {
            let pick = |pts: &[Point]| tri.map(|v| pts[mesh.input_index[v]]);
            TriangleMap::new(tri.map(|v| mesh.vertices[v]), pick(&src_a), pick(&src_b))
        })
        .collect();

    let npix = width as usize * height as usize;
    let mut owner = vec![UNOWNED; npix];
    for (t, map) in maps.iter().enumerate().filter(|(_, m)| !m.degenerate) {
        let Some((x0, y0, x1, y1)) = map.bbox(width, height) else { continue };
        for y in y0..=y1 {
            for x in x0..=x1 {
                let slot = &mut owner[y as usize * width as usize + x as usize];
                if *slot == UNOWNED && map.contains(Point::new(x as f64, y as f64)) {
                    *slot = t as u32;
                }
            }
        }
    }

    let mut quality = MorphQuality {
        triangles: maps.len(),
        degenerate_triangles: maps.iter().filter(|m| m.degenerate).count(),
        ..Default::default()
    };
    let valid: Vec<usize> = (0..maps.len()).filter(|&t| !maps[t].degenerate).collect();
    if quality.degenerate_triangles > 0 {
        log::warn!(
            "morph: {} degenerate triangle(s) skipped",
            quality.degenerate_triangles
        );
    }
    for map in maps.iter().filter(|m| m.degenerate) {
        let Some((x0, y0, x1, y1)) = map.bbox(width, height) else { continue };
        for y in y0..=y1 {
            for x in x0..=x1 {
                let idx = y as usize * width as usize + x as usize;
                let p = Point::new(x as f64, y as f64);
                if owner[idx] != UNOWNED || !degenerate_covers(map, p) {
                    continue;
                }
                let nearest = valid.iter().copied().min_by(|&s, &t| {
                    maps[s].distance(p).total_cmp(&maps[t].distance(p)).then(s.cmp(&t))
                });
                if let Some(t) = nearest {
                    owner[idx] = t as u32;
                    quality.neighbor_filled_pixels += 1;
                }
            }
        }
    }
    quality.unwritten_pixels = owner.iter().filter(|&&o| o == UNOWNED).count();

    let (w_a, w_b) = blend_weights(params.alpha);
    let row_len = width as usize * 3;
    let mut data = vec![0u8; npix * 3];
    data.par_chunks_mut(row_len).enumerate().for_each(|(y, row)| {
        for x in 0..width as usize {
            let t = owner[y * width as usize + x];
            if t == UNOWNED {
                continue;
            }
            let map = &maps[t as usize];
            let l = map.barycentric(Point::new(x as f64, y as f64));
            let pa = apply(l, &map.src_a);
            let pb = apply(l, &map.src_b);
            let va = sample_bilinear(image_a, pa.x, pa.y);
            let vb = sample_bilinear(image_b, pb.x, pb.y);
            for c in 0..3 {
                let v = w_a * va[c] + w_b * vb[c];
                row[x * 3 + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    });

    Ok(MorphOutput {
        image: ImageBuffer::new(width, height, data)?,
        mesh,
        quality,
    })
}

/// Whether a degenerate triangle's footprint covers `p`. Uses the target
/// triangle when it has area, otherwise nothing is covered.
fn degenerate_covers(map: &TriangleMap, p: Point) -> bool {
    doubled_area(&map.dst).abs() >= DEGENERATE_AREA && map.contains(p)
}

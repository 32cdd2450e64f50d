//! Parametric print-scan channel and digital vs. print-scanned diagnostics.
//!
//! The simulated channel runs a fixed sequence of stages on a floating point
//! copy of the image (0..255 scale):
//!
//! 1. bilinear resample to the print geometry (600×600 by default)
//! 2. colour transform (printer colour rendering / ICC handling)
//! 3. halftone modulation (periodic roller and screen marks)
//! 4. ink noise (per-channel Gaussian absorption noise)
//! 5. paper texture (low-frequency luminance field)
//! 6. misalignment (sub-pixel translation and small rotation on the bed)
//! 7. glare (optional radial highlight from the scanner lamp)
//! 8. border jitter (crop misregistration)
//! 9. quantisation to 8 bits
//!
//! Every random quantity is drawn from a ChaCha8 stream selected by the stage
//! and positioned by the pixel (or lattice) index, so results do not depend
//! on evaluation order or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ImageBuffer;

pub const PRINT_SIZE: u32 = 600;
pub const PRINT_PPI: u32 = 300;
pub const MIN_INPUT_SIZE: u32 = 32;
/// Bumped whenever a preset's values change.
pub const PRESET_VERSION: u32 = 1;
pub const MAX_ROTATION_DEG: f64 = 0.3;

const DEFAULT_PRESET: &str = include_str!("../presets/default.json");
const ICC_MISMATCH_PRESET: &str = include_str!("../presets/icc-mismatch.json");

const STAGE_HALFTONE: u64 = 1;
const STAGE_INK: u64 = 2;
const STAGE_TEXTURE: u64 = 3;
const STAGE_JITTER: u64 = 4;
/// ChaCha words reserved per pixel / lattice node.
const WORDS_PER_SITE: u128 = 16;

/// Affine colour transform `rgb' = matrix · rgb + offset` on values in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorShift {
    pub matrix: [[f64; 3]; 3],
    pub offset: [f64; 3],
}

impl ColorShift {
    pub const IDENTITY: ColorShift = ColorShift {
        matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        offset: [0.0; 3],
    };

    /// Mild warm cast of dye-ink prints: red +3%, blue −2%.
    pub fn warm_cast() -> Self {
        ColorShift {
            matrix: [[1.03, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.98]],
            offset: [0.0; 3],
        }
    }

    /// Wrong paper profile: red +15%, blue −15%, then saturation ×1.3
    /// around Rec. 601 luma.
    pub fn icc_mismatch() -> Self {
        const LUMA: [f64; 3] = [0.299, 0.587, 0.114];
        const SATURATION: f64 = 1.3;
        let gains = [1.15, 1.0, 0.85];
        let mut matrix = [[0.0; 3]; 3];
        for (r, row) in matrix.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                let sat = (1.0 - SATURATION) * LUMA[c] + if r == c { SATURATION } else { 0.0 };
                *cell = sat * gains[c];
            }
        }
        ColorShift {
            matrix,
            offset: [0.0; 3],
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// Applies the transform to a pixel on the 0..255 scale.
    pub fn apply(&self, px: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|r| {
            self.matrix[r][0] * px[0]
                + self.matrix[r][1] * px[1]
                + self.matrix[r][2] * px[2]
                + self.offset[r] * 255.0
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Glare {
    /// Centre in output pixel coordinates.
    pub center: [f64; 2],
    /// Peak added intensity, as a fraction of full scale.
    pub strength: f64,
    /// Gaussian radius in pixels.
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Misalignment {
    /// Sub-pixel translation `(dx, dy)`, each `|d| < 1`.
    pub translation: [f64; 2],
    /// Rotation about the image centre, `|θ| <= 0.3°`.
    pub rotation_deg: f64,
}

impl Misalignment {
    pub fn is_none(&self) -> bool {
        self.translation == [0.0, 0.0] && self.rotation_deg == 0.0
    }
}

/// Full description of the simulated print-scan channel.
///
/// Amplitudes are fractions of full scale (so `2.0 / 255.0` is two grey
/// levels). The seed determines every stochastic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrintScanParams {
    pub preset_version: u32,
    pub seed: u64,
    pub target_width: u32,
    pub target_height: u32,
    pub target_ppi: u32,
    pub ink_noise_sigma: f64,
    pub halftone_period: f64,
    pub halftone_amplitude: f64,
    pub paper_texture_period: f64,
    pub paper_texture_amplitude: f64,
    pub color_shift: ColorShift,
    /// Replace `color_shift` with [`ColorShift::icc_mismatch`].
    pub icc_mismatch_mode: bool,
    pub glare: Option<Glare>,
    /// Maximum crop offset in whole pixels along each axis.
    pub border_jitter: u32,
    pub misalignment: Misalignment,
}

impl Default for PrintScanParams {
    fn default() -> Self {
        PrintScanParams {
            preset_version: PRESET_VERSION,
            seed: 0,
            target_width: PRINT_SIZE,
            target_height: PRINT_SIZE,
            target_ppi: PRINT_PPI,
            ink_noise_sigma: 2.0 / 255.0,
            halftone_period: 4.0,
            halftone_amplitude: 1.5 / 255.0,
            paper_texture_period: 64.0,
            paper_texture_amplitude: 1.0 / 255.0,
            color_shift: ColorShift::warm_cast(),
            icc_mismatch_mode: false,
            glare: None,
            border_jitter: 2,
            misalignment: Misalignment::default(),
        }
    }
}

impl PrintScanParams {
    /// A channel that only resamples: no noise, identity colour, no
    /// geometric perturbation.
    pub fn null_channel() -> Self {
        PrintScanParams {
            ink_noise_sigma: 0.0,
            halftone_amplitude: 0.0,
            paper_texture_amplitude: 0.0,
            color_shift: ColorShift::IDENTITY,
            border_jitter: 0,
            ..Default::default()
        }
    }

    /// Named preset: `default` or `icc-mismatch`.
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "default" => DEFAULT_PRESET,
            "icc-mismatch" => ICC_MISMATCH_PRESET,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown preset {other:?} (expected default or icc-mismatch)"
                )))
            }
        };
        Self::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: PrintScanParams = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn effective_color_shift(&self) -> ColorShift {
        if self.icc_mismatch_mode {
            ColorShift::icc_mismatch()
        } else {
            self.color_shift
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(format!("print-scan params: {msg}")));
        let non_negative = [
            ("ink_noise_sigma", self.ink_noise_sigma),
            ("halftone_amplitude", self.halftone_amplitude),
            ("paper_texture_amplitude", self.paper_texture_amplitude),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("halftone_period", self.halftone_period),
            ("paper_texture_period", self.paper_texture_period),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.target_width == 0 || self.target_height == 0 || self.target_ppi == 0 {
            return bad("target geometry must be positive".into());
        }
        let cs = &self.color_shift;
        if cs.matrix.iter().flatten().chain(&cs.offset).any(|v| !v.is_finite()) {
            return bad("color_shift must be finite".into());
        }
        let m = &self.misalignment;
        if m.translation.iter().any(|t| !(t.abs() < 1.0)) {
            return bad(format!("misalignment translation must be sub-pixel, got {:?}", m.translation));
        }
        if !(m.rotation_deg.abs() <= MAX_ROTATION_DEG) {
            return bad(format!(
                "misalignment rotation must be within ±{MAX_ROTATION_DEG}°, got {}",
                m.rotation_deg
            ));
        }
        if let Some(g) = &self.glare {
            let ok = g.strength.is_finite()
                && g.strength >= 0.0
                && g.radius.is_finite()
                && g.radius > 0.0
                && g.center.iter().all(|c| c.is_finite());
            if !ok {
                return bad("glare needs finite centre, strength >= 0 and radius > 0".into());
            }
        }
        Ok(())
    }
}

/// Floating point RGB plane, 0..255 scale.
#[derive(Clone)]
struct Plane {
    width: u32,
    height: u32,
    px: Vec<[f64; 3]>,
}

impl Plane {
    fn at(&self, x: u32, y: u32) -> [f64; 3] {
        self.px[y as usize * self.width as usize + x as usize]
    }

    fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as u32, y.floor() as u32);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let (p00, p10, p01, p11) = (self.at(x0, y0), self.at(x1, y0), self.at(x0, y1), self.at(x1, y1));
        std::array::from_fn(|c| {
            let top = p00[c] * (1.0 - fx) + p10[c] * fx;
            let bottom = p01[c] * (1.0 - fx) + p11[c] * fx;
            top * (1.0 - fy) + bottom * fy
        })
    }

    /// Rebuilds the plane by evaluating `f(x, y)` per pixel, row-parallel.
    fn map_pixels(&self, f: impl Fn(u32, u32) -> [f64; 3] + Sync) -> Plane {
        let w = self.width as usize;
        let mut px = vec![[0.0; 3]; self.px.len()];
        px.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                *out = f(x as u32, y as u32);
            }
        });
        Plane {
            width: self.width,
            height: self.height,
            px,
        }
    }

    fn quantize(&self, ppi: Option<u32>) -> Result<ImageBuffer> {
        let data = self
            .px
            .iter()
            .flat_map(|p| p.map(|v| v.round().clamp(0.0, 255.0) as u8))
            .collect();
        ImageBuffer::new(self.width, self.height, data)?.with_ppi(ppi)
    }
}

fn to_plane(img: &ImageBuffer) -> Plane {
    Plane {
        width: img.width(),
        height: img.height(),
        px: img
            .data()
            .chunks_exact(3)
            .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
            .collect(),
    }
}

/// Bilinear resample with pixel-centre alignment; same size is an exact copy.
fn resample_plane(src: &Plane, width: u32, height: u32) -> Plane {
    let sx = src.width as f64 / width as f64;
    let sy = src.height as f64 / height as f64;
    let out = Plane {
        width,
        height,
        px: vec![[0.0; 3]; width as usize * height as usize],
    };
    out.map_pixels(|x, y| src.sample((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5))
}

/// The channel's first stage on its own, quantised: the reference output of
/// a null channel.
pub fn resample(input: &ImageBuffer, width: u32, height: u32, ppi: Option<u32>) -> Result<ImageBuffer> {
    resample_plane(&to_plane(input), width, height).quantize(ppi)
}

/// Seed for one image of a batch: the run seed mixed with the image name, so
/// images get distinct noise fields independent of batch composition.
pub fn image_seed(seed: u64, name: &str) -> u64 {
    let digest = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(name.as_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

/// Random source for one site (pixel or lattice node) of a stage stream.
fn site_rng(stage: &ChaCha8Rng, site: u64) -> ChaCha8Rng {
    let mut rng = stage.clone();
    rng.set_word_pos(site as u128 * WORDS_PER_SITE);
    rng
}

/// Runs `input` through the simulated print-scan channel.
pub fn simulate_print_scan(input: &ImageBuffer, params: &PrintScanParams) -> Result<ImageBuffer> {
    params.validate()?;
    if input.width() < MIN_INPUT_SIZE || input.height() < MIN_INPUT_SIZE {
        return Err(Error::InvalidInput(format!(
            "input {}x{} is smaller than {MIN_INPUT_SIZE}x{MIN_INPUT_SIZE}",
            input.width(),
            input.height()
        )));
    }
    let seed = params.seed;
    let (w, h) = (params.target_width, params.target_height);
    let mut plane = resample_plane(&to_plane(input), w, h);

    let color = params.effective_color_shift();
    if !color.is_identity() {
        plane = plane.map_pixels(|x, y| color.apply(plane.at(x, y)));
    }

    if params.halftone_amplitude > 0.0 {
        let period = params.halftone_period;
        let amp = params.halftone_amplitude * 255.0;
        let mut rng = stage_rng(seed, STAGE_HALFTONE);
        let (phase_x, phase_y): (f64, f64) = (rng.random_range(0.0..period), rng.random_range(0.0..period));
        let tau = std::f64::consts::TAU;
        plane = plane.map_pixels(|x, y| {
            let m = amp
                * (tau * (x as f64 + phase_x) / period).cos()
                * (tau * (y as f64 + phase_y) / period).cos();
            plane.at(x, y).map(|v| v + m)
        });
    }

    if params.ink_noise_sigma > 0.0 {
        let sigma = params.ink_noise_sigma * 255.0;
        let stream = stage_rng(seed, STAGE_INK);
        plane = plane.map_pixels(|x, y| {
            let mut rng = site_rng(&stream, y as u64 * w as u64 + x as u64);
            plane.at(x, y).map(|v| {
                let z: f64 = rng.sample(StandardNormal);
                v + sigma * z
            })
        });
    }

    if params.paper_texture_amplitude > 0.0 {
        let period = params.paper_texture_period;
        let amp = params.paper_texture_amplitude * 255.0;
        let nodes_x = (w as f64 / period).floor() as u64 + 2;
        let nodes_y = (h as f64 / period).floor() as u64 + 2;
        let stream = stage_rng(seed, STAGE_TEXTURE);
        let grid: Vec<f64> = (0..nodes_y * nodes_x)
            .map(|site| site_rng(&stream, site).random_range(-1.0..=1.0))
            .collect();
        plane = plane.map_pixels(|x, y| {
            let (gx, gy) = (x as f64 / period, y as f64 / period);
            let (i, j) = (gx.floor() as u64, gy.floor() as u64);
            let (fx, fy) = (gx - i as f64, gy - j as f64);
            let node = |i: u64, j: u64| grid[(j * nodes_x + i) as usize];
            let top = node(i, j) * (1.0 - fx) + node(i + 1, j) * fx;
            let bottom = node(i, j + 1) * (1.0 - fx) + node(i + 1, j + 1) * fx;
            let t = amp * (top * (1.0 - fy) + bottom * fy);
            plane.at(x, y).map(|v| v + t)
        });
    }

    if !params.misalignment.is_none() {
        let m = params.misalignment;
        let (sin, cos) = m.rotation_deg.to_radians().sin_cos();
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let src = plane.clone();
        plane = plane.map_pixels(|x, y| {
            // inverse map: output pixel -> position on the unperturbed print
            let dx = x as f64 - m.translation[0] - cx;
            let dy = y as f64 - m.translation[1] - cy;
            src.sample(cos * dx + sin * dy + cx, -sin * dx + cos * dy + cy)
        });
    }

    if let Some(g) = params.glare {
        let peak = g.strength * 255.0;
        let denom = 2.0 * g.radius * g.radius;
        plane = plane.map_pixels(|x, y| {
            let d2 = (x as f64 - g.center[0]).powi(2) + (y as f64 - g.center[1]).powi(2);
            let add = peak * (-d2 / denom).exp();
            plane.at(x, y).map(|v| v + add)
        });
    }

    if params.border_jitter > 0 {
        let j = params.border_jitter as i64;
        let mut rng = stage_rng(seed, STAGE_JITTER);
        let (ox, oy) = (rng.random_range(-j..=j), rng.random_range(-j..=j));
        if (ox, oy) != (0, 0) {
            let src = plane.clone();
            plane = plane.map_pixels(|x, y| {
                let sx = (x as i64 + ox).clamp(0, w as i64 - 1) as u32;
                let sy = (y as i64 + oy).clamp(0, h as i64 - 1) as u32;
                src.at(sx, sy)
            });
        }
    }

    plane.quantize(Some(params.target_ppi))
}

fn check_same_size(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.same_dimensions(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )))
    }
}

/// `clamp(gain · |printscanned − digital|)` per channel.
pub fn difference_image(digital: &ImageBuffer, printscanned: &ImageBuffer, gain: f64) -> Result<ImageBuffer> {
    check_same_size(digital, printscanned)?;
    if !(gain.is_finite() && gain >= 1.0) {
        return Err(Error::InvalidInput(format!("gain must be >= 1, got {gain}")));
    }
    let data = digital
        .data()
        .iter()
        .zip(printscanned.data())
        .map(|(&d, &p)| (gain * (p as f64 - d as f64).abs()).round().min(255.0) as u8)
        .collect();
    ImageBuffer::new(digital.width(), digital.height(), data)?.with_ppi(printscanned.ppi())
}

/// Root-mean-square per-channel difference, in grey levels.
pub fn artifact_energy(digital: &ImageBuffer, printscanned: &ImageBuffer) -> Result<f64> {
    check_same_size(digital, printscanned)?;
    let sum: f64 = digital
        .data()
        .iter()
        .zip(printscanned.data())
        .map(|(&d, &p)| (p as f64 - d as f64).powi(2))
        .sum();
    Ok((sum / digital.data().len() as f64).sqrt())
}

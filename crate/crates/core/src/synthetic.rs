//! Deterministic synthetic scenes: dark-forest background, elongated
//! fern-signature landslide scars, and pasture-like confounder patches that
//! sit close to the fern signature in the visible bands.
//!
//! Scars and confounders are rotated super-ellipses with sinusoidal boundary
//! noise, placed by rejection sampling so no two blobs touch; the landslide
//! mask therefore has exactly `scar_count` connected components.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{GeoTransform, MaskRaster, MultibandRaster};
use crate::util;

/// Bands every synthetic scene carries, in storage order.
pub const BAND_NAMES: [&str; 4] = ["blue", "green", "red", "nir"];

/// Per-band mean reflectance and noise for one land cover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub mean: [f32; 4],
    pub sigma: [f32; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub scar_count: usize,
    pub confounder_count: usize,
    /// Major/minor axis ratio range scars are drawn from; the generator
    /// rejects any blob whose painted pixels measure below the minimum.
    pub elongation_min: f64,
    pub elongation_max: f64,
    pub forest: Signature,
    pub fern: Signature,
    pub confounder: Signature,
    pub seed: u64,
}

impl Default for SceneSpec {
    /// Defaults tuned so scars separate well from forest while the
    /// confounder stays near the fern signature in the visible bands and
    /// apart in NIR. Forest noise exceeds fern/confounder noise so k-means
    /// spends surplus clusters subdividing forest; those subdivisions are
    /// spatially uniform, which keeps every cluster represented among
    /// tile-majority labels.
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            scar_count: 12,
            confounder_count: 6,
            elongation_min: 2.0,
            elongation_max: 4.0,
            forest: Signature {
                mean: [0.08, 0.12, 0.07, 0.45],
                sigma: [0.03; 4],
            },
            fern: Signature {
                mean: [0.14, 0.25, 0.12, 0.30],
                sigma: [0.012; 4],
            },
            confounder: Signature {
                mean: [0.15, 0.26, 0.13, 0.55],
                sigma: [0.012; 4],
            },
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 32 {
            return Err(Error::Synthetic(format!(
                "scene must be at least 32x32, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.elongation_min >= 1.0) {
            return Err(Error::Synthetic(format!(
                "minimum elongation must be at least 1, got {}",
                self.elongation_min
            )));
        }
        if self.elongation_max < self.elongation_min {
            return Err(Error::Synthetic(format!(
                "elongation range is empty: [{}, {}]",
                self.elongation_min, self.elongation_max
            )));
        }
        let pairs = [
            ("forest", &self.forest, "fern", &self.fern),
            ("forest", &self.forest, "confounder", &self.confounder),
            ("fern", &self.fern, "confounder", &self.confounder),
        ];
        for (an, a, bn, b) in pairs {
            let distinct = a
                .mean
                .iter()
                .zip(&b.mean)
                .any(|(x, y)| (x - y).abs() > 1e-3);
            if !distinct {
                return Err(Error::Synthetic(format!(
                    "{an} and {bn} signatures share the same mean"
                )));
            }
        }
        Ok(())
    }
}

/// One placed blob: its pixels, all in bounds.
struct Blob {
    pixels: Vec<(usize, usize)>,
}

/// Major/minor axis ratio of a pixel set, from the eigenvalues of its
/// coordinate covariance. Returns None for degenerate sets.
fn measured_elongation(pixels: &[(usize, usize)]) -> Option<f64> {
    if pixels.len() < 8 {
        return None;
    }
    let n = pixels.len() as f64;
    let (mut mr, mut mc) = (0.0, 0.0);
    for &(r, c) in pixels {
        mr += r as f64;
        mc += c as f64;
    }
    mr /= n;
    mc /= n;
    let (mut srr, mut scc, mut src) = (0.0, 0.0, 0.0);
    for &(r, c) in pixels {
        let dr = r as f64 - mr;
        let dc = c as f64 - mc;
        srr += dr * dr;
        scc += dc * dc;
        src += dr * dc;
    }
    srr /= n;
    scc /= n;
    src /= n;
    let trace = srr + scc;
    let det = srr * scc - src * src;
    let disc = (trace * trace / 4.0 - det).max(0.0).sqrt();
    let l1 = trace / 2.0 + disc;
    let l2 = trace / 2.0 - disc;
    if l2 <= 1e-9 {
        return None;
    }
    Some((l1 / l2).sqrt())
}

/// Pixels of a rotated super-ellipse with sinusoidal boundary noise around
/// (cy, cx). Returns None if any pixel would leave the scene.
fn superellipse_pixels(
    height: usize,
    width: usize,
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    theta: f64,
    phase1: f64,
    phase2: f64,
) -> Option<Vec<(usize, usize)>> {
    const EXPONENT: f64 = 2.5;
    let (sin_t, cos_t) = theta.sin_cos();
    // Noise keeps the boundary within 15% of the nominal radius.
    let reach = a.max(b) * 1.15 + 1.0;
    let r0 = (cy - reach).floor();
    let r1 = (cy + reach).ceil();
    let c0 = (cx - reach).floor();
    let c1 = (cx + reach).ceil();
    if r0 < 1.0 || c0 < 1.0 || r1 >= (height - 1) as f64 || c1 >= (width - 1) as f64 {
        return None;
    }
    let mut pixels = Vec::new();
    for r in (r0 as usize)..=(r1 as usize) {
        for c in (c0 as usize)..=(c1 as usize) {
            let dy = r as f64 + 0.5 - cy;
            let dx = c as f64 + 0.5 - cx;
            let u = dx * cos_t + dy * sin_t;
            let v = -dx * sin_t + dy * cos_t;
            let phi = v.atan2(u);
            let rho = 1.0 + 0.10 * (3.0 * phi + phase1).sin() + 0.05 * (5.0 * phi + phase2).sin();
            let d = (u.abs() / a).powf(EXPONENT) + (v.abs() / b).powf(EXPONENT);
            if d <= rho {
                pixels.push((r, c));
            }
        }
    }
    Some(pixels)
}

/// True when the blob, grown by one pixel, stays clear of occupied cells.
/// The gap keeps separately placed blobs in separate 8-connected components.
fn fits(occupied: &Array2<bool>, pixels: &[(usize, usize)]) -> bool {
    let (h, w) = occupied.dim();
    pixels.iter().all(|&(r, c)| {
        (r.saturating_sub(1)..=(r + 1).min(h - 1)).all(|rr| {
            (c.saturating_sub(1)..=(c + 1).min(w - 1)).all(|cc| !occupied[[rr, cc]])
        })
    })
}

fn place_blobs(
    spec: &SceneSpec,
    occupied: &mut Array2<bool>,
    count: usize,
    elongation: (f64, f64),
    enforce_elongation: bool,
    extent: (f64, f64),
    stream: &str,
) -> Result<Vec<Blob>> {
    const ATTEMPTS_PER_BLOB: usize = 400;
    let mut rng = util::seeded_rng(spec.seed, stream);
    let min_dim = spec.width.min(spec.height) as f64;
    let mut blobs = Vec::with_capacity(count);
    let mut attempts = count * ATTEMPTS_PER_BLOB;
    while blobs.len() < count {
        if attempts == 0 {
            return Err(Error::Synthetic(format!(
                "placed only {} of {count} blobs for `{stream}`; scene too crowded",
                blobs.len()
            )));
        }
        attempts -= 1;
        let a = rng.gen_range(extent.0..extent.1) * min_dim;
        let e = rng.gen_range(elongation.0..=elongation.1);
        let b = a / e;
        let theta = rng.gen_range(0.0..std::f64::consts::PI);
        let cy = rng.gen_range(0.0..spec.height as f64);
        let cx = rng.gen_range(0.0..spec.width as f64);
        let phase1 = rng.gen_range(0.0..std::f64::consts::TAU);
        let phase2 = rng.gen_range(0.0..std::f64::consts::TAU);

        let Some(pixels) =
            superellipse_pixels(spec.height, spec.width, cy, cx, a, b, theta, phase1, phase2)
        else {
            continue;
        };
        if pixels.len() < 16 || !fits(occupied, &pixels) {
            continue;
        }
        if enforce_elongation {
            match measured_elongation(&pixels) {
                Some(ratio) if ratio >= spec.elongation_min => {}
                _ => continue,
            }
        }
        for &(r, c) in &pixels {
            occupied[[r, c]] = true;
        }
        blobs.push(Blob { pixels });
    }
    Ok(blobs)
}

/// Smooth multiplicative brightness over the forest canopy: two plane waves
/// drawn from the scene seed, peak amplitude ~0.22 of the mean. The field
/// keeps forest spectra on a spatially coherent 1-D brightness manifold, so
/// when k-means spends surplus clusters subdividing forest the subdivisions
/// are contiguous regions rather than per-pixel speckle and every cluster
/// wins the majority vote on some tiles.
fn illumination(rng: &mut impl Rng, h: usize, w: usize) -> Array2<f32> {
    const AMPLITUDE: f64 = 0.22;
    let extent = h.max(w) as f64;
    let mut waves = [(0.0f64, 0.0f64, 0.0f64); 2];
    for wave in &mut waves {
        let wavelength = extent / rng.gen_range(2.0..5.0);
        let theta = rng.gen_range(0.0..std::f64::consts::PI);
        let k = std::f64::consts::TAU / wavelength;
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        *wave = (k * theta.sin(), k * theta.cos(), phase);
    }
    Array2::from_shape_fn((h, w), |(r, c)| {
        let g: f64 = waves
            .iter()
            .map(|&(ky, kx, phase)| (ky * r as f64 + kx * c as f64 + phase).sin())
            .sum();
        (AMPLITUDE * g / 2.0) as f32
    })
}

/// Generate one scene: forest background, `scar_count` fern scars (mask 1),
/// `confounder_count` pasture patches (confounder mask 1, landslide mask 0).
/// Bit-identical for a fixed spec.
pub fn generate_scene(spec: &SceneSpec) -> Result<(MultibandRaster, MaskRaster, MaskRaster)> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);

    let mut occupied = Array2::from_elem((h, w), false);
    let scars = place_blobs(
        spec,
        &mut occupied,
        spec.scar_count,
        (spec.elongation_min, spec.elongation_max),
        true,
        (0.04, 0.09),
        "synthetic-scars",
    )?;
    // Confounders are rounder and a bit smaller than scars.
    let confounders = place_blobs(
        spec,
        &mut occupied,
        spec.confounder_count,
        (1.0, 1.6),
        false,
        (0.03, 0.06),
        "synthetic-confounders",
    )?;

    let mut cover = Array2::<u8>::zeros((h, w));
    let mut mask = Array2::<u8>::zeros((h, w));
    let mut confounder_mask = Array2::<u8>::zeros((h, w));
    for blob in &scars {
        for &(r, c) in &blob.pixels {
            cover[[r, c]] = 1;
            mask[[r, c]] = 1;
        }
    }
    for blob in &confounders {
        for &(r, c) in &blob.pixels {
            cover[[r, c]] = 2;
            confounder_mask[[r, c]] = 1;
        }
    }

    let mut data = Array3::<f32>::zeros((4, h, w));
    let mut rng = util::seeded_rng(spec.seed, "synthetic-background");
    let field = illumination(&mut rng, h, w);
    let unit = Normal::new(0.0f32, 1.0).expect("unit normal");
    for r in 0..h {
        for c in 0..w {
            let (sig, gain) = match cover[[r, c]] {
                1 => (&spec.fern, 1.0),
                2 => (&spec.confounder, 1.0),
                _ => (&spec.forest, 1.0 + field[[r, c]]),
            };
            for band in 0..4 {
                let v = sig.mean[band] * gain + sig.sigma[band] * unit.sample(&mut rng);
                data[[band, r, c]] = v.clamp(0.0, 1.0);
            }
        }
    }

    // 8 m pixels in a southern-hemisphere UTM frame, like the source imagery.
    let transform = GeoTransform {
        origin_x: 500_000.0,
        origin_y: 8_500_000.0,
        pixel_width: 8.0,
        pixel_height: 8.0,
    };
    let raster = MultibandRaster {
        data,
        nodata: Array2::from_elem((h, w), false),
        band_names: BAND_NAMES.iter().map(|s| s.to_string()).collect(),
        transform,
        crs: Some("EPSG:32722".to_string()),
    };
    let mask = MaskRaster {
        values: mask,
        transform,
        crs: raster.crs.clone(),
    };
    let confounder_mask = MaskRaster {
        values: confounder_mask,
        transform,
        crs: raster.crs.clone(),
    };
    Ok((raster, mask, confounder_mask))
}

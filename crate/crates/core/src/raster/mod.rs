//! Raster data model: multiband scenes with nodata masks, binary masks,
//! polygon rasterization, scene clipping, train/test splitting and tiling.
//!
//! Pixel grids are `(band, row, col)` float32 arrays. Nodata is carried as an
//! explicit per-pixel boolean mask rather than a sentinel, so 0 stays a legal
//! reflectance; nodata pixels hold 0 in memory by convention. Georeferencing
//! is a north-up affine transform plus an opaque CRS tag.

mod geotiff;
mod rgrid;
mod split;
mod tiles;
mod vector;

pub use split::{split_train_test, AreaSplit, PixelRect, SplitAxis, SplitSide};
pub use tiles::{stitch, PadMode, Tile, TileGrid, TilePixels};
pub use vector::{
    clip_regions, rasterize_mask, rasterize_mask_naive, read_geojson, write_geojson, ClipReport,
    Polygon, PolygonSet,
};

use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// North-up affine georeference. Pixel `(row, col)` has its center at
/// `x = origin_x + (col + 0.5) * pixel_width`,
/// `y = origin_y - (row + 0.5) * pixel_height`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_width: f64,
    pub pixel_height: f64,
}

impl Default for GeoTransform {
    fn default() -> Self {
        Self {
            origin_x: 0.0,
            origin_y: 0.0,
            pixel_width: 1.0,
            pixel_height: 1.0,
        }
    }
}

impl GeoTransform {
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_width,
            self.origin_y - (row as f64 + 0.5) * self.pixel_height,
        )
    }
}

/// A multiband scene. `data` is `(band, row, col)`; `nodata` is `(row, col)`
/// with `true` marking void pixels (which hold 0 in `data`).
#[derive(Debug, Clone)]
pub struct MultibandRaster {
    pub data: Array3<f32>,
    pub nodata: Array2<bool>,
    pub band_names: Vec<String>,
    pub transform: GeoTransform,
    pub crs: Option<String>,
}

impl MultibandRaster {
    pub fn new(
        data: Array3<f32>,
        nodata: Array2<bool>,
        band_names: Vec<String>,
        transform: GeoTransform,
        crs: Option<String>,
    ) -> Result<Self> {
        let r = Self {
            data,
            nodata,
            band_names,
            transform,
            crs,
        };
        r.validate()?;
        Ok(r)
    }

    /// Raster with no nodata and a default transform; band names generated.
    pub fn from_bands(data: Array3<f32>) -> Result<Self> {
        let (bands, h, w) = data.dim();
        let names = (1..=bands).map(|i| format!("band_{i}")).collect();
        Self::new(data, Array2::from_elem((h, w), false), names, GeoTransform::default(), None)
    }

    pub fn validate(&self) -> Result<()> {
        let (bands, h, w) = self.data.dim();
        if bands == 0 || h == 0 || w == 0 {
            return Err(Error::RasterShape(format!(
                "raster must be non-empty, got {bands} bands, {h}x{w}"
            )));
        }
        if self.nodata.dim() != (h, w) {
            return Err(Error::RasterShape(format!(
                "nodata mask {:?} does not match raster extent {h}x{w}",
                self.nodata.dim()
            )));
        }
        if self.band_names.len() != bands {
            return Err(Error::RasterShape(format!(
                "{} band names for {bands} bands",
                self.band_names.len()
            )));
        }
        Ok(())
    }

    pub fn band_count(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn valid_pixel_count(&self) -> usize {
        self.nodata.iter().filter(|&&v| !v).count()
    }
}

/// Single-band binary raster; values are exactly 0 or 1.
#[derive(Debug, Clone)]
pub struct MaskRaster {
    pub values: Array2<u8>,
    pub transform: GeoTransform,
    pub crs: Option<String>,
}

impl MaskRaster {
    pub fn new(values: Array2<u8>, transform: GeoTransform, crs: Option<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::RasterShape("mask must be non-empty".into()));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::RasterShape("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            values,
            transform,
            crs,
        })
    }

    pub fn zeros_like(raster: &MultibandRaster) -> Self {
        Self {
            values: Array2::zeros((raster.height(), raster.width())),
            transform: raster.transform,
            crs: raster.crs.clone(),
        }
    }

    pub fn height(&self) -> usize {
        self.values.dim().0
    }

    pub fn width(&self) -> usize {
        self.values.dim().1
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }
}

/// On-disk raster container kinds. GeoTIFF is the interchange format; rgrid
/// is this repo's plain little-endian grid for fast test fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    GeoTiff,
    Rgrid,
}

fn detect_format(path: &Path) -> Option<RasterFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tif") | Some("tiff") => Some(RasterFormat::GeoTiff),
        Some("rgrid") => Some(RasterFormat::Rgrid),
        _ => None,
    }
}

fn resolve_format(path: &Path, hint: Option<RasterFormat>) -> Result<RasterFormat> {
    hint.or_else(|| detect_format(path)).ok_or_else(|| Error::RasterFormat {
        path: path.to_path_buf(),
        detail: "unknown raster format; use .tif/.tiff or .rgrid, or pass a format hint".into(),
    })
}

pub fn load_raster(path: &Path, hint: Option<RasterFormat>) -> Result<MultibandRaster> {
    match resolve_format(path, hint)? {
        RasterFormat::GeoTiff => geotiff::load_multiband(path),
        RasterFormat::Rgrid => rgrid::load_multiband(path),
    }
}

/// Load and verify the band count against an expected schema.
pub fn load_raster_expecting(
    path: &Path,
    hint: Option<RasterFormat>,
    expected_bands: usize,
) -> Result<MultibandRaster> {
    let r = load_raster(path, hint)?;
    if r.band_count() != expected_bands {
        return Err(Error::RasterFormat {
            path: path.to_path_buf(),
            detail: format!(
                "expected {expected_bands} bands, file has {}",
                r.band_count()
            ),
        });
    }
    Ok(r)
}

pub fn save_raster(raster: &MultibandRaster, path: &Path) -> Result<()> {
    raster.validate()?;
    match resolve_format(path, None)? {
        RasterFormat::GeoTiff => geotiff::save_multiband(raster, path),
        RasterFormat::Rgrid => rgrid::save_multiband(raster, path),
    }
}

pub fn load_mask(path: &Path) -> Result<MaskRaster> {
    match resolve_format(path, None)? {
        RasterFormat::GeoTiff => geotiff::load_mask(path),
        RasterFormat::Rgrid => rgrid::load_mask(path),
    }
}

pub fn save_mask(mask: &MaskRaster, path: &Path) -> Result<()> {
    match resolve_format(path, None)? {
        RasterFormat::GeoTiff => geotiff::save_mask(mask, path),
        RasterFormat::Rgrid => rgrid::save_mask(mask, path),
    }
}

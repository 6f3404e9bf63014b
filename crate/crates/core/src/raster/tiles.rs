//! Tile grids over a raster.
//!
//! A grid is pure geometry: rows, columns, and per-tile source windows. Pixel
//! data is materialized on demand through `extract`, so a grid over a large
//! scene costs nothing until tiles are read. Two layouts:
//!
//! - `ZeroPad`: ceil(W/s) x ceil(H/s) tiles; edge tiles read a partial window
//!   and fill the remainder with zeros, flagged invalid.
//! - `Crop`: floor(W/s) x floor(H/s) tiles; the right/bottom remainder is
//!   never covered.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::{MaskRaster, MultibandRaster};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    ZeroPad,
    Crop,
}

impl std::fmt::Display for PadMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PadMode::ZeroPad => "zero_pad",
            PadMode::Crop => "crop",
        })
    }
}

impl std::str::FromStr for PadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_pad" => Ok(PadMode::ZeroPad),
            "crop" => Ok(PadMode::Crop),
            other => Err(Error::RasterShape(format!(
                "unknown pad mode `{other}` (want zero_pad or crop)"
            ))),
        }
    }
}

/// One tile window. `x0`/`y0`/`width`/`height` describe the in-bounds part of
/// the source; `padded` marks tiles whose window is smaller than the tile
/// size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tile {
    pub index: usize,
    pub grid_row: usize,
    pub grid_col: usize,
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    pub padded: bool,
}

impl Tile {
    /// (x0, y0, width, height) of the in-bounds source window.
    pub fn pixel_window(&self) -> (usize, usize, usize, usize) {
        (self.x0, self.y0, self.width, self.height)
    }
}

/// Materialized tile content: `data` is (bands, size, size); `valid` is false
/// on padding and on nodata pixels, so 0 stays a legal reflectance.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePixels {
    pub data: Array3<f32>,
    pub valid: Array2<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    width: usize,
    height: usize,
    tile_size: usize,
    pad_mode: PadMode,
    rows: usize,
    cols: usize,
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

impl TileGrid {
    /// Grid geometry for a width x height source. Allocation-free, so counts
    /// for full-scene extents can be checked directly.
    pub fn layout(width: usize, height: usize, tile_size: usize, pad_mode: PadMode) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::RasterShape("tile grid over an empty raster".into()));
        }
        if tile_size == 0 {
            return Err(Error::RasterShape("tile size must be at least 1".into()));
        }
        let (rows, cols) = match pad_mode {
            PadMode::ZeroPad => (ceil_div(height, tile_size), ceil_div(width, tile_size)),
            PadMode::Crop => {
                let rows = height / tile_size;
                let cols = width / tile_size;
                if rows == 0 || cols == 0 {
                    return Err(Error::RasterShape(format!(
                        "crop layout yields zero tiles: size {tile_size} exceeds {width}x{height}"
                    )));
                }
                (rows, cols)
            }
        };
        Ok(Self {
            width,
            height,
            tile_size,
            pad_mode,
            rows,
            cols,
        })
    }

    pub fn for_raster(raster: &MultibandRaster, tile_size: usize, pad_mode: PadMode) -> Result<Self> {
        Self::layout(raster.width(), raster.height(), tile_size, pad_mode)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tile_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn tile_size(&self) -> usize {
        self.tile_size
    }

    pub fn pad_mode(&self) -> PadMode {
        self.pad_mode
    }

    pub fn source_width(&self) -> usize {
        self.width
    }

    pub fn source_height(&self) -> usize {
        self.height
    }

    pub fn tile(&self, index: usize) -> Tile {
        assert!(index < self.tile_count(), "tile index out of range");
        let grid_row = index / self.cols;
        let grid_col = index % self.cols;
        let x0 = grid_col * self.tile_size;
        let y0 = grid_row * self.tile_size;
        let width = self.tile_size.min(self.width - x0);
        let height = self.tile_size.min(self.height - y0);
        Tile {
            index,
            grid_row,
            grid_col,
            x0,
            y0,
            width,
            height,
            padded: width < self.tile_size || height < self.tile_size,
        }
    }

    pub fn tiles(&self) -> impl Iterator<Item = Tile> + '_ {
        (0..self.tile_count()).map(|i| self.tile(i))
    }

    fn check_source(&self, width: usize, height: usize) -> Result<()> {
        if width != self.width || height != self.height {
            return Err(Error::RasterShape(format!(
                "grid built for {}x{}, source is {width}x{height}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Materialize one tile. Padding stays 0/invalid; nodata pixels read as
    /// 0/invalid as well.
    pub fn extract(&self, raster: &MultibandRaster, tile: &Tile) -> Result<TilePixels> {
        self.check_source(raster.width(), raster.height())?;
        let s = self.tile_size;
        let bands = raster.band_count();
        let mut data = Array3::<f32>::zeros((bands, s, s));
        let mut valid = Array2::<bool>::from_elem((s, s), false);
        for i in 0..tile.height {
            for j in 0..tile.width {
                let (sr, sc) = (tile.y0 + i, tile.x0 + j);
                if raster.nodata[[sr, sc]] {
                    continue;
                }
                valid[[i, j]] = true;
                for b in 0..bands {
                    data[[b, i, j]] = raster.data[[b, sr, sc]];
                }
            }
        }
        Ok(TilePixels { data, valid })
    }

    /// Materialize one tile of a mask, zero-padded.
    pub fn extract_mask(&self, mask: &MaskRaster, tile: &Tile) -> Result<Array2<u8>> {
        let (h, w) = mask.values.dim();
        self.check_source(w, h)?;
        let s = self.tile_size;
        let mut out = Array2::<u8>::zeros((s, s));
        for i in 0..tile.height {
            for j in 0..tile.width {
                out[[i, j]] = mask.values[[tile.y0 + i, tile.x0 + j]];
            }
        }
        Ok(out)
    }
}

/// Reassemble per-tile grids (tile order, one size x size array each) onto the
/// source extent, discarding padding. Returns the stitched grid plus a
/// coverage mask; crop-mode remainders stay uncovered.
pub fn stitch(grid: &TileGrid, tiles: &[Array2<f32>]) -> Result<(Array2<f32>, Array2<bool>)> {
    if tiles.len() != grid.tile_count() {
        return Err(Error::RasterShape(format!(
            "stitch got {} tiles, grid has {}",
            tiles.len(),
            grid.tile_count()
        )));
    }
    let s = grid.tile_size();
    let mut out = Array2::<f32>::zeros((grid.source_height(), grid.source_width()));
    let mut covered = Array2::<bool>::from_elem((grid.source_height(), grid.source_width()), false);
    for (tile, patch) in grid.tiles().zip(tiles) {
        if patch.dim() != (s, s) {
            return Err(Error::RasterShape(format!(
                "tile {} is {:?}, expected ({s}, {s})",
                tile.index,
                patch.dim()
            )));
        }
        for i in 0..tile.height {
            for j in 0..tile.width {
                out[[tile.y0 + i, tile.x0 + j]] = patch[[i, j]];
                covered[[tile.y0 + i, tile.x0 + j]] = true;
            }
        }
    }
    Ok((out, covered))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::testutil::random_raster;
    use proptest::prelude::*;

    #[test]
    fn exact_fit_has_no_padding() {
        let r = random_raster(64, 64, 2);
        let grid = TileGrid::for_raster(&r, 32, PadMode::ZeroPad).unwrap();
        assert_eq!(grid.tile_count(), 4);
        assert!(grid.tiles().all(|t| !t.padded));
    }

    #[test]
    fn remainder_column_is_padded_under_zero_pad() {
        let r = random_raster(70, 64, 2);
        let grid = TileGrid::for_raster(&r, 32, PadMode::ZeroPad).unwrap();
        assert_eq!((grid.rows(), grid.cols()), (2, 3));
        assert_eq!(grid.tile_count(), 6);
        let padded: Vec<bool> = grid.tiles().map(|t| t.padded).collect();
        assert_eq!(padded, vec![false, false, true, false, false, true]);
        let edge = grid.tile(2);
        assert_eq!(edge.pixel_window(), (64, 0, 6, 32));

        let cropped = TileGrid::for_raster(&r, 32, PadMode::Crop).unwrap();
        assert_eq!(cropped.tile_count(), 4);
        assert!(cropped.tiles().all(|t| !t.padded));
    }

    #[test]
    fn survey_scale_counts_differ_by_mode() {
        // 14210 is not a multiple of 32; the two layouts disagree on that
        // axis: 445x456 padded vs 444x456 cropped.
        let padded = TileGrid::layout(14210, 14592, 32, PadMode::ZeroPad).unwrap();
        assert_eq!(padded.tile_count(), 202_920);
        let cropped = TileGrid::layout(14210, 14592, 32, PadMode::Crop).unwrap();
        assert_eq!(cropped.tile_count(), 202_464);
        assert_eq!((cropped.rows(), cropped.cols()), (456, 444));
    }

    #[test]
    fn degenerate_layouts_error() {
        assert!(TileGrid::layout(64, 64, 0, PadMode::ZeroPad).is_err());
        assert!(TileGrid::layout(20, 40, 32, PadMode::Crop).is_err());
        // Zero-pad still yields one (padded) tile for undersized scenes.
        let grid = TileGrid::layout(20, 40, 32, PadMode::ZeroPad).unwrap();
        assert_eq!(grid.tile_count(), 2);
        assert!(grid.tiles().all(|t| t.padded));
    }

    #[test]
    fn extract_zeroes_padding_and_nodata() {
        let mut r = random_raster(40, 40, 7);
        r.nodata[[1, 1]] = true;
        for b in 0..r.band_count() {
            r.data[[b, 1, 1]] = 0.0;
        }
        let grid = TileGrid::for_raster(&r, 32, PadMode::ZeroPad).unwrap();
        let t = grid.tile(0);
        let pixels = grid.extract(&r, &t).unwrap();
        assert!(!pixels.valid[[1, 1]]);
        assert!(pixels.valid[[0, 0]]);
        assert_eq!(pixels.data[[0, 0, 0]], r.data[[0, 0, 0]]);

        // Tile 1 covers cols 32..40; its right 24 columns are padding.
        let edge = grid.tile(1);
        let pixels = grid.extract(&r, &edge).unwrap();
        assert!(pixels.data.slice(ndarray::s![.., .., 8..]).iter().all(|&v| v == 0.0));
        assert!(pixels.valid.slice(ndarray::s![.., 8..]).iter().all(|&v| !v));
        assert!(pixels.valid[[0, 7]]);
    }

    #[test]
    fn stitch_restores_the_source_band() {
        for mode in [PadMode::ZeroPad, PadMode::Crop] {
            let r = random_raster(45, 37, 11);
            let grid = TileGrid::for_raster(&r, 16, mode).unwrap();
            let patches: Vec<Array2<f32>> = grid
                .tiles()
                .map(|t| {
                    grid.extract(&r, &t)
                        .unwrap()
                        .data
                        .index_axis(ndarray::Axis(0), 0)
                        .to_owned()
                })
                .collect();
            let (out, covered) = stitch(&grid, &patches).unwrap();
            for i in 0..r.height() {
                for j in 0..r.width() {
                    if covered[[i, j]] {
                        assert_eq!(out[[i, j]], r.data[[0, i, j]]);
                    }
                }
            }
            match mode {
                PadMode::ZeroPad => assert!(covered.iter().all(|&c| c)),
                PadMode::Crop => {
                    let want = (37 / 16) * 16 * ((45 / 16) * 16);
                    assert_eq!(covered.iter().filter(|&&c| c).count(), want);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Partition law: counts follow ceil/floor arithmetic and in-bounds
        /// windows cover each source pixel at most once, exactly once under
        /// zero-pad.
        #[test]
        fn windows_partition_the_source(
            width in 1usize..90,
            height in 1usize..90,
            tile_size in 1usize..40,
        ) {
            let zp = TileGrid::layout(width, height, tile_size, PadMode::ZeroPad).unwrap();
            prop_assert_eq!(
                zp.tile_count(),
                width.div_ceil(tile_size) * height.div_ceil(tile_size)
            );
            let mut hits = Array2::<u8>::zeros((height, width));
            for t in zp.tiles() {
                for i in 0..t.height {
                    for j in 0..t.width {
                        hits[[t.y0 + i, t.x0 + j]] += 1;
                    }
                }
            }
            prop_assert!(hits.iter().all(|&c| c == 1));

            match TileGrid::layout(width, height, tile_size, PadMode::Crop) {
                Ok(crop) => {
                    prop_assert_eq!(
                        crop.tile_count(),
                        (width / tile_size) * (height / tile_size)
                    );
                    let mut hits = Array2::<u8>::zeros((height, width));
                    for t in crop.tiles() {
                        prop_assert!(!t.padded);
                        for i in 0..t.height {
                            for j in 0..t.width {
                                hits[[t.y0 + i, t.x0 + j]] += 1;
                            }
                        }
                    }
                    let covered = hits.iter().filter(|&&c| c == 1).count();
                    prop_assert_eq!(covered, (width / tile_size) * tile_size * ((height / tile_size) * tile_size));
                    prop_assert!(hits.iter().all(|&c| c <= 1));
                }
                Err(_) => {
                    prop_assert!(width / tile_size == 0 || height / tile_size == 0);
                }
            }
        }
    }
}

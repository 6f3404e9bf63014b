//! GeoTIFF I/O.
//!
//! Multiband rasters are written as one Gray32Float page per band, in band
//! order. Georeferencing rides on the first page: ModelPixelScale (33550),
//! ModelTiepoint (33922), the GDAL nodata convention (42113, here the string
//! "nan"), GeoAsciiParams (34737) for the CRS tag, and an ImageDescription
//! JSON object carrying band names. Nodata pixels are stored as NaN and come
//! back as mask entries; in-memory data never holds NaN.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array2, Array3};
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::Tag;

use super::{GeoTransform, MaskRaster, MultibandRaster};
use crate::error::{Error, Result};

fn format_err(path: &Path, detail: impl std::fmt::Display) -> Error {
    Error::RasterFormat {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

fn write_geo_tags<W: std::io::Write + std::io::Seek>(
    dir: &mut tiff::encoder::DirectoryEncoder<'_, W, tiff::encoder::TiffKindStandard>,
    transform: &GeoTransform,
    crs: Option<&str>,
    description: Option<&str>,
    path: &Path,
) -> Result<()> {
    let scale = [transform.pixel_width, transform.pixel_height, 0.0];
    // Tiepoint: raster (0,0) maps to the world-space origin.
    let tie = [0.0, 0.0, 0.0, transform.origin_x, transform.origin_y, 0.0];
    dir.write_tag(Tag::ModelPixelScaleTag, &scale[..])
        .map_err(|e| format_err(path, e))?;
    dir.write_tag(Tag::ModelTiepointTag, &tie[..])
        .map_err(|e| format_err(path, e))?;
    if let Some(crs) = crs {
        dir.write_tag(Tag::GeoAsciiParamsTag, crs)
            .map_err(|e| format_err(path, e))?;
    }
    if let Some(desc) = description {
        dir.write_tag(Tag::ImageDescription, desc)
            .map_err(|e| format_err(path, e))?;
    }
    Ok(())
}

pub(super) fn save_multiband(raster: &MultibandRaster, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| format_err(path, e))?;
    let (bands, h, w) = raster.data.dim();
    let meta = serde_json::json!({ "bands": raster.band_names }).to_string();

    for bi in 0..bands {
        let mut img = enc
            .new_image::<colortype::Gray32Float>(w as u32, h as u32)
            .map_err(|e| format_err(path, e))?;
        if bi == 0 {
            write_geo_tags(
                img.encoder(),
                &raster.transform,
                raster.crs.as_deref(),
                Some(&meta),
                path,
            )?;
            img.encoder()
                .write_tag(Tag::GdalNodata, "nan")
                .map_err(|e| format_err(path, e))?;
        }
        let mut buf = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                buf.push(if raster.nodata[[i, j]] {
                    f32::NAN
                } else {
                    raster.data[[bi, i, j]]
                });
            }
        }
        img.write_data(&buf).map_err(|e| format_err(path, e))?;
    }
    Ok(())
}

fn read_transform(dec: &mut Decoder<BufReader<File>>) -> GeoTransform {
    let scale = dec
        .get_tag_f64_vec(Tag::ModelPixelScaleTag)
        .ok();
    let tie = dec.get_tag_f64_vec(Tag::ModelTiepointTag).ok();
    match (scale, tie) {
        (Some(s), Some(t)) if s.len() >= 2 && t.len() >= 5 => GeoTransform {
            pixel_width: s[0],
            pixel_height: s[1],
            origin_x: t[3],
            origin_y: t[4],
        },
        _ => GeoTransform::default(),
    }
}

/// Parse the GDAL nodata tag: either the literal string "nan" or a number.
fn read_nodata(dec: &mut Decoder<BufReader<File>>) -> Option<f64> {
    let s = dec.get_tag_ascii_string(Tag::GdalNodata).ok()?;
    let s = s.trim().trim_end_matches('\0').trim();
    if s.eq_ignore_ascii_case("nan") {
        Some(f64::NAN)
    } else {
        s.parse::<f64>().ok()
    }
}

fn page_to_f32(result: DecodingResult, path: &Path) -> Result<Vec<f32>> {
    Ok(match result {
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::U8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::I8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(|x| x as f32).collect(),
        _ => return Err(format_err(path, "unsupported sample type")),
    })
}

pub(super) fn load_multiband(path: &Path) -> Result<MultibandRaster> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = Decoder::new(BufReader::new(file)).map_err(|e| format_err(path, e))?;

    let transform = read_transform(&mut dec);
    let nodata_value = read_nodata(&mut dec);
    let crs = dec
        .get_tag_ascii_string(Tag::GeoAsciiParamsTag)
        .ok()
        .map(|s| s.trim_end_matches('\0').to_string());
    let description = dec.get_tag_ascii_string(Tag::ImageDescription).ok();

    let (w0, h0) = dec.dimensions().map_err(|e| format_err(path, e))?;
    let (w0, h0) = (w0 as usize, h0 as usize);
    let mut pages: Vec<Vec<f32>> = Vec::new();
    loop {
        let (w, h) = dec.dimensions().map_err(|e| format_err(path, e))?;
        if (w as usize, h as usize) != (w0, h0) {
            return Err(format_err(path, "bands disagree in extent"));
        }
        let page = dec.read_image().map_err(|e| format_err(path, e))?;
        pages.push(page_to_f32(page, path)?);
        if !dec.more_images() {
            break;
        }
        dec.next_image().map_err(|e| format_err(path, e))?;
    }

    let bands = pages.len();
    let mut data = Array3::<f32>::zeros((bands, h0, w0));
    let mut nodata = Array2::<bool>::from_elem((h0, w0), false);
    for (bi, page) in pages.iter().enumerate() {
        if page.len() != h0 * w0 {
            return Err(format_err(path, "page size does not match extent"));
        }
        for i in 0..h0 {
            for j in 0..w0 {
                let v = page[i * w0 + j];
                let is_void = match nodata_value {
                    Some(nd) if nd.is_nan() => v.is_nan(),
                    Some(nd) => f64::from(v) == nd,
                    None => v.is_nan(),
                };
                if is_void {
                    nodata[[i, j]] = true;
                } else {
                    data[[bi, i, j]] = v;
                }
            }
        }
    }
    // A pixel void in any band is void for the scene; zero it everywhere.
    for i in 0..h0 {
        for j in 0..w0 {
            if nodata[[i, j]] {
                for bi in 0..bands {
                    data[[bi, i, j]] = 0.0;
                }
            }
        }
    }

    let band_names = description
        .as_deref()
        .and_then(|d| serde_json::from_str::<serde_json::Value>(d.trim_end_matches('\0')).ok())
        .and_then(|v| {
            v.get("bands").and_then(|b| {
                b.as_array().map(|arr| {
                    arr.iter()
                        .map(|n| n.as_str().unwrap_or_default().to_string())
                        .collect::<Vec<_>>()
                })
            })
        })
        .filter(|names| names.len() == bands)
        .unwrap_or_else(|| (1..=bands).map(|i| format!("band_{i}")).collect());

    MultibandRaster::new(data, nodata, band_names, transform, crs)
}

pub(super) fn save_mask(mask: &MaskRaster, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| format_err(path, e))?;
    let (h, w) = mask.values.dim();
    let mut img = enc
        .new_image::<colortype::Gray8>(w as u32, h as u32)
        .map_err(|e| format_err(path, e))?;
    write_geo_tags(img.encoder(), &mask.transform, mask.crs.as_deref(), None, path)?;
    let buf: Vec<u8> = mask.values.iter().copied().collect();
    img.write_data(&buf).map_err(|e| format_err(path, e))?;
    Ok(())
}

pub(super) fn load_mask(path: &Path) -> Result<MaskRaster> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = Decoder::new(BufReader::new(file)).map_err(|e| format_err(path, e))?;
    let transform = read_transform(&mut dec);
    let crs = dec
        .get_tag_ascii_string(Tag::GeoAsciiParamsTag)
        .ok()
        .map(|s| s.trim_end_matches('\0').to_string());
    let (w, h) = dec.dimensions().map_err(|e| format_err(path, e))?;
    let values = match dec.read_image().map_err(|e| format_err(path, e))? {
        DecodingResult::U8(v) => v,
        _ => return Err(format_err(path, "mask must be 8-bit")),
    };
    let values = Array2::from_shape_vec((h as usize, w as usize), values)
        .map_err(|e| format_err(path, e))?;
    MaskRaster::new(values, transform, crs)
}

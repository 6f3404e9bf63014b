//! rgrid: a minimal little-endian binary raster container.
//!
//! Used where TIFF overhead is unwanted (fixtures, scratch artifacts). One
//! header, then band data row-major. Multiband payloads are f32 with NaN
//! marking nodata; masks are u8. Layout:
//!
//! ```text
//! magic     8  b"RGRIDv1\n"
//! kind      1  0 = multiband f32, 1 = mask u8
//! bands     2  u16
//! height    4  u32
//! width     4  u32
//! transform 32 f64 x4: origin_x, origin_y, pixel_width, pixel_height
//! crs       4+n  u32 length then UTF-8 (length 0 = absent)
//! names     per band: u32 length then UTF-8 (multiband only)
//! data      bands*height*width samples
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array3};

use super::{GeoTransform, MaskRaster, MultibandRaster};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RGRIDv1\n";
const KIND_MULTIBAND: u8 = 0;
const KIND_MASK: u8 = 1;

fn format_err(path: &Path, detail: impl std::fmt::Display) -> Error {
    Error::RasterFormat {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

fn write_string<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_string<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

fn write_header<W: Write>(
    w: &mut W,
    kind: u8,
    bands: u16,
    height: u32,
    width: u32,
    transform: &GeoTransform,
    crs: Option<&str>,
) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u8(kind)?;
    w.write_u16::<LittleEndian>(bands)?;
    w.write_u32::<LittleEndian>(height)?;
    w.write_u32::<LittleEndian>(width)?;
    w.write_f64::<LittleEndian>(transform.origin_x)?;
    w.write_f64::<LittleEndian>(transform.origin_y)?;
    w.write_f64::<LittleEndian>(transform.pixel_width)?;
    w.write_f64::<LittleEndian>(transform.pixel_height)?;
    write_string(w, crs.unwrap_or(""))
}

struct Header {
    kind: u8,
    bands: usize,
    height: usize,
    width: usize,
    transform: GeoTransform,
    crs: Option<String>,
}

fn read_header<R: Read>(r: &mut R, path: &Path) -> Result<Header> {
    let io = |e: std::io::Error| format_err(path, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(format_err(path, "bad magic, not an rgrid file"));
    }
    let kind = r.read_u8().map_err(io)?;
    let bands = r.read_u16::<LittleEndian>().map_err(io)? as usize;
    let height = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let width = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let transform = GeoTransform {
        origin_x: r.read_f64::<LittleEndian>().map_err(io)?,
        origin_y: r.read_f64::<LittleEndian>().map_err(io)?,
        pixel_width: r.read_f64::<LittleEndian>().map_err(io)?,
        pixel_height: r.read_f64::<LittleEndian>().map_err(io)?,
    };
    let crs = read_string(r).map_err(io)?;
    Ok(Header {
        kind,
        bands,
        height,
        width,
        transform,
        crs: (!crs.is_empty()).then_some(crs),
    })
}

pub(super) fn save_multiband(raster: &MultibandRaster, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    let (bands, h, wd) = raster.data.dim();
    write_header(
        &mut w,
        KIND_MULTIBAND,
        bands as u16,
        h as u32,
        wd as u32,
        &raster.transform,
        raster.crs.as_deref(),
    )
    .map_err(io)?;
    for name in &raster.band_names {
        write_string(&mut w, name).map_err(io)?;
    }
    for bi in 0..bands {
        for i in 0..h {
            for j in 0..wd {
                let v = if raster.nodata[[i, j]] {
                    f32::NAN
                } else {
                    raster.data[[bi, i, j]]
                };
                w.write_f32::<LittleEndian>(v).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub(super) fn load_multiband(path: &Path) -> Result<MultibandRaster> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let hdr = read_header(&mut r, path)?;
    if hdr.kind != KIND_MULTIBAND {
        return Err(format_err(path, "expected a multiband rgrid, found a mask"));
    }
    let io = |e: std::io::Error| format_err(path, e);
    let mut band_names = Vec::with_capacity(hdr.bands);
    for _ in 0..hdr.bands {
        band_names.push(read_string(&mut r).map_err(io)?);
    }
    let mut data = Array3::<f32>::zeros((hdr.bands, hdr.height, hdr.width));
    let mut nodata = Array2::<bool>::from_elem((hdr.height, hdr.width), false);
    for bi in 0..hdr.bands {
        for i in 0..hdr.height {
            for j in 0..hdr.width {
                let v = r.read_f32::<LittleEndian>().map_err(io)?;
                if v.is_nan() {
                    nodata[[i, j]] = true;
                } else {
                    data[[bi, i, j]] = v;
                }
            }
        }
    }
    for i in 0..hdr.height {
        for j in 0..hdr.width {
            if nodata[[i, j]] {
                for bi in 0..hdr.bands {
                    data[[bi, i, j]] = 0.0;
                }
            }
        }
    }
    MultibandRaster::new(data, nodata, band_names, hdr.transform, hdr.crs)
}

pub(super) fn save_mask(mask: &MaskRaster, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    let (h, wd) = mask.values.dim();
    write_header(
        &mut w,
        KIND_MASK,
        1,
        h as u32,
        wd as u32,
        &mask.transform,
        mask.crs.as_deref(),
    )
    .map_err(io)?;
    for v in mask.values.iter() {
        w.write_u8(*v).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub(super) fn load_mask(path: &Path) -> Result<MaskRaster> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let hdr = read_header(&mut r, path)?;
    if hdr.kind != KIND_MASK {
        return Err(format_err(path, "expected a mask rgrid, found multiband"));
    }
    let io = |e: std::io::Error| format_err(path, e);
    let mut buf = vec![0u8; hdr.height * hdr.width];
    r.read_exact(&mut buf).map_err(io)?;
    let values = Array2::from_shape_vec((hdr.height, hdr.width), buf)
        .map_err(|e| format_err(path, e))?;
    MaskRaster::new(values, hdr.transform, hdr.crs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::testutil::random_raster;

    #[test]
    fn multiband_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.rgrid");
        let mut r = random_raster(11, 6, 9);
        r.nodata[[0, 0]] = true;
        r.nodata[[5, 10]] = true;
        for b in 0..r.band_count() {
            r.data[[b, 0, 0]] = 0.0;
            r.data[[b, 5, 10]] = 0.0;
        }
        save_multiband(&r, &path).unwrap();
        let back = load_multiband(&path).unwrap();
        assert_eq!(back.data, r.data);
        assert_eq!(back.nodata, r.nodata);
        assert_eq!(back.band_names, r.band_names);
        assert_eq!(back.transform, r.transform);
    }

    #[test]
    fn mask_roundtrip_and_kind_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.rgrid");
        let mut values = Array2::<u8>::zeros((4, 5));
        values[[2, 2]] = 1;
        let mask = MaskRaster::new(values.clone(), GeoTransform::default(), Some("EPSG:4326".into()))
            .unwrap();
        save_mask(&mask, &path).unwrap();
        let back = load_mask(&path).unwrap();
        assert_eq!(back.values, values);
        assert_eq!(back.crs.as_deref(), Some("EPSG:4326"));

        // Loading a mask file as multiband must fail loudly.
        assert!(load_multiband(&path).is_err());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.rgrid");
        let r = random_raster(8, 8, 1);
        save_multiband(&r, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        assert!(load_multiband(&path).is_err());
    }
}

//! Chunked binary shards for built datasets.
//!
//! A dataset directory holds `manifest.json` (the `DatasetManifest` plus a
//! shard index) and `shard_NNNN.bin` files. Shard layout, little-endian:
//!
//! ```text
//! magic   8  b"RLSHARD1"
//! kind    1  0 = labeled, 1 = cluster
//! bands   2  u16
//! size    2  u16 tile edge
//! count   4  u32 records in this shard
//! ```
//!
//! Labeled record field order: scene u32, tile_index u32, grid_row u32,
//! grid_col u32, x0 u32, y0 u32, width u16, height u16, padded u8, flip u8
//! (0 identity, 1 horizontal, 2 vertical, 3 both), area u8 (0 train,
//! 1 test), label u8, pixels bands*size*size f32 band-major, valid
//! size*size u8 row-major, mask size*size u8 row-major.
//!
//! Cluster record field order: scene u32, tile_index u32, grid_row u32,
//! grid_col u32, x0 u32, y0 u32, width u16, height u16, padded u8,
//! cluster_label u32, then pixels and valid as above.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::{
    ClusterDataset, ClusterTile, DatasetKind, DatasetManifest, Flip, LabeledDataset, LabeledTile,
};
use crate::error::{Error, Result};
use crate::raster::{SplitSide, Tile};

const MAGIC: &[u8; 8] = b"RLSHARD1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ShardEntry {
    file: String,
    records: usize,
}

/// On-disk index: the dataset manifest plus the shard list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub manifest: DatasetManifest,
    pub bands: usize,
    shards: Vec<ShardEntry>,
}

fn flip_code(f: Flip) -> u8 {
    match f {
        Flip::Identity => 0,
        Flip::Horizontal => 1,
        Flip::Vertical => 2,
        Flip::Both => 3,
    }
}

fn flip_from(code: u8) -> Result<Flip> {
    Ok(match code {
        0 => Flip::Identity,
        1 => Flip::Horizontal,
        2 => Flip::Vertical,
        3 => Flip::Both,
        other => return Err(Error::Dataset(format!("bad flip code {other}"))),
    })
}

fn side_code(s: SplitSide) -> u8 {
    match s {
        SplitSide::Train => 0,
        SplitSide::Test => 1,
    }
}

fn side_from(code: u8) -> Result<SplitSide> {
    Ok(match code {
        0 => SplitSide::Train,
        1 => SplitSide::Test,
        other => return Err(Error::Dataset(format!("bad area code {other}"))),
    })
}

fn kind_code(k: DatasetKind) -> u8 {
    match k {
        DatasetKind::Labeled => 0,
        DatasetKind::Cluster => 1,
    }
}

fn write_tile_header<W: Write>(w: &mut W, scene: u32, tile: &Tile) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(scene)?;
    w.write_u32::<LittleEndian>(tile.index as u32)?;
    w.write_u32::<LittleEndian>(tile.grid_row as u32)?;
    w.write_u32::<LittleEndian>(tile.grid_col as u32)?;
    w.write_u32::<LittleEndian>(tile.x0 as u32)?;
    w.write_u32::<LittleEndian>(tile.y0 as u32)?;
    w.write_u16::<LittleEndian>(tile.width as u16)?;
    w.write_u16::<LittleEndian>(tile.height as u16)?;
    w.write_u8(u8::from(tile.padded))
}

fn read_tile_header<R: Read>(r: &mut R) -> std::io::Result<(u32, Tile)> {
    let scene = r.read_u32::<LittleEndian>()?;
    let index = r.read_u32::<LittleEndian>()? as usize;
    let grid_row = r.read_u32::<LittleEndian>()? as usize;
    let grid_col = r.read_u32::<LittleEndian>()? as usize;
    let x0 = r.read_u32::<LittleEndian>()? as usize;
    let y0 = r.read_u32::<LittleEndian>()? as usize;
    let width = r.read_u16::<LittleEndian>()? as usize;
    let height = r.read_u16::<LittleEndian>()? as usize;
    let padded = r.read_u8()? != 0;
    Ok((
        scene,
        Tile { index, grid_row, grid_col, x0, y0, width, height, padded },
    ))
}

fn write_pixels<W: Write>(w: &mut W, pixels: &Array3<f32>, valid: &Array2<bool>) -> std::io::Result<()> {
    for v in pixels.iter() {
        w.write_f32::<LittleEndian>(*v)?;
    }
    for v in valid.iter() {
        w.write_u8(u8::from(*v))?;
    }
    Ok(())
}

fn read_pixels<R: Read>(r: &mut R, bands: usize, size: usize) -> std::io::Result<(Array3<f32>, Array2<bool>)> {
    let mut pixels = Array3::<f32>::zeros((bands, size, size));
    for v in pixels.iter_mut() {
        *v = r.read_f32::<LittleEndian>()?;
    }
    let mut valid = Array2::<bool>::from_elem((size, size), false);
    for v in valid.iter_mut() {
        *v = r.read_u8()? != 0;
    }
    Ok((pixels, valid))
}

fn write_shard_header<W: Write>(
    w: &mut W,
    kind: DatasetKind,
    bands: usize,
    size: usize,
    count: usize,
) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u8(kind_code(kind))?;
    w.write_u16::<LittleEndian>(bands as u16)?;
    w.write_u16::<LittleEndian>(size as u16)?;
    w.write_u32::<LittleEndian>(count as u32)
}

fn read_shard_header<R: Read>(r: &mut R, path: &Path) -> Result<(u8, usize, usize, usize)> {
    let io = |e: std::io::Error| Error::io(path, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Dataset(format!("{}: not a shard file", path.display())));
    }
    let kind = r.read_u8().map_err(io)?;
    let bands = r.read_u16::<LittleEndian>().map_err(io)? as usize;
    let size = r.read_u16::<LittleEndian>().map_err(io)? as usize;
    let count = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    Ok((kind, bands, size, count))
}

enum TilesRef<'a> {
    Labeled(&'a [LabeledTile]),
    Cluster(&'a [ClusterTile]),
}

fn dataset_bands(tiles: &TilesRef<'_>) -> usize {
    match tiles {
        TilesRef::Labeled(t) => t.first().map_or(0, |t| t.pixels.dim().0),
        TilesRef::Cluster(t) => t.first().map_or(0, |t| t.pixels.dim().0),
    }
}

fn save_shards(
    manifest: &DatasetManifest,
    tiles: TilesRef<'_>,
    dir: &Path,
    records_per_shard: usize,
) -> Result<()> {
    if records_per_shard < 1 {
        return Err(Error::Dataset("records_per_shard must be >= 1".into()));
    }
    manifest.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bands = dataset_bands(&tiles);
    let size = manifest.tile_size;
    let total = match &tiles {
        TilesRef::Labeled(t) => t.len(),
        TilesRef::Cluster(t) => t.len(),
    };
    let mut shards = Vec::new();
    let mut offset = 0usize;
    let mut shard_no = 0usize;
    while offset < total {
        let count = records_per_shard.min(total - offset);
        let name = format!("shard_{shard_no:04}.bin");
        let path = dir.join(&name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e: std::io::Error| Error::io(&path, e);
        write_shard_header(&mut w, manifest.dataset_kind, bands, size, count).map_err(io)?;
        match &tiles {
            TilesRef::Labeled(ts) => {
                for t in &ts[offset..offset + count] {
                    write_tile_header(&mut w, t.scene, &t.tile).map_err(io)?;
                    w.write_u8(flip_code(t.flip)).map_err(io)?;
                    w.write_u8(side_code(t.area)).map_err(io)?;
                    w.write_u8(t.label).map_err(io)?;
                    write_pixels(&mut w, &t.pixels, &t.valid).map_err(io)?;
                    for v in t.target_mask.iter() {
                        w.write_u8(*v).map_err(io)?;
                    }
                }
            }
            TilesRef::Cluster(ts) => {
                for t in &ts[offset..offset + count] {
                    write_tile_header(&mut w, t.scene, &t.tile).map_err(io)?;
                    w.write_u32::<LittleEndian>(t.cluster_label).map_err(io)?;
                    write_pixels(&mut w, &t.pixels, &t.valid).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)?;
        shards.push(ShardEntry { file: name, records: count });
        offset += count;
        shard_no += 1;
    }
    let index = DatasetFile {
        manifest: manifest.clone(),
        bands,
        shards,
    };
    let path = dir.join("manifest.json");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &index).map_err(|e| Error::Serde(e.to_string()))?;
    w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))
}

pub fn save_labeled_dataset(
    dataset: &LabeledDataset,
    dir: &Path,
    records_per_shard: usize,
) -> Result<()> {
    save_shards(
        &dataset.manifest,
        TilesRef::Labeled(&dataset.tiles),
        dir,
        records_per_shard,
    )
}

pub fn save_cluster_dataset(
    dataset: &ClusterDataset,
    dir: &Path,
    records_per_shard: usize,
) -> Result<()> {
    save_shards(
        &dataset.manifest,
        TilesRef::Cluster(&dataset.tiles),
        dir,
        records_per_shard,
    )
}

fn read_index(dir: &Path) -> Result<DatasetFile> {
    let path = dir.join("manifest.json");
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let index: DatasetFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
    index.manifest.validate()?;
    Ok(index)
}

pub fn load_labeled_dataset(dir: &Path) -> Result<LabeledDataset> {
    let index = read_index(dir)?;
    if index.manifest.dataset_kind != DatasetKind::Labeled {
        return Err(Error::Dataset(format!(
            "{} holds a cluster dataset, expected labeled",
            dir.display()
        )));
    }
    let size = index.manifest.tile_size;
    let mut tiles = Vec::with_capacity(index.manifest.total_tiles);
    for entry in &index.shards {
        let path = dir.join(&entry.file);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut r = BufReader::new(file);
        let io = |e: std::io::Error| Error::io(&path, e);
        let (kind, bands, shard_size, count) = read_shard_header(&mut r, &path)?;
        if kind != kind_code(DatasetKind::Labeled) || shard_size != size || bands != index.bands {
            return Err(Error::Dataset(format!(
                "{}: shard header disagrees with the index",
                path.display()
            )));
        }
        if count != entry.records {
            return Err(Error::Dataset(format!(
                "{}: shard holds {count} records, index says {}",
                path.display(),
                entry.records
            )));
        }
        for _ in 0..count {
            let (scene, tile) = read_tile_header(&mut r).map_err(io)?;
            let flip = flip_from(r.read_u8().map_err(io)?)?;
            let area = side_from(r.read_u8().map_err(io)?)?;
            let label = r.read_u8().map_err(io)?;
            let (pixels, valid) = read_pixels(&mut r, bands, size).map_err(io)?;
            let mut target_mask = Array2::<u8>::zeros((size, size));
            for v in target_mask.iter_mut() {
                *v = r.read_u8().map_err(io)?;
            }
            tiles.push(LabeledTile { tile, scene, pixels, valid, target_mask, label, area, flip });
        }
    }
    if tiles.len() != index.manifest.total_tiles {
        return Err(Error::Dataset(format!(
            "shards hold {} tiles, manifest says {}",
            tiles.len(),
            index.manifest.total_tiles
        )));
    }
    Ok(LabeledDataset { tiles, manifest: index.manifest })
}

pub fn load_cluster_dataset(dir: &Path) -> Result<ClusterDataset> {
    let index = read_index(dir)?;
    if index.manifest.dataset_kind != DatasetKind::Cluster {
        return Err(Error::Dataset(format!(
            "{} holds a labeled dataset, expected cluster",
            dir.display()
        )));
    }
    let size = index.manifest.tile_size;
    let mut tiles = Vec::with_capacity(index.manifest.total_tiles);
    for entry in &index.shards {
        let path = dir.join(&entry.file);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut r = BufReader::new(file);
        let io = |e: std::io::Error| Error::io(&path, e);
        let (kind, bands, shard_size, count) = read_shard_header(&mut r, &path)?;
        if kind != kind_code(DatasetKind::Cluster) || shard_size != size || bands != index.bands {
            return Err(Error::Dataset(format!(
                "{}: shard header disagrees with the index",
                path.display()
            )));
        }
        for _ in 0..count {
            let (scene, tile) = read_tile_header(&mut r).map_err(io)?;
            let cluster_label = r.read_u32::<LittleEndian>().map_err(io)?;
            let (pixels, valid) = read_pixels(&mut r, bands, size).map_err(io)?;
            tiles.push(ClusterTile { tile, scene, pixels, valid, cluster_label });
        }
    }
    if tiles.len() != index.manifest.total_tiles {
        return Err(Error::Dataset(format!(
            "shards hold {} tiles, manifest says {}",
            tiles.len(),
            index.manifest.total_tiles
        )));
    }
    Ok(ClusterDataset { tiles, manifest: index.manifest })
}

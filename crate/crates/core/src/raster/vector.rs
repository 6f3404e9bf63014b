//! Polygon handling: GeoJSON I/O, rasterization, void clipping.
//!
//! Polygons live in the same coordinate space the raster transform maps pixel
//! centers into. A pixel belongs to a polygon iff its center is inside under
//! the even-odd rule; holes are extra rings folded into the same parity test.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde_json::Value;

use super::{GeoTransform, MaskRaster, MultibandRaster};
use crate::error::{Error, Result};

type Point = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    outer: Vec<Point>,
    holes: Vec<Vec<Point>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolygonSet {
    pub polygons: Vec<Polygon>,
}

/// Report attached to a clip result. `polygons_fully_outside` flags void
/// regions whose bounding box misses the raster extent entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipReport {
    pub pixels_clipped: usize,
    pub polygons_fully_outside: usize,
}

/// Drop a duplicated closing vertex; GeoJSON rings repeat the first point.
fn open_ring(mut ring: Vec<Point>) -> Vec<Point> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

fn check_ring(ring: &[Point]) -> Result<()> {
    if ring.len() < 3 {
        return Err(Error::Vector("ring needs at least 3 vertices".into()));
    }
    if ring.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Vector("ring has non-finite coordinates".into()));
    }
    Ok(())
}

/// Even-odd crossing test for one ring. Strict comparisons keep points on
/// horizontal edges from double-counting.
fn ring_contains(ring: &[Point], px: f64, py: f64) -> bool {
    let mut inside = false;
    let n = ring.len();
    for i in 0..n {
        let (x1, y1) = ring[i];
        let (x2, y2) = ring[(i + 1) % n];
        if (y1 > py) != (y2 > py) {
            let x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

impl Polygon {
    pub fn new(outer: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self> {
        let outer = open_ring(outer);
        check_ring(&outer)?;
        let holes: Vec<Vec<Point>> = holes.into_iter().map(open_ring).collect();
        for h in &holes {
            check_ring(h)?;
        }
        Ok(Self { outer, holes })
    }

    pub fn outer(&self) -> &[Point] {
        &self.outer
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = ring_contains(&self.outer, x, y);
        for h in &self.holes {
            inside ^= ring_contains(h, x, y);
        }
        inside
    }

    /// (min_x, min_y, max_x, max_y) over all rings.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (x, y) in self.outer.iter().chain(self.holes.iter().flatten()) {
            b.0 = b.0.min(*x);
            b.1 = b.1.min(*y);
            b.2 = b.2.max(*x);
            b.3 = b.3.max(*y);
        }
        b
    }
}

impl PolygonSet {
    pub fn new(polygons: Vec<Polygon>) -> Self {
        Self { polygons }
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    pub fn len(&self) -> usize {
        self.polygons.len()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.polygons.iter().any(|p| p.contains(x, y))
    }
}

fn ring_from_json(v: &Value) -> Result<Vec<Point>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::Vector("ring is not an array".into()))?;
    arr.iter()
        .map(|pt| {
            let pair = pt
                .as_array()
                .filter(|p| p.len() >= 2)
                .ok_or_else(|| Error::Vector("coordinate is not an [x, y] pair".into()))?;
            let x = pair[0]
                .as_f64()
                .ok_or_else(|| Error::Vector("coordinate is not numeric".into()))?;
            let y = pair[1]
                .as_f64()
                .ok_or_else(|| Error::Vector("coordinate is not numeric".into()))?;
            Ok((x, y))
        })
        .collect()
}

fn polygon_from_rings(rings: &Value) -> Result<Polygon> {
    let rings = rings
        .as_array()
        .ok_or_else(|| Error::Vector("polygon coordinates is not an array of rings".into()))?;
    if rings.is_empty() {
        return Err(Error::Vector("polygon has no rings".into()));
    }
    let outer = ring_from_json(&rings[0])?;
    let holes = rings[1..]
        .iter()
        .map(ring_from_json)
        .collect::<Result<Vec<_>>>()?;
    Polygon::new(outer, holes)
}

fn collect_geometry(geom: &Value, out: &mut Vec<Polygon>) -> Result<()> {
    let gtype = geom
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Vector("geometry missing type".into()))?;
    let coords = geom
        .get("coordinates")
        .ok_or_else(|| Error::Vector("geometry missing coordinates".into()))?;
    match gtype {
        "Polygon" => out.push(polygon_from_rings(coords)?),
        "MultiPolygon" => {
            let polys = coords
                .as_array()
                .ok_or_else(|| Error::Vector("MultiPolygon coordinates is not an array".into()))?;
            for p in polys {
                out.push(polygon_from_rings(p)?);
            }
        }
        other => {
            return Err(Error::Vector(format!(
                "unsupported geometry type `{other}` (want Polygon or MultiPolygon)"
            )))
        }
    }
    Ok(())
}

/// Read a GeoJSON FeatureCollection (or bare Feature / geometry) of polygons.
pub fn read_geojson(path: &Path) -> Result<PolygonSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let root: Value = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Vector(format!("{}: {e}", path.display())))?;
    let mut polygons = Vec::new();
    match root.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => {
            let features = root
                .get("features")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Vector("FeatureCollection missing features".into()))?;
            for f in features {
                let geom = f
                    .get("geometry")
                    .ok_or_else(|| Error::Vector("feature missing geometry".into()))?;
                if !geom.is_null() {
                    collect_geometry(geom, &mut polygons)?;
                }
            }
        }
        Some("Feature") => {
            let geom = root
                .get("geometry")
                .ok_or_else(|| Error::Vector("feature missing geometry".into()))?;
            collect_geometry(geom, &mut polygons)?;
        }
        Some(_) => collect_geometry(&root, &mut polygons)?,
        None => return Err(Error::Vector("JSON root has no GeoJSON type".into())),
    }
    Ok(PolygonSet::new(polygons))
}

fn ring_to_json(ring: &[Point]) -> Value {
    let mut pts: Vec<Value> = ring
        .iter()
        .map(|(x, y)| serde_json::json!([x, y]))
        .collect();
    // Close the ring as GeoJSON requires.
    pts.push(pts[0].clone());
    Value::Array(pts)
}

pub fn write_geojson(set: &PolygonSet, path: &Path) -> Result<()> {
    let features: Vec<Value> = set
        .polygons
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rings = vec![ring_to_json(&p.outer)];
            rings.extend(p.holes.iter().map(|h| ring_to_json(h)));
            serde_json::json!({
                "type": "Feature",
                "properties": { "id": i },
                "geometry": { "type": "Polygon", "coordinates": rings },
            })
        })
        .collect();
    let doc = serde_json::json!({ "type": "FeatureCollection", "features": features });
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Error::Serde(e.to_string()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Inclusive pixel window whose centers could fall inside `bbox`, padded one
/// pixel to absorb rounding. None when the window misses the raster.
fn candidate_window(
    transform: &GeoTransform,
    height: usize,
    width: usize,
    bbox: (f64, f64, f64, f64),
) -> Option<(usize, usize, usize, usize)> {
    let (minx, miny, maxx, maxy) = bbox;
    if transform.pixel_width == 0.0 || transform.pixel_height == 0.0 {
        return Some((0, height - 1, 0, width - 1));
    }
    let col_of = |x: f64| (x - transform.origin_x) / transform.pixel_width - 0.5;
    let row_of = |y: f64| (transform.origin_y - y) / transform.pixel_height - 0.5;
    let (ca, cb) = (col_of(minx), col_of(maxx));
    let (ra, rb) = (row_of(miny), row_of(maxy));
    let c_lo = ca.min(cb).floor() - 1.0;
    let c_hi = ca.max(cb).ceil() + 1.0;
    let r_lo = ra.min(rb).floor() - 1.0;
    let r_hi = ra.max(rb).ceil() + 1.0;
    if c_hi < 0.0 || r_hi < 0.0 || c_lo >= width as f64 || r_lo >= height as f64 {
        return None;
    }
    let c0 = c_lo.max(0.0) as usize;
    let r0 = r_lo.max(0.0) as usize;
    let c1 = (c_hi as usize).min(width - 1);
    let r1 = (r_hi as usize).min(height - 1);
    Some((r0, r1, c0, c1))
}

/// Rasterize polygons onto the template grid: 1 iff the pixel center is
/// inside any polygon. Scans per-polygon bounding windows only.
pub fn rasterize_mask(polygons: &PolygonSet, template: &MultibandRaster) -> MaskRaster {
    let (h, w) = (template.height(), template.width());
    let mut values = Array2::<u8>::zeros((h, w));
    for poly in &polygons.polygons {
        let Some((r0, r1, c0, c1)) = candidate_window(&template.transform, h, w, poly.bbox())
        else {
            continue;
        };
        for row in r0..=r1 {
            for col in c0..=c1 {
                if values[[row, col]] == 0 {
                    let (x, y) = template.transform.pixel_center(row, col);
                    if poly.contains(x, y) {
                        values[[row, col]] = 1;
                    }
                }
            }
        }
    }
    MaskRaster {
        values,
        transform: template.transform,
        crs: template.crs.clone(),
    }
}

/// Full-scan rasterizer with no window acceleration. Reference route for the
/// windowed implementation; tests hold the two equal.
pub fn rasterize_mask_naive(polygons: &PolygonSet, template: &MultibandRaster) -> MaskRaster {
    let (h, w) = (template.height(), template.width());
    let mut values = Array2::<u8>::zeros((h, w));
    for row in 0..h {
        for col in 0..w {
            let (x, y) = template.transform.pixel_center(row, col);
            if polygons.contains(x, y) {
                values[[row, col]] = 1;
            }
        }
    }
    MaskRaster {
        values,
        transform: template.transform,
        crs: template.crs.clone(),
    }
}

fn world_extent(transform: &GeoTransform, height: usize, width: usize) -> (f64, f64, f64, f64) {
    let x0 = transform.origin_x;
    let x1 = transform.origin_x + width as f64 * transform.pixel_width;
    let y0 = transform.origin_y;
    let y1 = transform.origin_y - height as f64 * transform.pixel_height;
    (x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1))
}

fn bboxes_disjoint(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> bool {
    a.2 < b.0 || b.2 < a.0 || a.3 < b.1 || b.3 < a.1
}

/// Void out every pixel whose center lies inside a region: data set to 0 in
/// all bands, nodata set. `pixels_clipped` counts newly voided pixels, so a
/// repeat application reports 0.
pub fn clip_regions(
    mut raster: MultibandRaster,
    void_regions: &PolygonSet,
) -> (MultibandRaster, ClipReport) {
    let (h, w) = (raster.height(), raster.width());
    let extent = world_extent(&raster.transform, h, w);
    let polygons_fully_outside = void_regions
        .polygons
        .iter()
        .filter(|p| bboxes_disjoint(p.bbox(), extent))
        .count();

    let coverage = rasterize_mask(void_regions, &raster);
    let mut pixels_clipped = 0;
    let bands = raster.band_count();
    for row in 0..h {
        for col in 0..w {
            if coverage.values[[row, col]] == 1 {
                if !raster.nodata[[row, col]] {
                    pixels_clipped += 1;
                }
                raster.nodata[[row, col]] = true;
                for b in 0..bands {
                    raster.data[[b, row, col]] = 0.0;
                }
            }
        }
    }
    (
        raster,
        ClipReport {
            pixels_clipped,
            polygons_fully_outside,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::testutil::random_raster;
    use proptest::prelude::*;

    /// Transform mapping pixel (row, col) centers to (col + 0.5, row + 0.5),
    /// so test polygons can be written directly in row/col space.
    fn rowcol_space() -> GeoTransform {
        GeoTransform {
            origin_x: 0.0,
            origin_y: 0.0,
            pixel_width: 1.0,
            pixel_height: -1.0,
        }
    }

    fn raster_in_rowcol_space(width: usize, height: usize) -> MultibandRaster {
        let mut r = random_raster(width, height, 3);
        r.transform = rowcol_space();
        r
    }

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::new(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)], vec![]).unwrap()
    }

    #[test]
    fn empty_set_rasterizes_to_zero() {
        let r = raster_in_rowcol_space(8, 8);
        let mask = rasterize_mask(&PolygonSet::default(), &r);
        assert_eq!(mask.count_ones(), 0);
    }

    #[test]
    fn rectangle_covers_the_expected_block() {
        // Centers at (col+0.5, row+0.5); x in (1,6) hits cols 1..=5, y in
        // (1,5) hits rows 1..=4: a 4x5 block.
        let r = raster_in_rowcol_space(10, 10);
        let set = PolygonSet::new(vec![rect(1.0, 1.0, 6.0, 5.0)]);
        let mask = rasterize_mask(&set, &r);
        assert_eq!(mask.count_ones(), 20);
        for row in 1..5 {
            for col in 1..6 {
                assert_eq!(mask.values[[row, col]], 1);
            }
        }
    }

    #[test]
    fn overlapping_polygons_stay_binary() {
        let r = raster_in_rowcol_space(12, 12);
        let set = PolygonSet::new(vec![rect(0.0, 0.0, 8.0, 8.0), rect(4.0, 4.0, 12.0, 12.0)]);
        let mask = rasterize_mask(&set, &r);
        assert!(mask.values.iter().all(|&v| v <= 1));
        assert_eq!(mask.values[[5, 5]], 1);
    }

    #[test]
    fn holes_are_excluded() {
        let r = raster_in_rowcol_space(10, 10);
        let poly = Polygon::new(
            vec![(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)],
            vec![vec![(3.0, 3.0), (7.0, 3.0), (7.0, 7.0), (3.0, 7.0)]],
        )
        .unwrap();
        let mask = rasterize_mask(&PolygonSet::new(vec![poly]), &r);
        assert_eq!(mask.values[[5, 5]], 0);
        assert_eq!(mask.values[[1, 1]], 1);
        assert_eq!(mask.count_ones(), 100 - 16);
    }

    #[test]
    fn clip_left_half_marks_512_pixels() {
        let r = raster_in_rowcol_space(32, 32);
        let set = PolygonSet::new(vec![rect(0.0, 0.0, 16.0, 32.0)]);
        let (clipped, report) = clip_regions(r, &set);
        assert_eq!(report.pixels_clipped, 512);
        assert_eq!(report.polygons_fully_outside, 0);
        assert_eq!(clipped.nodata.iter().filter(|&&v| v).count(), 512);
        assert!(clipped
            .data
            .slice(ndarray::s![.., .., ..16])
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn clip_is_idempotent_and_empty_set_is_identity() {
        let r = raster_in_rowcol_space(16, 16);
        let (same, report) = clip_regions(r.clone(), &PolygonSet::default());
        assert_eq!(report.pixels_clipped, 0);
        assert_eq!(same.data, r.data);

        let set = PolygonSet::new(vec![rect(2.0, 2.0, 9.0, 11.0)]);
        let (once, first) = clip_regions(r, &set);
        let (twice, second) = clip_regions(once.clone(), &set);
        assert!(first.pixels_clipped > 0);
        assert_eq!(second.pixels_clipped, 0);
        assert_eq!(twice.data, once.data);
        assert_eq!(twice.nodata, once.nodata);
    }

    #[test]
    fn outside_polygon_is_flagged_not_applied() {
        let r = raster_in_rowcol_space(8, 8);
        let set = PolygonSet::new(vec![rect(100.0, 100.0, 110.0, 110.0)]);
        let (same, report) = clip_regions(r, &set);
        assert_eq!(report.pixels_clipped, 0);
        assert_eq!(report.polygons_fully_outside, 1);
        assert_eq!(same.nodata.iter().filter(|&&v| v).count(), 0);
    }

    #[test]
    fn full_extent_polygon_voids_everything() {
        let r = raster_in_rowcol_space(6, 5);
        let set = PolygonSet::new(vec![rect(-1.0, -1.0, 7.0, 6.0)]);
        let (clipped, _) = clip_regions(r, &set);
        assert!(clipped.nodata.iter().all(|&v| v));
    }

    #[test]
    fn geojson_roundtrip_preserves_rings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("slides.geojson");
        let set = PolygonSet::new(vec![
            rect(1.0, 2.0, 5.0, 6.0),
            Polygon::new(
                vec![(0.0, 0.0), (9.0, 0.0), (9.0, 9.0), (0.0, 9.0)],
                vec![vec![(2.0, 2.0), (4.0, 2.0), (4.0, 4.0), (2.0, 4.0)]],
            )
            .unwrap(),
        ]);
        write_geojson(&set, &path).unwrap();
        let back = read_geojson(&path).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn multipolygon_features_are_flattened() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("multi.geojson");
        let doc = serde_json::json!({
            "type": "FeatureCollection",
            "features": [{
                "type": "Feature",
                "properties": {},
                "geometry": {
                    "type": "MultiPolygon",
                    "coordinates": [
                        [[[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0], [0.0, 0.0]]],
                        [[[5.0, 5.0], [7.0, 5.0], [7.0, 7.0], [5.0, 7.0], [5.0, 5.0]]]
                    ]
                }
            }]
        });
        std::fs::write(&path, doc.to_string()).unwrap();
        let set = read_geojson(&path).unwrap();
        assert_eq!(set.len(), 2);

        let point = serde_json::json!({
            "type": "Feature",
            "properties": {},
            "geometry": { "type": "Point", "coordinates": [1.0, 1.0] }
        });
        let bad = dir.path().join("point.geojson");
        std::fs::write(&bad, point.to_string()).unwrap();
        assert!(read_geojson(&bad).is_err());
    }

    /// Simple star-shaped polygon around a center: sorted angles guarantee a
    /// non-self-intersecting ring.
    fn star_polygon(cx: f64, cy: f64, radii: &[f64]) -> Polygon {
        let n = radii.len();
        let ring: Vec<Point> = radii
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let theta = 2.0 * std::f64::consts::PI * (i as f64) / (n as f64);
                (cx + r * theta.cos(), cy + r * theta.sin())
            })
            .collect();
        Polygon::new(ring, vec![]).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn windowed_rasterizer_matches_full_scan(
            width in 4usize..48,
            height in 4usize..48,
            polys in proptest::collection::vec(
                (0.0f64..48.0, 0.0f64..48.0, proptest::collection::vec(0.5f64..20.0, 3..9)),
                1..4,
            ),
        ) {
            let r = raster_in_rowcol_space(width, height);
            let set = PolygonSet::new(
                polys.iter().map(|(cx, cy, radii)| star_polygon(*cx, *cy, radii)).collect(),
            );
            let fast = rasterize_mask(&set, &r);
            let slow = rasterize_mask_naive(&set, &r);
            prop_assert_eq!(fast.values, slow.values);
        }
    }
}

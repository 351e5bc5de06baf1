//! Dense optical flow between a reference and a deformed particle image,
//! pooled into per-region (magnitude, direction) features.
//!
//! File formats:
//! - images: 8-bit grayscale PNG or PGM, intensities mapped to [0, 1]
//! - flow dump: 16-byte header (`FLOW`, width u32 LE, height u32 LE,
//!   reserved u32) followed by row-major little-endian f32 `u,v` pairs
//! - features CSV: `region_index,magnitude_px,direction_rad`

mod dis;
mod render;

pub use dis::dense_flow;
pub use render::{render_scene, DisplacementField, ParticleScene};

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::characterization::{check_header, csv_reader, parse_field};
use crate::error::{Error, Result};

/// Magnitudes below this have their direction reported as 0.
pub const DIRECTION_EPS: f64 = 1e-9;

/// Smallest accepted image side in pixels.
pub const MIN_IMAGE_SIDE: usize = 32;

/// Row-major grayscale image with intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width < MIN_IMAGE_SIDE || height < MIN_IMAGE_SIDE {
            return Err(Error::config(format!(
                "image {width}x{height} smaller than the {MIN_IMAGE_SIDE} px minimum"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::config(format!(
                "pixel buffer of {} for {width}x{height} image",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(p.is_finite() && (0.0..=1.0).contains(p))) {
            return Err(Error::config("pixel intensities must be finite in [0, 1]".to_string()));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Load a grayscale PNG or PGM, mapping 8-bit intensity to [0, 1].
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| Error::schema(format!("{}: {e}", path.display())))?
            .to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let pixels = img.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect();
        Self::new(w, h, pixels)
    }

    /// Write as an 8-bit grayscale PNG.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let buf: image::GrayImage =
            image::ImageBuffer::from_raw(self.width as u32, self.height as u32, bytes)
                .expect("buffer length matches dimensions");
        buf.save(path.as_ref())
            .map_err(|e| Error::schema(format!("{}: {e}", path.as_ref().display())))?;
        Ok(())
    }
}

/// Per-pixel displacement field in pixels, same dimensions as its images.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::config("flow buffers must match the image size".to_string()));
        }
        if u.iter().chain(v.iter()).any(|c| !c.is_finite()) {
            return Err(Error::config("flow components must be finite".to_string()));
        }
        Ok(Self { width, height, u, v })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 2] {
        let i = y * self.width + x;
        [self.u[i], self.v[i]]
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }
}

/// Configuration of the pyramidal patch-based flow estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    /// Pyramid levels (scale 2 between levels).
    pub levels: usize,
    /// Square patch side in pixels.
    pub patch_size: usize,
    /// Patch grid stride in pixels.
    pub stride: usize,
    /// Iteration cap of the per-patch alignment.
    pub max_iters: usize,
    /// Alignment stops once the update is below this, in pixels.
    pub min_update_px: f64,
    /// Patches with intensity variance below this are treated as textureless
    /// and inherit the average flow of their valid neighbors.
    pub texture_var_min: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            patch_size: 8,
            stride: 4,
            max_iters: 12,
            min_update_px: 0.01,
            texture_var_min: 1e-4,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.patch_size < 2 || self.stride == 0 || self.max_iters == 0 {
            return Err(Error::config(format!("invalid flow configuration {self:?}")));
        }
        if self.stride > self.patch_size {
            return Err(Error::config(
                "flow stride must not exceed the patch size (full coverage)".to_string(),
            ));
        }
        let positive = self.min_update_px.is_finite() && self.min_update_px > 0.0;
        let non_negative = self.texture_var_min.is_finite() && self.texture_var_min >= 0.0;
        if !positive || !non_negative {
            return Err(Error::config(format!("invalid flow configuration {self:?}")));
        }
        Ok(())
    }
}

/// Equal-area pooling regions tiling the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub rows: usize,
    pub cols: usize,
}

impl RegionGrid {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::config("region grid needs at least one row and column".to_string()));
        }
        Ok(Self { rows, cols })
    }

    /// Region count m.
    pub fn region_count(&self) -> usize {
        self.rows * self.cols
    }
}

/// Pooled flow features: per region the mean-vector magnitude (px) and
/// direction (rad, in (-pi, pi]), packed region-major as
/// `(mag_0, dir_0, mag_1, dir_1, ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    regions: RegionGrid,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn regions(&self) -> RegionGrid {
        self.regions
    }

    /// m = number of regions; the value vector has length 2m.
    pub fn region_count(&self) -> usize {
        self.regions.region_count()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn magnitude(&self, region: usize) -> f64 {
        self.values[2 * region]
    }

    pub fn direction(&self, region: usize) -> f64 {
        self.values[2 * region + 1]
    }
}

/// Average the flow vector over each region and convert to magnitude and
/// direction. The frame must divide evenly into the region grid.
pub fn pool_features(flow: &FlowField, regions: RegionGrid) -> Result<FeatureVector> {
    if !flow.width().is_multiple_of(regions.cols) || !flow.height().is_multiple_of(regions.rows) {
        return Err(Error::config(format!(
            "{}x{} flow does not tile into {}x{} regions",
            flow.width(),
            flow.height(),
            regions.rows,
            regions.cols
        )));
    }
    let rw = flow.width() / regions.cols;
    let rh = flow.height() / regions.rows;
    let area = (rw * rh) as f64;

    let mut values = Vec::with_capacity(2 * regions.region_count());
    for r in 0..regions.rows {
        for c in 0..regions.cols {
            let mut mu = 0.0;
            let mut mv = 0.0;
            for y in r * rh..(r + 1) * rh {
                for x in c * rw..(c + 1) * rw {
                    let [u, v] = flow.at(x, y);
                    mu += u;
                    mv += v;
                }
            }
            mu /= area;
            mv /= area;
            let mag = (mu * mu + mv * mv).sqrt();
            let dir = if mag < DIRECTION_EPS { 0.0 } else { mv.atan2(mu) };
            values.push(mag);
            values.push(dir);
        }
    }
    Ok(FeatureVector { regions, values })
}

const FLOW_MAGIC: &[u8; 4] = b"FLOW";

/// Write a binary flow dump.
pub fn write_flow<W: Write>(mut w: W, flow: &FlowField) -> Result<()> {
    w.write_all(FLOW_MAGIC)?;
    w.write_all(&(flow.width() as u32).to_le_bytes())?;
    w.write_all(&(flow.height() as u32).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for i in 0..flow.width() * flow.height() {
        w.write_all(&(flow.u[i] as f32).to_le_bytes())?;
        w.write_all(&(flow.v[i] as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_flow_path(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 8 * flow.width() * flow.height());
    write_flow(&mut buf, flow)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Read a binary flow dump.
pub fn read_flow<R: Read>(mut r: R) -> Result<FlowField> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| Error::schema("flow dump shorter than its 16-byte header".to_string()))?;
    if &header[0..4] != FLOW_MAGIC {
        return Err(Error::schema("bad flow dump magic (expected FLOW)".to_string()));
    }
    let width = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let count = width * height;
    let mut data = vec![0u8; count * 8];
    r.read_exact(&mut data)
        .map_err(|_| Error::schema("flow dump truncated".to_string()))?;
    let mut u = Vec::with_capacity(count);
    let mut v = Vec::with_capacity(count);
    for i in 0..count {
        let off = i * 8;
        u.push(f64::from(f32::from_le_bytes(data[off..off + 4].try_into().unwrap())));
        v.push(f64::from(f32::from_le_bytes(data[off + 4..off + 8].try_into().unwrap())));
    }
    FlowField::new(width, height, u, v)
}

pub fn read_flow_path(path: impl AsRef<Path>) -> Result<FlowField> {
    let file = std::fs::File::open(path.as_ref())?;
    read_flow(std::io::BufReader::new(file))
}

/// Write features as `region_index,magnitude_px,direction_rad`.
pub fn write_features_csv<W: Write>(mut w: W, features: &FeatureVector) -> Result<()> {
    writeln!(w, "region_index,magnitude_px,direction_rad")?;
    for i in 0..features.region_count() {
        writeln!(w, "{},{},{}", i, features.magnitude(i), features.direction(i))?;
    }
    Ok(())
}

/// Read a features CSV produced by [`write_features_csv`].
pub fn read_features_csv<R: Read>(r: R, regions: RegionGrid) -> Result<FeatureVector> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &["region_index", "magnitude_px", "direction_rad"])?;
    let m = regions.region_count();
    let mut values = vec![0.0; 2 * m];
    let mut seen = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let idx = rec
            .get(0)
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|idx| *idx < m)
            .ok_or_else(|| Error::schema(format!("row {}: bad region_index", i + 2)))?;
        values[2 * idx] = parse_field(&rec, 1, i, "magnitude_px")?;
        values[2 * idx + 1] = parse_field(&rec, 2, i, "direction_rad")?;
        seen += 1;
    }
    if seen != m {
        return Err(Error::schema(format!("feature CSV holds {seen} regions, expected {m}")));
    }
    Ok(FeatureVector { regions, values })
}

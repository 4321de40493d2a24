//! Equirectangular heatmaps of per-direction metrics.
//!
//! Each PNG has a JSON sidecar describing the axes, value range and colormap,
//! so the images can be read quantitatively.

use std::fs;
use std::path::{Path, PathBuf};

use ambidec_core::sh::Direction;
use image::{Rgb, RgbImage};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Pixel grid for a map. Columns run from azimuth +180 (left) to -180
/// (right), rows from elevation +90 (top) to -90 (bottom).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapGrid {
    pub step_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl MapGrid {
    pub fn new(step_deg: f64) -> CliResult<Self> {
        if !(step_deg > 0.0 && step_deg <= 45.0) || (360.0 / step_deg).fract().abs() > 1e-9 {
            return Err(CliError::Config(format!("map step {step_deg} must divide 360 and lie in (0, 45]")));
        }
        let width = (360.0 / step_deg).round() as usize + 1;
        let height = (180.0 / step_deg).round() as usize + 1;
        Ok(Self { step_deg, width, height })
    }

    pub fn az_deg(&self, col: usize) -> f64 {
        180.0 - col as f64 * self.step_deg
    }

    pub fn el_deg(&self, row: usize) -> f64 {
        90.0 - row as f64 * self.step_deg
    }

    /// Pixel directions in row-major order.
    pub fn directions(&self) -> Vec<Direction> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                out.push(Direction::from_degrees(self.az_deg(c), self.el_deg(r)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Colormap {
    Viridis,
    /// Diverging red (low) to blue (high).
    RedBlue,
}

impl Colormap {
    fn gradient(self) -> colorous::Gradient {
        match self {
            Colormap::Viridis => colorous::VIRIDIS,
            Colormap::RedBlue => colorous::RED_BLUE,
        }
    }
}

/// Colour used for directions where the metric is undefined.
pub const MISSING_RGB: [u8; 3] = [128, 128, 128];

/// A metric sampled on a [`MapGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub name: String,
    pub title: String,
    pub units: String,
    pub grid: MapGrid,
    /// Row-major, `None` where undefined.
    pub values: Vec<Option<f64>>,
    pub vmin: f64,
    pub vmax: f64,
    pub colormap: Colormap,
    /// Values above this were clipped before colouring.
    pub clip: Option<f64>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    name: &'a str,
    title: &'a str,
    units: &'a str,
    image: String,
    projection: &'static str,
    az_deg_left: f64,
    az_deg_right: f64,
    el_deg_top: f64,
    el_deg_bottom: f64,
    step_deg: f64,
    width: usize,
    height: usize,
    pixel_scale: u32,
    vmin: f64,
    vmax: f64,
    colormap: Colormap,
    clip: Option<f64>,
    missing_rgb: [u8; 3],
    missing: usize,
    data_min: Option<f64>,
    data_max: Option<f64>,
    seed: u64,
    decoder: &'a str,
}

impl Heatmap {
    fn colour(&self, v: Option<f64>) -> Rgb<u8> {
        let Some(v) = v.filter(|v| v.is_finite()) else {
            return Rgb(MISSING_RGB);
        };
        let v = self.clip.map_or(v, |c| v.min(c));
        let t = if self.vmax > self.vmin {
            ((v - self.vmin) / (self.vmax - self.vmin)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        let c = self.colormap.gradient().eval_continuous(t);
        Rgb([c.r, c.g, c.b])
    }

    /// Renders the map with each sample drawn as a `scale` x `scale` block.
    pub fn render(&self, scale: u32) -> RgbImage {
        let s = scale.max(1);
        let (w, h) = (self.grid.width as u32, self.grid.height as u32);
        RgbImage::from_fn(w * s, h * s, |x, y| {
            let idx = (y / s) as usize * self.grid.width + (x / s) as usize;
            self.colour(self.values[idx])
        })
    }

    /// Writes `<dir>/<name>.png` and `<dir>/<name>.json`.
    pub fn write(&self, dir: &Path, scale: u32, seed: u64, decoder: &str) -> CliResult<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        let png = dir.join(format!("{}.png", self.name));
        let json = dir.join(format!("{}.json", self.name));
        self.render(scale)
            .save_with_format(&png, image::ImageFormat::Png)
            .map_err(|e| CliError::Config(format!("writing {}: {e}", png.display())))?;
        let defined: Vec<f64> = self.values.iter().flatten().copied().collect();
        let sidecar = Sidecar {
            name: &self.name,
            title: &self.title,
            units: &self.units,
            image: format!("{}.png", self.name),
            projection: "equirectangular",
            az_deg_left: self.grid.az_deg(0),
            az_deg_right: self.grid.az_deg(self.grid.width - 1),
            el_deg_top: self.grid.el_deg(0),
            el_deg_bottom: self.grid.el_deg(self.grid.height - 1),
            step_deg: self.grid.step_deg,
            width: self.grid.width,
            height: self.grid.height,
            pixel_scale: scale.max(1),
            vmin: self.vmin,
            vmax: self.vmax,
            colormap: self.colormap,
            clip: self.clip,
            missing_rgb: MISSING_RGB,
            missing: self.values.len() - defined.len(),
            data_min: defined.iter().copied().reduce(f64::min),
            data_max: defined.iter().copied().reduce(f64::max),
            seed,
            decoder,
        };
        let mut text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        text.push('\n');
        fs::write(&json, text).map_err(|e| CliError::io(format!("writing {}", json.display()), e))?;
        Ok((png, json))
    }
}

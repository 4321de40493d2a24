use std::fs::File;
use std::io::BufWriter;

use ambidec_core::baseline::DecoderMatrix;
use ambidec_core::metrics::{energy_vector, speaker_gains, velocity_vector};
use ambidec_core::sh::{angle_between, Direction};
use serde::Serialize;

use super::{sidecar_path, write_text};
use crate::cli::{PanBand, PanGridArgs};
use crate::decoder_file::DecoderFile;
use crate::error::{CliError, CliResult};

/// One sample along a sweep line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanPoint {
    pub line: String,
    /// Position along the line in degrees.
    pub sweep_deg: f64,
    pub intended_az_deg: f64,
    pub intended_el_deg: f64,
    pub rendered_az_deg: Option<f64>,
    pub rendered_el_deg: Option<f64>,
    pub rendered_x: Option<f64>,
    pub rendered_y: Option<f64>,
    pub rendered_z: Option<f64>,
    pub magnitude: Option<f64>,
    pub error_deg: Option<f64>,
}

fn sweep(range: f64, step: f64) -> Vec<f64> {
    let n = (range / step).round() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

/// Directions along a full meridian: up from the nadir at `az`, over the
/// zenith and down the far side at `az + 180`.
pub fn meridian(az_deg: f64, step: f64) -> Vec<(f64, Direction)> {
    sweep(360.0, step)
        .into_iter()
        .map(|s| {
            let t = s - 90.0;
            let d = if t <= 90.0 {
                Direction::from_degrees(az_deg, t)
            } else {
                Direction::from_degrees(az_deg + 180.0, 180.0 - t)
            };
            (s, d)
        })
        .collect()
}

/// Directions around a circle of constant elevation, azimuth decreasing
/// from +180.
pub fn parallel(el_deg: f64, step: f64) -> Vec<(f64, Direction)> {
    sweep(360.0, step)
        .into_iter()
        .map(|s| (s, Direction::from_degrees(180.0 - s, el_deg)))
        .collect()
}

/// Rendered direction of each source along the lines.
pub fn pan_points(dec: &DecoderMatrix, band: PanBand, az_lines: &[f64], el_lines: &[f64], step: f64) -> Vec<PanPoint> {
    let dirs = dec.array().unit_vectors();
    let mut lines: Vec<(String, Vec<(f64, Direction)>)> = Vec::new();
    for &az in az_lines {
        lines.push((format!("az={az}"), meridian(az, step)));
    }
    for &el in el_lines {
        lines.push((format!("el={el}"), parallel(el, step)));
    }
    let mut out = Vec::new();
    for (name, points) in lines {
        for (s, d) in points {
            let g = speaker_gains(dec, &d);
            let v = match band {
                PanBand::Hf => energy_vector(&g, &dirs),
                PanBand::Lf => velocity_vector(&g, &dirs),
            };
            let rendered = v.and_then(|v| Direction::from_vector(v.vector).map(|r| (v, r)));
            out.push(PanPoint {
                line: name.clone(),
                sweep_deg: s,
                intended_az_deg: d.azimuth().to_degrees(),
                intended_el_deg: d.elevation().to_degrees(),
                rendered_az_deg: rendered.map(|(_, r)| r.azimuth().to_degrees()),
                rendered_el_deg: rendered.map(|(_, r)| r.elevation().to_degrees()),
                rendered_x: rendered.map(|(_, r)| r.unit()[0]),
                rendered_y: rendered.map(|(_, r)| r.unit()[1]),
                rendered_z: rendered.map(|(_, r)| r.unit()[2]),
                magnitude: rendered.map(|(v, _)| v.magnitude),
                error_deg: rendered.map(|(_, r)| angle_between(r.unit(), d.unit()).to_degrees()),
            });
        }
    }
    out
}

#[derive(Serialize)]
struct Meta {
    decoder: String,
    band: &'static str,
    step_deg: f64,
    az_lines: Vec<f64>,
    el_lines: Vec<f64>,
    points: usize,
    undefined: usize,
    seed: u64,
    tool_version: &'static str,
}

pub fn run(args: &PanGridArgs) -> CliResult<Vec<PanPoint>> {
    if !(args.step > 0.0 && args.step <= 90.0) {
        return Err(CliError::Config(format!("step {} must lie in (0, 90]", args.step)));
    }
    let dec = DecoderFile::read(&args.decoder)?.decoder()?;
    let m = match args.band {
        PanBand::Hf => &dec.hf,
        PanBand::Lf => &dec.lf,
    };
    let points = pan_points(m, args.band, &args.az_lines, &args.el_lines, args.step);

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    }
    let file = File::create(&args.out).map_err(|e| CliError::io(format!("writing {}", args.out.display()), e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for p in &points {
        w.serialize(p).map_err(|e| CliError::Config(format!("writing {}: {e}", args.out.display())))?;
    }
    w.flush().map_err(|e| CliError::io(format!("writing {}", args.out.display()), e))?;

    let meta = Meta {
        decoder: args.decoder.display().to_string(),
        band: match args.band {
            PanBand::Hf => "hf",
            PanBand::Lf => "lf",
        },
        step_deg: args.step,
        az_lines: args.az_lines.clone(),
        el_lines: args.el_lines.clone(),
        points: points.len(),
        undefined: points.iter().filter(|p| p.rendered_x.is_none()).count(),
        seed: args.seed,
        tool_version: crate::decoder_file::TOOL_VERSION,
    };
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    write_text(&sidecar_path(&args.out), &text)?;
    Ok(points)
}

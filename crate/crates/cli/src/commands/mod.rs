//! One module per subcommand, plus helpers they share.

pub mod compare;
pub mod design;
pub mod evaluate;
pub mod pan_grid;

use std::fs;
use std::path::{Path, PathBuf};

use ambidec_core::array::{coverage_weights, parse_array_config, CoverageParams, CoverageWeighting, SpeakerArray};
use ambidec_core::baseline::DecoderMatrix;
use ambidec_core::grid::SphericalGrid;
use ambidec_core::metrics::{evaluate_two_band, GridEvaluation};
use ambidec_core::optimize::TwoBandDecoder;

use crate::cli::{config_err, BandArg, MapArgs};
use crate::error::{CliError, CliResult};
use crate::plot::{Colormap, Heatmap, MapGrid};

/// Display clip for direction-error maps, in degrees.
pub const DIRECTION_CLIP_DEG: f64 = 20.0;

pub fn load_array(path: &Path) -> CliResult<SpeakerArray> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_array_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn resolve_grid(spec: &str) -> CliResult<SphericalGrid> {
    SphericalGrid::resolve(spec).map_err(|e| CliError::Config(format!("grid '{spec}': {e}")))
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// `metrics.csv` becomes `metrics.meta.json`.
pub(crate) fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// True when both arrays have the same real speakers in the same order.
pub fn same_layout(a: &SpeakerArray, b: &SpeakerArray) -> bool {
    let (da, db) = (a.unit_vectors(), b.unit_vectors());
    da.len() == db.len()
        && da
            .iter()
            .zip(&db)
            .all(|(x, y)| x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-9))
}

/// The LF and HF matrices selected by `band`.
pub fn band_pair(dec: &TwoBandDecoder, band: BandArg) -> (&DecoderMatrix, &DecoderMatrix) {
    match band {
        BandArg::TwoBand => (&dec.lf, &dec.hf),
        BandArg::Lf => (&dec.lf, &dec.lf),
        BandArg::Hf => (&dec.hf, &dec.hf),
    }
}

pub fn coverage_for(array: &SpeakerArray, grid: &SphericalGrid, params: CoverageParams) -> CoverageWeighting {
    coverage_weights(array, grid, params)
}

/// The four standard maps of a decoder: rounded effective order minus
/// the design order, clipped rE direction error, |rV| and the rV-rE angle.
pub fn heatmaps(lf: &DecoderMatrix, hf: &DecoderMatrix, map: MapArgs) -> CliResult<Vec<Heatmap>> {
    let grid = MapGrid::new(map.map_step)?;
    let sphere = SphericalGrid::equal_weights("map", grid.directions(), 0).map_err(config_err)?;
    let eval = evaluate_two_band(lf, hf, &sphere, &CoverageWeighting::uniform(sphere.len()))?;
    let design_order = hf.signal_set().max_degree();
    let order = f64::from(design_order);
    let pick = |f: &dyn Fn(&ambidec_core::metrics::RenderMetrics) -> Option<f64>| -> Vec<Option<f64>> {
        eval.metrics.iter().map(f).collect()
    };
    let make = |name: &str, title: &str, units: &str, values, vmin, vmax, colormap, clip| Heatmap {
        name: name.into(),
        title: title.into(),
        units: units.into(),
        grid,
        values,
        vmin,
        vmax,
        colormap,
        clip,
    };
    Ok(vec![
        make(
            "relative_order",
            "Effective order relative to design order",
            "order",
            pick(&|m| m.effective_order.map(|e| e.relative_to(design_order) as f64)),
            -order.max(1.0),
            order.max(1.0),
            Colormap::RedBlue,
            None,
        ),
        make(
            "dir_err_E",
            "rE direction error",
            "deg",
            pick(&|m| m.dir_err_e_deg),
            0.0,
            DIRECTION_CLIP_DEG,
            Colormap::Viridis,
            Some(DIRECTION_CLIP_DEG),
        ),
        make(
            "rV_mag",
            "|rV|",
            "",
            pick(&|m| m.rv.map(|v| v.magnitude)),
            0.5,
            1.5,
            Colormap::RedBlue,
            None,
        ),
        make(
            "rv_re_angle",
            "Angle between rV and rE",
            "deg",
            pick(&|m| m.rv_re_angle_deg),
            0.0,
            DIRECTION_CLIP_DEG,
            Colormap::Viridis,
            Some(DIRECTION_CLIP_DEG),
        ),
    ])
}

pub(crate) fn write_heatmaps(
    lf: &DecoderMatrix,
    hf: &DecoderMatrix,
    map: MapArgs,
    dir: &Path,
    seed: u64,
    decoder_label: &str,
) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for h in heatmaps(lf, hf, map)? {
        let (png, json) = h.write(dir, map.pixel_scale, seed, decoder_label)?;
        out.push(png);
        out.push(json);
    }
    Ok(out)
}

/// Evaluates a decoder pair on `grid` with the array's coverage weighting.
pub fn evaluate_pair(
    lf: &DecoderMatrix,
    hf: &DecoderMatrix,
    grid: &SphericalGrid,
    params: CoverageParams,
) -> CliResult<GridEvaluation> {
    let cov = coverage_for(lf.array(), grid, params);
    Ok(evaluate_two_band(lf, hf, grid, &cov)?)
}

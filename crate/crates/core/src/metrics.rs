//! Gerzon-vector evaluation of decoders over direction grids.

use std::io::Write;
use std::sync::OnceLock;

use nalgebra::DVector;
use serde::Serialize;

use crate::array::CoverageWeighting;
use crate::baseline::{max_re_magnitude, DecoderMatrix};
use crate::error::{invalid, Result};
use crate::grid::SphericalGrid;
use crate::sh::{angle_between, dot3, sh_matrix, sh_vector, Direction, SignalSetSpec};

/// Below this |sum g| the velocity vector is undefined.
pub const PRESSURE_EPS: f64 = 1e-12;
/// Below this sum g^2 the energy vector is undefined.
pub const ENERGY_EPS: f64 = 1e-18;
/// Highest order covered by [`effective_order`].
pub const MAX_EFFECTIVE_ORDER: u32 = 30;
/// Coverage weight at or above which a direction counts as covered.
pub const COVERED_WEIGHT: f64 = 1.0 - 1e-12;

/// g = M y(u) for a plane wave from `dir`.
pub fn speaker_gains(dec: &DecoderMatrix, dir: &Direction) -> Vec<f64> {
    let y = DVector::from_vec(sh_vector(dec.signal_set(), dir));
    (dec.matrix() * y).iter().copied().collect()
}

/// g = M y for an explicit channel vector.
pub fn speaker_gains_for_signal(dec: &DecoderMatrix, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != dec.channels() {
        return Err(invalid(format!(
            "signal has {} channels but the decoder expects {}",
            y.len(),
            dec.channels()
        )));
    }
    let y = DVector::from_column_slice(y);
    Ok((dec.matrix() * y).iter().copied().collect())
}

/// A decoder for `signal` built from `dec` by leaving the channels that
/// `signal` lacks unconnected.
pub fn zero_filled(dec: &DecoderMatrix, signal: &SignalSetSpec) -> Result<DecoderMatrix> {
    if !dec.signal_set().contains_set(signal) {
        return Err(invalid(format!("{} decoder cannot accept a {} signal", dec.signal_set(), signal)));
    }
    if dec.signal_set().normalization() != signal.normalization() {
        return Err(invalid("signal and decoder normalizations differ"));
    }
    let cols: Vec<usize> = signal
        .channels()
        .iter()
        .map(|c| dec.signal_set().position(c.acn).expect("contained channel"))
        .collect();
    let m = dec.matrix().select_columns(&cols);
    DecoderMatrix::new(m, signal.clone(), dec.array().clone(), dec.band())
}

/// A localization vector and its length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalizationVector {
    pub vector: [f64; 3],
    pub magnitude: f64,
}

impl LocalizationVector {
    fn from_vector(v: [f64; 3]) -> Self {
        Self {
            vector: v,
            magnitude: dot3(v, v).sqrt(),
        }
    }

    /// Angle to `u` in degrees; `None` for a zero vector.
    pub fn angle_to_deg(&self, u: [f64; 3]) -> Option<f64> {
        (self.magnitude > 0.0).then(|| angle_between(self.vector, u).to_degrees())
    }
}

/// Velocity vector sum g u / sum g; `None` when the pressure vanishes.
pub fn velocity_vector(g: &[f64], speaker_dirs: &[[f64; 3]]) -> Option<LocalizationVector> {
    let p: f64 = g.iter().sum();
    if p.abs() < PRESSURE_EPS {
        return None;
    }
    let mut v = [0.0; 3];
    for (gi, u) in g.iter().zip(speaker_dirs) {
        for k in 0..3 {
            v[k] += gi * u[k];
        }
    }
    Some(LocalizationVector::from_vector([v[0] / p, v[1] / p, v[2] / p]))
}

/// Energy vector sum g^2 u / sum g^2; `None` when the energy vanishes.
pub fn energy_vector(g: &[f64], speaker_dirs: &[[f64; 3]]) -> Option<LocalizationVector> {
    let e: f64 = g.iter().map(|x| x * x).sum();
    if e < ENERGY_EPS {
        return None;
    }
    let mut v = [0.0; 3];
    for (gi, u) in g.iter().zip(speaker_dirs) {
        let w = gi * gi;
        for k in 0..3 {
            v[k] += w * u[k];
        }
    }
    Some(LocalizationVector::from_vector([v[0] / e, v[1] / e, v[2] / e]))
}

/// Order whose max-rE magnitude matches an observed |rE|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveOrder {
    pub order: f64,
    /// Set when |rE| was beyond the table and the order was clamped.
    pub clamped: bool,
}

impl EffectiveOrder {
    /// Rounded order minus the design order; 0 means the decoder performs
    /// at its design order.
    pub fn relative_to(&self, design_order: u32) -> i64 {
        self.order.round() as i64 - design_order as i64
    }
}

fn order_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=MAX_EFFECTIVE_ORDER).map(max_re_magnitude).collect())
}

/// Inverse of [`max_re_magnitude`], linear between integer orders.
pub fn effective_order(re_mag: f64) -> EffectiveOrder {
    let t = order_table();
    let top = *t.last().unwrap();
    if re_mag >= top || !re_mag.is_finite() {
        return EffectiveOrder {
            order: MAX_EFFECTIVE_ORDER as f64,
            clamped: re_mag >= 1.0 || !re_mag.is_finite(),
        };
    }
    if re_mag <= 0.0 {
        return EffectiveOrder {
            order: 0.0,
            clamped: false,
        };
    }
    let k = t.partition_point(|&r| r <= re_mag) - 1;
    let frac = (re_mag - t[k]) / (t[k + 1] - t[k]);
    EffectiveOrder {
        order: k as f64 + frac,
        clamped: false,
    }
}

/// Metrics for one source direction. Undefined vectors and the values
/// derived from them are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenderMetrics {
    pub pressure: f64,
    pub energy: f64,
    pub rv: Option<LocalizationVector>,
    pub re: Option<LocalizationVector>,
    pub dir_err_e_deg: Option<f64>,
    pub dir_err_v_deg: Option<f64>,
    pub rv_re_angle_deg: Option<f64>,
    pub effective_order: Option<EffectiveOrder>,
}

impl RenderMetrics {
    /// Metrics with pressure and rV from `g_lf`, energy and rE from `g_hf`.
    pub fn from_gains(g_lf: &[f64], g_hf: &[f64], speaker_dirs: &[[f64; 3]], source: [f64; 3]) -> Self {
        let rv = velocity_vector(g_lf, speaker_dirs);
        let re = energy_vector(g_hf, speaker_dirs);
        let rv_re_angle_deg = match (rv, re) {
            (Some(v), Some(e)) if v.magnitude > 0.0 && e.magnitude > 0.0 => {
                Some(angle_between(v.vector, e.vector).to_degrees())
            }
            _ => None,
        };
        Self {
            pressure: g_lf.iter().sum(),
            energy: g_hf.iter().map(|x| x * x).sum(),
            rv,
            re,
            dir_err_e_deg: re.and_then(|e| e.angle_to_deg(source)),
            dir_err_v_deg: rv.and_then(|v| v.angle_to_deg(source)),
            rv_re_angle_deg,
            effective_order: re.map(|e| effective_order(e.magnitude)),
        }
    }

    pub fn value(&self, field: Field) -> Option<f64> {
        match field {
            Field::Pressure => Some(self.pressure),
            Field::Energy => Some(self.energy),
            Field::RvMag => self.rv.map(|v| v.magnitude),
            Field::ReMag => self.re.map(|v| v.magnitude),
            Field::DirErrE => self.dir_err_e_deg,
            Field::DirErrV => self.dir_err_v_deg,
            Field::RvReAngle => self.rv_re_angle_deg,
            Field::EffectiveOrder => self.effective_order.map(|o| o.order),
        }
    }
}

/// Scalar fields reported per direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Field {
    Pressure,
    Energy,
    RvMag,
    ReMag,
    DirErrE,
    DirErrV,
    RvReAngle,
    EffectiveOrder,
}

impl Field {
    pub const ALL: [Field; 8] = [
        Field::Pressure,
        Field::Energy,
        Field::RvMag,
        Field::ReMag,
        Field::DirErrE,
        Field::DirErrV,
        Field::RvReAngle,
        Field::EffectiveOrder,
    ];

    /// Column name in the metrics CSV.
    pub fn column(self) -> &'static str {
        match self {
            Field::Pressure => "P",
            Field::Energy => "E",
            Field::RvMag => "rV_mag",
            Field::ReMag => "rE_mag",
            Field::DirErrE => "dir_err_E_deg",
            Field::DirErrV => "dir_err_V_deg",
            Field::RvReAngle => "rv_re_angle_deg",
            Field::EffectiveOrder => "eff_order",
        }
    }

    /// Whether smaller values are better when comparing decoders.
    pub fn lower_is_better(self) -> Option<bool> {
        match self {
            Field::DirErrE | Field::DirErrV | Field::RvReAngle => Some(true),
            Field::ReMag | Field::EffectiveOrder => Some(false),
            Field::Pressure | Field::Energy | Field::RvMag => None,
        }
    }
}

/// Weighted statistics of one field. Weights are quadrature times coverage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub rms: f64,
    /// Weighted spread around the mean.
    pub std_dev: f64,
    /// Directions where the field was undefined.
    pub missing: usize,
}

/// Per-direction metrics over a grid, with summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEvaluation {
    pub directions: Vec<Direction>,
    pub quadrature: Vec<f64>,
    pub coverage: Vec<f64>,
    pub metrics: Vec<RenderMetrics>,
    pub summary: Vec<(Field, FieldStats)>,
}

impl GridEvaluation {
    pub fn stats(&self, field: Field) -> &FieldStats {
        &self.summary.iter().find(|(f, _)| *f == field).expect("every field summarized").1
    }

    /// Values of `field` at fully covered directions.
    pub fn covered_values(&self, field: Field) -> Vec<f64> {
        self.metrics
            .iter()
            .zip(&self.coverage)
            .filter(|(_, w)| **w >= COVERED_WEIGHT)
            .filter_map(|(m, _)| m.value(field))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    /// Writes the metrics table. Undefined values are left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["az_deg", "el_deg", "weight"];
        header.extend(Field::ALL.iter().map(|f| f.column()));
        w.write_record(&header).map_err(csv_err)?;
        for ((d, m), cw) in self.directions.iter().zip(&self.metrics).zip(&self.coverage) {
            let mut rec = vec![
                d.azimuth().to_degrees().to_string(),
                d.elevation().to_degrees().to_string(),
                cw.to_string(),
            ];
            rec.extend(Field::ALL.iter().map(|f| m.value(*f).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => invalid(format!("CSV output failed: {other:?}")),
    }
}

fn summarize(metrics: &[RenderMetrics], weights: &[f64]) -> Vec<(Field, FieldStats)> {
    Field::ALL
        .iter()
        .map(|&field| {
            let (mut sw, mut sx, mut sxx) = (0.0, 0.0, 0.0);
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            let mut missing = 0;
            for (m, &w) in metrics.iter().zip(weights) {
                match m.value(field) {
                    Some(x) => {
                        sw += w;
                        sx += w * x;
                        sxx += w * x * x;
                        min = min.min(x);
                        max = max.max(x);
                    }
                    None => missing += 1,
                }
            }
            let stats = if sw > 0.0 {
                let mean = sx / sw;
                FieldStats {
                    mean,
                    min,
                    max,
                    rms: (sxx / sw).sqrt(),
                    std_dev: (sxx / sw - mean * mean).max(0.0).sqrt(),
                    missing,
                }
            } else {
                FieldStats {
                    mean: f64::NAN,
                    min: f64::NAN,
                    max: f64::NAN,
                    rms: f64::NAN,
                    std_dev: f64::NAN,
                    missing,
                }
            };
            (field, stats)
        })
        .collect()
}

/// Evaluates a single-band decoder.
pub fn evaluate_grid(dec: &DecoderMatrix, grid: &SphericalGrid, coverage: &CoverageWeighting) -> Result<GridEvaluation> {
    evaluate_two_band(dec, dec, grid, coverage)
}

/// Evaluates a two-band pair: pressure and rV from `lf`, energy and rE from
/// `hf`.
pub fn evaluate_two_band(
    lf: &DecoderMatrix,
    hf: &DecoderMatrix,
    grid: &SphericalGrid,
    coverage: &CoverageWeighting,
) -> Result<GridEvaluation> {
    if lf.array() != hf.array() {
        return Err(invalid("LF and HF decoders are for different arrays"));
    }
    if lf.signal_set() != hf.signal_set() {
        return Err(invalid("LF and HF decoders take different signal sets"));
    }
    if coverage.weights.len() != grid.len() {
        return Err(invalid("coverage weights do not match the grid"));
    }
    let dirs = lf.array().unit_vectors();
    let y = sh_matrix(lf.signal_set(), grid.directions());
    let g_lf = lf.matrix() * &y;
    let g_hf = if std::ptr::eq(lf, hf) { g_lf.clone() } else { hf.matrix() * &y };
    let metrics: Vec<RenderMetrics> = grid
        .directions()
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let a: Vec<f64> = g_lf.column(j).iter().copied().collect();
            let b: Vec<f64> = g_hf.column(j).iter().copied().collect();
            RenderMetrics::from_gains(&a, &b, &dirs, d.unit())
        })
        .collect();
    let weights: Vec<f64> = grid.weights().iter().zip(&coverage.weights).map(|(q, c)| q * c).collect();
    let summary = summarize(&metrics, &weights);
    Ok(GridEvaluation {
        directions: grid.directions().to_vec(),
        quadrature: grid.weights().to_vec(),
        coverage: coverage.weights.clone(),
        metrics,
        summary,
    })
}

/// Clips a direction error for display.
pub fn clip_for_display(value_deg: f64, clip_deg: f64) -> f64 {
    value_deg.min(clip_deg)
}

/// Median of finite values; `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::fixtures;
    use crate::baseline::{encoding_matrix, max_re_pinv_decoder, pinv_decoder, Band, DEFAULT_TRUNCATION};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn ux(az_deg: f64) -> [f64; 3] {
        Direction::from_degrees(az_deg, 0.0).unit()
    }

    #[test]
    fn velocity_examples() {
        let v = velocity_vector(&[1.0], &[ux(30.0)]).unwrap();
        assert_relative_eq!(v.magnitude, 1.0, epsilon = 1e-15);
        let v = velocity_vector(&[0.5, 0.5], &[ux(45.0), ux(-45.0)]).unwrap();
        assert_relative_eq!(v.magnitude, 0.5f64.sqrt(), epsilon = 1e-12);
        assert!(v.vector[1].abs() < 1e-15 && v.vector[0] > 0.0);
        let v = velocity_vector(&[1.0, 1.0], &[ux(90.0), ux(-90.0)]).unwrap();
        assert!(v.magnitude < 1e-15);
        assert!(velocity_vector(&[1.0, -1.0], &[ux(0.0), ux(10.0)]).is_none());
    }

    #[test]
    fn energy_examples() {
        let e = energy_vector(&[0.0, 2.0], &[ux(0.0), ux(70.0)]).unwrap();
        assert_relative_eq!(e.magnitude, 1.0, epsilon = 1e-15);
        let e = energy_vector(&[0.5, 0.5], &[ux(45.0), ux(-45.0)]).unwrap();
        assert_relative_eq!(e.magnitude, 0.5f64.sqrt(), epsilon = 1e-12);
        // opposite signs at +-90: rE vanishes, rV is undefined-free but huge
        let g = [1.0, -0.5];
        let dirs = [ux(90.0), ux(-90.0)];
        let e = energy_vector(&g, &dirs).unwrap();
        let v = velocity_vector(&g, &dirs).unwrap();
        assert!(e.magnitude < 0.7 && v.magnitude > 1.0);
        assert!(energy_vector(&[0.0, 0.0], &dirs).is_none());
    }

    #[test]
    fn scale_invariance() {
        let g = [0.3, -0.1, 0.7, 0.2];
        let dirs = [ux(0.0), ux(80.0), ux(170.0), Direction::from_degrees(20.0, 60.0).unit()];
        let v0 = velocity_vector(&g, &dirs).unwrap();
        let e0 = energy_vector(&g, &dirs).unwrap();
        for c in [2.0, -1.0, 1e-3] {
            let gs: Vec<f64> = g.iter().map(|x| c * x).collect();
            let v = velocity_vector(&gs, &dirs).unwrap();
            let e = energy_vector(&gs, &dirs).unwrap();
            for k in 0..3 {
                assert_relative_eq!(v.vector[k], v0.vector[k], epsilon = 1e-12);
                assert_relative_eq!(e.vector[k], e0.vector[k], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn effective_order_inverse() {
        assert!((effective_order(0.57735).order - 1.0).abs() < 1e-3);
        assert!((effective_order(0.86114).order - 3.0).abs() < 1e-3);
        assert_eq!(effective_order(0.0).order, 0.0);
        let top = effective_order(1.0);
        assert!(top.clamped && top.order == 30.0);
        for n in 0..=30 {
            let o = effective_order(max_re_magnitude(n));
            assert!((o.order - n as f64).abs() < 1e-9);
        }
        assert_eq!(effective_order(max_re_magnitude(3)).relative_to(3), 0);
    }

    #[test]
    fn mono_speaker_gain() {
        let arr = fixtures::ring(2);
        let set = SignalSetSpec::full(1);
        let m = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let dec = DecoderMatrix::new(m, set, arr, Band::Single).unwrap();
        for d in [Direction::from_degrees(10.0, 20.0), Direction::from_degrees(-170.0, -80.0)] {
            assert_relative_eq!(speaker_gains(&dec, &d)[0], 1.0, epsilon = 1e-15);
        }
        assert!(speaker_gains_for_signal(&dec, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn octahedron_pinv_peaks_at_speaker() {
        let arr = fixtures::from_grid("oct", &SphericalGrid::octahedron());
        let dec = pinv_decoder(&encoding_matrix(&SignalSetSpec::full(1), &arr), DEFAULT_TRUNCATION).unwrap();
        for (s, d) in arr.directions().iter().enumerate() {
            let g = speaker_gains(&dec, d);
            let best = (0..g.len()).max_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap();
            assert_eq!(best, s);
        }
    }

    #[test]
    fn zero_fill_matches_masked_signal() {
        let arr = fixtures::home_dome();
        let full = max_re_pinv_decoder(&SignalSetSpec::full(3), &arr).unwrap();
        let mixed = SignalSetSpec::new(3, 1).unwrap();
        let restricted = zero_filled(&full, &mixed).unwrap();
        let d = Direction::from_degrees(33.0, 12.0);
        let y_full = sh_vector(&SignalSetSpec::full(3), &d);
        let masked: Vec<f64> = SignalSetSpec::full(3)
            .channels()
            .iter()
            .zip(&y_full)
            .map(|(c, y)| if mixed.position(c.acn).is_some() { *y } else { 0.0 })
            .collect();
        let a = speaker_gains_for_signal(&full, &masked).unwrap();
        let b = speaker_gains(&restricted, &d);
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
        assert!(zero_filled(&restricted, &SignalSetSpec::full(3)).is_err());
    }

    #[test]
    fn octahedron_max_re_grid() {
        let arr = fixtures::from_grid("oct", &SphericalGrid::octahedron());
        let dec = max_re_pinv_decoder(&SignalSetSpec::full(1), &arr).unwrap();
        let grid = SphericalGrid::icosahedron();
        let ev = evaluate_grid(&dec, &grid, &CoverageWeighting::uniform(grid.len())).unwrap();
        let e = ev.stats(Field::Energy);
        assert!(e.max - e.min < 1e-6);
        assert!(ev.stats(Field::DirErrE).max < 1e-6);
        assert_eq!(ev.len(), grid.len());
    }

    #[test]
    fn omni_decoder_has_zero_order() {
        let arr = fixtures::from_grid("oct", &SphericalGrid::octahedron());
        let mut m = DMatrix::zeros(6, 4);
        m.column_mut(0).fill(0.1);
        let dec = DecoderMatrix::new(m, SignalSetSpec::full(1), arr, Band::Single).unwrap();
        let grid = SphericalGrid::design_240();
        let ev = evaluate_grid(&dec, &grid, &CoverageWeighting::uniform(grid.len())).unwrap();
        for m in &ev.metrics {
            assert!(m.re.unwrap().magnitude < 1e-15);
            assert!(m.effective_order.unwrap().order < 1e-12);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let arr = fixtures::from_grid("oct", &SphericalGrid::octahedron());
        let dec = max_re_pinv_decoder(&SignalSetSpec::full(1), &arr).unwrap();
        let grid = SphericalGrid::cube();
        let ev = evaluate_grid(&dec, &grid, &CoverageWeighting::uniform(grid.len())).unwrap();
        let mut buf = Vec::new();
        ev.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "az_deg,el_deg,weight,P,E,rV_mag,rE_mag,dir_err_E_deg,dir_err_V_deg,rv_re_angle_deg,eff_order"
        );
        assert_eq!(lines.len(), grid.len() + 1);
    }

    #[test]
    fn median_of_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}

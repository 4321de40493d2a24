//! Classical decoders: encoding matrices, pseudoinverse decoding, max-rE
//! weighting and AllRAD.

pub mod vbap;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::array::SpeakerArray;
use crate::error::{invalid, Error, Result};
use crate::grid::SphericalGrid;
use crate::sh::{dot3, norm3, sh_matrix, Direction, SignalSetSpec};

use vbap::{RingPanner, Triangulation};

/// Default relative singular-value cutoff for [`pinv_decoder`].
pub const DEFAULT_TRUNCATION: f64 = 1e-7;

/// Condition number above which the pseudoinverse is reported as
/// ill-conditioned.
pub const CONDITION_WARNING: f64 = 1e4;

/// Harmonics sampled at the real speaker directions (channels x speakers).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingMatrix {
    k: DMatrix<f64>,
    set: SignalSetSpec,
    array: SpeakerArray,
}

impl EncodingMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn signal_set(&self) -> &SignalSetSpec {
        &self.set
    }

    pub fn array(&self) -> &SpeakerArray {
        &self.array
    }
}

/// Frequency band a decoder matrix is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Lf,
    Hf,
    Single,
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::Lf => "lf",
            Band::Hf => "hf",
            Band::Single => "single",
        })
    }
}

/// A speakers x channels decoding matrix bound to its signal set and array.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderMatrix {
    m: DMatrix<f64>,
    set: SignalSetSpec,
    array: SpeakerArray,
    band: Band,
}

impl DecoderMatrix {
    pub fn new(m: DMatrix<f64>, set: SignalSetSpec, array: SpeakerArray, band: Band) -> Result<Self> {
        if m.nrows() != array.real_count() {
            return Err(invalid(format!(
                "decoder has {} rows but the array has {} real speakers",
                m.nrows(),
                array.real_count()
            )));
        }
        if m.ncols() != set.len() {
            return Err(invalid(format!(
                "decoder has {} columns but {} has {} channels",
                m.ncols(),
                set,
                set.len()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(invalid("decoder matrix has non-finite entries"));
        }
        Ok(Self { m, set, array, band })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn signal_set(&self) -> &SignalSetSpec {
        &self.set
    }

    pub fn array(&self) -> &SpeakerArray {
        &self.array
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn with_band(mut self, band: Band) -> Self {
        self.band = band;
        self
    }

    /// Replaces the matrix, keeping set, array and band.
    pub fn with_matrix(&self, m: DMatrix<f64>) -> Result<Self> {
        Self::new(m, self.set.clone(), self.array.clone(), self.band)
    }

    pub fn speakers(&self) -> usize {
        self.m.nrows()
    }

    pub fn channels(&self) -> usize {
        self.m.ncols()
    }

    /// Energy gain averaged over the sphere, sum of g^2 for g = M y(u).
    pub fn mean_energy(&self) -> f64 {
        mean_energy(&self.m, &self.set)
    }
}

/// Sphere-averaged energy gain of `m` for signals in `set`.
pub fn mean_energy(m: &DMatrix<f64>, set: &SignalSetSpec) -> f64 {
    set.channels()
        .iter()
        .enumerate()
        .map(|(c, ch)| {
            let f = set.normalization().from_n3d_factor(ch.degree);
            m.column(c).norm_squared() * f * f
        })
        .sum()
}

/// Energy of a full-sphere reference decoder with as many speakers as the
/// array: a pseudoinverse decoder on a regular layout.
pub fn reference_energy(set: &SignalSetSpec, speakers: usize) -> f64 {
    set.len() as f64 / speakers as f64
}

/// Samples the set's harmonics at each real speaker.
pub fn encoding_matrix(set: &SignalSetSpec, array: &SpeakerArray) -> EncodingMatrix {
    EncodingMatrix {
        k: sh_matrix(set, array.directions()),
        set: set.clone(),
        array: array.clone(),
    }
}

/// Diagnostics from a pseudoinverse solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PinvReport {
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Largest over smallest of the min(channels, speakers) singular values.
    pub condition_number: f64,
    pub warnings: Vec<String>,
}

/// Pseudoinverse decoder with singular values below `truncation_tol *
/// sigma_max` discarded.
pub fn pinv_decoder(k: &EncodingMatrix, truncation_tol: f64) -> Result<DecoderMatrix> {
    pinv_decoder_with_report(k, truncation_tol).map(|(d, _)| d)
}

pub fn pinv_decoder_with_report(k: &EncodingMatrix, truncation_tol: f64) -> Result<(DecoderMatrix, PinvReport)> {
    let (m, report) = pinv(k.matrix(), truncation_tol)?;
    for w in &report.warnings {
        log::warn!("{}: {w}", k.array.name());
    }
    let dec = DecoderMatrix::new(m, k.set.clone(), k.array.clone(), Band::Single)?;
    Ok((dec, report))
}

fn pinv(k: &DMatrix<f64>, tol: f64) -> Result<(DMatrix<f64>, PinvReport)> {
    if !(tol >= 0.0) {
        return Err(invalid("truncation tolerance must be non-negative"));
    }
    if k.iter().all(|x| *x == 0.0) {
        return Err(Error::Degenerate("encoding matrix is all zero".into()));
    }
    let (c, s) = k.shape();
    let svd = k.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed u");
    let vt = svd.v_t.as_ref().expect("svd computed v_t");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let cutoff = tol * smax;
    let mut m = DMatrix::zeros(s, c);
    let mut rank = 0;
    for (i, &sigma) in sv.iter().enumerate() {
        if sigma <= cutoff || sigma == 0.0 {
            continue;
        }
        rank += 1;
        m += (vt.row(i).transpose() * u.column(i).transpose()) / sigma;
    }
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let mut warnings = Vec::new();
    if s < c {
        warnings.push(format!("{s} speakers for {c} channels; exact reconstruction is impossible"));
    }
    if condition_number > CONDITION_WARNING {
        warnings.push(format!("encoding matrix is ill-conditioned (condition number {condition_number:.3e})"));
    }
    if rank < c.min(s) {
        warnings.push(format!("rank {rank} after truncation, {} singular values discarded", c.min(s) - rank));
    }
    let mut sorted = sv;
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok((
        m,
        PinvReport {
            singular_values: sorted,
            rank,
            condition_number,
            warnings,
        },
    ))
}

/// Legendre polynomial P_n(x).
pub fn legendre(n: u32, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return p0;
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Largest achievable |rE| at order `n` in three dimensions: the largest
/// zero of P_{n+1}.
pub fn max_re_magnitude(n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let deg = n + 1;
    // the largest zero lies above cos(pi / (deg + 0.5)) * 0.9; scan down from 1
    let step = 1e-4 / deg as f64;
    let mut hi = 1.0;
    let mut lo = hi - step;
    while legendre(deg, lo) > 0.0 {
        hi = lo;
        lo -= step;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if legendre(deg, mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Per-degree max-rE gains g_0..g_n.
pub fn max_re_gains(n: u32) -> Vec<f64> {
    let x = max_re_magnitude(n);
    (0..=n).map(|l| legendre(l, x)).collect()
}

/// Scales each column by the gain of its degree, then restores the
/// sphere-averaged energy gain.
pub fn apply_degree_gains(m: &DecoderMatrix, gains: &[f64]) -> Result<DecoderMatrix> {
    let need = m.set.max_degree() as usize + 1;
    if gains.len() < need {
        return Err(invalid(format!(
            "{} gains given but {} needs degrees 0..={}",
            gains.len(),
            m.set,
            need - 1
        )));
    }
    if gains.iter().any(|g| !g.is_finite()) {
        return Err(invalid("degree gains must be finite"));
    }
    let before = m.mean_energy();
    let mut out = m.m.clone();
    for (c, ch) in m.set.channels().iter().enumerate() {
        out.column_mut(c).scale_mut(gains[ch.degree as usize]);
    }
    let after = mean_energy(&out, &m.set);
    if after > 0.0 && before > 0.0 {
        out *= (before / after).sqrt();
    }
    m.with_matrix(out)
}

/// Pseudoinverse decoder with max-rE weighting for the set's top degree.
pub fn max_re_pinv_decoder(set: &SignalSetSpec, array: &SpeakerArray) -> Result<DecoderMatrix> {
    let dec = pinv_decoder(&encoding_matrix(set, array), DEFAULT_TRUNCATION)?;
    apply_degree_gains(&dec, &max_re_gains(set.max_degree()))
}

/// Which imaginary speakers AllRAD adds before triangulating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImaginaryPolicy {
    None,
    #[default]
    Nadir,
    #[serde(rename = "nadir+zenith")]
    NadirZenith,
}

impl std::str::FromStr for ImaginaryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "nadir" => Ok(Self::Nadir),
            "nadir+zenith" | "nadir-zenith" | "both" => Ok(Self::NadirZenith),
            other => Err(invalid(format!("unknown imaginary speaker policy '{other}'"))),
        }
    }
}

/// A pole gets an imaginary speaker when no real one is within this angle.
pub const POLE_COVERAGE_DEG: f64 = 45.0;

/// AllRAD decoder and the intermediate panning data.
#[derive(Debug, Clone)]
pub struct AllradDesign {
    pub decoder: DecoderMatrix,
    /// Panning gains (real then imaginary speakers) x virtual speakers.
    pub panning: DMatrix<f64>,
    pub imaginary: Vec<Direction>,
    /// True when the array could not be triangulated and pairwise panning
    /// in a plane was used instead.
    pub planar_fallback: bool,
}

/// AllRAD: decode to a virtual t-design, then pan each virtual speaker onto
/// the real array.
pub fn allrad_decoder(
    set: &SignalSetSpec,
    array: &SpeakerArray,
    virtual_grid: &SphericalGrid,
    policy: ImaginaryPolicy,
) -> Result<DecoderMatrix> {
    allrad_design(set, array, virtual_grid, policy).map(|d| d.decoder)
}

pub fn allrad_design(
    set: &SignalSetSpec,
    array: &SpeakerArray,
    virtual_grid: &SphericalGrid,
    policy: ImaginaryPolicy,
) -> Result<AllradDesign> {
    let need = 2 * set.max_degree() + 1;
    if virtual_grid.t_degree() < need {
        return Err(invalid(format!(
            "virtual grid '{}' has degree {} but {} needs at least {need}",
            virtual_grid.name(),
            virtual_grid.t_degree(),
            set
        )));
    }
    let virtual_array = crate::array::fixtures::from_grid("virtual", virtual_grid);
    let d_virtual = max_re_pinv_decoder(set, &virtual_array)?;

    let mut points = array.unit_vectors();
    let mut imaginary = array.imaginary_directions();
    let poles: &[f64] = match policy {
        ImaginaryPolicy::None => &[],
        ImaginaryPolicy::Nadir => &[-90.0],
        ImaginaryPolicy::NadirZenith => &[-90.0, 90.0],
    };
    for &el in poles {
        let pole = Direction::from_degrees(0.0, el);
        if array.nearest_speaker_angle(&pole).to_degrees() > POLE_COVERAGE_DEG {
            imaginary.push(pole);
        }
    }
    points.extend(imaginary.iter().map(Direction::unit));

    let n_virtual = virtual_grid.len();
    let mut panning = DMatrix::zeros(points.len(), n_virtual);
    let planar_fallback;
    match Triangulation::new(points.clone()) {
        Some(tri) => {
            planar_fallback = false;
            if !tri.encloses_origin() {
                log::warn!(
                    "{}: speaker hull does not surround the listener; some directions are clamped",
                    array.name()
                );
            }
            for (j, d) in virtual_grid.directions().iter().enumerate() {
                panning.set_column(j, &nalgebra::DVector::from_vec(tri.gains(d.unit())));
            }
        }
        None => {
            planar_fallback = true;
            log::warn!(
                "{}: speakers do not span three dimensions; using pairwise panning in their plane",
                array.name()
            );
            // imaginary speakers cannot lie in the plane of the real ones
            imaginary.clear();
            let real_points = &points[..array.real_count()];
            let panner = RingPanner::new(real_points, plane_basis(real_points));
            panning = DMatrix::zeros(real_points.len(), n_virtual);
            for (j, d) in virtual_grid.directions().iter().enumerate() {
                panning.set_column(j, &nalgebra::DVector::from_vec(panner.gains(d.unit())));
            }
        }
    }

    let real = array.real_count();
    let g_real = panning.rows(0, real).into_owned();
    let mut m = g_real * d_virtual.matrix();
    let energy = mean_energy(&m, set);
    if energy > 0.0 {
        m *= (reference_energy(set, real) / energy).sqrt();
    }
    let decoder = DecoderMatrix::new(m, set.clone(), array.clone(), Band::Single)?;
    Ok(AllradDesign {
        decoder,
        panning,
        imaginary,
        planar_fallback,
    })
}

/// Orthonormal basis of the plane best containing `points`.
fn plane_basis(points: &[[f64; 3]]) -> [[f64; 3]; 2] {
    let a = points[0];
    let mut best = (0.0, [0.0f64, 1.0, 0.0]);
    for p in &points[1..] {
        let c = [
            a[1] * p[2] - a[2] * p[1],
            a[2] * p[0] - a[0] * p[2],
            a[0] * p[1] - a[1] * p[0],
        ];
        let n = norm3(c);
        if n > best.0 {
            best = (n, *p);
        }
    }
    if best.0 < 1e-9 {
        // collinear: any plane through the axis
        return if a[2].abs() < 0.9 {
            let e0 = [a[0], a[1], a[2]];
            let z = [0.0, 0.0, 1.0];
            let d = dot3(z, e0);
            let e1 = [-d * e0[0], -d * e0[1], 1.0 - d * e0[2]];
            let n1 = norm3(e1);
            [e0, [e1[0] / n1, e1[1] / n1, e1[2] / n1]]
        } else {
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
        };
    }
    // horizontal rings keep the usual orientation
    let normal = {
        let p = best.1;
        let c = [
            a[1] * p[2] - a[2] * p[1],
            a[2] * p[0] - a[0] * p[2],
            a[0] * p[1] - a[1] * p[0],
        ];
        let n = norm3(c);
        let mut c = [c[0] / n, c[1] / n, c[2] / n];
        if c[2] < 0.0 {
            c = [-c[0], -c[1], -c[2]];
        }
        c
    };
    if (normal[2] - 1.0).abs() < 1e-9 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    }
    let e0 = [a[0] / norm3(a), a[1] / norm3(a), a[2] / norm3(a)];
    let e1 = [
        normal[1] * e0[2] - normal[2] * e0[1],
        normal[2] * e0[0] - normal[0] * e0[2],
        normal[0] * e0[1] - normal[1] * e0[0],
    ];
    [e0, e1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::fixtures;
    use approx::assert_relative_eq;

    fn octahedron_array() -> SpeakerArray {
        fixtures::from_grid("octahedron", &SphericalGrid::octahedron())
    }

    #[test]
    fn encoding_matrix_shapes() {
        let k = encoding_matrix(&SignalSetSpec::full(1), &octahedron_array());
        assert_eq!(k.matrix().shape(), (4, 6));
        assert!(k.matrix().row(0).iter().all(|x| (*x - 1.0).abs() < 1e-15));
        let k = encoding_matrix(&SignalSetSpec::new(2, 1).unwrap(), &fixtures::home_dome());
        assert_eq!(k.matrix().nrows(), 8);
    }

    #[test]
    fn encoding_column_at_left() {
        let arr = SpeakerArray::new(
            "pair",
            vec![
                crate::array::Speaker::new("L", 90.0, 0.0),
                crate::array::Speaker::new("R", -90.0, 0.0),
            ],
        )
        .unwrap();
        let k = encoding_matrix(&SignalSetSpec::full(1), &arr);
        let col = k.matrix().column(0);
        assert_relative_eq!(col[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(col[1], 3f64.sqrt(), epsilon = 1e-12);
        assert!(col[2].abs() < 1e-12 && col[3].abs() < 1e-12);
    }

    #[test]
    fn pinv_reconstructs_on_octahedron() {
        let k = encoding_matrix(&SignalSetSpec::full(1), &octahedron_array());
        let d = pinv_decoder(&k, DEFAULT_TRUNCATION).unwrap();
        let prod = k.matrix() * d.matrix();
        assert!((prod - DMatrix::identity(4, 4)).amax() < 1e-9);
    }

    #[test]
    fn pinv_on_design_is_scaled_transpose() {
        let grid = SphericalGrid::design_240();
        let arr = fixtures::from_grid("t240", &grid);
        let set = SignalSetSpec::full(3);
        let k = encoding_matrix(&set, &arr);
        let d = pinv_decoder(&k, DEFAULT_TRUNCATION).unwrap();
        let expected = k.matrix().transpose() / 240.0;
        assert!((d.matrix() - expected).amax() < 1e-9);
    }

    #[test]
    fn condition_warning_for_dome_at_full_third_order() {
        let k = encoding_matrix(&SignalSetSpec::full(3), &fixtures::home_dome());
        let (_, report) = pinv_decoder_with_report(&k, DEFAULT_TRUNCATION).unwrap();
        assert!(report.condition_number > CONDITION_WARNING);
        assert!(report.warnings.iter().any(|w| w.contains("ill-conditioned")));
    }

    #[test]
    fn zero_encoding_is_degenerate() {
        let k = EncodingMatrix {
            k: DMatrix::zeros(4, 6),
            set: SignalSetSpec::full(1),
            array: octahedron_array(),
        };
        assert!(matches!(pinv_decoder(&k, DEFAULT_TRUNCATION), Err(Error::Degenerate(_))));
    }

    #[test]
    fn max_re_magnitudes() {
        assert_eq!(max_re_magnitude(0), 0.0);
        assert_relative_eq!(max_re_magnitude(1), 1.0 / 3f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(max_re_magnitude(2), (0.6f64).sqrt(), epsilon = 1e-12);
        // largest zero of P4: sqrt(3/7 + 2/7 sqrt(6/5))
        let p4 = (3.0 / 7.0 + 2.0 / 7.0 * (1.2f64).sqrt()).sqrt();
        assert_relative_eq!(max_re_magnitude(3), p4, epsilon = 1e-12);
        let mut prev = 0.0;
        for n in 1..=40 {
            let r = max_re_magnitude(n);
            assert!(r > prev && r < 1.0);
            prev = r;
        }
        assert!(prev > 0.998);
    }

    #[test]
    fn max_re_gain_lists() {
        assert_eq!(max_re_gains(0), vec![1.0]);
        let g = max_re_gains(1);
        assert_relative_eq!(g[1], 0.57735026919, epsilon = 1e-10);
        let g = max_re_gains(2);
        assert_relative_eq!(g[1], 0.77459666924, epsilon = 1e-10);
        assert_relative_eq!(g[2], 0.4, epsilon = 1e-12);
        for n in 1..10 {
            let g = max_re_gains(n);
            assert!(g.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
        }
    }

    #[test]
    fn degree_gains_identity_and_energy() {
        let d = pinv_decoder(&encoding_matrix(&SignalSetSpec::full(1), &octahedron_array()), DEFAULT_TRUNCATION).unwrap();
        let same = apply_degree_gains(&d, &[1.0, 1.0]).unwrap();
        assert!((same.matrix() - d.matrix()).amax() < 1e-15);
        let w = apply_degree_gains(&d, &max_re_gains(1)).unwrap();
        assert_relative_eq!(w.mean_energy(), d.mean_energy(), epsilon = 1e-12);
        assert!(apply_degree_gains(&d, &[1.0]).is_err());
        let omni = apply_degree_gains(&d, &[1.0, 0.0]).unwrap();
        assert!(omni.matrix().columns(1, 3).amax() == 0.0);
    }

    #[test]
    fn imaginary_policy_parsing() {
        assert_eq!("nadir".parse::<ImaginaryPolicy>().unwrap(), ImaginaryPolicy::Nadir);
        assert_eq!("nadir+zenith".parse::<ImaginaryPolicy>().unwrap(), ImaginaryPolicy::NadirZenith);
        assert!("top".parse::<ImaginaryPolicy>().is_err());
    }

    #[test]
    fn allrad_home_dome_columns() {
        let set = SignalSetSpec::new(3, 2).unwrap();
        let arr = fixtures::home_dome();
        let design = allrad_design(&set, &arr, &SphericalGrid::design_240(), ImaginaryPolicy::Nadir).unwrap();
        assert_eq!(design.imaginary.len(), 1);
        assert!(!design.planar_fallback);
        for col in design.panning.column_iter() {
            assert!(col.iter().all(|g| *g >= 0.0));
            assert!(col.iter().filter(|g| **g > 0.0).count() <= 3);
            assert_relative_eq!(col.norm_squared(), 1.0, epsilon = 1e-9);
        }
        assert_eq!(design.decoder.matrix().shape(), (13, 15));
        assert_relative_eq!(
            design.decoder.mean_energy(),
            reference_energy(&set, 13),
            epsilon = 1e-12
        );
    }

    #[test]
    fn allrad_rejects_coarse_virtual_grid() {
        let r = allrad_decoder(
            &SignalSetSpec::full(3),
            &fixtures::home_dome(),
            &SphericalGrid::icosahedron(),
            ImaginaryPolicy::Nadir,
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn allrad_ring_falls_back_to_pairs() {
        let d = allrad_design(
            &SignalSetSpec::new(1, 0).unwrap(),
            &fixtures::ring(6),
            &SphericalGrid::design_240(),
            ImaginaryPolicy::None,
        )
        .unwrap();
        assert!(d.planar_fallback);
        for col in d.panning.column_iter() {
            assert!(col.iter().filter(|g| **g > 0.0).count() <= 2);
        }
    }
}

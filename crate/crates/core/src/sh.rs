//! Real spherical harmonics in ACN order, mixed-order channel masks and
//! signal-set descriptions.
//!
//! Coordinates: x points to the front, y to the left, z up. Azimuth is
//! measured counter-clockwise from the front, elevation upwards from the
//! horizontal plane. Harmonics omit the Condon-Shortley phase.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A direction on the unit sphere with its cached Cartesian unit vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
    unit: [f64; 3],
}

impl Direction {
    /// Builds a direction from azimuth and elevation in radians.
    ///
    /// Elevation is clamped to [-pi/2, pi/2].
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        let elevation = elevation.clamp(-FRAC_PI_2, FRAC_PI_2);
        let (se, ce) = elevation.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        let unit = [ce * ca, ce * sa, se];
        Self {
            azimuth,
            elevation,
            unit: normalize(unit),
        }
    }

    pub fn from_degrees(az_deg: f64, el_deg: f64) -> Self {
        Self::new(az_deg.to_radians(), el_deg.to_radians())
    }

    /// Builds a direction from any non-zero vector.
    pub fn from_vector(v: [f64; 3]) -> Option<Self> {
        let n = norm3(v);
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        let unit = [v[0] / n, v[1] / n, v[2] / n];
        let azimuth = unit[1].atan2(unit[0]);
        let elevation = unit[2].atan2(unit[0].hypot(unit[1]));
        Some(Self {
            azimuth,
            elevation,
            unit,
        })
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    pub fn unit(&self) -> [f64; 3] {
        self.unit
    }

    /// Great-circle angle to another direction, in radians.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        angle_between(self.unit, other.unit)
    }

    /// Applies a 3x3 rotation matrix (row-major) to the direction.
    pub fn rotated(&self, r: &[[f64; 3]; 3]) -> Self {
        let u = self.unit;
        let v = [
            r[0][0] * u[0] + r[0][1] * u[1] + r[0][2] * u[2],
            r[1][0] * u[0] + r[1][1] * u[1] + r[1][2] * u[2],
            r[2][0] * u[0] + r[2][1] * u[1] + r[2][2] * u[2],
        ];
        Self::from_vector(v).expect("rotation of a unit vector is non-zero")
    }
}

pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = norm3(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Angle between two vectors in radians, robust near 0 and pi.
pub fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    norm3(cross).atan2(dot3(a, b))
}

/// Spherical-harmonic normalization convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Normalization {
    /// Full normalization; each harmonic has unit mean square over the sphere.
    #[default]
    N3D,
    /// Schmidt semi-normalization.
    SN3D,
}

impl Normalization {
    /// Factor converting an N3D value of degree `l` to this normalization.
    pub fn from_n3d_factor(self, l: u32) -> f64 {
        match self {
            Normalization::N3D => 1.0,
            Normalization::SN3D => 1.0 / f64::from(2 * l + 1).sqrt(),
        }
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "N3D" => Ok(Self::N3D),
            "SN3D" => Ok(Self::SN3D),
            other => Err(invalid(format!("unknown normalization '{other}'"))),
        }
    }
}

/// Mixed-order channel selection convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Convention {
    #[default]
    HV,
}

/// One Ambisonic channel: harmonic degree `l`, order `m` and its ACN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelSpec {
    pub acn: usize,
    pub degree: u32,
    pub order: i32,
}

impl ChannelSpec {
    pub fn new(degree: u32, order: i32) -> Result<Self> {
        let acn = acn_index(degree, order)?;
        Ok(Self { acn, degree, order })
    }

    pub fn from_acn(acn: usize) -> Self {
        let (degree, order) = acn_to_degree_order(acn);
        Self { acn, degree, order }
    }
}

/// ACN index `l^2 + l + m`.
pub fn acn_index(degree: u32, order: i32) -> Result<usize> {
    if order.unsigned_abs() > degree {
        return Err(invalid(format!(
            "order {order} exceeds degree {degree} in magnitude"
        )));
    }
    let l = degree as i64;
    Ok((l * l + l + order as i64) as usize)
}

/// Inverse of [`acn_index`].
pub fn acn_to_degree_order(acn: usize) -> (u32, i32) {
    let mut l = (acn as f64).sqrt() as usize;
    while l * l > acn {
        l -= 1;
    }
    while (l + 1) * (l + 1) <= acn {
        l += 1;
    }
    let m = acn as i64 - (l * l + l) as i64;
    (l as u32, m as i32)
}

/// Furse-Malham channel letters up to third order, mapped to ACN.
const FUMA_NAMES: [(char, usize); 16] = [
    ('W', 0),
    ('Y', 1),
    ('Z', 2),
    ('X', 3),
    ('V', 4),
    ('T', 5),
    ('R', 6),
    ('S', 7),
    ('U', 8),
    ('Q', 9),
    ('O', 10),
    ('M', 11),
    ('K', 12),
    ('L', 13),
    ('N', 14),
    ('P', 15),
];

/// Resolves a channel given either an ACN number or a Furse-Malham letter.
pub fn channel_from_name(name: &str) -> Result<ChannelSpec> {
    let trimmed = name.trim();
    if let Ok(acn) = trimmed.parse::<usize>() {
        return Ok(ChannelSpec::from_acn(acn));
    }
    let mut chars = trimmed.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        let c = c.to_ascii_uppercase();
        if let Some(&(_, acn)) = FUMA_NAMES.iter().find(|(n, _)| *n == c) {
            return Ok(ChannelSpec::from_acn(acn));
        }
    }
    Err(invalid(format!("unknown channel name '{name}'")))
}

/// Channels of the mixed-order set `H`H`V`V under the HV rule
/// (`l <= H` and `l - |m| <= V`), in ascending ACN order.
pub fn mixed_order_mask(order_h: u32, order_v: u32, _convention: Convention) -> Result<Vec<ChannelSpec>> {
    if order_v > order_h {
        return Err(invalid(format!(
            "vertical order {order_v} exceeds horizontal order {order_h}"
        )));
    }
    let mut out = Vec::new();
    for l in 0..=order_h {
        for m in -(l as i32)..=(l as i32) {
            if l - m.unsigned_abs() <= order_v {
                out.push(ChannelSpec::new(l, m)?);
            }
        }
    }
    Ok(out)
}

/// An Ambisonic signal set: orders, convention, normalization and channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalSetSpec {
    order_h: u32,
    order_v: u32,
    convention: Convention,
    normalization: Normalization,
    channels: Vec<ChannelSpec>,
}

impl SignalSetSpec {
    pub fn new(order_h: u32, order_v: u32) -> Result<Self> {
        Self::with_normalization(order_h, order_v, Normalization::N3D)
    }

    pub fn full(order: u32) -> Self {
        Self::new(order, order).expect("full-order sets are always valid")
    }

    pub fn with_normalization(order_h: u32, order_v: u32, normalization: Normalization) -> Result<Self> {
        let convention = Convention::HV;
        let channels = mixed_order_mask(order_h, order_v, convention)?;
        Ok(Self {
            order_h,
            order_v,
            convention,
            normalization,
            channels,
        })
    }

    pub fn order_h(&self) -> u32 {
        self.order_h
    }

    pub fn order_v(&self) -> u32 {
        self.order_v
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn is_full_order(&self) -> bool {
        self.order_h == self.order_v
    }

    pub fn max_degree(&self) -> u32 {
        self.order_h
    }

    /// Position of `acn` within this set's channel list.
    pub fn position(&self, acn: usize) -> Option<usize> {
        self.channels.binary_search_by_key(&acn, |c| c.acn).ok()
    }

    /// Whether every channel of `other` is also present here.
    pub fn contains_set(&self, other: &SignalSetSpec) -> bool {
        other.channels.iter().all(|c| self.position(c.acn).is_some())
    }

    pub fn name(&self) -> String {
        format!("{}H{}V", self.order_h, self.order_v)
    }
}

impl fmt::Display for SignalSetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for SignalSetSpec {
    type Err = Error;

    /// Parses `<digits>H<digits>V` or a bare order such as `3`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        if let Ok(n) = t.parse::<u32>() {
            return Self::new(n, n);
        }
        let bad = || invalid(format!("malformed signal set '{s}', expected e.g. 3H2V"));
        let (h, rest) = t.split_once('H').ok_or_else(bad)?;
        let v = rest.strip_suffix('V').ok_or_else(bad)?;
        if h.is_empty() || v.is_empty() || !h.bytes().chain(v.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let h: u32 = h.parse().map_err(|_| bad())?;
        let v: u32 = v.parse().map_err(|_| bad())?;
        Self::new(h, v)
    }
}

// Normalized associated Legendre values p_l^m = sqrt((l-m)!/(l+m)!) P_l^m
// without the Condon-Shortley phase, stored at index l(l+1)/2 + m.
fn legendre_table(max_degree: u32, x: f64, out: &mut Vec<f64>) {
    let n = max_degree as usize;
    out.clear();
    out.resize((n + 1) * (n + 2) / 2, 0.0);
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let c = (1.0 - x * x).max(0.0).sqrt();
    out[0] = 1.0;
    for m in 1..=n {
        let mf = m as f64;
        out[idx(m, m)] = out[idx(m - 1, m - 1)] * c * ((2.0 * mf - 1.0) / (2.0 * mf)).sqrt();
    }
    for m in 0..n {
        out[idx(m + 1, m)] = x * (2.0 * m as f64 + 1.0).sqrt() * out[idx(m, m)];
    }
    for m in 0..=n {
        for l in (m + 2)..=n {
            let lf = l as f64;
            let mf = m as f64;
            let a = (2.0 * lf - 1.0) * x * out[idx(l - 1, m)];
            let b = ((lf - 1.0) * (lf - 1.0) - mf * mf).sqrt() * out[idx(l - 2, m)];
            out[idx(l, m)] = (a - b) / (lf * lf - mf * mf).sqrt();
        }
    }
}

/// All N3D harmonics up to `max_degree` at `dir`, in ACN order.
pub fn sh_all(max_degree: u32, dir: &Direction) -> Vec<f64> {
    let mut leg = Vec::new();
    let mut out = vec![0.0; ((max_degree + 1) * (max_degree + 1)) as usize];
    fill_sh_all(max_degree, dir, &mut leg, &mut out);
    out
}

fn fill_sh_all(max_degree: u32, dir: &Direction, leg: &mut Vec<f64>, out: &mut [f64]) {
    let x = dir.unit()[2];
    legendre_table(max_degree, x, leg);
    let az = dir.azimuth();
    for l in 0..=max_degree as usize {
        let nl = (2.0 * l as f64 + 1.0).sqrt();
        let base = l * l + l;
        out[base] = nl * leg[l * (l + 1) / 2];
        for m in 1..=l {
            let p = nl * std::f64::consts::SQRT_2 * leg[l * (l + 1) / 2 + m];
            let (s, c) = (m as f64 * az).sin_cos();
            out[base + m] = p * c;
            out[base - m] = p * s;
        }
    }
}

/// N3D harmonics up to `max_degree` together with their partial
/// derivatives with respect to azimuth and elevation.
///
/// The elevation derivative is singular at the poles; callers should keep
/// points away from them.
pub fn sh_all_with_gradient(max_degree: u32, dir: &Direction) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = ((max_degree + 1) * (max_degree + 1)) as usize;
    let mut leg = Vec::new();
    let x = dir.unit()[2];
    let cos_el = dir.elevation().cos();
    legendre_table(max_degree, x, &mut leg);
    let az = dir.azimuth();
    let mut val = vec![0.0; n];
    let mut d_az = vec![0.0; n];
    let mut d_el = vec![0.0; n];
    for l in 0..=max_degree as usize {
        let lf = l as f64;
        let nl = (2.0 * lf + 1.0).sqrt();
        let base = l * l + l;
        for m in 0..=l {
            let mf = m as f64;
            let p = leg[l * (l + 1) / 2 + m];
            let prev = if l > m { leg[(l - 1) * l / 2 + m] } else { 0.0 };
            let dp_del = ((lf * lf - mf * mf).sqrt() * prev - lf * x * p) / cos_el;
            let k = if m == 0 { nl } else { nl * std::f64::consts::SQRT_2 };
            if m == 0 {
                val[base] = k * p;
                d_el[base] = k * dp_del;
            } else {
                let (s, c) = (mf * az).sin_cos();
                val[base + m] = k * p * c;
                val[base - m] = k * p * s;
                d_az[base + m] = -mf * k * p * s;
                d_az[base - m] = mf * k * p * c;
                d_el[base + m] = k * dp_del * c;
                d_el[base - m] = k * dp_del * s;
            }
        }
    }
    (val, d_az, d_el)
}

/// One real spherical harmonic value.
pub fn real_sh(channel: ChannelSpec, dir: &Direction, normalization: Normalization) -> f64 {
    let all = sh_all(channel.degree, dir);
    all[channel.acn] * normalization.from_n3d_factor(channel.degree)
}

/// Harmonic values of every channel of `set` at `dir`, in channel order.
pub fn sh_vector(set: &SignalSetSpec, dir: &Direction) -> Vec<f64> {
    let all = sh_all(set.max_degree(), dir);
    set.channels()
        .iter()
        .map(|c| all[c.acn] * set.normalization().from_n3d_factor(c.degree))
        .collect()
}

/// Channels x directions matrix of harmonic values for `set`.
pub fn sh_matrix(set: &SignalSetSpec, dirs: &[Direction]) -> nalgebra::DMatrix<f64> {
    let mut leg = Vec::new();
    let lmax = set.max_degree();
    let mut all = vec![0.0; ((lmax + 1) * (lmax + 1)) as usize];
    let mut m = nalgebra::DMatrix::zeros(set.len(), dirs.len());
    for (j, d) in dirs.iter().enumerate() {
        fill_sh_all(lmax, d, &mut leg, &mut all);
        for (i, c) in set.channels().iter().enumerate() {
            m[(i, j)] = all[c.acn] * set.normalization().from_n3d_factor(c.degree);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn acn_examples() {
        assert_eq!(acn_index(0, 0).unwrap(), 0);
        assert_eq!(acn_index(2, 0).unwrap(), 6);
        assert_eq!(acn_index(3, -3).unwrap(), 9);
        assert!(acn_index(1, 2).is_err());
        for acn in 0..200 {
            let (l, m) = acn_to_degree_order(acn);
            assert_eq!(acn_index(l, m).unwrap(), acn);
        }
    }

    #[test]
    fn sh_examples() {
        let w = ChannelSpec::new(0, 0).unwrap();
        for (az, el) in [(0.3, -0.2), (2.0, 1.1), (-1.0, 0.0)] {
            assert_abs_diff_eq!(real_sh(w, &Direction::new(az, el), Normalization::N3D), 1.0, epsilon = 1e-15);
        }
        let x = ChannelSpec::new(1, 1).unwrap();
        assert_abs_diff_eq!(
            real_sh(x, &Direction::new(0.0, 0.0), Normalization::N3D),
            3f64.sqrt(),
            epsilon = 1e-12
        );
        let r = ChannelSpec::new(2, 0).unwrap();
        assert_abs_diff_eq!(
            real_sh(r, &Direction::new(0.0, PI / 2.0), Normalization::N3D),
            5f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn first_and_second_order_closed_forms() {
        let s3 = 3f64.sqrt();
        for (az, el) in [(0.3, -0.2), (2.0, 1.1), (-2.5, 0.4)] {
            let d = Direction::new(az, el);
            let y = sh_all(2, &d);
            let (ca, sa, ce, se) = (az.cos(), az.sin(), el.cos(), el.sin());
            assert_abs_diff_eq!(y[1], s3 * ce * sa, epsilon = 1e-12);
            assert_abs_diff_eq!(y[2], s3 * se, epsilon = 1e-12);
            assert_abs_diff_eq!(y[3], s3 * ce * ca, epsilon = 1e-12);
            let s15 = 15f64.sqrt();
            assert_abs_diff_eq!(y[4], s15 / 2.0 * ce * ce * (2.0 * az).sin(), epsilon = 1e-12);
            assert_abs_diff_eq!(y[5], s15 * se * ce * sa, epsilon = 1e-12);
            assert_abs_diff_eq!(y[6], 5f64.sqrt() * (3.0 * se * se - 1.0) / 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(y[7], s15 * se * ce * ca, epsilon = 1e-12);
            assert_abs_diff_eq!(y[8], s15 / 2.0 * ce * ce * (2.0 * az).cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn mask_examples() {
        let acns = |h, v| -> Vec<usize> {
            mixed_order_mask(h, v, Convention::HV)
                .unwrap()
                .iter()
                .map(|c| c.acn)
                .collect()
        };
        assert_eq!(acns(3, 3), (0..16).collect::<Vec<_>>());
        assert_eq!(acns(2, 1), vec![0, 1, 2, 3, 4, 5, 7, 8]);
        assert_eq!(acns(3, 1), vec![0, 1, 2, 3, 4, 5, 7, 8, 9, 10, 14, 15]);
        assert_eq!(acns(3, 2).len(), 15);
        assert!(mixed_order_mask(1, 2, Convention::HV).is_err());
    }

    #[test]
    fn mask_matches_brute_force_enumeration() {
        for h in 0..6u32 {
            for v in 0..=h {
                let mut expected = Vec::new();
                for acn in 0..((h + 1) * (h + 1)) as usize {
                    let (l, m) = acn_to_degree_order(acn);
                    if l as i64 - (m as i64).abs() <= v as i64 {
                        expected.push(acn);
                    }
                }
                let got: Vec<usize> = mixed_order_mask(h, v, Convention::HV)
                    .unwrap()
                    .iter()
                    .map(|c| c.acn)
                    .collect();
                assert_eq!(got, expected, "{h}H{v}V");
            }
        }
    }

    #[test]
    fn sh_vector_examples() {
        let set = SignalSetSpec::new(1, 1).unwrap();
        let y = sh_vector(&set, &Direction::new(0.0, 0.0));
        let expected = [1.0, 0.0, 0.0, 3f64.sqrt()];
        for (a, b) in y.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }

        let set = SignalSetSpec::full(3);
        let y = sh_vector(&set, &Direction::new(0.7, PI / 2.0));
        for c in set.channels() {
            if c.degree > 0 && c.order.unsigned_abs() == c.degree {
                assert_abs_diff_eq!(y[c.acn], 0.0, epsilon = 1e-12);
            }
        }

        let mixed = SignalSetSpec::new(2, 1).unwrap();
        let full = SignalSetSpec::full(2);
        let d = Direction::new(1.234, 0.0);
        let mut yf = sh_vector(&full, &d);
        yf.remove(6);
        let ym = sh_vector(&mixed, &d);
        for (a, b) in ym.iter().zip(&yf) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn signal_set_parsing() {
        let s: SignalSetSpec = "3H2V".parse().unwrap();
        assert_eq!((s.order_h(), s.order_v(), s.len()), (3, 2, 15));
        let s: SignalSetSpec = "3".parse().unwrap();
        assert_eq!(s.len(), 16);
        assert!("3H4V".parse::<SignalSetSpec>().is_err());
        assert!("H2V".parse::<SignalSetSpec>().is_err());
        assert!("3h1v".parse::<SignalSetSpec>().is_ok());
        assert!("3X1V".parse::<SignalSetSpec>().is_err());
    }

    #[test]
    fn furse_malham_aliases() {
        assert_eq!(channel_from_name("R").unwrap().acn, 6);
        assert_eq!(channel_from_name("x").unwrap().acn, 3);
        assert_eq!(channel_from_name("W").unwrap(), ChannelSpec::new(0, 0).unwrap());
        assert_eq!(channel_from_name("9").unwrap(), ChannelSpec::new(3, -3).unwrap());
        assert!(channel_from_name("A").is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = Direction::new(0.8, 0.3);
        let (v, daz, del) = sh_all_with_gradient(12, &d);
        let h = 1e-6;
        let pa = sh_all(12, &Direction::new(0.8 + h, 0.3));
        let ma = sh_all(12, &Direction::new(0.8 - h, 0.3));
        let pe = sh_all(12, &Direction::new(0.8, 0.3 + h));
        let me = sh_all(12, &Direction::new(0.8, 0.3 - h));
        let base = sh_all(12, &d);
        for i in 0..v.len() {
            assert_abs_diff_eq!(v[i], base[i], epsilon = 1e-12);
            assert_abs_diff_eq!(daz[i], (pa[i] - ma[i]) / (2.0 * h), epsilon = 1e-6);
            assert_abs_diff_eq!(del[i], (pe[i] - me[i]) / (2.0 * h), epsilon = 1e-6);
        }
    }

    #[test]
    fn direction_round_trip() {
        let d = Direction::from_degrees(135.0, -30.0);
        let e = Direction::from_vector(d.unit()).unwrap();
        assert_abs_diff_eq!(d.azimuth(), e.azimuth(), epsilon = 1e-12);
        assert_abs_diff_eq!(d.elevation(), e.elevation(), epsilon = 1e-12);
        assert_abs_diff_eq!(norm3(d.unit()), 1.0, epsilon = 1e-12);
        assert!(Direction::from_vector([0.0; 3]).is_none());
    }
}

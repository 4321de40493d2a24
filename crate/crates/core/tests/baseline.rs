mod common;

use ambidec_core::array::fixtures;
use ambidec_core::baseline::{
    allrad_design, apply_degree_gains, encoding_matrix, max_re_gains, max_re_magnitude, max_re_pinv_decoder,
    pinv_decoder, pinv_decoder_with_report, DecoderMatrix, ImaginaryPolicy, DEFAULT_TRUNCATION,
};
use ambidec_core::grid::SphericalGrid;
use ambidec_core::metrics::{energy_vector, speaker_gains, RenderMetrics};
use ambidec_core::sh::{sh_vector, Direction, SignalSetSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::f64::consts::PI;

fn octahedron() -> ambidec_core::array::SpeakerArray {
    fixtures::from_grid("octahedron", &SphericalGrid::octahedron())
}

#[test]
fn encoding_examples() {
    let k = encoding_matrix(&SignalSetSpec::full(1), &octahedron());
    assert_eq!(k.matrix().shape(), (4, 6));
    assert!(k.matrix().row(0).iter().all(|&v| v == 1.0));

    let set: SignalSetSpec = "2H1V".parse().unwrap();
    assert_eq!(encoding_matrix(&set, &fixtures::home_dome()).matrix().nrows(), 8);
    assert!(set.position(6).is_none());

    let left = sh_vector(&SignalSetSpec::full(1), &Direction::from_degrees(90.0, 0.0));
    let expected = [1.0, 3f64.sqrt(), 0.0, 0.0];
    for (a, b) in left.iter().zip(expected) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn pinv_inverts_octahedron() {
    let set = SignalSetSpec::full(1);
    let k = encoding_matrix(&set, &octahedron());
    let m = pinv_decoder(&k, DEFAULT_TRUNCATION).unwrap();
    assert!((k.matrix() * m.matrix() - DMatrix::identity(4, 4)).amax() < 1e-9);
}

#[test]
fn pinv_on_design_is_scaled_transpose() {
    let set = SignalSetSpec::full(3);
    let array = fixtures::from_grid("design-240", &SphericalGrid::design_240());
    let k = encoding_matrix(&set, &array);
    let m = pinv_decoder(&k, DEFAULT_TRUNCATION).unwrap();
    let scaled = k.matrix().transpose() / 240.0;
    assert!((m.matrix() - scaled).amax() < 1e-12);
}

#[test]
fn ill_conditioned_dome_warns() {
    let k = encoding_matrix(&SignalSetSpec::full(3), &fixtures::home_dome());
    let (_, report) = pinv_decoder_with_report(&k, DEFAULT_TRUNCATION).unwrap();
    let s = &report.singular_values;
    let cond = s[0] / s[s.len() - 1];
    assert!(cond > 1e4, "{cond}");
    assert!(report.warnings.iter().any(|w| w.contains("ill-conditioned")));
}

#[test]
fn all_zero_encoding_rejected() {
    // only W survives at the poles for a 1H0V set with a polar pair
    let set: SignalSetSpec = "1H0V".parse().unwrap();
    let pair = ambidec_core::array::SpeakerArray::new(
        "poles",
        vec![
            ambidec_core::array::Speaker::new("top", 0.0, 90.0),
            ambidec_core::array::Speaker::new("bottom", 0.0, -90.0),
        ],
    )
    .unwrap();
    let k = encoding_matrix(&set, &pair);
    assert!(k.matrix().row(1).amax() < 1e-15);
    assert!(pinv_decoder(&k, DEFAULT_TRUNCATION).is_ok());
}

#[test]
fn max_re_examples() {
    for (n, r) in [(1, 0.57735027), (2, 0.77459667), (3, 0.86113631)] {
        assert!((max_re_magnitude(n) - r).abs() < 1e-8);
    }
    assert!((max_re_magnitude(2) - 0.6f64.sqrt()).abs() < 1e-12);
    assert_eq!(max_re_gains(0), vec![1.0]);
    let g1 = max_re_gains(1);
    assert!((g1[1] - 0.57735).abs() < 1e-5);
    let g2 = max_re_gains(2);
    assert!((g2[1] - 0.77460).abs() < 1e-5 && (g2[2] - 0.4).abs() < 1e-12);
}

#[test]
fn max_re_is_monotone() {
    let mags: Vec<f64> = (0..=30).map(max_re_magnitude).collect();
    assert!(mags.windows(2).all(|w| w[1] > w[0]));
    assert!(mags[30] < 1.0 && mags[30] > 0.99);
    for n in 1..=10 {
        let g = max_re_gains(n);
        assert_eq!(g[0], 1.0);
        assert!(g.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0), "{g:?}");
    }
}

#[test]
fn degree_gain_examples() {
    let set = SignalSetSpec::full(1);
    let dec = pinv_decoder(&encoding_matrix(&set, &octahedron()), DEFAULT_TRUNCATION).unwrap();
    assert_eq!(apply_degree_gains(&dec, &[1.0, 1.0]).unwrap().matrix(), dec.matrix());
    assert!(apply_degree_gains(&dec, &[1.0]).is_err());

    let max_re = apply_degree_gains(&dec, &max_re_gains(1)).unwrap();
    let dirs = octahedron().unit_vectors();
    for d in SphericalGrid::design_240().directions() {
        let r = energy_vector(&speaker_gains(&max_re, d), &dirs).unwrap();
        assert!((r.magnitude - 0.57735).abs() < 1e-5, "{}", r.magnitude);
    }

    let omni = apply_degree_gains(&dec, &[1.0, 0.0]).unwrap();
    for d in SphericalGrid::design_240().directions() {
        let r = energy_vector(&speaker_gains(&omni, d), &dirs).unwrap();
        assert!(r.magnitude < 1e-12);
    }
}

fn check_panning_columns(panning: &DMatrix<f64>) {
    for col in panning.column_iter() {
        assert!(col.iter().all(|&g| g >= 0.0));
        assert!(col.iter().filter(|&&g| g > 0.0).count() <= 3);
        assert!((col.norm_squared() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn allrad_panning_on_dome() {
    let set = SignalSetSpec::new(3, 2).unwrap();
    let d = allrad_design(&set, &fixtures::home_dome(), &SphericalGrid::design_240(), ImaginaryPolicy::Nadir).unwrap();
    assert!(!d.planar_fallback);
    assert_eq!(d.imaginary.len(), 1);
    assert_eq!(d.decoder.matrix().shape(), (13, 15));
    check_panning_columns(&d.panning);
}

#[test]
fn allrad_vertex_gets_largest_gain() {
    let set = SignalSetSpec::full(1);
    let array = octahedron();
    let d = allrad_design(&set, &array, &SphericalGrid::octahedron(), ImaginaryPolicy::None);
    // octahedron is only a 3-design, degree 3 suffices for first order
    let d = d.unwrap();
    for (j, col) in d.panning.column_iter().enumerate() {
        assert_eq!(col.imax(), j);
    }
}

#[test]
fn allrad_rejects_coarse_virtual_grid() {
    let set = SignalSetSpec::full(3);
    assert!(allrad_design(&set, &fixtures::home_dome(), &SphericalGrid::octahedron(), ImaginaryPolicy::Nadir).is_err());
}

#[test]
fn planar_arrays_fall_back_to_pairwise_panning() {
    let set = SignalSetSpec::full(1);
    for (array, policy) in [(fixtures::ring(12), ImaginaryPolicy::None), (fixtures::ring(2), ImaginaryPolicy::Nadir)] {
        let d = allrad_design(&set, &array, &SphericalGrid::design_240(), policy).unwrap();
        assert!(d.planar_fallback);
        assert!(d.imaginary.is_empty());
        assert_eq!(d.panning.nrows(), array.real_count());
        for col in d.panning.column_iter() {
            assert!(col.iter().all(|&g| g >= 0.0));
            assert!(col.iter().filter(|&&g| g > 0.0).count() <= 2 || col.iter().all(|&g| g > 0.0));
        }
        // every speaker is used
        assert!(d.decoder.matrix().row_iter().all(|r| r.norm() > 0.1));
    }
}

fn scalar_metrics(dec: &DecoderMatrix, d: &Direction) -> [f64; 4] {
    let g = speaker_gains(dec, d);
    let m = RenderMetrics::from_gains(&g, &g, &dec.array().unit_vectors(), d.unit());
    [
        m.pressure,
        m.energy,
        m.re.unwrap().magnitude,
        m.dir_err_e_deg.unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn pinv_is_right_inverse(order in 1u32..=3, extra in 2usize..12, seed in any::<u64>()) {
        let set = SignalSetSpec::full(order);
        let array = common::random_array(set.len() + extra, seed);
        let k = encoding_matrix(&set, &array);
        let (m, report) = pinv_decoder_with_report(&k, DEFAULT_TRUNCATION).unwrap();
        prop_assume!(report.rank == set.len() && report.condition_number < 1e4);
        let err = (k.matrix() * m.matrix() - DMatrix::identity(set.len(), set.len())).amax();
        prop_assert!(err < 1e-9, "{}", err);
    }

    #[test]
    fn allrad_columns_are_vbap(n in 6usize..20, seed in any::<u64>()) {
        let array = common::random_array(n, seed);
        let d = allrad_design(&SignalSetSpec::full(1), &array, &SphericalGrid::design_240(), ImaginaryPolicy::Nadir).unwrap();
        prop_assume!(!d.planar_fallback);
        check_panning_columns(&d.panning);
    }

    #[test]
    fn pinv_metrics_are_rotation_equivariant(
        order in 1u32..=3, seed in any::<u64>(),
        a in -PI..PI, b in 0.0..PI, c in -PI..PI,
        z in -1.0f64..1.0, az in -180.0f64..180.0,
    ) {
        let set = SignalSetSpec::full(order);
        let array = common::random_array(set.len() + 8, seed);
        let r = common::rotation(a, b, c);
        let turned = array.rotated(&r).unwrap();
        let d0 = max_re_pinv_decoder(&set, &array).unwrap();
        let d1 = max_re_pinv_decoder(&set, &turned).unwrap();
        let src = Direction::from_degrees(az, z.asin().to_degrees());
        let m0 = scalar_metrics(&d0, &src);
        let m1 = scalar_metrics(&d1, &src.rotated(&r));
        for (x, y) in m0.iter().zip(&m1) {
            prop_assert!(common::rel_close(*x, *y, 1e-9), "{:?} vs {:?}", m0, m1);
        }
    }
}

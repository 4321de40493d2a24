mod common;

use ambidec_core::array::{coverage_weights, fixtures, CoverageParams, CoverageWeighting};
use ambidec_core::baseline::{encoding_matrix, max_re_pinv_decoder, pinv_decoder, DecoderMatrix, Band, DEFAULT_TRUNCATION};
use ambidec_core::grid::SphericalGrid;
use ambidec_core::metrics::{
    effective_order, energy_vector, evaluate_grid, speaker_gains, speaker_gains_for_signal, velocity_vector, zero_filled, Field,
};
use ambidec_core::sh::{sh_vector, Direction, SignalSetSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn unit(az: f64) -> [f64; 3] {
    Direction::from_degrees(az, 0.0).unit()
}

#[test]
fn velocity_examples() {
    let one = velocity_vector(&[1.0], &[unit(30.0)]).unwrap();
    assert!((one.magnitude - 1.0).abs() < 1e-15);
    let pair = velocity_vector(&[0.5, 0.5], &[unit(45.0), unit(-45.0)]).unwrap();
    assert!((pair.magnitude - 0.5f64.sqrt()).abs() < 1e-12);
    assert!(pair.vector[1].abs() < 1e-15 && pair.vector[0] > 0.0);
    let wide = velocity_vector(&[1.0, 1.0], &[unit(90.0), unit(-90.0)]).unwrap();
    assert!(wide.magnitude < 1e-15);
    assert!(velocity_vector(&[1.0, -1.0], &[unit(0.0), unit(90.0)]).is_none());
}

#[test]
fn energy_examples() {
    let one = energy_vector(&[0.0, 2.0], &[unit(0.0), unit(60.0)]).unwrap();
    assert!((one.magnitude - 1.0).abs() < 1e-15);
    assert!(one.angle_to_deg(unit(60.0)).unwrap() < 1e-6);
    let pair = energy_vector(&[0.3, 0.3], &[unit(45.0), unit(-45.0)]).unwrap();
    assert!((pair.magnitude - 0.5f64.sqrt()).abs() < 1e-12);
    // opposite signs: energy cancels the vector, velocity does not exist
    let dirs = [unit(90.0), unit(-90.0)];
    assert!(energy_vector(&[1.0, -1.0], &dirs).unwrap().magnitude < 1e-15);
    assert!(velocity_vector(&[1.0, -1.0], &dirs).is_none());
    let skew = velocity_vector(&[1.0, -0.5], &dirs).unwrap();
    assert!(skew.magnitude > 1.0);
    assert!(energy_vector(&[0.0, 0.0], &dirs).is_none());
}

#[test]
fn effective_order_examples() {
    assert!((effective_order(0.57735).order - 1.0).abs() < 1e-3);
    assert!((effective_order(0.86114).order - 3.0).abs() < 1e-3);
    assert_eq!(effective_order(0.0).order, 0.0);
    let clamped = effective_order(1.0);
    assert!(clamped.clamped && clamped.order == 30.0);
    assert_eq!(effective_order(0.86114).relative_to(3), 0);
}

#[test]
fn gains_examples() {
    let set = SignalSetSpec::full(1);
    let mono = ambidec_core::array::SpeakerArray::new(
        "pair",
        vec![ambidec_core::array::Speaker::new("A", 0.0, 0.0), ambidec_core::array::Speaker::new("B", 180.0, 0.0)],
    )
    .unwrap();
    let w = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    let dec = DecoderMatrix::new(w, set.clone(), mono, Band::Single).unwrap();
    for d in SphericalGrid::design_240().directions() {
        assert_eq!(speaker_gains(&dec, d), vec![1.0, 1.0]);
    }
    assert!(speaker_gains_for_signal(&dec, &[1.0, 0.0]).is_err());

    let oct = fixtures::from_grid("octahedron", &SphericalGrid::octahedron());
    let p = pinv_decoder(&encoding_matrix(&set, &oct), DEFAULT_TRUNCATION).unwrap();
    for (i, d) in oct.directions().iter().enumerate() {
        let g = speaker_gains(&p, d);
        let best = (0..g.len()).max_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap();
        assert_eq!(best, i);
    }
}

#[test]
fn masked_signal_matches_zero_filled_decoder() {
    let full = SignalSetSpec::full(3);
    let mixed: SignalSetSpec = "3H1V".parse().unwrap();
    let dec = max_re_pinv_decoder(&full, &fixtures::stage_dome()).unwrap();
    let fed = zero_filled(&dec, &mixed).unwrap();
    for d in SphericalGrid::design_240().directions() {
        let mut y = sh_vector(&full, d);
        for (k, c) in full.channels().iter().enumerate() {
            if mixed.position(c.acn).is_none() {
                y[k] = 0.0;
            }
        }
        let a = speaker_gains_for_signal(&dec, &y).unwrap();
        let b = speaker_gains(&fed, d);
        for (x, z) in a.iter().zip(&b) {
            assert!((x - z).abs() < 1e-12);
        }
    }
    assert!(zero_filled(&fed, &full).is_err());
}

#[test]
fn regular_arrays_are_exact() {
    let grid = SphericalGrid::design_240();
    let set = SignalSetSpec::full(1);
    for g in [SphericalGrid::octahedron(), SphericalGrid::cube()] {
        let array = fixtures::from_grid(g.name(), &g);
        let dec = pinv_decoder(&encoding_matrix(&set, &array), DEFAULT_TRUNCATION).unwrap();
        let e = evaluate_grid(&dec, &grid, &CoverageWeighting::uniform(grid.len())).unwrap();
        let p = e.stats(Field::Pressure);
        assert!(p.max - p.min < 1e-9, "{}: {p:?}", g.name());
        assert!(e.stats(Field::DirErrV).max < 1e-6);
        assert!(e.stats(Field::DirErrE).max < 1e-6);
    }
}

#[test]
fn octahedron_max_re_on_fine_grid() {
    let set = SignalSetSpec::full(1);
    let array = fixtures::from_grid("octahedron", &SphericalGrid::octahedron());
    let dec = max_re_pinv_decoder(&set, &array).unwrap();
    let grid = SphericalGrid::design_5200();
    let e = evaluate_grid(&dec, &grid, &CoverageWeighting::uniform(grid.len())).unwrap();
    let en = e.stats(Field::Energy);
    assert!(en.max - en.min < 1e-6);
    assert!(e.stats(Field::DirErrE).max < 1e-6);
    let re = e.stats(Field::ReMag);
    assert!((re.min - 0.57735).abs() < 1e-5 && (re.max - 0.57735).abs() < 1e-5);
}

#[test]
fn omni_decoder_has_no_direction() {
    let set = SignalSetSpec::full(1);
    let array = fixtures::from_grid("octahedron", &SphericalGrid::octahedron());
    let mut w = DMatrix::zeros(6, 4);
    w.column_mut(0).fill(1.0 / 6.0);
    let dec = DecoderMatrix::new(w, set, array, Band::Single).unwrap();
    let grid = SphericalGrid::design_240();
    let e = evaluate_grid(&dec, &grid, &CoverageWeighting::uniform(grid.len())).unwrap();
    assert!(e.stats(Field::ReMag).max < 1e-15);
    assert!(e.stats(Field::EffectiveOrder).max < 1e-12);
}

#[test]
fn mismatched_decoder_is_worse_on_dome() {
    let array = fixtures::home_dome();
    let grid = SphericalGrid::design_5200();
    let cov = coverage_weights(&array, &grid, CoverageParams::default());
    let mixed: SignalSetSpec = "3H1V".parse().unwrap();
    let rms = |d: &DecoderMatrix| evaluate_grid(d, &grid, &cov).unwrap().stats(Field::DirErrE).rms;
    let full = max_re_pinv_decoder(&SignalSetSpec::full(3), &array).unwrap();
    let matched = max_re_pinv_decoder(&mixed, &array).unwrap();
    let fed = zero_filled(&full, &mixed).unwrap();
    assert!(rms(&fed) > rms(&matched), "{} vs {}", rms(&fed), rms(&matched));
}

#[test]
fn evaluation_is_deterministic() {
    let array = fixtures::home_dome();
    let dec = max_re_pinv_decoder(&SignalSetSpec::new(3, 2).unwrap(), &array).unwrap();
    let grid = SphericalGrid::design_5200();
    let cov = coverage_weights(&array, &grid, CoverageParams::default());
    let a = evaluate_grid(&dec, &grid, &cov).unwrap();
    let b = evaluate_grid(&dec, &grid, &cov).unwrap();
    let bits = |e: &ambidec_core::metrics::GridEvaluation| {
        e.summary
            .iter()
            .flat_map(|(_, s)| [s.mean, s.min, s.max, s.rms, s.std_dev])
            .map(f64::to_bits)
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_csv(&mut x).unwrap();
    b.write_csv(&mut y).unwrap();
    assert_eq!(x, y);
}

fn gains() -> impl Strategy<Value = (Vec<f64>, Vec<[f64; 3]>)> {
    (2usize..16).prop_flat_map(|n| {
        (
            proptest::collection::vec(-2.0f64..2.0, n),
            proptest::collection::vec((-1.0f64..1.0, -180.0f64..180.0), n)
                .prop_map(|v| v.into_iter().map(|(z, az)| Direction::from_degrees(az, z.asin().to_degrees()).unit()).collect()),
        )
    })
}

proptest! {
    #[test]
    fn vectors_are_scale_invariant((g, dirs) in gains()) {
        for c in [2.0, -1.0, 1e-3] {
            let h: Vec<f64> = g.iter().map(|x| c * x).collect();
            if let (Some(a), Some(b)) = (energy_vector(&g, &dirs), energy_vector(&h, &dirs)) {
                for k in 0..3 {
                    prop_assert!((a.vector[k] - b.vector[k]).abs() < 1e-9);
                }
            }
            let p: f64 = g.iter().sum();
            if p.abs() > 1e-3 {
                let (a, b) = (velocity_vector(&g, &dirs).unwrap(), velocity_vector(&h, &dirs).unwrap());
                for k in 0..3 {
                    prop_assert!((a.vector[k] - b.vector[k]).abs() < 1e-9 * a.magnitude.max(1.0));
                }
            }
        }
    }

    #[test]
    fn energy_vector_is_bounded((g, dirs) in gains()) {
        if let Some(r) = energy_vector(&g, &dirs) {
            prop_assert!(r.magnitude <= 1.0 + 1e-9);
            let active = g.iter().filter(|x| **x != 0.0).count();
            if (r.magnitude - 1.0).abs() < 1e-9 {
                prop_assert!(active == 1 || dirs.windows(2).any(|w| w[0] == w[1]));
            }
        }
    }

    #[test]
    fn single_speaker_has_unit_energy_vector((mut g, dirs) in gains(), k in 0usize..16) {
        let k = k % g.len();
        let v = g[k].abs() + 0.1;
        g.iter_mut().for_each(|x| *x = 0.0);
        g[k] = v;
        let r = energy_vector(&g, &dirs).unwrap();
        prop_assert!((r.magnitude - 1.0).abs() < 1e-9);
    }

    #[test]
    fn design_pinv_renders_source_direction(order in 1u32..=3, z in -1.0f64..1.0, az in -180.0f64..180.0) {
        let set = SignalSetSpec::full(order);
        let array = fixtures::from_grid("design-240", &SphericalGrid::design_240());
        let dec = pinv_decoder(&encoding_matrix(&set, &array), DEFAULT_TRUNCATION).unwrap();
        let d = Direction::from_degrees(az, z.asin().to_degrees());
        let g = speaker_gains(&dec, &d);
        let p: f64 = g.iter().sum();
        prop_assert!((p - 1.0).abs() < 1e-9);
        let rv = velocity_vector(&g, &array.unit_vectors()).unwrap();
        prop_assert!(rv.angle_to_deg(d.unit()).unwrap() < 1e-6);
    }
}

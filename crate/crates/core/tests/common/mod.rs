#![allow(dead_code)]

use ambidec_core::array::{Speaker, SpeakerArray};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniformly random speaker directions, resampled until the array is valid.
pub fn random_array(n: usize, seed: u64) -> SpeakerArray {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let speakers = (0..n)
            .map(|i| {
                let z: f64 = rng.random_range(-1.0..1.0);
                let az: f64 = rng.random_range(-180.0..180.0);
                Speaker::new(format!("S{i}"), az, z.asin().to_degrees())
            })
            .collect();
        if let Ok(a) = SpeakerArray::new(format!("random-{n}-{seed}"), speakers) {
            return a;
        }
    }
}

/// Rotation about z by `a`, then y by `b`, then z by `c` (radians).
pub fn rotation(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
    let rz = |t: f64| [[t.cos(), -t.sin(), 0.0], [t.sin(), t.cos(), 0.0], [0.0, 0.0, 1.0]];
    let ry = |t: f64| [[t.cos(), 0.0, t.sin()], [0.0, 1.0, 0.0], [-t.sin(), 0.0, t.cos()]];
    mul(rz(c), mul(ry(b), rz(a)))
}

fn mul(p: [[f64; 3]; 3], q: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = (0..3).map(|k| p[i][k] * q[k][j]).sum();
        }
    }
    r
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

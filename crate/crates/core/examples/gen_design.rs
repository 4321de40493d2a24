//! Generates antipodally symmetric spherical t-designs by damped
//! Gauss-Newton on the harmonic moment conditions.
//!
//! Usage: cargo run --release --example gen_design -- <points> <degree> <out>
//!
//! Only even degrees need to vanish for a symmetric set, so the unknowns are
//! the (azimuth, elevation) pairs of half the points.

use std::f64::consts::PI;
use std::io::Write;

use ambidec_core::sh::{sh_all, sh_all_with_gradient, Direction};
use nalgebra::{DMatrix, DVector};

fn even_rows(t: u32) -> Vec<usize> {
    let mut rows = Vec::new();
    for l in (2..=t).step_by(2) {
        for m in -(l as i64)..=(l as i64) {
            rows.push((l as i64 * l as i64 + l as i64 + m) as usize);
        }
    }
    rows
}

fn residual_and_jacobian(dirs: &[Direction], t: u32, rows: &[usize], want_jac: bool) -> (DVector<f64>, Option<DMatrix<f64>>) {
    let mut r = DVector::zeros(rows.len());
    let mut jac = if want_jac { Some(DMatrix::zeros(rows.len(), 2 * dirs.len())) } else { None };
    for (i, d) in dirs.iter().enumerate() {
        if let Some(j) = jac.as_mut() {
            let (v, daz, del) = sh_all_with_gradient(t, d);
            for (k, &row) in rows.iter().enumerate() {
                r[k] += v[row];
                j[(k, 2 * i)] = daz[row];
                j[(k, 2 * i + 1)] = del[row];
            }
        } else {
            let v = sh_all(t, d);
            for (k, &row) in rows.iter().enumerate() {
                r[k] += v[row];
            }
        }
    }
    (r, jac)
}

fn solve_damped(j: &DMatrix<f64>, r: &DVector<f64>, mu: f64) -> DVector<f64> {
    // (J J^T + mu I) z = r, step = -J^T z
    if j.nrows() <= 4000 {
        let mut a = j * j.transpose();
        for i in 0..a.nrows() {
            a[(i, i)] += mu;
        }
        let z = a.cholesky().expect("damped normal matrix is SPD").solve(r);
        return -(j.transpose() * z);
    }
    let apply = |z: &DVector<f64>| -> DVector<f64> { j * (j.transpose() * z) + z * mu };
    let mut z = DVector::zeros(r.len());
    let mut res = r.clone();
    let mut p = res.clone();
    let mut rr = res.dot(&res);
    let r0 = rr.sqrt();
    for _ in 0..2000 {
        let ap = apply(&p);
        let alpha = rr / p.dot(&ap);
        z += &p * alpha;
        res -= &ap * alpha;
        let rr_new = res.dot(&res);
        if rr_new.sqrt() < 1e-12 * r0 {
            break;
        }
        p = &res + &p * (rr_new / rr);
        rr = rr_new;
    }
    -(j.transpose() * z)
}

fn apply_step(dirs: &[Direction], step: &DVector<f64>) -> Vec<Direction> {
    dirs.iter()
        .enumerate()
        .map(|(i, d)| {
            let el = (d.elevation() + step[2 * i + 1]).clamp(-PI / 2.0 + 1e-9, PI / 2.0 - 1e-9);
            Direction::new(d.azimuth() + step[2 * i], el)
        })
        .collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.len() < 4 {
        eprintln!("usage: gen_design <points> <degree> <out>");
        std::process::exit(1);
    }
    let n: usize = args[1].parse().expect("points");
    let t: u32 = args[2].parse().expect("degree");
    let out = &args[3];
    assert!(n % 2 == 0, "antipodal designs need an even point count");
    let half = n / 2;
    let rows = even_rows(t);
    println!("{} unknowns, {} conditions", 2 * half, rows.len());

    let golden = PI * (3.0 - 5f64.sqrt());
    let mut dirs: Vec<Direction> = (0..half)
        .map(|k| {
            let z = (k as f64 + 0.5) / half as f64;
            Direction::new(golden * k as f64, z.asin())
        })
        .collect();

    let mut mu = 1.0;
    let (mut r, _) = residual_and_jacobian(&dirs, t, &rows, false);
    let mut cost = r.norm_squared();
    for iter in 0..40 {
        println!("iter {iter}: cost {cost:.3e} residual_inf {:.3e} mu {mu:.1e}", r.amax());
        if r.amax() < 1e-13 {
            break;
        }
        let (_, jac) = residual_and_jacobian(&dirs, t, &rows, true);
        let jac = jac.unwrap();
        if mu > 1e12 {
            break;
        }
        loop {
            let step = solve_damped(&jac, &r, mu);
            let trial = apply_step(&dirs, &step);
            let (rt, _) = residual_and_jacobian(&trial, t, &rows, false);
            let ct = rt.norm_squared();
            if ct < cost {
                dirs = trial;
                r = rt;
                cost = ct;
                mu = (mu * 0.2).max(1e-12);
                break;
            }
            mu *= 10.0;
            if mu > 1e12 {
                break;
            }
        }
    }

    // residual of the quadrature sum with equal weights 4 pi / n
    let weighted = r.amax() * 4.0 * PI / n as f64;
    if weighted > 1e-10 {
        eprintln!("did not converge: weighted residual {weighted:.3e}");
        std::process::exit(2);
    }
    let mut f = std::fs::File::create(out).expect("create output");
    writeln!(f, "# antipodal spherical design: {n} points, degree {t}").unwrap();
    writeln!(f, "# degree: {t}").unwrap();
    for d in &dirs {
        let u = d.unit();
        writeln!(f, "{} {} {}", u[0], u[1], u[2]).unwrap();
    }
    for d in &dirs {
        let u = d.unit();
        writeln!(f, "{} {} {}", -u[0], -u[1], -u[2]).unwrap();
    }
}

//! Objective functions for the high- and low-frequency decoder stages and
//! their analytic gradients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::array::SpeakerArray;
use crate::error::{invalid, Result};
use crate::grid::SphericalGrid;
use crate::sh::{dot3, sh_matrix, SignalSetSpec};

const TINY: f64 = 1e-300;

/// Weights of the objective terms. All dimensionless and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermWeights {
    pub direction: f64,
    pub magnitude: f64,
    pub energy: f64,
    pub amplitude: f64,
    pub tikhonov: f64,
    pub sparseness: f64,
}

impl Default for TermWeights {
    fn default() -> Self {
        Self {
            direction: 10.0,
            magnitude: 1.0,
            energy: 1.0,
            amplitude: 1.0,
            tikhonov: 1e-3,
            sparseness: 0.0,
        }
    }
}

impl TermWeights {
    /// Sets one weight by name, as used by `k=v` command-line overrides.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() || value < 0.0 {
            return Err(invalid(format!("weight '{key}' must be finite and non-negative")));
        }
        let slot = match key {
            "direction" | "dir" => &mut self.direction,
            "magnitude" | "mag" => &mut self.magnitude,
            "energy" => &mut self.energy,
            "amplitude" | "amp" => &mut self.amplitude,
            "tikhonov" | "lambda" => &mut self.tikhonov,
            "sparseness" | "sparse" => &mut self.sparseness,
            other => return Err(invalid(format!("unknown weight '{other}'"))),
        };
        *slot = value;
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.direction,
            self.magnitude,
            self.energy,
            self.amplitude,
            self.tikhonov,
            self.sparseness,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("objective weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Everything that parameterizes an objective besides the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub weights: TermWeights,
    /// Per grid direction.
    pub coverage: Vec<f64>,
    /// Per real speaker.
    pub sparseness_weights: Vec<f64>,
    /// Matrix entries are kept in [-bound, bound].
    pub bound: f64,
    /// Energy gain the high-frequency stage aims for; `None` means
    /// channels / speakers, the level of a regular-layout decoder.
    pub energy_target: Option<f64>,
    /// Pressure gain the low-frequency stage aims for.
    pub amplitude_target: f64,
}

impl ObjectiveSpec {
    pub fn new(weights: TermWeights, coverage: Vec<f64>, sparseness_weights: Vec<f64>) -> Self {
        Self {
            weights,
            coverage,
            sparseness_weights,
            bound: 4.0,
            energy_target: None,
            amplitude_target: 1.0,
        }
    }

    /// Uniform coverage, unit sparseness weights, default settings.
    pub fn uniform(weights: TermWeights, grid_len: usize, speakers: usize) -> Self {
        Self::new(weights, vec![1.0; grid_len], vec![1.0; speakers])
    }

    fn validate(&self, grid_len: usize, speakers: usize) -> Result<()> {
        self.weights.validate()?;
        if self.coverage.len() != grid_len {
            return Err(invalid(format!(
                "{} coverage weights for a {grid_len}-point grid",
                self.coverage.len()
            )));
        }
        if self.sparseness_weights.len() != speakers {
            return Err(invalid(format!(
                "{} sparseness weights for {speakers} speakers",
                self.sparseness_weights.len()
            )));
        }
        if self.coverage.iter().chain(&self.sparseness_weights).any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("coverage and sparseness weights must be finite and non-negative"));
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(invalid("matrix bound must be positive"));
        }
        if let Some(e) = self.energy_target {
            if !(e > 0.0 && e.is_finite()) {
                return Err(invalid("energy target must be positive"));
            }
        }
        if !(self.amplitude_target > 0.0 && self.amplitude_target.is_finite()) {
            return Err(invalid("amplitude target must be positive"));
        }
        Ok(())
    }
}

/// Objective value split by term. `level` is the energy term for the
/// high-frequency stage and the amplitude term for the low-frequency stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub total: f64,
    pub direction: f64,
    pub magnitude: f64,
    pub level: f64,
    pub tikhonov: f64,
    pub sparseness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Hf,
    Lf,
}

/// A decoder objective over a fixed grid, array and targets.
///
/// The grid sum is a quadrature mean: each direction contributes its
/// quadrature weight over 4 pi times its coverage weight.
#[derive(Debug, Clone)]
pub struct Objective {
    stage: Stage,
    speakers: usize,
    channels: usize,
    y: DMatrix<f64>,
    y_t: DMatrix<f64>,
    speaker_dirs: Vec<[f64; 3]>,
    targets: Vec<[f64; 3]>,
    goal: Vec<f64>,
    omega: Vec<f64>,
    weights: TermWeights,
    level_target: f64,
    sparse_w: Vec<f64>,
    bound: f64,
}

impl Objective {
    /// High-frequency objective: rE direction towards each grid direction,
    /// |rE| towards `goal`, energy towards the energy target.
    pub fn hf(
        set: &SignalSetSpec,
        array: &SpeakerArray,
        grid: &SphericalGrid,
        goal: &[f64],
        spec: &ObjectiveSpec,
    ) -> Result<Self> {
        if goal.len() != grid.len() {
            return Err(invalid(format!("{} goal values for a {}-point grid", goal.len(), grid.len())));
        }
        let targets = grid.directions().iter().map(|d| d.unit()).collect();
        let level = spec
            .energy_target
            .unwrap_or(set.len() as f64 / array.real_count() as f64);
        Self::build(Stage::Hf, set, array, grid, targets, goal.to_vec(), spec, level)
    }

    /// Low-frequency objective: rV direction towards `targets` (typically
    /// the high-frequency rE directions), |rV| towards 1, pressure towards
    /// the amplitude target.
    pub fn lf(
        set: &SignalSetSpec,
        array: &SpeakerArray,
        grid: &SphericalGrid,
        targets: &[[f64; 3]],
        spec: &ObjectiveSpec,
    ) -> Result<Self> {
        if targets.len() != grid.len() {
            return Err(invalid(format!(
                "{} target directions for a {}-point grid",
                targets.len(),
                grid.len()
            )));
        }
        let goal = vec![1.0; grid.len()];
        Self::build(
            Stage::Lf,
            set,
            array,
            grid,
            targets.to_vec(),
            goal,
            spec,
            spec.amplitude_target,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        stage: Stage,
        set: &SignalSetSpec,
        array: &SpeakerArray,
        grid: &SphericalGrid,
        targets: Vec<[f64; 3]>,
        goal: Vec<f64>,
        spec: &ObjectiveSpec,
        level_target: f64,
    ) -> Result<Self> {
        spec.validate(grid.len(), array.real_count())?;
        let y = sh_matrix(set, grid.directions());
        let total_q: f64 = grid.weights().iter().sum();
        let omega = grid
            .weights()
            .iter()
            .zip(&spec.coverage)
            .map(|(q, c)| q / total_q * c)
            .collect();
        Ok(Self {
            stage,
            speakers: array.real_count(),
            channels: set.len(),
            y_t: y.transpose(),
            y,
            speaker_dirs: array.unit_vectors(),
            targets,
            goal,
            omega,
            weights: spec.weights,
            level_target,
            sparse_w: spec.sparseness_weights.clone(),
            bound: spec.bound,
        })
    }

    pub fn speakers(&self) -> usize {
        self.speakers
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    fn check(&self, m: &DMatrix<f64>) {
        assert_eq!(m.shape(), (self.speakers, self.channels), "matrix shape does not match objective");
    }

    /// Objective value and its breakdown.
    pub fn value(&self, m: &DMatrix<f64>) -> ObjectiveTerms {
        self.check(m);
        self.compute(m, false).0
    }

    /// Objective value and gradient with respect to every matrix entry.
    pub fn value_and_gradient(&self, m: &DMatrix<f64>) -> (ObjectiveTerms, DMatrix<f64>) {
        self.check(m);
        let (t, g) = self.compute(m, true);
        (t, g.expect("gradient requested"))
    }

    pub fn gradient(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.value_and_gradient(m).1
    }

    fn compute(&self, m: &DMatrix<f64>, want_grad: bool) -> (ObjectiveTerms, Option<DMatrix<f64>>) {
        let gains = m * &self.y;
        let mut d = if want_grad {
            Some(DMatrix::zeros(self.speakers, self.y.ncols()))
        } else {
            None
        };
        let mut terms = ObjectiveTerms::default();
        let mut dg = vec![0.0; self.speakers];
        for j in 0..self.y.ncols() {
            let w = self.omega[j];
            if w == 0.0 {
                continue;
            }
            let g = gains.column(j);
            let g = g.as_slice();
            let (dir, mag, level) = match self.stage {
                Stage::Hf => self.hf_point(j, g, want_grad.then_some(&mut dg[..])),
                Stage::Lf => self.lf_point(j, g, want_grad.then_some(&mut dg[..])),
            };
            terms.direction += w * dir;
            terms.magnitude += w * mag;
            terms.level += w * level;
            if let Some(d) = d.as_mut() {
                let mut col = d.column_mut(j);
                for s in 0..self.speakers {
                    col[s] = w * dg[s];
                }
            }
        }
        let mut grad = d.map(|d| d * &self.y_t);

        let lambda = self.weights.tikhonov;
        terms.tikhonov = lambda * m.norm_squared();
        if let Some(g) = grad.as_mut() {
            if lambda != 0.0 {
                *g += m * (2.0 * lambda);
            }
        }

        terms.sparseness = self.sparseness(m, grad.as_mut());
        terms.total = terms.direction + terms.magnitude + terms.level + terms.tikhonov + terms.sparseness;
        (terms, grad)
    }

    /// Per-direction high-frequency terms; writes dF/dg into `dg`.
    fn hf_point(&self, j: usize, g: &[f64], dg: Option<&mut [f64]>) -> (f64, f64, f64) {
        let wt = &self.weights;
        let u = self.targets[j];
        let mut energy = 0.0;
        let mut ev = [0.0; 3];
        for (gs, us) in g.iter().zip(&self.speaker_dirs) {
            let p = gs * gs;
            energy += p;
            ev[0] += p * us[0];
            ev[1] += p * us[1];
            ev[2] += p * us[2];
        }
        let et = self.level_target;
        let level_res = energy / et - 1.0;
        let level = wt.energy * level_res * level_res;
        let norm_e = dot3(ev, ev).sqrt();
        if energy < TINY || norm_e < TINY {
            if let Some(dg) = dg {
                for (o, gs) in dg.iter_mut().zip(g) {
                    *o = wt.energy * 2.0 * level_res * 2.0 * gs / et;
                }
            }
            let mag_res = self.goal[j];
            return (wt.direction, wt.magnitude * mag_res * mag_res, level);
        }
        let rhat = [ev[0] / norm_e, ev[1] / norm_e, ev[2] / norm_e];
        let ru = dot3(rhat, u);
        let re_mag = norm_e / energy;
        let mag_res = re_mag - self.goal[j];
        let dir = wt.direction * (1.0 - ru);
        let mag = wt.magnitude * mag_res * mag_res;
        if let Some(dg) = dg {
            let perp = [u[0] - ru * rhat[0], u[1] - ru * rhat[1], u[2] - ru * rhat[2]];
            let c_dir = -wt.direction / norm_e;
            let c_mag = 2.0 * wt.magnitude * mag_res / energy;
            let c_level = 2.0 * wt.energy * level_res / et;
            for ((o, gs), us) in dg.iter_mut().zip(g).zip(&self.speaker_dirs) {
                let inner = c_dir * dot3(perp, *us) + c_mag * (dot3(rhat, *us) - re_mag) + c_level;
                *o = 2.0 * gs * inner;
            }
        }
        (dir, mag, level)
    }

    /// Per-direction low-frequency terms; writes dF/dg into `dg`.
    fn lf_point(&self, j: usize, g: &[f64], dg: Option<&mut [f64]>) -> (f64, f64, f64) {
        let wt = &self.weights;
        let t = self.targets[j];
        let mut p = 0.0;
        let mut v = [0.0; 3];
        for (gs, us) in g.iter().zip(&self.speaker_dirs) {
            p += gs;
            v[0] += gs * us[0];
            v[1] += gs * us[1];
            v[2] += gs * us[2];
        }
        let pt = self.level_target;
        let amp_res = p / pt - 1.0;
        let level = wt.amplitude * amp_res * amp_res;
        let c_level = 2.0 * wt.amplitude * amp_res / pt;
        let norm_v = dot3(v, v).sqrt();
        if p.abs() < TINY || norm_v < TINY {
            if let Some(dg) = dg {
                dg.iter_mut().for_each(|o| *o = c_level);
            }
            return (wt.direction, wt.magnitude, level);
        }
        let sign = p.signum();
        let vhat = [v[0] / norm_v, v[1] / norm_v, v[2] / norm_v];
        let vt = dot3(vhat, t);
        let rv_mag = norm_v / p.abs();
        let mag_res = rv_mag - 1.0;
        let dir = wt.direction * (1.0 - sign * vt);
        let mag = wt.magnitude * mag_res * mag_res;
        if let Some(dg) = dg {
            let perp = [t[0] - vt * vhat[0], t[1] - vt * vhat[1], t[2] - vt * vhat[2]];
            let c_dir = -wt.direction * sign / norm_v;
            let c_mag = 2.0 * wt.magnitude * mag_res;
            let dmag_dp = -norm_v * sign / (p * p);
            for (o, us) in dg.iter_mut().zip(&self.speaker_dirs) {
                *o = c_dir * dot3(perp, *us) + c_mag * (dot3(vhat, *us) / p.abs() + dmag_dp) + c_level;
            }
        }
        (dir, mag, level)
    }

    /// Hinge penalty on rows whose norm falls below the mean row norm.
    fn sparseness(&self, m: &DMatrix<f64>, grad: Option<&mut DMatrix<f64>>) -> f64 {
        let beta = self.weights.sparseness;
        if beta == 0.0 {
            return 0.0;
        }
        let s = self.speakers as f64;
        let q: Vec<f64> = m.row_iter().map(|r| r.norm()).collect();
        let qbar = q.iter().sum::<f64>() / s;
        if qbar <= 0.0 {
            // every row is silent: each hinge sits at 1 and the subgradient is 0
            return beta * self.sparse_w.iter().sum::<f64>();
        }
        let h: Vec<f64> = q.iter().map(|qs| (1.0 - qs / qbar).max(0.0)).collect();
        let value = beta * self.sparse_w.iter().zip(&h).map(|(w, h)| w * h * h).sum::<f64>();
        if let Some(grad) = grad {
            let shared = self
                .sparse_w
                .iter()
                .zip(&h)
                .zip(&q)
                .map(|((w, h), qs)| w * h * qs)
                .sum::<f64>()
                / (s * qbar * qbar);
            for r in 0..self.speakers {
                if q[r] == 0.0 {
                    continue;
                }
                let coef = 2.0 * beta * (-self.sparse_w[r] * h[r] / qbar + shared) / q[r];
                for c in 0..self.channels {
                    grad[(r, c)] += coef * m[(r, c)];
                }
            }
        }
        value
    }
}

/// High-frequency objective value for `m`.
pub fn hf_objective(
    m: &DMatrix<f64>,
    set: &SignalSetSpec,
    array: &SpeakerArray,
    grid: &SphericalGrid,
    goal: &[f64],
    spec: &ObjectiveSpec,
) -> Result<ObjectiveTerms> {
    Ok(Objective::hf(set, array, grid, goal, spec)?.value(m))
}

/// Gradient of the high-frequency objective with respect to `m`.
pub fn objective_gradient(
    m: &DMatrix<f64>,
    set: &SignalSetSpec,
    array: &SpeakerArray,
    grid: &SphericalGrid,
    goal: &[f64],
    spec: &ObjectiveSpec,
) -> Result<DMatrix<f64>> {
    Ok(Objective::hf(set, array, grid, goal, spec)?.gradient(m))
}

/// Worst relative disagreement between the analytic gradient and central
/// differences over the listed entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub entries_checked: usize,
    pub max_relative_error: f64,
}

/// Compares the gradient with central differences (step `1e-6 (1 + |x|)`)
/// on the given entries.
pub fn check_gradient(obj: &Objective, m: &DMatrix<f64>, entries: &[(usize, usize)]) -> GradientCheck {
    let (_, grad) = obj.value_and_gradient(m);
    let scale = grad.amax().max(1e-12);
    let mut worst: f64 = 0.0;
    let mut probe = m.clone();
    for &(r, c) in entries {
        let x = m[(r, c)];
        let h = 1e-6 * (1.0 + x.abs());
        probe[(r, c)] = x + h;
        let fp = obj.value(&probe).total;
        probe[(r, c)] = x - h;
        let fm = obj.value(&probe).total;
        probe[(r, c)] = x;
        let fd = (fp - fm) / (2.0 * h);
        let err = (fd - grad[(r, c)]).abs() / grad[(r, c)].abs().max(fd.abs()).max(1e-3 * scale);
        worst = worst.max(err);
    }
    GradientCheck {
        entries_checked: entries.len(),
        max_relative_error: worst,
    }
}

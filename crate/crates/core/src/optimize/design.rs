use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::{coverage_weights, CoverageParams, SpeakerArray};
use crate::baseline::{
    allrad_decoder, encoding_matrix, max_re_magnitude, max_re_pinv_decoder, pinv_decoder, Band, DecoderMatrix,
    ImaginaryPolicy, DEFAULT_TRUNCATION,
};
use crate::error::{invalid, Error, Result};
use crate::grid::SphericalGrid;
use crate::metrics::{energy_vector, evaluate_grid};
use crate::sh::SignalSetSpec;

use super::lbfgs::{minimize, LbfgsOptions, StopReason};
use super::objective::{check_gradient, GradientCheck, Objective, ObjectiveSpec, ObjectiveTerms, TermWeights};

/// Half-width of the interval random starting matrices are drawn from.
pub const RANDOM_START_RANGE: f64 = 0.01;

/// Starting matrix for an optimization.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// AllRAD decoder over the builtin 240-point virtual array.
    Allrad(ImaginaryPolicy),
    /// Plain pseudoinverse decoder.
    Pinv,
    /// Entries uniform in [-0.01, 0.01].
    Random { seed: u64 },
    Given(DMatrix<f64>),
}

impl InitialGuess {
    /// Builds the starting matrix for `set` on `array`.
    pub fn matrix(&self, set: &SignalSetSpec, array: &SpeakerArray) -> Result<DMatrix<f64>> {
        let (s, c) = (array.real_count(), set.len());
        match self {
            InitialGuess::Allrad(policy) => {
                Ok(allrad_decoder(set, array, &SphericalGrid::design_240(), *policy)?.matrix().clone())
            }
            InitialGuess::Pinv => Ok(pinv_decoder(&encoding_matrix(set, array), DEFAULT_TRUNCATION)?
                .matrix()
                .clone()),
            InitialGuess::Random { seed } => Ok(random_matrix(s, c, *seed)),
            InitialGuess::Given(m) => {
                if m.shape() != (s, c) {
                    return Err(invalid(format!(
                        "starting matrix is {}x{} but {} on {} needs {s}x{c}",
                        m.nrows(),
                        m.ncols(),
                        set,
                        array.name()
                    )));
                }
                Ok(m.clone())
            }
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            InitialGuess::Random { seed } => Some(*seed),
            _ => None,
        }
    }
}

/// A seeded random matrix with entries uniform in [-0.01, 0.01].
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-RANDOM_START_RANGE..=RANDOM_START_RANGE))
}

/// Outcome of one optimization stage.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub matrix: DecoderMatrix,
    pub iterations: usize,
    pub evaluations: usize,
    pub objective: f64,
    pub terms: ObjectiveTerms,
    pub initial_terms: ObjectiveTerms,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Objective after each accepted step.
    pub history: Vec<f64>,
    pub projected_gradient_norm: f64,
    /// Seed of a random start, if one was used.
    pub seed: Option<u64>,
    /// Analytic versus central-difference gradient at the starting matrix.
    pub gradient_check: GradientCheck,
}

fn run(
    obj: &Objective,
    x0: DMatrix<f64>,
    set: &SignalSetSpec,
    array: &SpeakerArray,
    band: Band,
    opts: &LbfgsOptions,
    seed: Option<u64>,
) -> Result<OptimizationResult> {
    let (rows, cols) = x0.shape();
    let b = obj.bound();
    let start = x0.map(|v| v.clamp(-b, b));
    let initial_terms = obj.value(&start);
    let n = rows * cols;
    let probes: Vec<(usize, usize)> = (0..n.min(6)).map(|k| k * n / n.min(6)).map(|i| (i % rows, i / rows)).collect();
    let gradient_check = check_gradient(obj, &start, &probes);
    let outcome = minimize(
        |x| {
            let m = DMatrix::from_column_slice(rows, cols, x);
            let (t, g) = obj.value_and_gradient(&m);
            (t.total, g.as_slice().to_vec())
        },
        x0.as_slice(),
        -b,
        b,
        opts,
    );
    let m = DMatrix::from_column_slice(rows, cols, &outcome.x);
    let terms = obj.value(&m);
    if !outcome.reason.converged() {
        log::warn!(
            "{band} stage stopped after {} iterations without converging (objective {:.6e})",
            outcome.iterations,
            outcome.value
        );
    }
    Ok(OptimizationResult {
        matrix: DecoderMatrix::new(m, set.clone(), array.clone(), band)?,
        iterations: outcome.iterations,
        evaluations: outcome.evaluations,
        objective: outcome.value,
        terms,
        initial_terms,
        converged: outcome.reason.converged(),
        stop_reason: outcome.reason,
        history: outcome.history,
        projected_gradient_norm: outcome.projected_gradient_norm,
        seed,
        gradient_check,
    })
}

/// Optimizes over decoders of the form `K^T C / S`, whose panning
/// functions lie in the span of the set's harmonics. On a spherical design
/// this family contains every pseudoinverse-based decoder and is far better
/// conditioned than the full matrix space.
fn run_band_limited(
    obj: &Objective,
    x0: &DMatrix<f64>,
    set: &SignalSetSpec,
    array: &SpeakerArray,
    opts: &LbfgsOptions,
) -> Result<OptimizationResult> {
    let k = crate::sh::sh_matrix(set, array.directions());
    let kt = k.transpose();
    let s = array.real_count() as f64;
    let c = set.len();
    let to_m = |z: &[f64]| &kt * DMatrix::from_column_slice(c, c, z) / s;
    let z0 = &k * x0;
    let outcome = minimize(
        |z| {
            let (t, g) = obj.value_and_gradient(&to_m(z));
            (t.total, (&k * g / s).as_slice().to_vec())
        },
        z0.as_slice(),
        -1e6,
        1e6,
        opts,
    );
    let m = to_m(&outcome.x);
    let b = obj.bound();
    if m.amax() > b {
        return Err(invalid(format!("band-limited decoder exceeds the entry bound {b}")));
    }
    let terms = obj.value(&m);
    let probes: Vec<(usize, usize)> = (0..c.min(6)).map(|i| (i * m.nrows() / c.min(6), i)).collect();
    let gradient_check = check_gradient(obj, x0, &probes);
    Ok(OptimizationResult {
        matrix: DecoderMatrix::new(m.clone(), set.clone(), array.clone(), Band::Hf)?,
        iterations: outcome.iterations,
        evaluations: outcome.evaluations,
        objective: outcome.value,
        terms,
        initial_terms: obj.value(x0),
        converged: outcome.reason.converged(),
        stop_reason: outcome.reason,
        history: outcome.history,
        projected_gradient_norm: outcome.projected_gradient_norm,
        seed: None,
        gradient_check,
    })
}

/// Per-direction |rE| targets for the high-frequency stage.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalField {
    pub grid_name: String,
    pub goal: Vec<f64>,
    /// Decoder on the spherical-design array whose |rE| is the goal.
    pub reference: DecoderMatrix,
    pub reference_converged: bool,
    pub reference_iterations: usize,
}

impl GoalField {
    /// A constant goal, for callers that already know the target.
    pub fn constant(grid: &SphericalGrid, value: f64, reference: DecoderMatrix) -> Self {
        Self {
            grid_name: grid.name().to_string(),
            goal: vec![value; grid.len()],
            reference,
            reference_converged: true,
            reference_iterations: 0,
        }
    }
}

/// Designs the set's decoder for speakers at the points of `design_grid`
/// and records its |rE| at every direction of `eval_grid`.
///
/// The spherical-design problem starts from the max-rE pseudoinverse
/// decoder and aims everywhere at the full-order max-rE magnitude.
pub fn goal_re_field(
    set: &SignalSetSpec,
    design_grid: &SphericalGrid,
    eval_grid: &SphericalGrid,
    weights: &TermWeights,
    opts: &LbfgsOptions,
) -> Result<GoalField> {
    let need = 2 * set.max_degree() + 1;
    if design_grid.t_degree() < need {
        return Err(Error::GoalField(format!(
            "goal design grid '{}' has degree {} but {} needs at least {need}",
            design_grid.name(),
            design_grid.t_degree(),
            set
        )));
    }
    let array = crate::array::fixtures::from_grid(design_grid.name(), design_grid);
    let ceiling = max_re_magnitude(set.max_degree());
    let inner = TermWeights {
        sparseness: 0.0,
        ..*weights
    };
    let spec = ObjectiveSpec::uniform(inner, eval_grid.len(), array.real_count());
    let x0 = max_re_pinv_decoder(set, &array)?.matrix().clone();
    let obj = Objective::hf(set, &array, eval_grid, &vec![ceiling; eval_grid.len()], &spec)?;
    let result = run_band_limited(&obj, &x0, set, &array, opts).map_err(|e| Error::GoalField(e.to_string()))?;
    if !result.converged {
        return Err(Error::GoalField(format!(
            "spherical-design optimization for {} did not converge in {} iterations",
            set, result.iterations
        )));
    }
    let dirs = array.unit_vectors();
    let gains = result.matrix.matrix() * crate::sh::sh_matrix(set, eval_grid.directions());
    let mut goal = Vec::with_capacity(eval_grid.len());
    for j in 0..eval_grid.len() {
        let g: Vec<f64> = gains.column(j).iter().copied().collect();
        let r = energy_vector(&g, &dirs)
            .ok_or_else(|| Error::GoalField(format!("energy vanishes at grid direction {j}")))?;
        goal.push(r.magnitude.min(ceiling));
    }
    if goal.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::GoalField("goal field has non-positive entries".into()));
    }
    Ok(GoalField {
        grid_name: eval_grid.name().to_string(),
        goal,
        reference: result.matrix,
        reference_converged: result.converged,
        reference_iterations: result.iterations,
    })
}

/// High-frequency stage: bound-constrained L-BFGS on the rE objective.
pub fn optimize_hf(
    set: &SignalSetSpec,
    array: &SpeakerArray,
    grid: &SphericalGrid,
    goal: &GoalField,
    spec: &ObjectiveSpec,
    x0: &InitialGuess,
    opts: &LbfgsOptions,
) -> Result<OptimizationResult> {
    let obj = Objective::hf(set, array, grid, &goal.goal, spec)?;
    run(&obj, x0.matrix(set, array)?, set, array, Band::Hf, opts, x0.seed())
}

/// Unit rE directions of `hf` at each grid direction; the grid direction
/// itself where rE is undefined.
pub fn re_directions(hf: &DecoderMatrix, grid: &SphericalGrid) -> Vec<[f64; 3]> {
    let dirs = hf.array().unit_vectors();
    let gains = hf.matrix() * crate::sh::sh_matrix(hf.signal_set(), grid.directions());
    grid.directions()
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let g: Vec<f64> = gains.column(j).iter().copied().collect();
            match energy_vector(&g, &dirs) {
                Some(r) if r.magnitude > 0.0 => {
                    let n = r.magnitude;
                    [r.vector[0] / n, r.vector[1] / n, r.vector[2] / n]
                }
                _ => d.unit(),
            }
        })
        .collect()
}

/// Low-frequency stage: rV aligned with the high-frequency rE directions.
/// Starts from the high-frequency matrix unless `x0` is given.
pub fn optimize_lf(
    set: &SignalSetSpec,
    array: &SpeakerArray,
    grid: &SphericalGrid,
    hf: &DecoderMatrix,
    spec: &ObjectiveSpec,
    x0: Option<&InitialGuess>,
    opts: &LbfgsOptions,
) -> Result<OptimizationResult> {
    if hf.signal_set() != set || hf.array() != array {
        return Err(invalid("high-frequency decoder is for a different set or array"));
    }
    let targets = re_directions(hf, grid);
    let obj = Objective::lf(set, array, grid, &targets, spec)?;
    let (start, seed) = match x0 {
        Some(g) => (g.matrix(set, array)?, g.seed()),
        None => (hf.matrix().clone(), None),
    };
    run(&obj, start, set, array, Band::Lf, opts, seed)
}

/// Matched low- and high-frequency matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBandDecoder {
    pub lf: DecoderMatrix,
    pub hf: DecoderMatrix,
    /// Metadata only; no filtering is performed.
    pub crossover_hz: f64,
}

impl TwoBandDecoder {
    pub fn new(lf: DecoderMatrix, hf: DecoderMatrix, crossover_hz: f64) -> Result<Self> {
        if lf.signal_set() != hf.signal_set() || lf.array() != hf.array() {
            return Err(invalid("LF and HF matrices must share signal set and array"));
        }
        if lf.matrix().shape() != hf.matrix().shape() {
            return Err(invalid("LF and HF matrices differ in shape"));
        }
        Ok(Self {
            lf: lf.with_band(Band::Lf),
            hf: hf.with_band(Band::Hf),
            crossover_hz,
        })
    }

    pub fn signal_set(&self) -> &SignalSetSpec {
        self.hf.signal_set()
    }

    pub fn array(&self) -> &SpeakerArray {
        self.hf.array()
    }
}

/// Starting-point policy in a design configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartPolicy {
    #[default]
    Allrad,
    Pinv,
    Random,
}

impl std::str::FromStr for StartPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "allrad" => Ok(Self::Allrad),
            "pinv" => Ok(Self::Pinv),
            "random" => Ok(Self::Random),
            other => Err(invalid(format!("unknown starting point '{other}'"))),
        }
    }
}

/// Coverage taper settings in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageConfig {
    pub taper_start_deg: Option<f64>,
    pub taper_end_deg: Option<f64>,
    pub floor: Option<f64>,
}

impl CoverageConfig {
    pub fn params(&self) -> CoverageParams {
        CoverageParams {
            taper_start: self.taper_start_deg.map(f64::to_radians),
            taper_end: self.taper_end_deg.map(f64::to_radians),
            floor: self.floor,
        }
    }
}

/// Every setting of the two-stage pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Grid the objectives are evaluated on.
    pub grid: String,
    /// Spherical design whose decoder defines the goal field.
    pub goal_grid: String,
    pub hf_weights: TermWeights,
    pub lf_weights: TermWeights,
    pub x0: StartPolicy,
    pub seed: u64,
    pub bound: f64,
    pub optimizer: LbfgsOptions,
    pub coverage: CoverageConfig,
    pub imaginary_policy: ImaginaryPolicy,
    pub crossover_hz: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            grid: "design-5200".into(),
            goal_grid: "design-240".into(),
            hf_weights: TermWeights::default(),
            lf_weights: TermWeights::default(),
            x0: StartPolicy::Allrad,
            seed: 0,
            bound: 4.0,
            optimizer: LbfgsOptions::default(),
            coverage: CoverageConfig::default(),
            imaginary_policy: ImaginaryPolicy::Nadir,
            crossover_hz: 400.0,
        }
    }
}

impl DesignConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn initial_guess(&self) -> InitialGuess {
        match self.x0 {
            StartPolicy::Allrad => InitialGuess::Allrad(self.imaginary_policy),
            StartPolicy::Pinv => InitialGuess::Pinv,
            StartPolicy::Random => InitialGuess::Random { seed: self.seed },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::Config("bound must be positive".into()));
        }
        if !(self.crossover_hz > 0.0 && self.crossover_hz.is_finite()) {
            return Err(Error::Config("crossover_hz must be positive".into()));
        }
        if self.optimizer.memory == 0 {
            return Err(Error::Config("optimizer memory must be at least 1".into()));
        }
        Ok(())
    }
}

/// Output of [`design_two_band`] with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBandDesign {
    pub decoder: TwoBandDecoder,
    pub goal: GoalField,
    pub hf: OptimizationResult,
    pub lf: OptimizationResult,
    pub config: DesignConfig,
    pub grid_name: String,
    /// Objective of the starting matrix under the high-frequency objective.
    pub hf_start_objective: f64,
}

/// Goal field, then the high-frequency stage, then the low-frequency stage.
pub fn design_two_band(set: &SignalSetSpec, array: &SpeakerArray, config: &DesignConfig) -> Result<TwoBandDesign> {
    design_two_band_from(set, array, config, &config.initial_guess())
}

/// As [`design_two_band`] with an explicit high-frequency starting point.
pub fn design_two_band_from(
    set: &SignalSetSpec,
    array: &SpeakerArray,
    config: &DesignConfig,
    x0: &InitialGuess,
) -> Result<TwoBandDesign> {
    config.validate()?;
    let grid = SphericalGrid::resolve(&config.grid)?;
    let goal_grid = SphericalGrid::resolve(&config.goal_grid)?;
    let goal = goal_re_field(set, &goal_grid, &grid, &config.hf_weights, &config.optimizer)?;
    let coverage = coverage_weights(array, &grid, config.coverage.params());
    let spec_for = |weights: TermWeights| ObjectiveSpec {
        bound: config.bound,
        ..ObjectiveSpec::new(weights, coverage.weights.clone(), array.sparseness_weights())
    };
    let hf_spec = spec_for(config.hf_weights);
    let hf = optimize_hf(set, array, &grid, &goal, &hf_spec, x0, &config.optimizer)?;
    let lf_spec = spec_for(config.lf_weights);
    let lf = optimize_lf(set, array, &grid, &hf.matrix, &lf_spec, None, &config.optimizer)?;
    let decoder = TwoBandDecoder::new(lf.matrix.clone(), hf.matrix.clone(), config.crossover_hz)?;
    let hf_start_objective = hf.initial_terms.total;
    Ok(TwoBandDesign {
        decoder,
        goal,
        hf,
        lf,
        config: config.clone(),
        grid_name: grid.name().to_string(),
        hf_start_objective,
    })
}

/// Coverage-weighted RMS rE direction error of a decoder, in degrees.
pub fn rms_direction_error(dec: &DecoderMatrix, grid: &SphericalGrid, coverage: &[f64]) -> Result<f64> {
    let cw = crate::array::CoverageWeighting {
        weights: coverage.to_vec(),
        taper_start: 0.0,
        taper_end: 0.0,
        floor: 0.0,
    };
    Ok(evaluate_grid(dec, grid, &cw)?.stats(crate::metrics::Field::DirErrE).rms)
}

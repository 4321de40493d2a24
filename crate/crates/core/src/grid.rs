//! Spherical quadrature grids: shipped t-designs, file loading, and a
//! Fibonacci fallback.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::sh::{sh_all, Direction};

const DESIGN_240: &str = include_str!("../data/design_240_21.txt");
const DESIGN_5200: &str = include_str!("../data/design_5200_81.txt");

/// Environment variable that redirects builtin grid lookups to a directory.
pub const GRID_DIR_ENV: &str = "AMBIDEC_GRID_DIR";

const FOUR_PI: f64 = 4.0 * PI;

/// Quadrature directions and weights on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalGrid {
    name: String,
    directions: Vec<Direction>,
    weights: Vec<f64>,
    t_degree: u32,
}

/// Builtin point sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinGrid {
    /// 240-point antipodal design of degree 21.
    Design240,
    /// 5200-point antipodal design of degree 81.
    Design5200,
}

impl BuiltinGrid {
    fn file_name(self) -> &'static str {
        match self {
            BuiltinGrid::Design240 => "design_240_21.txt",
            BuiltinGrid::Design5200 => "design_5200_81.txt",
        }
    }

    fn embedded(self) -> &'static str {
        match self {
            BuiltinGrid::Design240 => DESIGN_240,
            BuiltinGrid::Design5200 => DESIGN_5200,
        }
    }
}

impl SphericalGrid {
    /// Builds a grid, checking the weight invariants.
    pub fn new(name: impl Into<String>, directions: Vec<Direction>, weights: Vec<f64>, t_degree: u32) -> Result<Self> {
        if directions.len() != weights.len() {
            return Err(invalid("grid directions and weights differ in length"));
        }
        if directions.is_empty() {
            return Err(invalid("grid has no directions"));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(invalid("grid weights must be positive and finite"));
        }
        let total: f64 = weights.iter().sum();
        if (total - FOUR_PI).abs() > 1e-9 {
            return Err(invalid(format!("grid weights sum to {total}, expected 4*pi")));
        }
        Ok(Self {
            name: name.into(),
            directions,
            weights,
            t_degree,
        })
    }

    /// Equal-weight grid over `directions`.
    pub fn equal_weights(name: impl Into<String>, directions: Vec<Direction>, t_degree: u32) -> Result<Self> {
        let n = directions.len();
        if n == 0 {
            return Err(invalid("grid has no directions"));
        }
        let w = FOUR_PI / n as f64;
        Self::new(name, directions, vec![w; n], t_degree)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Exactness degree; zero for grids without a quadrature guarantee.
    pub fn t_degree(&self) -> u32 {
        self.t_degree
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Loads one of the shipped designs, honouring `AMBIDEC_GRID_DIR`.
    pub fn builtin(which: BuiltinGrid) -> Result<Self> {
        let name = which.file_name().trim_end_matches(".txt");
        if let Ok(dir) = std::env::var(GRID_DIR_ENV) {
            let path = Path::new(&dir).join(which.file_name());
            if path.exists() {
                let text = std::fs::read_to_string(&path)?;
                return parse_grid(name, &text);
            }
            log::warn!("{GRID_DIR_ENV} set but {} not found; using embedded data", path.display());
        }
        parse_grid(name, which.embedded())
    }

    pub fn design_240() -> Self {
        Self::builtin(BuiltinGrid::Design240).expect("embedded 240-point design parses")
    }

    pub fn design_5200() -> Self {
        Self::builtin(BuiltinGrid::Design5200).expect("embedded 5200-point design parses")
    }

    /// Loads a grid file from disk.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "grid".to_string());
        parse_grid(&name, &text)
    }

    /// Resolves a grid name (`design-240`, `design-5200`, `octahedron`,
    /// `cube`, `icosahedron`, `fibonacci:<n>`) or otherwise a file path.
    pub fn resolve(spec: &str) -> Result<Self> {
        match spec.to_ascii_lowercase().as_str() {
            "design-240" | "240" => Self::builtin(BuiltinGrid::Design240),
            "design-5200" | "5200" => Self::builtin(BuiltinGrid::Design5200),
            "octahedron" => Ok(Self::octahedron()),
            "cube" => Ok(Self::cube()),
            "icosahedron" => Ok(Self::icosahedron()),
            s => {
                if let Some(n) = s.strip_prefix("fibonacci:") {
                    let n = n
                        .parse()
                        .map_err(|_| invalid(format!("bad fibonacci point count in '{spec}'")))?;
                    return Self::fibonacci(n);
                }
                Self::from_file(spec)
            }
        }
    }

    /// Fibonacci-spiral points with equal weights.
    ///
    /// These carry no exactness guarantee, so `t_degree` is 0.
    pub fn fibonacci(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(invalid(format!("fibonacci grid needs at least 4 points, got {n}")));
        }
        log::warn!("fibonacci grid with {n} points: quadrature is not exact");
        let golden = PI * (3.0 - 5f64.sqrt());
        let dirs = (0..n)
            .map(|k| {
                let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
                Direction::new(golden * k as f64, z.asin())
            })
            .collect();
        Self::equal_weights(format!("fibonacci_{n}"), dirs, 0)
    }

    /// Octahedron vertices: a 3-design.
    pub fn octahedron() -> Self {
        let v = [
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ];
        Self::from_vectors("octahedron", &v, 3)
    }

    /// Cube vertices: a 3-design.
    pub fn cube() -> Self {
        let mut v = Vec::new();
        for sx in [1.0, -1.0] {
            for sy in [1.0, -1.0] {
                for sz in [1.0, -1.0] {
                    v.push([sx, sy, sz]);
                }
            }
        }
        Self::from_vectors("cube", &v, 3)
    }

    /// Icosahedron vertices: a 5-design.
    pub fn icosahedron() -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut v = Vec::new();
        for a in [1.0, -1.0] {
            for b in [phi, -phi] {
                v.push([0.0, a, b]);
                v.push([a, b, 0.0]);
                v.push([b, 0.0, a]);
            }
        }
        Self::from_vectors("icosahedron", &v, 5)
    }

    fn from_vectors(name: &str, v: &[[f64; 3]], t: u32) -> Self {
        let dirs = v.iter().map(|u| Direction::from_vector(*u).expect("non-zero")).collect();
        Self::equal_weights(name, dirs, t).expect("polyhedron grid is valid")
    }

    /// Largest deviation of `sum_j w_j Y_lm(u_j)` from `4 pi delta_l0` over
    /// all harmonics of degree `<= degree`.
    pub fn moment_residual(&self, degree: u32) -> f64 {
        let mut total = vec![0.0; ((degree + 1) * (degree + 1)) as usize];
        for (d, w) in self.directions.iter().zip(&self.weights) {
            for (acc, y) in total.iter_mut().zip(sh_all(degree, d)) {
                *acc += w * y;
            }
        }
        total[0] -= FOUR_PI;
        total.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest deviation of the N3D Gram matrix `sum_j w_j Y_i Y_k` from
    /// `4 pi delta_ik`, over channel pairs with `l_i + l_k <= degree`.
    pub fn orthonormality_residual(&self, degree: u32) -> f64 {
        let half = degree / 2;
        let lmax = degree;
        let n_ch = ((lmax + 1) * (lmax + 1)) as usize;
        let degrees: Vec<u32> = (0..n_ch).map(|a| crate::sh::acn_to_degree_order(a).0).collect();
        let mut y = nalgebra::DMatrix::zeros(n_ch, self.len());
        for (j, (d, w)) in self.directions.iter().zip(&self.weights).enumerate() {
            let vals = sh_all(lmax, d);
            let sw = w.sqrt();
            for i in 0..n_ch {
                y[(i, j)] = vals[i] * sw;
            }
        }
        let rows_small = ((half + 1) * (half + 1)) as usize;
        let gram = y.rows(0, rows_small) * y.transpose();
        let mut worst: f64 = 0.0;
        for i in 0..rows_small {
            for k in 0..n_ch {
                if degrees[i] + degrees[k] > degree {
                    continue;
                }
                let target = if i == k { FOUR_PI } else { 0.0 };
                worst = worst.max((gram[(i, k)] - target).abs());
            }
        }
        worst
    }
}

/// Parses the grid text format: one `x y z [weight]` per line, `#` comments.
///
/// A `# degree: <t>` comment sets the exactness degree. A missing weight
/// column means equal weights; given weights are rescaled to sum to 4 pi.
pub fn parse_grid(name: &str, text: &str) -> Result<SphericalGrid> {
    let mut dirs = Vec::new();
    let mut weights: Vec<Option<f64>> = Vec::new();
    let mut degree = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(d) = comment.trim().strip_prefix("degree:") {
                degree = d.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad degree '{}'", d.trim()),
                })?;
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 or 4 numbers, found {}", fields.len()),
            });
        }
        let mut nums = [0.0; 4];
        for (k, f) in fields.iter().enumerate() {
            nums[k] = f.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid number '{f}'"),
            })?;
        }
        let v = [nums[0], nums[1], nums[2]];
        let n = crate::sh::norm3(v);
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("vector norm {n} is not 1"),
            });
        }
        dirs.push(Direction::from_vector(v).expect("unit vector"));
        weights.push((fields.len() == 4).then_some(nums[3]));
    }
    if dirs.len() < 4 {
        return Err(invalid(format!("grid '{name}' has {} points, need at least 4", dirs.len())));
    }
    let all_given = weights.iter().all(Option::is_some);
    let none_given = weights.iter().all(Option::is_none);
    if !all_given && !none_given {
        return Err(invalid(format!("grid '{name}' mixes weighted and unweighted lines")));
    }
    if none_given {
        return SphericalGrid::equal_weights(name, dirs, degree);
    }
    let raw: Vec<f64> = weights.into_iter().map(|w| w.unwrap()).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(invalid(format!("grid '{name}' weights do not sum to a positive value")));
    }
    let scaled = raw.iter().map(|w| w * FOUR_PI / total).collect();
    SphericalGrid::new(name, dirs, scaled, degree)
}

//! Loudspeaker arrays, their JSON configuration format, and coverage
//! weighting of evaluation directions.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::SphericalGrid;
use crate::sh::Direction;

/// Minimum angular separation between two real speakers.
pub const MIN_SEPARATION_DEG: f64 = 0.5;

/// One loudspeaker. Angles are kept in the degrees they were given in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speaker {
    pub id: String,
    pub az_deg: f64,
    pub el_deg: f64,
    pub radius_m: f64,
    #[serde(default = "default_sparseness_weight")]
    pub sparseness_weight: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub imaginary: bool,
}

fn default_sparseness_weight() -> f64 {
    1.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl Speaker {
    pub fn new(id: impl Into<String>, az_deg: f64, el_deg: f64) -> Self {
        Self {
            id: id.into(),
            az_deg,
            el_deg,
            radius_m: 1.0,
            sparseness_weight: 1.0,
            imaginary: false,
        }
    }

    pub fn direction(&self) -> Direction {
        Direction::from_degrees(self.az_deg, self.el_deg)
    }
}

#[derive(Serialize)]
struct ArrayFile<'a> {
    name: &'a str,
    speakers: &'a [Speaker],
}

/// A validated speaker array.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerArray {
    name: String,
    speakers: Vec<Speaker>,
    real: Vec<usize>,
    directions: Vec<Direction>,
}

/// Nearest-neighbour angular spacing between real speakers, in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingStats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl SpeakerArray {
    /// Validates and builds an array.
    pub fn new(name: impl Into<String>, speakers: Vec<Speaker>) -> Result<Self> {
        let mut ids = HashSet::new();
        for s in &speakers {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Config(format!("duplicate speaker id '{}'", s.id)));
            }
            if !s.az_deg.is_finite() || !s.el_deg.is_finite() {
                return Err(Error::Config(format!("speaker '{}': non-finite angle", s.id)));
            }
            if s.el_deg.abs() > 90.0 {
                return Err(Error::Config(format!(
                    "speaker '{}': elevation {} outside [-90, 90] degrees",
                    s.id, s.el_deg
                )));
            }
            if !(s.radius_m > 0.0) || !s.radius_m.is_finite() {
                return Err(Error::Config(format!("speaker '{}': radius must be > 0, got {}", s.id, s.radius_m)));
            }
            if !(s.sparseness_weight >= 0.0) || !s.sparseness_weight.is_finite() {
                return Err(Error::Config(format!(
                    "speaker '{}': sparseness weight must be >= 0, got {}",
                    s.id, s.sparseness_weight
                )));
            }
        }
        let real: Vec<usize> = (0..speakers.len()).filter(|&i| !speakers[i].imaginary).collect();
        if real.len() < 2 {
            return Err(Error::Config(format!("array needs at least 2 real speakers, found {}", real.len())));
        }
        let directions: Vec<Direction> = real.iter().map(|&i| speakers[i].direction()).collect();
        let min_sep = MIN_SEPARATION_DEG.to_radians();
        for a in 0..directions.len() {
            for b in (a + 1)..directions.len() {
                if directions[a].angle_to(&directions[b]) < min_sep {
                    return Err(Error::Config(format!(
                        "speakers '{}' and '{}' are closer than {MIN_SEPARATION_DEG} degrees",
                        speakers[real[a]].id, speakers[real[b]].id
                    )));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            speakers,
            real,
            directions,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Every configured speaker, imaginary ones included.
    pub fn all_speakers(&self) -> &[Speaker] {
        &self.speakers
    }

    /// Real speakers in configuration order; these are the decoder rows.
    pub fn real_speakers(&self) -> impl Iterator<Item = &Speaker> + '_ {
        self.real.iter().map(move |&i| &self.speakers[i])
    }

    pub fn real_count(&self) -> usize {
        self.real.len()
    }

    /// Directions of the real speakers.
    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    /// Unit vectors of the real speakers.
    pub fn unit_vectors(&self) -> Vec<[f64; 3]> {
        self.directions.iter().map(Direction::unit).collect()
    }

    /// Directions of speakers flagged imaginary in the configuration.
    pub fn imaginary_directions(&self) -> Vec<Direction> {
        self.speakers.iter().filter(|s| s.imaginary).map(Speaker::direction).collect()
    }

    pub fn sparseness_weights(&self) -> Vec<f64> {
        self.real_speakers().map(|s| s.sparseness_weight).collect()
    }

    pub fn spacing(&self) -> SpacingStats {
        let mut nn: Vec<f64> = self
            .directions
            .iter()
            .enumerate()
            .map(|(i, a)| {
                self.directions
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, b)| a.angle_to(b))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        nn.sort_by(f64::total_cmp);
        let n = nn.len();
        let median = if n % 2 == 1 {
            nn[n / 2]
        } else {
            0.5 * (nn[n / 2 - 1] + nn[n / 2])
        };
        SpacingStats {
            min: nn[0],
            median,
            max: nn[n - 1],
        }
    }

    /// Angle from `dir` to the nearest real speaker, in radians.
    pub fn nearest_speaker_angle(&self, dir: &Direction) -> f64 {
        self.directions
            .iter()
            .map(|d| d.angle_to(dir))
            .fold(f64::INFINITY, f64::min)
    }

    /// Same array with every speaker rotated by `r` (row-major 3x3).
    pub fn rotated(&self, r: &[[f64; 3]; 3]) -> Result<Self> {
        let speakers = self
            .speakers
            .iter()
            .map(|s| {
                let d = s.direction().rotated(r);
                Speaker {
                    az_deg: d.azimuth().to_degrees(),
                    el_deg: d.elevation().to_degrees(),
                    ..s.clone()
                }
            })
            .collect();
        Self::new(self.name.clone(), speakers)
    }

    /// Serializes to the JSON configuration format.
    pub fn to_json(&self) -> String {
        let file = ArrayFile {
            name: &self.name,
            speakers: &self.speakers,
        };
        serde_json::to_string_pretty(&file).expect("array serializes")
    }
}

const SPEAKER_FIELDS: [&str; 6] = ["id", "az_deg", "el_deg", "radius_m", "sparseness_weight", "imaginary"];

/// Parses the JSON array configuration.
pub fn parse_array_config(text: &str) -> Result<SpeakerArray> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("array config: {e}")))?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::Config("array config must be a JSON object".into()))?;
    for key in obj.keys() {
        if key != "name" && key != "speakers" {
            return Err(Error::Config(format!("array config: unknown field '{key}'")));
        }
    }
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Config("array config: missing string field 'name'".into()))?
        .to_string();
    let list = obj
        .get("speakers")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Config("array config: missing list field 'speakers'".into()))?;
    let mut speakers = Vec::with_capacity(list.len());
    for (i, entry) in list.iter().enumerate() {
        let label = entry
            .get("id")
            .and_then(Value::as_str)
            .map(|s| format!("'{s}'"))
            .unwrap_or_else(|| format!("#{i}"));
        let fields = entry
            .as_object()
            .ok_or_else(|| Error::Config(format!("speaker {label}: entry must be an object")))?;
        for key in fields.keys() {
            if !SPEAKER_FIELDS.contains(&key.as_str()) {
                return Err(Error::Config(format!("speaker {label}: unknown field '{key}'")));
            }
        }
        let speaker: Speaker =
            serde_json::from_value(entry.clone()).map_err(|e| Error::Config(format!("speaker {label}: {e}")))?;
        speakers.push(speaker);
    }
    SpeakerArray::new(name, speakers)
}

/// Taper parameters for coverage weighting. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoverageParams {
    /// Distance to the nearest speaker below which the weight is 1.
    /// Defaults to 1.5 x the median nearest-neighbour spacing.
    pub taper_start: Option<f64>,
    /// Distance beyond which the weight equals `floor`.
    /// Defaults to `taper_start` + 30 degrees.
    pub taper_end: Option<f64>,
    /// Defaults to 0.1.
    pub floor: Option<f64>,
}

/// Per-direction coverage weights for a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageWeighting {
    pub weights: Vec<f64>,
    pub taper_start: f64,
    pub taper_end: f64,
    pub floor: f64,
}

impl CoverageWeighting {
    /// Uniform weighting (every direction counts fully).
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0; n],
            taper_start: std::f64::consts::PI,
            taper_end: std::f64::consts::PI,
            floor: 1.0,
        }
    }

    /// Raised-cosine taper value for a nearest-speaker distance.
    pub fn taper(distance: f64, start: f64, end: f64, floor: f64) -> f64 {
        if distance <= start {
            1.0
        } else if distance >= end {
            floor
        } else {
            let t = (distance - start) / (end - start);
            floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
        }
    }
}

/// Weights each grid direction by its distance to the nearest real speaker.
pub fn coverage_weights(array: &SpeakerArray, grid: &SphericalGrid, params: CoverageParams) -> CoverageWeighting {
    let start = params.taper_start.unwrap_or_else(|| 1.5 * array.spacing().median);
    let end = params.taper_end.unwrap_or(start + 30f64.to_radians()).max(start);
    let floor = params.floor.unwrap_or(0.1);
    let weights = grid
        .directions()
        .iter()
        .map(|d| CoverageWeighting::taper(array.nearest_speaker_angle(d), start, end, floor))
        .collect();
    CoverageWeighting {
        weights,
        taper_start: start,
        taper_end: end,
        floor,
    }
}

/// Synthetic arrays used by tests, examples and documentation.
pub mod fixtures {
    use super::*;

    /// Eight ear-level speakers every 45 degrees plus five at 45 degrees
    /// elevation every 72 degrees.
    pub fn home_dome() -> SpeakerArray {
        let mut s = Vec::new();
        for k in 0..8 {
            s.push(Speaker::new(format!("L{}", k + 1), 45.0 * k as f64, 0.0));
        }
        for k in 0..5 {
            s.push(Speaker::new(format!("U{}", k + 1), 72.0 * k as f64, 45.0));
        }
        SpeakerArray::new("home-dome-8+5", s).expect("fixture is valid")
    }

    /// A horizontal ring of `n` equally spaced speakers.
    pub fn ring(n: usize) -> SpeakerArray {
        let s = (0..n)
            .map(|k| Speaker::new(format!("S{}", k + 1), 360.0 * k as f64 / n as f64, 0.0))
            .collect();
        SpeakerArray::new(format!("ring-{n}"), s).expect("fixture is valid")
    }

    /// Speakers placed at the points of a grid.
    pub fn from_grid(name: &str, grid: &SphericalGrid) -> SpeakerArray {
        let s = grid
            .directions()
            .iter()
            .enumerate()
            .map(|(i, d)| Speaker::new(format!("S{}", i + 1), d.azimuth().to_degrees(), d.elevation().to_degrees()))
            .collect();
        SpeakerArray::new(name, s).expect("grid points are distinct")
    }

    /// Stand-in for a 56-speaker concert dome: a 48-speaker upper dome
    /// (rings of 20, 16, 8, 4 at 0, 25, 50, 75 degrees) and a sparse,
    /// unevenly spaced ring of eight at -30 degrees.
    pub fn stage_dome() -> SpeakerArray {
        let mut s = Vec::new();
        let rings: [(usize, f64, f64); 4] = [(20, 0.0, 0.0), (16, 25.0, 11.25), (8, 50.0, 0.0), (4, 75.0, 45.0)];
        for (ri, (n, el, offset)) in rings.iter().enumerate() {
            for k in 0..*n {
                let az = offset + 360.0 * k as f64 / *n as f64;
                s.push(Speaker::new(format!("R{}S{}", ri + 1, k + 1), az, *el));
            }
        }
        let lower_az = [20.0, 60.0, 110.0, 160.0, 200.0, 250.0, 300.0, 340.0];
        for (k, az) in lower_az.iter().enumerate() {
            s.push(Speaker::new(format!("F{}", k + 1), *az, -30.0));
        }
        SpeakerArray::new("stage-48+8", s).expect("fixture is valid")
    }
}

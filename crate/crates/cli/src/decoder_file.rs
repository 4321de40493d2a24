//! JSON decoder files: both matrices plus everything needed to use and
//! reproduce them.
//!
//! Floats are written with the shortest representation that parses back to
//! the same `f64`, so reading a file and writing it again reproduces it byte
//! for byte.

use std::fs;
use std::path::Path;

use ambidec_core::array::{Speaker, SpeakerArray};
use ambidec_core::baseline::{Band, DecoderMatrix, ImaginaryPolicy};
use ambidec_core::optimize::{
    CoverageConfig, ObjectiveTerms, OptimizationResult, StopReason, TermWeights, TwoBandDecoder, TwoBandDesign,
};
use ambidec_core::sh::{Convention, Normalization, SignalSetSpec};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "ambidec";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSetRecord {
    pub name: String,
    pub order_h: u32,
    pub order_v: u32,
    pub convention: Convention,
    pub normalization: Normalization,
    /// ACN of each matrix column, in column order.
    pub acn: Vec<usize>,
}

impl SignalSetRecord {
    pub fn from_set(set: &SignalSetSpec) -> Self {
        Self {
            name: set.name(),
            order_h: set.order_h(),
            order_v: set.order_v(),
            convention: set.convention(),
            normalization: set.normalization(),
            acn: set.channels().iter().map(|c| c.acn).collect(),
        }
    }

    pub fn to_set(&self) -> CliResult<SignalSetSpec> {
        let set = SignalSetSpec::with_normalization(self.order_h, self.order_v, self.normalization)
            .map_err(|e| CliError::Config(format!("decoder file signal set: {e}")))?;
        let expected: Vec<usize> = set.channels().iter().map(|c| c.acn).collect();
        if expected != self.acn {
            return Err(CliError::Config(format!(
                "decoder file lists channels {:?}, but {} has {:?}",
                self.acn,
                set.name(),
                expected
            )));
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayRecord {
    pub name: String,
    pub speakers: Vec<Speaker>,
}

/// Summary of one optimization stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub objective: f64,
    pub terms: ObjectiveTerms,
    pub initial_terms: ObjectiveTerms,
}

impl StageRecord {
    pub fn from_result(r: &OptimizationResult) -> Self {
        Self {
            iterations: r.iterations,
            evaluations: r.evaluations,
            converged: r.converged,
            stop_reason: r.stop_reason,
            objective: r.objective,
            terms: r.terms,
            initial_terms: r.initial_terms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub seed: u64,
    pub grid: String,
    pub goal_grid: String,
    pub x0: String,
    pub bound: f64,
    pub hf_weights: TermWeights,
    pub lf_weights: TermWeights,
    pub coverage: CoverageConfig,
    pub imaginary_policy: ImaginaryPolicy,
    pub hf_stage: Option<StageRecord>,
    pub lf_stage: Option<StageRecord>,
}

/// On-disk form of a two-band decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderFile {
    pub format_version: u32,
    pub signal_set: SignalSetRecord,
    pub array: ArrayRecord,
    /// Speakers x channels, row-major.
    pub hf_matrix: Vec<Vec<f64>>,
    pub lf_matrix: Vec<Vec<f64>>,
    pub crossover_hz: f64,
    pub provenance: Provenance,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], cols: usize, what: &str) -> CliResult<DMatrix<f64>> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(CliError::Config(format!(
            "{what}: row {i} has {} entries, expected {cols}",
            r.len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

impl DecoderFile {
    /// Packs a finished design with its settings.
    pub fn from_design(design: &TwoBandDesign, x0_label: &str) -> Self {
        let cfg = &design.config;
        let provenance = Provenance {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            seed: cfg.seed,
            grid: design.grid_name.clone(),
            goal_grid: cfg.goal_grid.clone(),
            x0: x0_label.into(),
            bound: cfg.bound,
            hf_weights: cfg.hf_weights,
            lf_weights: cfg.lf_weights,
            coverage: cfg.coverage,
            imaginary_policy: cfg.imaginary_policy,
            hf_stage: Some(StageRecord::from_result(&design.hf)),
            lf_stage: Some(StageRecord::from_result(&design.lf)),
        };
        Self::from_decoder(&design.decoder, provenance)
    }

    pub fn from_decoder(dec: &TwoBandDecoder, provenance: Provenance) -> Self {
        let array = dec.array();
        Self {
            format_version: FORMAT_VERSION,
            signal_set: SignalSetRecord::from_set(dec.signal_set()),
            array: ArrayRecord {
                name: array.name().to_string(),
                speakers: array.all_speakers().to_vec(),
            },
            hf_matrix: rows(dec.hf.matrix()),
            lf_matrix: rows(dec.lf.matrix()),
            crossover_hz: dec.crossover_hz,
            provenance,
        }
    }

    /// Rescales the matrix columns so the decoder accepts signals in
    /// `target` normalization.
    pub fn with_normalization(&self, target: Normalization) -> CliResult<Self> {
        let set = self.signal_set.to_set()?;
        let from = set.normalization();
        if from == target {
            return Ok(self.clone());
        }
        let scale: Vec<f64> = set
            .channels()
            .iter()
            .map(|c| from.from_n3d_factor(c.degree) / target.from_n3d_factor(c.degree))
            .collect();
        let convert = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
            m.iter()
                .map(|r| r.iter().zip(&scale).map(|(v, s)| v * s).collect())
                .collect()
        };
        let mut out = self.clone();
        out.hf_matrix = convert(&self.hf_matrix);
        out.lf_matrix = convert(&self.lf_matrix);
        out.signal_set.normalization = target;
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("decoder file serializes");
        s.push('\n');
        s
    }

    /// Parses and validates a decoder file.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let file: DecoderFile =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("decoder file: {e}")))?;
        if file.format_version != FORMAT_VERSION {
            return Err(CliError::Config(format!(
                "decoder file format version {} is not supported (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        file.decoder()?;
        Ok(file)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        }
        fs::write(path, self.to_json()).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }

    pub fn speaker_array(&self) -> CliResult<SpeakerArray> {
        SpeakerArray::new(self.array.name.clone(), self.array.speakers.clone())
            .map_err(|e| CliError::Config(format!("decoder file array: {e}")))
    }

    /// Rebuilds the in-memory decoder pair.
    pub fn decoder(&self) -> CliResult<TwoBandDecoder> {
        let set = self.signal_set.to_set()?;
        let array = self.speaker_array()?;
        let hf = from_rows(&self.hf_matrix, set.len(), "hf_matrix")?;
        let lf = from_rows(&self.lf_matrix, set.len(), "lf_matrix")?;
        let wrap = |m: DMatrix<f64>, band: Band, what: &str| {
            DecoderMatrix::new(m, set.clone(), array.clone(), band).map_err(|e| CliError::Config(format!("{what}: {e}")))
        };
        let hf = wrap(hf, Band::Hf, "hf_matrix")?;
        let lf = wrap(lf, Band::Lf, "lf_matrix")?;
        TwoBandDecoder::new(lf, hf, self.crossover_hz).map_err(|e| CliError::Config(format!("decoder file: {e}")))
    }
}

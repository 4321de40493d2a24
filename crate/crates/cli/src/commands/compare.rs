use std::path::Path;

use ambidec_core::baseline::DecoderMatrix;
use ambidec_core::metrics::{zero_filled, GridEvaluation, RenderMetrics};
use ambidec_core::optimize::TwoBandDecoder;
use ambidec_core::sh::{Normalization, SignalSetSpec};
use serde::Serialize;

use super::{band_pair, evaluate_pair, resolve_grid, same_layout, write_text};
use crate::cli::CompareArgs;
use crate::decoder_file::DecoderFile;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub metric: &'static str,
    pub statistic: &'static str,
    pub lower_is_better: bool,
    pub a: f64,
    pub b: f64,
    /// `b - a`.
    pub delta: f64,
    pub winner: Winner,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub a_set: String,
    pub b_set: String,
    /// Signal set both decoders are fed.
    pub signal: String,
    pub grid: String,
    pub seed: u64,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "A: {} ({})\nB: {} ({})\nsignal: {}, grid: {}\n{:<16} {:<10} {:>12} {:>12} {:>12}  winner\n",
            self.a, self.a_set, self.b, self.b_set, self.signal, self.grid, "metric", "statistic", "A", "B", "B-A"
        );
        for r in &self.rows {
            let w = match r.winner {
                Winner::A => "A",
                Winner::B => "B",
                Winner::Tie => "tie",
            };
            s.push_str(&format!(
                "{:<16} {:<10} {:>12.5} {:>12.5} {:>12.5}  {w}\n",
                r.metric, r.statistic, r.a, r.b, r.delta
            ));
        }
        s
    }
}

/// Weighted statistic over directions where `f` is defined.
fn weighted(eval: &GridEvaluation, f: impl Fn(&RenderMetrics) -> Option<f64>, rms: bool) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ((m, q), c) in eval.metrics.iter().zip(&eval.quadrature).zip(&eval.coverage) {
        if let Some(v) = f(m) {
            let w = q * c;
            num += w * if rms { v * v } else { v };
            den += w;
        }
    }
    if den == 0.0 {
        return f64::NAN;
    }
    if rms {
        (num / den).sqrt()
    } else {
        num / den
    }
}

/// Weighted standard deviation divided by the weighted mean.
fn variation(eval: &GridEvaluation, f: impl Fn(&RenderMetrics) -> f64) -> f64 {
    let mean = weighted(eval, |m| Some(f(m)), false);
    let sd = weighted(eval, |m| Some(f(m) - mean), true);
    sd / mean.abs()
}

fn rows(a: &GridEvaluation, b: &GridEvaluation) -> Vec<ComparisonRow> {
    type Stat = fn(&GridEvaluation) -> f64;
    let table: [(&str, &str, bool, Stat); 8] = [
        ("dir_err_E_deg", "rms", true, |e| weighted(e, |m| m.dir_err_e_deg, true)),
        ("dir_err_V_deg", "rms", true, |e| weighted(e, |m| m.dir_err_v_deg, true)),
        ("rv_re_angle_deg", "rms", true, |e| weighted(e, |m| m.rv_re_angle_deg, true)),
        ("rE_mag", "mean", false, |e| weighted(e, |m| m.re.map(|v| v.magnitude), false)),
        ("eff_order", "mean", false, |e| weighted(e, |m| m.effective_order.map(|o| o.order), false)),
        ("rV_mag", "rms_dev_1", true, |e| weighted(e, |m| m.rv.map(|v| v.magnitude - 1.0), true)),
        ("E", "cv", true, |e| variation(e, |m| m.energy)),
        ("P", "cv", true, |e| variation(e, |m| m.pressure)),
    ];
    table
        .iter()
        .map(|(metric, statistic, lower, stat)| {
            let (va, vb) = (stat(a), stat(b));
            let delta = vb - va;
            let tol = 1e-12 * va.abs().max(vb.abs()).max(1.0);
            let winner = if !(delta.abs() > tol) {
                Winner::Tie
            } else if (delta < 0.0) == *lower {
                Winner::B
            } else {
                Winner::A
            };
            ComparisonRow {
                metric,
                statistic,
                lower_is_better: *lower,
                a: va,
                b: vb,
                delta,
                winner,
            }
        })
        .collect()
}

/// The smaller of two nested signal sets.
fn common_signal(a: &SignalSetSpec, b: &SignalSetSpec) -> CliResult<SignalSetSpec> {
    if a.contains_set(b) {
        Ok(b.clone())
    } else if b.contains_set(a) {
        Ok(a.clone())
    } else {
        Err(CliError::Config(format!("signal sets {a} and {b} are not nested")))
    }
}

fn fed(dec: &DecoderMatrix, signal: &SignalSetSpec) -> CliResult<DecoderMatrix> {
    Ok(zero_filled(dec, signal)?)
}

fn load(path: &Path) -> CliResult<TwoBandDecoder> {
    DecoderFile::read(path)?.with_normalization(Normalization::N3D)?.decoder()
}

/// Compares two decoders on the same array, feeding both the smaller of
/// their signal sets (the larger decoder's extra inputs are left silent).
pub fn compare_decoders(
    a: &TwoBandDecoder,
    b: &TwoBandDecoder,
    grid_spec: &str,
    band: crate::cli::BandArg,
) -> CliResult<(SignalSetSpec, Vec<ComparisonRow>)> {
    if !same_layout(a.array(), b.array()) {
        return Err(CliError::Config(format!(
            "decoders are for different arrays ('{}' and '{}')",
            a.array().name(),
            b.array().name()
        )));
    }
    let signal = common_signal(a.signal_set(), b.signal_set())?;
    let grid = resolve_grid(grid_spec)?;
    let coverage = Default::default();
    let eval = |d: &TwoBandDecoder| -> CliResult<GridEvaluation> {
        let (lf, hf) = band_pair(d, band);
        evaluate_pair(&fed(lf, &signal)?, &fed(hf, &signal)?, &grid, coverage)
    };
    let (ea, eb) = (eval(a)?, eval(b)?);
    Ok((signal, rows(&ea, &eb)))
}

pub fn run(args: &CompareArgs) -> CliResult<Comparison> {
    let (a, b) = (load(&args.a)?, load(&args.b)?);
    let (signal, rows) = compare_decoders(&a, &b, &args.grid, args.band)?;
    let cmp = Comparison {
        a: args.a.display().to_string(),
        b: args.b.display().to_string(),
        a_set: a.signal_set().name(),
        b_set: b.signal_set().name(),
        signal: signal.name(),
        grid: args.grid.clone(),
        seed: args.seed,
        rows,
    };
    print!("{}", cmp.table());
    if let Some(path) = &args.out {
        let mut text = serde_json::to_string_pretty(&cmp).expect("comparison serializes");
        text.push('\n');
        write_text(path, &text)?;
    }
    Ok(cmp)
}

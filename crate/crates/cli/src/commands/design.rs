use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use ambidec_core::baseline::ImaginaryPolicy;
use ambidec_core::metrics::{Field, COVERED_WEIGHT};
use ambidec_core::optimize::{
    design_two_band_from, DesignConfig, InitialGuess, ObjectiveTerms, OptimizationResult, StartPolicy, TwoBandDesign,
};
use ambidec_core::sh::{Normalization, SignalSetSpec};
use log::{info, warn};

use super::{evaluate_pair, load_array, resolve_grid, same_layout, write_heatmaps, write_text};
use crate::cli::{config_err, DesignArgs, NormalizationArg, StartArg};
use crate::decoder_file::DecoderFile;
use crate::error::{CliError, CliResult};

/// Files written by a design run.
#[derive(Debug, Clone)]
pub struct DesignOutput {
    pub decoder: PathBuf,
    pub report: PathBuf,
    pub plots: Vec<PathBuf>,
    pub file: DecoderFile,
}

/// Applies `key=value` weight overrides. Keys without an `hf.` or `lf.`
/// prefix apply to both bands.
pub fn apply_weights(config: &mut DesignConfig, pairs: &[String]) -> CliResult<()> {
    for pair in pairs.iter().filter(|p| !p.trim().is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("weight '{pair}' is not key=value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("weight '{pair}': '{value}' is not a number")))?;
        let key = key.trim();
        let (bands, name) = match key.split_once('.') {
            Some(("hf", k)) => ((true, false), k),
            Some(("lf", k)) => ((false, true), k),
            Some(_) => return Err(CliError::Config(format!("weight '{key}': prefix must be hf. or lf."))),
            None => ((true, true), key),
        };
        if bands.0 {
            config.hf_weights.set(name, value).map_err(config_err)?;
        }
        if bands.1 {
            config.lf_weights.set(name, value).map_err(config_err)?;
        }
    }
    Ok(())
}

/// Configuration file (if any) with command-line overrides applied.
pub fn build_config(args: &DesignArgs) -> CliResult<DesignConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
            DesignConfig::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => DesignConfig::default(),
    };
    if let Some(g) = &args.grid {
        config.grid = g.clone();
    }
    if let Some(g) = &args.goal_grid {
        config.goal_grid = g.clone();
    }
    match args.x0 {
        Some(StartArg::Allrad) => config.x0 = StartPolicy::Allrad,
        Some(StartArg::Pinv) => config.x0 = StartPolicy::Pinv,
        Some(StartArg::Random) => config.x0 = StartPolicy::Random,
        Some(StartArg::File) | None => {}
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    apply_weights(&mut config, &args.weights)?;
    if let Some(b) = args.sparseness_penalty {
        config.hf_weights.set("sparseness", b).map_err(config_err)?;
        config.lf_weights.set("sparseness", b).map_err(config_err)?;
    }
    if let Some(b) = args.bound {
        config.bound = b;
    }
    if let Some(n) = args.max_iterations {
        config.optimizer.max_iterations = n;
    }
    if let Some(p) = &args.imaginary {
        config.imaginary_policy = p.parse::<ImaginaryPolicy>().map_err(config_err)?;
    }
    if let Some(f) = args.crossover_hz {
        config.crossover_hz = f;
    }
    config.validate().map_err(config_err)?;
    Ok(config)
}

fn start_label(args: &DesignArgs, config: &DesignConfig) -> String {
    match (args.x0, &args.x0_file) {
        (Some(StartArg::File), Some(p)) => format!("file:{}", p.display()),
        _ => match config.x0 {
            StartPolicy::Allrad => format!("allrad({})", policy_name(config.imaginary_policy)),
            StartPolicy::Pinv => "pinv".into(),
            StartPolicy::Random => format!("random(seed={})", config.seed),
        },
    }
}

fn policy_name(p: ImaginaryPolicy) -> &'static str {
    match p {
        ImaginaryPolicy::None => "none",
        ImaginaryPolicy::Nadir => "nadir",
        ImaginaryPolicy::NadirZenith => "nadir+zenith",
    }
}

/// Runs the design command end to end.
pub fn run(args: &DesignArgs) -> CliResult<DesignOutput> {
    let set: SignalSetSpec = args.set.parse().map_err(config_err)?;
    let array = load_array(&args.array)?;
    let config = build_config(args)?;
    let x0 = match (args.x0, &args.x0_file) {
        (Some(StartArg::File), Some(path)) => {
            let start = DecoderFile::read(path)?.with_normalization(Normalization::N3D)?.decoder()?;
            if start.signal_set() != &set {
                return Err(CliError::Config(format!(
                    "starting decoder takes {}, expected {}",
                    start.signal_set(),
                    set
                )));
            }
            if !same_layout(start.array(), &array) {
                return Err(CliError::Config("starting decoder is for a different array".into()));
            }
            InitialGuess::Given(start.hf.matrix().clone())
        }
        (Some(StartArg::File), None) => return Err(CliError::Config("--x0 file needs --x0-file".into())),
        (_, Some(_)) => return Err(CliError::Config("--x0-file needs --x0 file".into())),
        _ => config.initial_guess(),
    };
    // validate grids before the expensive part
    resolve_grid(&config.grid)?;
    resolve_grid(&config.goal_grid)?;
    info!("designing {} decoder for '{}' ({} speakers)", set, array.name(), array.real_count());
    let design = design_two_band_from(&set, &array, &config, &x0)?;
    for (stage, r) in [("HF", &design.hf), ("LF", &design.lf)] {
        if !r.converged {
            warn!("{stage} stage stopped after {} iterations without converging", r.iterations);
        }
    }
    let label = start_label(args, &config);
    let target = match args.normalization {
        NormalizationArg::N3d => Normalization::N3D,
        NormalizationArg::Sn3d => Normalization::SN3D,
    };
    let file = DecoderFile::from_design(&design, &label).with_normalization(target)?;
    file.write(&args.out)?;

    let report_text = report(&design, &label)?;
    let report_path = args.report.clone().unwrap_or_else(|| args.out.with_extension("report.txt"));
    write_text(&report_path, &report_text)?;
    print!("{report_text}");

    let plots = match &args.plots_dir {
        Some(dir) => write_heatmaps(
            &design.decoder.lf,
            &design.decoder.hf,
            args.map,
            dir,
            config.seed,
            &args.out.display().to_string(),
        )?,
        None => Vec::new(),
    };
    Ok(DesignOutput {
        decoder: args.out.clone(),
        report: report_path,
        plots,
        file,
    })
}

fn terms_row(out: &mut String, label: &str, t: &ObjectiveTerms) {
    let _ = writeln!(
        out,
        "  {label:<6} total {:>12.6e}  direction {:>11.4e}  magnitude {:>11.4e}  level {:>11.4e}  tikhonov {:>11.4e}  sparseness {:>11.4e}",
        t.total, t.direction, t.magnitude, t.level, t.tikhonov, t.sparseness
    );
}

fn stage(out: &mut String, name: &str, r: &OptimizationResult) {
    let _ = writeln!(
        out,
        "{name} stage: {} after {} iterations ({} evaluations), stop: {:?}, projected gradient {:.3e}",
        if r.converged { "converged" } else { "NOT converged" },
        r.iterations,
        r.evaluations,
        r.stop_reason,
        r.projected_gradient_norm
    );
    terms_row(out, "start", &r.initial_terms);
    terms_row(out, "final", &r.terms);
    let _ = writeln!(
        out,
        "  gradient check at start: {} entries, max relative error {:.2e}",
        r.gradient_check.entries_checked, r.gradient_check.max_relative_error
    );
}

/// Human-readable summary of a design.
pub fn report(design: &TwoBandDesign, start: &str) -> CliResult<String> {
    let dec = &design.decoder;
    let set = dec.signal_set();
    let array = dec.array();
    let cfg = &design.config;
    let mut out = String::new();
    let _ = writeln!(out, "ambidec design report");
    let _ = writeln!(out, "array: {} ({} speakers)", array.name(), array.real_count());
    let _ = writeln!(
        out,
        "signal set: {} ({} channels, ACN {:?})",
        set,
        set.len(),
        set.channels().iter().map(|c| c.acn).collect::<Vec<_>>()
    );
    let _ = writeln!(
        out,
        "grid: {}, goal grid: {}, start: {}, seed: {}, bound: {}",
        design.grid_name, cfg.goal_grid, start, cfg.seed, cfg.bound
    );
    let g = &design.goal.goal;
    let (gmin, gmax) = g.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    let _ = writeln!(
        out,
        "goal |rE|: min {:.5}, mean {:.5}, max {:.5} (reference {} in {} iterations)",
        gmin,
        g.iter().sum::<f64>() / g.len() as f64,
        gmax,
        if design.goal.reference_converged { "converged" } else { "not converged" },
        design.goal.reference_iterations
    );
    stage(&mut out, "HF", &design.hf);
    stage(&mut out, "LF", &design.lf);

    let grid = resolve_grid(&cfg.grid)?;
    let eval = evaluate_pair(&dec.lf, &dec.hf, &grid, cfg.coverage.params())?;
    let covered = eval.coverage.iter().filter(|w| **w >= COVERED_WEIGHT).count();
    let _ = writeln!(out, "coverage: {covered} of {} directions fully weighted", eval.len());
    let _ = writeln!(out, "coverage-weighted metrics:");
    for f in Field::ALL {
        let s = eval.stats(f);
        let _ = writeln!(
            out,
            "  {:<16} mean {:>10.4}  rms {:>10.4}  min {:>10.4}  max {:>10.4}{}",
            f.column(),
            s.mean,
            s.rms,
            s.min,
            s.max,
            if s.missing > 0 { format!("  ({} undefined)", s.missing) } else { String::new() }
        );
    }
    Ok(out)
}

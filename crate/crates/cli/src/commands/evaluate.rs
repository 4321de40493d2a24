use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use ambidec_core::metrics::{Field, FieldStats, GridEvaluation};
use serde::Serialize;

use super::{band_pair, evaluate_pair, load_array, resolve_grid, same_layout, sidecar_path, write_heatmaps, write_text};
use crate::cli::{BandArg, EvaluateArgs};
use crate::decoder_file::DecoderFile;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct EvaluateOutput {
    pub csv: PathBuf,
    pub meta: PathBuf,
    pub plots: Vec<PathBuf>,
    pub evaluation: GridEvaluation,
}

#[derive(Serialize)]
struct Meta<'a> {
    decoder: String,
    grid: &'a str,
    rows: usize,
    band: &'static str,
    seed: u64,
    tool_version: &'static str,
    summary: Vec<(&'static str, FieldStats)>,
}

fn band_name(b: BandArg) -> &'static str {
    match b {
        BandArg::TwoBand => "two-band",
        BandArg::Lf => "lf",
        BandArg::Hf => "hf",
    }
}

pub fn run(args: &EvaluateArgs) -> CliResult<EvaluateOutput> {
    let file = DecoderFile::read(&args.decoder)?;
    let dec = file.decoder()?;
    if let Some(path) = &args.array {
        let array = load_array(path)?;
        if !same_layout(&array, dec.array()) {
            return Err(CliError::Config(format!(
                "decoder {} was made for array '{}', which does not match {}",
                args.decoder.display(),
                dec.array().name(),
                path.display()
            )));
        }
    }
    let grid = resolve_grid(&args.grid)?;
    let (lf, hf) = band_pair(&dec, args.band);
    let eval = evaluate_pair(lf, hf, &grid, file.provenance.coverage.params())?;

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    }
    let out = File::create(&args.out).map_err(|e| CliError::io(format!("writing {}", args.out.display()), e))?;
    eval.write_csv(BufWriter::new(out))?;

    let meta = Meta {
        decoder: args.decoder.display().to_string(),
        grid: grid.name(),
        rows: eval.len(),
        band: band_name(args.band),
        seed: args.seed,
        tool_version: crate::decoder_file::TOOL_VERSION,
        summary: Field::ALL.iter().map(|f| (f.column(), *eval.stats(*f))).collect(),
    };
    let meta_path = sidecar_path(&args.out);
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    write_text(&meta_path, &text)?;

    for f in Field::ALL {
        let s = eval.stats(f);
        println!("{:<16} mean {:>10.4}  rms {:>10.4}  min {:>10.4}  max {:>10.4}", f.column(), s.mean, s.rms, s.min, s.max);
    }

    let plots = match &args.plots_dir {
        Some(dir) => write_heatmaps(lf, hf, args.map, dir, args.seed, &args.decoder.display().to_string())?,
        None => Vec::new(),
    };
    Ok(EvaluateOutput {
        csv: args.out.clone(),
        meta: meta_path,
        plots,
        evaluation: eval,
    })
}

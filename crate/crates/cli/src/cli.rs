//! Argument definitions and subcommand dispatch.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use npcolor::calibration::{build_reference, recalibrate, CalibrationReference, RampChart, RecalibrationOptions};
use npcolor::colorimetry::{delta_e2000, spectrum_to_lab};
use npcolor::gamut::{alternatives_grid, invert, GamutDefinition, GamutOptions, GridParams, HullSpace, SeparationObjective};
use npcolor::halftone::{generate_matrix, halftone, render_preview, write_png, HalftoneImage, MatrixKind, NPacImage, ThresholdMatrix};
use npcolor::neugebauer::predict_lab;
use npcolor::press::{measure, synth_np_table};
use npcolor::{Chart, Error, Lab, Metric, NPac, NpTable, Spectrum, ViewingCondition};
use serde::Serialize;

use crate::config::ServiceConfig;
use crate::files::{
    build_gamut, json_arg, load_gamut, load_press, now_rfc3339, parse_floats, parse_lab, parse_npac, parse_size,
    read_json, write_bytes, write_json,
};

#[derive(Debug, Parser)]
#[command(name = "npcolor", version, about = "Neugebauer-primary print color pipeline over a simulated press")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Press model files: NP table synthesis and drift injection.
    #[command(subcommand)]
    Press(PressCommand),
    /// Simulated chart measurement.
    #[command(subcommand)]
    Chart(ChartCommand),
    /// Predicts the Lab color of an NPac.
    Predict(PredictArgs),
    /// Inverts a Lab target into an NPac.
    Separate(SeparateArgs),
    /// Gamut construction and mesh export.
    #[command(subcommand)]
    Gamut(GamutCommand),
    /// Halftones an NPac or NPac image into an NP id raster.
    Halftone(HalftoneArgs),
    /// Renders a halftone as an sRGB PNG.
    Preview(PreviewArgs),
    /// Recalibrates a drifted press against a reference.
    Calibrate(CalibrateArgs),
    /// Spot-color alternatives.
    #[command(subcommand)]
    Spot(SpotCommand),
    /// Runs the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct PressArg {
    /// Press model JSON. `demo_cmyk.json` and `demo_8ink.json` resolve to the
    /// built-in demo presses when no such file exists.
    #[arg(long, value_name = "PATH")]
    pub press: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output file; stdout when omitted or `-`.
    #[arg(long, short, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PressCommand {
    /// Writes the full NP spectra table of a press.
    Synth {
        #[command(flatten)]
        press: PressArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Writes a copy of a press with per-channel drift gains applied.
    Drift {
        #[command(flatten)]
        press: PressArg,
        /// One gain per channel, comma-separated, each in (0, 2].
        #[arg(long, value_name = "G1,G2,...")]
        gains: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Writes one of the built-in demo presses.
    Demo {
        /// `cmyk` or `8ink`.
        #[arg(value_name = "NAME")]
        name: String,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Subcommand)]
pub enum ChartCommand {
    /// Prints a chart on the press and measures it with instrument noise.
    Measure {
        #[command(flatten)]
        press: PressArg,
        /// Chart JSON: a list of NPacs and/or `{"coverages": [...]}` patches.
        #[arg(long, value_name = "PATH")]
        chart: PathBuf,
        /// Noise seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub press: PressArg,
    /// NP table JSON to predict from instead of synthesizing one from the press.
    #[arg(long, value_name = "PATH")]
    pub table: Option<PathBuf>,
    /// NPac as JSON (`{"0":0.5,"15":0.5}`) or `@file`.
    #[arg(long)]
    pub npac: String,
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    #[command(flatten)]
    pub press: PressArg,
    /// Target as `L,a,b`.
    #[arg(long, allow_hyphen_values = true)]
    pub target: String,
    /// `min_ink`, `min_np_count`, `max_substrate`, or a JSON objective.
    #[arg(long, default_value = "min_ink")]
    pub objective: String,
    /// Gamut definition written by `gamut build`.
    #[arg(long, value_name = "PATH")]
    pub gamut: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Subcommand)]
pub enum GamutCommand {
    /// Writes a gamut definition that `--gamut` options and the service reuse.
    Build {
        #[command(flatten)]
        press: PressArg,
        /// Hull space: `yn_linear` or the approximate `lab`.
        #[arg(long, default_value = "yn_linear")]
        space: String,
        /// Target spacing of surface samples in ΔE76.
        #[arg(long, default_value_t = npcolor::gamut::DEFAULT_SAMPLE_SPACING)]
        spacing: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Writes the gamut hull as a Lab mesh.
    Export {
        #[command(flatten)]
        press: PressArg,
        /// Gamut definition written by `gamut build`.
        #[arg(long, value_name = "PATH")]
        gamut: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Args)]
pub struct HalftoneArgs {
    #[command(flatten)]
    pub press: PressArg,
    /// Constant NPac as JSON or `@file`.
    #[arg(long, conflicts_with = "image", required_unless_present = "image")]
    pub npac: Option<String>,
    /// NPac image JSON (`{"width","height","npac"}` or `{"width","height","pixels"}`).
    #[arg(long, value_name = "PATH")]
    pub image: Option<PathBuf>,
    /// Output size `WxH` for a constant NPac.
    #[arg(long, default_value = "256x256")]
    pub size: String,
    /// `bayerN`, `blueN` (blue noise), or `file:PATH` for a matrix PGM.
    #[arg(long, default_value = "blue64")]
    pub matrix: String,
    /// Blue-noise generation seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also writes the threshold matrix as PGM.
    #[arg(long, value_name = "PATH")]
    pub matrix_out: Option<PathBuf>,
    /// Halftone output: PGM when there are at most 256 NPs, else NPHT raster.
    #[arg(long, short, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    #[command(flatten)]
    pub press: PressArg,
    /// Halftone written by `halftone`.
    #[arg(long, value_name = "PATH")]
    pub halftone: PathBuf,
    /// PNG output.
    #[arg(long, short, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// The drifted press to correct.
    #[command(flatten)]
    pub press: PressArg,
    /// Reference measurements written by `--write-reference`.
    #[arg(long, value_name = "PATH", required_unless_present = "nominal")]
    pub reference: Option<PathBuf>,
    /// Nominal press to measure a fresh reference from.
    #[arg(long, value_name = "PATH", conflicts_with = "reference")]
    pub nominal: Option<PathBuf>,
    /// Saves the reference built from `--nominal`.
    #[arg(long, value_name = "PATH", requires = "nominal")]
    pub write_reference: Option<PathBuf>,
    /// Ramp steps per channel for a fresh reference.
    #[arg(long, default_value_t = npcolor::calibration::DEFAULT_RAMP_STEPS)]
    pub steps: usize,
    /// Measurements averaged per patch.
    #[arg(long, default_value_t = npcolor::calibration::DEFAULT_REPEATS)]
    pub repeats: usize,
    /// Seed for all simulated measurements.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Measurement rounds allowed.
    #[arg(long, default_value_t = npcolor::calibration::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    /// Mean chart ΔE2000 to reach.
    #[arg(long, default_value_t = npcolor::calibration::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Optional bound on the largest patch ΔE2000.
    #[arg(long)]
    pub max_threshold: Option<f64>,
    /// Timestamp stored in the LUT file; the current time when omitted.
    #[arg(long, value_name = "RFC3339")]
    pub built_at: Option<String>,
    /// LUT set output.
    #[arg(long, value_name = "PATH")]
    pub luts: PathBuf,
    /// Convergence report output; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SpotCommand {
    /// Closest surface match and its hue × lightness alternatives.
    Match {
        #[command(flatten)]
        press: PressArg,
        /// Target as `L,a,b`.
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        /// Hue steps on each side of the center.
        #[arg(long, default_value_t = 3)]
        n_h: u32,
        /// Lightness steps on each side of the center.
        #[arg(long, default_value_t = 3)]
        n_l: u32,
        /// Hue step in degrees.
        #[arg(long, default_value_t = 4.0)]
        step_h: f64,
        /// Lightness step in L* units.
        #[arg(long, default_value_t = 3.0)]
        step_l: f64,
        /// `de2000` or `de76`.
        #[arg(long, default_value = "de2000")]
        metric: String,
        /// Gamut definition written by `gamut build`.
        #[arg(long, value_name = "PATH")]
        gamut: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service config JSON; `NPCOLOR_*` environment variables override it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured listen address.
    #[arg(long, value_name = "ADDR")]
    pub listen: Option<String>,
    /// Serves static files (the refinement UI) from this directory.
    #[arg(long, value_name = "PATH")]
    pub static_dir: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    let vc = ViewingCondition::d50();
    match cli.command {
        Command::Press(cmd) => press(cmd),
        Command::Chart(ChartCommand::Measure { press, chart, seed, out }) => {
            let press = load_press(&press.press)?;
            let chart: Chart = read_json(&chart)?;
            let spectra = measure(&press, &chart, seed)?;
            let rows: Vec<Measurement> = spectra
                .into_iter()
                .map(|s| Measurement {
                    lab: spectrum_to_lab(&s, &vc),
                    spectrum: s,
                })
                .collect();
            write_json(&rows, out.out.as_deref())
        }
        Command::Predict(args) => {
            let press = load_press(&args.press.press)?;
            let table: NpTable = match &args.table {
                Some(p) => read_json(p)?,
                None => synth_np_table(&press)?,
            };
            let npac = parse_npac(&args.npac)?;
            let lab = predict_lab(&npac, &table, table.yn(), &vc)?;
            write_json(&lab, None)
        }
        Command::Separate(args) => {
            let press = load_press(&args.press.press)?;
            let target = parse_lab(&args.target)?;
            let objective = parse_objective(&args.objective)?;
            let gamut = load_gamut(&press, args.gamut.as_deref(), &vc)?;
            let npac = invert(&target, &gamut, &objective)?;
            let lab = gamut.predict_lab(&npac)?;
            write_json(
                &Separation {
                    delta_e2000: delta_e2000(&target, &lab),
                    npac,
                    lab,
                },
                args.out.out.as_deref(),
            )
        }
        Command::Gamut(GamutCommand::Build {
            press,
            space,
            spacing,
            out,
        }) => {
            let press = load_press(&press.press)?;
            let space: HullSpace = serde_json::from_value(serde_json::Value::String(space.clone()))
                .with_context(|| format!("unknown hull space {space:?}"))?;
            let options = GamutOptions {
                space,
                sample_spacing: spacing,
            };
            let gamut = build_gamut(&press, options, &vc)?;
            write_json(&GamutDefinition::of(&gamut), out.out.as_deref())
        }
        Command::Gamut(GamutCommand::Export { press, gamut, out }) => {
            let press = load_press(&press.press)?;
            let gamut = load_gamut(&press, gamut.as_deref(), &vc)?;
            write_json(&gamut.export_mesh(), out.out.as_deref())
        }
        Command::Halftone(args) => run_halftone(args),
        Command::Preview(args) => {
            let press = load_press(&args.press.press)?;
            let table = synth_np_table(&press)?;
            let file = File::open(&args.halftone).with_context(|| format!("opening {}", args.halftone.display()))?;
            let h = HalftoneImage::read(BufReader::new(file))?;
            h.validate(press.inkset())?;
            write_png(&render_preview(&h, &table, &vc)?, &args.out)?;
            Ok(())
        }
        Command::Calibrate(args) => calibrate(args, &vc),
        Command::Spot(SpotCommand::Match {
            press,
            target,
            n_h,
            n_l,
            step_h,
            step_l,
            metric,
            gamut,
            out,
        }) => {
            let press = load_press(&press.press)?;
            let target = parse_lab(&target)?;
            let metric: Metric = metric.parse()?;
            let params = GridParams { n_h, n_l, step_h, step_l };
            params.validate()?;
            let gamut = load_gamut(&press, gamut.as_deref(), &vc)?;
            write_json(&alternatives_grid(&target, &gamut, &params, &metric)?, out.out.as_deref())
        }
        Command::Serve(args) => {
            let mut config = ServiceConfig::load(args.config.as_deref())?;
            if let Some(listen) = args.listen {
                config.listen_addr = listen;
            }
            if args.static_dir.is_some() {
                config.static_dir = args.static_dir;
            }
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::service::serve(config))
        }
    }
}

#[derive(Serialize)]
struct Measurement {
    spectrum: Spectrum,
    lab: Lab,
}

#[derive(Serialize)]
struct Separation {
    npac: NPac,
    lab: Lab,
    delta_e2000: f64,
}

fn press(cmd: PressCommand) -> Result<()> {
    match cmd {
        PressCommand::Synth { press, out } => {
            let press = load_press(&press.press)?;
            write_json(&synth_np_table(&press)?, out.out.as_deref())
        }
        PressCommand::Drift { press, gains, out } => {
            let press = load_press(&press.press)?;
            write_json(&press.apply_drift(&parse_floats(&gains)?)?, out.out.as_deref())
        }
        PressCommand::Demo { name, out } => {
            let press = match name.as_str() {
                "cmyk" => npcolor::PressModel::demo_cmyk(),
                "8ink" => npcolor::PressModel::demo_8ink(),
                other => bail!("unknown demo press {other:?}; expected cmyk or 8ink"),
            };
            write_json(&press, out.out.as_deref())
        }
    }
}

pub fn parse_objective(s: &str) -> Result<SeparationObjective> {
    let trimmed = s.trim();
    if trimmed.starts_with('{') || trimmed.starts_with('@') {
        return json_arg(trimmed);
    }
    Ok(match trimmed {
        "min_ink" => SeparationObjective::min_ink(),
        "min_np_count" => SeparationObjective::MinNpCount,
        "max_substrate" => SeparationObjective::MaxSubstrate,
        other => bail!("unknown objective {other:?}"),
    })
}

/// Resolves `bayerN`, `blueN`, `blue_noiseN` (an optional `:` before N) or
/// `file:PATH`.
pub fn resolve_matrix(spec: &str, seed: u64) -> Result<ThresholdMatrix> {
    if let Some(path) = spec.strip_prefix("file:") {
        let file = File::open(path).with_context(|| format!("opening {path}"))?;
        return Ok(ThresholdMatrix::read_pgm(BufReader::new(file))?);
    }
    let split = spec
        .find(|c: char| c.is_ascii_digit())
        .with_context(|| format!("matrix {spec:?} has no size"))?;
    let (name, size) = spec.split_at(split);
    let kind = match name.trim_end_matches(':') {
        "blue" => MatrixKind::BlueNoise,
        other => other.parse::<MatrixKind>()?,
    };
    let size: u32 = size.parse().with_context(|| format!("bad matrix size in {spec:?}"))?;
    Ok(generate_matrix(kind, size, seed)?)
}

fn run_halftone(args: HalftoneArgs) -> Result<()> {
    let press = load_press(&args.press.press)?;
    let image = match (&args.npac, &args.image) {
        (Some(npac), None) => {
            let (w, h) = parse_size(&args.size)?;
            NPacImage::constant(w, h, parse_npac(npac)?)
        }
        (None, Some(path)) => read_json(path)?,
        _ => bail!("give exactly one of --npac and --image"),
    };
    image.validate(press.inkset())?;
    let matrix = resolve_matrix(&args.matrix, args.seed)?;
    if let Some(path) = &args.matrix_out {
        let mut buf = Vec::new();
        matrix.write_pgm(&mut buf)?;
        write_bytes(&buf, Some(path))?;
    }
    let out = halftone(&image, &matrix);
    let mut buf = Vec::new();
    out.write(press.inkset(), &mut buf)?;
    write_bytes(&buf, Some(&args.out))
}

fn calibrate(args: CalibrateArgs, vc: &ViewingCondition) -> Result<()> {
    let press = load_press(&args.press.press)?;
    let reference: CalibrationReference = match (&args.reference, &args.nominal) {
        (Some(path), _) => {
            let r: CalibrationReference = read_json(path)?;
            r.validate()?;
            r
        }
        (None, Some(path)) => {
            let nominal = load_press(path)?;
            let chart = RampChart {
                steps: args.steps,
                repeats: args.repeats,
            };
            let r = build_reference(&nominal, &chart, vc, args.seed)?;
            if let Some(out) = &args.write_reference {
                write_json(&r, Some(out))?;
            }
            r
        }
        (None, None) => bail!("give --reference or --nominal"),
    };
    let options = RecalibrationOptions {
        max_iters: args.max_iters,
        threshold: args.threshold,
        max_threshold: args.max_threshold,
        seed: args.seed,
        initial: None,
    };
    let built_at = match args.built_at {
        Some(t) => {
            time::OffsetDateTime::parse(&t, &time::format_description::well_known::Rfc3339)
                .with_context(|| format!("--built-at {t:?} is not RFC 3339"))?;
            t
        }
        None => now_rfc3339(),
    };
    let (report, failure) = match recalibrate(&press, &reference, vc, &options) {
        Ok(report) => (report, None),
        Err(Error::CalibrationNonConvergence(report)) => {
            let msg = Error::CalibrationNonConvergence(report.clone()).to_string();
            (*report, Some(msg))
        }
        Err(e) => return Err(e.into()),
    };
    // LUTs and report are written even when the loop fails to converge, so
    // the best correction found stays usable.
    write_json(&report.to_lut_set(press.id(), built_at), Some(&args.luts))?;
    write_json(&report, args.report.as_deref())?;
    match failure {
        Some(msg) => bail!(msg),
        None => Ok(()),
    }
}

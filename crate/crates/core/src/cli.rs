//! Command-line front end. Every command writes its primary output to `--out`
//! (or `--report`) and a [`RunManifest`] to `<output>.manifest.json`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::SpinSystemConfig;
use crate::dynamics::{linspace, nuclear_drive, rabi_trace, with_resonant_drive, Frame, PropagationSettings};
use crate::error::{Error, Result};
use crate::estimation::{
    fit_transverse_hyperfine, precision_study, read_strategies_csv, synth_sweep, write_frontier_csv, FitOptions,
    ReadoutModel, SequenceTiming, StudySettings, SweepDataset, SweepProtocol,
};
use crate::mixing::{enhancement_exact, enhancement_first_order, enhancement_full_model, EnhancementSet};
use crate::operator::Manifold;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Settings file: the flat spin-system keys plus optional `[readout]`,
/// `[sweep]` and `[timing]` tables.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RunConfig {
    pub system: SpinSystemConfig,
    pub readout: ReadoutModel,
    pub sweep: SweepProtocol,
    pub timing: SequenceTiming,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        fn section<T: for<'de> Deserialize<'de> + Default>(table: &mut toml::Table, key: &str) -> Result<T> {
            match table.remove(key) {
                Some(v) => v.try_into().map_err(|e: toml::de::Error| Error::Parse(format!("[{key}]: {e}"))),
                None => Ok(T::default()),
            }
        }
        let readout: ReadoutModel = section(&mut table, "readout")?;
        let sweep: SweepProtocol = section(&mut table, "sweep")?;
        let timing: SequenceTiming = section(&mut table, "timing")?;
        let system: SpinSystemConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        system.validate()?;
        readout.validate()?;
        Ok(Self { system, readout, sweep, timing })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::from_toml_str(&std::fs::read_to_string(p)?),
            None => Ok(Self::default()),
        }
    }
}

/// Provenance record written beside every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn write(&self) -> Result<PathBuf> {
        let path = Self::path_for(&self.outputs[0]);
        let mut f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(path)
    }
}

#[derive(Debug, Parser)]
#[command(name = "nvspin", version, about = "NV electron / 14N nuclear spin enhancement, dynamics and A_perp estimation")]
pub struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Settings file (TOML); built-in constants when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    FirstOrder,
    Exact,
    Both,
    Full,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhancement factors versus static field.
    Enhancement {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0)]
        b_field_min: f64,
        #[arg(long, default_value_t = 600.0)]
        b_field_max: f64,
        #[arg(long, default_value_t = 61)]
        b_field_steps: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
        method: MethodArg,
    },
    /// Nuclear Rabi trace in one manifold. A zero `omega_rf` in the config
    /// selects the dressed resonance.
    Rabi {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        manifold: Manifold,
        #[arg(long, default_value = "rwa")]
        frame: Frame,
        /// Static field override (G).
        #[arg(long)]
        b_field: Option<f64>,
        /// Record length (us); three Rabi periods when omitted.
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long, default_value_t = 120)]
        points: usize,
        /// Lab-frame step (us); the stability bound when omitted.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Synthetic shot-noise amplitude-sweep dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Readout settings file; the `[readout]` table of `--config` otherwise.
        #[arg(long)]
        readout: Option<PathBuf>,
        #[arg(long)]
        b_field: Option<f64>,
        #[arg(long)]
        repetitions: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Global fit of an amplitude-sweep dataset for the transverse hyperfine coupling.
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// JSON fit report.
        #[arg(long)]
        report: PathBuf,
        /// Field the data were taken at (G); the config value otherwise.
        #[arg(long)]
        b_field: Option<f64>,
        #[arg(long, default_value_t = 2.5)]
        a_perp_start: f64,
    },
    /// Monte-Carlo precision versus measurement time.
    Precision {
        #[command(flatten)]
        common: Common,
        /// CSV `repetitions,amplitudes,points,periods`.
        #[arg(long)]
        strategies: PathBuf,
        #[arg(long)]
        b_field: Option<f64>,
        #[arg(long, default_value_t = 100)]
        mc_seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Enhancement { .. } => "enhancement",
            Command::Rabi { .. } => "rabi",
            Command::Synth { .. } => "synth",
            Command::Fit { .. } => "fit",
            Command::Precision { .. } => "precision",
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let arguments = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match cli.threads {
        Some(0) => Err(Error::InvalidConfig("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))
            .and_then(|pool| pool.install(|| execute(&cli.command, arguments))),
        None => execute(&cli.command, arguments),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("nvspin {}: {e}", cli.command.name());
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn manifest(command: &Command, arguments: Vec<String>, config: &impl Serialize, seed: Option<u64>, out: &Path) -> Result<()> {
    let timestamp_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    RunManifest {
        command: command.name().to_string(),
        arguments,
        config: serde_json::to_value(config)?,
        seed,
        outputs: vec![out.to_path_buf()],
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp_unix,
    }
    .write()?;
    Ok(())
}

fn execute(command: &Command, arguments: Vec<String>) -> Result<()> {
    match command {
        Command::Enhancement { common, b_field_min, b_field_max, b_field_steps, method } => {
            let rc = RunConfig::load(common.config.as_deref())?;
            let fields = field_grid(*b_field_min, *b_field_max, *b_field_steps)?;
            write_enhancement_csv(&rc.system, &fields, *method, create(&common.out)?)?;
            manifest(command, arguments, &rc.system, None, &common.out)
        }
        Command::Rabi { common, manifold, frame, b_field, tmax, points, dt } => {
            let rc = RunConfig::load(common.config.as_deref())?;
            if *points < 8 {
                return Err(Error::InvalidConfig(format!("--points {points} is below 8")));
            }
            let mut c = rc.system;
            if let Some(b) = b_field {
                c.b_z = *b;
            }
            if c.omega_rf == 0.0 {
                c = with_resonant_drive(&c, *manifold)?;
            }
            let t_max = match tmax {
                Some(t) if *t > 0.0 => *t,
                Some(t) => return Err(Error::InvalidConfig(format!("--tmax {t} must be positive"))),
                None => 3.0 / nuclear_drive(&c, *manifold)?.generalized(),
            };
            let mut settings = PropagationSettings::for_config(&c);
            if let Some(step) = dt {
                settings.dt = *step;
            }
            let trace = rabi_trace(&c, *manifold, &linspace(t_max, *points), *frame, &settings)?;
            trace.write_csv(create(&common.out)?)?;
            manifest(command, arguments, &c, None, &common.out)
        }
        Command::Synth { common, readout, b_field, repetitions, seed } => {
            let mut rc = RunConfig::load(common.config.as_deref())?;
            if let Some(p) = readout {
                rc.readout = ReadoutModel::load(p)?;
            }
            if let Some(r) = repetitions {
                rc.readout.repetitions = *r;
            }
            if let Some(b) = b_field {
                rc.system.b_z = *b;
            }
            let data = synth_sweep(&rc.system, &rc.sweep, &rc.readout, *seed)?;
            data.write_csv(create(&common.out)?)?;
            manifest(command, arguments, &rc, Some(*seed), &common.out)
        }
        Command::Fit { config, data, report, b_field, a_perp_start } => {
            let rc = RunConfig::load(config.as_deref())?;
            let b_z = b_field.unwrap_or(rc.system.b_z);
            let dataset = SweepDataset::read_csv(File::open(data)?, b_z)?;
            let options = FitOptions { a_perp_start: *a_perp_start, ..Default::default() };
            let fit = fit_transverse_hyperfine(&dataset, &rc.system, &options)?;
            let mut w = create(report)?;
            w.write_all(fit.to_json().as_bytes())?;
            w.write_all(b"\n")?;
            w.flush()?;
            manifest(command, arguments, &rc.system.with_field(b_z), None, report)
        }
        Command::Precision { common, strategies, b_field, mc_seeds, seed } => {
            let mut rc = RunConfig::load(common.config.as_deref())?;
            if let Some(b) = b_field {
                rc.system.b_z = *b;
            }
            let list = read_strategies_csv(File::open(strategies)?)?;
            let settings = StudySettings {
                b1_max: rc.sweep.b1_max,
                manifolds: rc.sweep.manifolds.clone(),
                detunings: rc.sweep.detunings,
                seeds: *mc_seeds,
                timing: rc.timing,
                fit: FitOptions::default(),
            };
            let rows = precision_study(&list, &rc.system, &rc.readout, &settings, *seed)?;
            write_frontier_csv(&rows, create(&common.out)?)?;
            manifest(command, arguments, &rc, Some(*seed), &common.out)
        }
    }
}

/// `steps` evenly spaced fields from `min` to `max` inclusive.
pub fn field_grid(min: f64, max: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 || !min.is_finite() || !max.is_finite() || max < min || (steps > 1 && max == min) {
        return Err(Error::InvalidConfig(format!("empty field range {min}..{max} with {steps} steps")));
    }
    if steps == 1 {
        return Ok(vec![min]);
    }
    Ok((0..steps).map(|k| min + (max - min) * k as f64 / (steps - 1) as f64).collect())
}

/// Writes `bz_gauss,alpha_p1,alpha_0,alpha_m1,method` rows; `Both` emits a
/// first-order and an exact row per field.
pub fn write_enhancement_csv<W: Write>(config: &SpinSystemConfig, fields: &[f64], method: MethodArg, out: W) -> Result<()> {
    let methods: &[fn(&SpinSystemConfig) -> Result<EnhancementSet>] = match method {
        MethodArg::FirstOrder => &[enhancement_first_order],
        MethodArg::Exact => &[enhancement_exact],
        MethodArg::Both => &[enhancement_first_order, enhancement_exact],
        MethodArg::Full => &[enhancement_full_model],
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bz_gauss", "alpha_p1", "alpha_0", "alpha_m1", "method"])?;
    for &b in fields {
        let c = config.with_field(b);
        for f in methods {
            let set = f(&c)?;
            let [p1, z, m1] = set.as_array();
            w.write_record([
                format!("{b}"),
                format!("{p1:.12e}"),
                format!("{z:.12e}"),
                format!("{m1:.12e}"),
                set.method.as_str().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

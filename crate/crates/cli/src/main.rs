//! Command-line front end: BER and sum-rate sweeps, complexity tables,
//! validation suites, AO traces and channel fixtures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rislink_core::channel::{draw_channels, draw_geometry, write_channel_dump};
use rislink_core::complexity::table_csv;
use rislink_core::config::{seeded_rng, OpCounter, SystemConfig};
use rislink_core::harness::{
    checks, config_at_power, rows_to_csv, run_sumrate_sweep, run_sweep, CsiMode, Scheme,
    SweepSpec,
};
use rislink_core::ris::{alternating_optimize, trace_to_csv, DesignChannels};

#[derive(Parser)]
#[command(name = "rislink", version, about = "RIS-assisted multiuser uplink link-level simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Path to a TOML scenario file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: fig2 (passive) or fig3 (active).
    #[arg(long)]
    preset: Option<String>,
    /// Override the RNG seed from the scenario.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> rislink_core::Result<SystemConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), None) => SystemConfig::from_file(path)?,
            (None, Some(name)) => SystemConfig::preset(name)?,
            (None, None) => SystemConfig::preset("fig2")?,
            (Some(_), Some(_)) => unreachable!("clap enforces exclusivity"),
        };
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Scheme: lmmse-wo-ris, lmmse-p-ris, lmmse-a-ris, idd-wo-ris,
    /// idd-p-ris, idd-a-ris.
    #[arg(long)]
    scheme: String,
    /// Detector/decoder exchanges (IDD schemes).
    #[arg(long, default_value_t = 3)]
    tau: usize,
    /// Channel knowledge: perfect or estimated.
    #[arg(long, default_value = "perfect")]
    csi: String,
    /// Power grid P_T/K in dBm: start:step:count.
    #[arg(long, default_value = "0:2:8")]
    powers: String,
    /// Stop a point after this many final-round bit errors.
    #[arg(long, default_value_t = 100)]
    min_errors: u64,
    /// Hard per-point block cap.
    #[arg(long, default_value_t = 2000)]
    max_blocks: u64,
    /// Pilot repetitions for estimated CSI.
    #[arg(long, default_value_t = 4)]
    pilot_len: usize,
    /// Estimation noise, dBm.
    #[arg(long, default_value_t = -125.0)]
    est_noise_dbm: f64,
    /// Disable the worker pool (output is identical either way).
    #[arg(long)]
    serial: bool,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_grid(text: &str) -> rislink_core::Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(rislink_core::Error::Config(
            "power grid must be start:step:count".into(),
        ));
    }
    let start: f64 = parts[0]
        .parse()
        .map_err(|_| rislink_core::Error::Config("bad grid start".into()))?;
    let step: f64 = parts[1]
        .parse()
        .map_err(|_| rislink_core::Error::Config("bad grid step".into()))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| rislink_core::Error::Config("bad grid count".into()))?;
    if step <= 0.0 {
        return Err(rislink_core::Error::Config("grid step must be > 0".into()));
    }
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

impl SweepArgs {
    fn build(&self) -> rislink_core::Result<(SweepSpec, SystemConfig)> {
        let cfg = self.scenario.load()?;
        let mut spec = SweepSpec::new(
            parse_grid(&self.powers)?,
            Scheme::parse(&self.scheme)?,
            self.tau,
        );
        spec.csi = CsiMode::parse(&self.csi)?;
        spec.min_errors = self.min_errors;
        spec.max_blocks = self.max_blocks;
        spec.rng_seed = cfg.rng_seed;
        spec.parallel = !self.serial;
        spec.pilot_len = self.pilot_len;
        spec.est_noise_dbm = self.est_noise_dbm;
        Ok((spec, cfg))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo BER sweep over transmit power per user.
    Ber(SweepArgs),
    /// Sum-rate sweep (no coding stage; max-blocks sets the trial count).
    Sumrate(SweepArgs),
    /// Closed-form flop table for the reflection-design methods.
    Complexity {
        #[arg(long, default_value_t = 12)]
        users: usize,
        #[arg(long, default_value_t = 32)]
        antennas: usize,
        #[arg(long, default_value_t = 64)]
        elements: usize,
        #[arg(long, default_value_t = 5)]
        iterations: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Oracle suites: eq22, stationarity, truncation, complexity, ldpc, all.
    Validate {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// One alternating-optimization run with its objective trace as CSV.
    Aotrace {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Per-user transmit power P_T/K, dBm.
        #[arg(long, default_value_t = 10.0)]
        power: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One channel realization written as a binary fixture.
    Dumpchannels {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> rislink_core::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run() -> rislink_core::Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ber(args) => {
            let (spec, cfg) = args.build()?;
            let rows = run_sweep(&spec, &cfg)?;
            emit(&rows_to_csv(&rows), args.out.as_ref())?;
        }
        Command::Sumrate(args) => {
            let (mut spec, cfg) = args.build()?;
            // The default error cap is meaningless here; blocks count trials.
            if spec.max_blocks == 2000 {
                spec.max_blocks = 200;
            }
            let rows = run_sumrate_sweep(&spec, &cfg)?;
            emit(&rows_to_csv(&rows), args.out.as_ref())?;
        }
        Command::Complexity {
            users,
            antennas,
            elements,
            iterations,
            out,
        } => {
            emit(&table_csv(users, antennas, elements, iterations), out.as_ref())?;
        }
        Command::Validate { suite } => {
            let results = checks::run_suite(&suite)?;
            let mut all_pass = true;
            for r in &results {
                println!(
                    "{} {}: {}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                all_pass &= r.pass;
            }
            return Ok(all_pass);
        }
        Command::Aotrace {
            scenario,
            power,
            out,
        } => {
            let base = scenario.load()?;
            let scheme = match base.ris_mode {
                rislink_core::config::RisMode::Active => Scheme::IddARis,
                rislink_core::config::RisMode::Passive => Scheme::IddPRis,
                rislink_core::config::RisMode::None => Scheme::IddWoRis,
            };
            let cfg = config_at_power(&base, scheme, power)?;
            let mut rng = seeded_rng(cfg.rng_seed, 0);
            let geom = draw_geometry(&cfg, &mut rng);
            let cs = draw_channels(&geom, &cfg, &mut rng)?;
            let dc = DesignChannels::from_true(&cs);
            let mut ops = OpCounter::new();
            let result = alternating_optimize(&dc, &cfg, &mut ops)?;
            emit(&trace_to_csv(&result.trace), out.as_ref())?;
        }
        Command::Dumpchannels { scenario, out } => {
            let cfg = scenario.load()?;
            let mut rng = seeded_rng(cfg.rng_seed, 0);
            let geom = draw_geometry(&cfg, &mut rng);
            let cs = draw_channels(&geom, &cfg, &mut rng)?;
            write_channel_dump(&out, &cs)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

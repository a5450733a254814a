use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tankguard::adversary::AttackMode;
use tankguard::detector::ThresholdVector;
use tankguard::keystream::period;
use tankguard::scenario::{run_calibration, run_scenario, run_scenario_with_thresholds, ScenarioConfig};
use tankguard::signed_permutation::{codebook, codebook_size};
use tankguard::Error;

#[derive(Parser)]
#[command(name = "tankguard", version, about = "Three-tank replay-attack simulation with coded sensor links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file (TOML with dotted keys); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for plant noise and packet loss.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the healthy phase and write thresholds.txt.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the full scenario and write run.csv, summary.txt, capture.csv and plot data.
    Run {
        #[command(flatten)]
        common: Common,
        /// none, replay_payload, replay_packet or bias_injection.
        #[arg(long)]
        attack: Option<AttackMode>,
        /// Use these thresholds instead of calibrating in-run.
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Print the period of the keystream modulo m.
    Period {
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, default_value_t = 48)]
        modulus: u64,
    },
    /// List the signed permutations of dimension n in canonical order.
    Codebook {
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Print only this index.
        #[arg(long)]
        index: Option<u64>,
    },
}

fn load(common: &Common) -> tankguard::Result<(ScenarioConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn execute(cli: Cli) -> tankguard::Result<()> {
    match cli.command {
        Command::Calibrate { common } => {
            let (cfg, out) = load(&common)?;
            let thresholds = run_calibration(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("thresholds.txt");
            thresholds.save(&path)?;
            print!("{}", thresholds.to_text());
            eprintln!("wrote {}", path.display());
        }
        Command::Run {
            common,
            attack,
            thresholds,
        } => {
            let (mut cfg, out) = load(&common)?;
            if let Some(mode) = attack {
                cfg.attack.mode = mode;
                cfg.attack.validate()?;
            }
            let log = match thresholds {
                Some(path) => run_scenario_with_thresholds(&cfg, ThresholdVector::load(&path)?)?,
                None => run_scenario(&cfg)?,
            };
            log.write_all(&out)?;
            print!("{}", log.summary.to_text());
            eprintln!("wrote {}", out.display());
        }
        Command::Period { p, modulus } => {
            println!("{}", period(p, modulus)?);
        }
        Command::Codebook { n, index } => {
            let size = codebook_size(n)?;
            match index {
                Some(k) => {
                    let g = tankguard::signed_permutation::SignedPermutation::unrank(
                        tankguard::signed_permutation::CodebookIndex(k),
                        n,
                    )?;
                    println!("{k} {g}");
                }
                None => {
                    for (k, g) in codebook(n)?.enumerate() {
                        println!("{k} {g}");
                    }
                    eprintln!("{size} elements");
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_)
                | Error::InvalidDimension(_)
                | Error::InvalidModulus(_)
                | Error::IndexOutOfRange { .. }
                | Error::NotPurelyPeriodic { .. } => 2,
                Error::NumericalFailure(_) | Error::Calibration(_) => 3,
                _ => 1,
            })
        }
    }
}

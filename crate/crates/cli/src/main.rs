use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ouve_cli::commands::{
    cmd_bench, cmd_enhance, cmd_eval, cmd_mix, cmd_simulate, cmd_train, default_grid, parse_grid, ModelSource,
    SimulateOptions,
};
use ouve_cli::config::{RunConfig, SEED_ENV};
use ouve_core::score::WEIGHTS_VERSION;
use ouve_core::{Error, ErrorClass};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

/// Score-based diffusion speech enhancement.
///
/// Settings are layered: built-in defaults, then OUVE_SEED, then the file
/// given with --config, then flags.
#[derive(Debug, Parser)]
#[command(name = "ouve", disable_version_flag = true)]
struct Cli {
    /// Print the weights format version and the configuration defaults.
    #[arg(long)]
    version: bool,
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Extra `key=value` setting; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Sampler kind: pc or ode.
    #[arg(long, global = true)]
    sampler: Option<String>,
    /// Predictor steps of the pc sampler.
    #[arg(long = "N", global = true)]
    n_steps: Option<usize>,
    /// Langevin corrector steps per predictor step.
    #[arg(long, global = true)]
    corrector_steps: Option<usize>,
    /// Langevin step-size parameter r.
    #[arg(long, global = true)]
    snr_r: Option<f64>,
    /// Absolute tolerance of the ode sampler.
    #[arg(long, global = true)]
    atol: Option<f64>,
    /// Relative tolerance of the ode sampler.
    #[arg(long, global = true)]
    rtol: Option<f64>,
    /// Root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the full g^2 in the probability-flow drift instead of g^2 / 2.
    #[arg(long = "ode-paper-eq15", global = true)]
    ode_full_g2: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scalar forward and reverse paths and SNR-of-mean curves per gamma.
    Simulate {
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.5, 5.0])]
        gamma: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        n_paths: usize,
    },
    /// Render a manifest into clean/, noisy/ and noise/ WAV folders.
    Mix { manifest: PathBuf, out_dir: PathBuf },
    /// Train the score network on a mixed dataset.
    Train {
        dataset_dir: PathBuf,
        out_weights: PathBuf,
        /// Passes over the dataset; defaults to the configured step count.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Write per-step losses here.
        #[arg(long, value_name = "CSV")]
        loss_csv: Option<PathBuf>,
    },
    /// Enhance one WAV file.
    Enhance {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, conflicts_with = "oracle_x0")]
        weights: Option<PathBuf>,
        /// Use the analytic score of this clean reference (validation only).
        #[arg(long, value_name = "CLEAN_WAV")]
        oracle_x0: Option<PathBuf>,
    },
    /// Score enhanced files against references.
    Eval {
        est_dir: PathBuf,
        ref_dir: PathBuf,
        out_csv: PathBuf,
        /// Folder of noise files enabling SI-SIR, SI-SAR and SNR gain.
        #[arg(long)]
        noise_dir: Option<PathBuf>,
    },
    /// Sweep sampler configurations over a dataset.
    Bench {
        dataset_dir: PathBuf,
        out_csv: PathBuf,
        /// One configuration per line of `key=value` settings.
        #[arg(long, value_name = "FILE")]
        grid: Option<PathBuf>,
        #[arg(long, conflicts_with = "oracle")]
        weights: Option<PathBuf>,
        /// Use each item's analytic score (validation only).
        #[arg(long)]
        oracle: bool,
    },
}

impl Cli {
    fn overrides(&self) -> Result<Vec<(&str, String)>, Error> {
        let mut out: Vec<(&str, String)> = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            out.push((k.trim(), v.to_string()));
        }
        let mut push = |k, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        push("sampler", self.sampler.clone());
        push("n_steps", self.n_steps.map(|v| v.to_string()));
        push("corrector_steps", self.corrector_steps.map(|v| v.to_string()));
        push("snr_r", self.snr_r.map(|v| v.to_string()));
        push("atol", self.atol.map(|v| v.to_string()));
        push("rtol", self.rtol.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("ode_half_factor", self.ode_full_g2.then(|| "false".to_string()));
        if let Some(Command::Train { lr: Some(lr), .. }) = &self.command {
            out.push(("lr", lr.to_string()));
        }
        Ok(out)
    }
}

fn print_version() {
    println!("ouve {}", env!("CARGO_PKG_VERSION"));
    println!("weights format version {WEIGHTS_VERSION}");
    println!();
    println!("# configuration defaults");
    print!("{}", RunConfig::default().render());
}

fn run(cli: &Cli) -> Result<(), Error> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let cfg = RunConfig::resolve(cli.config.as_deref(), env_seed.as_deref(), &cli.overrides()?)?;
    let Some(command) = &cli.command else {
        return Err(Error::Config("no subcommand given; see --help".into()));
    };
    match command {
        Command::Simulate {
            out_dir,
            gamma,
            n_paths,
        } => {
            let opts = SimulateOptions {
                gammas: gamma.clone(),
                n_paths: *n_paths,
                ..SimulateOptions::default()
            };
            for c in cmd_simulate(&cfg, &opts, out_dir)? {
                let end = c.snr_db.last().copied().unwrap_or(f64::NAN);
                println!(
                    "gamma={} snr_of_mean(T)={end:.3} dB mixture={:.3} dB mismatch={:.3} dB reverse mean={:.4} (mu {:.4}) std={:.4} (sigma {:.4})",
                    c.gamma,
                    c.mixture_snr_db,
                    end - c.mixture_snr_db,
                    c.reverse_mean,
                    c.mean_t_eps,
                    c.reverse_std,
                    c.sigma_t_eps
                );
            }
        }
        Command::Mix { manifest, out_dir } => {
            let s = cmd_mix(manifest, out_dir)?;
            println!("wrote {} items to {}", s.items, out_dir.display());
            if s.clipped > 0 {
                eprintln!("warning: {} samples clipped", s.clipped);
            }
        }
        Command::Train {
            dataset_dir,
            out_weights,
            epochs,
            loss_csv,
            ..
        } => {
            let report = cmd_train(&cfg, dataset_dir, *epochs, out_weights, loss_csv.as_deref(), |step, loss| {
                if step % 50 == 0 {
                    eprintln!("step {step:5} loss {loss:.6}");
                }
            })?;
            let w = 50.min(report.losses.len()).max(1);
            println!(
                "trained {} steps: smoothed loss {:.6} -> {:.6}; weights in {}",
                report.losses.len(),
                report.initial_smoothed(w),
                report.final_smoothed(w),
                out_weights.display()
            );
        }
        Command::Enhance {
            input,
            output,
            weights,
            oracle_x0,
        } => {
            let source = match (oracle_x0, weights.as_ref().or(cfg.weights.as_ref())) {
                (Some(clean), _) => ModelSource::Oracle(clean.clone()),
                (None, Some(w)) => ModelSource::Weights(w.clone()),
                (None, None) => return Err(Error::Config("enhance needs --weights or --oracle-x0".into())),
            };
            if let ModelSource::Oracle(_) = source {
                eprintln!("oracle mode: the score is built from the clean reference (validation only)");
            }
            let r = cmd_enhance(&cfg, input, &source, output)?;
            println!(
                "model={} sampler={} {} nfe={} wall={:.3}s rtf={:.3}",
                r.model,
                cfg.sampler.kind.as_str(),
                cfg.sampler.settings(),
                r.stats.nfe,
                r.stats.wall_time,
                r.stats.rtf
            );
            if r.clipped > 0 {
                eprintln!("warning: {} samples clipped", r.clipped);
            }
        }
        Command::Eval {
            est_dir,
            ref_dir,
            out_csv,
            noise_dir,
        } => {
            let rows = cmd_eval(est_dir, ref_dir, noise_dir.as_deref(), out_csv)?;
            let mean = rows.iter().map(|r| r.si_sdr).sum::<f64>() / rows.len() as f64;
            println!("scored {} files, mean SI-SDR {mean:.3} dB", rows.len());
        }
        Command::Bench {
            dataset_dir,
            out_csv,
            grid,
            weights,
            oracle,
        } => {
            let grid = match grid {
                Some(path) => parse_grid(&std::fs::read_to_string(path)?, &cfg)?,
                None => default_grid(&cfg.sampler),
            };
            let weights = if *oracle { None } else { weights.as_ref().or(cfg.weights.as_ref()) };
            if weights.is_none() && !oracle {
                return Err(Error::Config("bench needs --weights or --oracle".into()));
            }
            let rows = cmd_bench(&cfg, dataset_dir, &grid, weights.map(|p| p.as_path()), out_csv)?;
            for r in &rows {
                println!(
                    "{} [{}] {} nfe={} rtf={:.3} si_sdr={:.3} ({})",
                    r.sampler, r.settings, r.file, r.nfe, r.rtf, r.si_sdr, r.model
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if cli.version {
        print_version();
        return ExitCode::SUCCESS;
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => EXIT_USAGE,
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Numerical => EXIT_NUMERICAL,
            })
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use permdiag_cli::config::BikeShareSection;
use permdiag_cli::{run, CliError, ExperimentConfig, Preset};

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replicate count.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use the larger replicate counts and sample sizes.
    #[arg(long, global = true)]
    full: bool,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Mean importance ranks on the ten-feature benchmark.
    #[command(name = "fig1_ranks")]
    Fig1Ranks,
    /// Rank of the correlated pair over correlation and sample size.
    #[command(name = "fig2_grid")]
    Fig2Grid,
    /// Partial dependence and ICE curves with support masks.
    #[command(name = "fig3_effects")]
    Fig3Effects,
    /// Averaged forest over the unit square.
    #[command(name = "fig4_contour")]
    Fig4Contour,
    /// Conditional and refitting importance measures.
    #[command(name = "fig5_alternatives")]
    Fig5Alternatives,
    /// Spread of replicate networks over the unit square.
    #[command(name = "fig6_nn_variance")]
    Fig6NnVariance,
    /// OOB against permute-and-relearn ranks on bike-share data.
    #[command(name = "fig7_bikeshare")]
    Fig7Bikeshare {
        /// Hourly bike-share CSV.
        #[arg(long)]
        data: PathBuf,
        /// Rows to keep; defaults to 4000 unless --full.
        #[arg(long)]
        subsample: Option<usize>,
    },
    /// Closed-form checks on linear models; exits 3 if any fails.
    #[command(name = "theorem_check")]
    TheoremCheck,
    /// Run the preset described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Parser)]
#[command(name = "permdiag", version, about = "Run permutation-importance experiments")]
struct Parsed {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

fn build(command: Command, o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match command {
        Command::Run { config } => ExperimentConfig::load(&config)?,
        Command::Fig1Ranks => ExperimentConfig::new(Preset::Fig1Ranks),
        Command::Fig2Grid => ExperimentConfig::new(Preset::Fig2Grid),
        Command::Fig3Effects => ExperimentConfig::new(Preset::Fig3Effects),
        Command::Fig4Contour => ExperimentConfig::new(Preset::Fig4Contour),
        Command::Fig5Alternatives => ExperimentConfig::new(Preset::Fig5Alternatives),
        Command::Fig6NnVariance => ExperimentConfig::new(Preset::Fig6NnVariance),
        Command::TheoremCheck => ExperimentConfig::new(Preset::TheoremCheck),
        Command::Fig7Bikeshare { data, subsample } => {
            let mut c = ExperimentConfig::new(Preset::Fig7Bikeshare);
            c.bikeshare = Some(BikeShareSection { path: data, subsample });
            c
        }
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if o.reps.is_some() {
        cfg.reps = o.reps;
    }
    if let Some(out) = &o.out {
        cfg.out = out.clone();
    }
    cfg.full |= o.full;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let p = Parsed::parse();
    let result = build(p.command, &p.overrides).and_then(|cfg| {
        let summary = run(&cfg, p.overrides.jobs)?;
        log::info!("wrote {} files under {}", summary.files.len(), cfg.out.display());
        match summary.failures {
            0 => Ok(()),
            k => Err(CliError::OracleFailures(k)),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

mod config;
mod output;
mod run;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "partwave", version, about = "Partial-wave simulations and estimate studies for wave and Dirac equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time-evolve a Dirac field and record its norms.
    Simulate {
        #[command(subcommand)]
        what: SimulateKind,
    },
    /// Run one verification study.
    Verify {
        /// lemma, algebra, transforms, two-route, equivalence, strich3D,
        /// strichartz1, strichartz2, genineq2, prodest, dirac, dirac-cn,
        /// wavepot, nld or contraction.
        study: String,
        #[command(flatten)]
        common: Common,
    },
    /// Radial transforms.
    Transform {
        #[command(subcommand)]
        what: TransformKind,
    },
    /// The zonal kernel bounds.
    Lemma {
        #[command(subcommand)]
        what: LemmaKind,
    },
}

#[derive(Debug, Subcommand)]
enum SimulateKind {
    /// Cubic Dirac equation.
    Nld(Common),
    /// Linear Dirac flow with the configured potential.
    Linear(Common),
}

#[derive(Debug, Subcommand)]
enum TransformKind {
    /// Order-k Hankel transform of a Gaussian bump, with its round trip.
    Hankel(HankelArgs),
}

#[derive(Debug, Subcommand)]
enum LemmaKind {
    /// sup |Q_k| for k up to kmax.
    Qk(Common),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML configuration; unknown keys are an error.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Directory for the artifacts.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Ensemble size.
    #[arg(long)]
    pub count: Option<usize>,
}

impl Common {
    /// Config file first, then flags on top.
    pub fn resolve(&self) -> Result<RunConfig, String> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if self.$f.is_some() { c.$f = self.$f.clone(); } )* };
        }
        over!(seed, workers, n, kmax, t_end, s, eps, delta, count);
        Ok(c)
    }
}

#[derive(Debug, Clone, Args)]
pub struct HankelArgs {
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, default_value_t = 2.0)]
    pub center: f64,
    #[arg(long, default_value_t = 0.3)]
    pub width: f64,
    #[arg(long, default_value_t = 6.0)]
    pub rho_max: f64,
    #[arg(long, default_value_t = 0.02)]
    pub drho: f64,
    #[arg(long, default_value_t = 60.0)]
    pub r_max: f64,
    #[arg(long, default_value_t = 0.2)]
    pub dr: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate { what: SimulateKind::Nld(c) } => run::simulate(&c, true),
        Command::Simulate { what: SimulateKind::Linear(c) } => run::simulate(&c, false),
        Command::Verify { study, common } => run::verify(&study, &common),
        Command::Transform { what: TransformKind::Hankel(a) } => run::hankel(&a),
        Command::Lemma { what: LemmaKind::Qk(c) } => run::verify("lemma", &c),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

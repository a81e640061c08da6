use std::path::PathBuf;
use std::process::exit;

use clap::{Args, Parser, Subcommand};

use homwalk::error::Error;
use homwalk::io::{parse_config_for, run, RunConfig, EXIT_ERROR, EXIT_OK};
use homwalk::rng::Seed;

#[derive(Parser)]
#[command(name = "homwalk", version, about = "Random walks on SL2(R)/SL2(Z)")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample trajectories and orbit averages
    Walk(Common),
    /// Orbit-ball diameter against r-nets
    Diameter(Common),
    /// Effective density of single trajectories
    Density(Common),
    /// Probability of landing in a fixed ball
    Hitting(Common),
    /// Height tails of walks started at x0
    Nondiv(Common),
    /// Mean height after n steps against the starting height
    Contraction(Common),
    /// Sup-density of convolution powers at shrinking scales
    Flatten(Common),
    /// Local dimension of the pushforward on X
    Dimension(Common),
    /// Smoothed density against its pointwise bound
    Smoothed(Common),
    /// Equidistribution error and Birkhoff averages
    Equidist(Common),
    /// Spectral gap of the Markov operator
    Gap(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; omitted fields take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, required_unless_present = "print_config")]
    out: Option<PathBuf>,
    /// Master seed as hex, overriding the config
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads
    #[arg(long)]
    threads: Option<usize>,
    /// Compare Monte Carlo against exact convolution
    #[arg(long)]
    spot_check: bool,
    /// Print the resolved config and exit
    #[arg(long)]
    print_config: bool,
}

impl Cmd {
    fn split(self) -> (&'static str, Common) {
        match self {
            Cmd::Walk(c) => ("walk", c),
            Cmd::Diameter(c) => ("diameter", c),
            Cmd::Density(c) => ("density", c),
            Cmd::Hitting(c) => ("hitting", c),
            Cmd::Nondiv(c) => ("nondiv", c),
            Cmd::Contraction(c) => ("contraction", c),
            Cmd::Flatten(c) => ("flatten", c),
            Cmd::Dimension(c) => ("dimension", c),
            Cmd::Smoothed(c) => ("smoothed", c),
            Cmd::Equidist(c) => ("equidist", c),
            Cmd::Gap(c) => ("gap", c),
        }
    }
}

fn load(name: &str, c: &Common) -> Result<RunConfig, Error> {
    let text = match &c.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => "{}".into(),
    };
    let mut cfg = parse_config_for(&text, Some(name))?;
    if let Some(s) = &c.seed {
        cfg.seed = Seed::from_hex(s).ok_or_else(|| Error::InvalidArgument(format!("--seed: not a hex seed: {s}")))?;
    }
    if let Some(t) = c.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()));
        }
        cfg.threads = Some(t);
    }
    cfg.spot_check.enabled |= c.spot_check;
    Ok(cfg)
}

fn main() {
    let (name, c) = Cli::parse().cmd.split();
    let cfg = match load(name, &c) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("homwalk {name}: {e}");
            exit(EXIT_ERROR);
        }
    };
    if c.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg.to_value()).unwrap());
        exit(EXIT_OK);
    }
    let out = c.out.expect("required by clap");
    match run(&cfg, &out) {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("homwalk {name}: {e}");
            exit(EXIT_ERROR);
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mimo3d::harness::{self, Fault, SimConfig, Simulator};
use mimo3d::Error;

#[derive(Parser)]
#[command(name = "mimo3d", version, about = "3D MIMO code decoder experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bit-error-rate sweep over SNR.
    Ber(SweepArgs),
    /// Visited-node sweep over SNR.
    Complexity(SweepArgs),
    /// Check the structure of R and F over random channels.
    Verify(VerifyArgs),
    /// Dump every intermediate of one simplified decode.
    DecodeOne(DecodeOneArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// TOML file with `key = value` settings named after the long flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// QAM order.
    #[arg(long)]
    m: Option<usize>,
    /// SNR points in dB: `0,5,10`, `0:20:5` or `inf`.
    #[arg(long)]
    snr: Option<String>,
    /// Trials per SNR point.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of bruteforce, sphere, simplified.
    #[arg(long)]
    decoders: Option<String>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    allow_bruteforce_large_m: bool,
    /// Trials per point checked against the brute-force oracle.
    #[arg(long)]
    max_bruteforce_trials: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Number of channel draws.
    #[arg(long, default_value_t = 1000)]
    channels: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Relative tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Test hook: corrupt one generator column before checking.
    #[arg(long, hide = true)]
    scramble_column: Option<usize>,
}

#[derive(Args)]
struct DecodeOneArgs {
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value = "10")]
    snr: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Trial index within the seed's stream.
    #[arg(long, default_value_t = 0)]
    trial: u64,
}

impl SweepArgs {
    fn into_config(self, mut cfg: SimConfig) -> Result<SimConfig, Error> {
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(m) = self.m {
            cfg.order = m;
        }
        if let Some(snr) = &self.snr {
            cfg.snr_db = harness::parse_snr_list(snr)?;
        }
        if let Some(t) = self.trials {
            cfg.trials_per_point = t;
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(d) = &self.decoders {
            cfg.decoders = harness::parse_decoders(d)?;
        }
        if self.out.is_some() {
            cfg.output = self.out;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if self.allow_bruteforce_large_m {
            cfg.allow_bruteforce_large_m = true;
        }
        if let Some(n) = self.max_bruteforce_trials {
            cfg.max_trials_bruteforce = n;
        }
        Ok(cfg)
    }
}

fn sweep(args: SweepArgs, defaults: SimConfig) -> Result<ExitCode, Error> {
    let cfg = args.into_config(defaults)?;
    let sim = Simulator::new(cfg)?;
    let cfg = sim.config();
    println!(
        "M={} trials/point={} seed={} decoders={} oracle trials/point={}",
        cfg.order,
        cfg.trials_per_point,
        cfg.master_seed,
        cfg.decoders
            .iter()
            .map(|d| d.name())
            .collect::<Vec<_>>()
            .join(","),
        sim.oracle_trials()
    );
    let result = sim.run_sweep()?;
    print!("{}", harness::format_table(&result.rows));
    if result.redraws > 0 {
        println!("singular channels redrawn: {}", result.redraws);
    }
    if let Some(path) = &cfg.output {
        harness::write_csv_file(path, &result.rows)?;
        println!("wrote {}", path.display());
    }
    let mismatches: u64 = result
        .rows
        .iter()
        .filter_map(|r| r.mismatches_vs_oracle)
        .sum();
    if mismatches > 0 {
        eprintln!("error: {mismatches} decodes differ from the brute-force oracle");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Ber(args) => sweep(
            args,
            SimConfig {
                snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
                trials_per_point: 20_000,
                ..SimConfig::default()
            },
        ),
        Command::Complexity(args) => sweep(
            args,
            SimConfig {
                snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
                trials_per_point: 1_000,
                ..SimConfig::default()
            },
        ),
        Command::Verify(args) => {
            let fault = args.scramble_column.map(Fault::ScrambleGeneratorColumn);
            let out = harness::verify_structure_cmd(args.channels, args.seed, args.tol, fault)?;
            print!("{}", out.report);
            println!("channels: {} (redrawn: {})", out.channels, out.redraws);
            if out.passed() {
                println!("PASS");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("FAIL: {} violations", out.report.violations.len());
                Ok(ExitCode::FAILURE)
            }
        }
        Command::DecodeOne(args) => {
            let snr = match harness::parse_snr_list(&args.snr)?.as_slice() {
                [one] => *one,
                _ => return Err(Error::Config("decode-one takes a single SNR value".into())),
            };
            print!(
                "{}",
                harness::decode_one_report(args.m, snr, args.seed, args.trial)?
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mimo3d::DecoderKind;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "trials = 7\nseed = 3\ndecoders = \"sphere\"\n").unwrap();
        let cli = Cli::parse_from([
            "mimo3d",
            "ber",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "9",
        ]);
        let Command::Ber(args) = cli.command else {
            panic!("wrong subcommand")
        };
        let cfg = args.into_config(SimConfig::default()).unwrap();
        assert_eq!(cfg.trials_per_point, 7);
        assert_eq!(cfg.master_seed, 9);
        assert_eq!(cfg.decoders, vec![DecoderKind::Sphere]);
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gwp_core::harness::{self, CheckSuite, RunConfig};

/// Semiclassical Gaussian wave packets in electromagnetic potentials.
#[derive(Parser)]
#[command(name = "gwp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one packet and write its trajectory as CSV.
    Simulate(RunArgs),
    /// Egorov/IVR ensemble means and standard errors as CSV.
    Egorov(RunArgs),
    /// Sweep hbar and fit convergence rates against the Egorov reference.
    Converge(RunArgs),
    /// Run the built-in invariant checks.
    Check,
}

/// Each flag mirrors the config key with `-` replaced by `_`.
#[derive(Args, Default)]
struct RunArgs {
    /// `key = value` config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// classical, zhou or semiclassical.
    #[arg(long)]
    model: Option<String>,
    /// cosine1d, quartic2d, quadratic or free.
    #[arg(long)]
    potential: Option<String>,
    /// Initial position, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    q: Option<String>,
    /// Initial momentum, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    p: Option<String>,
    /// Initial chirp matrix, row-major.
    #[arg(long = "A", allow_hyphen_values = true)]
    a: Option<String>,
    /// Initial width matrix, row-major.
    #[arg(long = "B", allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long)]
    hbar: Option<String>,
    /// Comma-separated hbar values for `converge`.
    #[arg(long)]
    hbars: Option<String>,
    /// Time step [default: 0.01].
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    t_final: Option<String>,
    /// Comparison time for `converge`.
    #[arg(long)]
    t_star: Option<String>,
    /// Ensemble size (accepts 1e6).
    #[arg(long)]
    samples: Option<String>,
    /// Ensemble size per hbar for `converge`, comma separated.
    #[arg(long)]
    samples_per_hbar: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Gauss–Hermite nodes per dimension.
    #[arg(long)]
    gh_nodes: Option<String>,
    /// Output file; stdout when absent (converge defaults to converge.csv).
    #[arg(long)]
    out: Option<String>,
    /// Egorov observables, e.g. q1,p1,H0,Lz.
    #[arg(long)]
    observables: Option<String>,
    /// Egorov output every n-th step.
    #[arg(long)]
    stride: Option<String>,
    /// Pair each Wigner sample with its mirror image.
    #[arg(long)]
    antithetic: Option<String>,
    /// Particle mass for quadratic and free potentials.
    #[arg(long)]
    mass: Option<String>,
    /// Quadratic potential: V = ½xᵀKx + b_linᵀx + c, A = M0 x + a0.
    #[arg(long = "K", allow_hyphen_values = true)]
    k: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    b_lin: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<String>,
    #[arg(long = "M0", allow_hyphen_values = true)]
    m0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a0: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let fields = [
            ("model", &self.model),
            ("potential", &self.potential),
            ("q", &self.q),
            ("p", &self.p),
            ("A", &self.a),
            ("B", &self.b),
            ("hbar", &self.hbar),
            ("hbars", &self.hbars),
            ("dt", &self.dt),
            ("t_final", &self.t_final),
            ("t_star", &self.t_star),
            ("samples", &self.samples),
            ("samples_per_hbar", &self.samples_per_hbar),
            ("seed", &self.seed),
            ("gh_nodes", &self.gh_nodes),
            ("out", &self.out),
            ("observables", &self.observables),
            ("stride", &self.stride),
            ("antithetic", &self.antithetic),
            ("mass", &self.mass),
            ("K", &self.k),
            ("b_lin", &self.b_lin),
            ("c", &self.c),
            ("M0", &self.m0),
            ("a0", &self.a0),
        ];
        fields.iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))).collect()
    }

    fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                harness::parse_config_text(&text).with_context(|| format!("in config {}", path.display()))?
            }
            None => Vec::new(),
        };
        Ok(RunConfig::from_pairs(&file, &self.overrides())?)
    }
}

fn write_or_print(out: Option<&str>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {path}")),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `dir/name.csv` → `dir/name.<ext>`.
fn sibling(path: &str, ext: &str) -> String {
    Path::new(path).with_extension(ext).to_string_lossy().into_owned()
}

fn file_name(path: &str) -> String {
    Path::new(path).file_name().map_or_else(|| path.to_string(), |f| f.to_string_lossy().into_owned())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.resolve()?;
            let out = harness::cmd_simulate(&cfg)?;
            write_or_print(cfg.out.as_deref(), &out.csv)?;
            if let Some(path) = cfg.out.as_deref() {
                let script = harness::simulate_plot_script(&file_name(path), cfg.dim(), &file_name(&sibling(path, "png")));
                std::fs::write(sibling(path, "gp"), script)?;
            }
            if let Some(msg) = out.aborted {
                eprintln!("error: {msg}");
                return Ok(ExitCode::from(1));
            }
        }
        Command::Egorov(args) => {
            let cfg = args.resolve()?;
            let csv = harness::cmd_egorov(&cfg)?;
            write_or_print(cfg.out.as_deref(), &csv)?;
        }
        Command::Converge(args) => {
            let cfg = args.resolve()?;
            let out = harness::cmd_converge(&cfg)?;
            let path = cfg.out.clone().unwrap_or_else(|| "converge.csv".into());
            std::fs::write(&path, &out.csv).with_context(|| format!("writing {path}"))?;
            std::fs::write(sibling(&path, "summary.txt"), &out.summary)?;
            let script = harness::converge_plot_script(&file_name(&path), &out.report, &file_name(&sibling(&path, "png")));
            std::fs::write(sibling(&path, "gp"), script)?;
            print!("{}", out.summary);
            if out.excluded.iter().any(|&n| n > 0) {
                eprintln!("warning: excluded samples per hbar {:?}", out.excluded);
            }
        }
        Command::Check => {
            let report = harness::cmd_check(&CheckSuite::default());
            print!("{report}");
            if !report.all_passed() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memstab::config::{InitialKind, KernelKind, ModeKind, ObserverKind, SolverKind};
use memstab::convergence::{convergence_report, group_by_eta};
use memstab::experiment::execute_all;
use memstab::export::write_mesh;
use memstab::{preset, AppError, ExperimentConfig, Result, PRESETS};

#[derive(Parser)]
#[command(
    name = "memstab",
    version,
    about = "Feedback stabilization experiments for a parabolic equation with memory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset, a config file, or a single run built from flags.
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory for the CSV and JSON files.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Manufactured-solution error table over refinement levels.
    Convergence {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print a configuration in `key = value` form.
    Config {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// List the preset names.
    Presets,
    /// Write the mesh of a configuration as plain text.
    Mesh {
        #[command(flatten)]
        overrides: Overrides,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Source {
    /// Preset name (see `memstab presets`).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, value_enum)]
    mode: Option<ModeKind>,
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long)]
    rf: Option<u32>,
    #[arg(long)]
    subdiv: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    support_fraction: Option<f64>,
    #[arg(long, value_enum)]
    kernel: Option<KernelKind>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tfinal: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    k0: Option<f64>,
    #[arg(long, value_enum)]
    y0: Option<InitialKind>,
    #[arg(long, value_enum)]
    yhat0: Option<ObserverKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    solver: Option<SolverKind>,
    /// Memory term by recurrence (exponential kernel only).
    #[arg(long)]
    fast_memory: Option<bool>,
    /// Run name; only valid for single runs.
    #[arg(long)]
    name: Option<String>,
}

impl Overrides {
    fn apply(&self, c: &mut ExperimentConfig) {
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = &self.$field { c.$target = v.clone(); })*
            };
        }
        set!(mode => mode, ell => ell, rf => rf, subdiv => subdiv, support_fraction => support_fraction,
             kernel => kernel, gamma => gamma, eta => eta, lambda1 => lambda1, lambda2 => lambda2,
             tfinal => t_final, k0 => k0, y0 => y0, yhat0 => yhat0, seed => seed, solver => solver,
             fast_memory => fast_memory, name => name);
    }
}

fn load(source: &Source, overrides: &Overrides) -> Result<Vec<ExperimentConfig>> {
    let mut runs = if let Some(p) = &source.preset {
        preset(p)?
    } else if let Some(path) = &source.config {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        vec![ExperimentConfig::from_kv(&text)?]
    } else {
        vec![ExperimentConfig::default()]
    };
    if overrides.name.is_some() && runs.len() > 1 {
        return Err(AppError::config("--name only applies to single runs"));
    }
    for r in &mut runs {
        overrides.apply(r);
        r.validate()?;
    }
    Ok(runs)
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

fn run_command(command: Command) -> Result<()> {
    match command {
        Command::Run { source, overrides, out } => {
            let runs = load(&source, &overrides)?;
            let mut first_err = None;
            for (cfg, res) in runs.iter().zip(execute_all(&runs, &out)) {
                match res {
                    Ok(s) => println!(
                        "{}: rate_y {} rate_err {} final |y| {:.4e} ({:.1} s)",
                        cfg.name,
                        fmt_rate(s.rate_y),
                        fmt_rate(s.rate_err),
                        s.final_norm_y,
                        s.wall_time_s
                    ),
                    Err(e) => {
                        eprintln!("{}: {e}", cfg.name);
                        first_err.get_or_insert(e);
                    }
                }
            }
            first_err.map_or(Ok(()), Err)
        }
        Command::Convergence { source, overrides, out } => {
            let mut source = source;
            if source.preset.is_none() && source.config.is_none() {
                source.preset = Some("manufactured".into());
            }
            let runs = load(&source, &overrides)?;
            fs::create_dir_all(&out).map_err(|e| AppError::io(&out, e))?;
            let mut reports = Vec::new();
            for group in group_by_eta(&runs) {
                let r = convergence_report(&group)?;
                println!("eta = {}", r.eta);
                for (i, l) in r.levels.iter().enumerate() {
                    let ord = if i == 0 {
                        String::new()
                    } else {
                        format!("  order {}", fmt_rate(r.orders[i - 1]))
                    };
                    println!(
                        "  rf {}  h {:.4e}  k {:.4e}  max error {:.6e}{ord}",
                        l.rf, l.h, l.k, l.max_error
                    );
                }
                println!("  overall order {}", fmt_rate(r.overall_order));
                reports.push(r);
            }
            let path = out.join("convergence.json");
            fs::write(&path, serde_json::to_string_pretty(&reports)? + "\n").map_err(|e| AppError::io(&path, e))?;
            Ok(())
        }
        Command::Config { source, overrides } => {
            for (i, r) in load(&source, &overrides)?.iter().enumerate() {
                if i > 0 {
                    println!();
                }
                print!("{}", r.to_kv());
            }
            Ok(())
        }
        Command::Presets => {
            for p in PRESETS {
                println!("{p}: {} run(s)", preset(p)?.len());
            }
            Ok(())
        }
        Command::Mesh { overrides, out } => {
            let mut cfg = ExperimentConfig::default();
            overrides.apply(&mut cfg);
            cfg.validate()?;
            let mesh = cfg.mesh()?;
            match out {
                Some(path) => {
                    let f = fs::File::create(&path).map_err(|e| AppError::io(&path, e))?;
                    write_mesh(&mesh, std::io::BufWriter::new(f)).map_err(|e| AppError::io(&path, e))
                }
                None => write_mesh(&mesh, std::io::stdout().lock()).map_err(|e| AppError::io("<stdout>", e)),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run_command(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

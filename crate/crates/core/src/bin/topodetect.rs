//! `topodetect` command-line tool.
//!
//! Exit codes: 0 success, 1 usage/configuration/IO error, 2 invalid network, 3 numerical failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use topodetect::detector::LibraryBuilder;
use topodetect::network::{build_ybus, check_connectivity, load_network};
use topodetect::powerflow::{solve_newton_raphson, PowerFlowSolution, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use topodetect::profiles::{InjectionSeries, STEPS_PER_DAY};
use topodetect::scenario::{Experiment, REFERENCE_CFG, ZERO_NOISE_CFG};
use topodetect::{write_report, Error, NetworkDefinition, ScenarioConfig, Signal};

#[derive(Parser)]
#[command(name = "topodetect", version, about = "Microgrid switch-topology detection from μPMU data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one power flow and print bus voltages.
    Powerflow(PowerflowArgs),
    /// Solve every topology at every time step and write the state library as CSV.
    Library(LibraryArgs),
    /// Run detection for a single trial and print each verdict.
    Detect(DetectArgs),
    /// Run the Monte Carlo experiment and write rates.csv, confusion.csv and pairwise.csv.
    Experiment(ExperimentArgs),
    /// Check a network file and its topologies.
    Validate {
        /// Network file (`fivebus` for the bundled feeder).
        #[arg(default_value = "fivebus")]
        net: PathBuf,
    },
}

#[derive(Args)]
struct PowerflowArgs {
    #[arg(long, default_value = "fivebus")]
    net: PathBuf,
    #[arg(long)]
    topo: String,
    /// Zero injection at every bus (the default when no profile or step is given).
    #[arg(long, conflicts_with_all = ["profile", "t"])]
    zero_load: bool,
    /// `default` or a profile CSV.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    t: Option<usize>,
    /// Also write the solution as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LibraryArgs {
    #[arg(long, default_value = "fivebus")]
    net: PathBuf,
    #[arg(long, default_value = "default")]
    profile: String,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pmu_sigma: Option<f64>,
    #[arg(long)]
    pmu_accuracy: Option<f64>,
    #[arg(long)]
    scada_sigma: Option<f64>,
    #[arg(long)]
    scada_accuracy: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long)]
    profile: Option<String>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ScenarioConfig) -> topodetect::Result<()> {
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = self.pmu_sigma {
            cfg.pmu_sigma = v;
        }
        if let Some(v) = self.pmu_accuracy {
            cfg.pmu_accuracy = v;
        }
        if let Some(v) = self.scada_sigma {
            cfg.scada_sigma = v;
        }
        if let Some(v) = self.scada_accuracy {
            cfg.scada_accuracy = v;
        }
        if let Some(v) = self.reps {
            cfg.repetitions = v;
        }
        if let Some(v) = &self.net {
            cfg.network = v.clone();
        }
        if let Some(v) = &self.profile {
            cfg.profile = v.clone();
        }
        cfg.validate()
    }
}

#[derive(Args)]
struct DetectArgs {
    /// Scenario config; the bundled `paper.cfg` when absent.
    config: Option<PathBuf>,
    /// True topology.
    #[arg(long)]
    topo: String,
    #[arg(long, default_value_t = 0)]
    t: usize,
    #[arg(long, default_value_t = 0)]
    rep: usize,
    /// Directory for adm.csv and mdm.csv.
    #[arg(long)]
    dump_matrices: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Scenario config. `paper.cfg` and `zero_noise.cfg` fall back to the bundled copies.
    config: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

fn load_config(path: Option<&Path>) -> topodetect::Result<ScenarioConfig> {
    let Some(path) = path else {
        return ScenarioConfig::parse(REFERENCE_CFG, Path::new("."));
    };
    if !path.exists() {
        match path.to_str() {
            Some("paper.cfg") => return ScenarioConfig::parse(REFERENCE_CFG, Path::new(".")),
            Some("zero_noise.cfg") => return ScenarioConfig::parse(ZERO_NOISE_CFG, Path::new(".")),
            _ => {}
        }
    }
    ScenarioConfig::load(path)
}

fn load_series(net: &NetworkDefinition, profile: &str) -> topodetect::Result<InjectionSeries> {
    match profile {
        "default" => Ok(InjectionSeries::default_for(&net.graph)),
        "zero" => Ok(InjectionSeries::zero(&net.graph)),
        path => InjectionSeries::load_csv(&net.graph, Path::new(path)),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_output(out: Option<&Path>, text: &str) -> topodetect::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(io_err(p)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

fn state_rows(topology: &str, t: Option<usize>, sol: &PowerFlowSolution, out: &mut String) {
    for k in 0..sol.len() {
        let t = t.map_or(String::new(), |t| format!("{t},"));
        out.push_str(&format!("{topology},{t}{},{},{}\n", k + 1, sol.vm[k], sol.va_deg(k)));
    }
}

fn cmd_powerflow(a: PowerflowArgs) -> topodetect::Result<()> {
    let net = load_network(&a.net)?;
    let topo = net.topology(&a.topo)?;
    let (series, t) = if a.zero_load || (a.profile.is_none() && a.t.is_none()) {
        (InjectionSeries::zero(&net.graph), 0)
    } else {
        let t = a.t.unwrap_or(0);
        if t >= STEPS_PER_DAY {
            return Err(Error::Configuration(format!("--t must be below {STEPS_PER_DAY}")));
        }
        (load_series(&net, a.profile.as_deref().unwrap_or("default"))?, t)
    };
    let ybus = build_ybus(&net.graph, topo)?;
    let sol = solve_newton_raphson(&ybus, &series.snapshot(&net.graph, t)?, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER)?;

    println!("topology {}  t = {t}  ({} iterations, mismatch {:.2e})", topo.id, sol.iterations, sol.max_mismatch);
    println!("{:>4}{:>12}{:>12}", "bus", "vm (p.u.)", "va (deg)");
    for k in 0..sol.len() {
        println!("{:>4}{:>12.6}{:>12.6}", k + 1, sol.vm[k], sol.va_deg(k));
    }
    if let Some(out) = &a.out {
        let mut csv = String::from("topology,time_index,bus,vm_pu,va_deg\n");
        state_rows(&topo.id, Some(t), &sol, &mut csv);
        write_output(Some(out), &csv)?;
    }
    Ok(())
}

fn cmd_library(a: LibraryArgs) -> topodetect::Result<()> {
    let net = load_network(&a.net)?;
    let series = load_series(&net, &a.profile)?;
    let builder = LibraryBuilder::new(&net.graph, &net.topologies)?;
    let steps: Vec<_> = series.snapshots(&net.graph)?.into_iter().enumerate().collect();
    let lib = builder.build(&steps)?;
    let mut csv = String::from("topology,time_index,bus,vm_pu,va_deg\n");
    for (q, id) in lib.topology_ids.iter().enumerate() {
        for &t in &lib.time_indices {
            let sol = lib.get(q, t).expect("library covers every step");
            state_rows(id, Some(t), sol, &mut csv);
        }
    }
    write_output(a.out.as_deref(), &csv)
}

fn cmd_detect(a: DetectArgs) -> topodetect::Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    a.overrides.apply(&mut cfg)?;
    cfg.repetitions = cfg.repetitions.max(a.rep + 1);
    let exp = Experiment::new(cfg)?;
    let q = exp
        .network
        .topologies
        .iter()
        .position(|t| t.id == a.topo)
        .ok_or_else(|| exp.network.topology(&a.topo).unwrap_err())?;
    let trial = exp.run_trial(q, a.t, a.rep)?;
    println!("true topology {}  t = {}  repetition {}", a.topo, a.t, a.rep);
    let ids = exp.network.topology_ids();
    for o in &trial.outcomes {
        let v = o.verdict.topology().map_or("inconclusive", |k| ids[k].as_str());
        println!("{:<6}{:<11}{}", o.criterion.to_string(), o.signal.to_string(), v);
    }
    if let Some(dir) = &a.dump_matrices {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let dm = exp.difference_matrices(q, a.t, a.rep)?;
        for (signal, name) in [(Signal::Angle, "adm.csv"), (Signal::Magnitude, "mdm.csv")] {
            let path = dir.join(name);
            let mut f = std::fs::File::create(&path).map_err(io_err(&path))?;
            dm.write_csv(signal, &mut f).map_err(io_err(&path))?;
        }
    }
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> topodetect::Result<()> {
    let mut cfg = load_config(Some(&a.config))?;
    a.overrides.apply(&mut cfg)?;
    let exp = Experiment::new(cfg)?;
    let report = exp.run_with_jobs(a.jobs)?;
    let files = write_report(&report, &a.out_dir)?;
    print!("{}", report.summary());
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

/// Returns whether the network passed every check.
fn cmd_validate(path: &Path) -> topodetect::Result<bool> {
    let net = load_network(path)?;
    let mut problems = Vec::new();
    for topo in &net.topologies {
        let report = check_connectivity(&net.graph, topo);
        if !report.connected() {
            let buses: Vec<String> = report.unreachable.iter().map(ToString::to_string).collect();
            problems.push(format!("topology {}: unreachable buses {}", topo.id, buses.join(", ")));
        } else if let Err(e) = build_ybus(&net.graph, topo) {
            problems.push(format!("topology {}: {e}", topo.id));
        }
    }
    let summary = format!(
        "{} buses, {} lines, {} topologies",
        net.graph.bus_count(),
        net.graph.lines().len(),
        net.topologies.len()
    );
    if problems.is_empty() {
        println!("{summary}, all connected");
        Ok(true)
    } else {
        println!("{summary}, {} with problems", problems.len());
        for p in problems {
            println!("  {p}");
        }
        Ok(false)
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else if e.is_validation() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Powerflow(a) => cmd_powerflow(a),
        Command::Library(a) => cmd_library(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Validate { net } => match cmd_validate(&net) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(2),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

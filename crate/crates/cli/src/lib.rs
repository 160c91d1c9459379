//! Command-line front end: argument parsing and the subcommand drivers.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use busroute_core::harness::{self, run_bench, solve_row, Scenario, SolveOptions, SOLVE_HEADER};
use busroute_core::instancegen::{generate, GenParams};
use busroute_core::mcm::{Mode, SchoolContext};
use busroute_core::model::{plan_metrics, Instance, Metric, RoutingPlan};
use busroute_core::oracle::{exact_fleet, exact_route, Objective, OracleLimits};
use busroute_core::pi::improve_with_trace;
use busroute_core::scheduling::{min_buses, schedule_report};
use busroute_core::SolverParams;

pub const OUT_DIR_ENV: &str = "BUSROUTE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "busroute", version, about = "Multi-school bus routing and scheduling")]
pub struct Cli {
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random instance.
    Generate(GenerateArgs),
    /// Route (and optionally improve) an instance, then schedule it.
    Solve(SolveArgs),
    /// Run post-improvement on an existing plan.
    Improve(ImproveArgs),
    /// Schedule an existing plan onto buses.
    Schedule(ScheduleArgs),
    /// Solve a tiny instance exactly.
    Oracle(OracleArgs),
    /// Compare SMCM, PMCM and PMCM with improvement on generated scenarios.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Euclidean,
    Manhattan,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Manhattan => Metric::Manhattan,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Smcm,
    Pmcm,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Smcm => Mode::Smcm,
            ModeArg::Pmcm => Mode::Pmcm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Keep {
    /// Fewest buses, then least total trip time.
    Best,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleObjective {
    /// Per school, minimize the surrogate cost.
    Surrogate,
    /// Per school, minimize buses then total time.
    Buses,
    /// All schools jointly, minimize the scheduled fleet.
    Fleet,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub schools: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub stops: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum ride time, seconds.
    #[arg(long, default_value_t = 5400.0)]
    pub mrt: f64,
    #[arg(long, default_value_t = 66)]
    pub capacity: u32,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    pub metric: MetricArg,
    #[arg(long, default_value_t = busroute_core::instancegen::DEFAULT_SIDE_FT)]
    pub side_ft: f64,
    /// Output path; defaults to `<out-dir>/instance_<schools>x<stops>_s<seed>.json`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Solver parameter sources shared by several subcommands.
#[derive(Debug, Args)]
pub struct ParamArgs {
    /// JSON file with (a subset of) the solver parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one parameter, e.g. `--params alpha.q=150`. Repeatable.
    #[arg(long = "params", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ParamArgs {
    /// Built-in defaults, then the config file, then `--params`, then
    /// `--seed`.
    pub fn resolve(&self) -> Result<SolverParams> {
        let mut params = SolverParams::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            params
                .merge_json(&value)
                .with_context(|| format!("applying {}", path.display()))?;
        }
        for kv in &self.overrides {
            let Some((key, value)) = kv.split_once('=') else {
                bail!("--params expects KEY=VALUE, got `{kv}`");
            };
            params.set(key.trim(), value.trim())?;
        }
        if let Some(seed) = self.seed {
            params.seed = seed;
        }
        Ok(params)
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(short, long)]
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Pmcm)]
    pub mode: ModeArg,
    /// Run post-improvement after routing.
    #[arg(long)]
    pub improve: bool,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Independent runs with derived seeds.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeat: u32,
    /// Which of the repeated runs to report.
    #[arg(long, value_enum, requires = "repeat")]
    pub keep: Option<Keep>,
    /// Defaults to `<out-dir>/<instance stem>.plan.json`.
    #[arg(long)]
    pub plan_out: Option<PathBuf>,
    /// Defaults to `<out-dir>/<instance stem>.schedule.json`.
    #[arg(long)]
    pub schedule_out: Option<PathBuf>,
    /// CSV report to append to; defaults to `<out-dir>/report.csv`.
    #[arg(long, conflicts_with = "no_report")]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub no_report: bool,
    /// Scenario label for the report row; defaults to the instance stem.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Fill the RT_s report column (otherwise left empty so reruns are
    /// byte-identical).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct ImproveArgs {
    #[arg(short, long)]
    pub instance: PathBuf,
    #[arg(short, long)]
    pub plan: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Defaults to `<out-dir>/<plan stem>.improved.json`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(short, long)]
    pub instance: PathBuf,
    #[arg(short, long)]
    pub plan: PathBuf,
    /// Defaults to `<out-dir>/<plan stem>.schedule.json`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(short, long)]
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value_t = OracleObjective::Fleet)]
    pub objective: OracleObjective,
    #[arg(long, default_value_t = 7)]
    pub max_stops: usize,
    #[arg(long, default_value_t = 8)]
    pub max_trips: usize,
    /// Give up after this many seconds.
    #[arg(long)]
    pub time_budget: Option<f64>,
    /// Write the optimal plan here.
    #[arg(long)]
    pub plan_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON list of scenarios: `[{"name": "s1", "n_schools": 2, "n_stops": 60, "seed": 1}, ...]`.
    #[arg(long, conflicts_with = "size")]
    pub scenarios: Option<PathBuf>,
    /// Scenario size as `SCHOOLSxSTOPS`. Repeatable.
    #[arg(long, value_parser = parse_size)]
    pub size: Vec<(usize, usize)>,
    /// Instance seed for `--size` scenarios.
    #[arg(long = "instance-seed", default_value_t = 1)]
    pub instance_seed: u64,
    /// Maximum ride time for `--size` scenarios, seconds.
    #[arg(long, default_value_t = 5400.0)]
    pub mrt: f64,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Defaults to `<out-dir>/bench.csv`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected SCHOOLSxSTOPS, got `{s}`"))?;
    let schools = a.parse::<usize>().map_err(|e| format!("schools: {e}"))?;
    let stops = b.parse::<usize>().map_err(|e| format!("stops: {e}"))?;
    if schools == 0 || stops < schools {
        return Err(format!("need 1 <= schools <= stops, got `{s}`"));
    }
    Ok((schools, stops))
}

pub fn run(cli: Cli) -> Result<()> {
    let out_dir = &cli.out_dir;
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, out_dir),
        Command::Solve(a) => cmd_solve(a, out_dir),
        Command::Improve(a) => cmd_improve(a, out_dir),
        Command::Schedule(a) => cmd_schedule(a, out_dir),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Bench(a) => cmd_bench(a, out_dir),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Instance::from_json(&text).with_context(|| format!("loading instance {}", path.display()))
}

pub fn load_plan(instance: &Instance, path: &Path) -> Result<RoutingPlan> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RoutingPlan::from_json(instance, &text).with_context(|| format!("loading plan {}", path.display()))
}

fn cmd_generate(a: &GenerateArgs, out_dir: &Path) -> Result<()> {
    let params = GenParams {
        n_schools: a.schools as usize,
        n_stops: a.stops as usize,
        seed: a.seed,
        side_ft: a.side_ft,
        capacity: a.capacity,
        mrt_s: a.mrt,
        metric: a.metric.into(),
        ..GenParams::default()
    };
    let instance = generate(&params)?;
    let path = a
        .output
        .clone()
        .unwrap_or_else(|| out_dir.join(format!("instance_{}x{}_s{}.json", a.schools, a.stops, a.seed)));
    write_file(&path, &instance.to_json())?;
    println!(
        "{}: {} schools, {} stops, {} students",
        path.display(),
        instance.schools().len(),
        instance.stops().len(),
        instance.total_students()
    );
    Ok(())
}

/// Appends `row` to the CSV at `path`, writing the header first when the
/// file is new or empty. An existing file must carry the same header.
pub fn append_report(path: &Path, row: &str) -> Result<()> {
    let existing = fs::read_to_string(path).unwrap_or_default();
    if !existing.is_empty() && existing.lines().next() != Some(SOLVE_HEADER) {
        bail!(
            "{} exists with a different header; expected `{SOLVE_HEADER}`",
            path.display()
        );
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if existing.is_empty() {
        writeln!(f, "{SOLVE_HEADER}")?;
    } else if !existing.ends_with('\n') {
        writeln!(f)?;
    }
    writeln!(f, "{row}")?;
    Ok(())
}

fn cmd_solve(a: &SolveArgs, out_dir: &Path) -> Result<()> {
    let instance = load_instance(&a.instance)?;
    let params = a.params.resolve()?;
    let mode: Mode = a.mode.into();
    let options = SolveOptions {
        mode,
        improve: a.improve,
        repeat: a.repeat as usize,
        params,
    };
    let result = harness::solve(&instance, &options)?;
    result.plan.validate_feasible(&instance)?;

    let name = stem(&a.instance);
    let plan_path = a
        .plan_out
        .clone()
        .unwrap_or_else(|| out_dir.join(format!("{name}.plan.json")));
    let schedule_path = a
        .schedule_out
        .clone()
        .unwrap_or_else(|| out_dir.join(format!("{name}.schedule.json")));
    write_file(&plan_path, &result.plan.to_json(&instance))?;
    write_file(&schedule_path, &result.schedule.to_json())?;

    if !a.no_report {
        let label = format!(
            "{}[{}{}@{}{}]",
            a.scenario.clone().unwrap_or_else(|| name.clone()),
            mode,
            if a.improve { "+pi" } else { "" },
            params.seed,
            if a.repeat > 1 {
                format!("x{}", a.repeat)
            } else {
                String::new()
            }
        );
        let rt = a.timing.then_some(result.routing_time);
        let report_path = a.report.clone().unwrap_or_else(|| out_dir.join("report.csv"));
        append_report(&report_path, &solve_row(&label, &instance, &result.report, rt))?;
    }
    let r = &result.report;
    println!(
        "{}: NT {} NB {} TT {:.2} min (seed {})",
        plan_path.display(),
        r.nt,
        r.nb,
        r.tt_min(),
        result.seed
    );
    eprintln!("routing time {:.3} s", result.routing_time.as_secs_f64());
    Ok(())
}

fn cmd_improve(a: &ImproveArgs, out_dir: &Path) -> Result<()> {
    let instance = load_instance(&a.instance)?;
    let plan = load_plan(&instance, &a.plan)?;
    let params = a.params.resolve()?;
    let start = Instant::now();
    let out = improve_with_trace(&plan, &instance, &params)?;
    let elapsed = start.elapsed();
    let path = a
        .output
        .clone()
        .unwrap_or_else(|| out_dir.join(format!("{}.improved.json", stem(&a.plan))));
    write_file(&path, &out.plan.to_json(&instance))?;
    let t = &out.trace;
    println!(
        "{}: NB {} -> {} ({} moves, {} trips deleted, {})",
        path.display(),
        t.nb_initial,
        t.nb_improved,
        t.moves.len(),
        t.moves.iter().filter(|m| m.outcome.deleted).count(),
        if t.kept_improved {
            "kept improved plan"
        } else {
            "kept input plan"
        }
    );
    eprintln!("improvement time {:.3} s", elapsed.as_secs_f64());
    Ok(())
}

fn cmd_schedule(a: &ScheduleArgs, out_dir: &Path) -> Result<()> {
    let instance = load_instance(&a.instance)?;
    let plan = load_plan(&instance, &a.plan)?;
    let schedule = min_buses(plan.trips(), &instance);
    let path = a
        .output
        .clone()
        .unwrap_or_else(|| out_dir.join(format!("{}.schedule.json", stem(&a.plan))));
    write_file(&path, &schedule.to_json())?;
    let r = schedule_report(plan.trips(), &schedule);
    println!(
        "{}: NT {} NB {} TT {:.2} min deadhead {:.2} min",
        path.display(),
        r.nt,
        r.nb,
        r.tt_min(),
        r.total_deadhead_s / 60.0
    );
    Ok(())
}

fn cmd_oracle(a: &OracleArgs) -> Result<()> {
    let instance = load_instance(&a.instance)?;
    let limits = OracleLimits {
        max_stops_per_school: a.max_stops,
        max_trips: a.max_trips,
        time_budget: a.time_budget.map(std::time::Duration::from_secs_f64),
        ..OracleLimits::default()
    };
    let plan = match a.objective {
        OracleObjective::Fleet => {
            let opt = exact_fleet(&instance, &limits)?;
            println!("optimal NB {}", opt.nb);
            opt.plan
        }
        OracleObjective::Surrogate | OracleObjective::Buses => {
            let objective = if a.objective == OracleObjective::Buses {
                Objective::Buses
            } else {
                Objective::Surrogate
            };
            let gamma = SolverParams::default().gamma;
            let mut trips = Vec::new();
            for k in (0..instance.schools().len()).filter(|&k| !instance.stops_of(k).is_empty()) {
                let r = exact_route(&SchoolContext::new(&instance, k)?, objective, &gamma, &limits)?;
                println!(
                    "school {}: TN {} TT {:.2} min SC {:.2}",
                    instance.school(k).id,
                    r.trips.len(),
                    r.tt / 60.0,
                    r.surrogate
                );
                trips.extend(r.trips);
            }
            let plan = RoutingPlan::new(trips);
            let m = plan_metrics(&plan, &instance);
            println!(
                "total: NT {} NB {} TT {:.2} min",
                m.tn,
                min_buses(plan.trips(), &instance).nb,
                m.tt / 60.0
            );
            plan
        }
    };
    if let Some(path) = &a.plan_out {
        write_file(path, &plan.to_json(&instance))?;
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs, out_dir: &Path) -> Result<()> {
    let params = a.params.resolve()?;
    let scenarios: Vec<Scenario> = match &a.scenarios {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => a
            .size
            .iter()
            .map(|&(schools, stops)| Scenario {
                name: format!("{schools}x{stops}"),
                gen: GenParams {
                    mrt_s: a.mrt,
                    ..GenParams::new(schools, stops, a.instance_seed)
                },
            })
            .collect(),
    };
    let outcome = run_bench(&scenarios, &params);
    let path = a.output.clone().unwrap_or_else(|| out_dir.join("bench.csv"));
    write_file(&path, &outcome.to_csv())?;
    print!("{}", outcome.to_csv());
    for (name, err) in &outcome.failures {
        eprintln!("scenario {name} failed: {err}");
    }
    if !outcome.failures.is_empty() {
        bail!("{} of {} scenarios failed", outcome.failures.len(), scenarios.len());
    }
    Ok(())
}

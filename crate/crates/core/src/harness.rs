//! End-to-end runs (route, improve, schedule) and the CSV reports built
//! from them.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instancegen::{generate, GenParams};
use crate::mcm::{route_all_schools, Mode};
use crate::model::{Instance, RoutingPlan};
use crate::params::SolverParams;
use crate::pi::{improve_with_trace, PiTrace};
use crate::scheduling::{min_buses, schedule_report, SchedulePlan, ScheduleReport};
use crate::seed::derive_seed;

pub const SOLVE_HEADER: &str = "scenario,n_schools,n_stops,NT,NB,TT_min,RT_s";

pub const BENCH_HEADER: &str = "scenario,n_schools,n_stops,\
NT_S,NB_S,TT_S_min,RT_S_s,\
NT_P,NB_P,TT_P_min,RT_P_s,\
NT_PI,NB_PI,TT_PI_min,RT_PI_s,\
Diff,%";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub mode: Mode,
    pub improve: bool,
    /// Independent runs; the one with the fewest buses is kept.
    pub repeat: usize,
    pub params: SolverParams,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Pmcm,
            improve: false,
            repeat: 1,
            params: SolverParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub plan: RoutingPlan,
    pub schedule: SchedulePlan,
    pub report: ScheduleReport,
    /// Seed of the kept run.
    pub seed: u64,
    /// Routing and improvement time summed over all runs; scheduling of
    /// the final plan is excluded.
    pub routing_time: Duration,
    pub pi_trace: Option<PiTrace>,
}

/// Seed of run `run` out of a `--repeat` batch; run 0 uses `seed` itself.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    if run == 0 {
        seed
    } else {
        derive_seed(seed, run as u64)
    }
}

struct Run {
    plan: RoutingPlan,
    seed: u64,
    time: Duration,
    trace: Option<PiTrace>,
}

fn run_once(instance: &Instance, options: &SolveOptions, seed: u64) -> Result<Run> {
    let params = options.params.with_seed(seed);
    let start = Instant::now();
    let mut plan = route_all_schools(instance, options.mode, &params)?;
    let mut trace = None;
    if options.improve {
        let out = improve_with_trace(&plan, instance, &params)?;
        plan = out.plan;
        trace = Some(out.trace);
    }
    Ok(Run {
        plan,
        seed,
        time: start.elapsed(),
        trace,
    })
}

/// Routes, optionally improves, and schedules. With `repeat > 1` the runs
/// execute in parallel; the kept run has the fewest buses, then the least
/// total duration, then the lowest run index.
pub fn solve(instance: &Instance, options: &SolveOptions) -> Result<SolveResult> {
    if options.repeat == 0 {
        return Err(Error::InvalidParam("repeat must be at least 1".into()));
    }
    options.params.validate()?;
    let runs: Vec<Result<Run>> = (0..options.repeat)
        .into_par_iter()
        .map(|r| run_once(instance, options, run_seed(options.params.seed, r)))
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let routing_time = runs.iter().map(|r| r.time).sum();
    let mut best: Option<(usize, f64, Run, SchedulePlan)> = None;
    for run in runs {
        let schedule = min_buses(run.plan.trips(), instance);
        let tt = run.plan.total_duration();
        if best.as_ref().is_none_or(|b| (schedule.nb, tt) < (b.0, b.1)) {
            best = Some((schedule.nb, tt, run, schedule));
        }
    }
    let (_, _, run, schedule) = best.expect("at least one run");
    let report = schedule_report(run.plan.trips(), &schedule);
    Ok(SolveResult {
        plan: run.plan,
        schedule,
        report,
        seed: run.seed,
        routing_time,
        pi_trace: run.trace,
    })
}

/// One row under [`SOLVE_HEADER`]. `rt` is left empty when `None`.
pub fn solve_row(scenario: &str, instance: &Instance, report: &ScheduleReport, rt: Option<Duration>) -> String {
    format!(
        "{},{},{},{},{},{:.2},{}",
        csv_field(scenario),
        instance.schools().len(),
        instance.stops().len(),
        report.nt,
        report.nb,
        report.tt_min(),
        rt.map(|d| format!("{:.3}", d.as_secs_f64())).unwrap_or_default()
    )
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(flatten)]
    pub gen: GenParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub nt: usize,
    pub nb: usize,
    pub tt_min: f64,
    pub rt: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scenario: String,
    pub n_schools: usize,
    pub n_stops: usize,
    pub smcm: RunSummary,
    pub pmcm: RunSummary,
    pub pmcm_pi: RunSummary,
}

impl BenchRow {
    pub fn diff(&self) -> usize {
        self.smcm.nb.abs_diff(self.pmcm.nb)
    }

    /// `Diff / min(NB_S, NB_P) × 100`.
    pub fn pct(&self) -> f64 {
        let min = self.smcm.nb.min(self.pmcm.nb);
        if min == 0 {
            0.0
        } else {
            self.diff() as f64 / min as f64 * 100.0
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{},{}", csv_field(&self.scenario), self.n_schools, self.n_stops);
        for r in [&self.smcm, &self.pmcm, &self.pmcm_pi] {
            write!(s, ",{},{},{:.2},{:.3}", r.nt, r.nb, r.tt_min, r.rt.as_secs_f64()).expect("write to string");
        }
        write!(s, ",{},{:.2}", self.diff(), self.pct()).expect("write to string");
        s
    }
}

fn summarize(plan: &RoutingPlan, instance: &Instance, rt: Duration) -> RunSummary {
    let report = schedule_report(plan.trips(), &min_buses(plan.trips(), instance));
    RunSummary {
        nt: report.nt,
        nb: report.nb,
        tt_min: report.tt_min(),
        rt,
    }
}

/// SMCM, PMCM and PMCM followed by improvement on one instance.
pub fn bench_instance(name: &str, instance: &Instance, params: &SolverParams) -> Result<BenchRow> {
    let t = Instant::now();
    let smcm = route_all_schools(instance, Mode::Smcm, params)?;
    let rt_s = t.elapsed();
    let t = Instant::now();
    let pmcm = route_all_schools(instance, Mode::Pmcm, params)?;
    let rt_p = t.elapsed();
    let t = Instant::now();
    let improved = improve_with_trace(&pmcm, instance, params)?.plan;
    let rt_pi = rt_p + t.elapsed();
    Ok(BenchRow {
        scenario: name.to_string(),
        n_schools: instance.schools().len(),
        n_stops: instance.stops().len(),
        smcm: summarize(&smcm, instance, rt_s),
        pmcm: summarize(&pmcm, instance, rt_p),
        pmcm_pi: summarize(&improved, instance, rt_pi),
    })
}

#[derive(Debug)]
pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    /// Scenarios that failed, with the error message.
    pub failures: Vec<(String, String)>,
}

impl BenchOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(BENCH_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }
}

/// Runs every scenario in order; a failing scenario is recorded and the
/// rest still run.
pub fn run_bench(scenarios: &[Scenario], params: &SolverParams) -> BenchOutcome {
    let mut outcome = BenchOutcome {
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for sc in scenarios {
        match generate(&sc.gen).and_then(|inst| bench_instance(&sc.name, &inst, params)) {
            Ok(row) => outcome.rows.push(row),
            Err(e) => outcome.failures.push((sc.name.clone(), e.to_string())),
        }
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_bench_is_header_only() {
        let out = run_bench(&[], &SolverParams::default());
        assert_eq!(out.to_csv(), format!("{BENCH_HEADER}\n"));
    }

    #[test]
    fn diff_and_pct_columns() {
        let r = |nb| RunSummary {
            nt: 10,
            nb,
            tt_min: 1.0,
            rt: Duration::ZERO,
        };
        let row = BenchRow {
            scenario: "x".into(),
            n_schools: 2,
            n_stops: 20,
            smcm: r(8),
            pmcm: r(6),
            pmcm_pi: r(6),
        };
        assert_eq!(row.diff(), 2);
        assert!((row.pct() - 100.0 * 2.0 / 6.0).abs() < 1e-12);
        let csv = row.to_csv();
        let fields: Vec<&str> = csv.split(',').collect();
        assert_eq!(fields.len(), BENCH_HEADER.split(',').count());
        let nb_s: usize = fields[4].parse().unwrap();
        let nb_p: usize = fields[8].parse().unwrap();
        assert_eq!(fields[15].parse::<usize>().unwrap(), nb_s.abs_diff(nb_p));
        assert_eq!(fields[16], "33.33");
    }

    #[test]
    fn failing_scenario_is_isolated() {
        let bad = Scenario {
            name: "bad".into(),
            gen: GenParams::new(3, 1, 0),
        };
        let good = Scenario {
            name: "good".into(),
            gen: GenParams::new(2, 20, 1),
        };
        let out = run_bench(&[bad, good], &SolverParams::default());
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].0, "bad");
    }

    #[test]
    fn repeat_keeps_fewest_buses() {
        let inst = generate(&GenParams::new(3, 30, 5)).unwrap();
        let opts = SolveOptions {
            repeat: 4,
            improve: true,
            ..SolveOptions::default()
        };
        let best = solve(&inst, &opts).unwrap();
        for r in 0..4 {
            let single = solve(
                &inst,
                &SolveOptions {
                    repeat: 1,
                    params: opts.params.with_seed(run_seed(0, r)),
                    ..opts
                },
            )
            .unwrap();
            assert!(best.report.nb <= single.report.nb);
        }
        best.plan.validate_feasible(&inst).unwrap();
    }

    #[test]
    fn solve_row_layout() {
        let inst = generate(&GenParams::new(2, 20, 3)).unwrap();
        let res = solve(&inst, &SolveOptions::default()).unwrap();
        let row = solve_row("a,b", &inst, &res.report, None);
        assert!(row.starts_with("\"a,b\",2,20,"));
        assert!(row.ends_with(','));
    }
}

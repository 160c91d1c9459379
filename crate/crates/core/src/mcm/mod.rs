//! Insertion-based trip generation by iterated minimum-cost matching.
//!
//! Each school is routed on its own. Trips are seeded with far-away stops,
//! then every round builds the stop × trip insertion cost matrix, solves the
//! assignment problem and applies the matched insertions that respect
//! capacity and ride time. When no matched insertion is feasible, a new trip
//! is opened at the farthest un-routed stop.
//!
//! * [`Mode::Pmcm`] seeds `⌈Σq / Cap⌉` trips from k-means clusters and
//!   matches against all trips at once.
//! * [`Mode::Smcm`] seeds a single trip and only ever extends the most
//!   recently opened one.

pub mod kmeans;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{min_cost_assignment, pad_square, CostMatrix};
use crate::model::{best_insertion_position, Instance, RoutingPlan, Trip};
use crate::params::SolverParams;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Smcm,
    #[default]
    Pmcm,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Smcm => "smcm",
            Mode::Pmcm => "pmcm",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "smcm" => Ok(Mode::Smcm),
            "pmcm" => Ok(Mode::Pmcm),
            other => Err(format!("unknown mode `{other}` (expected smcm or pmcm)")),
        }
    }
}

/// One school's routing subproblem: its stops plus the whole instance for
/// bell times and locations of the other schools.
#[derive(Debug, Clone, Copy)]
pub struct SchoolContext<'a> {
    instance: &'a Instance,
    school: usize,
}

impl<'a> SchoolContext<'a> {
    pub fn new(instance: &'a Instance, school: usize) -> Result<Self> {
        if school >= instance.schools().len() {
            return Err(Error::InvalidInstance(format!("no school at index {school}")));
        }
        if instance.stops_of(school).is_empty() {
            return Err(Error::InvalidInstance(format!(
                "school {} has no stops",
                instance.school(school).id
            )));
        }
        Ok(Self { instance, school })
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn school(&self) -> usize {
        self.school
    }

    /// Stop indices, ascending by stop id.
    pub fn stops(&self) -> &'a [usize] {
        self.instance.stops_of(self.school)
    }

    pub fn total_students(&self) -> u32 {
        self.instance.school(self.school).student_count
    }

    fn farthest(&self, candidates: &[usize]) -> usize {
        let mut best = (candidates[0], f64::NEG_INFINITY);
        for &s in candidates {
            let d = self.instance.school_to_stop(self.school, s);
            if d > best.1 {
                best = (s, d);
            }
        }
        best.0
    }

    /// Rejects stops that no trip can serve, even alone.
    pub fn check_singletons(&self) -> Result<()> {
        let inst = self.instance;
        for &s in self.stops() {
            let trip = Trip::new(inst, self.school, vec![s]);
            let reason = if trip.load() > inst.capacity() {
                format!("has {} students, more than capacity {}", trip.load(), inst.capacity())
            } else if trip.duration() > inst.max_ride_time() {
                format!(
                    "needs {:.1}s alone, more than the max ride time {:.1}s",
                    trip.duration(),
                    inst.max_ride_time()
                )
            } else {
                continue;
            };
            return Err(Error::InfeasibleStop {
                school: inst.school(self.school).id,
                stop: inst.stop(s).id,
                reason,
            });
        }
        Ok(())
    }
}

/// Cost breakdown of inserting one stop into one trip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsertionEvaluation {
    pub stop: usize,
    pub trip: usize,
    pub position: usize,
    /// Remaining capacity after insertion; negative when over capacity.
    pub mq: i64,
    /// Schools the augmented trip can no longer reach by their bell.
    pub mc: usize,
    /// Augmented trip duration, seconds.
    pub mt: f64,
    pub ic: f64,
    pub feasible: bool,
}

pub fn evaluate_insertion(
    stop: usize,
    trip_id: usize,
    trip: &Trip,
    ctx: &SchoolContext<'_>,
    params: &SolverParams,
) -> InsertionEvaluation {
    let inst = ctx.instance;
    let (position, mt) = best_insertion_position(trip, stop, inst);
    let load = i64::from(trip.load()) + i64::from(inst.stop(stop).students);
    let mq = i64::from(inst.capacity()) - load;
    let last = if position == trip.len() { stop } else { trip.last_stop() };
    let reachable = (0..inst.schools().len())
        .filter(|&t| inst.reaches_school(trip.school(), mt, last, t))
        .count();
    let mc = inst.schools().len() - reachable;
    let feasible = mq >= 0 && mt <= inst.max_ride_time();
    let ic = if feasible {
        params.alpha.q * mq as f64 + params.alpha.c * mc as f64 + params.alpha.t * mt
    } else {
        params.big_penalty
    };
    InsertionEvaluation {
        stop,
        trip: trip_id,
        position,
        mq,
        mc,
        mt,
        ic,
        feasible,
    }
}

/// Insertion costs of un-routed stops (rows) into trips (columns), padded
/// square for the assignment solver.
#[derive(Debug, Clone)]
pub struct InsertionTable {
    pub matrix: CostMatrix,
    /// Row-major over the real block; `None` where the capacity check
    /// already ruled the insertion out.
    pub cells: Vec<Option<InsertionEvaluation>>,
    pub stops: Vec<usize>,
    pub trips: Vec<usize>,
}

impl InsertionTable {
    pub fn cell(&self, row: usize, col: usize) -> Option<&InsertionEvaluation> {
        self.cells[row * self.trips.len() + col].as_ref()
    }

    pub fn is_feasible(&self, row: usize, col: usize) -> bool {
        self.cell(row, col).is_some_and(|e| e.feasible)
    }
}

/// Builds the insertion table for `unrouted` against the trips listed in
/// `columns` (indices into `trips`).
pub fn build_cost_matrix(
    unrouted: &[usize],
    trips: &[Trip],
    columns: &[usize],
    ctx: &SchoolContext<'_>,
    params: &SolverParams,
) -> Result<InsertionTable> {
    let inst = ctx.instance;
    let (r, n) = (unrouted.len(), columns.len());
    let mut data = Vec::with_capacity(r * n);
    let mut cells = Vec::with_capacity(r * n);
    for &s in unrouted {
        let q = inst.stop(s).students;
        for &j in columns {
            let trip = &trips[j];
            if trip.load() + q > inst.capacity() {
                data.push(params.big_penalty);
                cells.push(None);
                continue;
            }
            let e = evaluate_insertion(s, j, trip, ctx, params);
            data.push(e.ic);
            cells.push(Some(e));
        }
    }
    Ok(InsertionTable {
        matrix: pad_square(CostMatrix::new(r, n, data)?),
        cells,
        stops: unrouted.to_vec(),
        trips: columns.to_vec(),
    })
}

/// Seeds the initial trips. Returns the trips and the stops left to route
/// (ascending by stop id).
pub fn initialize_trips(ctx: &SchoolContext<'_>, mode: Mode, params: &SolverParams) -> Result<(Vec<Trip>, Vec<usize>)> {
    let inst = ctx.instance;
    let stops = ctx.stops();
    let seeds: Vec<usize> = match mode {
        Mode::Smcm => vec![ctx.farthest(stops)],
        Mode::Pmcm => {
            let n0 = initial_trip_count(ctx.total_students(), inst.capacity()).min(stops.len());
            let points: Vec<_> = stops.iter().map(|&s| inst.stop(s).location).collect();
            let seed = derive_seed(params.seed, u64::from(inst.school(ctx.school).id));
            let clustering = kmeans::kmeans(&points, n0, seed)?;
            (0..n0)
                .map(|c| {
                    let members: Vec<usize> = stops
                        .iter()
                        .zip(&clustering.labels)
                        .filter(|&(_, &l)| l == c)
                        .map(|(&s, _)| s)
                        .collect();
                    ctx.farthest(&members)
                })
                .collect()
        }
    };
    let trips = seeds.iter().map(|&s| Trip::new(inst, ctx.school, vec![s])).collect();
    let unrouted = stops.iter().copied().filter(|s| !seeds.contains(s)).collect();
    Ok((trips, unrouted))
}

/// `⌈Σq / Cap⌉`, at least 1.
pub fn initial_trip_count(students: u32, capacity: u32) -> usize {
    (students.div_ceil(capacity) as usize).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub enum McmEvent {
    Seeded {
        trip: usize,
        stop: usize,
    },
    Matched {
        round: usize,
        rows: usize,
        cols: usize,
        feasible: usize,
    },
    Inserted {
        round: usize,
        trip: usize,
        stop: usize,
        position: usize,
    },
    NewTrip {
        round: usize,
        trip: usize,
        stop: usize,
    },
}

#[derive(Debug, Clone)]
pub struct SchoolRouting {
    pub trips: Vec<Trip>,
    pub rounds: usize,
    pub events: Vec<McmEvent>,
}

/// Routes one school to completion.
pub fn mcm_route_school(ctx: &SchoolContext<'_>, mode: Mode, params: &SolverParams) -> Result<SchoolRouting> {
    ctx.check_singletons()?;
    let inst = ctx.instance;
    let (mut trips, mut unrouted) = initialize_trips(ctx, mode, params)?;
    let mut events: Vec<McmEvent> = trips
        .iter()
        .enumerate()
        .map(|(trip, t)| McmEvent::Seeded {
            trip,
            stop: t.stops()[0],
        })
        .collect();
    let limit = 2 * ctx.stops().len();
    let mut round = 0;
    while !unrouted.is_empty() {
        round += 1;
        assert!(round <= limit, "matching rounds exceeded 2 × stops");
        let columns: Vec<usize> = match mode {
            Mode::Pmcm => (0..trips.len()).collect(),
            Mode::Smcm => vec![trips.len() - 1],
        };
        let table = build_cost_matrix(&unrouted, &trips, &columns, ctx, params)?;
        let assignment = min_cost_assignment(&table.matrix)?;
        let chosen: Vec<InsertionEvaluation> = assignment
            .real_pairs(&table.matrix)
            .filter(|&(i, j)| table.is_feasible(i, j))
            .map(|(i, j)| *table.cell(i, j).expect("feasible cell"))
            .collect();
        events.push(McmEvent::Matched {
            round,
            rows: unrouted.len(),
            cols: columns.len(),
            feasible: chosen.len(),
        });
        if chosen.is_empty() {
            let stop = ctx.farthest(&unrouted);
            trips.push(Trip::new(inst, ctx.school, vec![stop]));
            unrouted.retain(|&s| s != stop);
            events.push(McmEvent::NewTrip {
                round,
                trip: trips.len() - 1,
                stop,
            });
            continue;
        }
        for e in &chosen {
            trips[e.trip].insert(inst, e.position, e.stop);
            debug_assert!((trips[e.trip].duration() - e.mt).abs() < 1e-6);
            events.push(McmEvent::Inserted {
                round,
                trip: e.trip,
                stop: e.stop,
                position: e.position,
            });
        }
        unrouted.retain(|s| !chosen.iter().any(|e| e.stop == *s));
    }
    Ok(SchoolRouting {
        trips,
        rounds: round,
        events,
    })
}

/// Routes every school (in parallel) and concatenates the trips in school
/// order. Each school draws from its own seed stream, so the result does
/// not depend on scheduling.
pub fn route_all_schools(instance: &Instance, mode: Mode, params: &SolverParams) -> Result<RoutingPlan> {
    let schools: Vec<usize> = (0..instance.schools().len())
        .filter(|&k| !instance.stops_of(k).is_empty())
        .collect();
    let results: Vec<Result<Vec<Trip>>> = schools
        .par_iter()
        .map(|&k| {
            let ctx = SchoolContext::new(instance, k)?;
            Ok(mcm_route_school(&ctx, mode, params)?.trips)
        })
        .collect();
    let mut trips = Vec::new();
    for r in results {
        trips.extend(r?);
    }
    Ok(RoutingPlan::new(trips))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{trip_is_feasible, Metric, Point, School, Stop, FEET_PER_MILE};
    use crate::params::BIG_PENALTY;

    const MILE: f64 = FEET_PER_MILE;

    fn line_school(qs: &[u32], capacity: u32, mrt: f64) -> Instance {
        let schools = vec![School::new(0, Point::default(), 43_200.0)];
        let stops = qs
            .iter()
            .enumerate()
            .map(|(i, &q)| Stop {
                id: i as u32,
                school_id: 0,
                location: Point::new((i as f64 + 1.0) * 0.3 * MILE, ((i * 37) % 11) as f64 * 0.2 * MILE),
                students: q,
            })
            .collect();
        Instance::new(schools, stops, capacity, mrt, 20.0, Metric::Euclidean).unwrap()
    }

    #[test]
    fn insertion_cost_arithmetic() {
        // Cap 66, trip load 50, stop q = 10 → MQ = 6
        let inst = line_school(&[50, 10, 20], 66, 5400.0);
        let ctx = SchoolContext::new(&inst, 0).unwrap();
        let trip = Trip::new(&inst, 0, vec![0]);
        let ones = SolverParams {
            alpha: crate::params::InsertionWeights { q: 1.0, c: 1.0, t: 1.0 },
            ..SolverParams::default()
        };
        let e = evaluate_insertion(1, 0, &trip, &ctx, &ones);
        assert_eq!(e.mq, 6);
        assert!(e.feasible);
        // single school, own bell is unreachable once MT > 0
        assert_eq!(e.mc, 1);
        assert!((e.ic - (6.0 + 1.0 + e.mt)).abs() < 1e-9);

        // q = 20 into load 50 → over capacity
        let e = evaluate_insertion(2, 0, &trip, &ctx, &ones);
        assert!(!e.feasible);
        assert_eq!(e.mq, -4);
        assert_eq!(e.ic, BIG_PENALTY);
    }

    #[test]
    fn initial_trip_counts() {
        assert_eq!(initial_trip_count(100, 66), 2);
        assert_eq!(initial_trip_count(66, 66), 1);
        assert_eq!(initial_trip_count(10, 66), 1);
        assert_eq!(initial_trip_count(0, 66), 1);
    }

    #[test]
    fn smcm_seeds_the_farthest_stop() {
        let inst = line_school(&[5; 9], 66, 5400.0);
        let ctx = SchoolContext::new(&inst, 0).unwrap();
        let (trips, unrouted) = initialize_trips(&ctx, Mode::Smcm, &SolverParams::default()).unwrap();
        assert_eq!(trips.len(), 1);
        let far = (0..9)
            .max_by(|&a, &b| inst.school_to_stop(0, a).total_cmp(&inst.school_to_stop(0, b)))
            .unwrap();
        assert_eq!(trips[0].stops(), &[far]);
        assert_eq!(unrouted.len(), 8);
    }

    #[test]
    fn pmcm_seeds_one_trip_per_capacity_unit() {
        let inst = line_school(&[20, 20, 20, 20, 20], 66, 5400.0); // Σq = 100
        let ctx = SchoolContext::new(&inst, 0).unwrap();
        let (trips, unrouted) = initialize_trips(&ctx, Mode::Pmcm, &SolverParams::default()).unwrap();
        assert_eq!(trips.len(), 2);
        assert_eq!(unrouted.len(), 3);

        let small = line_school(&[5, 5], 66, 5400.0);
        let ctx = SchoolContext::new(&small, 0).unwrap();
        let (trips, _) = initialize_trips(&ctx, Mode::Pmcm, &SolverParams::default()).unwrap();
        assert_eq!(trips.len(), 1);
    }

    #[test]
    fn cost_matrix_shapes() {
        let inst = line_school(&[5; 7], 66, 5400.0);
        let ctx = SchoolContext::new(&inst, 0).unwrap();
        let trips = vec![Trip::new(&inst, 0, vec![0]), Trip::new(&inst, 0, vec![1])];
        let p = SolverParams::default();
        let t = build_cost_matrix(&[2, 3, 4, 5, 6], &trips, &[0, 1], &ctx, &p).unwrap();
        assert_eq!((t.matrix.rows(), t.matrix.cols()), (5, 5));
        assert_eq!((t.matrix.real_rows(), t.matrix.real_cols()), (5, 2));

        let t = build_cost_matrix(&[2], &trips, &[1], &ctx, &p).unwrap();
        assert_eq!((t.matrix.rows(), t.matrix.cols()), (1, 1));

        let full = line_school(&[60, 60, 60], 66, 5400.0);
        let ctx = SchoolContext::new(&full, 0).unwrap();
        let trips = vec![Trip::new(&full, 0, vec![0])];
        let t = build_cost_matrix(&[1, 2], &trips, &[0], &ctx, &p).unwrap();
        assert!((0..2).all(|i| t.matrix.get(i, 0) == BIG_PENALTY));
    }

    #[test]
    fn single_stop_school() {
        let inst = line_school(&[7], 66, 5400.0);
        for mode in [Mode::Smcm, Mode::Pmcm] {
            let r = mcm_route_school(&SchoolContext::new(&inst, 0).unwrap(), mode, &SolverParams::default()).unwrap();
            assert_eq!(r.trips.len(), 1);
            assert_eq!(r.trips[0].stops(), &[0]);
        }
    }

    #[test]
    fn oversized_stop_is_reported() {
        let inst = line_school(&[5, 70], 66, 5400.0);
        let err = route_all_schools(&inst, Mode::Pmcm, &SolverParams::default()).unwrap_err();
        assert!(matches!(err, Error::InfeasibleStop { stop: 1, .. }), "{err}");

        let far = line_school(&[5, 5], 66, 60.0);
        assert!(matches!(
            route_all_schools(&far, Mode::Smcm, &SolverParams::default()),
            Err(Error::InfeasibleStop { .. })
        ));
    }

    #[test]
    fn routes_respect_limits_and_lower_bound() {
        let qs: Vec<u32> = (0..25).map(|i| 1 + (i * 7 % 20)).collect();
        let inst = line_school(&qs, 66, 2400.0);
        let total: u32 = qs.iter().sum();
        for mode in [Mode::Smcm, Mode::Pmcm] {
            let plan = route_all_schools(&inst, mode, &SolverParams::default()).unwrap();
            plan.validate_feasible(&inst).unwrap();
            assert!(plan.len() >= initial_trip_count(total, 66));
            assert!(plan.trips().iter().all(|t| trip_is_feasible(t, &inst)));
        }
    }

    #[test]
    fn mixed_feasibility_applies_only_feasible_pairs() {
        // Trip 0 is nearly full, trip 1 has room: both stops get matched,
        // only the insertion into trip 1 is applied this round.
        let inst = line_school(&[60, 10, 10, 10], 66, 5400.0);
        let ctx = SchoolContext::new(&inst, 0).unwrap();
        let trips = vec![Trip::new(&inst, 0, vec![0]), Trip::new(&inst, 0, vec![1])];
        let t = build_cost_matrix(&[2, 3], &trips, &[0, 1], &ctx, &SolverParams::default()).unwrap();
        let a = min_cost_assignment(&t.matrix).unwrap();
        let real: Vec<_> = a.real_pairs(&t.matrix).collect();
        assert_eq!(real.len(), 2);
        let feasible: Vec<_> = real.iter().filter(|&&(i, j)| t.is_feasible(i, j)).collect();
        assert_eq!(feasible.len(), 1);
        assert_eq!(feasible[0].1, 1);
    }
}

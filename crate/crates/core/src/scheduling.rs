//! Chaining trips into bus routes with the fewest buses.
//!
//! Trip start times are fixed at their school's bell, so the compatibility
//! graph is a DAG and the minimum number of buses is a minimum path cover:
//! `NT − |maximum matching|`. Among maximum matchings the one with the least
//! total deadhead is used to build the routes.

use serde::{Deserialize, Serialize};

use crate::matching::{max_bipartite_matching, min_cost_max_matching};
use crate::model::{deadhead, trip_trip_compatible, Instance, Trip};

/// `adj[i][j]` holds when one bus can run trip `i` and then trip `j`.
pub fn compatibility_graph(trips: &[Trip], instance: &Instance) -> Vec<Vec<bool>> {
    trips
        .iter()
        .enumerate()
        .map(|(i, a)| {
            trips
                .iter()
                .enumerate()
                .map(|(j, b)| i != j && trip_trip_compatible(a, b, instance))
                .collect()
        })
        .collect()
}

/// Number of buses only, skipping the deadhead optimization.
pub fn min_bus_count(trips: &[Trip], instance: &Instance) -> usize {
    trips.len() - max_bipartite_matching(&compatibility_graph(trips, instance)).len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub bus: usize,
    /// Indices into the scheduled trip list, in service order.
    pub trips: Vec<usize>,
    /// Departure of each trip (its school's bell), seconds.
    pub starts_s: Vec<f64>,
    /// Arrival at the last stop of each trip, seconds.
    pub ends_s: Vec<f64>,
    /// Empty legs between consecutive trips; one shorter than `trips`.
    pub deadheads_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub routes: Vec<Route>,
    pub nb: usize,
    pub total_deadhead_s: f64,
}

impl SchedulePlan {
    pub fn to_json(&self) -> String {
        let file = ScheduleFile {
            routes: self
                .routes
                .iter()
                .map(|r| RouteRecord {
                    bus: r.bus,
                    trips: r.trips.clone(),
                    deadheads_s: r.deadheads_s.clone(),
                })
                .collect(),
            nb: self.nb,
            total_deadhead_s: self.total_deadhead_s,
        };
        serde_json::to_string_pretty(&file).expect("schedule serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteRecord {
    pub bus: usize,
    pub trips: Vec<usize>,
    pub deadheads_s: Vec<f64>,
}

/// On-disk schedule layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub routes: Vec<RouteRecord>,
    pub nb: usize,
    pub total_deadhead_s: f64,
}

/// Minimum-bus schedule of `trips`; ties in bus count go to the least total
/// deadhead. Routes are ordered by their first trip index.
pub fn min_buses(trips: &[Trip], instance: &Instance) -> SchedulePlan {
    let n = trips.len();
    let adj = compatibility_graph(trips, instance);
    let cost: Vec<Vec<f64>> = trips
        .iter()
        .enumerate()
        .map(|(i, a)| {
            trips
                .iter()
                .enumerate()
                .map(|(j, b)| if adj[i][j] { deadhead(a, b, instance) } else { 0.0 })
                .collect()
        })
        .collect();
    let matching = min_cost_max_matching(&adj, &cost);

    let mut next = vec![None; n];
    let mut has_pred = vec![false; n];
    for &(i, j) in &matching {
        next[i] = Some(j);
        has_pred[j] = true;
    }
    let mut routes = Vec::new();
    let mut total_deadhead_s = 0.0;
    for first in (0..n).filter(|&i| !has_pred[i]) {
        let mut chain = vec![first];
        while let Some(j) = next[*chain.last().expect("non-empty")] {
            chain.push(j);
        }
        let starts_s: Vec<f64> = chain
            .iter()
            .map(|&i| instance.school(trips[i].school()).bell_time)
            .collect();
        let ends_s = chain
            .iter()
            .zip(&starts_s)
            .map(|(&i, s)| s + trips[i].duration())
            .collect();
        let deadheads_s: Vec<f64> = chain
            .windows(2)
            .map(|w| deadhead(&trips[w[0]], &trips[w[1]], instance))
            .collect();
        total_deadhead_s += deadheads_s.iter().sum::<f64>();
        routes.push(Route {
            bus: routes.len(),
            trips: chain,
            starts_s,
            ends_s,
            deadheads_s,
        });
    }
    debug_assert_eq!(routes.iter().map(|r| r.trips.len()).sum::<usize>(), n);
    SchedulePlan {
        nb: routes.len(),
        routes,
        total_deadhead_s,
    }
}

/// Aggregates of a routing plan and its schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub nt: usize,
    pub nb: usize,
    pub tt_s: f64,
    pub total_deadhead_s: f64,
}

impl ScheduleReport {
    pub fn tt_min(&self) -> f64 {
        self.tt_s / 60.0
    }
}

pub fn schedule_report(trips: &[Trip], schedule: &SchedulePlan) -> ScheduleReport {
    ScheduleReport {
        nt: trips.len(),
        nb: schedule.nb,
        tt_s: trips.iter().map(Trip::duration).sum(),
        total_deadhead_s: schedule.total_deadhead_s,
    }
}

/// Checks that `schedule` covers every trip once with compatible chains.
pub fn validate_schedule(trips: &[Trip], schedule: &SchedulePlan, instance: &Instance) -> Result<(), String> {
    let mut seen = vec![false; trips.len()];
    for r in &schedule.routes {
        for &t in &r.trips {
            if t >= trips.len() || std::mem::replace(&mut seen[t], true) {
                return Err(format!("trip {t} missing or scheduled twice"));
            }
        }
        for w in r.trips.windows(2) {
            if !trip_trip_compatible(&trips[w[0]], &trips[w[1]], instance) {
                return Err(format!("trips {} and {} are not compatible", w[0], w[1]));
            }
        }
        for k in 1..r.trips.len() {
            if r.starts_s[k] + 1e-6 < r.ends_s[k - 1] + r.deadheads_s[k - 1] {
                return Err(format!("bus {} arrives late for trip {}", r.bus, r.trips[k]));
            }
        }
    }
    if let Some(t) = seen.iter().position(|s| !s) {
        return Err(format!("trip {t} not scheduled"));
    }
    if schedule.nb != schedule.routes.len() {
        return Err("nb differs from route count".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Metric, Point, School, ServiceTimes, Stop, FEET_PER_MILE};

    /// One stop per school, all at the origin side; schools on a line one
    /// mile apart. At 60 mph a mile is 60 s.
    fn staggered(bells: &[f64]) -> (Instance, Vec<Trip>) {
        let schools: Vec<School> = bells
            .iter()
            .enumerate()
            .map(|(k, &b)| School::new(k as u32, Point::new(k as f64 * FEET_PER_MILE, 0.0), b))
            .collect();
        let stops = (0..bells.len())
            .map(|k| Stop {
                id: k as u32,
                school_id: k as u32,
                location: Point::new(k as f64 * FEET_PER_MILE, FEET_PER_MILE),
                students: 5,
            })
            .collect();
        let inst = Instance::new(schools, stops, 66, 5400.0, 60.0, Metric::Euclidean)
            .unwrap()
            .with_service_times(ServiceTimes::ZERO);
        let trips = (0..bells.len()).map(|k| Trip::new(&inst, k, vec![k])).collect();
        (inst, trips)
    }

    #[test]
    fn equal_bells_have_no_edges() {
        let (inst, trips) = staggered(&[43_200.0, 43_200.0]);
        let g = compatibility_graph(&trips, &inst);
        assert!(g.iter().flatten().all(|&e| !e));
        assert_eq!(min_buses(&trips, &inst).nb, 2);
    }

    #[test]
    fn staggered_chain_arithmetic() {
        // Each trip runs 60 s; deadhead from stop k to school k+1 is √2 mi
        // ≈ 84.85 s, to school k+2 is √5 mi ≈ 134.16 s.
        let (inst, trips) = staggered(&[0.0, 200.0, 400.0]);
        let g = compatibility_graph(&trips, &inst);
        assert!(g[0][1] && g[1][2] && g[0][2]);
        assert!(!g[1][0] && !g[2][1] && !g[2][0]);
        let s = min_buses(&trips, &inst);
        assert_eq!(s.nb, 1);
        assert_eq!(s.routes[0].trips, vec![0, 1, 2]);
        let d = 2.0_f64.sqrt() * 60.0;
        assert!((s.total_deadhead_s - 2.0 * d).abs() < 1e-9);
        validate_schedule(&trips, &s, &inst).unwrap();

        // 0 → 1 needs 60 + 84.85 ≤ gap
        let (inst, trips) = staggered(&[0.0, 144.0]);
        assert!(!compatibility_graph(&trips, &inst)[0][1]);
        let (inst, trips) = staggered(&[0.0, 145.0]);
        assert!(compatibility_graph(&trips, &inst)[0][1]);
    }

    #[test]
    fn single_trip_and_empty() {
        let (inst, trips) = staggered(&[0.0]);
        let s = min_buses(&trips, &inst);
        assert_eq!(s.nb, 1);
        assert_eq!(s.total_deadhead_s, 0.0);
        let r = schedule_report(&trips, &s);
        assert_eq!((r.nt, r.nb), (1, 1));
        assert!((r.tt_s - 60.0).abs() < 1e-9);
        assert_eq!(min_buses(&[], &inst).nb, 0);
    }

    #[test]
    fn two_disjoint_chains() {
        let (inst, trips) = staggered(&[0.0, 0.0, 10_000.0, 10_000.0]);
        let s = min_buses(&trips, &inst);
        assert_eq!(s.nb, 2);
        assert_eq!(min_bus_count(&trips, &inst), 2);
        validate_schedule(&trips, &s, &inst).unwrap();
    }

    #[test]
    fn prefers_shorter_deadhead() {
        // 0 and 1 end together, 2 and 3 start later; the cheap pairing
        // matches each trip with its neighbour school.
        let (inst, trips) = staggered(&[0.0, 0.0, 10_000.0, 10_000.0]);
        let s = min_buses(&trips, &inst);
        let near = |a: usize, b: usize| inst.stop_to_school(trips[a].stops()[0], trips[b].school());
        let best = (near(0, 2) + near(1, 3)).min(near(0, 3) + near(1, 2));
        assert!((s.total_deadhead_s - best).abs() < 1e-9);
    }

    #[test]
    fn json_layout() {
        let (inst, trips) = staggered(&[0.0, 200.0]);
        let json = min_buses(&trips, &inst).to_json();
        let file: ScheduleFile = serde_json::from_str(&json).unwrap();
        assert_eq!(file.nb, 1);
        assert_eq!(file.routes[0].trips, vec![0, 1]);
        assert_eq!(file.routes[0].deadheads_s.len(), 1);
    }
}

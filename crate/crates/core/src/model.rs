//! Problem-domain types shared by every solver stage.
//!
//! Coordinates are in feet, times in seconds (bell times are seconds since
//! midnight), speed in miles per hour. Trips use the afternoon orientation:
//! the bus leaves its school at the bell time carrying every student of the
//! trip and drops them off stop by stop.
//!
//! Inside the crate schools and stops are addressed by their position in the
//! [`Instance`] vectors; external ids only appear at the serialization edge.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEET_PER_MILE: f64 = 5280.0;
pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
}

pub fn distance(a: Point, b: Point, metric: Metric) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    match metric {
        Metric::Euclidean => dx.hypot(dy),
        Metric::Manhattan => dx.abs() + dy.abs(),
    }
}

/// Seconds needed to cover `dist_ft` feet at `speed_mph`.
pub fn travel_time(dist_ft: f64, speed_mph: f64) -> f64 {
    dist_ft / FEET_PER_MILE / speed_mph * 3600.0
}

/// Linear service-time regressions: loading at the school and unloading at
/// each stop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceTimes {
    pub school_base_s: f64,
    pub school_per_student_s: f64,
    pub stop_base_s: f64,
    pub stop_per_student_s: f64,
}

impl Default for ServiceTimes {
    fn default() -> Self {
        Self {
            school_base_s: 29.0,
            school_per_student_s: 1.9,
            stop_base_s: 19.0,
            stop_per_student_s: 2.6,
        }
    }
}

impl ServiceTimes {
    /// All coefficients zero: durations reduce to pure driving time.
    pub const ZERO: Self = Self {
        school_base_s: 0.0,
        school_per_student_s: 0.0,
        stop_base_s: 0.0,
        stop_per_student_s: 0.0,
    };

    pub fn school(&self, students: u32) -> f64 {
        self.school_base_s + self.school_per_student_s * f64::from(students)
    }

    pub fn stop(&self, students: u32) -> f64 {
        self.stop_base_s + self.stop_per_student_s * f64::from(students)
    }

    fn is_default(&self) -> bool {
        *self == Self::default()
    }
}

/// Loading time at a school with `n_students` students: `29.0 + 1.9·n`.
pub fn school_service_time(n_students: u32) -> f64 {
    ServiceTimes::default().school(n_students)
}

/// Unloading time at a stop with `q` students: `19.0 + 2.6·q`.
pub fn stop_service_time(q: u32) -> f64 {
    ServiceTimes::default().stop(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct School {
    pub id: u32,
    pub location: Point,
    /// Dismissal time, seconds since midnight.
    pub bell_time: f64,
    /// Total students over the school's stops; filled in by [`Instance::new`].
    pub student_count: u32,
}

impl School {
    pub fn new(id: u32, location: Point, bell_time: f64) -> Self {
        Self {
            id,
            location,
            bell_time,
            student_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub id: u32,
    pub school_id: u32,
    pub location: Point,
    pub students: u32,
}

/// The immutable problem statement.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    schools: Vec<School>,
    stops: Vec<Stop>,
    depot: Option<Point>,
    capacity: u32,
    max_ride_time: f64,
    speed_mph: f64,
    metric: Metric,
    service: ServiceTimes,
    owner: Vec<usize>,
    // stop indices per school, ascending by stop id
    school_stops: Vec<Vec<usize>>,
    school_pos: HashMap<u32, usize>,
    stop_pos: HashMap<u32, usize>,
}

impl Instance {
    pub fn new(
        mut schools: Vec<School>,
        stops: Vec<Stop>,
        capacity: u32,
        max_ride_time: f64,
        speed_mph: f64,
        metric: Metric,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidInstance(msg));
        if capacity == 0 {
            return invalid("capacity must be > 0".into());
        }
        if !(max_ride_time > 0.0 && max_ride_time.is_finite()) {
            return invalid(format!("max ride time must be > 0, got {max_ride_time}"));
        }
        if !(speed_mph > 0.0 && speed_mph.is_finite()) {
            return invalid(format!("speed must be > 0, got {speed_mph}"));
        }
        let mut school_pos = HashMap::with_capacity(schools.len());
        for (k, school) in schools.iter().enumerate() {
            if school_pos.insert(school.id, k).is_some() {
                return invalid(format!("duplicate school id {}", school.id));
            }
            if !school.location.is_finite() {
                return invalid(format!("school {} has non-finite coordinates", school.id));
            }
            if !(0.0..SECONDS_PER_DAY).contains(&school.bell_time) {
                return invalid(format!(
                    "school {} bell time {} outside [0, 86400)",
                    school.id, school.bell_time
                ));
            }
        }
        let mut stop_pos = HashMap::with_capacity(stops.len());
        let mut owner = Vec::with_capacity(stops.len());
        let mut school_stops = vec![Vec::new(); schools.len()];
        let mut counts = vec![0u32; schools.len()];
        for (i, stop) in stops.iter().enumerate() {
            if stop_pos.insert(stop.id, i).is_some() {
                return invalid(format!("duplicate stop id {}", stop.id));
            }
            let Some(&k) = school_pos.get(&stop.school_id) else {
                return invalid(format!("stop {} references unknown school {}", stop.id, stop.school_id));
            };
            if stop.students == 0 {
                return invalid(format!("stop {} has no students", stop.id));
            }
            if !stop.location.is_finite() {
                return invalid(format!("stop {} has non-finite coordinates", stop.id));
            }
            owner.push(k);
            school_stops[k].push(i);
            counts[k] += stop.students;
        }
        for list in &mut school_stops {
            list.sort_by_key(|&i| stops[i].id);
        }
        for (school, n) in schools.iter_mut().zip(counts) {
            school.student_count = n;
        }
        Ok(Self {
            schools,
            stops,
            depot: None,
            capacity,
            max_ride_time,
            speed_mph,
            metric,
            service: ServiceTimes::default(),
            owner,
            school_stops,
            school_pos,
            stop_pos,
        })
    }

    pub fn with_service_times(mut self, service: ServiceTimes) -> Self {
        self.service = service;
        self
    }

    pub fn with_depot(mut self, depot: Option<Point>) -> Self {
        self.depot = depot;
        self
    }

    pub fn with_max_ride_time(mut self, max_ride_time: f64) -> Result<Self> {
        if !(max_ride_time > 0.0 && max_ride_time.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "max ride time must be > 0, got {max_ride_time}"
            )));
        }
        self.max_ride_time = max_ride_time;
        Ok(self)
    }

    pub fn schools(&self) -> &[School] {
        &self.schools
    }

    pub fn stops(&self) -> &[Stop] {
        &self.stops
    }

    pub fn school(&self, k: usize) -> &School {
        &self.schools[k]
    }

    pub fn stop(&self, i: usize) -> &Stop {
        &self.stops[i]
    }

    /// Stop indices owned by school `k`, ascending by stop id.
    pub fn stops_of(&self, k: usize) -> &[usize] {
        &self.school_stops[k]
    }

    /// School index owning stop `i`.
    pub fn owner(&self, i: usize) -> usize {
        self.owner[i]
    }

    pub fn school_index(&self, id: u32) -> Option<usize> {
        self.school_pos.get(&id).copied()
    }

    pub fn stop_index(&self, id: u32) -> Option<usize> {
        self.stop_pos.get(&id).copied()
    }

    pub fn depot(&self) -> Option<Point> {
        self.depot
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn max_ride_time(&self) -> f64 {
        self.max_ride_time
    }

    pub fn speed_mph(&self) -> f64 {
        self.speed_mph
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn service(&self) -> &ServiceTimes {
        &self.service
    }

    pub fn total_students(&self) -> u64 {
        self.stops.iter().map(|s| u64::from(s.students)).sum()
    }

    /// Driving time between two arbitrary points.
    pub fn travel(&self, a: Point, b: Point) -> f64 {
        travel_time(distance(a, b, self.metric), self.speed_mph)
    }

    pub fn stop_to_stop(&self, i: usize, j: usize) -> f64 {
        self.travel(self.stops[i].location, self.stops[j].location)
    }

    pub fn school_to_stop(&self, k: usize, i: usize) -> f64 {
        self.travel(self.schools[k].location, self.stops[i].location)
    }

    pub fn stop_to_school(&self, i: usize, k: usize) -> f64 {
        self.travel(self.stops[i].location, self.schools[k].location)
    }

    pub fn school_service(&self, k: usize) -> f64 {
        self.service.school(self.schools[k].student_count)
    }

    pub fn stop_service(&self, i: usize) -> f64 {
        self.service.stop(self.stops[i].students)
    }

    /// Whether a bus leaving school `from` at its bell time, busy for
    /// `duration` seconds and ending at stop `last_stop`, can reach school
    /// `target` by its bell time. Arrival exactly at the bell counts.
    pub fn reaches_school(&self, from: usize, duration: f64, last_stop: usize, target: usize) -> bool {
        self.schools[from].bell_time + duration + self.stop_to_school(last_stop, target)
            <= self.schools[target].bell_time
    }
}

/// Duration of a trip: driving along school → s1 → … → sk plus loading at
/// the school and unloading at every stop.
pub fn trip_travel_time(instance: &Instance, school: usize, stops: &[usize]) -> f64 {
    let mut drive = 0.0;
    let mut at = instance.school(school).location;
    for &s in stops {
        let next = instance.stop(s).location;
        drive += instance.travel(at, next);
        at = next;
    }
    let unload: f64 = stops.iter().map(|&s| instance.stop_service(s)).sum();
    drive + instance.school_service(school) + unload
}

/// An ordered visit of one school's stops with cached load and duration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    school: usize,
    stops: Vec<usize>,
    load: u32,
    duration: f64,
}

impl Trip {
    pub fn new(instance: &Instance, school: usize, stops: Vec<usize>) -> Self {
        let mut trip = Self {
            school,
            stops,
            load: 0,
            duration: 0.0,
        };
        trip.refresh(instance);
        trip
    }

    pub fn school(&self) -> usize {
        self.school
    }

    pub fn stops(&self) -> &[usize] {
        &self.stops
    }

    pub fn len(&self) -> usize {
        self.stops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    pub fn load(&self) -> u32 {
        self.load
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// # Panics
    /// On an empty trip.
    pub fn last_stop(&self) -> usize {
        *self.stops.last().expect("empty trip has no last stop")
    }

    pub fn contains(&self, stop: usize) -> bool {
        self.stops.contains(&stop)
    }

    /// Inserts `stop` so that it becomes `stops()[pos]`.
    pub fn insert(&mut self, instance: &Instance, pos: usize, stop: usize) {
        self.stops.insert(pos, stop);
        self.refresh(instance);
    }

    /// Removes `stop`, returning its former position.
    pub fn remove(&mut self, instance: &Instance, stop: usize) -> Option<usize> {
        let pos = self.stops.iter().position(|&s| s == stop)?;
        self.stops.remove(pos);
        self.refresh(instance);
        Some(pos)
    }

    fn refresh(&mut self, instance: &Instance) {
        self.load = self.stops.iter().map(|&s| instance.stop(s).students).sum();
        self.duration = if self.stops.is_empty() {
            0.0
        } else {
            trip_travel_time(instance, self.school, &self.stops)
        };
    }
}

pub fn trip_is_feasible(trip: &Trip, instance: &Instance) -> bool {
    trip.load <= instance.capacity() && trip.duration <= instance.max_ride_time()
}

pub fn trip_school_compatible(trip: &Trip, target_school: usize, instance: &Instance) -> bool {
    instance.reaches_school(trip.school, trip.duration, trip.last_stop(), target_school)
}

/// Whether one bus can run `pred` and then `succ`: after finishing `pred`
/// it deadheads to `succ`'s school and must arrive by `succ`'s bell.
pub fn trip_trip_compatible(pred: &Trip, succ: &Trip, instance: &Instance) -> bool {
    pred != succ && instance.reaches_school(pred.school, pred.duration, pred.last_stop(), succ.school)
}

/// Deadhead from the end of `pred` to the start of `succ`, in seconds.
pub fn deadhead(pred: &Trip, succ: &Trip, instance: &Instance) -> f64 {
    instance.stop_to_school(pred.last_stop(), succ.school)
}

/// Best place to insert `stop` into `trip`: the position minimizing the
/// augmented duration (earliest position on ties) and that duration.
///
/// Position `p` means the stop becomes `trip.stops()[p]`.
pub fn best_insertion_position(trip: &Trip, stop: usize, instance: &Instance) -> (usize, f64) {
    let school_loc = instance.school(trip.school).location;
    let new_loc = instance.stop(stop).location;
    let loc = |s: usize| instance.stop(s).location;
    let mut best = (0, f64::INFINITY);
    for pos in 0..=trip.stops.len() {
        let prev = if pos == 0 { school_loc } else { loc(trip.stops[pos - 1]) };
        let delta = match trip.stops.get(pos) {
            Some(&next) => {
                instance.travel(prev, new_loc) + instance.travel(new_loc, loc(next)) - instance.travel(prev, loc(next))
            }
            None => instance.travel(prev, new_loc),
        };
        if delta < best.1 {
            best = (pos, delta);
        }
    }
    let pos = best.0;
    let mut seq = Vec::with_capacity(trip.stops.len() + 1);
    seq.extend_from_slice(&trip.stops[..pos]);
    seq.push(stop);
    seq.extend_from_slice(&trip.stops[pos..]);
    (pos, trip_travel_time(instance, trip.school, &seq))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanMetrics {
    /// Number of trips.
    pub tn: usize,
    /// Ordered compatible trip pairs.
    pub tc: usize,
    /// Total trip duration, seconds.
    pub tt: f64,
}

pub fn plan_metrics(plan: &RoutingPlan, instance: &Instance) -> PlanMetrics {
    let trips = plan.trips();
    let mut tc = 0;
    for (i, a) in trips.iter().enumerate() {
        for (j, b) in trips.iter().enumerate() {
            if i != j && instance.reaches_school(a.school, a.duration, a.last_stop(), b.school) {
                tc += 1;
            }
        }
    }
    PlanMetrics {
        tn: trips.len(),
        tc,
        tt: trips.iter().map(Trip::duration).sum(),
    }
}

/// All trips across all schools.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoutingPlan {
    trips: Vec<Trip>,
}

impl RoutingPlan {
    pub fn new(trips: Vec<Trip>) -> Self {
        Self { trips }
    }

    pub fn trips(&self) -> &[Trip] {
        &self.trips
    }

    pub fn into_trips(self) -> Vec<Trip> {
        self.trips
    }

    pub fn len(&self) -> usize {
        self.trips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trips.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.trips.iter().map(Trip::duration).sum()
    }

    /// Checks the structural invariants: every stop in exactly one non-empty
    /// trip of its own school, and cached load/duration consistent.
    pub fn validate(&self, instance: &Instance) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPlan(msg));
        let mut seen = vec![false; instance.stops().len()];
        for (t, trip) in self.trips.iter().enumerate() {
            if trip.is_empty() {
                return bad(format!("trip {t} is empty"));
            }
            if trip.school >= instance.schools().len() {
                return bad(format!("trip {t} has unknown school index {}", trip.school));
            }
            for &s in &trip.stops {
                if s >= seen.len() {
                    return bad(format!("trip {t} has unknown stop index {s}"));
                }
                if instance.owner(s) != trip.school {
                    return bad(format!(
                        "stop {} of school {} is on a trip of school {}",
                        instance.stop(s).id,
                        instance.stop(s).school_id,
                        instance.school(trip.school).id
                    ));
                }
                if std::mem::replace(&mut seen[s], true) {
                    return bad(format!("stop {} is routed more than once", instance.stop(s).id));
                }
            }
            let fresh = Trip::new(instance, trip.school, trip.stops.clone());
            if fresh.load != trip.load || (fresh.duration - trip.duration).abs() > 1e-9 {
                return bad(format!("trip {t} has stale cached load/duration"));
            }
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            return bad(format!("stop {} is not routed", instance.stop(i).id));
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus capacity and ride-time limits.
    pub fn validate_feasible(&self, instance: &Instance) -> Result<()> {
        self.validate(instance)?;
        for (t, trip) in self.trips.iter().enumerate() {
            if !trip_is_feasible(trip, instance) {
                return Err(Error::InvalidPlan(format!(
                    "trip {t} is infeasible: load {} (cap {}), duration {:.3}s (max {:.3}s)",
                    trip.load,
                    instance.capacity(),
                    trip.duration,
                    instance.max_ride_time()
                )));
            }
        }
        Ok(())
    }

    /// Trips as `(school id, stop ids)` sorted, for order-insensitive
    /// comparison of plans.
    pub fn canonical(&self, instance: &Instance) -> Vec<(u32, Vec<u32>)> {
        let mut out: Vec<_> = self
            .trips
            .iter()
            .map(|t| {
                (
                    instance.school(t.school).id,
                    t.stops.iter().map(|&s| instance.stop(s).id).collect(),
                )
            })
            .collect();
        out.sort();
        out
    }

    pub fn to_file(&self, instance: &Instance) -> PlanFile {
        PlanFile {
            trips: self
                .trips
                .iter()
                .map(|t| TripRecord {
                    school_id: instance.school(t.school).id,
                    stops: t.stops.iter().map(|&s| instance.stop(s).id).collect(),
                    mt_s: t.duration,
                    load: t.load,
                })
                .collect(),
        }
    }

    /// Rebuilds a plan from its file form; cached values must agree with a
    /// fresh computation.
    pub fn from_file(instance: &Instance, file: &PlanFile) -> Result<Self> {
        let mut trips = Vec::with_capacity(file.trips.len());
        for (t, rec) in file.trips.iter().enumerate() {
            let school = instance
                .school_index(rec.school_id)
                .ok_or_else(|| Error::InvalidPlan(format!("trip {t}: unknown school id {}", rec.school_id)))?;
            let stops = rec
                .stops
                .iter()
                .map(|&id| {
                    instance
                        .stop_index(id)
                        .ok_or_else(|| Error::InvalidPlan(format!("trip {t}: unknown stop id {id}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let trip = Trip::new(instance, school, stops);
            if trip.load != rec.load || (trip.duration - rec.mt_s).abs() > 1e-6 {
                return Err(Error::InvalidPlan(format!(
                    "trip {t}: recorded load/mt_s ({}, {}) disagree with recomputed ({}, {})",
                    rec.load, rec.mt_s, trip.load, trip.duration
                )));
            }
            trips.push(trip);
        }
        let plan = Self::new(trips);
        plan.validate(instance)?;
        Ok(plan)
    }

    pub fn to_json(&self, instance: &Instance) -> String {
        serde_json::to_string_pretty(&self.to_file(instance)).expect("plan serializes")
    }

    pub fn from_json(instance: &Instance, json: &str) -> Result<Self> {
        Self::from_file(instance, &serde_json::from_str(json)?)
    }
}

// ---------------------------------------------------------------------------
// File formats. Field order here is the byte order on disk.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchoolRecord {
    pub id: u32,
    pub x_ft: f64,
    pub y_ft: f64,
    pub bell_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopRecord {
    pub id: u32,
    pub school_id: u32,
    pub x_ft: f64,
    pub y_ft: f64,
    pub students: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepotRecord {
    pub x_ft: f64,
    pub y_ft: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub schools: Vec<SchoolRecord>,
    pub stops: Vec<StopRecord>,
    pub capacity: u32,
    pub mrt_s: f64,
    pub speed_mph: f64,
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depot: Option<DepotRecord>,
    #[serde(default, skip_serializing_if = "ServiceTimes::is_default")]
    pub service: ServiceTimes,
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        Self {
            schools: inst
                .schools
                .iter()
                .map(|s| SchoolRecord {
                    id: s.id,
                    x_ft: s.location.x,
                    y_ft: s.location.y,
                    bell_s: s.bell_time,
                })
                .collect(),
            stops: inst
                .stops
                .iter()
                .map(|s| StopRecord {
                    id: s.id,
                    school_id: s.school_id,
                    x_ft: s.location.x,
                    y_ft: s.location.y,
                    students: s.students,
                })
                .collect(),
            capacity: inst.capacity,
            mrt_s: inst.max_ride_time,
            speed_mph: inst.speed_mph,
            metric: inst.metric,
            depot: inst.depot.map(|p| DepotRecord { x_ft: p.x, y_ft: p.y }),
            service: inst.service,
        }
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        let schools = file
            .schools
            .into_iter()
            .map(|s| School::new(s.id, Point::new(s.x_ft, s.y_ft), s.bell_s))
            .collect();
        let stops = file
            .stops
            .into_iter()
            .map(|s| Stop {
                id: s.id,
                school_id: s.school_id,
                location: Point::new(s.x_ft, s.y_ft),
                students: s.students,
            })
            .collect();
        Ok(
            Instance::new(schools, stops, file.capacity, file.mrt_s, file.speed_mph, file.metric)?
                .with_service_times(file.service)
                .with_depot(file.depot.map(|d| Point::new(d.x_ft, d.y_ft))),
        )
    }
}

impl Instance {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceFile::from(self)).expect("instance serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str::<InstanceFile>(json)?.try_into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub school_id: u32,
    pub stops: Vec<u32>,
    pub mt_s: f64,
    pub load: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub trips: Vec<TripRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MILE: f64 = FEET_PER_MILE;

    fn two_school_instance() -> Instance {
        // School A at origin (bell 12:00), school B 3 miles east (12:45).
        let schools = vec![
            School::new(10, Point::new(0.0, 0.0), 43_200.0),
            School::new(20, Point::new(3.0 * MILE, 0.0), 45_900.0),
        ];
        let stops = vec![
            Stop {
                id: 1,
                school_id: 10,
                location: Point::new(MILE, 0.0),
                students: 5,
            },
            Stop {
                id: 2,
                school_id: 10,
                location: Point::new(2.0 * MILE, 0.0),
                students: 5,
            },
            Stop {
                id: 3,
                school_id: 20,
                location: Point::new(3.0 * MILE, MILE),
                students: 10,
            },
        ];
        Instance::new(schools, stops, 66, 5400.0, 20.0, Metric::Euclidean).unwrap()
    }

    #[test]
    fn distance_examples() {
        let o = Point::new(0.0, 0.0);
        let p = Point::new(3.0 * MILE, 4.0 * MILE);
        assert!((distance(o, p, Metric::Euclidean) - 5.0 * MILE).abs() < 1e-9);
        assert!((distance(o, p, Metric::Manhattan) - 7.0 * MILE).abs() < 1e-9);
        assert_eq!(distance(p, p, Metric::Euclidean), 0.0);
        assert_eq!(distance(p, p, Metric::Manhattan), 0.0);
    }

    #[test]
    fn travel_time_examples() {
        assert!((travel_time(MILE, 20.0) - 180.0).abs() < 1e-9);
        assert_eq!(travel_time(0.0, 35.0), 0.0);
        assert!((travel_time(40.0 * MILE, 20.0) - 7200.0).abs() < 1e-9);
    }

    #[test]
    fn service_time_regressions() {
        assert!((school_service_time(10) - 48.0).abs() < 1e-12);
        assert_eq!(school_service_time(0), 29.0);
        assert!((school_service_time(100) - 219.0).abs() < 1e-12);
        assert!((stop_service_time(5) - 32.0).abs() < 1e-12);
        assert_eq!(stop_service_time(0), 19.0);
        assert!((stop_service_time(20) - 71.0).abs() < 1e-12);
    }

    #[test]
    fn trip_duration_composes_driving_and_service() {
        // one stop 1 mile away, q = 5, school total n = 10
        let schools = vec![School::new(0, Point::default(), 43_200.0)];
        let stops = vec![
            Stop {
                id: 0,
                school_id: 0,
                location: Point::new(MILE, 0.0),
                students: 5,
            },
            Stop {
                id: 1,
                school_id: 0,
                location: Point::new(0.0, 50.0 * MILE),
                students: 5,
            },
        ];
        let inst = Instance::new(schools, stops, 66, 5400.0, 20.0, Metric::Euclidean).unwrap();
        let mt = trip_travel_time(&inst, 0, &[0]);
        assert!((mt - 260.0).abs() < 1e-9, "{mt}");

        let bare = inst.clone().with_service_times(ServiceTimes::ZERO);
        assert!((trip_travel_time(&bare, 0, &[0]) - 180.0).abs() < 1e-9);
    }

    #[test]
    fn equidistant_orders_give_equal_duration() {
        // two stops on opposite sides of the school, 1 mile each way
        let schools = vec![School::new(0, Point::new(MILE, 0.0), 43_200.0)];
        let stops = vec![
            Stop {
                id: 0,
                school_id: 0,
                location: Point::new(0.0, 0.0),
                students: 3,
            },
            Stop {
                id: 1,
                school_id: 0,
                location: Point::new(2.0 * MILE, 0.0),
                students: 3,
            },
        ];
        let inst = Instance::new(schools, stops, 66, 5400.0, 20.0, Metric::Euclidean).unwrap();
        let a = trip_travel_time(&inst, 0, &[0, 1]);
        let b = trip_travel_time(&inst, 0, &[1, 0]);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn feasibility_boundaries_are_inclusive() {
        let inst = two_school_instance();
        let trip = Trip::new(&inst, 0, vec![0, 1]);
        let at_limit = inst.clone().with_max_ride_time(trip.duration()).unwrap();
        assert!(trip_is_feasible(&trip, &at_limit));
        let just_under = inst.clone().with_max_ride_time(trip.duration() - 1.0).unwrap();
        assert!(!trip_is_feasible(&trip, &just_under));

        let full = Instance::new(
            vec![School::new(0, Point::default(), 0.0)],
            vec![
                Stop {
                    id: 0,
                    school_id: 0,
                    location: Point::new(1.0, 0.0),
                    students: 66,
                },
                Stop {
                    id: 1,
                    school_id: 0,
                    location: Point::new(2.0, 0.0),
                    students: 67,
                },
            ],
            66,
            5400.0,
            20.0,
            Metric::Euclidean,
        )
        .unwrap();
        assert!(trip_is_feasible(&Trip::new(&full, 0, vec![0]), &full));
        assert!(!trip_is_feasible(&Trip::new(&full, 0, vec![1]), &full));
    }

    #[test]
    fn school_compatibility_arithmetic() {
        // SB_A = 43200, MT = 1800 (10 miles), deadhead = 600 (10/3 miles), SB_B = 45900
        let schools = vec![
            School::new(0, Point::default(), 43_200.0),
            School::new(1, Point::new(10.0 * MILE, 10.0 * MILE / 3.0), 45_900.0),
        ];
        let stops = vec![
            Stop {
                id: 0,
                school_id: 0,
                location: Point::new(10.0 * MILE, 0.0),
                students: 4,
            },
            Stop {
                id: 1,
                school_id: 1,
                location: Point::new(10.0 * MILE, 5.0 * MILE),
                students: 4,
            },
        ];
        let inst = Instance::new(schools, stops, 66, 5400.0, 20.0, Metric::Euclidean)
            .unwrap()
            .with_service_times(ServiceTimes::ZERO);
        let trip = Trip::new(&inst, 0, vec![0]);
        assert!((trip.duration() - 1800.0).abs() < 1e-9);
        assert!((inst.stop_to_school(0, 1) - 600.0).abs() < 1e-9);
        assert!(trip_school_compatible(&trip, 1, &inst));
        assert!(!trip_school_compatible(&trip, 0, &inst), "own school with MT > 0");
        // B's bell is later, so B's trips can never feed A
        let b_trip = Trip::new(&inst, 1, vec![1]);
        assert!(!trip_school_compatible(&b_trip, 0, &inst));
    }

    #[test]
    fn trip_trip_compatibility() {
        let inst = two_school_instance();
        let a = Trip::new(&inst, 0, vec![0, 1]);
        let b = Trip::new(&inst, 1, vec![2]);
        assert!(trip_trip_compatible(&a, &b, &inst));
        assert!(!trip_trip_compatible(&b, &a, &inst));
        assert!(!trip_trip_compatible(&a, &a, &inst));

        // zero-duration pred, equal bells, zero deadhead → compatible
        let z = Instance::new(
            vec![
                School::new(0, Point::default(), 100.0),
                School::new(1, Point::default(), 100.0),
            ],
            vec![
                Stop {
                    id: 0,
                    school_id: 0,
                    location: Point::default(),
                    students: 1,
                },
                Stop {
                    id: 1,
                    school_id: 1,
                    location: Point::default(),
                    students: 1,
                },
            ],
            66,
            5400.0,
            20.0,
            Metric::Euclidean,
        )
        .unwrap()
        .with_service_times(ServiceTimes::ZERO);
        let p = Trip::new(&z, 0, vec![0]);
        let s = Trip::new(&z, 1, vec![1]);
        assert_eq!(p.duration(), 0.0);
        assert!(trip_trip_compatible(&p, &s, &z));
    }

    fn ray_instance() -> Instance {
        // school at origin, stops along the x axis at 1, 2, 3 miles
        let schools = vec![School::new(0, Point::default(), 43_200.0)];
        let stops = (0..3)
            .map(|i| Stop {
                id: i,
                school_id: 0,
                location: Point::new(f64::from(i + 1) * MILE, 0.0),
                students: 2,
            })
            .collect();
        Instance::new(schools, stops, 66, 5400.0, 20.0, Metric::Euclidean).unwrap()
    }

    #[test]
    fn insertion_between_school_and_stop_goes_first() {
        let inst = ray_instance();
        let trip = Trip::new(&inst, 0, vec![1]); // stop at 2 miles
        let (pos, mt) = best_insertion_position(&trip, 0, &inst);
        assert_eq!(pos, 0);
        assert!((mt - (trip.duration() + inst.stop_service(0))).abs() < 1e-9);
    }

    #[test]
    fn insertion_beyond_last_goes_last() {
        let inst = ray_instance();
        let trip = Trip::new(&inst, 0, vec![0, 1]);
        let (pos, mt) = best_insertion_position(&trip, 2, &inst);
        assert_eq!(pos, 2);
        assert!((mt - trip_travel_time(&inst, 0, &[0, 1, 2])).abs() < 1e-9);
    }

    #[test]
    fn insertion_into_empty_trip() {
        let inst = ray_instance();
        let trip = Trip::new(&inst, 0, vec![]);
        assert_eq!(best_insertion_position(&trip, 2, &inst).0, 0);
    }

    #[test]
    fn plan_metrics_chain() {
        // three schools with staggered bells, each trip one stop next to its school
        let schools: Vec<_> = (0..3)
            .map(|k| {
                School::new(
                    k,
                    Point::new(f64::from(k) * MILE, 0.0),
                    43_200.0 + 3600.0 * f64::from(k),
                )
            })
            .collect();
        let stops = (0..3)
            .map(|k| Stop {
                id: k,
                school_id: k,
                location: Point::new(f64::from(k) * MILE, 100.0),
                students: 1,
            })
            .collect();
        let inst = Instance::new(schools, stops, 66, 5400.0, 20.0, Metric::Euclidean).unwrap();
        let plan = RoutingPlan::new((0..3).map(|k| Trip::new(&inst, k, vec![k])).collect());
        let m = plan_metrics(&plan, &inst);
        assert_eq!(m.tn, 3);
        assert_eq!(m.tc, 3);
        assert!((m.tt - plan.total_duration()).abs() < 1e-12);

        let single = RoutingPlan::new(vec![Trip::new(&inst, 0, vec![0])]);
        let m = plan_metrics(&single, &inst);
        assert_eq!((m.tn, m.tc), (1, 0));
        assert_eq!(m.tt, single.trips()[0].duration());
    }

    #[test]
    fn instance_json_round_trip_is_byte_stable() {
        let inst = two_school_instance().with_depot(Some(Point::new(1.0, 2.0)));
        let json = inst.to_json();
        let back = Instance::from_json(&json).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.to_json(), json);
        assert!(json.find("\"schools\"").unwrap() < json.find("\"stops\"").unwrap());
        assert!(!json.contains("service"), "default service times are omitted");
    }

    #[test]
    fn plan_json_round_trip_and_validation() {
        let inst = two_school_instance();
        let plan = RoutingPlan::new(vec![Trip::new(&inst, 0, vec![1, 0]), Trip::new(&inst, 1, vec![2])]);
        plan.validate_feasible(&inst).unwrap();
        let json = plan.to_json(&inst);
        assert_eq!(RoutingPlan::from_json(&inst, &json).unwrap(), plan);

        let missing = RoutingPlan::new(vec![Trip::new(&inst, 0, vec![0])]);
        assert!(missing.validate(&inst).is_err());
        let wrong_school = RoutingPlan::new(vec![Trip::new(&inst, 1, vec![0, 1, 2])]);
        assert!(wrong_school.validate(&inst).is_err());
    }

    #[test]
    fn instance_validation() {
        let school = || vec![School::new(0, Point::default(), 0.0)];
        let stop = |school_id, students| Stop {
            id: 0,
            school_id,
            location: Point::default(),
            students,
        };
        assert!(Instance::new(school(), vec![stop(9, 1)], 66, 1.0, 1.0, Metric::Euclidean).is_err());
        assert!(Instance::new(school(), vec![stop(0, 0)], 66, 1.0, 1.0, Metric::Euclidean).is_err());
        assert!(Instance::new(school(), vec![stop(0, 1)], 0, 1.0, 1.0, Metric::Euclidean).is_err());
        assert!(Instance::new(school(), vec![stop(0, 1)], 66, 0.0, 1.0, Metric::Euclidean).is_err());
        assert!(Instance::new(school(), vec![stop(0, 1)], 66, 1.0, 0.0, Metric::Euclidean).is_err());
        let inst = Instance::new(school(), vec![stop(0, 7)], 66, 1.0, 1.0, Metric::Euclidean).unwrap();
        assert_eq!(inst.school(0).student_count, 7);
    }

    fn coord() -> impl Strategy<Value = f64> {
        0.0..211_200.0f64
    }

    proptest! {
        #[test]
        fn distance_symmetric_and_manhattan_dominates(ax in coord(), ay in coord(), bx in coord(), by in coord()) {
            let a = Point::new(ax, ay);
            let b = Point::new(bx, by);
            for m in [Metric::Euclidean, Metric::Manhattan] {
                prop_assert_eq!(distance(a, b, m), distance(b, a, m));
            }
            prop_assert!(distance(a, b, Metric::Manhattan) >= distance(a, b, Metric::Euclidean));
        }

        #[test]
        fn cached_duration_matches_recomputation(
            pts in prop::collection::vec((coord(), coord(), 1u32..20), 2..9),
            order in prop::collection::vec(any::<prop::sample::Index>(), 8),
        ) {
            let schools = vec![School::new(0, Point::new(100_000.0, 100_000.0), 50_000.0)];
            let stops: Vec<_> = pts.iter().enumerate().map(|(i, &(x, y, q))| Stop {
                id: i as u32, school_id: 0, location: Point::new(x, y), students: q,
            }).collect();
            let n = stops.len();
            let inst = Instance::new(schools, stops, 500, 1e6, 20.0, Metric::Euclidean).unwrap();
            let mut trip = Trip::new(&inst, 0, vec![]);
            for (s, idx) in (0..n).zip(order.iter()) {
                let pos = idx.index(trip.len() + 1);
                trip.insert(&inst, pos, s);
                prop_assert!((trip.duration() - trip_travel_time(&inst, 0, trip.stops())).abs() < 1e-9);
            }
            let victim = order[0].index(n);
            trip.remove(&inst, victim);
            prop_assert!((trip.duration() - trip_travel_time(&inst, 0, trip.stops())).abs() < 1e-9);
            prop_assert_eq!(trip.load(), trip.stops().iter().map(|&s| inst.stop(s).students).sum::<u32>());
        }

        #[test]
        fn best_insertion_matches_enumeration(
            pts in prop::collection::vec((coord(), coord()), 2..8),
        ) {
            let schools = vec![School::new(0, Point::new(100_000.0, 100_000.0), 50_000.0)];
            let stops: Vec<_> = pts.iter().enumerate().map(|(i, &(x, y))| Stop {
                id: i as u32, school_id: 0, location: Point::new(x, y), students: 1,
            }).collect();
            let n = stops.len();
            let inst = Instance::new(schools, stops, 500, 1e6, 20.0, Metric::Manhattan).unwrap();
            let trip = Trip::new(&inst, 0, (0..n - 1).collect());
            let (pos, mt) = best_insertion_position(&trip, n - 1, &inst);
            let oracle = (0..n).map(|p| {
                let mut seq = trip.stops().to_vec();
                seq.insert(p, n - 1);
                trip_travel_time(&inst, 0, &seq)
            }).fold(f64::INFINITY, f64::min);
            prop_assert!((mt - oracle).abs() < 1e-9);
            let mut seq = trip.stops().to_vec();
            seq.insert(pos, n - 1);
            prop_assert!((trip_travel_time(&inst, 0, &seq) - mt).abs() < 1e-9);
        }

        #[test]
        fn school_compatibility_is_monotone(extra_mt in 0.0..5000.0f64, bell_gap in 0.0..20_000.0f64) {
            let schools = vec![
                School::new(0, Point::default(), 40_000.0),
                School::new(1, Point::new(30_000.0, 0.0), 40_000.0 + bell_gap),
            ];
            let stops = vec![
                Stop { id: 0, school_id: 0, location: Point::new(10_000.0, 0.0), students: 1 },
                Stop { id: 1, school_id: 0, location: Point::new(-10_000.0, 0.0), students: 1 },
            ];
            let inst = Instance::new(schools, stops, 66, 1e6, 20.0, Metric::Euclidean).unwrap();
            let base = Trip::new(&inst, 0, vec![0]);
            // longer duration, same last stop
            if inst.reaches_school(0, base.duration() + extra_mt, 0, 1) {
                prop_assert!(inst.reaches_school(0, base.duration(), 0, 1));
            }
            // farther last stop (larger deadhead), same duration
            if inst.reaches_school(0, base.duration(), 1, 1) {
                prop_assert!(inst.reaches_school(0, base.duration(), 0, 1));
            }
        }
    }
}

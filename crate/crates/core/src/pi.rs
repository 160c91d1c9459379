//! Post-improvement of a routing plan by single-stop relocations.
//!
//! Stops are visited in ascending removal cost (stops on short trips first)
//! and tried after their closest same-school stops on other trips. A
//! candidate move must be feasible, must not undo a recent move (tabu list)
//! and must pass a simulated-annealing draw on the surrogate cost. The
//! improved plan is only returned when it schedules onto strictly fewer
//! buses than the input.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{plan_metrics, trip_is_feasible, trip_trip_compatible, Instance, RoutingPlan, Trip};
use crate::params::{ExchangeWeights, SolverParams, SurrogateWeights};
use crate::scheduling::min_bus_count;

/// Recently applied moves `(pl, p)` and the outer iteration they were made in.
#[derive(Debug, Clone, Default)]
pub struct TabuList {
    tenure: u64,
    records: HashMap<(usize, usize), u64>,
}

impl TabuList {
    pub fn new(tenure: u64) -> Self {
        Self {
            tenure,
            records: HashMap::new(),
        }
    }

    pub fn tenure(&self) -> u64 {
        self.tenure
    }

    pub fn record(&mut self, pl: usize, p: usize, iteration: u64) {
        self.records.insert((pl, p), iteration);
    }

    /// Whether `(pl, p)` was recorded less than `tenure` iterations before
    /// `iteration`.
    pub fn contains(&self, pl: usize, p: usize, iteration: u64) -> bool {
        self.records
            .get(&(pl, p))
            .is_some_and(|&at| iteration.saturating_sub(at) < self.tenure)
    }

    /// Moving `p` right after `pl` is forbidden while the reverse move
    /// `(p, pl)` is recorded.
    pub fn forbids(&self, pl: usize, p: usize, iteration: u64) -> bool {
        self.contains(p, pl, iteration)
    }
}

/// Trips plus a stop → trip lookup.
#[derive(Debug, Clone)]
pub struct WorkingPlan {
    trips: Vec<Trip>,
    trip_of: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveOutcome {
    pub from_trip: usize,
    pub to_trip: usize,
    /// The source trip became empty and was removed; trip indices after it
    /// shift down by one.
    pub deleted: bool,
}

impl WorkingPlan {
    pub fn new(instance: &Instance, plan: &RoutingPlan) -> Result<Self> {
        plan.validate(instance)?;
        let mut wp = Self {
            trips: plan.trips().to_vec(),
            trip_of: Vec::new(),
        };
        wp.reindex(instance);
        Ok(wp)
    }

    fn reindex(&mut self, instance: &Instance) {
        self.trip_of = vec![None; instance.stops().len()];
        for (t, trip) in self.trips.iter().enumerate() {
            for &s in trip.stops() {
                self.trip_of[s] = Some(t);
            }
        }
    }

    pub fn trips(&self) -> &[Trip] {
        &self.trips
    }

    pub fn trip_of(&self, stop: usize) -> Option<usize> {
        self.trip_of[stop]
    }

    pub fn into_plan(self) -> RoutingPlan {
        RoutingPlan::new(self.trips)
    }

    /// Destination trip with `p` placed right after `pl`, and the source
    /// trip without `p` (`None` when it would be empty).
    fn candidate(&self, instance: &Instance, pl: usize, p: usize) -> Result<(usize, usize, Trip, Option<Trip>)> {
        let (Some(to), Some(from)) = (self.trip_of[pl], self.trip_of[p]) else {
            return Err(Error::InvalidMove(format!("stop {pl} or {p} is not routed")));
        };
        if to == from {
            return Err(Error::InvalidMove(format!("stops {pl} and {p} share a trip")));
        }
        if instance.owner(pl) != instance.owner(p) {
            return Err(Error::InvalidMove(format!(
                "stops {pl} and {p} belong to different schools"
            )));
        }
        let dest = &self.trips[to];
        let at = dest.stops().iter().position(|&s| s == pl).expect("indexed stop") + 1;
        let mut stops = dest.stops().to_vec();
        stops.insert(at, p);
        let dest = Trip::new(instance, dest.school(), stops);
        let src = &self.trips[from];
        let rest: Vec<usize> = src.stops().iter().copied().filter(|&s| s != p).collect();
        let src = (!rest.is_empty()).then(|| Trip::new(instance, src.school(), rest));
        Ok((from, to, dest, src))
    }

    /// Whether moving `p` right after `pl` keeps the destination trip
    /// within capacity and ride time.
    pub fn move_is_feasible(&self, instance: &Instance, pl: usize, p: usize) -> bool {
        self.candidate(instance, pl, p)
            .is_ok_and(|(_, _, dest, _)| trip_is_feasible(&dest, instance))
    }

    /// Exact change in surrogate cost if `p` moved right after `pl`. Only
    /// terms touching the two affected trips are recomputed.
    pub fn surrogate_delta(&self, instance: &Instance, pl: usize, p: usize, gamma: &SurrogateWeights) -> Result<f64> {
        let (from, to, dest, src) = self.candidate(instance, pl, p)?;
        let others = || {
            self.trips
                .iter()
                .enumerate()
                .filter(move |&(i, _)| i != from && i != to)
                .map(|(_, t)| t)
        };
        let old = [&self.trips[from], &self.trips[to]];
        let new: Vec<&Trip> = std::iter::once(&dest).chain(src.as_ref()).collect();
        let d_tc = touching_pairs(&new, others(), instance) as f64 - touching_pairs(&old, others(), instance) as f64;
        let d_tn = new.len() as f64 - 2.0;
        let d_tt = new.iter().map(|t| t.duration()).sum::<f64>() - old.iter().map(|t| t.duration()).sum::<f64>();
        Ok(gamma.n * d_tn - gamma.c * d_tc + gamma.t * d_tt)
    }

    /// Moves `p` right after `pl`, deleting `p`'s trip if it empties.
    pub fn apply_move(&mut self, instance: &Instance, pl: usize, p: usize) -> Result<MoveOutcome> {
        let (from, to, dest, src) = self.candidate(instance, pl, p)?;
        if !trip_is_feasible(&dest, instance) {
            return Err(Error::InvalidMove(format!(
                "placing stop {p} after {pl} exceeds capacity or ride time"
            )));
        }
        self.trips[to] = dest;
        self.trip_of[p] = Some(to);
        let deleted = match src {
            Some(t) => {
                self.trips[from] = t;
                false
            }
            None => {
                self.trips.remove(from);
                self.reindex(instance);
                true
            }
        };
        Ok(MoveOutcome {
            from_trip: from,
            to_trip: to,
            deleted,
        })
    }
}

/// Ordered compatible pairs with at least one member in `affected`.
fn touching_pairs<'a>(affected: &[&Trip], others: impl Iterator<Item = &'a Trip>, instance: &Instance) -> usize {
    let mut n = 0;
    for o in others {
        for a in affected {
            n += usize::from(trip_trip_compatible(a, o, instance));
            n += usize::from(trip_trip_compatible(o, a, instance));
        }
    }
    for (i, a) in affected.iter().enumerate() {
        for (j, b) in affected.iter().enumerate() {
            if i != j {
                n += usize::from(trip_trip_compatible(a, b, instance));
            }
        }
    }
    n
}

/// `β_s · |trip| + β_T · MT + ε` for a stop on `trip`.
pub fn removal_cost(trip: &Trip, beta: &ExchangeWeights, epsilon: f64) -> f64 {
    beta.s * trip.len() as f64 + beta.t_removal * trip.duration() + epsilon
}

/// All routed stops in ascending removal cost, ties by stop index. One ε is
/// drawn per stop, in stop index order.
pub fn build_exchange_list(plan: &WorkingPlan, params: &SolverParams, rng: &mut impl Rng) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = (0..plan.trip_of.len())
        .filter_map(|s| plan.trip_of[s].map(|t| (s, t)))
        .map(|(s, t)| {
            let eps = draw_epsilon(params.anneal.epsilon_max, rng);
            (removal_cost(&plan.trips[t], &params.beta, eps), s)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, s)| s).collect()
}

fn draw_epsilon(max: f64, rng: &mut impl Rng) -> f64 {
    if max > 0.0 {
        rng.random_range(0.0..=max)
    } else {
        0.0
    }
}

/// `β_Q · load(s's trip) + β_T · MT(s's trip) + β_D · travel(s, p)`.
pub fn closeness(s_trip: &Trip, s: usize, p: usize, instance: &Instance, beta: &ExchangeWeights) -> f64 {
    beta.q * f64::from(s_trip.load()) + beta.t_close * s_trip.duration() + beta.d * instance.stop_to_stop(s, p)
}

/// Same-school stops off `p`'s trip, closest first (ties by stop index),
/// at most `n_nei` of them.
pub fn build_neighborhood(p: usize, plan: &WorkingPlan, instance: &Instance, params: &SolverParams) -> Vec<usize> {
    let Some(own) = plan.trip_of[p] else {
        return Vec::new();
    };
    let mut keyed: Vec<(f64, usize)> = instance
        .stops_of(instance.owner(p))
        .iter()
        .filter_map(|&s| match plan.trip_of[s] {
            Some(t) if t != own => Some((closeness(&plan.trips[t], s, p, instance, &params.beta), s)),
            _ => None,
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.truncate(params.anneal.n_nei);
    keyed.into_iter().map(|(_, s)| s).collect()
}

/// `γ_N · TN − γ_C · TC + γ_T · TT`.
pub fn surrogate_cost(plan: &RoutingPlan, instance: &Instance, gamma: &SurrogateWeights) -> f64 {
    let m = plan_metrics(plan, instance);
    gamma.n * m.tn as f64 - gamma.c * m.tc as f64 + gamma.t * m.tt
}

/// `1 / (1 + e^{(sc_new − sc_old) / t})`.
pub fn acceptance_probability(sc_new: f64, sc_old: f64, t: f64) -> f64 {
    debug_assert!(t > 0.0);
    let x = (sc_new - sc_old) / t;
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// One Bernoulli trial with success probability `p`.
pub fn bernoulli(p: f64, rng: &mut impl Rng) -> bool {
    rng.random::<f64>() < p
}

/// Moves `p` right after `pl` on a copy of `plan`.
pub fn apply_move(plan: &RoutingPlan, instance: &Instance, pl: usize, p: usize) -> Result<RoutingPlan> {
    let mut wp = WorkingPlan::new(instance, plan)?;
    wp.apply_move(instance, pl, p)?;
    Ok(wp.into_plan())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoveRecord {
    /// Outer iteration (starting at 1).
    pub iteration: u64,
    pub pl: usize,
    pub p: usize,
    pub delta_sc: f64,
    pub probability: f64,
    pub outcome: MoveOutcome,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PiTrace {
    pub moves: Vec<MoveRecord>,
    /// Temperature at the start of each outer iteration.
    pub temperatures: Vec<f64>,
    /// Candidates that passed feasibility but were blocked as tabu.
    pub tabu_blocked: usize,
    pub nb_initial: usize,
    pub nb_improved: usize,
    /// Whether the improved plan was returned (strictly fewer buses).
    pub kept_improved: bool,
}

#[derive(Debug, Clone)]
pub struct PiOutcome {
    pub plan: RoutingPlan,
    pub trace: PiTrace,
}

pub fn improve(plan: &RoutingPlan, instance: &Instance, params: &SolverParams) -> Result<RoutingPlan> {
    Ok(improve_with_trace(plan, instance, params)?.plan)
}

/// Runs the annealing loop and returns the better of input and result by
/// scheduled bus count (input on ties), with a trace of what happened.
pub fn improve_with_trace(plan: &RoutingPlan, instance: &Instance, params: &SolverParams) -> Result<PiOutcome> {
    params.validate()?;
    plan.validate_feasible(instance)?;
    let a = &params.anneal;
    let nb_initial = min_bus_count(plan.trips(), instance);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut wp = WorkingPlan::new(instance, plan)?;
    let tn = plan.len() as f64;
    let mut tabu = TabuList::new(a.tabu_tenure.unwrap_or(10 * plan.len() as u64));
    let mut trace = PiTrace {
        nb_initial,
        ..PiTrace::default()
    };

    let mut t = a.t_initial_factor * tn;
    let mut it: u32 = 0;
    let mut iteration: u64 = 0;
    while t > 0.0 && t >= a.t_end && it <= a.it_max {
        iteration += 1;
        trace.temperatures.push(t);
        let el = build_exchange_list(&wp, params, &mut rng);
        'scan: for &p in &el {
            for pl in build_neighborhood(p, &wp, instance, params) {
                if !wp.move_is_feasible(instance, pl, p) {
                    continue;
                }
                if tabu.forbids(pl, p, iteration) {
                    trace.tabu_blocked += 1;
                    continue;
                }
                let delta = wp.surrogate_delta(instance, pl, p, &params.gamma)?;
                let probability = acceptance_probability(delta, 0.0, t);
                let accept = if a.always_accept_improving && delta < 0.0 {
                    true
                } else {
                    bernoulli(probability, &mut rng)
                };
                if accept {
                    let outcome = wp.apply_move(instance, pl, p)?;
                    tabu.record(pl, p, iteration);
                    trace.moves.push(MoveRecord {
                        iteration,
                        pl,
                        p,
                        delta_sc: delta,
                        probability,
                        outcome,
                    });
                    it = 0;
                    break 'scan;
                }
            }
        }
        it += 1;
        t *= a.t_cool;
    }

    let improved = wp.into_plan();
    improved.validate_feasible(instance)?;
    trace.nb_improved = min_bus_count(improved.trips(), instance);
    trace.kept_improved = trace.nb_improved < nb_initial;
    let plan = if trace.kept_improved { improved } else { plan.clone() };
    Ok(PiOutcome { plan, trace })
}

//! Exhaustive solvers for tiny instances, used as ground truth in tests.
//!
//! Every solver checks its size limits up front and refuses rather than
//! truncating the search.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::max_bipartite_matching;
use crate::mcm::SchoolContext;
use crate::model::{trip_trip_compatible, Instance, RoutingPlan, Trip};
use crate::params::SurrogateWeights;
use crate::pi::surrogate_cost;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleLimits {
    pub max_stops_per_school: usize,
    pub max_trips: usize,
    /// Cap on school-plan combinations tried by [`exact_fleet`].
    pub max_combinations: usize,
    pub time_budget: Option<Duration>,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_stops_per_school: 7,
            max_trips: 8,
            max_combinations: 2_000_000,
            time_budget: None,
        }
    }
}

struct Clock {
    start: Instant,
    budget: Option<Duration>,
}

impl Clock {
    fn new(limits: &OracleLimits) -> Self {
        Self {
            start: Instant::now(),
            budget: limits.time_budget,
        }
    }

    fn check(&self) -> Result<()> {
        match self.budget {
            Some(b) if self.start.elapsed() > b => Err(Error::OracleLimit {
                what: "elapsed ms",
                actual: self.start.elapsed().as_millis() as usize,
                limit: b.as_millis() as usize,
            }),
            _ => Ok(()),
        }
    }
}

fn check_limit(what: &'static str, actual: usize, limit: usize) -> Result<()> {
    if actual > limit {
        return Err(Error::OracleLimit { what, actual, limit });
    }
    Ok(())
}

/// Exact minimum number of buses covering `trips` with chains of
/// compatible trips.
pub fn exact_min_buses(trips: &[Trip], instance: &Instance, limits: &OracleLimits) -> Result<usize> {
    let n = trips.len();
    check_limit("trips", n, limits.max_trips.min(16))?;
    if n == 0 {
        return Ok(0);
    }
    let adj: Vec<Vec<bool>> = trips
        .iter()
        .map(|a| trips.iter().map(|b| trip_trip_compatible(a, b, instance)).collect())
        .collect();
    let full = 1usize << n;
    // ends[mask] has bit j when the trips of mask can be chained ending at j
    let mut ends = vec![0u32; full];
    for j in 0..n {
        ends[1 << j] = 1 << j;
    }
    for mask in 1..full {
        let e = ends[mask];
        if e == 0 {
            continue;
        }
        for last in (0..n).filter(|&j| e >> j & 1 == 1) {
            for next in (0..n).filter(|&k| mask >> k & 1 == 0 && adj[last][k]) {
                ends[mask | 1 << next] |= 1 << next;
            }
        }
    }
    let mut best = vec![usize::MAX; full];
    best[0] = 0;
    for mask in 1..full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        // every chain containing the lowest trip, plus any subset of the rest
        let mut sub = rest;
        loop {
            let chain = sub | low;
            if ends[chain] != 0 && best[mask ^ chain] != usize::MAX {
                best[mask] = best[mask].min(best[mask ^ chain] + 1);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    Ok(best[full - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// `γ_N · TN − γ_C · TC + γ_T · TT` of the school's trips.
    #[default]
    Surrogate,
    /// Fewest buses for the school's trips, then least total duration.
    Buses,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactRoute {
    pub trips: Vec<Trip>,
    pub surrogate: f64,
    pub nb: usize,
    pub tt: f64,
}

/// Feasible visiting orders of one block of stops.
#[derive(Debug, Clone, Default)]
struct Block {
    /// Order of least duration.
    best: Option<(Vec<usize>, f64)>,
    /// Least-duration order ending at each possible last stop.
    by_last: Vec<(Vec<usize>, f64)>,
}

/// All feasible blocks of a school's stops, keyed by bitmask over
/// `ctx.stops()`.
fn enumerate_blocks(ctx: &SchoolContext<'_>, clock: &Clock) -> Result<Vec<Block>> {
    let inst = ctx.instance();
    let stops = ctx.stops();
    let m = stops.len();
    let school = ctx.school();
    let mut blocks = vec![Block::default(); 1 << m];
    for (mask, block) in blocks.iter_mut().enumerate().skip(1) {
        clock.check()?;
        let members: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).map(|i| stops[i]).collect();
        let load: u32 = members.iter().map(|&s| inst.stop(s).students).sum();
        if load > inst.capacity() {
            continue;
        }
        let mut found: BTreeMap<usize, (Vec<usize>, f64)> = BTreeMap::new();
        let mut order = Vec::with_capacity(members.len());
        let mut used = vec![false; members.len()];
        search_orders(
            ctx,
            &members,
            &mut order,
            &mut used,
            inst.school_service(school),
            &mut found,
        );
        for (order, _) in found.into_values() {
            let trip = Trip::new(inst, school, order.clone());
            if trip.duration() > inst.max_ride_time() {
                continue;
            }
            let mt = trip.duration();
            if block.best.as_ref().is_none_or(|b| mt < b.1) {
                block.best = Some((order.clone(), mt));
            }
            block.by_last.push((order, mt));
        }
    }
    Ok(blocks)
}

fn search_orders(
    ctx: &SchoolContext<'_>,
    members: &[usize],
    order: &mut Vec<usize>,
    used: &mut [bool],
    partial: f64,
    found: &mut BTreeMap<usize, (Vec<usize>, f64)>,
) {
    let inst = ctx.instance();
    if partial > inst.max_ride_time() + 1e-6 {
        return;
    }
    if order.len() == members.len() {
        let last = *order.last().expect("non-empty block");
        if found.get(&last).is_none_or(|f| partial < f.1) {
            found.insert(last, (order.clone(), partial));
        }
        return;
    }
    for i in 0..members.len() {
        if used[i] {
            continue;
        }
        let s = members[i];
        let leg = match order.last() {
            None => inst.school_to_stop(ctx.school(), s),
            Some(&prev) => inst.stop_to_stop(prev, s),
        };
        used[i] = true;
        order.push(s);
        search_orders(ctx, members, order, used, partial + leg + inst.stop_service(s), found);
        order.pop();
        used[i] = false;
    }
}

/// Calls `visit` with the block masks of every set partition of `m`
/// elements (restricted growth strings).
fn for_each_partition(m: usize, visit: &mut dyn FnMut(&[usize]) -> Result<()>) -> Result<()> {
    fn go(i: usize, m: usize, blocks: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize]) -> Result<()>) -> Result<()> {
        if i == m {
            return visit(blocks);
        }
        let max = blocks.len();
        for b in 0..=max {
            if b == max {
                blocks.push(0);
            }
            blocks[b] |= 1 << i;
            go(i + 1, m, blocks, visit)?;
            blocks[b] &= !(1 << i);
            if b == max {
                blocks.pop();
            }
        }
        Ok(())
    }
    go(0, m, &mut Vec::with_capacity(m), visit)
}

/// Optimal trips for one school under `objective`.
pub fn exact_route(
    ctx: &SchoolContext<'_>,
    objective: Objective,
    gamma: &SurrogateWeights,
    limits: &OracleLimits,
) -> Result<ExactRoute> {
    let m = ctx.stops().len();
    check_limit("stops per school", m, limits.max_stops_per_school.min(12))?;
    let clock = Clock::new(limits);
    let inst = ctx.instance();
    let blocks = enumerate_blocks(ctx, &clock)?;
    let mut best: Option<(ExactRoute, (f64, f64))> = None;
    for_each_partition(m, &mut |parts| {
        clock.check()?;
        let mut trips = Vec::with_capacity(parts.len());
        for &mask in parts {
            let Some((order, _)) = &blocks[mask].best else {
                return Ok(());
            };
            trips.push(Trip::new(inst, ctx.school(), order.clone()));
        }
        let tt: f64 = trips.iter().map(Trip::duration).sum();
        let plan = RoutingPlan::new(trips);
        let surrogate = surrogate_cost(&plan, inst, gamma);
        let trips = plan.into_trips();
        let nb = match objective {
            Objective::Buses => exact_min_buses(
                &trips,
                inst,
                &OracleLimits {
                    max_trips: 16,
                    ..*limits
                },
            )?,
            Objective::Surrogate => 0,
        };
        let key = match objective {
            Objective::Surrogate => (surrogate, 0.0),
            Objective::Buses => (nb as f64, tt),
        };
        if best.as_ref().is_none_or(|(_, k)| key < *k) {
            best = Some((
                ExactRoute {
                    trips,
                    surrogate,
                    nb,
                    tt,
                },
                key,
            ));
        }
        Ok(())
    })?;
    let (mut route, _) = best.ok_or_else(|| {
        Error::InvalidInstance(format!(
            "school {} has a stop no trip can serve",
            inst.school(ctx.school()).id
        ))
    })?;
    if objective == Objective::Surrogate {
        route.nb = exact_min_buses(
            &route.trips,
            inst,
            &OracleLimits {
                max_trips: 16,
                ..*limits
            },
        )
        .unwrap_or(route.trips.len());
    }
    Ok(route)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetOptimum {
    pub nb: usize,
    pub plan: RoutingPlan,
}

/// One way to route a school: its trips plus, per trip, the schools it can
/// still reach in time afterwards.
#[derive(Debug, Clone)]
struct SchoolOption {
    reach: Vec<u64>,
    trips: Vec<Trip>,
}

/// Fewest buses over every feasible routing of every school, jointly with
/// the scheduling. Each trip only matters through its school and the set
/// of schools it can reach afterwards, so the search keeps, per block, the
/// orders with maximal reach sets and dedupes school plans with identical
/// reach profiles.
pub fn exact_fleet(instance: &Instance, limits: &OracleLimits) -> Result<FleetOptimum> {
    let clock = Clock::new(limits);
    let n_schools = instance.schools().len();
    check_limit("schools", n_schools, 64)?;
    let mut options: Vec<Vec<SchoolOption>> = Vec::new();
    for k in (0..n_schools).filter(|&k| !instance.stops_of(k).is_empty()) {
        let ctx = SchoolContext::new(instance, k)?;
        check_limit(
            "stops per school",
            ctx.stops().len(),
            limits.max_stops_per_school.min(12),
        )?;
        options.push(school_options(&ctx, &clock, limits)?);
    }
    let combos = options.iter().try_fold(1usize, |acc, o| {
        acc.checked_mul(o.len()).filter(|&c| c <= limits.max_combinations)
    });
    check_limit(
        "school plan combinations",
        combos.unwrap_or(usize::MAX),
        limits.max_combinations,
    )?;

    let mut pick = vec![0usize; options.len()];
    let mut best: Option<(usize, Vec<usize>)> = None;
    'outer: loop {
        clock.check()?;
        let mut schools = Vec::new();
        let mut reach: Vec<u64> = Vec::new();
        for (k, o) in options.iter().enumerate() {
            let opt = &o[pick[k]];
            schools.extend(opt.trips.iter().map(Trip::school));
            reach.extend(&opt.reach);
        }
        let adj: Vec<Vec<bool>> = reach
            .iter()
            .map(|&r| schools.iter().map(|&s| r >> s & 1 == 1).collect())
            .collect();
        let nb = schools.len() - max_bipartite_matching(&adj).len();
        if best.as_ref().is_none_or(|b| nb < b.0) {
            best = Some((nb, pick.clone()));
        }
        for k in 0..pick.len() {
            pick[k] += 1;
            if pick[k] < options[k].len() {
                continue 'outer;
            }
            pick[k] = 0;
        }
        break;
    }
    let Some((nb, pick)) = best else {
        return Ok(FleetOptimum {
            nb: 0,
            plan: RoutingPlan::default(),
        });
    };
    let trips = options
        .iter()
        .zip(pick)
        .flat_map(|(o, i)| o[i].trips.iter().cloned())
        .collect();
    Ok(FleetOptimum {
        nb,
        plan: RoutingPlan::new(trips),
    })
}

fn reach_mask(trip: &Trip, instance: &Instance) -> u64 {
    (0..instance.schools().len())
        .filter(|&t| instance.reaches_school(trip.school(), trip.duration(), trip.last_stop(), t))
        .fold(0, |m, t| m | 1 << t)
}

fn school_options(ctx: &SchoolContext<'_>, clock: &Clock, limits: &OracleLimits) -> Result<Vec<SchoolOption>> {
    let inst = ctx.instance();
    let blocks = enumerate_blocks(ctx, clock)?;
    // maximal-reach variants of each block
    let variants: Vec<Vec<(u64, Trip)>> = blocks
        .iter()
        .map(|b| {
            let mut all: Vec<(u64, Trip)> = b
                .by_last
                .iter()
                .map(|(order, _)| {
                    let t = Trip::new(inst, ctx.school(), order.clone());
                    (reach_mask(&t, inst), t)
                })
                .collect();
            all.sort_by(|a, b| a.1.duration().total_cmp(&b.1.duration()));
            let mut kept: Vec<(u64, Trip)> = Vec::new();
            for (mask, t) in all {
                let dominated = kept.iter().any(|(k, _)| k & mask == mask);
                if !dominated {
                    kept.retain(|(k, _)| k & mask != *k);
                    kept.push((mask, t));
                }
            }
            kept
        })
        .collect();

    let mut seen: BTreeMap<Vec<u64>, SchoolOption> = BTreeMap::new();
    for_each_partition(ctx.stops().len(), &mut |parts| {
        if parts.iter().any(|&mask| variants[mask].is_empty()) {
            return Ok(());
        }
        let mut idx = vec![0usize; parts.len()];
        loop {
            clock.check()?;
            let mut chosen: Vec<(u64, Trip)> = parts
                .iter()
                .zip(&idx)
                .map(|(&mask, &i)| variants[mask][i].clone())
                .collect();
            chosen.sort_by_key(|c| c.0);
            let key: Vec<u64> = chosen.iter().map(|c| c.0).collect();
            seen.entry(key).or_insert_with(|| SchoolOption {
                reach: chosen.iter().map(|c| c.0).collect(),
                trips: chosen.into_iter().map(|c| c.1).collect(),
            });
            check_limit("school plan variants", seen.len(), limits.max_combinations)?;
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return Ok(());
                }
                idx[k] += 1;
                if idx[k] < variants[parts[k]].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    })?;
    Ok(seen.into_values().collect())
}

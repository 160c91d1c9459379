//! Random instances: uniform nodes in a square, schools picked by k-means,
//! every remaining node a stop of its nearest school.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcm::kmeans::kmeans;
use crate::model::{distance, Instance, Metric, Point, School, Stop};
use crate::seed::derive_seed;

/// 40 miles.
pub const DEFAULT_SIDE_FT: f64 = 211_200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenParams {
    pub n_schools: usize,
    /// Stops left after the schools are picked from the generated nodes.
    pub n_stops: usize,
    pub seed: u64,
    pub side_ft: f64,
    pub students_min: u32,
    pub students_max: u32,
    pub capacity: u32,
    pub mrt_s: f64,
    /// Earliest bell, seconds after midnight (inclusive).
    pub bell_start_s: u32,
    /// Latest bell (inclusive).
    pub bell_end_s: u32,
    pub bell_step_s: u32,
    pub speed_mph: f64,
    pub metric: Metric,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_schools: 2,
            n_stops: 20,
            seed: 0,
            side_ft: DEFAULT_SIDE_FT,
            students_min: 1,
            students_max: 20,
            capacity: 66,
            mrt_s: 5400.0,
            bell_start_s: 12 * 3600,
            bell_end_s: 16 * 3600,
            bell_step_s: 900,
            speed_mph: 20.0,
            metric: Metric::Euclidean,
        }
    }
}

impl GenParams {
    pub fn new(n_schools: usize, n_stops: usize, seed: u64) -> Self {
        Self {
            n_schools,
            n_stops,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.n_schools == 0 {
            return bad("need at least one school".into());
        }
        if self.n_stops < self.n_schools {
            return bad(format!(
                "need at least as many stops ({}) as schools ({})",
                self.n_stops, self.n_schools
            ));
        }
        if !(self.side_ft > 0.0 && self.side_ft.is_finite()) {
            return bad(format!("side must be > 0, got {}", self.side_ft));
        }
        if self.students_min == 0 || self.students_min > self.students_max {
            return bad(format!(
                "student range {}..={} is empty or includes 0",
                self.students_min, self.students_max
            ));
        }
        if self.bell_step_s == 0 || self.bell_start_s > self.bell_end_s || self.bell_end_s >= 86_400 {
            return bad("bell window must be a non-empty range within one day with step > 0".into());
        }
        Ok(())
    }
}

/// Deterministic for a fixed `params.seed`.
pub fn generate(params: &GenParams) -> Result<Instance> {
    params.validate()?;
    let total = params.n_schools + params.n_stops;
    let mut coords = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, 0));
    let nodes: Vec<Point> = (0..total)
        .map(|_| {
            Point::new(
                coords.random_range(0.0..=params.side_ft),
                coords.random_range(0.0..=params.side_ft),
            )
        })
        .collect();

    let clustering = kmeans(&nodes, params.n_schools, derive_seed(params.seed, 1))?;
    let mut is_school = vec![false; total];
    let mut school_nodes = Vec::with_capacity(params.n_schools);
    for (c, centroid) in clustering.centroids.iter().enumerate() {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, &p) in nodes.iter().enumerate() {
            if clustering.labels[i] == c {
                let d = distance(p, *centroid, Metric::Euclidean);
                if d < best.1 {
                    best = (i, d);
                }
            }
        }
        is_school[best.0] = true;
        school_nodes.push(best.0);
    }

    let mut bells = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, 2));
    let slots = (params.bell_end_s - params.bell_start_s) / params.bell_step_s;
    let schools: Vec<School> = school_nodes
        .iter()
        .enumerate()
        .map(|(k, &node)| {
            let bell = params.bell_start_s + params.bell_step_s * bells.random_range(0..=slots);
            School::new(k as u32, nodes[node], f64::from(bell))
        })
        .collect();

    let mut students = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, 3));
    let stops: Vec<Stop> = (0..total)
        .filter(|&i| !is_school[i])
        .enumerate()
        .map(|(id, i)| {
            let mut best = (0, f64::INFINITY);
            for (k, s) in schools.iter().enumerate() {
                let d = distance(nodes[i], s.location, params.metric);
                if d < best.1 {
                    best = (k, d);
                }
            }
            Stop {
                id: id as u32,
                school_id: best.0 as u32,
                location: nodes[i],
                students: students.random_range(params.students_min..=params.students_max),
            }
        })
        .collect();

    Instance::new(
        schools,
        stops,
        params.capacity,
        params.mrt_s,
        params.speed_mph,
        params.metric,
    )
}

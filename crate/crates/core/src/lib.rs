//! Multi-school bus routing: trip generation by iterated minimum-cost
//! matching, trip improvement by simulated annealing with a tabu list, and
//! bus scheduling by maximum bipartite matching.

pub mod error;
pub mod harness;
pub mod instancegen;
pub mod matching;
pub mod mcm;
pub mod model;
pub mod oracle;
pub mod params;
pub mod pi;
pub mod scheduling;
pub mod seed;

pub use error::{Error, Result};
pub use matching::{min_cost_assignment, Assignment, CostMatrix};
pub use mcm::{route_all_schools, Mode};
pub use model::{Instance, Metric, Point, RoutingPlan, School, Stop, Trip};
pub use params::SolverParams;
pub use pi::improve;
pub use scheduling::{min_buses, SchedulePlan};

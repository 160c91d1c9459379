//! Fixed-seed inputs shared by the criterion benches.

use busroute_core::instancegen::{generate, GenParams};
use busroute_core::seed::mix64;
use busroute_core::{CostMatrix, Instance};

/// Generated instance for a `schools × stops` size. Seeds are tried in
/// order until every stop is servable, so the same size always yields the
/// same instance.
pub fn instance(schools: usize, stops: usize) -> Instance {
    (0..64)
        .find_map(|seed| {
            let inst = generate(&GenParams::new(schools, stops, seed)).ok()?;
            busroute_core::route_all_schools(&inst, busroute_core::Mode::Smcm, &Default::default()).ok()?;
            Some(inst)
        })
        .unwrap_or_else(|| panic!("no servable {schools}x{stops} instance"))
}

/// Square matrix of pseudo-random integer costs in `0..1000`.
pub fn cost_matrix(n: usize, seed: u64) -> CostMatrix {
    let data = (0..n * n).map(|i| (mix64(seed ^ i as u64) % 1000) as f64).collect();
    CostMatrix::new(n, n, data).expect("finite square matrix")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_are_stable() {
        assert_eq!(instance(3, 40).to_json(), instance(3, 40).to_json());
        let m = cost_matrix(5, 7);
        assert_eq!(m.rows(), 5);
        assert_eq!(m.get(2, 3), cost_matrix(5, 7).get(2, 3));
    }
}

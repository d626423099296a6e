//! Fixtures shared by the benchmarks.

use donaldson_core::flow::{generated_geometry, initial_state};
use donaldson_core::oracles::band_limited_field;
use donaldson_core::{BackgroundGeometry, FlowState, GeometryParams, Grid, ScalarField};

/// Seeded `n = 2` geometry on an `N⁴` grid.
pub fn geometry(points_per_axis: usize) -> BackgroundGeometry {
    let grid = Grid::new(2, points_per_axis).expect("valid grid");
    generated_geometry(&grid, &GeometryParams::default()).expect("default parameters satisfy the cone condition")
}

pub fn state(geom: &BackgroundGeometry) -> FlowState {
    initial_state(geom).expect("initial state is positive")
}

/// Smooth potential small enough that `χ + i∂∂̄φ` stays positive.
pub fn potential(grid: &Grid) -> ScalarField {
    band_limited_field(grid, 1).map(|v| 1e-3 * v)
}

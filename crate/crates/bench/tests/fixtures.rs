use donaldson_bench::{geometry, potential, state};
use donaldson_core::flow::flow_rhs;

#[test]
fn fixtures_are_valid_flow_data() {
    let geom = geometry(8);
    let s = state(&geom);
    assert!(s.min_eig > 0.0);
    let rhs = flow_rhs(&potential(geom.grid()), &geom).unwrap();
    assert!(rhs.is_finite());
}

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use donaldson_core::diagnostics::donaldson_residual;
use donaldson_core::flow::{generated_geometry, normalize, run_flow_with, FlowConfig};
use donaldson_core::hermitian::{cone_margin, h_inverse_metric, inverse_hermitian, trace_pair};
use donaldson_core::oracles::{band_limited_field, random_spd};
use donaldson_core::torus::{dbar_hessian, flat_laplacian, integrate_mu};
use donaldson_core::{GeometryParams, Grid, HermitianMatrix, ScalarField};

fn grid() -> Grid {
    Grid::new(2, 8).unwrap()
}

fn field(seed: u64) -> ScalarField {
    band_limited_field(&grid(), seed)
}

fn hessian_trace(phi: &ScalarField) -> ScalarField {
    let h = dbar_hessian(phi).unwrap();
    let values = (0..phi.grid().point_count()).map(|p| h.at(p).trace()).collect();
    ScalarField::new(phi.grid(), values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hessian_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (phi, psi) = (field(s1), field(s2));
        let combo = phi.zip_map(&psi, |x, y| a * x + b * y).unwrap();
        let lhs = dbar_hessian(&combo).unwrap();
        let rhs = dbar_hessian(&phi).unwrap().scale(a).add(&dbar_hessian(&psi).unwrap().scale(b)).unwrap();
        let scale = 1.0 + lhs.raw().iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12 * scale);
    }

    #[test]
    fn hessian_trace_is_quarter_laplacian(seed in 0u64..1000) {
        let phi = field(seed);
        let lap = flat_laplacian(&phi).unwrap().map(|v| 0.25 * v);
        let tr = hessian_trace(&phi);
        prop_assert!(tr.max_abs_diff(&lap).unwrap() <= 1e-10 * (1.0 + lap.sup_abs()));
        prop_assert!(integrate_mu(&tr).abs() <= 1e-12 * (1.0 + tr.sup_abs()));
    }

    #[test]
    fn self_trace_is_dimension(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chi = random_spd(n, &mut rng);
        let tr = trace_pair(&chi, &chi).unwrap();
        prop_assert!((tr / n as f64 - 1.0).abs() <= 1e-13);
    }

    #[test]
    fn inverse_is_involution(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(n, &mut rng);
        let back = inverse_hermitian(&inverse_hermitian(&a).unwrap()).unwrap();
        prop_assert!(back.sub(&a).unwrap().max_abs() <= 1e-11 * a.max_abs());
    }

    #[test]
    fn h_metric_of_diagonal(l1 in 0.1f64..10.0, l2 in 0.1f64..10.0, l3 in 0.1f64..10.0) {
        let h = h_inverse_metric(&HermitianMatrix::diagonal(&[l1, l2, l3]), &HermitianMatrix::identity(3)).unwrap();
        let expect = HermitianMatrix::diagonal(&[1.0 / (l1 * l1), 1.0 / (l2 * l2), 1.0 / (l3 * l3)]);
        prop_assert!(h.sub(&expect).unwrap().max_abs() <= 4.0 * f64::EPSILON * expect.max_abs());
    }

    #[test]
    fn cone_margin_grows_with_scaling(seed in any::<u64>(), c in 1.0f64..4.0) {
        let g = grid();
        let geom = generated_geometry(&g, &GeometryParams { seed, ..Default::default() }).unwrap();
        let base = cone_margin(geom.chi(), geom.omega(), geom.f()).unwrap();
        let scaled = cone_margin(&geom.chi().scale(c), geom.omega(), geom.f()).unwrap();
        prop_assert!(scaled.margin >= base.margin);
    }

    #[test]
    fn normalize_has_zero_mean(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let phi = field(seed).shift(shift);
        prop_assert!(integrate_mu(&normalize(&phi)).abs() <= 1e-13 * (1.0 + phi.sup_abs()));
    }

    #[test]
    fn residual_has_zero_mean(seed in 0u64..1000) {
        let g = grid();
        let geom = generated_geometry(&g, &GeometryParams { seed, ..Default::default() }).unwrap();
        let phi = field(seed).map(|v| 1e-3 * v);
        let r = donaldson_residual(&phi, &geom).unwrap();
        prop_assert!(integrate_mu(&r.field).abs() <= 1e-12);
    }
}

#[test]
fn hessian_is_pointwise_hermitian() {
    let phi = field(3);
    let h = dbar_hessian(&phi).unwrap();
    let n = h.dim();
    for p in 0..phi.grid().point_count() {
        let m = h.at(p);
        for i in 0..n {
            for j in 0..n {
                assert!((m.get(i, j) - m.get(j, i).conj()).norm() <= 1e-13 * (1.0 + m.max_abs()));
            }
        }
    }
}

#[test]
fn run_level_bounds() {
    let g = grid();
    let geom = generated_geometry(&g, &GeometryParams { seed: 8, ..Default::default() }).unwrap();
    let mut lower_chain_ok = true;
    let run = run_flow_with(&geom, &FlowConfig::default(), |s| {
        // tr_ω χ_φ ≥ n / tr_{χ_φ}ω = e^{φ̇ − F}
        let n = geom.n() as f64;
        for p in 0..g.point_count() {
            let tr_omega_chi = s.chi_phi.at(p).trace();
            let bound = n / s.tr_chiphi_omega.values()[p];
            let exp = (s.phi_dot.values()[p] - geom.f().values()[p]).exp();
            lower_chain_ok &= tr_omega_chi >= bound * (1.0 - 1e-12) && (bound / exp - 1.0).abs() <= 1e-10;
        }
    })
    .unwrap();
    assert!(lower_chain_ok);

    let rows = &run.rows;
    let lo = rows.iter().map(|r| r.min_tr_omega_chiphi).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.max_tr_omega_chiphi).fold(0.0, f64::max);
    assert!(lo > 0.0 && hi.is_finite());

    // oscillation of φ settles
    let last = rows.last().unwrap();
    let mid = rows.iter().find(|r| r.t >= 0.5 * last.t).unwrap();
    assert!((last.osc_phi - mid.osc_phi).abs() <= 0.01 * last.osc_phi.max(1e-300));

    // residual is controlled by θ once it has decayed
    let k = rows
        .iter()
        .filter(|r| r.theta > 0.0)
        .map(|r| r.residual_sup / r.theta)
        .fold(0.0, f64::max);
    assert!(k.is_finite() && k <= 1.0 + 1e-9);
    for r in rows {
        assert!(r.residual_sup <= k * r.theta + 1e-12);
    }
}

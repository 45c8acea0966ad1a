use weyl_lab::duhamel::{
    case_report, duhamel_identity_residual, trace_perturbation_sum, wave_kernel, Multiplier, OperatorPair,
};
use weyl_lab::geometry::{BoundaryCondition, DomainSpec, Grid, Point};
use weyl_lab::heat::spectral_matrix;
use weyl_lab::multipliers::{MollifierSpec, WindowSpec};
use weyl_lab::operator::{assemble_laplacian, assemble_schrodinger, with_shift};
use weyl_lab::potentials::PotentialSpec;
use weyl_lab::spectral::eigendecompose;

fn pair(n_cells: usize, v: PotentialSpec<f64>) -> OperatorPair<f64> {
    let grid = Grid::build(DomainSpec::unit_square(), 1.0 / n_cells as f64).unwrap();
    let free = assemble_laplacian(&grid, BoundaryCondition::Dirichlet).unwrap();
    let pert = assemble_schrodinger(&grid, BoundaryCondition::Dirichlet, &v).unwrap();
    OperatorPair::build(&free, &pert).unwrap()
}

fn coulomb() -> PotentialSpec<f64> {
    PotentialSpec::inverse_power(Point::new(0.5, 0.5), 1.0, 1.0)
}

#[test]
fn overlaps_are_orthogonal_and_intertwine() {
    let p = pair(12, coulomb());
    assert!(p.orthogonality_error() < 1e-8);
    assert!(p.intertwining_error() < 1e-7, "{}", p.intertwining_error());
}

#[test]
fn duhamel_identity_is_exact() {
    let p = pair(12, coulomb());
    for t in [0.0, 0.1, 0.5, 0.7, 1.0, 2.0] {
        let r = duhamel_identity_residual(&p, t).unwrap();
        assert!(r.relative <= 1e-8, "t={t}: {r:?}");
    }
    let z = pair(12, PotentialSpec::zero());
    let r = duhamel_identity_residual(&z, 0.7).unwrap();
    assert_eq!(r.absolute, 0.0);
}

#[test]
fn wave_kernel_at_zero_is_the_weighted_identity() {
    let p = pair(8, PotentialSpec::zero());
    let w = wave_kernel(&p.free, 0.0).unwrap();
    let h2 = p.free.weight;
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            let want = if i == j { 1.0 / h2 } else { 0.0 };
            assert!((w[(i, j)] - want).abs() < 1e-9, "{i},{j}");
        }
    }
}

#[test]
fn wave_kernel_solves_the_wave_equation() {
    let grid = Grid::build(DomainSpec::unit_square(), 1.0 / 8.0).unwrap();
    let op = with_shift(&assemble_laplacian(&grid, BoundaryCondition::Dirichlet).unwrap(), 0.0);
    let data = eigendecompose(&op).unwrap();
    let (t, dt) = (0.1, 1e-4);
    let w = |s: f64| wave_kernel(&data, s).unwrap();
    let (wp, w0, wm) = (w(t + dt), w(t), w(t - dt));
    // d²/dt² cos tP = −H cos tP, with H acting on the kernel's first index
    let h = spectral_matrix(&data, |mu| mu * (t * mu.sqrt()).cos()).unwrap();
    let mut worst = 0.0f64;
    let scale = h.max_abs();
    for i in 0..w0.rows() {
        for j in 0..w0.cols() {
            let second = (wp[(i, j)] - 2.0 * w0[(i, j)] + wm[(i, j)]) / (dt * dt);
            worst = worst.max((second + h[(i, j)]).abs());
        }
    }
    assert!(worst / scale < 1e-5, "{}", worst / scale);
}

#[test]
fn trace_sums_match_direct_traces() {
    let p = pair(12, coulomb());
    let top = p.free.frequencies[p.len() - 1];
    for lambda in [8.0, 12.0, 16.0, 20.0, 24.0] {
        assert!(lambda < top);
        let w = Multiplier::window(WindowSpec::new(0.5).unwrap(), lambda);
        let s = trace_perturbation_sum(&p, &w);
        assert!(s.residual <= 1e-8, "window λ={lambda}: {s:?}");
        let m = Multiplier::smoothed_indicator(MollifierSpec::new(0.5).unwrap(), lambda).unwrap();
        let s = trace_perturbation_sum(&p, &m);
        assert!(s.residual <= 1e-8, "indicator λ={lambda}: {s:?}");
    }
    let c = Multiplier::new(|_| 3.0, |_| 0.0);
    let s = trace_perturbation_sum(&p, &c);
    assert_eq!(s.sum, 0.0);
    assert!(s.direct.abs() < 1e-10);
}

#[test]
fn case_blocks_reconcile() {
    let p = pair(12, coulomb());
    let r = case_report(&p, 15.0, 0.5).unwrap();
    assert!(r.short_reconciliation <= 1e-10);
    assert!(r.long_reconciliation <= 1e-10);
    assert_eq!(r.short_interval.iter().map(|b| b.index_count).sum::<usize>(), p.len() * p.len());
    assert_eq!(r.long_interval.iter().map(|b| b.index_count).sum::<usize>(), p.len() * p.len());

    let z = pair(12, PotentialSpec::zero());
    let r = case_report(&z, 15.0, 0.5).unwrap();
    assert!(r.short_interval.iter().chain(&r.long_interval).all(|b| b.partial_sum == 0.0));
}

#[test]
fn low_low_block_is_negligible_at_large_lambda() {
    let p = pair(24, coulomb());
    let ratio = |lambda: f64, eps: f64| {
        let r = case_report(&p, lambda, eps).unwrap();
        r.long_interval[0].partial_sum.abs() / r.long_total.abs()
    };
    // Low+Low pairs sit at least λ/(2ε) kernel widths from λ
    let (a, b, c) = (ratio(20.0, 0.5), ratio(40.0, 0.2), ratio(60.0, 0.1));
    assert!(a > b && b > c, "{a:e} {b:e} {c:e}");
    assert!(c <= 1e-6, "{c:e}");
}

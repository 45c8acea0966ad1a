use weyl_lab::geometry::{BoundaryCondition, DomainSpec, Grid, Point};
use weyl_lab::operator::assemble_schrodinger;
use weyl_lab::spectral::eigendecompose;
use weyl_lab::{Grid32, Grid64, Potential32, Potential64, SpectralData32};

fn lowest<T: weyl_lab::Real>(grid: &Grid<T>, v: &weyl_lab::PotentialSpec<T>) -> Vec<f64> {
    let op = assemble_schrodinger(grid, BoundaryCondition::Dirichlet, v).unwrap();
    eigendecompose(&op).unwrap().frequencies[..8].iter().map(|f| f.to_f64_lossy()).collect()
}

#[test]
fn single_precision_tracks_double() {
    let g64: Grid64 = Grid::build(DomainSpec::unit_square(), 0.1).unwrap();
    let g32: Grid32 = Grid::build(DomainSpec::<f32>::unit_square(), 0.1f32).unwrap();
    let v64: Potential64 = Potential64::inverse_power(Point::new(0.5, 0.5), 1.0, 1.0);
    let v32: Potential32 = Potential32::inverse_power(Point::new(0.5f32, 0.5), 1.0, 1.0);
    for (a, b) in lowest(&g64, &v64).iter().zip(lowest(&g32, &v32)) {
        assert!((a - b).abs() <= 1e-4 * a, "{a} vs {b}");
    }
}

#[test]
fn single_precision_eigenvectors_are_orthonormal() {
    let g: Grid32 = Grid::build(DomainSpec::<f32>::unit_square(), 0.125f32).unwrap();
    let op = assemble_schrodinger(&g, BoundaryCondition::Dirichlet, &Potential32::zero()).unwrap();
    let data: SpectralData32 = eigendecompose(&op).unwrap();
    assert!(data.gram_error().unwrap() < 1e-4);
}

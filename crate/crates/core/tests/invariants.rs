use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weyl_lab::duhamel::{fit_envelope, trace_perturbation_sum, Multiplier, OperatorPair};
use weyl_lab::geometry::{distance, BoundaryCondition, DomainSpec, Grid, Point};
use weyl_lab::heat::{heat_trace, riesz_kernel, spectral_matrix};
use weyl_lab::multipliers::WindowSpec;
use weyl_lab::operator::{assemble_laplacian, assemble_schrodinger, normalize_shift};
use weyl_lab::potentials::{kato_kernel, kato_norm, split_potential, PotentialSpec};
use weyl_lab::spectral::{
    counting_function, eigendecompose, eigenvalues_only, exact_disk_spectrum, exact_rectangle_spectrum,
};
use weyl_lab::weyl::{remainder_curve, weyl_coefficients};

const DIR: BoundaryCondition<f64> = BoundaryCondition::Dirichlet;

fn coulomb() -> PotentialSpec<f64> {
    PotentialSpec::inverse_power(Point::new(0.5, 0.5), 1.0, 1.0)
}

#[test]
fn distance_is_a_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut p = || Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
    for _ in 0..10_000 {
        let (a, b, c) = (p(), p(), p());
        assert!(distance(a, c) - distance(a, b) - distance(b, c) <= 1e-12);
        assert_eq!(distance(a, b), distance(b, a));
        assert_eq!(distance(a, a), 0.0);
    }
}

#[test]
fn grid_sizes() {
    for (domain, h) in [
        (DomainSpec::unit_square(), 0.125),
        (DomainSpec::rectangle(2.0, 1.0).unwrap(), 0.1),
        (DomainSpec::unit_square(), 1.0 / 30.0),
    ] {
        let g = Grid::build(domain, h).unwrap();
        assert_eq!(g.len(), g.nx * g.ny);
    }
}

#[test]
fn operators_are_exactly_symmetric_and_differ_by_a_diagonal() {
    let g = Grid::build(DomainSpec::unit_square(), 0.1).unwrap();
    for bc in [DIR, BoundaryCondition::Neumann, BoundaryCondition::robin(0.7).unwrap()] {
        let free = assemble_laplacian(&g, bc).unwrap();
        let pert = assemble_schrodinger(&g, bc, &coulomb()).unwrap();
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert_eq!(pert.matrix[(i, j)].to_bits(), pert.matrix[(j, i)].to_bits());
                if i != j {
                    assert_eq!(pert.matrix[(i, j)], free.matrix[(i, j)]);
                }
            }
        }
    }
}

#[test]
fn discrete_dispersion_relation() {
    let h = 0.125;
    let g = Grid::build(DomainSpec::unit_square(), h).unwrap();
    let data = eigenvalues_only(&assemble_laplacian(&g, DIR).unwrap()).unwrap();
    let mut want: Vec<f64> = (1..8)
        .flat_map(|m| (1..8).map(move |k| (m, k)))
        .map(|(m, k)| {
            let s = |j: i32| (j as f64 * PI * h / 2.0).sin().powi(2);
            4.0 / (h * h) * (s(m) + s(k))
        })
        .collect();
    want.sort_by(f64::total_cmp);
    for (a, b) in data.eigenvalues.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
    }
}

#[test]
fn grid_frequencies_converge_at_second_order() {
    let exact = exact_rectangle_spectrum(1.0, 1.0, DIR, 20.0).unwrap().frequencies;
    let lowest = |n: usize| {
        let g = Grid::build(DomainSpec::unit_square(), 1.0 / n as f64).unwrap();
        eigenvalues_only(&assemble_laplacian(&g, DIR).unwrap()).unwrap().frequencies
    };
    let (coarse, fine) = (lowest(16), lowest(32));
    for k in 0..10 {
        let ratio = (coarse[k] - exact[k]).abs() / (fine[k] - exact[k]).abs();
        assert!((3.6..=4.4).contains(&ratio), "mode {k}: ratio {ratio}");
    }
}

#[test]
fn counting_matches_a_double_loop() {
    let spec = exact_rectangle_spectrum(2.0, 1.0, DIR, 60.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let l: f64 = rng.gen_range(0.0..60.0);
        let mut n = 0;
        for m in 1..100 {
            for k in 1..100 {
                if PI * ((m * m) as f64 / 4.0 + (k * k) as f64).sqrt() <= l {
                    n += 1;
                }
            }
        }
        assert_eq!(spec.count(l), n, "λ = {l}");
    }
}

#[test]
fn disk_spectrum_scales_with_the_radius() {
    let unit = exact_disk_spectrum(1.0, DIR, 40.0).unwrap().frequencies;
    let big = exact_disk_spectrum(2.0, DIR, 20.0).unwrap().frequencies;
    assert_eq!(unit.len(), big.len());
    for (a, b) in unit.iter().zip(&big) {
        assert!((a / 2.0 - b).abs() <= 1e-12 * b, "{a} {b}");
    }
    // j_{0,1}
    assert!((unit[0] - 2.404_825_557_695_773).abs() < 1e-12);
}

#[test]
fn remainders_recompute_from_counts() {
    let spec = exact_rectangle_spectrum(1.0, 1.0, DIR, 100.0).unwrap();
    let c = weyl_coefficients(&DomainSpec::unit_square(), DIR, 2).unwrap();
    let lambdas: Vec<f64> = (0..900).map(|k| 10.0 + 0.1 * k as f64).collect();
    let curve = remainder_curve(&spec.frequencies, &c, &lambdas, 100.0).unwrap();
    for i in 0..lambdas.len() {
        assert_eq!(curve.counts[i], spec.count(lambdas[i]));
        assert!((curve.r2[i] - curve.r1[i] + c.c1 * lambdas[i]).abs() <= 1e-12 * lambdas[i].powi(2));
    }
}

#[test]
fn disk_two_term_remainder_trends_down() {
    let spec = exact_disk_spectrum(1.0, DIR, 120.0).unwrap();
    let c = weyl_coefficients(&DomainSpec::disk(1.0).unwrap(), DIR, 2).unwrap();
    let lambdas: Vec<f64> = (0..=5000).map(|k| 20.0 + 0.02 * k as f64).collect();
    let curve = remainder_curve(&spec.frequencies, &c, &lambdas, 120.0).unwrap();
    let sup = lambdas.iter().zip(&curve.r2).map(|(l, r)| r.abs() / l.powf(0.9)).fold(0.0, f64::max);
    assert!(sup.is_finite());
    // octave blocks [20,40), [40,80), [80,120]
    let block = |a: f64, b: f64| {
        let v: Vec<f64> =
            lambdas.iter().zip(&curve.r2).filter(|(l, _)| **l >= a && **l <= b).map(|(l, r)| r.abs() / l).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (b1, b2, b3) = (block(20.0, 40.0), block(40.0, 80.0), block(80.0, 120.0));
    assert!(b1 > b2 && b2 > b3, "{b1} {b2} {b3}");
}

#[test]
fn neumann_counts_dominate_dirichlet() {
    let d = exact_rectangle_spectrum(1.5, 1.0, DIR, 80.0).unwrap();
    let n = exact_rectangle_spectrum(1.5, 1.0, BoundaryCondition::Neumann, 80.0).unwrap();
    for k in 0..800 {
        let l = 0.1 * k as f64;
        assert!(counting_function(&n.frequencies, l) >= counting_function(&d.frequencies, l));
    }
}

#[test]
fn kato_quantities() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let r: f64 = rng.gen_range(1e-9..=10.0);
        assert_eq!(kato_kernel(r, 2).unwrap(), (2.0 + 1.0 / r).ln());
    }
    let sq = DomainSpec::unit_square();
    let v = coulomb();
    let norms: Vec<f64> = (0..10).map(|k| kato_norm(&v, &sq, 0.6f64.powi(9 - k), 4).unwrap()).collect();
    assert!(norms.windows(2).all(|w| w[0] <= w[1]), "{norms:?}");
    for eps in [1.0, 0.5, 0.25] {
        let s = split_potential(&v, &sq, eps).unwrap();
        assert!(s.l1_norm_v1 < eps * eps);
        let probe = [Point::new(0.5, 0.5), Point::new(0.5, 0.5001), Point::new(0.1, 0.9)];
        assert!(probe.iter().all(|p| s.v0(*p).unwrap().abs() <= s.bound));
    }
}

#[test]
fn heat_trace_is_the_integral_of_the_diagonal() {
    let g = Grid::build(DomainSpec::unit_square(), 1.0 / 12.0).unwrap();
    let data = eigendecompose(&assemble_schrodinger(&g, DIR, &coulomb()).unwrap()).unwrap();
    for t in [0.01, 0.1] {
        let k = spectral_matrix(&data, |m| (-t * m).exp()).unwrap();
        let diag: f64 = (0..g.len()).map(|x| g.quadrature_weight * k[(x, x)]).sum();
        let tr = heat_trace(&data.frequencies, t).unwrap();
        assert!((diag - tr).abs() <= 1e-10 * tr.max(1.0));
    }
}

#[test]
fn riesz_routes_agree_tightly() {
    let g = Grid::build(DomainSpec::unit_square(), 1.0 / 10.0).unwrap();
    let op = normalize_shift(&assemble_schrodinger(&g, DIR, &coulomb()).unwrap());
    let data = eigendecompose(&op).unwrap();
    for ell in 0..=2 {
        assert!(riesz_kernel(&data, ell).unwrap().relative_difference <= 1e-8);
    }
}

#[test]
fn window_trace_sums_stay_under_their_envelope() {
    let g = Grid::build(DomainSpec::unit_square(), 1.0 / 14.0).unwrap();
    let free = assemble_laplacian(&g, DIR).unwrap();
    let pert = assemble_schrodinger(&g, DIR, &coulomb()).unwrap();
    let p = OperatorPair::build(&free, &pert).unwrap();
    let eps = 0.5;
    let top = g.counting_limit();
    let lambdas: Vec<f64> = (0..12).map(|k| 5.0 + k as f64 * (top - 5.0) / 11.0).collect();
    let values: Vec<f64> = lambdas
        .iter()
        .map(|&l| trace_perturbation_sum(&p, &Multiplier::window(WindowSpec::new(eps).unwrap(), l)).sum)
        .collect();
    let env = fit_envelope(&lambdas, &values, eps).unwrap();
    assert!(env.c.is_finite() && env.c_eps >= 0.0);
    for (l, v) in lambdas.iter().zip(&values) {
        assert!(v.abs() <= env.c * (eps * l + env.c_eps * l.sqrt()) * (1.0 + 1e-12));
    }
}

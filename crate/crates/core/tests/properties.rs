use proptest::prelude::*;

use weyl_lab::config::ExperimentConfig;
use weyl_lab::duhamel::{duhamel_coefficient, COINCIDENCE_TOL};
use weyl_lab::geometry::BoundaryCondition;
use weyl_lab::heat::heat_trace;
use weyl_lab::multipliers::{
    beta, chi, rho, smooth_step, window, DyadicDecomposition, MollifierSpec, WindowSpec,
};
use weyl_lab::report::{emit_svg, Axes, Curve};
use weyl_lab::spectral::{counting_function, exact_rectangle_spectrum};
use weyl_lab::weyl::short_interval_count;

fn square() -> Vec<f64> {
    exact_rectangle_spectrum(1.0, 1.0, BoundaryCondition::Dirichlet, 80.0).unwrap().frequencies
}

proptest! {
    #[test]
    fn counting_is_monotone(a in 0.0..80.0f64, b in 0.0..80.0f64) {
        let f = square();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(counting_function(&f, lo) <= counting_function(&f, hi));
    }

    #[test]
    fn short_counts_are_count_differences(l in 1.0..70.0f64, eps in 0.01..1.0f64) {
        let f = square();
        let below = f.iter().filter(|x| **x < l).count();
        prop_assert_eq!(short_interval_count(&f, l, eps), counting_function(&f, l + eps) - below);
    }

    #[test]
    fn profiles_are_bounded(u in -2.0..2.0f64) {
        for v in [smooth_step(u), rho(u), chi(u), beta(u.abs() * 2.0)] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(rho(u), rho(-u));
    }

    #[test]
    fn dyadic_partition_sums_to_one(log_s in -3.0..3.0f64, eps in 0.05..1.0f64) {
        let d = DyadicDecomposition::new(MollifierSpec::new(eps).unwrap());
        let p = d.dyadic_partition(10f64.powf(log_s), 40).unwrap();
        prop_assert!((p.sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn window_is_a_bump(lambda in 1.0..50.0f64, eps in 0.05..1.0f64, tau in 0.0..60.0f64) {
        let w = window(&WindowSpec::new(eps).unwrap(), lambda, tau);
        prop_assert!((0.0..=1.0).contains(&w));
        if (tau - lambda).abs() >= eps {
            prop_assert_eq!(w, 0.0);
        }
    }

    #[test]
    fn duhamel_coefficient_is_symmetric_and_continuous(a in 0.5..40.0f64, b in 0.5..40.0f64, t in 0.0..3.0f64) {
        let c = |x, y| duhamel_coefficient(x, y, t, COINCIDENCE_TOL);
        prop_assert_eq!(c(a, b), c(b, a));
        // c is Lipschitz in λ, so a relative nudge of 1e-7 barely moves it
        prop_assert!((c(a, a) - c(a, a * (1.0 + 1e-7))).abs() <= 1e-5 * (1.0 + t * t));
    }

    #[test]
    fn heat_trace_decreases_in_t(t in 0.001..1.0f64, dt in 0.0001..1.0f64) {
        let f = square();
        prop_assert!(heat_trace(&f, t + dt).unwrap() <= heat_trace(&f, t).unwrap());
    }

    #[test]
    fn config_round_trip(h in 0.01..0.5f64, eps in 0.01..1.0f64, lo in 1.0..50.0f64, seed in any::<u64>(), sigma in 0.0..5.0f64) {
        let text = format!(
            "domain = rectangle(2, 1)\nbc = robin:{sigma}\nh = {h}\neps = {eps}\nlambda_min = {lo}\nseed = {seed}\n"
        );
        let once = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(once.h, h);
        prop_assert_eq!(once.seed, seed);
        let emitted = once.emit();
        prop_assert_eq!(ExperimentConfig::parse(&emitted).unwrap().emit(), emitted);
    }

    #[test]
    fn svg_is_deterministic(ys in proptest::collection::vec(-1e3..1e3f64, 1..40)) {
        let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
        let c = [Curve::new("y", &xs, &ys)];
        let a = emit_svg(&c, &Axes::new("t", "x", "y")).unwrap();
        prop_assert_eq!(&a, &emit_svg(&c, &Axes::new("t", "x", "y")).unwrap());
        prop_assert!(a.ends_with("</svg>\n"));
    }
}

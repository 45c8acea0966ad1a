use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use weyl_lab::acceptance::run_all;
use weyl_lab::config::{domain_expression, ExperimentConfig, SpectrumSource};
use weyl_lab::duhamel::{case_report, duhamel_identity_residual, OperatorPair};
use weyl_lab::geometry::{Grid, Shape};
use weyl_lab::heat::{
    check_long_time, exact_rectangle_heat_trace, fit_gaussian_bound, geometric_times, heat_trace, heat_trace_csv,
    heat_trace_prediction, riesz_direct_check, riesz_kernel, sample_pairs, HeatTraceRow,
};
use weyl_lab::multipliers::{
    certify_with_refinement, check_indicator_decay, decay_grid, indicator_csv, smoothed_indicator, BandSign,
    DyadicDecomposition, MollifierSpec,
};
use weyl_lab::operator::{assemble_laplacian, assemble_schrodinger, normalize_shift};
use weyl_lab::potentials::{kato_norm, split_potential};
use weyl_lab::report::{emit_svg, numeric_csv, to_json, write_artifact, Axes, Curve};
use weyl_lab::spectral::{eigendecompose, eigenvalues_only, exact_disk_spectrum, exact_rectangle_spectrum, spectrum_csv};
use weyl_lab::weyl::{
    fit_remainder_exponent, lambda_grid, remainder_curve, short_interval_count, short_interval_sweep,
    weyl_coefficients, Remainder,
};
use weyl_lab::{Error, Operator64, Result};

#[derive(Parser)]
#[command(name = "weyl-lab", version, about = "Spectral asymptotics experiments on planar domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file with `key = value` lines; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<String>,
    /// Domain: square, disk, rectangle(a,b) or disk(r).
    #[arg(long, global = true)]
    domain: Option<String>,
    /// dirichlet, neumann or robin:SIGMA.
    #[arg(long, global = true)]
    bc: Option<String>,
    /// Potential expression, e.g. `inverse_power(0.5, 0.5, 1, 1)`.
    #[arg(long = "potential", global = true)]
    potential: Option<String>,
    /// exact or grid.
    #[arg(long, global = true)]
    source: Option<String>,
    #[arg(long, global = true)]
    h: Option<String>,
    #[arg(long, global = true)]
    eps: Option<String>,
    #[arg(long, global = true)]
    lambda: Option<String>,
    #[arg(long = "lambda-min", global = true)]
    lambda_min: Option<String>,
    #[arg(long = "lambda-max", global = true)]
    lambda_max: Option<String>,
    #[arg(long = "lambda-step", global = true)]
    lambda_step: Option<String>,
    #[arg(long = "t-min", global = true)]
    t_min: Option<String>,
    #[arg(long = "t-max", global = true)]
    t_max: Option<String>,
    #[arg(long = "t-count", global = true)]
    t_count: Option<String>,
    /// Number of sampled node pairs.
    #[arg(long, global = true)]
    samples: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Frequencies of the configured operator.
    Spectrum,
    /// N(λ) at `--lambda`.
    Count,
    /// Weyl remainders R1, R2 over a λ grid.
    Weyl,
    /// Short-interval counts against ελ + λ^{1/2}.
    ShortInterval,
    /// Heat trace against its two-term expansion.
    HeatTrace,
    /// Gaussian heat-kernel bound fit and long-time decay.
    HeatBound,
    /// Spectral vs heat-integral negative powers.
    Riesz,
    /// Mollified indicator and its decay constants.
    Mollifier,
    /// Dyadic partition and symbol-constant certification.
    LpCheck,
    /// Residual of the Duhamel identity.
    Duhamel,
    /// Case decomposition of the trace perturbation sum.
    CaseReport,
    /// Kato norm ladder and potential split.
    Kato,
    /// Runs every acceptance check.
    FullReport,
}

impl Cli {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::parse(&std::fs::read_to_string(p)?)?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("out", &self.out),
            ("domain", &self.domain),
            ("bc", &self.bc),
            ("V", &self.potential),
            ("source", &self.source),
            ("h", &self.h),
            ("eps", &self.eps),
            ("lambda", &self.lambda),
            ("lambda_min", &self.lambda_min),
            ("lambda_max", &self.lambda_max),
            ("lambda_step", &self.lambda_step),
            ("t_min", &self.t_min),
            ("t_max", &self.t_max),
            ("t_count", &self.t_count),
            ("samples", &self.samples),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

/// What a subcommand reports back: whether its checks held.
type Run = Result<bool>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("WEYL_LAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let outcome = cli.config().and_then(|cfg| run(cli.command, &cfg));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("weyl-lab: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}

fn run(command: Command, cfg: &ExperimentConfig) -> Run {
    match command {
        Command::Spectrum => spectrum(cfg),
        Command::Count => count(cfg),
        Command::Weyl => weyl(cfg),
        Command::ShortInterval => short_interval(cfg),
        Command::HeatTrace => heat_trace_cmd(cfg),
        Command::HeatBound => heat_bound(cfg),
        Command::Riesz => riesz(cfg),
        Command::Mollifier => mollifier(cfg),
        Command::LpCheck => lp_check(cfg),
        Command::Duhamel => duhamel(cfg),
        Command::CaseReport => case_report_cmd(cfg),
        Command::Kato => kato(cfg),
        Command::FullReport => full_report(cfg),
    }
}

fn save(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = write_artifact(dir, name, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn save_json(dir: &Path, name: &str, value: &Value) -> Result<()> {
    save(dir, name, &to_json(value)?)
}

fn grid(cfg: &ExperimentConfig) -> Result<Grid<f64>> {
    Grid::build(cfg.domain.clone(), cfg.h)
}

fn free_operator(cfg: &ExperimentConfig) -> Result<Operator64> {
    assemble_laplacian(&grid(cfg)?, cfg.bc)
}

/// The configured operator: `−Δ` when `V` vanishes, `−Δ + V` otherwise.
fn configured_operator(cfg: &ExperimentConfig) -> Result<Operator64> {
    if cfg.potential.is_identically_zero() {
        free_operator(cfg)
    } else {
        assemble_schrodinger(&grid(cfg)?, cfg.bc, &cfg.potential)
    }
}

fn pair(cfg: &ExperimentConfig) -> Result<OperatorPair<f64>> {
    let g = grid(cfg)?;
    OperatorPair::build(&assemble_laplacian(&g, cfg.bc)?, &assemble_schrodinger(&g, cfg.bc, &cfg.potential)?)
}

/// Frequencies up to `cutoff` and the largest `λ` at which they may be
/// counted.
struct Frequencies {
    values: Vec<f64>,
    validity: f64,
    label: String,
}

fn frequencies(cfg: &ExperimentConfig, cutoff: f64) -> Result<Frequencies> {
    match cfg.source {
        SpectrumSource::Exact => {
            let spec = match cfg.domain.shape {
                Shape::Rectangle { a, b } => exact_rectangle_spectrum(a, b, cfg.bc, cutoff)?,
                Shape::Disk { radius } => exact_disk_spectrum(radius, cfg.bc, cutoff)?,
            };
            if !cfg.potential.is_identically_zero() {
                return Err(Error::InvalidInput("exact spectra exist only for V = 0; use `source = grid`".into()));
            }
            Ok(Frequencies { values: spec.frequencies, validity: spec.cutoff, label: format!("exact {}", domain_expression(&cfg.domain)) })
        }
        SpectrumSource::Grid => {
            let op = normalize_shift(&configured_operator(cfg)?);
            let data = eigenvalues_only(&op)?;
            Ok(Frequencies { validity: data.counting_limit, label: data.source.clone(), values: data.frequencies })
        }
    }
}

/// `(λ_min, λ_max, step)` with defaults.
fn lambda_range(cfg: &ExperimentConfig, lo: f64, hi: f64, step: f64) -> (f64, f64, f64) {
    (cfg.lambda_min.unwrap_or(lo), cfg.lambda_max.unwrap_or(hi), cfg.lambda_step.unwrap_or(step))
}

fn spectrum(cfg: &ExperimentConfig) -> Run {
    let cutoff = cfg.lambda_max.unwrap_or(100.0);
    let f = frequencies(cfg, cutoff)?;
    save(&cfg.out, "spectrum.csv", &spectrum_csv(&f.values))?;
    save_json(
        &cfg.out,
        "spectrum.json",
        &json!({ "source": f.label, "count": f.values.len(), "validity": f.validity }),
    )?;
    println!("{} frequencies, valid up to {}", f.values.len(), f.validity);
    Ok(true)
}

fn count(cfg: &ExperimentConfig) -> Run {
    let lambda = cfg
        .lambda
        .ok_or_else(|| Error::InvalidInput("`count` needs --lambda".into()))?;
    let f = frequencies(cfg, lambda.max(1.0))?;
    if lambda > f.validity {
        return Err(Error::Range(format!("λ = {lambda} exceeds the validity limit {} of {}", f.validity, f.label)));
    }
    let n = weyl_lab::spectral::counting_function(&f.values, lambda);
    save_json(&cfg.out, "count.json", &json!({ "lambda": lambda, "N": n, "source": f.label }))?;
    println!("N({lambda}) = {n}");
    Ok(true)
}

fn weyl(cfg: &ExperimentConfig) -> Run {
    let (lo, hi, step) = lambda_range(cfg, 10.0, 400.0, 0.05);
    let f = frequencies(cfg, hi)?;
    let coeffs = weyl_coefficients(&cfg.domain, cfg.bc, 2)?;
    let lambdas = lambda_grid(lo, hi, step)?;
    let curve = remainder_curve(&f.values, &coeffs, &lambdas, f.validity)?;
    save(&cfg.out, "weyl.csv", &curve.to_csv())?;
    let svg = emit_svg(
        &[Curve::new("R1/λ", &curve.lambdas, &curve.r1_norm), Curve::new("R2/λ", &curve.lambdas, &curve.r2_norm)],
        &Axes::new(&format!("Weyl remainders, {}", f.label), "λ", "R/λ"),
    )?;
    save(&cfg.out, "weyl.svg", &svg)?;
    // exponent fits need four half-octave blocks; shorter windows report null
    let fit = |w| fit_remainder_exponent(&curve, w, (lo, hi)).ok().map(|f| f.exponent);
    let summary = json!({
        "source": f.label,
        "coefficients": curve.coefficients,
        "r1_exponent": fit(Remainder::R1),
        "r2_exponent": fit(Remainder::R2),
    });
    save_json(&cfg.out, "weyl.json", &summary)?;
    Ok(true)
}

fn short_interval(cfg: &ExperimentConfig) -> Run {
    let (lo, hi, step) = lambda_range(cfg, 20.0, 200.0, 0.05);
    let eps = cfg.eps;
    let f = frequencies(cfg, hi + eps)?;
    if hi + eps > f.validity {
        return Err(Error::Range(format!("λ + ε = {} exceeds the validity limit {}", hi + eps, f.validity)));
    }
    let lambdas = lambda_grid(lo, hi, step)?;
    let rows: Vec<Vec<f64>> = lambdas
        .iter()
        .map(|&l| {
            let c = short_interval_count(&f.values, l, eps) as f64;
            vec![l, c, c / (eps * l + l.sqrt())]
        })
        .collect();
    save(&cfg.out, "short_interval.csv", &numeric_csv(&["lambda", "count", "ratio"], &rows))?;
    let ratios: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    save(
        &cfg.out,
        "short_interval.svg",
        &emit_svg(&[Curve::new("count/(ελ+λ^1/2)", &lambdas, &ratios)], &Axes::new("Short-interval ratio", "λ", "ratio"))?,
    )?;
    let sweep = short_interval_sweep(&f.values, (lo, hi), eps, 2)?;
    save_json(&cfg.out, "short_interval.json", &json!({ "source": f.label, "sweep": sweep }))?;
    println!("max ratio {:.4} at λ = {:.4}", sweep.max_ratio, sweep.argmax);
    Ok(true)
}

fn heat_trace_cmd(cfg: &ExperimentConfig) -> Run {
    let t_min = cfg.t_min.unwrap_or(1e-3);
    let t_max = cfg.t_max.unwrap_or(1.0);
    let times = geometric_times(t_min, t_max, cfg.t_count.unwrap_or(40));
    if !(t_min > 0.0 && t_max >= t_min) {
        return Err(Error::InvalidInput(format!("bad t range [{t_min}, {t_max}]")));
    }
    let exact_rect = match (cfg.source, cfg.domain.shape) {
        (SpectrumSource::Exact, Shape::Rectangle { a, b }) if cfg.potential.is_identically_zero() => Some((a, b)),
        _ => None,
    };
    let spectrum = match exact_rect {
        Some(_) => None,
        // e^{−t τ²} < 1e−16 beyond this cutoff at the smallest t
        None => Some(frequencies(cfg, (37.0 / t_min).sqrt())?),
    };
    let mut rows = Vec::with_capacity(times.len());
    for &t in &times {
        let trace = match (exact_rect, &spectrum) {
            (Some((a, b)), _) => exact_rectangle_heat_trace(a, b, cfg.bc, t)?,
            (None, Some(f)) => heat_trace(&f.values, t)?,
            _ => unreachable!(),
        };
        let (leading, two_term) = heat_trace_prediction(cfg.domain.area, cfg.domain.perimeter, cfg.bc, t);
        rows.push(HeatTraceRow { t, trace, leading_term: leading, two_term_prediction: two_term });
    }
    save(&cfg.out, "heat_trace.csv", &heat_trace_csv(&rows))?;
    let col = |f: fn(&HeatTraceRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let svg = emit_svg(
        &[
            Curve::new("trace", &times, &col(|r| r.trace)),
            Curve::new("|M|/4πt", &times, &col(|r| r.leading_term)),
            Curve::new("two-term", &times, &col(|r| r.two_term_prediction)),
        ],
        &Axes::new("Heat trace", "t", "trace").log_log(),
    )?;
    save(&cfg.out, "heat_trace.svg", &svg)?;
    save_json(&cfg.out, "heat_trace.json", &json!({ "rows": rows }))?;
    Ok(true)
}

fn heat_bound(cfg: &ExperimentConfig) -> Run {
    let op = normalize_shift(&configured_operator(cfg)?);
    let data = eigendecompose(&op)?;
    let g = &op.grid;
    let h2 = g.h * g.h;
    let times = geometric_times(cfg.t_min.unwrap_or(4.0 * h2), cfg.t_max.unwrap_or(1.0), cfg.t_count.unwrap_or(20));
    let pairs = sample_pairs(g, cfg.samples.unwrap_or(600), cfg.seed);
    let fit = fit_gaussian_bound(&data, g, &times, &pairs)?;
    let long = check_long_time(&data, g, &lambda_grid(2.0, 20.0, 0.5)?, &pairs)?;
    save_json(&cfg.out, "heat_bound.json", &json!({ "operator": op.describe(), "gaussian": fit, "long_time": long }))?;
    println!("C = {:.4}, c1 = {:.4}, {} violations over {} samples", fit.c, fit.c1, fit.violations, fit.samples);
    Ok(fit.violations == 0 && long.nonincreasing_after_2)
}

fn riesz(cfg: &ExperimentConfig) -> Run {
    let op = normalize_shift(&configured_operator(cfg)?);
    let data = eigendecompose(&op)?;
    let mut levels = Vec::new();
    let mut direct = None;
    for ell in 0..=2 {
        let k = riesz_kernel(&data, ell)?;
        if ell == 0 {
            direct = Some(riesz_direct_check(&k, &op)?);
        }
        levels.push(json!({ "ell": ell, "relative_difference": k.relative_difference, "tail_bound": k.tail_bound }));
    }
    let direct = direct.unwrap_or(f64::NAN);
    save_json(&cfg.out, "riesz.json", &json!({ "operator": op.describe(), "levels": levels, "direct_relative": direct }))?;
    Ok(direct <= 1e-8)
}

fn mollifier(cfg: &ExperimentConfig) -> Run {
    let spec = MollifierSpec::new(cfg.eps)?;
    let lambda = cfg.lambda.unwrap_or(50.0);
    let width = 20.0 * cfg.eps;
    let (lo, hi, step) = lambda_range(cfg, (lambda - width).max(0.0), lambda + width, cfg.eps / 20.0);
    let taus = lambda_grid(lo, hi, step)?;
    save(&cfg.out, "mollifier.csv", &indicator_csv(&spec, lambda, &taus)?)?;
    let smooth = taus.iter().map(|&t| smoothed_indicator(&spec, lambda, t)).collect::<Result<Vec<f64>>>()?;
    let sharp: Vec<f64> = taus.iter().map(|&t| weyl_lab::multipliers::indicator(lambda, t)).collect();
    let svg = emit_svg(
        &[Curve::new("smoothed", &taus, &smooth), Curve::new("indicator", &taus, &sharp)],
        &Axes::new(&format!("Mollified indicator, λ = {lambda}, ε = {}", cfg.eps), "τ", "value"),
    )?;
    save(&cfg.out, "mollifier.svg", &svg)?;
    let decay = check_indicator_decay(&spec, lambda, 4, &decay_grid(lambda, cfg.eps))?;
    save_json(&cfg.out, "mollifier.json", &json!({ "lambda": lambda, "epsilon": cfg.eps, "decay": decay }))?;
    Ok(decay.doubling_ok)
}

fn lp_check(cfg: &ExperimentConfig) -> Run {
    let d = DyadicDecomposition::new(MollifierSpec::new(cfg.eps)?);
    let lambda = cfg.lambda.unwrap_or(100.0);
    let mut worst = 0.0f64;
    for k in 0..=600 {
        let s = 10f64.powf(-3.0 + 0.01 * k as f64);
        worst = worst.max((d.dyadic_partition(s, 40)?.sum - 1.0).abs());
    }
    let mut certificates = Vec::new();
    let mut stable = true;
    for (ell, sign) in [(d.ell0 + 1, BandSign::Minus), (d.ell0 + 1, BandSign::Plus), (d.ell0 + 2, BandSign::Minus)] {
        let r = certify_with_refinement(&d, lambda, ell, 0, sign, 4, cfg.samples.unwrap_or(32))?;
        stable &= r.relative_change <= 0.1;
        certificates.push(r);
    }
    save_json(
        &cfg.out,
        "lp_check.json",
        &json!({ "lambda": lambda, "epsilon": cfg.eps, "ell0": d.ell0, "partition_error": worst, "certificates": certificates }),
    )?;
    Ok(worst <= 1e-12 && stable)
}

fn duhamel(cfg: &ExperimentConfig) -> Run {
    let p = pair(cfg)?;
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for t in [0.1, 0.5, 1.0, 2.0] {
        let r = duhamel_identity_residual(&p, t)?;
        worst = worst.max(r.relative);
        rows.push(r);
    }
    save_json(&cfg.out, "duhamel.json", &json!({ "residuals": rows, "max_relative": worst }))?;
    println!("max relative residual {worst:e}");
    Ok(worst <= 1e-8)
}

fn case_report_cmd(cfg: &ExperimentConfig) -> Run {
    let p = pair(cfg)?;
    let lambda = cfg
        .lambda
        .ok_or_else(|| Error::InvalidInput("`case-report` needs --lambda".into()))?;
    let r = case_report(&p, lambda, cfg.eps)?;
    save_json(&cfg.out, "case_report.json", &serde_json::to_value(&r)?)?;
    Ok(r.short_reconciliation <= 1e-10 && r.long_reconciliation <= 1e-10)
}

fn kato(cfg: &ExperimentConfig) -> Run {
    let resolution = cfg.samples.unwrap_or(16);
    let ladder: Vec<Value> = (0..10)
        .map(|k| {
            let delta = 2f64.powi(-(k as i32));
            kato_norm(&cfg.potential, &cfg.domain, delta, resolution).map(|v| json!({ "delta": delta, "norm": v }))
        })
        .collect::<Result<_>>()?;
    let split = split_potential(&cfg.potential, &cfg.domain, cfg.eps)?;
    save_json(
        &cfg.out,
        "kato.json",
        &json!({
            "potential": cfg.potential.to_expression(),
            "ladder": ladder,
            "split": { "bound": split.bound, "epsilon": split.epsilon, "l1_norm_v1": split.l1_norm_v1 },
        }),
    )?;
    Ok(true)
}

fn full_report(cfg: &ExperimentConfig) -> Run {
    let results = run_all();
    for r in &results {
        println!("{r}");
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed} of {} checks passed", results.len());
    save_json(&cfg.out, "full_report.json", &json!({ "passed": passed, "checks": results }))?;
    Ok(passed == results.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use weyl_lab::geometry::BoundaryCondition;

    #[test]
    fn flags_override_config() {
        let cli = Cli::parse_from(["weyl-lab", "count", "--lambda", "20", "--bc", "neumann"]);
        let cfg = cli.config().unwrap();
        assert_eq!(cfg.lambda, Some(20.0));
        assert_eq!(cfg.bc, BoundaryCondition::Neumann);
    }
}

//! Plain-text experiment configuration: one `key = value` per line, `#`
//! starts a comment. [`ExperimentConfig::emit`] writes the canonical form,
//! so `emit(parse(emit(parse(text))))` equals `emit(parse(text))`.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCondition, DomainSpec, Shape};
use crate::potentials::PotentialSpec;

/// Where spectra come from: closed-form oracles or a finite-difference grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumSource {
    Exact,
    Grid,
}

impl SpectrumSource {
    pub fn name(&self) -> &'static str {
        match self {
            SpectrumSource::Exact => "exact",
            SpectrumSource::Grid => "grid",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub domain: DomainSpec<f64>,
    pub bc: BoundaryCondition<f64>,
    pub potential: PotentialSpec<f64>,
    pub source: SpectrumSource,
    pub h: f64,
    pub eps: f64,
    pub lambda: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_step: Option<f64>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub t_count: Option<usize>,
    pub samples: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: DomainSpec::unit_square(),
            bc: BoundaryCondition::Dirichlet,
            potential: PotentialSpec::zero(),
            source: SpectrumSource::Exact,
            h: 1.0 / 32.0,
            eps: 0.5,
            lambda: None,
            lambda_min: None,
            lambda_max: None,
            lambda_step: None,
            t_min: None,
            t_max: None,
            t_count: None,
            samples: None,
            seed: 1,
            out: PathBuf::from("out"),
        }
    }
}

pub fn parse_domain(s: &str) -> Result<DomainSpec<f64>> {
    let s = s.trim();
    let args = |inner: &str| -> Result<Vec<f64>> {
        inner
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{a}` in `{s}`"))))
            .collect()
    };
    let call = |name: &str| -> Option<&str> { s.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')') };
    if s == "square" || s == "unit_square" {
        return Ok(DomainSpec::unit_square());
    }
    if s == "disk" || s == "unit_disk" {
        return DomainSpec::disk(1.0);
    }
    if let Some(inner) = call("rectangle") {
        let v = args(inner)?;
        if v.len() != 2 {
            return Err(Error::Parse(format!("rectangle takes two sides, got `{s}`")));
        }
        return DomainSpec::rectangle(v[0], v[1]);
    }
    if let Some(inner) = call("disk") {
        let v = args(inner)?;
        if v.len() != 1 {
            return Err(Error::Parse(format!("disk takes one radius, got `{s}`")));
        }
        return DomainSpec::disk(v[0]);
    }
    Err(Error::Parse(format!("unknown domain `{s}`")))
}

pub fn domain_expression(d: &DomainSpec<f64>) -> String {
    match d.shape {
        Shape::Rectangle { a, b } => format!("rectangle({a},{b})"),
        Shape::Disk { radius } => format!("disk({radius})"),
    }
}

fn num(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| Error::Parse(format!("`{key}` needs a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(Error::Parse(format!("`{key}` must be finite")));
    }
    Ok(x)
}

fn count(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Parse(format!("`{key}` needs a nonnegative integer, got `{v}`")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            c.set(key.trim(), value.trim())
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(c)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "domain" => self.domain = parse_domain(v)?,
            "bc" => self.bc = v.parse()?,
            "V" | "potential" => self.potential = v.parse()?,
            "source" => {
                self.source = match v {
                    "exact" => SpectrumSource::Exact,
                    "grid" => SpectrumSource::Grid,
                    _ => return Err(Error::Parse(format!("source must be `exact` or `grid`, got `{v}`"))),
                }
            }
            "h" => self.h = num(key, v)?,
            "eps" => self.eps = num(key, v)?,
            "lambda" => self.lambda = Some(num(key, v)?),
            "lambda_min" => self.lambda_min = Some(num(key, v)?),
            "lambda_max" => self.lambda_max = Some(num(key, v)?),
            "lambda_step" => self.lambda_step = Some(num(key, v)?),
            "t_min" => self.t_min = Some(num(key, v)?),
            "t_max" => self.t_max = Some(num(key, v)?),
            "t_count" => self.t_count = Some(count(key, v)?),
            "samples" => self.samples = Some(count(key, v)?),
            "seed" => self.seed = v.parse().map_err(|_| Error::Parse(format!("bad seed `{v}`")))?,
            "out" => self.out = PathBuf::from(v),
            _ => return Err(Error::Parse(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Canonical text: fixed key order, optional keys only when set.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "domain = {}", domain_expression(&self.domain));
        let _ = writeln!(s, "bc = {}", self.bc.name());
        let _ = writeln!(s, "V = {}", self.potential.to_expression());
        let _ = writeln!(s, "source = {}", self.source.name());
        let _ = writeln!(s, "h = {}", self.h);
        let _ = writeln!(s, "eps = {}", self.eps);
        let opt = |s: &mut String, k: &str, v: Option<f64>| {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} = {v}");
            }
        };
        opt(&mut s, "lambda", self.lambda);
        opt(&mut s, "lambda_min", self.lambda_min);
        opt(&mut s, "lambda_max", self.lambda_max);
        opt(&mut s, "lambda_step", self.lambda_step);
        opt(&mut s, "t_min", self.t_min);
        opt(&mut s, "t_max", self.t_max);
        if let Some(n) = self.t_count {
            let _ = writeln!(s, "t_count = {n}");
        }
        if let Some(n) = self.samples {
            let _ = writeln!(s, "samples = {n}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_idempotent() {
        let text = "# experiment\ndomain = square\nbc = robin:0.5\nV = inverse_power(0.5, 0.5, 1, 2) + constant(3)\n\
                    h = 0.0625\neps=0.25\nlambda_min = 10\nlambda_max = 40 # inline\nseed = 9\nout = runs/a\n";
        let once = ExperimentConfig::parse(text).unwrap().emit();
        let twice = ExperimentConfig::parse(&once).unwrap().emit();
        assert_eq!(once, twice);
        assert!(once.contains("bc = robin:0.5"));
        assert!(once.contains("lambda_max = 40"));
    }

    #[test]
    fn rejects_garbage() {
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("h = fast").is_err());
        assert!(ExperimentConfig::parse("domain = torus").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
    }

    #[test]
    fn domains() {
        assert_eq!(parse_domain("disk(2)").unwrap(), DomainSpec::disk(2.0).unwrap());
        assert_eq!(parse_domain("rectangle(2, 1)").unwrap(), DomainSpec::rectangle(2.0, 1.0).unwrap());
    }
}

//! Configuration file sections and the shared string parsers for selectors.
//!
//! The config file is flat key-value TOML with one table per subcommand;
//! command-line flags override file values. Unknown keys are rejected.

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use serde::Deserialize;
use sewcub::cubature::MeasureFamily;
use sewcub::flow::{TestFunction, VectorFieldSet};
use sewcub::gaussmart::QuadraticVariation;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub cubature: Option<CubatureSection>,
    pub paths: Option<PathsSection>,
    pub converge: Option<ConvergeSection>,
    pub generator: Option<GeneratorSection>,
    pub sewing: Option<SewingSection>,
}

impl FileConfig {
    pub fn load(path: Option<&str>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config file {p}"))?;
                toml::from_str(&text).with_context(|| format!("cannot parse config file {p}"))
            }
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubatureSection {
    pub family: Option<String>,
    pub qv: Option<String>,
    pub order: Option<usize>,
    pub tol: Option<f64>,
    pub intervals: Option<String>,
    pub n_intervals: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub family: Option<String>,
    pub qv: Option<String>,
    pub intervals: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    pub family: Option<String>,
    pub qv: Option<String>,
    pub vf: Option<String>,
    pub f: Option<String>,
    pub x: Option<f64>,
    pub horizon: Option<f64>,
    pub levels: Option<String>,
    pub mode: Option<String>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub scheme: Option<String>,
    pub out: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub family: Option<String>,
    pub qv: Option<String>,
    pub vf: Option<String>,
    pub f: Option<String>,
    pub t: Option<f64>,
    pub x: Option<f64>,
    pub h: Option<String>,
    pub tol: Option<f64>,
    pub max_error: Option<f64>,
    pub out: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SewingSection {
    pub family: Option<String>,
    pub matrix: Option<String>,
    pub matrix_b: Option<String>,
    pub interval: Option<String>,
    pub levels: Option<usize>,
    pub out: Option<String>,
}

/// `flag` wins over the config `file` value, else the default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn pick_required<T>(flag: Option<T>, file: Option<T>, what: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| anyhow!("missing required parameter: {what}"))
}

pub fn parse_qv(spec: &str) -> Result<QuadraticVariation> {
    match spec {
        "brownian" => Ok(QuadraticVariation::Brownian),
        "cubic" => Ok(QuadraticVariation::Cubic),
        other => {
            if let Some(rest) = other.strip_prefix("monomial:") {
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() != 2 {
                    bail!("monomial qv needs gamma,scale (got {other})");
                }
                let gamma: f64 = parts[0].parse().context("monomial gamma")?;
                let scale: f64 = parts[1].parse().context("monomial scale")?;
                Ok(QuadraticVariation::monomial(gamma, scale)?)
            } else {
                bail!("unknown qv {other:?}: expected brownian | cubic | monomial:gamma,scale")
            }
        }
    }
}

pub fn parse_family(spec: &str, qv: &QuadraticVariation) -> Result<MeasureFamily> {
    match spec {
        "bm5" => Ok(MeasureFamily::brownian_degree5()),
        "gm5" => Ok(MeasureFamily::gaussian_martingale_degree5(*qv)?),
        "bernoulli" => Ok(MeasureFamily::bernoulli(1.0)?),
        other => {
            if let Some(rest) = other.strip_prefix("bernoulli:") {
                let sigma: f64 = rest.parse().context("bernoulli sigma")?;
                Ok(MeasureFamily::bernoulli(sigma)?)
            } else {
                bail!("unknown family {other:?}: expected bernoulli[:sigma] | bm5 | gm5")
            }
        }
    }
}

pub fn parse_vf(spec: &str) -> Result<VectorFieldSet> {
    let (name, args) = match spec.split_once(':') {
        Some((n, a)) => (n, a),
        None => (spec, ""),
    };
    let nums: Vec<f64> = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|p| p.parse::<f64>().with_context(|| format!("bad number {p:?} in vf")))
            .collect::<Result<_>>()?
    };
    match (name, nums.as_slice()) {
        ("linear", [theta, sigma]) => Ok(VectorFieldSet::Linear {
            theta: *theta,
            sigma: *sigma,
        }),
        ("additive", [sigma]) => Ok(VectorFieldSet::Additive { sigma: *sigma }),
        ("logistic", [theta, sigma]) => Ok(VectorFieldSet::Logistic {
            theta: *theta,
            sigma: *sigma,
        }),
        _ => bail!(
            "unknown vector field {spec:?}: expected linear:theta,sigma | additive:sigma | logistic:theta,sigma"
        ),
    }
}

pub fn parse_f(spec: &str) -> Result<TestFunction> {
    match spec {
        "identity" => Ok(TestFunction::Identity),
        "square" => Ok(TestFunction::Square),
        "cube" => Ok(TestFunction::Cube),
        "cos" => Ok(TestFunction::Cos { a: 1.0, b: 0.0 }),
        "sigmoid" => Ok(TestFunction::Sigmoid),
        other => {
            if let Some(rest) = other.strip_prefix("cos:") {
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() != 2 {
                    bail!("cos needs a,b (got {other})");
                }
                Ok(TestFunction::Cos {
                    a: parts[0].parse().context("cos a")?,
                    b: parts[1].parse().context("cos b")?,
                })
            } else {
                bail!("unknown test function {other:?}")
            }
        }
    }
}

/// `"s:t"` → `(s, t)`.
pub fn parse_interval(spec: &str) -> Result<(f64, f64)> {
    let (a, b) = spec
        .split_once(':')
        .ok_or_else(|| anyhow!("interval must be s:t, got {spec:?}"))?;
    let s: f64 = a.parse().with_context(|| format!("bad interval start {a:?}"))?;
    let t: f64 = b.parse().with_context(|| format!("bad interval end {b:?}"))?;
    if !(s < t) {
        bail!("interval must satisfy s < t, got {spec:?}");
    }
    Ok((s, t))
}

/// `"0:1,1:2"` → list of intervals.
pub fn parse_intervals(spec: &str) -> Result<Vec<(f64, f64)>> {
    spec.split(',').map(parse_interval).collect()
}

pub fn parse_levels(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|p| p.parse::<usize>().with_context(|| format!("bad level {p:?}")))
        .collect()
}

pub fn parse_float_list(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|p| p.parse::<f64>().with_context(|| format!("bad number {p:?}")))
        .collect()
}

/// `rotation | diag:a,b,… | file:PATH` (the file holds a JSON array of rows).
pub fn parse_matrix(spec: &str) -> Result<DMatrix<f64>> {
    if spec == "rotation" {
        return Ok(sewcub::sewing::rotation_matrix());
    }
    if let Some(rest) = spec.strip_prefix("diag:") {
        let entries = parse_float_list(rest)?;
        if entries.is_empty() {
            bail!("diag matrix needs at least one entry");
        }
        let n = entries.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, v) in entries.into_iter().enumerate() {
            m[(i, i)] = v;
        }
        return Ok(m);
    }
    if let Some(path) = spec.strip_prefix("file:") {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("cannot read matrix file {path}"))?;
        let rows: Vec<Vec<f64>> =
            serde_json::from_str(&text).with_context(|| format!("matrix file {path} must hold a JSON array of rows"))?;
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            bail!("matrix file {path} must hold a non-empty square array");
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        return Ok(DMatrix::from_row_slice(n, n, &flat));
    }
    bail!("unknown matrix spec {spec:?}: expected rotation | diag:… | file:PATH")
}

/// 20 deterministic "random" intervals in `[lo, hi]` from the counter stream.
pub fn seeded_intervals(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    (0..n as u64)
        .map(|i| {
            let s = lo + (hi - lo - 0.05) * sewcub::numerics::counter_uniform(seed, i, 0);
            let t = s + (hi - s - 0.01) * sewcub::numerics::counter_uniform(seed, i, 1) + 0.01;
            (s, t.min(hi))
        })
        .collect()
}

pub fn seeded_triples(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<(f64, f64, f64)> {
    (0..n as u64)
        .map(|i| {
            let s = lo + (hi - lo - 0.1) * sewcub::numerics::counter_uniform(seed, i, 0);
            let u = s + (hi - s - 0.05) * sewcub::numerics::counter_uniform(seed, i, 1) + 0.01;
            let t = u + (hi - u - 0.01) * sewcub::numerics::counter_uniform(seed, i, 2) + 0.01;
            (s, u.min(hi), t.min(hi))
        })
        .collect()
}

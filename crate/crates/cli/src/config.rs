//! Command-line flags and the [`RunConfig`] they resolve to.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpp_core::kernels::KernelFamily;
use dpp_core::sampler::{Method, DEFAULT_EPS};
use dpp_core::state::DEFAULT_JITTER;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Default output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "DPP_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "dpp", version, about = "Exact and approximate sampling of continuous determinantal point processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a point set and write it as CSV or JSON.
    Sample(SampleArgs),
    /// Run the oracle suite and write a JSON report; exits 1 if any check fails.
    Validate(ValidateArgs),
    /// Compare exact and finite-rank samplers on a shared 1D state.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[value(alias = "square-exponential")]
    Se,
    #[value(alias = "exponential")]
    Exp,
}

impl From<Kernel> for KernelFamily {
    fn from(k: Kernel) -> Self {
        match k {
            Kernel::Se => KernelFamily::SquareExponential,
            Kernel::Exp => KernelFamily::Exponential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMethod {
    Exact,
    Nystrom,
    Spectral,
    Uniform,
}

impl From<SamplerMethod> for Method {
    fn from(m: SamplerMethod) -> Self {
        match m {
            SamplerMethod::Exact => Method::Exact,
            SamplerMethod::Nystrom => Method::Nystrom,
            SamplerMethod::Spectral => Method::Spectral,
            SamplerMethod::Uniform => Method::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Full,
    Quick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Sample,
    Validate,
    Compare,
}

/// Flags shared by `sample` and `compare`.
#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// Kernel family.
    #[arg(long, value_enum, default_value = "se")]
    pub kernel: Kernel,
    /// Lengthscale(s) in unit-cube coordinates: one value for every
    /// dimension, or a comma-separated list with one per dimension.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = false)]
    pub lengthscale: Vec<f64>,
    /// Dimension; inferred from --lengthscale or --domain lists when omitted.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: Option<u64>,
    /// Domain box `a,b x a,b ...` (one interval per dimension, `x`-separated),
    /// or a single `a,b` for every dimension. Default: the unit cube.
    #[arg(long, value_parser = parse_domain)]
    pub domain: Option<Domain>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bisection tolerance.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Number of points.
    #[arg(long, short = 'n', value_parser = clap::value_parser!(u64).range(1..))]
    pub num: u64,
    #[arg(long, value_enum, default_value = "exact")]
    pub method: SamplerMethod,
    /// Feature count F for nystrom/spectral.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Diagonal jitter of the exact sampler's Gram matrix.
    #[arg(long, default_value_t = DEFAULT_JITTER)]
    pub jitter: f64,
    /// Observation noise σ² of the finite-rank models.
    #[arg(long, default_value_t = dpp_core::lowrank::DEFAULT_NOISE)]
    pub noise: f64,
    /// Output file; defaults to $DPP_OUT_DIR/samples.<format>, else stdout.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Output format; inferred from the --out extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long, value_enum, default_value = "full")]
    pub scale: Scale,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file; defaults to $DPP_OUT_DIR/validation.json, else stdout.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Perturb erf by a relative 1e-4 in the closed-form CDF (mutation check).
    #[arg(long, hide = true)]
    pub mutate_erf: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Finite-rank bases to compare against the exact sampler.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "nystrom,spectral")]
    pub method: Vec<SamplerMethod>,
    /// Feature counts F, comma-separated.
    #[arg(long = "ranks", value_delimiter = ',', default_value = "5,10,15")]
    pub ranks: Vec<String>,
    /// Size of the exact state.
    #[arg(long, short = 'n', default_value_t = 100, value_parser = clap::value_parser!(u64).range(2..))]
    pub num: u64,
    /// Exact points every approximate chain starts from.
    #[arg(long, default_value_t = 20)]
    pub warm_start: usize,
    /// σ² of the finite-rank models, also the exact sampler's jitter.
    #[arg(long, default_value_t = dpp_core::lowrank::DEFAULT_NOISE)]
    pub noise: f64,
    /// Grid resolution of the deviation curves.
    #[arg(long, default_value_t = 1001)]
    pub grid: usize,
    /// Output directory; defaults to $DPP_OUT_DIR, else the working directory.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Write one comparison.json instead of CSV tables.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

/// Everything a run depends on, in serializable form.
///
/// Fields irrelevant to a subcommand keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: CommandKind,
    pub kernel: Kernel,
    pub lengthscales: Vec<f64>,
    pub dim: usize,
    pub count: usize,
    pub seed: u64,
    pub domain: Vec<[f64; 2]>,
    pub methods: Vec<SamplerMethod>,
    pub ranks: Vec<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub eps: f64,
    pub jitter: f64,
    pub noise: f64,
    pub warm_start: usize,
    pub grid_points: usize,
    pub scale: Scale,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub mutate_erf: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            subcommand: CommandKind::Sample,
            kernel: Kernel::Se,
            lengthscales: vec![0.1],
            dim: 1,
            count: 1,
            seed: 0,
            domain: vec![[0.0, 1.0]],
            methods: vec![SamplerMethod::Exact],
            ranks: Vec::new(),
            out: None,
            format: Format::Csv,
            eps: DEFAULT_EPS,
            jitter: DEFAULT_JITTER,
            noise: dpp_core::lowrank::DEFAULT_NOISE,
            warm_start: 20,
            grid_points: 1001,
            scale: Scale::Full,
            mutate_erf: false,
        }
    }
}

/// A parsed `--domain` value.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain(pub Vec<[f64; 2]>);

/// `"2,4x0,1"` → `[[2,4],[0,1]]`; `"0,10"` → one interval to broadcast.
pub fn parse_domain(s: &str) -> Result<Domain, String> {
    s.split(['x', 'X'])
        .map(|part| {
            let ends: Vec<&str> = part.split(',').map(str::trim).collect();
            let [a, b] = ends[..] else {
                return Err(format!("interval `{}` must be `a,b`", part.trim()));
            };
            let parse = |v: &str| v.parse::<f64>().map_err(|e| format!("bad bound `{v}`: {e}"));
            let (a, b) = (parse(a)?, parse(b)?);
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(format!("interval {a},{b} must be finite with a < b"));
            }
            Ok([a, b])
        })
        .collect::<Result<_, _>>()
        .map(Domain)
}

/// Expands a scalar to `dim` copies or checks a list has `dim` entries.
fn broadcast<T: Clone>(what: &str, values: Vec<T>, dim: usize) -> Result<Vec<T>, CliError> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); dim]),
        n if n == dim => Ok(values),
        n => Err(CliError::Usage(format!("{what} has {n} entries but the dimension is {dim}"))),
    }
}

impl KernelArgs {
    fn resolve(&self, cfg: &mut RunConfig, default_lengthscale: f64) -> Result<(), CliError> {
        let lengthscales = if self.lengthscale.is_empty() { vec![default_lengthscale] } else { self.lengthscale.clone() };
        let domain = self.domain.clone().map_or_else(|| vec![[0.0, 1.0]], |d| d.0);
        let dim = match self.dim {
            Some(d) => d as usize,
            None => lengthscales.len().max(domain.len()),
        };
        cfg.kernel = self.kernel;
        cfg.lengthscales = broadcast("--lengthscale", lengthscales, dim)?;
        cfg.domain = broadcast("--domain", domain, dim)?;
        cfg.dim = dim;
        cfg.seed = self.seed;
        cfg.eps = self.eps;
        if let Some(l) = cfg.lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(CliError::Usage(format!("lengthscales must be positive and finite, got {l}")));
        }
        if cfg.eps.is_nan() || cfg.eps <= 0.0 {
            return Err(CliError::Usage(format!("--eps must be positive, got {}", cfg.eps)));
        }
        Ok(())
    }
}

impl SampleArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig { subcommand: CommandKind::Sample, ..RunConfig::default() };
        self.kernel.resolve(&mut cfg, 0.1)?;
        cfg.count = self.num as usize;
        cfg.methods = vec![self.method];
        cfg.jitter = self.jitter;
        cfg.noise = self.noise;
        cfg.out = self.out.clone();
        cfg.format = self.format.unwrap_or_else(|| match &self.out {
            Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => Format::Json,
            _ => Format::Csv,
        });
        match (self.method, self.rank) {
            (SamplerMethod::Nystrom | SamplerMethod::Spectral, None) => {
                return Err(CliError::Usage(format!("--method {:?} needs --rank", self.method).to_lowercase()));
            }
            (SamplerMethod::Exact | SamplerMethod::Uniform, Some(_)) => {
                return Err(CliError::Usage("--rank only applies to nystrom and spectral".into()));
            }
            (_, rank) => cfg.ranks = rank.into_iter().collect(),
        }
        if cfg.jitter.is_nan() || cfg.jitter < 0.0 {
            return Err(CliError::Usage(format!("--jitter must be nonnegative, got {}", cfg.jitter)));
        }
        Ok(cfg)
    }
}

impl ValidateArgs {
    pub fn resolve(&self) -> RunConfig {
        RunConfig {
            subcommand: CommandKind::Validate,
            seed: self.seed,
            out: self.out.clone(),
            format: Format::Json,
            scale: self.scale,
            mutate_erf: self.mutate_erf,
            ..RunConfig::default()
        }
    }
}

impl CompareArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig { subcommand: CommandKind::Compare, ..RunConfig::default() };
        self.kernel.resolve(&mut cfg, 0.05)?;
        if cfg.dim != 1 {
            return Err(CliError::Usage(format!("compare is one-dimensional, got dimension {}", cfg.dim)));
        }
        if let Some(m) = self.method.iter().find(|m| !matches!(m, SamplerMethod::Nystrom | SamplerMethod::Spectral)) {
            return Err(CliError::Usage(format!("compare takes nystrom and/or spectral, not {m:?}").to_lowercase()));
        }
        let ranks: Vec<usize> = self
            .ranks
            .iter()
            .filter(|r| !r.trim().is_empty())
            .map(|r| r.trim().parse::<usize>().map_err(|e| CliError::Usage(format!("bad rank `{r}`: {e}"))))
            .collect::<Result<_, _>>()?;
        if ranks.is_empty() {
            return Err(CliError::Usage("--ranks needs at least one feature count".into()));
        }
        if self.warm_start > self.num as usize {
            return Err(CliError::Usage("--warm-start cannot exceed --num".into()));
        }
        cfg.methods = self.method.clone();
        cfg.ranks = ranks;
        cfg.count = self.num as usize;
        cfg.warm_start = self.warm_start;
        cfg.noise = self.noise;
        cfg.jitter = self.noise;
        cfg.grid_points = self.grid;
        cfg.out = self.out.clone();
        cfg.format = self.format;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn family(&self) -> KernelFamily {
        self.kernel.into()
    }

    /// The kernel on the configured box.
    pub fn kernel_spec(&self) -> Result<dpp_core::KernelSpec, CliError> {
        dpp_core::KernelSpec::with_box(self.family(), self.lengthscales.clone(), self.domain.clone())
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_syntax() {
        assert_eq!(parse_domain("2,4x0,1").unwrap().0, vec![[2.0, 4.0], [0.0, 1.0]]);
        assert_eq!(parse_domain(" -1 , 1 x 0,5 ").unwrap().0, vec![[-1.0, 1.0], [0.0, 5.0]]);
        assert_eq!(parse_domain("0,10").unwrap().0, vec![[0.0, 10.0]]);
        assert!(parse_domain("1,1").is_err());
        assert!(parse_domain("1,2,3").is_err());
        assert!(parse_domain("a,b").is_err());
    }

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast("l", vec![0.2], 3).unwrap(), vec![0.2; 3]);
        assert!(broadcast("l", vec![0.2, 0.3], 3).is_err());
    }

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig {
            subcommand: CommandKind::Compare,
            lengthscales: vec![0.05],
            ranks: vec![5, 10, 15],
            methods: vec![SamplerMethod::Nystrom, SamplerMethod::Spectral],
            out: Some("figs".into()),
            mutate_erf: true,
            ..RunConfig::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
    }
}

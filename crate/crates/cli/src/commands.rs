use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use dpp_core::compare::{run_comparison, CompareConfig};
use dpp_core::lowrank::{approx_draw_eps, BasisKind, FeatureBasis};
use dpp_core::sampler::{draw_uniform, ExactSampler, PointSet};
use dpp_core::special::erf;
use dpp_core::validate::{run_validation_with_erf, ValidationReport, ValidationScale};

use crate::config::{Format, RunConfig, SamplerMethod, Scale, OUT_DIR_ENV};
use crate::output::{self, CompareSummary, SampleFile, SAMPLE_FORMAT_VERSION};
use crate::CliError;

/// Where a single-file command writes: `--out`, else `$DPP_OUT_DIR/name`, else stdout.
fn destination(out: &Option<PathBuf>, default_name: &str) -> Option<PathBuf> {
    out.clone().or_else(|| std::env::var_os(OUT_DIR_ENV).map(|dir| Path::new(&dir).join(default_name)))
}

/// Renders into memory first so a failure never leaves a partial file.
fn emit(dest: Option<&Path>, render: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    render(&mut buf)?;
    match dest {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, &buf)?;
        }
        None => io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}

/// Draws the configured point set (unit-cube coordinates).
pub fn sample_points(cfg: &RunConfig) -> Result<PointSet, CliError> {
    let spec = cfg.kernel_spec()?;
    let n = cfg.count;
    let set = match cfg.methods[0] {
        SamplerMethod::Exact => ExactSampler::new(spec).eps(cfg.eps).jitter(cfg.jitter).draw(n, cfg.seed)?,
        SamplerMethod::Uniform => draw_uniform(cfg.dim, n, cfg.seed),
        kind @ (SamplerMethod::Nystrom | SamplerMethod::Spectral) => {
            let rank = cfg.ranks[0];
            let basis = if kind == SamplerMethod::Nystrom {
                FeatureBasis::nystrom(&spec, rank, cfg.noise)?
            } else {
                FeatureBasis::spectral(&spec, rank, cfg.noise)?
            };
            approx_draw_eps(&basis, n, cfg.seed, cfg.eps)?
        }
    };
    Ok(set)
}

pub fn cmd_sample(cfg: &RunConfig) -> Result<Option<PathBuf>, CliError> {
    let set = sample_points(cfg)?;
    let spec = cfg.kernel_spec()?;
    let points = set.to_box(&spec);
    let ext = match cfg.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let dest = destination(&cfg.out, &format!("samples.{ext}"));
    emit(dest.as_deref(), |buf| match cfg.format {
        Format::Csv => output::write_points_csv(buf, cfg.dim, &points),
        Format::Json => output::write_json(
            buf,
            &SampleFile {
                format_version: SAMPLE_FORMAT_VERSION,
                config: cfg.clone(),
                meta: set.meta.clone(),
                domain: cfg.domain.clone(),
                points,
            },
        ),
    })?;
    Ok(dest)
}

/// A deliberately wrong error function for the mutation check.
fn perturbed_erf(x: f64) -> f64 {
    erf(x) * (1.0 + 1e-4)
}

pub fn run_report(cfg: &RunConfig) -> ValidationReport {
    let scale = match cfg.scale {
        Scale::Full => ValidationScale::FULL,
        Scale::Quick => ValidationScale::QUICK,
    };
    let erf_fn = if cfg.mutate_erf { perturbed_erf } else { erf };
    run_validation_with_erf(scale, cfg.seed, erf_fn)
}

/// Runs the suite and writes the report; `Err(ChecksFailed)` after writing if any check failed.
pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidationReport, CliError> {
    let report = run_report(cfg);
    for c in &report.checks {
        eprintln!("{}", c.summary());
    }
    let dest = destination(&cfg.out, "validation.json");
    emit(dest.as_deref(), |buf| output::write_json(buf, &report))?;
    if report.passed {
        Ok(report)
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(CliError::ChecksFailed(names.join(", ")))
    }
}

pub fn compare_config(cfg: &RunConfig) -> Result<CompareConfig, CliError> {
    Ok(CompareConfig {
        kernel: cfg.kernel_spec()?,
        kinds: cfg
            .methods
            .iter()
            .map(|m| if *m == SamplerMethod::Nystrom { BasisKind::Nystrom } else { BasisKind::Spectral })
            .collect(),
        ranks: cfg.ranks.clone(),
        state_size: cfg.count,
        warm_start: cfg.warm_start,
        seed: cfg.seed,
        noise: cfg.noise,
        grid_points: cfg.grid_points,
        eps: cfg.eps,
    })
}

/// Writes the comparison data into the output directory and returns the files written.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let cmp = run_comparison(&compare_config(cfg)?)?;
    for c in &cmp.curves {
        eprintln!(
            "{}-{}: sup CDF deviation {:.4e}, sup variance gap {:.4e}",
            c.kind.method().as_str(),
            c.rank,
            c.sup_deviation,
            c.variance_gap
        );
    }
    let dir = cfg
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let mut file = |name: &str, render: &dyn Fn(&mut BufWriter<File>) -> Result<(), CliError>| {
        let path = dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        render(&mut w)?;
        w.flush()?;
        written.push(path);
        Ok::<(), CliError>(())
    };
    file("summary.json", &|w| output::write_json(w, &CompareSummary::new(cfg.clone(), &cmp)))?;
    match cfg.format {
        Format::Csv => {
            file("deviation.csv", &|w| output::write_deviation_csv(w, &cmp))?;
            file("samples.csv", &|w| output::write_samples_csv(w, &cmp))?;
            file("coverage.csv", &|w| output::write_coverage_csv(w, &cmp))?;
        }
        Format::Json => file("comparison.json", &|w| output::write_json(w, &cmp))?,
    }
    Ok(written)
}

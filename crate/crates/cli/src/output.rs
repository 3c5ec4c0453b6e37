//! File formats.
//!
//! CSV floats are written as `{:.16e}` (17 significant digits), which
//! round-trips every `f64` exactly and is byte-stable across runs.

use std::io::Write;
use std::path::Path;

use dpp_core::compare::Comparison;
use dpp_core::sampler::SampleMeta;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

pub const SAMPLE_FORMAT_VERSION: u32 = 1;

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// JSON form of a sample: points in box coordinates plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFile {
    pub format_version: u32,
    pub config: RunConfig,
    pub meta: SampleMeta,
    pub domain: Vec<[f64; 2]>,
    pub points: Vec<Vec<f64>>,
}

pub fn write_points_csv<W: Write>(out: W, dim: usize, points: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((1..=dim).map(|d| format!("x{d}")))?;
    for p in points {
        w.write_record(p.iter().map(|&v| float(v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points_csv(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            rec?.iter()
                .map(|v| v.parse::<f64>().map_err(|e| CliError::Run(format!("bad value `{v}` in {}: {e}", path.display()))))
                .collect()
        })
        .collect()
}

pub fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Run(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Per-curve and per-chain numbers without the bulky arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareSummary {
    pub config: RunConfig,
    pub curves: Vec<CurveSummary>,
    pub chains: Vec<ChainSummary>,
    pub coverage: Vec<dpp_core::oracle::CoverageReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSummary {
    pub method: String,
    pub rank: usize,
    pub sup_deviation: f64,
    pub variance_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSummary {
    pub method: String,
    pub rank: usize,
    pub max_gap: f64,
}

impl CompareSummary {
    pub fn new(config: RunConfig, cmp: &Comparison) -> Self {
        Self {
            config,
            curves: cmp
                .curves
                .iter()
                .map(|c| CurveSummary {
                    method: c.kind.method().as_str().into(),
                    rank: c.rank,
                    sup_deviation: c.sup_deviation,
                    variance_gap: c.variance_gap,
                })
                .collect(),
            chains: cmp
                .chains
                .iter()
                .map(|c| ChainSummary { method: c.kind.method().as_str().into(), rank: c.rank, max_gap: c.max_gap })
                .collect(),
            coverage: cmp.coverage.clone(),
        }
    }
}

/// `deviation.csv`: `t, exact_density`, then density and CDF deviation per basis.
pub fn write_deviation_csv<W: Write>(out: W, cmp: &Comparison) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "exact_density".to_string()];
    for c in &cmp.curves {
        let tag = format!("{}_{}", c.kind.method().as_str(), c.rank);
        header.push(format!("{tag}_density"));
        header.push(format!("{tag}_cdf_deviation"));
    }
    w.write_record(&header)?;
    for (i, &t) in cmp.grid.iter().enumerate() {
        let mut row = vec![float(t), float(cmp.exact_density[i])];
        for c in &cmp.curves {
            row.push(float(c.density[i]));
            row.push(float(c.cdf_deviation[i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `samples.csv`: the shared uniform variates and the seed-matched draws,
/// one column per sampler.
pub fn write_samples_csv<W: Write>(out: W, cmp: &Comparison) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string(), "variate".to_string(), "exact".to_string()];
    header.extend(cmp.chains.iter().map(|c| format!("{}_{}", c.kind.method().as_str(), c.rank)));
    w.write_record(&header)?;
    for i in 0..cmp.exact_points.len() {
        let mut row = vec![i.to_string(), float(cmp.uniforms[i]), float(cmp.exact_points[i])];
        row.extend(cmp.chains.iter().map(|c| float(c.points[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `coverage.csv`: one row per point set.
pub fn write_coverage_csv<W: Write>(out: W, cmp: &Comparison) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["set", "size", "mean_nn", "min_nn", "max_projection_gap"])?;
    for c in &cmp.coverage {
        w.write_record([
            c.method.clone().unwrap_or_default(),
            c.sample_size.to_string(),
            float(c.mean_nn),
            float(c.min_nn),
            float(c.max_projection_gap.iter().cloned().fold(0.0, f64::max)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout_is_fixed() {
        let mut buf = Vec::new();
        write_points_csv(&mut buf, 2, &[vec![0.1, 1.0], vec![1.0 / 3.0, 0.0]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "x1,x2\n1.0000000000000001e-1,1.0000000000000000e0\n3.3333333333333331e-1,0.0000000000000000e0\n"
        );
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2f64.sqrt() * 1e-300, 0.999_999_999_999_999_9, 5e-324] {
            assert_eq!(float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}

//! NMSE evaluation, SNR and AoA sweeps, and report emission.
//!
//! Evaluation is paired: at each operating point the test channels are held
//! fixed, fresh noise is drawn once per record from a dedicated stream, and
//! every estimator sees exactly the same `(y, h1)` pairs.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{Estimator, EstimatorKind};
use crate::rng::{complex_standard_normal, derive_seed, stream_rng};
use crate::scenario::{Dataset, DatasetRecord};

/// One measured operating point for one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct NmseRow {
    pub estimator: EstimatorKind,
    /// Operating-point label: the SNR in dB for SNR sweeps, the prior-pair
    /// label for AoA sweeps.
    pub point: String,
    pub nmse: f64,
    pub nmse_db: f64,
    /// Records evaluated.
    pub n: usize,
    /// 95% normal-approximation half-width of the NMSE estimate.
    pub ci95: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NmseReport {
    pub rows: Vec<NmseRow>,
}

impl NmseReport {
    pub fn find(&self, estimator: EstimatorKind, point: &str) -> Option<&NmseRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.point == point)
    }

    pub fn merge(&mut self, other: NmseReport) {
        self.rows.extend(other.rows);
    }
}

/// `(1/(M T)) sum_i ||h1_i - h1_hat_i||^2`.
pub fn nmse(
    estimates: &[Vec<Complex64>],
    truths: &[Vec<Complex64>],
    antennas: usize,
) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            got: estimates.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = 0.0;
    for (e, t) in estimates.iter().zip(truths) {
        if e.len() != antennas || t.len() != antennas {
            return Err(Error::DimensionMismatch {
                expected: antennas,
                got: e.len().min(t.len()),
            });
        }
        acc += e
            .iter()
            .zip(t)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>();
    }
    Ok(acc / (antennas * estimates.len()) as f64)
}

/// Mean and 95% half-width from per-record squared errors (already scaled
/// by 1/M).
pub fn mean_with_ci(per_record: &[f64]) -> (f64, f64) {
    let n = per_record.len() as f64;
    let mean = per_record.iter().sum::<f64>() / n;
    if per_record.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = per_record.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Redraws the observation of one record at the given noise level, keeping
/// the channels fixed. Record `i` uses stream `i` of `noise_seed`.
fn renoise(rec: &DatasetRecord, sigma_sq: f64, noise_seed: u64, index: usize) -> DatasetRecord {
    let m = rec.antennas();
    let mut rng = stream_rng(noise_seed, index as u64);
    let half = (sigma_sq / 2.0).sqrt();
    let mut y1 = Vec::with_capacity(m);
    let mut y2 = Vec::with_capacity(m);
    for i in 0..m {
        y1.push(rec.h1[i] + complex_standard_normal(&mut rng) * half);
    }
    for i in 0..m {
        y2.push(rec.h_int[i] + complex_standard_normal(&mut rng) * half);
    }
    let y = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
    DatasetRecord {
        h1: rec.h1.clone(),
        h_int: rec.h_int.clone(),
        ccm_rows: rec.ccm_rows.clone(),
        y,
        y1,
        y2,
        sigma_sq,
        sigma1_sq: sigma_sq / 2.0,
        sigma2_sq: sigma_sq / 2.0,
    }
}

/// Checksum of the paired evaluation stream `(y, h1)` at one operating
/// point; every estimator evaluated at this point consumes exactly this
/// stream.
pub fn eval_stream_checksum(ds: &Dataset, snr_db: f64, noise_seed: u64) -> u32 {
    let sigma_sq = 10f64.powf(-snr_db / 10.0);
    let mut crc = crate::scenario::format::Crc32::new();
    for (i, rec) in ds.records.iter().enumerate() {
        let r = renoise(rec, sigma_sq, noise_seed, i);
        for z in r.y.iter().chain(r.h1.iter()) {
            crc.update(&z.re.to_le_bytes());
            crc.update(&z.im.to_le_bytes());
        }
    }
    crc.finalize()
}

/// Evaluates all estimators on one dataset at one SNR (paired design).
pub fn evaluate_at(
    ds: &Dataset,
    estimators: &[Estimator],
    snr_db: f64,
    noise_seed: u64,
    point_label: &str,
) -> Result<Vec<NmseRow>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if estimators.is_empty() {
        return Err(Error::InvalidConfig("no estimators requested".into()));
    }
    let sigma_sq = 10f64.powf(-snr_db / 10.0);
    let m = ds.antennas;
    let per_record: Result<Vec<Vec<f64>>> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let rec = renoise(&ds.records[i], sigma_sq, noise_seed, i);
            let mut errs = Vec::with_capacity(estimators.len());
            for est in estimators {
                let out = est.estimate(&rec)?;
                let e: f64 = out
                    .iter()
                    .zip(&rec.h1)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    / m as f64;
                errs.push(e);
            }
            Ok(errs)
        })
        .collect();
    let per_record = per_record?;
    let mut rows = Vec::with_capacity(estimators.len());
    for (j, est) in estimators.iter().enumerate() {
        let errs: Vec<f64> = per_record.iter().map(|r| r[j]).collect();
        let (mean, ci95) = mean_with_ci(&errs);
        rows.push(NmseRow {
            estimator: est.kind(),
            point: point_label.to_string(),
            nmse: mean,
            nmse_db: 10.0 * mean.log10(),
            n: errs.len(),
            ci95,
        });
    }
    Ok(rows)
}

/// NMSE over an SNR grid: channels fixed, fresh noise per grid point.
pub fn sweep_snr(
    ds: &Dataset,
    estimators: &[Estimator],
    snr_grid_db: &[f64],
    seed: u64,
) -> Result<NmseReport> {
    let mut report = NmseReport::default();
    for (p, &snr_db) in snr_grid_db.iter().enumerate() {
        let noise_seed = derive_seed(seed, p as u64);
        let label = format_point(snr_db);
        report
            .rows
            .extend(evaluate_at(ds, estimators, snr_db, noise_seed, &label)?);
    }
    Ok(report)
}

/// Default SNR grid: -10..30 dB in 5 dB steps.
pub fn default_snr_grid() -> Vec<f64> {
    (0..9).map(|i| -10.0 + 5.0 * i as f64).collect()
}

/// One AoA operating point: a labeled per-prior-pair test set with the
/// estimators evaluated on it (VAE estimators are trained per pair).
pub struct AoaPoint<'a> {
    pub label: String,
    pub dataset: &'a Dataset,
    pub estimators: &'a [Estimator],
}

/// NMSE over AoA prior configurations at one fixed SNR.
pub fn sweep_aoa(points: &[AoaPoint<'_>], snr_db: f64, seed: u64) -> Result<NmseReport> {
    let mut report = NmseReport::default();
    for (p, point) in points.iter().enumerate() {
        let noise_seed = derive_seed(seed, p as u64);
        report.rows.extend(evaluate_at(
            point.dataset,
            point.estimators,
            snr_db,
            noise_seed,
            &point.label,
        )?);
    }
    Ok(report)
}

fn format_point(snr_db: f64) -> String {
    if snr_db == snr_db.trunc() {
        format!("{}", snr_db as i64)
    } else {
        format!("{snr_db}")
    }
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    /// Per-estimator series blocks for external plotting tools.
    PlotData,
}

/// Writes a report; CSV columns are exactly
/// `estimator,point,nmse,nmse_db,n,ci95`.
pub fn emit_report(report: &NmseReport, path: &Path, format: ReportFormat) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        ReportFormat::Csv => {
            writeln!(out, "estimator,point,nmse,nmse_db,n,ci95")?;
            for r in &report.rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.estimator, r.point, r.nmse, r.nmse_db, r.n, r.ci95
                )?;
            }
        }
        ReportFormat::PlotData => {
            let mut kinds: Vec<EstimatorKind> = Vec::new();
            for r in &report.rows {
                if !kinds.contains(&r.estimator) {
                    kinds.push(r.estimator);
                }
            }
            for kind in kinds {
                writeln!(out, "# series: {kind}")?;
                writeln!(out, "# point nmse nmse_db n ci95")?;
                for r in report.rows.iter().filter(|r| r.estimator == kind) {
                    writeln!(
                        out,
                        "{} {} {} {} {}",
                        r.point, r.nmse, r.nmse_db, r.n, r.ci95
                    )?;
                }
                writeln!(out)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Parses a CSV report produced by [`emit_report`].
pub fn parse_report_csv(path: &Path) -> Result<NmseReport> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::EmptyDataset)?;
    if header.trim() != "estimator,point,nmse,nmse_db,n,ci95" {
        return Err(Error::InvalidConfig(format!(
            "unexpected report header `{header}`"
        )));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::InvalidConfig(format!(
                "line {}: expected 6 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::InvalidConfig(format!("bad float `{s}`")))
        };
        rows.push(NmseRow {
            estimator: fields[0].parse()?,
            point: fields[1].to_string(),
            nmse: parse_f(fields[2])?,
            nmse_db: parse_f(fields[3])?,
            n: fields[4]
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad count `{}`", fields[4])))?,
            ci95: parse_f(fields[5])?,
        });
    }
    Ok(NmseReport { rows })
}

/// Plain-text table for terminal display.
pub fn format_report_table(report: &NmseReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<12} {:>14} {:>12} {:>9} {:>8} {:>10}\n",
        "estimator", "point", "nmse", "nmse_db", "n", "ci95"
    ));
    for r in &report.rows {
        s.push_str(&format!(
            "{:<12} {:>14} {:>12.6} {:>9.3} {:>8} {:>10.2e}\n",
            r.estimator.to_string(),
            r.point,
            r.nmse,
            r.nmse_db,
            r.n,
            r.ci95
        ));
    }
    s
}

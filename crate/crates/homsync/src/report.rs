//! Byte-stable emission of scan tables and summaries.
//!
//! CSV numbers carry 9 significant digits with `.` as the decimal
//! separator; every artifact starts with a schema tag, the resolved config
//! hash and the seed, so identical runs diff clean.

use std::io::{self, Write};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::estimate::{CorrelationPoint, ScanPoint};
use crate::pipeline::{CurveRow, DipScanResult, DipTableRow, SecurityResult, SyncResult};
use crate::security::SweepRow;

/// Provenance stamped into every artifact header.
#[derive(Debug, Clone, Copy)]
pub struct Meta<'a> {
    pub schema: &'a str,
    pub config_hash: &'a str,
    pub seed: u64,
}

impl<'a> Meta<'a> {
    pub fn new(schema: &'a str, cfg: &'a ExperimentConfig) -> Self {
        Self {
            schema,
            config_hash: cfg.hash(),
            seed: cfg.seed,
        }
    }
}

/// Formats with 9 significant digits, plain notation inside a sane exponent
/// range and scientific outside it.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..9).contains(&exp) {
        return format!("{x:.8e}");
    }
    let decimals = (8 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

fn header<W: Write>(w: &mut W, meta: &Meta, columns: &str) -> io::Result<()> {
    writeln!(w, "# schema: {}", meta.schema)?;
    writeln!(w, "# config: {}", meta.config_hash)?;
    writeln!(w, "# seed: {}", meta.seed)?;
    writeln!(w, "{columns}")
}

/// JSON artifact: the same provenance fields wrap the payload.
pub fn write_json<W: Write, T: Serialize>(w: &mut W, meta: &Meta, data: &T) -> io::Result<()> {
    #[derive(Serialize)]
    struct Envelope<'a, T> {
        schema: &'a str,
        config: &'a str,
        seed: u64,
        data: &'a T,
    }
    let env = Envelope {
        schema: meta.schema,
        config: meta.config_hash,
        seed: meta.seed,
        data,
    };
    serde_json::to_writer_pretty(&mut *w, &env)?;
    writeln!(w)
}

pub fn write_scan_csv<W: Write>(w: &mut W, meta: &Meta, points: &[ScanPoint]) -> io::Result<()> {
    header(w, meta, "delay_ns,rate,stderr,n_trials")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_sig(p.delay),
            fmt_sig(p.rate),
            fmt_sig(p.stderr),
            p.n_trials
        )?;
    }
    Ok(())
}

pub fn write_fit_csv<W: Write>(w: &mut W, meta: &Meta, scans: &[&DipScanResult]) -> io::Result<()> {
    header(
        w,
        meta,
        "direction,baseline,depth,center_ns,width_ns,center_stderr_ns,chi2,iterations,\
         scan_center_ns,coarse_offset,theory_baseline,theory_floor",
    )?;
    for s in scans {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.direction.label(),
            fmt_sig(s.fit.baseline),
            fmt_sig(s.fit.depth),
            fmt_sig(s.fit.center),
            fmt_sig(s.fit.width),
            fmt_sig(s.fit.center_stderr),
            fmt_sig(s.fit.chi2),
            s.fit.iterations,
            fmt_sig(s.scan_center),
            s.coarse_offset,
            fmt_sig(s.theory_baseline),
            fmt_sig(s.theory_floor),
        )?;
    }
    Ok(())
}

pub fn write_correlation_csv<W: Write>(
    w: &mut W,
    meta: &Meta,
    points: &[CorrelationPoint],
) -> io::Result<()> {
    header(w, meta, "k,rate,stderr,n_trials")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{}",
            p.k,
            fmt_sig(p.rate),
            fmt_sig(p.stderr),
            p.n_trials
        )?;
    }
    Ok(())
}

/// Flat summary of a sync run, one row per experiment.
#[derive(Debug, Clone, Serialize)]
pub struct SyncSummary {
    pub k: i64,
    pub k_prime: i64,
    pub dt_bb_ns: f64,
    pub dt_bb_stderr_ns: f64,
    pub dt_aa_ns: f64,
    pub dt_aa_stderr_ns: f64,
    pub t_rep_ns: f64,
    pub delta_hat_ns: f64,
    pub delta_stderr_ns: f64,
    pub delta_true_ns: f64,
    pub accuracy_ns: f64,
    pub predicted_asymmetry_bias_ns: f64,
}

impl SyncSummary {
    pub fn new(sync: &SyncResult, cfg: &ExperimentConfig) -> Self {
        let e = &sync.estimate;
        Self {
            k: e.k,
            k_prime: e.k_prime,
            dt_bb_ns: e.dt_bb,
            dt_bb_stderr_ns: e.dt_bb_stderr,
            dt_aa_ns: e.dt_aa,
            dt_aa_stderr_ns: e.dt_aa_stderr,
            t_rep_ns: cfg.source.rep_period,
            delta_hat_ns: e.delta_hat,
            delta_stderr_ns: e.delta_stderr,
            delta_true_ns: cfg.clocks.delta_true,
            accuracy_ns: sync.accuracy,
            predicted_asymmetry_bias_ns: sync.predicted_asymmetry_bias,
        }
    }
}

pub fn write_sync_summary_csv<W: Write>(
    w: &mut W,
    meta: &Meta,
    summary: &SyncSummary,
) -> io::Result<()> {
    header(
        w,
        meta,
        "k,k_prime,dt_bb_ns,dt_bb_stderr_ns,dt_aa_ns,dt_aa_stderr_ns,t_rep_ns,\
         delta_hat_ns,delta_stderr_ns,delta_true_ns,accuracy_ns,predicted_asymmetry_bias_ns",
    )?;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        summary.k,
        summary.k_prime,
        fmt_sig(summary.dt_bb_ns),
        fmt_sig(summary.dt_bb_stderr_ns),
        fmt_sig(summary.dt_aa_ns),
        fmt_sig(summary.dt_aa_stderr_ns),
        fmt_sig(summary.t_rep_ns),
        fmt_sig(summary.delta_hat_ns),
        fmt_sig(summary.delta_stderr_ns),
        fmt_sig(summary.delta_true_ns),
        fmt_sig(summary.accuracy_ns),
        fmt_sig(summary.predicted_asymmetry_bias_ns),
    )
}

pub fn write_verdict_csv<W: Write>(
    w: &mut W,
    meta: &Meta,
    result: &SecurityResult,
) -> io::Result<()> {
    let v = &result.verdict;
    header(
        w,
        meta,
        "observed_rate,n_trials,honest_floor,attacked_floor,threshold,z_score,flagged",
    )?;
    writeln!(
        w,
        "{},{},{},{},{},{},{}",
        fmt_sig(v.observed_rate),
        v.n_trials,
        fmt_sig(v.honest_floor),
        fmt_sig(v.attacked_floor),
        fmt_sig(v.threshold),
        fmt_sig(v.z_score),
        v.flagged as u8,
    )
}

pub fn write_sweep_csv<W: Write>(w: &mut W, meta: &Meta, rows: &[SweepRow]) -> io::Result<()> {
    header(
        w,
        meta,
        "mu,honest_analytic,honest_mc,honest_err,ir_analytic,ir_mc,ir_err,floor_eq10",
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            fmt_sig(r.mu),
            fmt_sig(r.honest_analytic),
            fmt_sig(r.honest_mc),
            fmt_sig(r.honest_err),
            fmt_sig(r.ir_analytic),
            fmt_sig(r.ir_mc),
            fmt_sig(r.ir_err),
            fmt_sig(r.floor_eq10),
        )?;
    }
    Ok(())
}

pub fn write_security_dip_csv<W: Write>(
    w: &mut W,
    meta: &Meta,
    rows: &[DipTableRow],
) -> io::Result<()> {
    header(
        w,
        meta,
        "tau_ns,honest_analytic,honest_mc,honest_err,ir_analytic,ir_mc,ir_err",
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_sig(r.tau),
            fmt_sig(r.honest_analytic),
            fmt_sig(r.honest_mc),
            fmt_sig(r.honest_err),
            fmt_sig(r.ir_analytic),
            fmt_sig(r.ir_mc),
            fmt_sig(r.ir_err),
        )?;
    }
    Ok(())
}

pub fn write_curves_csv<W: Write>(w: &mut W, meta: &Meta, rows: &[CurveRow]) -> io::Result<()> {
    header(w, meta, "mu,phi_degrees,sigma_t_ns,tau_ns,probability")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_sig(r.mu),
            fmt_sig(r.phi_degrees),
            fmt_sig(r.sigma_t),
            fmt_sig(r.tau),
            fmt_sig(r.probability),
        )?;
    }
    Ok(())
}

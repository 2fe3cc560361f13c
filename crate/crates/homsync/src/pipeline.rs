//! Experiment orchestration: delay-line scans, the full bidirectional sync
//! pipeline, the security run, and analytic curve tables.
//!
//! Scan points are independent frames and run in parallel; every frame owns
//! a counter-derived RNG stream, so results are identical whatever the
//! thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::estimate::{self, CorrelationPoint, DipFit, OffsetEstimate, ScanPoint};
use crate::model;
use crate::security::{self, AttackKind, DetectionVerdict, SweepRow};
use crate::sim::{self, Direction, FrameRecord, FrameSeed};
use crate::{Error, Result};

/// Monte Carlo trials behind each point of the security tables.
pub const SECURITY_TRIALS_PER_POINT: usize = 20_000;

/// Delay grid of `2*floor(half_span/step) + 1` points centered on `center`.
pub fn vdl_grid(center: f64, half_span: f64, step: f64) -> Vec<f64> {
    let m = (half_span / step).floor() as i64;
    (-m..=m).map(|i| center + i as f64 * step).collect()
}

/// Coarse scan center for one direction: the delay-line setting that would
/// align the schedules, reduced by whole periods to sit nearest the nominal
/// (path-matched) delay. Also returns the integer offset absorbed that way.
pub fn scan_center(cfg: &ExperimentConfig, direction: Direction) -> (f64, i64) {
    let t_rep = cfg.source.rep_period;
    let (ideal, nominal) = match direction {
        Direction::AtoB => (
            cfg.clocks.delta_true + cfg.channel.prop_delay_ab,
            cfg.channel.prop_delay_ab,
        ),
        Direction::BtoA => (
            -cfg.clocks.delta_true + cfg.channel.prop_delay_ba,
            cfg.channel.prop_delay_ba,
        ),
    };
    let k = ((ideal - nominal) / t_rep).round() as i64;
    (ideal - k as f64 * t_rep, k)
}

/// Everything one direction's path-balancing scan produced.
#[derive(Debug, Clone)]
pub struct DipScanResult {
    pub direction: Direction,
    pub scan_center: f64,
    /// Integer offset absorbed by the scan centering.
    pub coarse_offset: i64,
    pub points: Vec<ScanPoint>,
    pub fit: DipFit,
    /// Re-simulated frame at the grid point nearest the fitted center,
    /// input to the stage-two correlation analysis.
    pub optimal_frame: FrameRecord,
    /// Analytic plateau for this intensity, for comparison with `fit.baseline`.
    pub theory_baseline: f64,
    /// Analytic post-selected floor, for comparison with the fitted dip bottom.
    pub theory_floor: f64,
}

/// Sweeps the receiving party's delay line across the dip and fits it.
pub fn run_dip_scan(cfg: &ExperimentConfig, direction: Direction) -> Result<DipScanResult> {
    let (center, coarse_offset) = scan_center(cfg, direction);
    let grid = vdl_grid(center, cfg.scan.vdl_half_span, cfg.scan.vdl_step);
    let params = cfg.frame_params();

    let points: Vec<ScanPoint> = grid
        .par_iter()
        .enumerate()
        .map(|(idx, &delay)| {
            let mut hits = 0usize;
            let mut n = 0usize;
            for frame_index in 0..cfg.scan.frames {
                let seed = FrameSeed::new(
                    cfg.seed,
                    sim::streams::frame(direction, idx as u32, frame_index),
                );
                let frame = sim::simulate_frame(&params, direction, delay, seed)?;
                for p in frame.pairs.iter().filter(|p| p.remote_state == p.local_state) {
                    n += 1;
                    hits += p.coincided as usize;
                }
            }
            Ok(ScanPoint::from_counts(delay, hits, n))
        })
        .collect::<Result<_>>()?;

    let fit = estimate::fit_inverted_gaussian(&points)?;

    let nearest = grid
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (fit.center - **a)
                .abs()
                .partial_cmp(&(fit.center - **b).abs())
                .unwrap()
        })
        .map(|(i, _)| i)
        .expect("grid is non-empty");
    let seed = FrameSeed::new(cfg.seed, sim::streams::frame(direction, nearest as u32, 0));
    let optimal_frame = sim::simulate_frame(&params, direction, grid[nearest], seed)?;

    let mu = cfg.mu_eff();
    Ok(DipScanResult {
        direction,
        scan_center: center,
        coarse_offset,
        points,
        fit,
        optimal_frame,
        theory_baseline: model::coincidence_symmetric(mu, 0.0),
        theory_floor: model::postselected_min(mu)?,
    })
}

/// Output of the full bidirectional pipeline.
#[derive(Debug, Clone)]
pub struct SyncResult {
    pub ab: DipScanResult,
    pub ba: DipScanResult,
    pub corr_ab: Vec<CorrelationPoint>,
    pub corr_ba: Vec<CorrelationPoint>,
    pub estimate: OffsetEstimate,
    /// `|delta_hat - delta_true|`, ns.
    pub accuracy: f64,
    /// Bias `(dt_AB - dt_BA)/2` the configured channel asymmetry predicts.
    pub predicted_asymmetry_bias: f64,
}

/// Runs both directions' scans, recovers the integer offsets from the
/// optimal-delay frames, and assembles the clock-offset estimate.
pub fn run_sync(cfg: &ExperimentConfig) -> Result<SyncResult> {
    let ab = run_dip_scan(cfg, Direction::AtoB)?;
    let ba = run_dip_scan(cfg, Direction::BtoA)?;

    let (corr_ab, k) = correlation_stage(cfg, &ab)?;
    let (corr_ba, k_prime) = correlation_stage(cfg, &ba)?;

    // dt_BB is Bob's fitted optimal delay (A->B scan), dt_AA Alice's.
    let estimate = estimate::estimate_offset(&ba.fit, &ab.fit, k, k_prime, cfg.source.rep_period);
    let accuracy = (estimate.delta_hat - cfg.clocks.delta_true).abs();
    let predicted_asymmetry_bias =
        estimate::asymmetry_bias(cfg.channel.prop_delay_ab, cfg.channel.prop_delay_ba);

    Ok(SyncResult {
        ab,
        ba,
        corr_ab,
        corr_ba,
        estimate,
        accuracy,
        predicted_asymmetry_bias,
    })
}

fn correlation_stage(
    cfg: &ExperimentConfig,
    scan: &DipScanResult,
) -> Result<(Vec<CorrelationPoint>, i64)> {
    let base = scan.optimal_frame.modal_offset().ok_or_else(|| {
        Error::InsufficientData("no paired events to correlate".into())
    })?;
    let points = estimate::correlation_scan(
        &scan.optimal_frame,
        base - cfg.scan.k_range..=base + cfg.scan.k_range,
    );
    let k = estimate::recovered_offset(&points).ok_or_else(|| {
        Error::InsufficientData("correlation scan has no post-selected events".into())
    })?;
    Ok((points, k))
}

/// One delay point of the honest-vs-attacked dip cross-section.
#[derive(Debug, Clone, Serialize)]
pub struct DipTableRow {
    pub tau: f64,
    pub honest_analytic: f64,
    pub honest_mc: f64,
    pub honest_err: f64,
    pub ir_analytic: f64,
    pub ir_mc: f64,
    pub ir_err: f64,
}

/// Output of the security run.
#[derive(Debug, Clone)]
pub struct SecurityResult {
    /// Verdict on the configured channel (honest unless an attack is set).
    pub verdict: DetectionVerdict,
    /// Post-selected trials behind the verdict.
    pub verdict_trials: usize,
    pub sweep: Vec<SweepRow>,
    pub dip: Vec<DipTableRow>,
}

/// Simulates the configured channel at the balanced delay, tests it against
/// the honest floor, and tabulates the honest-vs-attacked dip and the
/// floor-vs-intensity sweep.
pub fn run_security(cfg: &ExperimentConfig) -> Result<SecurityResult> {
    let mu = cfg.mu_eff();
    let params = cfg.frame_params();
    let (center, _) = scan_center(cfg, Direction::AtoB);
    let seed = FrameSeed::new(cfg.seed, sim::streams::verdict(Direction::AtoB));
    let frame = sim::simulate_frame(&params, Direction::AtoB, center, seed)?;
    let (rate, n) = frame.postselected_rate();
    let verdict = security::detect_eavesdropper(rate, n, mu, cfg.significance)?;

    let sigma_t = cfg.source.sigma_t();
    let sigma_spec = cfg.source.sigma_spec();
    let taus = vdl_grid(0.0, 5.0 * sigma_t, 0.25 * sigma_t);
    let dip = taus
        .par_iter()
        .enumerate()
        .map(|(i, &tau)| {
            let temporal = model::temporal_overlap(sigma_spec, tau);
            let honest_analytic = model::coincidence_symmetric(mu, temporal);
            let ir_analytic = 0.5 * model::coincidence_symmetric(mu, temporal)
                + 0.5 * model::coincidence_symmetric(mu, temporal * std::f64::consts::FRAC_1_SQRT_2);

            let mut rng = FrameSeed::new(cfg.seed, sim::streams::dip_table(0, i as u64)).rng();
            let honest_mc = security::sample_postselected_rate_at(
                mu,
                AttackKind::None,
                temporal,
                SECURITY_TRIALS_PER_POINT,
                &mut rng,
            );
            let mut rng = FrameSeed::new(cfg.seed, sim::streams::dip_table(1, i as u64)).rng();
            let ir_mc = security::sample_postselected_rate_at(
                mu,
                AttackKind::InterceptResend,
                temporal,
                SECURITY_TRIALS_PER_POINT,
                &mut rng,
            );
            DipTableRow {
                tau,
                honest_analytic,
                honest_mc,
                honest_err: crate::stats::binomial_stderr(honest_mc, SECURITY_TRIALS_PER_POINT),
                ir_analytic,
                ir_mc,
                ir_err: crate::stats::binomial_stderr(ir_mc, SECURITY_TRIALS_PER_POINT),
            }
        })
        .collect();

    let sweep_grid: Vec<f64> = (1..=20).map(|i| i as f64 * 0.1).collect();
    let sweep = security::attack_sweep(&sweep_grid, SECURITY_TRIALS_PER_POINT, cfg.seed)?;

    Ok(SecurityResult {
        verdict,
        verdict_trials: n,
        sweep,
        dip,
    })
}

/// One point of an analytic coincidence curve.
#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub mu: f64,
    pub phi_degrees: f64,
    pub sigma_t: f64,
    pub tau: f64,
    pub probability: f64,
}

/// Analytic figure data: no sampling involved.
#[derive(Debug, Clone)]
pub struct CurvesResult {
    /// Coincidence vs delay across the (mu, phi) grid at the source width.
    pub mu_phi: Vec<CurveRow>,
    /// Coincidence vs delay across the width grid at mu = 1, phi = 0.
    pub sigma: Vec<CurveRow>,
}

pub fn run_curves(cfg: &ExperimentConfig) -> Result<CurvesResult> {
    let taus = vdl_grid(0.0, cfg.curves.tau_half_span, cfg.curves.tau_step);
    let sigma_t_ref = cfg.source.sigma_t();

    let mut mu_phi = Vec::new();
    for &mu in &cfg.curves.mu_grid {
        for &phi in &cfg.curves.phi_degrees {
            let cos_phi = phi.to_radians().cos().abs();
            for &tau in &taus {
                let s = cos_phi * model::temporal_overlap(1.0 / (2.0 * sigma_t_ref), tau);
                mu_phi.push(CurveRow {
                    mu,
                    phi_degrees: phi,
                    sigma_t: sigma_t_ref,
                    tau,
                    probability: model::coincidence_symmetric(mu, s),
                });
            }
        }
    }

    let mut sigma = Vec::new();
    for &sigma_t in &cfg.curves.sigma_t_grid {
        for &tau in &taus {
            let s = model::temporal_overlap(1.0 / (2.0 * sigma_t), tau);
            sigma.push(CurveRow {
                mu: 1.0,
                phi_degrees: 0.0,
                sigma_t,
                tau,
                probability: model::coincidence_symmetric(1.0, s),
            });
        }
    }

    Ok(CurvesResult { mu_phi, sigma })
}

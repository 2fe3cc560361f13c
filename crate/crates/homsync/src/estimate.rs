//! Two-stage offset estimation: a weighted inverted-Gaussian fit of the
//! delay-line scan pins the optimal local delays, a correlation scan over
//! integer pulse offsets pins `k` and `k'`, and the offset algebra
//!
//! ```text
//! delta = [(k - k') T_rep + dt_BB - dt_AA] / 2
//! ```
//!
//! combines them with the channel delay cancelled under reciprocity.

use std::ops::RangeInclusive;

use serde::Serialize;

use crate::model;
use crate::sim::FrameRecord;
use crate::stats;

/// One point of a delay-line scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    /// Delay-line setting, ns.
    pub delay: f64,
    /// Post-selected coincidence rate.
    pub rate: f64,
    /// Binomial standard error of the rate.
    pub stderr: f64,
    pub n_trials: usize,
}

impl ScanPoint {
    /// Builds a point from raw counts, assigning the binomial error bar
    /// (rule-of-three bound for degenerate rates).
    pub fn from_counts(delay: f64, hits: usize, n_trials: usize) -> Self {
        let rate = if n_trials == 0 {
            0.0
        } else {
            hits as f64 / n_trials as f64
        };
        Self {
            delay,
            rate,
            stderr: stats::binomial_stderr(rate, n_trials),
            n_trials,
        }
    }
}

/// Fitted inverted-Gaussian dip `rate(d) = B - A exp(-(d - d0)^2 / (2 w^2))`.
#[derive(Debug, Clone, Serialize)]
pub struct DipFit {
    /// Baseline `B`.
    pub baseline: f64,
    /// Dip depth `A`.
    pub depth: f64,
    /// Dip center `d0`, ns: the optimal local delay.
    pub center: f64,
    /// Gaussian width `w`, ns.
    pub width: f64,
    /// Parameter covariance in the order `[B, A, d0, w]`.
    pub covariance: [[f64; 4]; 4],
    /// Standard error of the center, ns.
    pub center_stderr: f64,
    /// Weighted chi-square at the optimum.
    pub chi2: f64,
    pub iterations: usize,
}

impl DipFit {
    /// A fit record from bare parameter values with a diagonal covariance;
    /// handy when the inputs come from elsewhere than the fitter.
    pub fn from_parameters(
        baseline: f64,
        depth: f64,
        center: f64,
        width: f64,
        center_stderr: f64,
    ) -> Self {
        let mut covariance = [[0.0; 4]; 4];
        covariance[2][2] = center_stderr * center_stderr;
        Self {
            baseline,
            depth,
            center,
            width,
            covariance,
            center_stderr,
            chi2: 0.0,
            iterations: 0,
        }
    }

    /// Standard error of the fitted floor `B - A`.
    pub fn floor_stderr(&self) -> f64 {
        (self.covariance[0][0] + self.covariance[1][1] - 2.0 * self.covariance[0][1])
            .max(0.0)
            .sqrt()
    }
}

/// Why a dip fit failed.
#[derive(Debug, Clone, thiserror::Error)]
pub enum FitError {
    /// Degenerate scan: too few points, missing statistics, or no dip to fit.
    #[error("no dip: {0}")]
    NoDip(String),
    /// The iteration cap was reached; carries the last iterate `[B, A, d0, w]`.
    #[error("no convergence after {iterations} iterations (last iterate {last:?})")]
    NoConvergence { iterations: usize, last: [f64; 4] },
}

const MAX_ITERATIONS: usize = 200;
const CHI2_RELATIVE_TOL: f64 = 1e-10;
const STEP_RELATIVE_TOL: f64 = 1e-8;

/// Weighted least-squares fit of the inverted-Gaussian dip model.
///
/// Damped Gauss-Newton with the analytic Jacobian; the per-point standard
/// errors provide the weights and `(J^T W J)^{-1}` at the optimum provides
/// the covariance.
pub fn fit_inverted_gaussian(points: &[ScanPoint]) -> Result<DipFit, FitError> {
    if points.len() < 5 {
        return Err(FitError::NoDip(format!(
            "need at least 5 scan points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.stderr > 0.0)) {
        return Err(FitError::NoDip(
            "scan contains points without statistics".into(),
        ));
    }

    let mut p = initial_guess(points)?;
    let mut lambda = 1e-3;
    let mut chi2 = chi_square(points, &p);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, g) = normal_equations(points, &p);
        let mut stepped = false;

        while lambda <= 1e14 {
            let mut damped = jtj;
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] *= 1.0 + lambda;
            }
            if let Some(delta) = solve4(&damped, &g) {
                let mut cand = p;
                for (c, d) in cand.iter_mut().zip(&delta) {
                    *c += d;
                }
                cand[3] = cand[3].abs().max(f64::MIN_POSITIVE);
                let c2 = chi_square(points, &cand);
                if c2.is_finite() && c2 <= chi2 {
                    let rel_drop = (chi2 - c2) / chi2.max(f64::MIN_POSITIVE);
                    let rel_step = delta
                        .iter()
                        .zip(&p)
                        .map(|(d, v)| d.abs() / v.abs().max(1.0))
                        .fold(0.0, f64::max);
                    p = cand;
                    chi2 = c2;
                    lambda = (lambda * 0.1).max(1e-14);
                    stepped = true;
                    if rel_drop < CHI2_RELATIVE_TOL || rel_step < STEP_RELATIVE_TOL {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }

        if converged || !stepped {
            break;
        }
    }

    if !converged {
        return Err(FitError::NoConvergence {
            iterations,
            last: p,
        });
    }
    if p[1] <= 0.0 {
        return Err(FitError::NoDip(format!(
            "fitted depth is non-positive ({})",
            p[1]
        )));
    }

    let (jtj, _) = normal_equations(points, &p);
    let covariance = invert4(&jtj).ok_or(FitError::NoConvergence {
        iterations,
        last: p,
    })?;

    Ok(DipFit {
        baseline: p[0],
        depth: p[1],
        center: p[2],
        width: p[3].abs(),
        covariance,
        center_stderr: covariance[2][2].max(0.0).sqrt(),
        chi2,
        iterations,
    })
}

/// Derivative-free start: baseline from the brightest quintile, center at
/// the minimum, width from the half-depth crossing.
fn initial_guess(points: &[ScanPoint]) -> Result<[f64; 4], FitError> {
    let n = points.len();
    let mut rates: Vec<f64> = points.iter().map(|p| p.rate).collect();
    rates.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top = ((n as f64 * 0.2).ceil() as usize).max(1);
    let baseline = rates[..top].iter().sum::<f64>() / top as f64;

    let min_point = points
        .iter()
        .min_by(|a, b| a.rate.partial_cmp(&b.rate).unwrap())
        .unwrap();
    let depth = baseline - min_point.rate;
    if !(depth > 0.0) {
        return Err(FitError::NoDip(format!(
            "flat scan: baseline {baseline} does not exceed minimum {}",
            min_point.rate
        )));
    }

    let half = baseline - 0.5 * depth;
    let below: Vec<f64> = points
        .iter()
        .filter(|p| p.rate < half)
        .map(|p| p.delay)
        .collect();
    let span = points.iter().map(|p| p.delay).fold(f64::NEG_INFINITY, f64::max)
        - points.iter().map(|p| p.delay).fold(f64::INFINITY, f64::min);
    let mut width = if below.len() >= 2 {
        let lo = below.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = below.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (hi - lo)
    } else {
        span / 10.0
    };
    if !(width > 0.0) {
        width = (span / 10.0).max(f64::MIN_POSITIVE);
    }

    Ok([baseline, depth, min_point.delay, width])
}

fn model_rate(p: &[f64; 4], delay: f64) -> f64 {
    let z = (delay - p[2]) / p[3];
    p[0] - p[1] * (-0.5 * z * z).exp()
}

fn chi_square(points: &[ScanPoint], p: &[f64; 4]) -> f64 {
    points
        .iter()
        .map(|pt| {
            let r = (pt.rate - model_rate(p, pt.delay)) / pt.stderr;
            r * r
        })
        .sum()
}

/// Weighted normal equations: returns `(J^T J, J^T r)` with rows scaled by
/// `1/stderr`.
fn normal_equations(points: &[ScanPoint], p: &[f64; 4]) -> ([[f64; 4]; 4], [f64; 4]) {
    let mut jtj = [[0.0; 4]; 4];
    let mut g = [0.0; 4];
    for pt in points {
        let z = (pt.delay - p[2]) / p[3];
        let e = (-0.5 * z * z).exp();
        let w = 1.0 / pt.stderr;
        // d(model)/d[B, A, d0, w]
        let row = [
            w,
            -e * w,
            -p[1] * e * z / p[3] * w,
            -p[1] * e * z * z / p[3] * w,
        ];
        let r = (pt.rate - model_rate(p, pt.delay)) * w;
        for i in 0..4 {
            g[i] += row[i] * r;
            for j in 0..4 {
                jtj[i][j] += row[i] * row[j];
            }
        }
    }
    (jtj, g)
}

/// Gaussian elimination with partial pivoting.
fn solve4(a: &[[f64; 4]; 4], b: &[f64; 4]) -> Option<[f64; 4]> {
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..4 {
        let mut pivot = col;
        for row in col + 1..4 {
            if m[row][col].abs() > m[pivot][col].abs() {
                pivot = row;
            }
        }
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for j in col..4 {
                m[row][j] -= f * m[col][j];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        let mut sum = rhs[i];
        for j in i + 1..4 {
            sum -= m[i][j] * x[j];
        }
        x[i] = sum / m[i][i];
    }
    Some(x)
}

fn invert4(a: &[[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut inv = [[0.0; 4]; 4];
    for col in 0..4 {
        let mut e = [0.0; 4];
        e[col] = 1.0;
        let x = solve4(a, &e)?;
        for row in 0..4 {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

/// One candidate integer offset of the correlation scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationPoint {
    pub k: i64,
    pub rate: f64,
    pub stderr: f64,
    pub n_trials: usize,
}

/// Re-pairs a frame's event record at every integer offset in `k_range` and
/// returns the post-selected coincidence rate per candidate.
///
/// Pulses re-paired at the wrong offset never physically interfered, so
/// their outcomes are drawn fresh from the coincidence probability at the
/// re-paired arrival difference, on a stream keyed by the frame seed and
/// `k`; the whole scan is reproducible from the frame alone.
pub fn correlation_scan(frame: &FrameRecord, k_range: RangeInclusive<i64>) -> Vec<CorrelationPoint> {
    use rand::Rng;

    let n_remote = frame.remote_prepared.len() as i64;
    let n_local = frame.local_prepared.len() as i64;
    let mut out = Vec::new();

    for k in k_range {
        let seed = crate::sim::FrameSeed::new(
            frame.seed.master,
            crate::sim::streams::correlation(frame.seed.stream, k),
        );
        let mut rng = seed.rng();
        let mut hits = 0usize;
        let mut n_sel = 0usize;
        for r in 0..n_remote {
            let l = r + k;
            if l < 0 || l >= n_local {
                continue;
            }
            let (r, l) = (r as usize, l as usize);
            if frame.remote_prepared[r] != frame.local_prepared[l] {
                continue;
            }
            let mut jitter_ns = 0.0;
            if frame.jitter_sigma_ns > 0.0 {
                for _ in 0..frame.jitter_draws {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    jitter_ns += z * frame.jitter_sigma_ns;
                }
            }
            let tau =
                frame.remote_arrival(r as u64) - frame.local_arrival(l as u64) + jitter_ns;
            let s = model::polarization_overlap(frame.remote_arriving[r], frame.local_prepared[l])
                * model::temporal_overlap(frame.sigma_spec, tau);
            let p = model::coincidence_symmetric(frame.mu_eff, s);
            n_sel += 1;
            if rng.random::<f64>() < p {
                hits += 1;
            }
        }
        let rate = if n_sel == 0 {
            0.0
        } else {
            hits as f64 / n_sel as f64
        };
        out.push(CorrelationPoint {
            k,
            rate,
            stderr: stats::binomial_stderr(rate, n_sel),
            n_trials: n_sel,
        });
    }
    out
}

/// The offset that minimizes the post-selected rate, ignoring candidates
/// without statistics. Ties resolve toward the smaller `|k|`.
pub fn recovered_offset(points: &[CorrelationPoint]) -> Option<i64> {
    points
        .iter()
        .filter(|p| p.n_trials > 0)
        .min_by(|a, b| {
            (a.rate, a.k.abs(), a.k)
                .partial_cmp(&(b.rate, b.k.abs(), b.k))
                .unwrap()
        })
        .map(|p| p.k)
}

/// Clock-offset estimate assembled from the four measured quantities.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OffsetEstimate {
    pub k: i64,
    pub k_prime: i64,
    /// Optimal local delay on Bob's side (A -> B direction), ns.
    pub dt_bb: f64,
    pub dt_bb_stderr: f64,
    /// Optimal local delay on Alice's side (B -> A direction), ns.
    pub dt_aa: f64,
    pub dt_aa_stderr: f64,
    /// Estimated clock offset, ns.
    pub delta_hat: f64,
    /// Propagated 1-sigma uncertainty, ns.
    pub delta_stderr: f64,
}

/// Combines the two fitted delays and integer offsets:
/// `delta = [(k - k') T_rep + dt_BB - dt_AA] / 2`, with the fit errors
/// propagated in quadrature.
pub fn estimate_offset(
    dt_aa: &DipFit,
    dt_bb: &DipFit,
    k: i64,
    k_prime: i64,
    t_rep: f64,
) -> OffsetEstimate {
    let delta_hat = 0.5 * ((k - k_prime) as f64 * t_rep + dt_bb.center - dt_aa.center);
    let delta_stderr = 0.5
        * (dt_bb.center_stderr * dt_bb.center_stderr
            + dt_aa.center_stderr * dt_aa.center_stderr)
            .sqrt();
    OffsetEstimate {
        k,
        k_prime,
        dt_bb: dt_bb.center,
        dt_bb_stderr: dt_bb.center_stderr,
        dt_aa: dt_aa.center,
        dt_aa_stderr: dt_aa.center_stderr,
        delta_hat,
        delta_stderr,
    }
}

/// Estimator bias `(dt_AB - dt_BA) / 2` introduced by a non-reciprocal
/// channel: summing the two direction equations without the reciprocity
/// substitution leaves exactly this term on the estimate.
pub fn asymmetry_bias(dt_ab: f64, dt_ba: f64) -> f64 {
    0.5 * (dt_ab - dt_ba)
}

//! Empirical stability verdicts from finite simulations.
//!
//! A run of length `H` records exact per-server time averages of the queue
//! lengths over the first `H/4`, `H/2` and `H` epochs, plus a strided trace
//! of the total count. Across seeds the per-seed OLS slopes of the total
//! give a Student-t band; a single seed falls back to batch slopes.
//!
//! Verdicts carry the "-consistent" suffix: a finite run cannot certify
//! positive recurrence, only fail to contradict it.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::simulate::{NetworkModel, PolicyKind, Simulation, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    StableConsistent,
    UnstableConsistent,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::StableConsistent => "stable-consistent",
            Verdict::UnstableConsistent => "unstable-consistent",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityThresholds {
    /// Allowed relative spread `(max - min) / max` of the nested averages.
    pub nested_tolerance: f64,
    /// Two-sided confidence level of the slope band.
    pub confidence: f64,
    /// Batches used for the band when only one seed is available.
    pub batches: usize,
}

impl Default for StabilityThresholds {
    fn default() -> Self {
        Self { nested_tolerance: 0.15, confidence: 0.95, batches: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub horizon: u64,
    /// Per server: time averages over the first H/4, H/2, H epochs.
    pub nested_means: Vec<[f64; 3]>,
    pub trace: Trace,
}

/// Runs one seed from the empty state.
pub fn simulate_seed(
    model: Arc<NetworkModel>,
    policy: &PolicyKind,
    horizon: u64,
    seed: u64,
    stride: u64,
) -> Result<SeedRun> {
    if horizon < 4 {
        return Err(Error::InvalidArgument("horizon must be at least 4".into()));
    }
    let servers = model.num_servers();
    let mut sim = Simulation::new(model, policy.clone(), seed);
    let mut trace = Trace::new(sim.model().num_classes(), servers, stride);
    let checkpoints = [horizon / 4, horizon / 2, horizon];
    let mut sums = vec![0u128; servers];
    let mut nested = vec![[0.0; 3]; servers];
    let mut next = 0;
    for t in 1..=horizon {
        let e = sim.step();
        trace.observe(e, sim.state());
        for (s, acc) in sums.iter_mut().enumerate() {
            *acc += sim.state().queue_len(s) as u128;
        }
        while next < 3 && t == checkpoints[next] {
            for (s, acc) in sums.iter().enumerate() {
                nested[s][next] = *acc as f64 / t as f64;
            }
            next += 1;
        }
    }
    Ok(SeedRun { seed, horizon, nested_means: nested, trace })
}

/// Seeds run in parallel; results come back in seed order.
pub fn simulate_seeds(
    model: Arc<NetworkModel>,
    policy: &PolicyKind,
    horizon: u64,
    seeds: &[u64],
    stride: u64,
) -> Result<Vec<SeedRun>> {
    seeds
        .par_iter()
        .map(|&seed| simulate_seed(model.clone(), policy, horizon, seed, stride))
        .collect()
}

/// Least squares fit `y = a + b x`; returns `(b, a, r_squared)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    if x.len() < 2 {
        return (0.0, y.first().copied().unwrap_or(0.0), 0.0);
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 0.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

fn trace_xy(trace: &Trace) -> (Vec<f64>, Vec<f64>) {
    trace
        .records
        .iter()
        .map(|r| (r.epoch as f64, r.total as f64))
        .unzip()
}

fn t_band(samples: &[f64], confidence: f64) -> (f64, f64, f64) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, mean, mean);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map(|d| d.inverse_cdf(0.5 + confidence / 2.0))
        .unwrap_or(f64::INFINITY);
    let half = t * (var / n as f64).sqrt();
    (mean, mean - half, mean + half)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub horizon: u64,
    pub seeds: Vec<u64>,
    /// Per server, seed-averaged time averages over H/4, H/2, H.
    pub nested_means: Vec<[f64; 3]>,
    /// Largest relative spread of the nested averages over servers.
    pub nested_spread: f64,
    pub nested_ok: bool,
    /// Growth rate of the total count per epoch.
    pub slope: f64,
    pub slope_lower: f64,
    pub slope_upper: f64,
    /// Fit quality of a line through the seed-averaged total trajectory.
    pub r_squared: f64,
    pub final_mean_total: f64,
    pub thresholds: StabilityThresholds,
    pub verdict: Verdict,
}

fn relative_spread(v: &[f64; 3]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if max <= 0.0 {
        0.0
    } else {
        (max - min) / max
    }
}

pub fn assess(runs: &[SeedRun], thresholds: &StabilityThresholds) -> Result<StabilityReport> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no runs to assess".into()))?;
    let servers = first.nested_means.len();
    let len = first.trace.records.len();
    if runs
        .iter()
        .any(|r| r.horizon != first.horizon || r.trace.records.len() != len || r.nested_means.len() != servers)
    {
        return Err(Error::InvalidArgument("runs differ in horizon, stride or size".into()));
    }
    let n = runs.len() as f64;

    let mut nested = vec![[0.0; 3]; servers];
    for r in runs {
        for (acc, m) in nested.iter_mut().zip(&r.nested_means) {
            for i in 0..3 {
                acc[i] += m[i] / n;
            }
        }
    }
    let nested_spread = nested.iter().map(relative_spread).fold(0.0, f64::max);
    let nested_ok = nested_spread <= thresholds.nested_tolerance;

    let slopes: Vec<f64> = if runs.len() >= 2 {
        runs.iter().map(|r| {
            let (x, y) = trace_xy(&r.trace);
            ols(&x, &y).0
        })
        .collect()
    } else {
        let (x, y) = trace_xy(&first.trace);
        let b = thresholds.batches.max(2);
        let size = x.len() / b;
        if size < 2 {
            return Err(Error::InvalidArgument(format!(
                "{} records are too few for {b} batches",
                x.len()
            )));
        }
        (0..b)
            .map(|i| ols(&x[i * size..(i + 1) * size], &y[i * size..(i + 1) * size]).0)
            .collect()
    };
    let (slope, lo, hi) = t_band(&slopes, thresholds.confidence);

    let xs: Vec<f64> = first.trace.records.iter().map(|r| r.epoch as f64).collect();
    let avg: Vec<f64> = (0..len)
        .map(|i| runs.iter().map(|r| r.trace.records[i].total as f64).sum::<f64>() / n)
        .collect();
    let (_, _, r_squared) = ols(&xs, &avg);

    let verdict = if lo > 0.0 {
        Verdict::UnstableConsistent
    } else if lo <= 0.0 && hi >= 0.0 && nested_ok {
        Verdict::StableConsistent
    } else {
        Verdict::Inconclusive
    };

    Ok(StabilityReport {
        horizon: first.horizon,
        seeds: runs.iter().map(|r| r.seed).collect(),
        nested_means: nested,
        nested_spread,
        nested_ok,
        slope,
        slope_lower: lo,
        slope_upper: hi,
        r_squared,
        final_mean_total: avg.last().copied().unwrap_or(0.0),
        thresholds: *thresholds,
        verdict,
    })
}

/// Default record stride: about 10^4 points per trace.
pub fn default_stride(horizon: u64) -> u64 {
    (horizon / 10_000).max(1)
}

pub fn stability_experiment(
    model: Arc<NetworkModel>,
    policy: &PolicyKind,
    horizon: u64,
    seeds: &[u64],
    stride: u64,
    thresholds: &StabilityThresholds,
) -> Result<(Vec<SeedRun>, StabilityReport)> {
    let runs = simulate_seeds(model, policy, horizon, seeds, stride)?;
    let report = assess(&runs, thresholds)?;
    Ok((runs, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetworkSpec;

    fn mm1(lambda: f64) -> Arc<NetworkModel> {
        let spec = NetworkSpec {
            num_servers: 1,
            num_classes: 1,
            lambda,
            assign_prob: vec![vec![1.0]],
            service_rate: vec![vec![1.0]],
            routing: vec![vec![0.0]],
        };
        Arc::new(NetworkModel::probabilistic(&spec).unwrap())
    }

    #[test]
    fn ols_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 + 2.0 * v).collect();
        let (b, a, r2) = ols(&x, &y);
        assert!((b - 2.0).abs() < 1e-12 && (a - 3.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn band_matches_t_quantile() {
        // n = 4, mean 2.5, sd = sqrt(5/3), t_{0.975,3} = 3.182446
        let (m, lo, hi) = t_band(&[1.0, 2.0, 3.0, 4.0], 0.95);
        let half = 3.182446305284263 * (5.0f64 / 3.0 / 4.0).sqrt();
        assert_eq!(m, 2.5);
        assert!((hi - m - half).abs() < 1e-9 && (m - lo - half).abs() < 1e-9);
    }

    #[test]
    fn nested_means_are_time_averages() {
        let run = simulate_seed(mm1(0.5), &PolicyKind::Fifo, 400, 3, 1).unwrap();
        let lens: Vec<f64> = run.trace.records.iter().map(|r| r.total as f64).collect();
        let avg = |n: usize| lens[..n].iter().sum::<f64>() / n as f64;
        assert!((run.nested_means[0][0] - avg(100)).abs() < 1e-12);
        assert!((run.nested_means[0][1] - avg(200)).abs() < 1e-12);
        assert!((run.nested_means[0][2] - avg(400)).abs() < 1e-12);
    }

    #[test]
    fn overloaded_queue_grows() {
        let seeds: Vec<u64> = (0..4).collect();
        let (_, rep) = stability_experiment(
            mm1(1.5),
            &PolicyKind::Fifo,
            100_000,
            &seeds,
            100,
            &StabilityThresholds::default(),
        )
        .unwrap();
        assert_eq!(rep.verdict, Verdict::UnstableConsistent);
        assert!(rep.r_squared > 0.9);
    }

    #[test]
    fn single_seed_uses_batches() {
        let runs = simulate_seeds(mm1(0.5), &PolicyKind::Fifo, 200_000, &[7], 20).unwrap();
        let rep = assess(&runs, &StabilityThresholds::default()).unwrap();
        assert!(rep.slope_lower <= rep.slope_upper);
        assert_eq!(rep.seeds, vec![7]);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(assess(&[], &StabilityThresholds::default()).is_err());
    }
}

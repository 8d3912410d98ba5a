//! Exact uniformized kernels for small single-class networks.
//!
//! With one class every work-conserving discipline moves counts the same
//! way, so the chain on count vectors is exact and policy-free. The state
//! space is truncated at a total of `cap` customers; arrivals that would
//! exceed it are folded into the self-loop (reflecting truncation).
//!
//! From a state with `t` customers the cap cannot influence the first `k`
//! steps when `t + k <= cap`; such states are called interior for horizon
//! `k` and every k-step quantity computed there equals the untruncated one.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{solve_traffic, NetworkSpec, TrafficSolution};

pub const DEFAULT_MAX_STATES: usize = 200_000;
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct TruncatedChain {
    spec: NetworkSpec,
    solution: TrafficSolution,
    cap: u32,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
    /// Sparse rows `(target, prob)`.
    rows: Vec<Vec<(usize, f64)>>,
    q: f64,
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn enumerate_states(servers: usize, cap: u32) -> Vec<Vec<u32>> {
    fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[i] = v;
            rec(i + 1, left - v, cur, out);
        }
        cur[i] = 0;
    }
    let mut out = Vec::new();
    rec(0, cap, &mut vec![0; servers], &mut out);
    // Order by total so interior states come first.
    out.sort_by_key(|s| (s.iter().sum::<u32>(), std::cmp::Reverse(s.clone())));
    out
}

/// Uses the state bound from [`max_states_limit`].
pub fn build_kernel(spec: &NetworkSpec, cap: u32) -> Result<TruncatedChain> {
    build_kernel_bounded(spec, cap, max_states_limit())
}

pub fn build_kernel_bounded(spec: &NetworkSpec, cap: u32, max_states: usize) -> Result<TruncatedChain> {
    if spec.num_classes != 1 {
        return Err(Error::NotSingleClass(spec.num_classes));
    }
    if cap == 0 {
        return Err(Error::InvalidArgument("cap must be at least 1".into()));
    }
    let solution = solve_traffic(spec)?;
    let j = spec.num_servers;
    let n_states = state_count(j, cap);
    if n_states > max_states as u128 {
        return Err(Error::StateSpaceTooLarge {
            states: n_states.min(usize::MAX as u128) as usize,
            limit: max_states,
        });
    }
    let states = enumerate_states(j, cap);
    let index: HashMap<Vec<u32>, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let q = spec.uniformization_rate();

    let mut rows = Vec::with_capacity(states.len());
    for (i, x) in states.iter().enumerate() {
        let total: u32 = x.iter().sum();
        let mut row: Vec<(usize, f64)> = Vec::new();
        let add = |target: usize, p: f64, row: &mut Vec<(usize, f64)>| {
            if p <= 0.0 {
                return;
            }
            match row.iter_mut().find(|(t, _)| *t == target) {
                Some(e) => e.1 += p,
                None => row.push((target, p)),
            }
        };
        let mut used = 0.0;
        if total < cap {
            for k in 0..j {
                let p = spec.exogenous_rate(0, k) / q;
                if p > 0.0 {
                    let mut y = x.clone();
                    y[k] += 1;
                    add(index[&y], p, &mut row);
                    used += p;
                }
            }
        }
        for m in 0..j {
            if x[m] == 0 {
                continue;
            }
            let rate = spec.service_rate[0][m] / q;
            for n in 0..j {
                let p = rate * spec.routing[m][n];
                if p > 0.0 && n != m {
                    let mut y = x.clone();
                    y[m] -= 1;
                    y[n] += 1;
                    add(index[&y], p, &mut row);
                    used += p;
                }
            }
            let p = rate * spec.exit_prob(m);
            if p > 0.0 {
                let mut y = x.clone();
                y[m] -= 1;
                add(index[&y], p, &mut row);
                used += p;
            }
        }
        add(i, 1.0 - used, &mut row);
        row.sort_by_key(|e| e.0);
        rows.push(row);
    }

    let chain = TruncatedChain { spec: spec.clone(), solution, cap, states, index, rows, q };
    let worst = chain.max_row_sum_error();
    if worst > ROW_SUM_TOL {
        return Err(Error::InvalidArgument(format!("kernel rows off by {worst:e}")));
    }
    Ok(chain)
}

impl TruncatedChain {
    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn solution(&self) -> &TrafficSolution {
        &self.solution
    }

    pub fn uniformization_rate(&self) -> f64 {
        self.q
    }

    pub fn index_of(&self, x: &[u32]) -> Option<usize> {
        self.index.get(x).copied()
    }

    pub fn zero_index(&self) -> usize {
        self.index[&vec![0; self.spec.num_servers]]
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().map(|e| e.1).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Dense transition matrix; only sensible for small chains.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.num_states();
        self.rows
            .iter()
            .map(|r| {
                let mut d = vec![0.0; n];
                for &(t, p) in r {
                    d[t] += p;
                }
                d
            })
            .collect()
    }

    pub fn is_interior(&self, state: usize, k: u64) -> bool {
        self.states[state].iter().sum::<u32>() as u64 + k <= self.cap as u64
    }

    /// `P v`: one step of conditional expectation.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(t, p)| p * v[t]).sum())
            .collect()
    }

    /// `pi P`: one step of a distribution.
    pub fn push_forward(&self, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; dist.len()];
        for (i, r) in self.rows.iter().enumerate() {
            let d = dist[i];
            if d == 0.0 {
                continue;
            }
            for &(t, p) in r {
                out[t] += d * p;
            }
        }
        out
    }

    fn empty_indicator(&self, j: usize) -> Vec<f64> {
        self.states.iter().map(|s| if s[j] == 0 { 1.0 } else { 0.0 }).collect()
    }

    fn lookup(&self, x: &[u32]) -> Result<usize> {
        self.index_of(x).ok_or_else(|| {
            Error::InvalidArgument(format!("state {x:?} not in chain with cap {}", self.cap))
        })
    }
}

/// Probability that server `j` is empty after `n` steps from `x`.
pub fn n_step_empty_prob(chain: &TruncatedChain, x: &[u32], j: usize, n: u64) -> Result<f64> {
    let start = chain.lookup(x)?;
    let mut dist = vec![0.0; chain.num_states()];
    dist[start] = 1.0;
    for _ in 0..n {
        dist = chain.push_forward(&dist);
    }
    Ok(chain
        .states
        .iter()
        .zip(&dist)
        .filter(|(s, _)| s[j] == 0)
        .map(|(_, p)| p)
        .sum())
}

/// `p^n_{0,empty_j} - p^n_{x,empty_j}`.
pub fn lemma_slack(chain: &TruncatedChain, x: &[u32], j: usize, n: u64) -> Result<f64> {
    let zero = vec![0; chain.spec.num_servers];
    Ok(n_step_empty_prob(chain, &zero, j, n)? - n_step_empty_prob(chain, x, j, n)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub server: usize,
    /// Starting states are those of the chain passed in (total <= cap).
    pub cap: u32,
    pub n_max: u64,
    /// Cap of the chain the probabilities were evaluated on.
    pub evaluation_cap: u32,
    /// `evaluation_cap >= cap + n_max`: no tested path can reach the cap.
    pub exact: bool,
    /// `min over x, 1 <= n <= n_max of p^n_{0,empty} - p^n_{x,empty}`.
    pub min_slack: f64,
    pub tightest_state: Vec<u32>,
    pub tightest_n: u64,
    pub passed: bool,
    /// Largest change of any tested probability when the evaluation cap
    /// grows by 5.
    pub truncation_discrepancy: f64,
    /// Minimum slack computed on the cap-`cap` chain itself, boundary
    /// included.
    pub raw_min_slack: f64,
    /// Largest gap between the cap-`cap` chain and the evaluation chain.
    pub raw_discrepancy: f64,
}

pub const LEMMA_TOL: f64 = 1e-12;

/// State bound from `QNET_MAX_STATES`, else [`DEFAULT_MAX_STATES`].
pub fn max_states_limit() -> usize {
    std::env::var("QNET_MAX_STATES")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_STATES)
}

pub fn state_count(servers: usize, cap: u32) -> u128 {
    binomial(cap as u64 + servers as u64, servers as u64)
}

/// Checks `p^n_{x,empty_j} <= p^n_{0,empty_j}` for every state of `chain`
/// and every `1 <= n <= n_max`.
///
/// A chain truncated at total `cap` blocks arrivals at the boundary, and a
/// blocked arrival can leave a queue empty that would otherwise have filled,
/// so boundary states of the truncated chain need not obey the ordering.
/// The probabilities are therefore evaluated on a chain with cap
/// `cap + n_max` (or as large as the state bound allows), which no path
/// from a tested state reaches within `n_max` steps. The truncated chain's
/// own values are reported alongside.
pub fn verify_lemma(chain: &TruncatedChain, j: usize, n_max: u64) -> Result<LemmaReport> {
    verify_lemma_bounded(chain, j, n_max, max_states_limit())
}

pub fn verify_lemma_bounded(chain: &TruncatedChain, j: usize, n_max: u64, max_states: usize) -> Result<LemmaReport> {
    let servers = chain.spec.num_servers;
    if j >= servers {
        return Err(Error::InvalidArgument(format!("server {j} out of range")));
    }
    let wanted = chain.cap as u64 + n_max;
    let mut eval_cap = chain.cap;
    while (eval_cap as u64) < wanted && state_count(servers, eval_cap + 1) <= max_states as u128 {
        eval_cap += 1;
    }
    let eval = build_kernel_bounded(&chain.spec, eval_cap, usize::MAX)?;
    let wide = build_kernel_bounded(&chain.spec, eval_cap + 5, usize::MAX)?;
    let to_eval: Vec<usize> = chain.states.iter().map(|s| eval.index[s]).collect();
    let to_wide: Vec<usize> = chain.states.iter().map(|s| wide.index[s]).collect();
    let zero = chain.zero_index();

    let mut h_raw = chain.empty_indicator(j);
    let mut h_eval = eval.empty_indicator(j);
    let mut h_wide = wide.empty_indicator(j);
    let mut min_slack = f64::INFINITY;
    let mut raw_min = f64::INFINITY;
    let mut tightest = (zero, 1);
    let (mut disc, mut raw_disc): (f64, f64) = (0.0, 0.0);
    for n in 1..=n_max {
        h_raw = chain.apply(&h_raw);
        h_eval = eval.apply(&h_eval);
        h_wide = wide.apply(&h_wide);
        let p0 = h_eval[to_eval[zero]];
        let p0_raw = h_raw[zero];
        for i in 0..chain.num_states() {
            let p = h_eval[to_eval[i]];
            disc = disc.max((p - h_wide[to_wide[i]]).abs());
            raw_disc = raw_disc.max((p - h_raw[i]).abs());
            if i == zero {
                continue;
            }
            if p0 - p < min_slack {
                min_slack = p0 - p;
                tightest = (i, n);
            }
            raw_min = raw_min.min(p0_raw - h_raw[i]);
        }
    }
    let finite = |v: f64| if v.is_finite() { v } else { 0.0 };

    Ok(LemmaReport {
        server: j,
        cap: chain.cap,
        n_max,
        evaluation_cap: eval_cap,
        exact: eval_cap as u64 >= wanted,
        min_slack: finite(min_slack),
        tightest_state: chain.states[tightest.0].clone(),
        tightest_n: tightest.1,
        passed: finite(min_slack) >= -LEMMA_TOL,
        truncation_discrepancy: disc,
        raw_min_slack: finite(raw_min),
        raw_discrepancy: raw_disc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KDrift {
    /// `(E_x V_j(X^k) - V_j(x)) / k` from kernel powers.
    pub direct: f64,
    /// `(sum_a Lambda_j - mu_j (1/k) sum_{l<k} p^l_{x,busy_j}) / Q`.
    pub identity: f64,
    /// Whether the cap is out of reach within `k` steps.
    pub interior: bool,
}

pub const K_DRIFT_TOL: f64 = 1e-10;

impl KDrift {
    pub fn agree(&self) -> bool {
        (self.direct - self.identity).abs() <= K_DRIFT_TOL
    }
}

/// `Delta^k V_j(x) / k` for every state of the chain, computed two ways.
pub fn exact_k_drift_all(chain: &TruncatedChain, gamma: &[Vec<f64>], j: usize, k: u64) -> Result<Vec<KDrift>> {
    let jn = chain.spec.num_servers;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if gamma.len() != jn || gamma.iter().any(|r| r.len() != jn) || j >= jn {
        return Err(Error::DimensionMismatch {
            expected: format!("{jn}x{jn} visit counts, server < {jn}"),
            got: format!("{} rows, server {j}", gamma.len()),
        });
    }
    let v: Vec<f64> = chain
        .states
        .iter()
        .map(|s| s.iter().enumerate().map(|(m, &n)| n as f64 * gamma[m][j]).sum())
        .collect();
    let busy: Vec<f64> = chain.states.iter().map(|s| if s[j] > 0 { 1.0 } else { 0.0 }).collect();

    let mut ev = v.clone();
    let mut pb = busy.clone();
    let mut busy_sum = busy.clone();
    for step in 0..k {
        ev = chain.apply(&ev);
        if step + 1 < k {
            pb = chain.apply(&pb);
            for (acc, p) in busy_sum.iter_mut().zip(&pb) {
                *acc += p;
            }
        }
    }
    let lam = chain.solution.total_arrival_rate(j);
    let mu = chain.spec.service_rate[0][j];
    let kf = k as f64;
    Ok((0..chain.num_states())
        .map(|i| KDrift {
            direct: (ev[i] - v[i]) / kf,
            identity: (lam - mu * busy_sum[i] / kf) / chain.q,
            interior: chain.is_interior(i, k),
        })
        .collect())
}

pub fn exact_k_drift(chain: &TruncatedChain, gamma: &[Vec<f64>], x: &[u32], j: usize, k: u64) -> Result<KDrift> {
    let i = chain.lookup(x)?;
    Ok(exact_k_drift_all(chain, gamma, j, k)?[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UubCheck {
    pub server: usize,
    pub k: u64,
    pub interior_states: usize,
    /// Largest `|direct - identity|` over interior states.
    pub max_path_gap: f64,
    /// Largest `drift_avg(x) - drift_avg(0)` over interior states (0 when
    /// there are none).
    pub max_excess_over_zero: f64,
    /// Pairs `x <= x + e_i` (both interior) where the larger state has the
    /// larger drift average; observed, not required.
    pub ordering_violations: usize,
    pub ordering_pairs: usize,
}

impl UubCheck {
    pub fn passed(&self) -> bool {
        self.max_path_gap <= K_DRIFT_TOL && self.max_excess_over_zero <= K_DRIFT_TOL
    }
}

pub fn uub_check(chain: &TruncatedChain, j: usize, k: u64) -> Result<UubCheck> {
    let gamma = chain.solution.visit_counts.clone();
    let all = exact_k_drift_all(chain, &gamma, j, k)?;
    let zero = all[chain.zero_index()];
    let mut gap: f64 = 0.0;
    let mut excess = f64::NEG_INFINITY;
    let mut interior = 0;
    let (mut pairs, mut viol) = (0, 0);
    for (i, d) in all.iter().enumerate() {
        if !d.interior {
            continue;
        }
        interior += 1;
        gap = gap.max((d.direct - d.identity).abs());
        excess = excess.max(d.direct - zero.direct);
        for m in 0..chain.spec.num_servers {
            let mut y = chain.states[i].clone();
            y[m] += 1;
            if let Some(yi) = chain.index_of(&y) {
                if all[yi].interior {
                    pairs += 1;
                    if all[yi].direct > d.direct + K_DRIFT_TOL {
                        viol += 1;
                    }
                }
            }
        }
    }
    Ok(UubCheck {
        server: j,
        k,
        interior_states: interior,
        max_path_gap: gap,
        max_excess_over_zero: if interior > 0 { excess } else { 0.0 },
        ordering_violations: viol,
        ordering_pairs: pairs,
    })
}

/// Stationary distribution by power iteration from the empty state.
pub fn stationary_by_power_iteration(chain: &TruncatedChain, tol: f64, max_iter: usize) -> Vec<f64> {
    let mut dist = vec![0.0; chain.num_states()];
    dist[chain.zero_index()] = 1.0;
    for _ in 0..max_iter {
        let next = chain.push_forward(&dist);
        let delta = next.iter().zip(&dist).map(|(a, b)| (a - b).abs()).sum::<f64>();
        dist = next;
        if delta < tol {
            break;
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm1() -> NetworkSpec {
        NetworkSpec {
            num_servers: 1,
            num_classes: 1,
            lambda: 1.0,
            assign_prob: vec![vec![1.0]],
            service_rate: vec![vec![2.0]],
            routing: vec![vec![0.0]],
        }
    }

    fn tandem() -> NetworkSpec {
        NetworkSpec {
            num_servers: 2,
            num_classes: 1,
            lambda: 1.0,
            assign_prob: vec![vec![1.0, 0.0]],
            service_rate: vec![vec![3.0, 3.0]],
            routing: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
        }
    }

    #[test]
    fn mm1_cap2_matrix() {
        let c = build_kernel(&mm1(), 2).unwrap();
        let want = vec![
            vec![2.0 / 3.0, 1.0 / 3.0, 0.0],
            vec![2.0 / 3.0, 0.0, 1.0 / 3.0],
            vec![0.0, 2.0 / 3.0, 1.0 / 3.0],
        ];
        assert!(crate::linalg::max_abs_diff(&c.dense(), &want) < 1e-15);
    }

    #[test]
    fn no_arrivals_only_drain() {
        let c = build_kernel(&mm1().with_lambda(0.0), 3).unwrap();
        let d = c.dense();
        assert_eq!(d[0][0], 1.0);
        for i in 1..4 {
            assert_eq!(d[i][i - 1], 1.0);
        }
    }

    #[test]
    fn tandem_cap1_hand_enumeration() {
        let c = build_kernel(&tandem(), 1).unwrap();
        assert_eq!(c.num_states(), 3);
        let (z, a, b) = (
            c.index_of(&[0, 0]).unwrap(),
            c.index_of(&[1, 0]).unwrap(),
            c.index_of(&[0, 1]).unwrap(),
        );
        let d = c.dense();
        // Q = 1 + 2*3 = 7
        assert!((d[z][a] - 1.0 / 7.0).abs() < 1e-15);
        assert!((d[z][z] - 6.0 / 7.0).abs() < 1e-15);
        assert!((d[a][b] - 3.0 / 7.0).abs() < 1e-15);
        assert!((d[a][a] - 4.0 / 7.0).abs() < 1e-15);
        assert!((d[b][z] - 3.0 / 7.0).abs() < 1e-15);
        assert!((d[b][b] - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn mm1_empty_probabilities() {
        let c = build_kernel(&mm1(), 10).unwrap();
        assert_eq!(n_step_empty_prob(&c, &[0], 0, 0).unwrap(), 1.0);
        assert!((n_step_empty_prob(&c, &[0], 0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((n_step_empty_prob(&c, &[1], 0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((n_step_empty_prob(&c, &[0], 0, 2).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((n_step_empty_prob(&c, &[1], 0, 2).unwrap() - 4.0 / 9.0).abs() < 1e-12);
        assert_eq!(lemma_slack(&c, &[1], 0, 0).unwrap(), 1.0);
    }

    #[test]
    fn lemma_holds_for_mm1_and_tandem() {
        let c = build_kernel(&mm1(), 10).unwrap();
        assert!(verify_lemma(&c, 0, 50).unwrap().passed);
        let t = build_kernel(&tandem(), 6).unwrap();
        for j in 0..2 {
            let r = verify_lemma(&t, j, 50).unwrap();
            assert!(r.passed && r.exact, "{r:?}");
            assert_eq!(r.truncation_discrepancy, 0.0);
        }
        // From (0, cap) the blocked arrival keeps server 0 empty w.p. 1.
        let r = verify_lemma(&t, 0, 1).unwrap();
        assert!((r.raw_min_slack + 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn k1_drift_matches_brute_force() {
        let s = tandem();
        let c = build_kernel(&s, 8).unwrap();
        let gamma = c.solution().visit_counts.clone();
        for x in [[0u32, 0], [1, 0], [0, 2], [3, 1]] {
            for j in 0..2 {
                let d = exact_k_drift(&c, &gamma, &x, j, 1).unwrap();
                let cv = crate::lyapunov::CountVector::single(&x);
                let bf = crate::lyapunov::brute_force_drift(&s, c.solution(), &cv, j).unwrap();
                assert!((d.direct - bf).abs() < 1e-12);
                assert!(d.agree());
            }
        }
    }

    #[test]
    fn rejects_multiclass_and_huge() {
        let mut s = mm1();
        s.num_classes = 2;
        s.assign_prob = vec![vec![0.5], vec![0.5]];
        s.service_rate = vec![vec![2.0], vec![2.0]];
        assert!(matches!(build_kernel(&s, 3), Err(Error::NotSingleClass(2))));
        assert!(matches!(
            build_kernel_bounded(&tandem(), 1000, 1000),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn mm1_stationary_mean() {
        let c = build_kernel(&mm1(), 60).unwrap();
        let pi = stationary_by_power_iteration(&c, 1e-14, 100_000);
        let mean: f64 = c.states().iter().zip(&pi).map(|(s, p)| s[0] as f64 * p).sum();
        assert!((mean - 1.0).abs() < 1e-6);
    }
}

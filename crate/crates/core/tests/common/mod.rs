#![allow(dead_code)]

use qnet::model::NetworkSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn simplex(rng: &mut impl Rng, n: usize, zero_prob: f64) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < zero_prob { 0.0 } else { rng.random::<f64>() })
            .collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            return w.iter().map(|v| v / s).collect();
        }
    }
}

/// Substochastic routing with row sums at most `max_row`, some rows zero.
pub fn random_routing(rng: &mut impl Rng, j: usize, max_row: f64) -> Vec<Vec<f64>> {
    (0..j)
        .map(|_| {
            let mass = rng.random::<f64>() * max_row;
            simplex(rng, j, 0.3).into_iter().map(|p| p * mass).collect()
        })
        .collect()
}

/// Random open network with `J <= max_j` servers and `A <= max_a` classes.
pub fn random_spec(rng: &mut impl Rng, max_j: usize, max_a: usize, single_rate: bool) -> NetworkSpec {
    let j = rng.random_range(1..=max_j);
    let a = rng.random_range(1..=max_a);
    let flat = simplex(rng, a * j, 0.3);
    let assign_prob: Vec<Vec<f64>> = flat.chunks(j).map(<[f64]>::to_vec).collect();
    let common = 0.5 + 4.0 * rng.random::<f64>();
    let service_rate = (0..a)
        .map(|_| {
            (0..j)
                .map(|_| if single_rate { common } else { 0.5 + 4.0 * rng.random::<f64>() })
                .collect()
        })
        .collect();
    NetworkSpec {
        num_servers: j,
        num_classes: a,
        lambda: 0.1 + 2.0 * rng.random::<f64>(),
        assign_prob,
        service_rate,
        routing: random_routing(rng, j, 0.9),
    }
}

/// Two classes on two servers with four distinct service rates.
pub fn multirate_2x2() -> NetworkSpec {
    NetworkSpec {
        num_servers: 2,
        num_classes: 2,
        lambda: 1.0,
        assign_prob: vec![vec![0.4, 0.1], vec![0.2, 0.3]],
        service_rate: vec![vec![3.0, 2.0], vec![1.5, 4.0]],
        routing: vec![vec![0.0, 0.5], vec![0.3, 0.0]],
    }
}

pub fn max_abs(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

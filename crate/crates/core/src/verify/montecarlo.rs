//! Monte-Carlo estimate of the expected first-passage time of a zigzag
//! strategy, reproducible for a fixed seed regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::DensityModel;
use crate::numerics::pairwise_sum;
use crate::solver::TurningSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// `1.96 * std_error`.
    pub half_width_95: f64,
    /// Accepted samples.
    pub n_samples: usize,
    /// Targets beyond the last turning point on their side.
    pub n_rejected: usize,
    pub rejection_rate: f64,
    pub seed: u64,
}

/// Legs on one side: chart coordinates of the turning points reached on
/// that side and the distance travelled before each such leg starts.
struct SideLegs {
    reach: Vec<f64>,
    offset: Vec<f64>,
}

impl SideLegs {
    fn time_to(&self, u_target: f64, y: f64) -> Option<f64> {
        let i = self.reach.partition_point(|&u| u < u_target);
        (i < self.reach.len()).then(|| self.offset[i] + y)
    }
}

fn legs(seq: &TurningSequence) -> (SideLegs, SideLegs) {
    let mut coords = seq.coords().to_vec();
    if seq.terminated() {
        // the boundary was reached on one side; the next leg sweeps the other
        coords.push(f64::INFINITY);
    }
    let x: Vec<f64> = (0..coords.len())
        .map(|k| if k < seq.len() { seq.point(k) } else { 1.0 })
        .collect();
    let mut plus = SideLegs {
        reach: vec![],
        offset: vec![],
    };
    let mut minus = SideLegs {
        reach: vec![],
        offset: vec![],
    };
    let mut travelled = 0.0;
    for k in 1..coords.len() {
        // leg k starts after 2 * sum_{j<k} x_j
        let side = if k % 2 == 1 { &mut plus } else { &mut minus };
        side.reach.push(coords[k]);
        side.offset.push(2.0 * travelled);
        travelled += x[k];
    }
    (plus, minus)
}

/// Expected search time `E[T]`, where `T = 2 sum_{j<k} x_j + |target|` and
/// `k` is the first leg reaching the target on its side.
pub fn expected_search_time_mc(
    model: &DensityModel,
    seq: &TurningSequence,
    n_samples: usize,
    seed: u64,
) -> MonteCarloEstimate {
    simulate(model, seq, n_samples, seed)
}

/// Same estimate computed on a dedicated pool of `threads` workers.
pub fn expected_search_time_mc_with_threads(
    model: &DensityModel,
    seq: &TurningSequence,
    n_samples: usize,
    seed: u64,
    threads: usize,
) -> MonteCarloEstimate {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| simulate(model, seq, n_samples, seed))
}

fn simulate(
    model: &DensityModel,
    seq: &TurningSequence,
    n_samples: usize,
    seed: u64,
) -> MonteCarloEstimate {
    let (plus, minus) = legs(seq);
    let times: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            // E ~ Exp(1) gives the target through H(|target|) = E
            let uniform: f64 = 1.0 - rng.random::<f64>();
            let e = -uniform.ln();
            let u = model.inv_cum_hazard(e);
            let y = model.x_of(u);
            let side = if rng.random::<bool>() { &plus } else { &minus };
            side.time_to(u, y).unwrap_or(f64::NAN)
        })
        .collect();
    let accepted: Vec<f64> = times.iter().copied().filter(|t| !t.is_nan()).collect();
    let n = accepted.len();
    let n_rejected = n_samples - n;
    let mean = if n > 0 {
        pairwise_sum(&accepted) / n as f64
    } else {
        f64::NAN
    };
    let sq: Vec<f64> = accepted.iter().map(|t| (t - mean) * (t - mean)).collect();
    let var = if n > 1 {
        pairwise_sum(&sq) / (n - 1) as f64
    } else {
        f64::NAN
    };
    let std_error = (var / n as f64).sqrt();
    MonteCarloEstimate {
        mean,
        std_error,
        half_width_95: 1.96 * std_error,
        n_samples: n,
        n_rejected,
        rejection_rate: if n_samples > 0 {
            n_rejected as f64 / n_samples as f64
        } else {
            0.0
        },
        seed,
    }
}

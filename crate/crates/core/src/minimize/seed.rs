use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{recenter, Configuration, DiscretePath, SystemParams};

/// Relative size of the symmetry-breaking perturbation.
pub const SEED_PERTURBATION: f64 = 1e-3;
const MODES: usize = 3;

/// Body-wise linear interpolation between two configurations.
pub fn straight_line(q_i: &Configuration, q_f: &Configuration, times: &[f64]) -> DiscretePath {
    let n = q_i.len();
    let (t1, t2) = (times[0], times[times.len() - 1]);
    let mut positions = Vec::with_capacity(times.len() * n);
    for (k, &t) in times.iter().enumerate() {
        if k == 0 {
            positions.extend_from_slice(q_i.positions());
        } else if k == times.len() - 1 {
            positions.extend_from_slice(q_f.positions());
        } else {
            let s = (t - t1) / (t2 - t1);
            positions.extend(
                q_i.positions()
                    .iter()
                    .zip(q_f.positions())
                    .map(|(a, b)| a + s * (b - a)),
            );
        }
    }
    DiscretePath::from_raw(times.to_vec(), n, positions)
}

/// Scale of the perturbation: the largest body displacement, or the
/// configuration's extent when nothing moves.
pub(crate) fn perturbation_scale(q_i: &Configuration, q_f: &Configuration) -> f64 {
    let disp = q_i
        .positions()
        .iter()
        .zip(q_f.positions())
        .fold(0.0f64, |a, (x, y)| a.max((y - x).abs()));
    if disp > 0.0 {
        return disp;
    }
    let extent = q_i.positions().iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if extent > 0.0 {
        extent
    } else {
        1.0
    }
}

/// Straight-line path plus a smooth, seed-determined interior perturbation of
/// relative size [`SEED_PERTURBATION`], vanishing at both endpoints.
pub fn straight_line_seed(
    params: &SystemParams,
    q_i: &Configuration,
    q_f: &Configuration,
    times: &[f64],
    seed: u64,
) -> DiscretePath {
    let n = params.n_bodies();
    let mut path = straight_line(q_i, q_f, times);
    let amplitude = SEED_PERTURBATION * perturbation_scale(q_i, q_f);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<f64> = (0..n * MODES)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let norm: f64 = (1..=MODES).map(|k| 1.0 / k as f64).sum();
    let (t1, t2) = (times[0], times[times.len() - 1]);
    let m = times.len() - 1;
    let positions = path.positions_mut();
    for i in 1..m {
        let s = (times[i] - t1) / (t2 - t1);
        let node = &mut positions[i * n..(i + 1) * n];
        for (j, q) in node.iter_mut().enumerate() {
            let bump: f64 = (1..=MODES)
                .map(|k| {
                    coeffs[j * MODES + k - 1] * (k as f64 * std::f64::consts::PI * s).sin()
                        / k as f64
                })
                .sum();
            *q += amplitude * bump / norm;
        }
        recenter(params, node);
    }
    path
}

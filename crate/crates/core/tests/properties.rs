use proptest::prelude::*;

use bolza::harness::{sweep, validate_input, ExperimentSpec};
use bolza::io::{path_from_json, path_to_json};
use bolza::model::{action, gap_action, uniform_times, DiscretePath, GapPath, SystemParams};
use bolza::surgery::{normalize_order, plateau_deform, relabel};

fn masses(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.5f64..2.0, n)
}

/// Gap coefficients `(a, b, w, phi)` of `a + b sin(w t + phi)`, `|b| < a / 2`.
fn gap_coefs(n_gaps: usize) -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
    prop::collection::vec(
        (0.3f64..1.5, -0.45f64..0.45, 0.5f64..6.0, 0.0f64..6.3)
            .prop_map(|(a, b, w, p)| (a, b * a, w, p)),
        n_gaps,
    )
}

fn gap_path(coefs: &[(f64, f64, f64, f64)], m: usize, t_end: f64) -> GapPath {
    let times = uniform_times(0.0, t_end, m);
    let gaps = times
        .iter()
        .flat_map(|&t| {
            coefs
                .iter()
                .map(move |&(a, b, w, p)| a + b * (w * t + p).sin())
        })
        .collect();
    GapPath::new(times, coefs.len(), gaps).unwrap()
}

/// Equal-mass path whose bodies move on straight lines between random
/// endpoints, so pairs cross at generic times.
fn crossing_path(n: usize, m: usize, ends: &[(f64, f64)]) -> (SystemParams, DiscretePath) {
    let p = SystemParams::equal_masses(n).unwrap();
    let path = DiscretePath::sample(&p, uniform_times(0.0, 1.0, m), |t| {
        let q: Vec<f64> = ends.iter().map(|(a, b)| a + (b - a) * t).collect();
        let c = q.iter().sum::<f64>() / n as f64;
        q.iter().map(|x| x - c).collect()
    })
    .unwrap();
    (p, path)
}

fn ordered_problem(
    masses: Vec<f64>,
    coefs: &[(f64, f64, f64, f64)],
    m: usize,
) -> (SystemParams, DiscretePath) {
    let p = SystemParams::new(masses).unwrap();
    let path = gap_path(coefs, m, 1.0).to_path(&p).unwrap();
    (p, path)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gap_round_trip(n in 2usize..6, m in 8usize..64, seed in any::<u64>()) {
        let coefs: Vec<_> = (0..n - 1)
            .map(|k| {
                let s = (seed.rotate_left(7 * k as u32) % 1000) as f64 / 1000.0;
                (0.3 + s, 0.1 * s, 1.0 + 3.0 * s, s)
            })
            .collect();
        let ms: Vec<f64> = (0..n).map(|j| 0.5 + ((seed >> (j * 5)) % 16) as f64 / 10.0).collect();
        let (p, path) = ordered_problem(ms, &coefs, m);
        let g = GapPath::from_path(&path);
        let back = g.to_path(&p).unwrap();
        for (a, b) in back.positions().iter().zip(path.positions()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn action_matches_gap_action(ms in masses(4), coefs in gap_coefs(3), m in 8usize..64, alpha in 0.2f64..1.9) {
        let p = SystemParams::new(ms).unwrap().with_alpha(alpha).unwrap();
        let path = gap_path(&coefs, m, 1.3).to_path(&p).unwrap();
        let a = action(&p, &path, 0.0).unwrap();
        let f = gap_action(&p, &GapPath::from_path(&path), 0.0).unwrap();
        prop_assert!((a - f).abs() <= 1e-10 * (1.0 + a));
    }

    #[test]
    fn equal_mass_relabeling_is_exact(
        coefs in gap_coefs(3),
        tau in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let (p, path) = ordered_problem(vec![1.0; 4], &coefs, 40);
        let moved = relabel(&p, &path, &tau).unwrap();
        prop_assert!(!moved.mass_warning);
        prop_assert_eq!(action(&p, &path, 0.0).unwrap(), action(&p, &moved.path, 0.0).unwrap());
        let mut inverse = vec![0; 4];
        for (j, &t) in tau.iter().enumerate() {
            inverse[t] = j;
        }
        let back = relabel(&p, &moved.path, &inverse).unwrap().path;
        prop_assert_eq!(back, path);
    }

    #[test]
    fn time_reversal_keeps_action(ms in masses(3), coefs in gap_coefs(2), m in 8usize..64) {
        let (p, path) = ordered_problem(ms, &coefs, m);
        let t = path.times();
        let times: Vec<f64> = t.iter().rev().map(|s| t[0] + t[m] - s).collect();
        let mut nodes: Vec<Vec<f64>> = path.nodes().map(<[f64]>::to_vec).collect();
        nodes.reverse();
        let reversed = DiscretePath::from_nodes(&p, times, &nodes).unwrap();
        let (a, b) = (action(&p, &path, 0.0).unwrap(), action(&p, &reversed, 0.0).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn normalize_preserves_action(
        ends in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3),
        m in 16usize..80,
    ) {
        let (p, path) = crossing_path(3, m, &ends);
        let norm = normalize_order(&p, &path).unwrap();
        let order = norm.reference.as_slice();
        for q in norm.path.nodes() {
            prop_assert!(order.windows(2).all(|w| q[w[0]] <= q[w[1]]));
        }
        let before = action(&p, &norm.source, 1e-3).unwrap();
        let after = action(&p, &norm.path, 1e-3).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn json_round_trip_is_exact(ms in masses(3), coefs in gap_coefs(2), m in 3usize..40) {
        let (p, path) = ordered_problem(ms, &coefs, m);
        let (p2, back) = path_from_json(&path_to_json(&p, &path).unwrap()).unwrap();
        prop_assert_eq!(p2.masses(), p.masses());
        prop_assert_eq!(back, path);
    }

    #[test]
    fn plateau_is_local(
        ms in masses(3),
        a in 0.5f64..2.0,
        t0 in 0.3f64..0.7,
        delta in 0.02f64..0.1,
        other in 0.5f64..1.5,
    ) {
        let p = SystemParams::new(ms).unwrap();
        let times = uniform_times(0.0, 1.0, 300);
        let gaps = times
            .iter()
            .flat_map(|&t| [a * (t - t0).abs().powf(2.0 / 3.0), other + 0.1 * (3.0 * t).sin()])
            .collect();
        let g = GapPath::new(times, 2, gaps).unwrap();
        let out = plateau_deform(&p, &g, 0, t0, delta).unwrap();
        let [lo, hi] = out.detail.window;
        for (i, &t) in out.gaps.times().iter().enumerate() {
            let x = out.gaps.node(i);
            if t < lo || t > hi {
                if let Some(j) = g.times().iter().position(|&s| s == t) {
                    prop_assert_eq!(x, g.node(j));
                }
            } else {
                prop_assert!((x[0] - delta).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn sweep_is_deterministic_across_parallelism() {
    let specs: Vec<ExperimentSpec> = [
        r#"{"problem": {"masses": [1, 1], "q_i": [-1, 1], "q_f": [1, -1], "T1": 0, "T2": 1}, "minimize": {"grid_size": 32}}"#,
        r#"{"problem": {"masses": [1, 1, 1], "q_i": [-1, -0.1, 1.1], "q_f": [-0.9, 0.2, 0.7], "T1": 0, "T2": 1}, "minimize": {"grid_size": 32}}"#,
        r#"{"problem": {"masses": [1, 1, 1], "q_i": [-1, -0.1, 1.1], "q_f": [0.2, -0.9, 0.7], "T1": 0, "T2": 1}, "minimize": {"grid_size": 32}, "seed": 3}"#,
    ]
    .iter()
    .map(|s| validate_input(s).unwrap())
    .collect();
    let serial = sweep(&specs, 1).unwrap();
    let parallel = sweep(&specs, 8).unwrap();
    for (a, b) in serial.iter().zip(&parallel) {
        assert_eq!(a.path, b.path);
        assert_eq!(
            serde_json::to_string(a).unwrap(),
            serde_json::to_string(b).unwrap()
        );
    }
}

//! Independent brute-force verifiers for the closed forms the training
//! objectives rely on: optimal values, expectile value iteration over the
//! empirical transition multiset, the KL-constrained optimal posterior, and
//! the exponentially tilted subgoal distribution identity.

use rand::Rng;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::env::GridWorld;
use crate::error::{Error, Result};
use crate::value::expectile_weight;

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub pass: bool,
    pub tolerance: f64,
}

impl OracleReport {
    fn from_abs(name: &str, max_abs_error: f64, max_rel_error: f64, tolerance: f64) -> Self {
        OracleReport {
            name: name.to_string(),
            max_abs_error,
            max_rel_error,
            pass: max_abs_error <= tolerance,
            tolerance,
        }
    }

    fn from_rel(name: &str, max_abs_error: f64, max_rel_error: f64, tolerance: f64) -> Self {
        OracleReport {
            name: name.to_string(),
            max_abs_error,
            max_rel_error,
            pass: max_rel_error <= tolerance,
            tolerance,
        }
    }
}

/// Optimal value table computed with an `n x n` layout over compact free-cell
/// indices. `unreachable[si * n + gi]` marks pairs with no path; those entries
/// hold the infinite-horizon penalty -1 / (1 - gamma).
#[derive(Debug, Clone)]
pub struct OptimalValue {
    pub n: usize,
    pub v: Vec<f64>,
    pub unreachable: Vec<bool>,
}

impl OptimalValue {
    pub fn get(&self, si: usize, gi: usize) -> f64 {
        self.v[si * self.n + gi]
    }
}

/// Closed form V*(s, g) = -(1 - gamma^d) / (1 - gamma) from BFS distances.
pub fn optimal_value(env: &GridWorld, gamma: f64) -> Result<OptimalValue> {
    let n = env.num_free();
    let mut v = vec![0.0; n * n];
    let mut unreachable = vec![false; n * n];
    let floor = -1.0 / (1.0 - gamma);
    for (gi, &g) in env.free_cells().iter().enumerate() {
        let dist = env.bfs_distances(g)?;
        for si in 0..n {
            v[si * n + gi] = match dist[si] {
                Some(d) => -(1.0 - gamma.powi(d as i32)) / (1.0 - gamma),
                None => {
                    unreachable[si * n + gi] = true;
                    floor
                }
            };
        }
    }
    Ok(OptimalValue { n, v, unreachable })
}

/// Independent check of the closed form: max-backup value iteration
/// V(s, g) <- max_a [r(s, g) + gamma V(s', g)] with the goal absorbing,
/// iterated until the sup-norm change drops below `tol`.
pub fn optimal_value_vi(env: &GridWorld, gamma: f64, tol: f64) -> Result<OptimalValue> {
    let n = env.num_free();
    let floor = -1.0 / (1.0 - gamma);
    let mut v = vec![floor; n * n];
    for gi in 0..n {
        v[gi * n + gi] = 0.0;
    }
    // precompute successor free indices per state
    let mut succ = Vec::with_capacity(n);
    for &s in env.free_cells() {
        let mut row = Vec::with_capacity(crate::env::NUM_ACTIONS);
        for &a in &crate::env::ACTIONS {
            row.push(env.free_index(env.step(s, a)?)?);
        }
        succ.push(row);
    }
    loop {
        let mut delta = 0.0f64;
        for gi in 0..n {
            for si in 0..n {
                if si == gi {
                    continue;
                }
                let mut best = f64::NEG_INFINITY;
                for &ni in &succ[si] {
                    best = best.max(-1.0 + gamma * v[ni * n + gi]);
                }
                let best = best.max(floor);
                delta = delta.max((best - v[si * n + gi]).abs());
                v[si * n + gi] = best;
            }
        }
        if delta < tol {
            break;
        }
    }
    let unreachable = v
        .iter()
        .enumerate()
        .map(|(i, &x)| i / n != i % n && (x - floor).abs() < tol * 10.0)
        .collect();
    Ok(OptimalValue { n, v, unreachable })
}

/// Compare the two independent optimal-value computations.
pub fn optimal_value_report(env: &GridWorld, gamma: f64) -> Result<OracleReport> {
    let closed = optimal_value(env, gamma)?;
    let vi = optimal_value_vi(env, gamma, 1e-10)?;
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    for (a, b) in closed.v.iter().zip(&vi.v) {
        let abs = (a - b).abs();
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(abs / a.abs().max(1.0));
    }
    Ok(OracleReport::from_abs("optimal_value", max_abs, max_rel, 1e-8))
}

/// tau-expectile of a weighted finite set, solved by bisection on the
/// first-order condition sum_i n_i |tau - 1(t_i < m)| (t_i - m) = 0.
pub fn weighted_expectile(targets: &[f64], weights: &[f64], tau: f64, tol: f64) -> f64 {
    debug_assert_eq!(targets.len(), weights.len());
    let fo = |m: f64| -> f64 {
        targets
            .iter()
            .zip(weights)
            .map(|(&t, &w)| w * expectile_weight(t - m, tau) * (t - m))
            .sum()
    };
    let mut lo = targets.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < tol {
        return lo;
    }
    // fo is strictly decreasing in m, positive at lo and negative at hi
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if fo(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Result of expectile value iteration over the empirical transition multiset.
#[derive(Debug, Clone)]
pub struct ExpectileViResult {
    pub n: usize,
    pub v: Vec<f64>,
    /// States with no outgoing dataset transition keep their initialization.
    pub unvisited: Vec<bool>,
    pub sweeps: usize,
}

/// Iterate the empirical expectile Bellman backup to its fixed point: for
/// every (s, g) pair, V(s, g) becomes the tau-expectile of the backup targets
/// r(s, g) + gamma V(s', g) over dataset transitions leaving s, with the goal
/// diagonal pinned at 0. Converges to sup-norm change < 1e-10.
pub fn expectile_value_iteration(
    env: &GridWorld,
    d: &Dataset,
    gamma: f64,
    tau: f64,
) -> Result<ExpectileViResult> {
    let n = env.num_free();
    // empirical multiset of successor states per state: (next free index, count)
    let mut succ: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for traj in &d.trajectories {
        for t in 0..traj.len() {
            let si = env.free_index(traj.states[t])?;
            let ni = env.free_index(traj.states[t + 1])?;
            match succ[si].iter_mut().find(|(j, _)| *j == ni) {
                Some(entry) => entry.1 += 1.0,
                None => succ[si].push((ni, 1.0)),
            }
        }
    }
    for row in &mut succ {
        row.sort_by_key(|&(j, _)| j);
    }
    let unvisited: Vec<bool> = succ.iter().map(|row| row.is_empty()).collect();
    let mut v = vec![0.0f64; n * n];
    let tol = 1e-10;
    let mut sweeps = 0;
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    loop {
        let mut delta = 0.0f64;
        for gi in 0..n {
            for si in 0..n {
                if si == gi || unvisited[si] {
                    continue;
                }
                targets.clear();
                weights.clear();
                for &(ni, cnt) in &succ[si] {
                    targets.push(-1.0 + gamma * v[ni * n + gi]);
                    weights.push(cnt);
                }
                let m = weighted_expectile(&targets, &weights, tau, tol * 0.01);
                delta = delta.max((m - v[si * n + gi]).abs());
                v[si * n + gi] = m;
            }
        }
        sweeps += 1;
        if delta < tol {
            break;
        }
    }
    Ok(ExpectileViResult { n, v, unvisited, sweeps })
}

/// KL(q || p) over a shared finite support.
fn kl_discrete(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(&qi, _)| qi > 0.0)
        .map(|(&qi, &pi)| qi * (qi / pi).ln())
        .sum()
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
}

/// Tilted distribution q_lambda proportional to p_i exp(lambda * score_i).
fn tilt(prior: &[f64], scores: &[f64], lambda: f64) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut q: Vec<f64> = prior
        .iter()
        .zip(scores)
        .map(|(&p, &s)| p * (lambda * (s - m)).exp())
        .collect();
    normalize(&mut q);
    q
}

fn expected(dist: &[f64], scores: &[f64]) -> f64 {
    dist.iter().zip(scores).map(|(&d, &s)| d * s).sum()
}

/// Randomized certificate that the exponentially tilted posterior maximizes
/// the expected score over the KL ball KL(q || prior) <= epsilon.
///
/// The temperature is found by bisection so the tilt sits on the KL boundary
/// (or at the tilted limit if the budget exceeds the reachable KL). Each trial
/// draws a flat-Dirichlet direction and line-searches toward the prior until
/// feasible; no feasible trial may beat the tilted posterior by more than the
/// tolerance.
pub fn verify_optimal_posterior<R: Rng>(
    prior: &[f64],
    scores: &[f64],
    epsilon: f64,
    trials: usize,
    rng: &mut R,
) -> Result<OracleReport> {
    if prior.len() != scores.len() || prior.is_empty() {
        return Err(Error::Config("prior and scores must be nonempty, same length".into()));
    }
    if prior.iter().any(|&p| p <= 0.0) {
        return Err(Error::Config("prior must have full support".into()));
    }
    let mut p = prior.to_vec();
    normalize(&mut p);

    // bisection for lambda >= 0 with KL(q_lambda || p) = epsilon
    let kl_at = |lambda: f64| kl_discrete(&tilt(&p, scores, lambda), &p);
    let mut hi = 1.0;
    let mut capped = false;
    for _ in 0..200 {
        if kl_at(hi) >= epsilon {
            break;
        }
        hi *= 2.0;
        if hi > 1e12 {
            capped = true; // KL budget not reachable: scores effectively constant
            break;
        }
    }
    let lambda = if capped {
        hi
    } else {
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if kl_at(mid) < epsilon {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let q_star = tilt(&p, scores, lambda);
    let best_score = expected(&q_star, scores);

    let mut max_improvement = 0.0f64;
    for _ in 0..trials {
        // flat Dirichlet via normalized exponentials
        let mut dir: Vec<f64> = (0..p.len())
            .map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln())
            .collect();
        normalize(&mut dir);
        // largest t in [0, 1] with KL((1 - t) p + t dir || p) <= epsilon
        let mix = |t: f64| -> Vec<f64> {
            p.iter().zip(&dir).map(|(&pi, &di)| (1.0 - t) * pi + t * di).collect()
        };
        let t = if kl_discrete(&mix(1.0), &p) <= epsilon {
            1.0
        } else {
            let mut lo = 0.0;
            let mut hi = 1.0;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if kl_discrete(&mix(mid), &p) <= epsilon {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let candidate = mix(t);
        max_improvement = max_improvement.max(expected(&candidate, scores) - best_score);
    }
    Ok(OracleReport::from_abs(
        "optimal_posterior",
        max_improvement,
        max_improvement / best_score.abs().max(1.0),
        1e-8,
    ))
}

/// Check the tilted-expectation identity
/// sum_i p_i e^{beta A_i} f_i = Z * E_q[f] with q_i = p_i e^{beta A_i} / Z.
pub fn verify_tilted_identity(
    p: &[f64],
    advantages: &[f64],
    beta: f64,
    f: &[f64],
) -> Result<OracleReport> {
    if p.len() != advantages.len() || p.len() != f.len() || p.is_empty() {
        return Err(Error::Config("tilted identity inputs must be nonempty, same length".into()));
    }
    let lhs: f64 = p
        .iter()
        .zip(advantages)
        .zip(f)
        .map(|((&pi, &ai), &fi)| pi * (beta * ai).exp() * fi)
        .sum();
    let z: f64 = p.iter().zip(advantages).map(|(&pi, &ai)| pi * (beta * ai).exp()).sum();
    let q: Vec<f64> = p
        .iter()
        .zip(advantages)
        .map(|(&pi, &ai)| pi * (beta * ai).exp() / z)
        .collect();
    let rhs = z * expected(&q, f);
    let abs = (lhs - rhs).abs();
    let rel = abs / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    Ok(OracleReport::from_rel("tilted_identity", abs, rel, 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, DatasetMode};
    use crate::env::{assets, parse_maze};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn optimal_value_closed_form_basics() {
        let env = parse_maze("...\n...\n...").unwrap();
        let ov = optimal_value(&env, 0.99).unwrap();
        // d = 0
        assert_eq!(ov.get(0, 0), 0.0);
        // d = 1
        let gi = env.free_index(crate::env::Cell(1)).unwrap();
        assert!((ov.get(0, gi) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn optimal_value_d100_closed_form() {
        let gamma: f64 = 0.99;
        let v = -(1.0 - gamma.powi(100)) / (1.0 - gamma);
        assert!((v + 63.39676587267703).abs() < 1e-8);
        let env = parse_maze(assets::GRID_CORRIDOR).unwrap();
        let ov = optimal_value(&env, gamma).unwrap();
        // find a pair at distance exactly 100
        let d = env.all_pairs_distances().unwrap();
        let mut found = false;
        'outer: for si in 0..env.num_free() {
            for gi in 0..env.num_free() {
                if d[si][gi] == Some(100) {
                    assert!((ov.get(si, gi) - v).abs() < 1e-10);
                    found = true;
                    break 'outer;
                }
            }
        }
        assert!(found);
    }

    #[test]
    fn closed_form_matches_value_iteration_on_medium() {
        let env = parse_maze(assets::GRID_MEDIUM).unwrap();
        let report = optimal_value_report(&env, 0.99).unwrap();
        assert!(report.pass, "max abs err {}", report.max_abs_error);
    }

    #[test]
    fn unreachable_pair_gets_floor_and_flag() {
        let env = parse_maze(".#.").unwrap();
        let ov = optimal_value(&env, 0.9).unwrap();
        assert!(ov.unreachable[1]); // (0, 1) over compact indices
        assert!((ov.get(0, 1) + 10.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_expectile_half_is_mean() {
        let t = [1.0, 2.0, 4.0];
        let w = [1.0, 1.0, 2.0];
        let m = weighted_expectile(&t, &w, 0.5, 1e-12);
        assert!((m - 2.75).abs() < 1e-9);
    }

    #[test]
    fn weighted_expectile_single_target_any_tau() {
        for tau in [0.5, 0.7, 0.95] {
            let m = weighted_expectile(&[-3.2], &[5.0], tau, 1e-12);
            assert!((m + 3.2).abs() < 1e-9);
        }
    }

    #[test]
    fn weighted_expectile_tends_to_max() {
        let t = [0.0, 1.0];
        let w = [1.0, 1.0];
        let m99 = weighted_expectile(&t, &w, 0.999, 1e-12);
        assert!(m99 > 0.99);
    }

    #[test]
    fn expectile_vi_monotone_in_tau_and_below_optimal() {
        let env = parse_maze(assets::GRID_MEDIUM).unwrap();
        let d = generate_dataset(&env, DatasetMode::Navigate, 400, 60, 0.5, 13).unwrap();
        let gamma = 0.95;
        let mut prev: Option<Vec<f64>> = None;
        for tau in [0.5, 0.7, 0.9, 0.95] {
            let r = expectile_value_iteration(&env, &d, gamma, tau).unwrap();
            assert!(r.unvisited.iter().all(|&u| !u), "full coverage expected");
            if let Some(p) = &prev {
                for (a, b) in r.v.iter().zip(p) {
                    assert!(a + 1e-8 >= *b, "not monotone in tau: {a} < {b}");
                }
            }
            let opt = optimal_value(&env, gamma).unwrap();
            for (a, b) in r.v.iter().zip(&opt.v) {
                assert!(*a <= b + 1e-6, "expectile VI above optimal: {a} > {b}");
            }
            prev = Some(r.v);
        }
    }

    #[test]
    fn posterior_constant_scores_returns_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prior = vec![0.25; 4];
        let scores = vec![2.0; 4];
        let r = verify_optimal_posterior(&prior, &scores, 0.5, 1000, &mut rng).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn posterior_zero_budget_is_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prior = vec![0.5, 0.5];
        let scores = vec![1.0, 0.0];
        let r = verify_optimal_posterior(&prior, &scores, 0.0, 2000, &mut rng).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn posterior_random_instance_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let n = 8;
            let mut prior: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
            normalize(&mut prior);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let r = verify_optimal_posterior(&prior, &scores, 0.1, 10_000, &mut rng).unwrap();
            assert!(r.pass, "improvement {}", r.max_abs_error);
        }
    }

    #[test]
    fn posterior_rejects_degenerate_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(verify_optimal_posterior(&[0.0, 1.0], &[0.0, 1.0], 0.1, 10, &mut rng).is_err());
    }

    #[test]
    fn tilted_identity_beta_zero_and_random() {
        let r = verify_tilted_identity(&[0.3, 0.7], &[1.0, -1.0], 0.0, &[2.0, 5.0]).unwrap();
        assert!(r.pass);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = 16;
            let mut p: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.01).collect();
            normalize(&mut p);
            let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 6.0 - 3.0).collect();
            let f: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 10.0 - 5.0).collect();
            let r = verify_tilted_identity(&p, &a, 3.0, &f).unwrap();
            assert!(r.pass, "rel err {}", r.max_rel_error);
        }
    }
}

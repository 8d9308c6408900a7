//! Online rollout evaluation: fixed state-goal task sets, episode rollouts,
//! and binary success rates.

use rand::Rng;
use serde::Serialize;

use crate::env::{Action, Cell, Distance, GridWorld};
use crate::error::{Error, Result};
use crate::policy::{ActMode, PolicyTable};

/// A fixed evaluation task set: start-goal pairs with a shared horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSet {
    pub pairs: Vec<(Cell, Cell)>,
    pub max_steps: usize,
    pub episodes_per_pair: usize,
}

impl TaskSet {
    /// Validate every pair against the maze: start != goal, both free,
    /// goal reachable from start.
    pub fn validate(&self, env: &GridWorld) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Config("task set has no pairs".into()));
        }
        for &(s, g) in &self.pairs {
            if s == g {
                return Err(Error::Config(format!("task pair has start == goal ({})", s.0)));
            }
            match env.shortest_path_distance(s, g)? {
                Distance::Steps(_) => {}
                Distance::Unreachable => {
                    return Err(Error::Config(format!(
                        "task pair ({}, {}) is unreachable",
                        s.0, g.0
                    )));
                }
            }
        }
        if self.max_steps == 0 || self.episodes_per_pair == 0 {
            return Err(Error::Config("max_steps and episodes_per_pair must be >= 1".into()));
        }
        Ok(())
    }
}

/// Deterministic built-in task set: five pairs whose distances sit at
/// 20/40/60/80/100% of the maze diameter (first pair in row-major order at
/// each distance), with a horizon of four diameters.
pub fn builtin_tasks(env: &GridWorld, episodes_per_pair: usize) -> Result<TaskSet> {
    let diam = env.diameter()?;
    let n = env.num_free();
    let dist = env.all_pairs_distances()?;
    let mut pairs = Vec::with_capacity(5);
    for frac in [0.2, 0.4, 0.6, 0.8, 1.0] {
        let want = ((diam as f64 * frac).round() as usize).max(1);
        // first pair at distance `want`, or the closest achievable below it
        let mut best: Option<(usize, usize, usize)> = None;
        for si in 0..n {
            for gi in 0..n {
                if let Some(d) = dist[si][gi] {
                    if d == 0 {
                        continue;
                    }
                    let gap = want.abs_diff(d);
                    if best.map_or(true, |(bg, _, _)| gap < bg) {
                        best = Some((gap, si, gi));
                    }
                }
            }
        }
        let (_, si, gi) = best.ok_or_else(|| Error::Config("no valid task pair".into()))?;
        pairs.push((env.free_cells()[si], env.free_cells()[gi]));
    }
    let tasks = TaskSet { pairs, max_steps: 4 * diam, episodes_per_pair };
    tasks.validate(env)?;
    Ok(tasks)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    /// Success percentage per task pair, in task order.
    pub per_pair: Vec<f64>,
    /// Mean episode length per task pair.
    pub per_pair_length: Vec<f64>,
    /// Mean of the per-pair success percentages.
    pub success_rate: f64,
    pub mean_episode_length: f64,
    pub seed: u64,
}

/// Roll one episode from `s0` toward `g`. Success means reaching the goal
/// within `max_steps`; a failed episode reports length `max_steps`.
pub fn rollout<R, F>(
    env: &GridWorld,
    mut act: F,
    s0: Cell,
    g: Cell,
    max_steps: usize,
    rng: &mut R,
) -> Result<(bool, usize)>
where
    R: Rng,
    F: FnMut(&GridWorld, Cell, Cell, &mut R) -> Result<Action>,
{
    let mut s = env.check_free(s0)?;
    env.check_free(g)?;
    for t in 0..max_steps {
        if s == g {
            return Ok((true, t));
        }
        let a = act(env, s, g, rng)?;
        s = env.step(s, a)?;
    }
    Ok((s == g, max_steps))
}

/// Evaluate an action selector over a task set: `episodes_per_pair` rollouts
/// per pair, binary success, per-pair and aggregate percentages.
pub fn evaluate<R, F>(
    env: &GridWorld,
    mut act: F,
    tasks: &TaskSet,
    seed: u64,
    rng: &mut R,
) -> Result<EvalResult>
where
    R: Rng,
    F: FnMut(&GridWorld, Cell, Cell, &mut R) -> Result<Action>,
{
    tasks.validate(env)?;
    let mut per_pair = Vec::with_capacity(tasks.pairs.len());
    let mut per_pair_length = Vec::with_capacity(tasks.pairs.len());
    let mut total_len = 0usize;
    let mut episodes = 0usize;
    for &(s0, g) in &tasks.pairs {
        let mut successes = 0usize;
        let mut pair_len = 0usize;
        for _ in 0..tasks.episodes_per_pair {
            let (ok, len) = rollout(env, &mut act, s0, g, tasks.max_steps, rng)?;
            successes += ok as usize;
            pair_len += len;
            total_len += len;
            episodes += 1;
        }
        per_pair.push(100.0 * successes as f64 / tasks.episodes_per_pair as f64);
        per_pair_length.push(pair_len as f64 / tasks.episodes_per_pair as f64);
    }
    let success_rate = per_pair.iter().sum::<f64>() / per_pair.len() as f64;
    Ok(EvalResult {
        per_pair,
        per_pair_length,
        success_rate,
        mean_episode_length: total_len as f64 / episodes as f64,
        seed,
    })
}

/// Action selector for a flat goal-conditioned policy table.
pub fn flat_selector(
    p: &PolicyTable,
    mode: ActMode,
) -> impl FnMut(&GridWorld, Cell, Cell, &mut rand_chacha::ChaCha8Rng) -> Result<Action> + '_ {
    move |env, s, g, rng| {
        let si = env.free_index(s)?;
        let gi = env.free_index(g)?;
        let ai = match mode {
            ActMode::Argmax => p.argmax(si, gi),
            ActMode::Sample => p.sample(si, gi, rng),
        };
        Action::from_index(ai)
    }
}

/// Action selector for the bilevel hierarchy.
pub fn hier_selector<'a>(
    p_high: &'a PolicyTable,
    p_low: &'a PolicyTable,
    mode: ActMode,
) -> impl FnMut(&GridWorld, Cell, Cell, &mut rand_chacha::ChaCha8Rng) -> Result<Action> + 'a {
    move |env, s, g, rng| crate::policy::hiql_act(p_high, p_low, env, s, g, mode, rng)
}

/// BFS-greedy oracle selector (optimal; used as an evaluation upper bound).
pub fn greedy_selector(
) -> impl FnMut(&GridWorld, Cell, Cell, &mut rand_chacha::ChaCha8Rng) -> Result<Action> {
    |env, s, g, _rng| {
        let dist = env.bfs_distances(g)?;
        let mut best = Action::Stay;
        let mut best_d = usize::MAX;
        for &a in &crate::env::ACTIONS {
            let next = env.step(s, a)?;
            if let Some(d) = dist[env.free_index(next)?] {
                if d < best_d {
                    best_d = d;
                    best = a;
                }
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{assets, parse_maze};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn rollout_trivial_start_at_goal() {
        let env = parse_maze("...\n...\n...").unwrap();
        let (ok, len) =
            rollout(&env, greedy_selector(), Cell(0), Cell(0), 10, &mut rng()).unwrap();
        assert!(ok);
        assert_eq!(len, 0);
    }

    #[test]
    fn greedy_oracle_is_shortest_path() {
        let env = parse_maze(assets::GRID_MEDIUM).unwrap();
        let free = env.free_cells().to_vec();
        for (i, &s) in free.iter().enumerate().step_by(7) {
            let g = free[(i * 13 + 5) % free.len()];
            if s == g {
                continue;
            }
            let d = env.shortest_path_distance(s, g).unwrap().steps().unwrap();
            let (ok, len) = rollout(&env, greedy_selector(), s, g, 200, &mut rng()).unwrap();
            assert!(ok);
            assert_eq!(len, d);
        }
    }

    #[test]
    fn random_policy_fails_long_corridor() {
        let env = parse_maze(assets::GRID_CORRIDOR).unwrap();
        let d = env.diameter().unwrap();
        // a far pair at distance exactly the diameter
        let tasks = builtin_tasks(&env, 1).unwrap();
        let (s0, g) = *tasks.pairs.last().unwrap();
        assert_eq!(env.shortest_path_distance(s0, g).unwrap().steps().unwrap(), d);
        let mut successes = 0;
        let mut r = rng();
        for _ in 0..100 {
            let uniform = |_: &GridWorld, _: Cell, _: Cell, rng: &mut ChaCha8Rng| {
                Action::from_index(rng.gen_range(0..crate::env::NUM_ACTIONS))
            };
            let (ok, _) = rollout(&env, uniform, s0, g, d, &mut r).unwrap();
            successes += ok as usize;
        }
        assert!(successes <= 2, "random policy succeeded {successes}/100");
    }

    #[test]
    fn evaluate_oracle_is_perfect_and_stay_is_zero() {
        let env = parse_maze(assets::GRID_MEDIUM).unwrap();
        let tasks = builtin_tasks(&env, 3).unwrap();
        let r = evaluate(&env, greedy_selector(), &tasks, 0, &mut rng()).unwrap();
        assert_eq!(r.success_rate, 100.0);
        assert!(r.per_pair.iter().all(|&p| p == 100.0));

        let stay = |_: &GridWorld, _: Cell, _: Cell, _: &mut ChaCha8Rng| Ok(Action::Stay);
        let r0 = evaluate(&env, stay, &tasks, 0, &mut rng()).unwrap();
        assert_eq!(r0.success_rate, 0.0);
        assert_eq!(r0.mean_episode_length, tasks.max_steps as f64);
    }

    #[test]
    fn aggregate_is_mean_of_pairs() {
        let env = parse_maze(assets::GRID_MEDIUM).unwrap();
        let tasks = builtin_tasks(&env, 2).unwrap();
        let r = evaluate(&env, greedy_selector(), &tasks, 0, &mut rng()).unwrap();
        let mean = r.per_pair.iter().sum::<f64>() / r.per_pair.len() as f64;
        assert_eq!(r.success_rate, mean);
    }

    #[test]
    fn builtin_tasks_are_valid_and_span_horizons() {
        for text in [assets::GRID_MEDIUM, assets::GRID_LARGE, assets::GRID_CORRIDOR] {
            let env = parse_maze(text).unwrap();
            let tasks = builtin_tasks(&env, 1).unwrap();
            assert_eq!(tasks.pairs.len(), 5);
            tasks.validate(&env).unwrap();
            let diam = env.diameter().unwrap();
            let (s, g) = *tasks.pairs.last().unwrap();
            assert_eq!(env.shortest_path_distance(s, g).unwrap().steps().unwrap(), diam);
            assert_eq!(tasks.max_steps, 4 * diam);
        }
    }

    #[test]
    fn unreachable_pair_rejected() {
        let env = parse_maze(".#.").unwrap();
        let tasks = TaskSet { pairs: vec![(Cell(0), Cell(2))], max_steps: 10, episodes_per_pair: 1 };
        assert!(matches!(tasks.validate(&env), Err(Error::Config(_))));
    }
}

//! Offline trajectory datasets: scripted collection policies, the goal and
//! subgoal sampling distributions consumed by the training objectives, and a
//! JSON-lines serialization with a bit-exact round trip.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{Action, Cell, GridWorld, ACTIONS, NUM_ACTIONS};
use crate::error::{Error, Result};

/// One collected episode. `states` has length `T + 1`, `actions` length `T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub states: Vec<Cell>,
    pub actions: Vec<Action>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetMode {
    Navigate,
    Stitch,
}

impl std::fmt::Display for DatasetMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetMode::Navigate => write!(f, "navigate"),
            DatasetMode::Stitch => write!(f, "stitch"),
        }
    }
}

impl std::str::FromStr for DatasetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "navigate" => Ok(DatasetMode::Navigate),
            "stitch" => Ok(DatasetMode::Stitch),
            other => Err(Error::Config(format!("unknown dataset mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub maze_hash: String,
    pub mode: DatasetMode,
    pub epsilon: f64,
    pub seed: u64,
    pub n_traj: usize,
}

/// An immutable offline dataset plus a flat index over non-terminal steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub trajectories: Vec<Trajectory>,
    /// (trajectory id, timestep) for every t in [0, T_i) of every trajectory.
    pub flat_index: Vec<(usize, usize)>,
    /// Distinct states visited anywhere in the dataset, sorted by cell index.
    pub visited: Vec<Cell>,
}

impl Dataset {
    pub fn new(meta: DatasetMeta, trajectories: Vec<Trajectory>) -> Result<Self> {
        let mut flat_index = Vec::new();
        for (i, traj) in trajectories.iter().enumerate() {
            for t in 0..traj.len() {
                flat_index.push((i, t));
            }
        }
        if flat_index.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut visited: Vec<Cell> =
            trajectories.iter().flat_map(|t| t.states.iter().copied()).collect();
        visited.sort_unstable_by_key(|c| c.0);
        visited.dedup();
        Ok(Dataset {
            meta,
            trajectories,
            flat_index,
            visited,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.flat_index.len()
    }

    /// Uniform draw over all non-terminal steps.
    pub fn sample_step<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        self.flat_index[rng.gen_range(0..self.flat_index.len())]
    }

    /// A state drawn from the dataset state marginal over non-terminal steps.
    pub fn sample_state<R: Rng>(&self, rng: &mut R) -> Cell {
        let (i, t) = self.sample_step(rng);
        self.trajectories[i].states[t]
    }

    /// A state drawn uniformly over the *distinct* states visited anywhere in
    /// the data (including terminal states). Unlike [`sample_state`], this
    /// keeps rarely-visited regions from being starved as relabeled goals.
    ///
    /// [`sample_state`]: Dataset::sample_state
    pub fn sample_visited_state<R: Rng>(&self, rng: &mut R) -> Cell {
        self.visited[rng.gen_range(0..self.visited.len())]
    }
}

/// Hex SHA-256 of the normalized maze text, used to tie artifacts to a maze.
pub fn maze_hash(env: &GridWorld) -> String {
    let mut h = Sha256::new();
    h.update(env.text().as_bytes());
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// The behavior policy: BFS-greedy toward `target` with probability `1 - epsilon`,
/// uniform over the 5 actions otherwise. Greedy ties break on action order.
fn behavior_action<R: Rng>(
    env: &GridWorld,
    dist_to_target: &[Option<usize>],
    s: Cell,
    epsilon: f64,
    rng: &mut R,
) -> Result<Action> {
    if rng.gen::<f64>() < epsilon {
        return Ok(ACTIONS[rng.gen_range(0..NUM_ACTIONS)]);
    }
    let mut best = Action::Stay;
    let mut best_d = usize::MAX;
    for &a in &ACTIONS {
        let next = env.step(s, a)?;
        let d = dist_to_target[env.free_index(next)?].unwrap_or(usize::MAX);
        if d < best_d {
            best_d = d;
            best = a;
        }
    }
    Ok(best)
}

/// Cap on trajectory length in stitch mode: short segments (at most `4 k`
/// steps) so no single trajectory spans distant evaluation pairs.
pub fn stitch_cap(max_len: usize, k: usize) -> usize {
    max_len.min(4 * k)
}

/// Collect an offline dataset with the scripted epsilon-noisy shortest-path
/// policy. Start and target cells are uniform over free cells; each episode
/// runs until the target or `max_len` steps. Deterministic given `seed`.
/// Stitch-mode callers pass a low `max_len` (see [`stitch_cap`]).
pub fn generate_dataset(
    env: &GridWorld,
    mode: DatasetMode,
    n_traj: usize,
    max_len: usize,
    epsilon: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_traj == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free = env.free_cells();
    let mut trajectories = Vec::with_capacity(n_traj);
    for _ in 0..n_traj {
        let start = free[rng.gen_range(0..free.len())];
        let target = loop {
            let t = free[rng.gen_range(0..free.len())];
            if t != start {
                break t;
            }
        };
        let dist = env.bfs_distances(target)?;
        let mut states = vec![start];
        let mut actions = Vec::new();
        let mut s = start;
        while s != target && actions.len() < max_len {
            let a = behavior_action(env, &dist, s, epsilon, &mut rng)?;
            s = env.step(s, a)?;
            actions.push(a);
            states.push(s);
        }
        trajectories.push(Trajectory { states, actions });
    }
    let meta = DatasetMeta {
        maze_hash: maze_hash(env),
        mode,
        epsilon,
        seed,
        n_traj,
    };
    Dataset::new(meta, trajectories)
}

/// Sampling tuple for value learning: a dataset transition plus a goal drawn
/// from the value-goal mixture.
#[derive(Debug, Clone, Copy)]
pub struct ValueBatchItem {
    pub s: Cell,
    pub a: Action,
    pub s_next: Cell,
    pub g: Cell,
}

/// Sampling tuple for policy extraction: a dataset transition, its k-step
/// in-trajectory subgoal, and a policy goal.
#[derive(Debug, Clone, Copy)]
pub struct PolicyBatchItem {
    pub s: Cell,
    pub a: Action,
    pub w: Cell,
    pub g: Cell,
}

/// Value-goal mixture weights: current state / geometric future / random.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalMixture {
    pub p_cur: f64,
    pub p_future: f64,
    pub p_random: f64,
    /// When set, the random branch draws uniformly over *distinct* visited
    /// states instead of the occupancy marginal. Occupancy sampling starves
    /// rarely-visited cells (e.g. dead ends trajectories only terminate in),
    /// which can keep their goal columns from ever converging.
    pub uniform_random: bool,
}

impl Default for GoalMixture {
    fn default() -> Self {
        GoalMixture {
            p_cur: 0.2,
            p_future: 0.5,
            p_random: 0.3,
            uniform_random: false,
        }
    }
}

impl GoalMixture {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.p_cur, self.p_future, self.p_random];
        if parts.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::Config("goal mixture weights must be nonnegative".into()));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("goal mixture weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Geometric horizon K in {1, 2, ...} with P(K = k) = gamma^(k-1) (1 - gamma).
fn sample_geometric<R: Rng>(gamma: f64, rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    1 + (u.ln() / gamma.ln()).floor() as usize
}

/// Draw a batch of value-learning tuples from the goal mixture.
pub fn sample_value_batch<R: Rng>(
    d: &Dataset,
    gamma: f64,
    mix: GoalMixture,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<ValueBatchItem>> {
    mix.validate()?;
    let mut items = Vec::with_capacity(batch);
    for _ in 0..batch {
        let (i, t) = d.sample_step(rng);
        let traj = &d.trajectories[i];
        let s = traj.states[t];
        let a = traj.actions[t];
        let s_next = traj.states[t + 1];
        let u: f64 = rng.gen();
        let g = if u < mix.p_cur {
            s
        } else if u < mix.p_cur + mix.p_future {
            let k = sample_geometric(gamma, rng);
            traj.states[(t + k).min(traj.len())]
        } else if mix.uniform_random {
            d.sample_visited_state(rng)
        } else {
            d.sample_state(rng)
        };
        items.push(ValueBatchItem { s, a, s_next, g });
    }
    Ok(items)
}

/// Policy-goal sampling options. Defaults follow in-trajectory uniform-future
/// goals including the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyGoalConfig {
    pub include_current_goal: bool,
    /// Probability of replacing the in-trajectory goal with a random dataset
    /// state (useful on stitch datasets where no single trajectory spans the
    /// evaluation pairs).
    pub p_random_goal: f64,
    /// Draw random goals uniformly over distinct visited states instead of
    /// the occupancy marginal; see [`GoalMixture::uniform_random`].
    pub uniform_random: bool,
}

impl Default for PolicyGoalConfig {
    fn default() -> Self {
        PolicyGoalConfig {
            include_current_goal: true,
            p_random_goal: 0.0,
            uniform_random: false,
        }
    }
}

/// Draw a batch of policy-extraction tuples: subgoal `w` is the k-step clamped
/// future state, goal `g` a uniform future state of the same trajectory (or a
/// random dataset state per `goals.p_random_goal`).
pub fn sample_policy_batch<R: Rng>(
    d: &Dataset,
    k: usize,
    goals: PolicyGoalConfig,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<PolicyBatchItem>> {
    if k == 0 {
        return Err(Error::Config("subgoal steps k must be >= 1".into()));
    }
    let mut items = Vec::with_capacity(batch);
    for _ in 0..batch {
        let (i, t) = d.sample_step(rng);
        let traj = &d.trajectories[i];
        let s = traj.states[t];
        let a = traj.actions[t];
        let w = traj.states[(t + k).min(traj.len())];
        let g = if goals.p_random_goal > 0.0 && rng.gen::<f64>() < goals.p_random_goal {
            if goals.uniform_random {
                d.sample_visited_state(rng)
            } else {
                d.sample_state(rng)
            }
        } else {
            let lo = if goals.include_current_goal { t } else { (t + 1).min(traj.len()) };
            traj.states[rng.gen_range(lo..=traj.len())]
        };
        items.push(PolicyBatchItem { s, a, w, g });
    }
    Ok(items)
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    states: Vec<usize>,
    actions: Vec<u8>,
}

/// Serialize as JSON lines: a header record followed by one trajectory per line.
pub fn write_jsonl<W: Write>(d: &Dataset, mut out: W) -> Result<()> {
    serde_json::to_writer(&mut out, &d.meta)?;
    out.write_all(b"\n")?;
    for traj in &d.trajectories {
        let rec = TrajectoryRecord {
            states: traj.states.iter().map(|c| c.0).collect(),
            actions: traj.actions.iter().map(|a| a.index() as u8).collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("missing dataset header".into()))??;
    let meta: DatasetMeta = serde_json::from_str(&header)?;
    let mut trajectories = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajectoryRecord = serde_json::from_str(&line)?;
        if rec.states.len() != rec.actions.len() + 1 {
            return Err(Error::Format("trajectory length mismatch".into()));
        }
        trajectories.push(Trajectory {
            states: rec.states.into_iter().map(Cell).collect(),
            actions: rec
                .actions
                .into_iter()
                .map(|a| Action::from_index(a as usize))
                .collect::<Result<_>>()?,
        });
    }
    Dataset::new(meta, trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{assets, parse_maze, Distance};

    fn open3x3() -> GridWorld {
        parse_maze("...\n...\n...").unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn greedy_collection_is_shortest_path() {
        let env = open3x3();
        // epsilon = 0: every trajectory is a BFS-optimal path
        let d = generate_dataset(&env, DatasetMode::Navigate, 20, 50, 0.0, 3).unwrap();
        for traj in &d.trajectories {
            let s0 = traj.states[0];
            let target = *traj.states.last().unwrap();
            let dist = env.shortest_path_distance(s0, target).unwrap();
            assert_eq!(dist, Distance::Steps(traj.len()));
        }
    }

    #[test]
    fn trajectories_are_consistent_with_env() {
        let env = parse_maze(assets::GRID_MEDIUM).unwrap();
        let d = generate_dataset(&env, DatasetMode::Navigate, 30, 80, 0.3, 9).unwrap();
        for traj in &d.trajectories {
            for t in 0..traj.len() {
                assert_eq!(env.step(traj.states[t], traj.actions[t]).unwrap(), traj.states[t + 1]);
            }
        }
        assert_eq!(d.num_steps(), d.trajectories.iter().map(|t| t.len()).sum::<usize>());
    }

    #[test]
    fn pure_noise_action_marginal_is_uniform() {
        let env = parse_maze(assets::GRID_MEDIUM).unwrap();
        let d = generate_dataset(&env, DatasetMode::Navigate, 1500, 100, 1.0, 11).unwrap();
        let total = d.num_steps() as f64;
        assert!(total >= 1e5, "want >= 1e5 steps, got {total}");
        let mut counts = [0usize; NUM_ACTIONS];
        for traj in &d.trajectories {
            for a in &traj.actions {
                counts[a.index()] += 1;
            }
        }
        for c in counts {
            let frac = c as f64 / total;
            assert!((frac - 0.2).abs() < 0.02, "action marginal {frac} off uniform");
        }
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let env = parse_maze(assets::GRID_MEDIUM).unwrap();
        let mut bytes = Vec::new();
        let mut bytes2 = Vec::new();
        let d1 = generate_dataset(&env, DatasetMode::Stitch, 25, 20, 0.4, 42).unwrap();
        let d2 = generate_dataset(&env, DatasetMode::Stitch, 25, 20, 0.4, 42).unwrap();
        write_jsonl(&d1, &mut bytes).unwrap();
        write_jsonl(&d2, &mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn zero_trajectories_is_an_error() {
        let env = open3x3();
        assert!(matches!(
            generate_dataset(&env, DatasetMode::Navigate, 0, 10, 0.1, 0),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn roundtrip_reproduces_dataset_exactly() {
        let env = parse_maze(assets::GRID_MEDIUM).unwrap();
        let d = generate_dataset(&env, DatasetMode::Navigate, 40, 60, 0.25, 5).unwrap();
        let mut bytes = Vec::new();
        write_jsonl(&d, &mut bytes).unwrap();
        let back = read_jsonl(&bytes[..]).unwrap();
        assert_eq!(d, back);
        let mut bytes2 = Vec::new();
        write_jsonl(&back, &mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn value_goal_forced_current_branch() {
        let env = open3x3();
        let d = generate_dataset(&env, DatasetMode::Navigate, 10, 20, 0.2, 1).unwrap();
        let mix = GoalMixture { p_cur: 1.0, p_future: 0.0, p_random: 0.0, ..Default::default() };
        let items = sample_value_batch(&d, 0.99, mix, 200, &mut rng(0)).unwrap();
        assert!(items.iter().all(|it| it.g == it.s));
    }

    #[test]
    fn value_goal_random_branch_matches_state_marginal() {
        let env = parse_maze(assets::GRID_MEDIUM).unwrap();
        let d = generate_dataset(&env, DatasetMode::Navigate, 300, 60, 0.3, 2).unwrap();
        let mix = GoalMixture { p_cur: 0.0, p_future: 0.0, p_random: 1.0, ..Default::default() };
        let n = 100_000;
        let items = sample_value_batch(&d, 0.99, mix, n, &mut rng(3)).unwrap();
        // empirical marginal over flat-index states
        let cells = env.width() * env.height();
        let mut marginal = vec![0f64; cells];
        for &(i, t) in &d.flat_index {
            marginal[d.trajectories[i].states[t].0] += 1.0;
        }
        let total: f64 = marginal.iter().sum();
        let mut empirical = vec![0f64; cells];
        for it in &items {
            empirical[it.g.0] += 1.0;
        }
        let tv: f64 = (0..cells)
            .map(|c| (marginal[c] / total - empirical[c] / n as f64).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
    }

    #[test]
    fn value_goal_random_branch_uniform_option_covers_visited_states() {
        let env = parse_maze(assets::GRID_MEDIUM).unwrap();
        let d = generate_dataset(&env, DatasetMode::Navigate, 300, 60, 0.3, 2).unwrap();
        let mix = GoalMixture {
            p_cur: 0.0,
            p_future: 0.0,
            p_random: 1.0,
            uniform_random: true,
        };
        let n = 100_000;
        let items = sample_value_batch(&d, 0.99, mix, n, &mut rng(3)).unwrap();
        let cells = env.width() * env.height();
        let mut empirical = vec![0f64; cells];
        for it in &items {
            empirical[it.g.0] += 1.0;
        }
        let uniform = 1.0 / d.visited.len() as f64;
        let tv: f64 = d
            .visited
            .iter()
            .map(|c| (uniform - empirical[c.0] / n as f64).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
        let visited: std::collections::HashSet<usize> = d.visited.iter().map(|c| c.0).collect();
        assert!(items.iter().all(|it| visited.contains(&it.g.0)));
    }

    #[test]
    fn value_goal_future_offset_mean_matches_truncated_geometric() {
        let env = parse_maze(assets::GRID_CORRIDOR).unwrap();
        let gamma = 0.99;
        let d = generate_dataset(&env, DatasetMode::Navigate, 400, 600, 0.1, 4).unwrap();
        // Oracle: simulate the truncated geometric offset with an independent rng.
        let mut oracle_rng = rng(77);
        let mut oracle_sum = 0f64;
        let n = 50_000;
        for _ in 0..n {
            let (i, t) = d.sample_step(&mut oracle_rng);
            let traj = &d.trajectories[i];
            let k = sample_geometric(gamma, &mut oracle_rng);
            oracle_sum += ((t + k).min(traj.len()) - t) as f64;
        }
        let oracle_mean = oracle_sum / n as f64;

        let mix = GoalMixture { p_cur: 0.0, p_future: 1.0, p_random: 0.0, ..Default::default() };
        // Recover offsets by re-running the sampler internals: draw items and
        // measure distance along trajectory is not recoverable from g alone, so
        // instead check the raw geometric draw against 1/(1-gamma).
        let mut s = 0f64;
        let mut r2 = rng(5);
        for _ in 0..n {
            s += sample_geometric(gamma, &mut r2) as f64;
        }
        let mean = s / n as f64;
        assert!((mean - 100.0).abs() / 100.0 < 0.05, "geometric mean {mean}");
        // and the truncated mean is below the untruncated one
        assert!(oracle_mean <= mean);
        let _ = sample_value_batch(&d, gamma, mix, 10, &mut rng(6)).unwrap();
    }

    #[test]
    fn degenerate_mixture_rejected() {
        let env = open3x3();
        let d = generate_dataset(&env, DatasetMode::Navigate, 5, 20, 0.0, 1).unwrap();
        let mix = GoalMixture { p_cur: -0.2, p_future: 0.7, p_random: 0.5, ..Default::default() };
        assert!(sample_value_batch(&d, 0.99, mix, 10, &mut rng(0)).is_err());
    }

    #[test]
    fn policy_batch_clamps_subgoal_to_trajectory_end() {
        let env = open3x3();
        let d = generate_dataset(&env, DatasetMode::Navigate, 10, 20, 0.0, 8).unwrap();
        let items =
            sample_policy_batch(&d, 10_000, PolicyGoalConfig::default(), 300, &mut rng(1)).unwrap();
        // k exceeds every trajectory length, so w is always a final state
        let finals: Vec<Cell> = d.trajectories.iter().map(|t| *t.states.last().unwrap()).collect();
        assert!(items.iter().all(|it| finals.contains(&it.w)));
    }

    #[test]
    fn length_one_trajectory_pins_w_and_g() {
        let env = open3x3();
        let traj = Trajectory {
            states: vec![Cell(0), Cell(1)],
            actions: vec![Action::Right],
        };
        let meta = DatasetMeta {
            maze_hash: maze_hash(&env),
            mode: DatasetMode::Navigate,
            epsilon: 0.0,
            seed: 0,
            n_traj: 1,
        };
        let d = Dataset::new(meta, vec![traj]).unwrap();
        let goals = PolicyGoalConfig { include_current_goal: false, p_random_goal: 0.0, ..Default::default() };
        let items = sample_policy_batch(&d, 1, goals, 100, &mut rng(2)).unwrap();
        assert!(items.iter().all(|it| it.w == Cell(1) && it.g == Cell(1)));
    }

    #[test]
    fn policy_batch_subgoal_within_k_of_state() {
        let env = parse_maze(assets::GRID_MEDIUM).unwrap();
        let d = generate_dataset(&env, DatasetMode::Navigate, 100, 80, 0.2, 6).unwrap();
        let k = 25;
        let items =
            sample_policy_batch(&d, k, PolicyGoalConfig::default(), 2000, &mut rng(3)).unwrap();
        for it in &items {
            let dist = env.shortest_path_distance(it.s, it.w).unwrap().steps().unwrap();
            assert!(dist <= k, "subgoal {} steps away, k = {k}", dist);
        }
    }

    #[test]
    fn sampled_transitions_exist_in_dataset() {
        let env = parse_maze(assets::GRID_MEDIUM).unwrap();
        let d = generate_dataset(&env, DatasetMode::Navigate, 50, 60, 0.3, 7).unwrap();
        let items =
            sample_value_batch(&d, 0.99, GoalMixture::default(), 500, &mut rng(4)).unwrap();
        for it in &items {
            let found = d.flat_index.iter().any(|&(i, t)| {
                let traj = &d.trajectories[i];
                traj.states[t] == it.s && traj.actions[t] == it.a && traj.states[t + 1] == it.s_next
            });
            assert!(found);
        }
    }
}

//! Goal-conditioned implicit value learning over tabular value functions:
//! expectile loss, the action-free backup estimate, and target-table updates.

use std::io::{BufRead, Write};

use crate::dataset::ValueBatchItem;
use crate::env::{Action, Cell, GridWorld};
use crate::error::{Error, Result};

/// Sparse reward convention: 0 at the goal, -1 everywhere else.
pub fn reward(s: Cell, g: Cell) -> f64 {
    if s == g {
        0.0
    } else {
        -1.0
    }
}

/// Asymmetric squared loss `|tau - 1(x < 0)| * x^2`.
pub fn expectile_loss(x: f64, tau: f64) -> f64 {
    expectile_weight(x, tau) * x * x
}

pub fn expectile_weight(x: f64, tau: f64) -> f64 {
    if x < 0.0 {
        1.0 - tau
    } else {
        tau
    }
}

/// Training hyperparameters shared across the value and policy phases.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Expectile in [0.5, 1).
    pub tau: f64,
    /// Discount in (0, 1).
    pub gamma: f64,
    /// One-step advantage inverse temperature.
    pub alpha: f64,
    /// Subgoal-advantage inverse temperature on the bootstrapping term.
    /// A value of 0 disables the bootstrapping term entirely.
    pub beta: f64,
    /// Fixed coefficient on the subgoal-bootstrap divergence term.
    pub beta_ris: f64,
    /// Subgoal steps.
    pub k: usize,
    pub lr_v: f64,
    pub lr_pi: f64,
    /// Hard target-table copy period, in update steps.
    pub target_period: usize,
    /// Clip for exponentiated advantage weights.
    pub w_max: f64,
    /// Initial value-table entry (off-diagonal).
    pub v_init: f64,
    pub steps_value: usize,
    pub steps_sub: usize,
    pub steps_policy: usize,
    pub batch_size: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            tau: 0.7,
            gamma: 0.99,
            alpha: 3.0,
            beta: 3.0,
            beta_ris: 3.0,
            k: 25,
            // step sizes scale the batch-mean gradient, so the effective
            // per-entry rate is roughly 2 * lr_v * tau / batch_size
            lr_v: 8.0,
            lr_pi: 1.0,
            target_period: 100,
            w_max: 100.0,
            v_init: 0.0,
            steps_value: 100_000,
            steps_sub: 50_000,
            steps_policy: 100_000,
            batch_size: 256,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau {} outside [0.5, 1)", self.tau)));
        }
        if !(0.0..1.0).contains(&self.gamma) || self.gamma == 0.0 {
            return Err(Error::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("beta_ris", self.beta_ris),
            ("lr_v", self.lr_v),
            ("lr_pi", self.lr_pi),
            ("w_max", self.w_max),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.target_period == 0 {
            return Err(Error::Config("target_period must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Tabular goal-conditioned value function with a target copy. Entries are
/// indexed by compact free-cell indices; the diagonal v(g, g) is pinned to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    n: usize,
    v: Vec<f64>,
    v_target: Vec<f64>,
    updates: usize,
}

impl ValueTable {
    pub fn new(env: &GridWorld, init: f64) -> Self {
        let n = env.num_free();
        let mut v = vec![init; n * n];
        for i in 0..n {
            v[i * n + i] = 0.0;
        }
        let v_target = v.clone();
        ValueTable { n, v, v_target, updates: 0 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get_idx(&self, si: usize, gi: usize) -> f64 {
        self.v[si * self.n + gi]
    }

    pub fn target_idx(&self, si: usize, gi: usize) -> f64 {
        self.v_target[si * self.n + gi]
    }

    pub fn get(&self, env: &GridWorld, s: Cell, g: Cell) -> Result<f64> {
        Ok(self.get_idx(env.free_index(s)?, env.free_index(g)?))
    }

    /// Direct entry assignment (diagonal stays pinned). Used by oracles/tests.
    pub fn set_idx(&mut self, si: usize, gi: usize, val: f64) {
        if si != gi {
            self.v[si * self.n + gi] = val;
        }
    }

    pub fn hard_update_target(&mut self) {
        self.v_target.copy_from_slice(&self.v);
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|x| x.is_finite())
    }
}

/// Action-free backup estimate `r(s, g) + gamma * v_target(s', g)`, with the
/// absorbing-goal convention that the estimate is exactly 0 at `s = g`.
pub fn q_bar(
    v: &ValueTable,
    env: &GridWorld,
    s: Cell,
    a: Action,
    g: Cell,
    gamma: f64,
) -> Result<f64> {
    let gi = env.free_index(g)?;
    env.free_index(s)?;
    if s == g {
        return Ok(0.0);
    }
    let s_next = env.step(s, a)?;
    Ok(reward(s, g) + gamma * v.target_idx(env.free_index(s_next)?, gi))
}

/// Mean expectile loss over the batch and its gradient with respect to the
/// touched table entries (target table held fixed). Diagonal entries are
/// pinned and carry no gradient.
pub fn gcivl_loss_grad(
    v: &ValueTable,
    env: &GridWorld,
    batch: &[ValueBatchItem],
    tau: f64,
    gamma: f64,
) -> Result<(f64, Vec<(usize, f64)>)> {
    let n = v.n();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(batch.len());
    for item in batch {
        let si = env.free_index(item.s)?;
        let gi = env.free_index(item.g)?;
        let target = q_bar(v, env, item.s, item.a, item.g, gamma)?;
        let delta = target - v.get_idx(si, gi);
        let w = expectile_weight(delta, tau);
        loss += w * delta * delta * scale;
        if si != gi {
            grads.push((si * n + gi, -2.0 * w * delta * scale));
        }
    }
    Ok((loss, grads))
}

/// One gradient step on the mean expectile loss. Returns the pre-update loss.
/// The target table is hard-copied every `hp.target_period` update calls.
pub fn gcivl_update(
    v: &mut ValueTable,
    env: &GridWorld,
    batch: &[ValueBatchItem],
    hp: &Hyperparams,
) -> Result<f64> {
    let (loss, mut grads) = gcivl_loss_grad(v, env, batch, hp.tau, hp.gamma)?;
    grads.sort_by_key(|&(idx, _)| idx);
    for (idx, g) in grads {
        v.v[idx] -= hp.lr_v * g;
    }
    v.updates += 1;
    if v.updates % hp.target_period == 0 {
        v.hard_update_target();
    }
    Ok(loss)
}

/// Serialize as a text matrix with a header recording the maze hash, table
/// size, and discount. Values are printed with 17 significant digits.
pub fn write_value_table<W: Write>(
    v: &ValueTable,
    maze_hash: &str,
    gamma: f64,
    mut out: W,
) -> Result<()> {
    writeln!(out, "valuetable {maze_hash} {} {}", v.n, fmt_f64(gamma))?;
    for si in 0..v.n {
        let row: Vec<String> = (0..v.n).map(|gi| fmt_f64(v.get_idx(si, gi))).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn read_value_table<R: BufRead>(input: R) -> Result<(ValueTable, String, f64)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("missing value table header".into()))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "valuetable" {
        return Err(Error::Format("bad value table header".into()));
    }
    let maze_hash = parts[1].to_string();
    let n: usize = parts[2]
        .parse()
        .map_err(|_| Error::Format("bad table size".into()))?;
    let gamma: f64 = parts[3]
        .parse()
        .map_err(|_| Error::Format("bad discount".into()))?;
    let mut v = Vec::with_capacity(n * n);
    for line in lines.take(n) {
        let line = line?;
        for tok in line.split_whitespace() {
            v.push(tok.parse::<f64>().map_err(|_| Error::Format("bad value entry".into()))?);
        }
    }
    if v.len() != n * n {
        return Err(Error::Format(format!("expected {} entries, got {}", n * n, v.len())));
    }
    let v_target = v.clone();
    Ok((ValueTable { n, v, v_target, updates: 0 }, maze_hash, gamma))
}

/// Shortest round-trippable decimal representation (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ValueBatchItem;
    use crate::env::{parse_maze, Action, Cell};

    fn open3x3() -> GridWorld {
        parse_maze("...\n...\n...").unwrap()
    }

    #[test]
    fn reward_is_two_valued() {
        assert_eq!(reward(Cell(0), Cell(0)), 0.0);
        assert_eq!(reward(Cell(0), Cell(1)), -1.0);
        assert_eq!(reward(Cell(5), Cell(2)), -1.0);
    }

    #[test]
    fn expectile_loss_formula() {
        assert!((expectile_loss(1.0, 0.7) - 0.7).abs() < 1e-15);
        assert!((expectile_loss(-1.0, 0.7) - 0.3).abs() < 1e-15);
        for tau in [0.5, 0.7, 0.9, 0.99] {
            assert_eq!(expectile_loss(0.0, tau), 0.0);
        }
    }

    #[test]
    fn expectile_symmetry_identity() {
        // complementary asymmetric weights sum to 1: l_tau(x) + l_{1-tau}(x) = x^2
        let mut x = -3.7;
        while x < 4.0 {
            for tau in [0.5, 0.6, 0.8, 0.95] {
                let lhs = expectile_loss(x, tau) + expectile_loss(x, 1.0 - tau);
                assert!((lhs - x * x).abs() < 1e-12);
            }
            x += 0.31;
        }
    }

    #[test]
    fn expectile_monotone_in_tau() {
        let x = 1.3;
        assert!(expectile_loss(x, 0.9) > expectile_loss(x, 0.6));
        assert!(expectile_loss(-x, 0.9) < expectile_loss(-x, 0.6));
    }

    #[test]
    fn q_bar_absorbing_and_adjacent() {
        let env = open3x3();
        let v = ValueTable::new(&env, 0.0);
        let g = Cell::from_rc(0, 1, 3);
        // s = g: absorbing
        assert_eq!(q_bar(&v, &env, g, Action::Left, g, 0.99).unwrap(), 0.0);
        // adjacent, moving onto goal with zero target values: -1
        let s = Cell::from_rc(1, 1, 3);
        assert_eq!(q_bar(&v, &env, s, Action::Up, g, 0.99).unwrap(), -1.0);
        // all-zero target: -1 for every action when s != g
        for a in crate::env::ACTIONS {
            assert_eq!(q_bar(&v, &env, s, a, g, 0.99).unwrap(), -1.0);
        }
    }

    #[test]
    fn update_fixed_point_at_goal() {
        let env = open3x3();
        let mut v = ValueTable::new(&env, 0.0);
        let g = Cell(4);
        let batch = vec![ValueBatchItem { s: g, a: Action::Stay, s_next: g, g }; 8];
        let hp = Hyperparams::default();
        let loss = gcivl_update(&mut v, &env, &batch, &hp).unwrap();
        assert_eq!(loss, 0.0);
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn symmetric_expectile_converges_to_backup() {
        let env = open3x3();
        let mut v = ValueTable::new(&env, 0.0);
        let s = Cell::from_rc(0, 0, 3);
        let g = Cell::from_rc(2, 2, 3);
        let s_next = env.step(s, Action::Right).unwrap();
        let item = ValueBatchItem { s, a: Action::Right, s_next, g };
        let hp = Hyperparams { tau: 0.5, lr_v: 0.5, target_period: usize::MAX, ..Default::default() };
        let target = q_bar(&v, &env, s, Action::Right, g, hp.gamma).unwrap();
        for _ in 0..200 {
            gcivl_update(&mut v, &env, &[item], &hp).unwrap();
        }
        assert!((v.get(&env, s, g).unwrap() - target).abs() < 1e-9);
    }

    #[test]
    fn diagonal_stays_pinned_after_updates() {
        let env = open3x3();
        let mut v = ValueTable::new(&env, -1.0);
        let d = crate::dataset::generate_dataset(&env, crate::dataset::DatasetMode::Navigate, 20, 30, 0.5, 1).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let hp = Hyperparams::default();
        for _ in 0..50 {
            let batch =
                crate::dataset::sample_value_batch(&d, hp.gamma, Default::default(), 64, &mut rng)
                    .unwrap();
            gcivl_update(&mut v, &env, &batch, &hp).unwrap();
        }
        for i in 0..v.n() {
            assert_eq!(v.get_idx(i, i), 0.0);
        }
        assert!(v.is_finite());
    }

    #[test]
    fn value_table_roundtrip() {
        let env = open3x3();
        let mut v = ValueTable::new(&env, 0.0);
        v.set_idx(0, 3, -1.234567890123456);
        v.set_idx(5, 1, -0.1);
        let mut bytes = Vec::new();
        write_value_table(&v, "abc", 0.99, &mut bytes).unwrap();
        let (back, hash, gamma) = read_value_table(&bytes[..]).unwrap();
        assert_eq!(hash, "abc");
        assert_eq!(gamma, 0.99);
        assert_eq!(back.values(), v.values());
    }
}

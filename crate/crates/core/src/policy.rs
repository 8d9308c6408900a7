//! Tabular softmax policies and the policy-extraction objective family:
//! goal-conditioned behavior cloning, advantage-weighted regression, the
//! bilevel subgoal hierarchy, waypoint advantage estimation, subgoal-generator
//! bootstrapping, and subgoal advantage-weighted bootstrapping. Every update
//! has an analytic gradient checked against finite differences in the tests.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::dataset::{sample_policy_batch, Dataset, PolicyBatchItem, PolicyGoalConfig};
use crate::env::{Cell, GridWorld, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::value::{fmt_f64, q_bar, Hyperparams, ValueTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyRole {
    /// pi(a | s, g): flat action policy conditioned on the final goal.
    Flat,
    /// pi(a | s, w): subpolicy conditioned on a nearby subgoal.
    Sub,
    /// pi(w | s, g): high-level policy whose output space is the free cells.
    High,
}

impl PolicyRole {
    fn tag(self) -> &'static str {
        match self {
            PolicyRole::Flat => "flat",
            PolicyRole::Sub => "sub",
            PolicyRole::High => "high",
        }
    }

    fn from_tag(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(PolicyRole::Flat),
            "sub" => Ok(PolicyRole::Sub),
            "high" => Ok(PolicyRole::High),
            other => Err(Error::Format(format!("unknown policy role {other:?}"))),
        }
    }
}

/// Softmax policy logits indexed by (state, conditioning cell, output).
/// Probabilities are always recomputed from logits, so normalization cannot
/// drift.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    role: PolicyRole,
    n_states: usize,
    n_cond: usize,
    n_out: usize,
    logits: Vec<f64>,
}

impl PolicyTable {
    pub fn new_flat(env: &GridWorld) -> Self {
        let n = env.num_free();
        PolicyTable {
            role: PolicyRole::Flat,
            n_states: n,
            n_cond: n,
            n_out: NUM_ACTIONS,
            logits: vec![0.0; n * n * NUM_ACTIONS],
        }
    }

    pub fn new_sub(env: &GridWorld) -> Self {
        PolicyTable { role: PolicyRole::Sub, ..Self::new_flat(env) }
    }

    pub fn new_high(env: &GridWorld) -> Self {
        let n = env.num_free();
        PolicyTable {
            role: PolicyRole::High,
            n_states: n,
            n_cond: n,
            n_out: n,
            logits: vec![0.0; n * n * n],
        }
    }

    pub fn role(&self) -> PolicyRole {
        self.role
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn row_offset(&self, si: usize, ci: usize) -> usize {
        (si * self.n_cond + ci) * self.n_out
    }

    pub fn row(&self, si: usize, ci: usize) -> &[f64] {
        let off = self.row_offset(si, ci);
        &self.logits[off..off + self.n_out]
    }

    /// Numerically stable log-softmax of one row.
    pub fn log_probs(&self, si: usize, ci: usize) -> Vec<f64> {
        log_softmax(self.row(si, ci))
    }

    pub fn probs(&self, si: usize, ci: usize) -> Vec<f64> {
        let mut lp = self.log_probs(si, ci);
        for x in &mut lp {
            *x = x.exp();
        }
        lp
    }

    pub fn log_prob(&self, si: usize, ci: usize, i: usize) -> f64 {
        self.log_probs(si, ci)[i]
    }

    /// Lowest index wins ties, so argmax selection is deterministic.
    pub fn argmax(&self, si: usize, ci: usize) -> usize {
        let row = self.row(si, ci);
        let mut best = 0;
        for (i, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = i;
            }
        }
        best
    }

    pub fn sample<R: Rng>(&self, si: usize, ci: usize, rng: &mut R) -> usize {
        let p = self.probs(si, ci);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        p.len() - 1
    }

    pub fn is_finite(&self) -> bool {
        self.logits.iter().all(|x| x.is_finite())
    }

    pub fn randomize<R: Rng>(&mut self, scale: f64, rng: &mut R) {
        for x in &mut self.logits {
            *x = scale * (rng.gen::<f64>() * 2.0 - 1.0);
        }
    }
}

pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

/// KL divergence between categoricals with the 0 log 0 = 0 convention.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            kl += pi * (pi.ln() - qi.ln());
        }
    }
    kl
}

/// One-step advantage A(s, a, g) = q_bar(s, a, g) - V(s, g).
pub fn action_advantage(
    v: &ValueTable,
    env: &GridWorld,
    s: Cell,
    a: crate::env::Action,
    g: Cell,
    gamma: f64,
) -> Result<f64> {
    Ok(q_bar(v, env, s, a, g, gamma)? - v.get_idx(env.free_index(s)?, env.free_index(g)?))
}

/// Simplified multi-step subgoal advantage V(w, g) - V(s, g); the k-step
/// discount and reward sum are folded into the inverse temperature.
pub fn subgoal_advantage(v: &ValueTable, env: &GridWorld, s: Cell, w: Cell, g: Cell) -> Result<f64> {
    let gi = env.free_index(g)?;
    Ok(v.get_idx(env.free_index(w)?, gi) - v.get_idx(env.free_index(s)?, gi))
}

fn clip_weight(x: f64, w_max: f64) -> f64 {
    x.min(w_max)
}

/// Sparse loss gradient: (flat logit index, d loss / d logit).
pub type Grads = Vec<(usize, f64)>;

/// Apply a sparse gradient as a descent step, in deterministic index order.
pub fn apply_grads(p: &mut PolicyTable, mut grads: Grads, lr: f64) {
    grads.sort_by_key(|&(idx, _)| idx);
    for (idx, g) in grads {
        p.logits[idx] -= lr * g;
    }
}

/// Weighted negative-log-likelihood term shared by the behavior-cloning and
/// advantage-weighted objectives. Accumulates into `loss`/`grads` with the
/// batch scale applied by the caller.
fn accumulate_weighted_nll(
    p: &PolicyTable,
    si: usize,
    ci: usize,
    out: usize,
    weight: f64,
    scale: f64,
    loss: &mut f64,
    grads: &mut Grads,
) {
    let lp = p.log_probs(si, ci);
    *loss -= weight * lp[out] * scale;
    let off = p.row_offset(si, ci);
    for j in 0..p.n_out {
        let onehot = if j == out { 1.0 } else { 0.0 };
        grads.push((off + j, weight * (lp[j].exp() - onehot) * scale));
    }
}

/// KL(pi_theta(. | row) || target) term with gradient on the learner row only.
/// d KL / d logit_j = p_j * ((log p_j - log q_j) - KL).
fn accumulate_weighted_kl(
    p: &PolicyTable,
    si: usize,
    ci: usize,
    target_log_probs: &[f64],
    weight: f64,
    scale: f64,
    loss: &mut f64,
    grads: &mut Grads,
) {
    let lp = p.log_probs(si, ci);
    let mut kl = 0.0;
    for j in 0..p.n_out {
        kl += lp[j].exp() * (lp[j] - target_log_probs[j]);
    }
    *loss += weight * kl * scale;
    let off = p.row_offset(si, ci);
    for j in 0..p.n_out {
        let pj = lp[j].exp();
        grads.push((off + j, weight * pj * ((lp[j] - target_log_probs[j]) - kl) * scale));
    }
}

/// Behavior cloning with hindsight-relabeled goals: mean NLL of dataset
/// actions.
pub fn gcbc_loss_grad(
    p: &PolicyTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
) -> Result<(f64, Grads)> {
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(batch.len() * NUM_ACTIONS);
    for item in batch {
        let si = env.free_index(item.s)?;
        let gi = env.free_index(item.g)?;
        accumulate_weighted_nll(p, si, gi, item.a.index(), 1.0, scale, &mut loss, &mut grads);
    }
    Ok((loss, grads))
}

pub fn gcbc_update(
    p: &mut PolicyTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    lr: f64,
) -> Result<f64> {
    let (loss, grads) = gcbc_loss_grad(p, env, batch)?;
    apply_grads(p, grads, lr);
    Ok(loss)
}

/// NLL weighted by the clipped exponentiated one-step advantage. With
/// `alpha = 0` the weight is exactly 1 and the update coincides with GCBC.
pub fn awr_loss_grad(
    p: &PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    hp: &Hyperparams,
) -> Result<(f64, Grads)> {
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(batch.len() * NUM_ACTIONS);
    for item in batch {
        let si = env.free_index(item.s)?;
        let gi = env.free_index(item.g)?;
        let adv = action_advantage(v, env, item.s, item.a, item.g, hp.gamma)?;
        let w = clip_weight((hp.alpha * adv).exp(), hp.w_max);
        accumulate_weighted_nll(p, si, gi, item.a.index(), w, scale, &mut loss, &mut grads);
    }
    Ok((loss, grads))
}

pub fn awr_update(
    p: &mut PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    hp: &Hyperparams,
) -> Result<f64> {
    let (loss, grads) = awr_loss_grad(p, v, env, batch, hp)?;
    apply_grads(p, grads, lr_of(hp));
    Ok(loss)
}

fn lr_of(hp: &Hyperparams) -> f64 {
    hp.lr_pi
}

/// AWR on the subpolicy: the conditioning cell is the k-step subgoal `w` and
/// advantages are measured with respect to it.
pub fn sub_awr_loss_grad(
    p: &PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    hp: &Hyperparams,
) -> Result<(f64, Grads)> {
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(batch.len() * NUM_ACTIONS);
    for item in batch {
        let si = env.free_index(item.s)?;
        let wi = env.free_index(item.w)?;
        let adv = action_advantage(v, env, item.s, item.a, item.w, hp.gamma)?;
        let weight = clip_weight((hp.alpha * adv).exp(), hp.w_max);
        accumulate_weighted_nll(p, si, wi, item.a.index(), weight, scale, &mut loss, &mut grads);
    }
    Ok((loss, grads))
}

/// High-level AWR: the k-step subgoal is the "action", weighted by the
/// exponentiated subgoal advantage with inverse temperature `hp.beta`.
pub fn high_awr_loss_grad(
    p_high: &PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    hp: &Hyperparams,
) -> Result<(f64, Grads)> {
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(batch.len() * 8);
    for item in batch {
        let si = env.free_index(item.s)?;
        let wi = env.free_index(item.w)?;
        let gi = env.free_index(item.g)?;
        let adv = subgoal_advantage(v, env, item.s, item.w, item.g)?;
        let weight = clip_weight((hp.beta * adv).exp(), hp.w_max);
        accumulate_weighted_nll(p_high, si, gi, wi, weight, scale, &mut loss, &mut grads);
    }
    Ok((loss, grads))
}

pub fn high_awr_update(
    p_high: &mut PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    hp: &Hyperparams,
) -> Result<f64> {
    let (loss, grads) = high_awr_loss_grad(p_high, v, env, batch, hp)?;
    apply_grads(p_high, grads, lr_of(hp));
    Ok(loss)
}

/// Bilevel update: low level imitates dataset actions toward the k-step
/// subgoal, high level imitates the k-step subgoal as its "action" toward the
/// final goal, both advantage-weighted.
pub fn hiql_loss_grad(
    p_high: &PolicyTable,
    p_low: &PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    hp: &Hyperparams,
) -> Result<(f64, Grads, f64, Grads)> {
    let (loss_h, grads_h) = high_awr_loss_grad(p_high, v, env, batch, hp)?;
    let (loss_l, grads_l) = sub_awr_loss_grad(p_low, v, env, batch, hp)?;
    Ok((loss_h, grads_h, loss_l, grads_l))
}

pub fn hiql_update(
    p_high: &mut PolicyTable,
    p_low: &mut PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    hp: &Hyperparams,
) -> Result<(f64, f64)> {
    let (loss_h, grads_h, loss_l, grads_l) = hiql_loss_grad(p_high, p_low, v, env, batch, hp)?;
    apply_grads(p_high, grads_h, lr_of(hp));
    apply_grads(p_low, grads_l, lr_of(hp));
    Ok((loss_h, loss_l))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Argmax,
    Sample,
}

/// Hierarchical action selection: draw a subgoal from the high level, then an
/// action from the low level conditioned on it.
pub fn hiql_act<R: Rng>(
    p_high: &PolicyTable,
    p_low: &PolicyTable,
    env: &GridWorld,
    s: Cell,
    g: Cell,
    mode: ActMode,
    rng: &mut R,
) -> Result<crate::env::Action> {
    let si = env.free_index(s)?;
    let gi = env.free_index(g)?;
    let wi = match mode {
        ActMode::Argmax => p_high.argmax(si, gi),
        ActMode::Sample => p_high.sample(si, gi, rng),
    };
    let ai = match mode {
        ActMode::Argmax => p_low.argmax(si, wi),
        ActMode::Sample => p_low.sample(si, wi, rng),
    };
    crate::env::Action::from_index(ai)
}

/// Sample an imagined subgoal from a frozen high-level policy for each batch
/// item. Exposed so callers can pin the draws when comparing updates.
pub fn imagine_subgoals<R: Rng>(
    p_high: &PolicyTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    rng: &mut R,
) -> Result<Vec<Cell>> {
    batch
        .iter()
        .map(|item| {
            let si = env.free_index(item.s)?;
            let gi = env.free_index(item.g)?;
            Ok(env.free_cells()[p_high.sample(si, gi, rng)])
        })
        .collect()
}

/// Flat AWR whose action advantages are measured against imagined subgoals
/// (drawn from a frozen high-level policy) instead of the true goal.
pub fn gcwae_loss_grad(
    p: &PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    imagined: &[Cell],
    hp: &Hyperparams,
) -> Result<(f64, Grads)> {
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(batch.len() * NUM_ACTIONS);
    for (item, &w) in batch.iter().zip(imagined) {
        let si = env.free_index(item.s)?;
        let gi = env.free_index(item.g)?;
        let adv = action_advantage(v, env, item.s, item.a, w, hp.gamma)?;
        let weight = clip_weight((hp.alpha * adv).exp(), hp.w_max);
        accumulate_weighted_nll(p, si, gi, item.a.index(), weight, scale, &mut loss, &mut grads);
    }
    Ok((loss, grads))
}

pub fn gcwae_update<R: Rng>(
    p: &mut PolicyTable,
    p_high: &PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<f64> {
    let imagined = imagine_subgoals(p_high, env, batch, rng)?;
    let (loss, grads) = gcwae_loss_grad(p, v, env, batch, &imagined, hp)?;
    apply_grads(p, grads, lr_of(hp));
    Ok(loss)
}

/// One-step AWR plus a fixed-coefficient divergence toward the frozen
/// subpolicy conditioned on imagined subgoals.
pub fn ris_loss_grad(
    p: &PolicyTable,
    p_sub: &PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    imagined: &[Cell],
    hp: &Hyperparams,
) -> Result<(f64, Grads)> {
    let (mut loss, mut grads) = awr_loss_grad(p, v, env, batch, hp)?;
    if hp.beta_ris > 0.0 {
        let scale = 1.0 / batch.len() as f64;
        for (item, &w) in batch.iter().zip(imagined) {
            let si = env.free_index(item.s)?;
            let gi = env.free_index(item.g)?;
            let wi = env.free_index(w)?;
            let target_lp = p_sub.log_probs(si, wi);
            accumulate_weighted_kl(p, si, gi, &target_lp, hp.beta_ris, scale, &mut loss, &mut grads);
        }
    }
    Ok((loss, grads))
}

pub fn ris_update<R: Rng>(
    p: &mut PolicyTable,
    p_high: &PolicyTable,
    p_sub: &PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<f64> {
    let imagined = imagine_subgoals(p_high, env, batch, rng)?;
    let (loss, grads) = ris_loss_grad(p, p_sub, v, env, batch, &imagined, hp)?;
    apply_grads(p, grads, lr_of(hp));
    Ok(loss)
}

/// Options for the subgoal advantage-weighted bootstrapping objective.
#[derive(Debug, Clone, Copy)]
pub struct SawOptions {
    /// Include the one-step AWR term (disabled for the bootstrap-only ablation).
    pub use_one_step: bool,
}

impl Default for SawOptions {
    fn default() -> Self {
        SawOptions { use_one_step: true }
    }
}

/// Full objective: clipped exp(alpha * A(s, a, g)) weighted log-likelihood
/// plus clipped exp(beta * (V(w, g) - V(s, g))) weighted divergence toward the
/// frozen subpolicy conditioned on the real in-trajectory subgoal `w`.
/// `beta = 0` disables the bootstrapping term (the sweep/reduction convention),
/// making the update identical to plain AWR.
pub fn saw_loss_grad(
    p: &PolicyTable,
    p_sub: &PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    hp: &Hyperparams,
    opts: SawOptions,
) -> Result<(f64, Grads)> {
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(batch.len() * 2 * NUM_ACTIONS);
    for item in batch {
        let si = env.free_index(item.s)?;
        let gi = env.free_index(item.g)?;
        if opts.use_one_step {
            let adv = action_advantage(v, env, item.s, item.a, item.g, hp.gamma)?;
            let w_alpha = clip_weight((hp.alpha * adv).exp(), hp.w_max);
            accumulate_weighted_nll(p, si, gi, item.a.index(), w_alpha, scale, &mut loss, &mut grads);
        }
        if hp.beta > 0.0 {
            let wi = env.free_index(item.w)?;
            let adv_w = subgoal_advantage(v, env, item.s, item.w, item.g)?;
            let w_beta = clip_weight((hp.beta * adv_w).exp(), hp.w_max);
            let target_lp = p_sub.log_probs(si, wi);
            accumulate_weighted_kl(p, si, gi, &target_lp, w_beta, scale, &mut loss, &mut grads);
        }
    }
    Ok((loss, grads))
}

pub fn saw_update(
    p: &mut PolicyTable,
    p_sub: &PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    batch: &[PolicyBatchItem],
    hp: &Hyperparams,
    opts: SawOptions,
) -> Result<f64> {
    let (loss, grads) = saw_loss_grad(p, p_sub, v, env, batch, hp, opts)?;
    apply_grads(p, grads, lr_of(hp));
    Ok(loss)
}

/// Statistics logged while training the subpolicy: the sampling-quality
/// diagnostic compares mean action advantages under k-step subgoals versus
/// uniform in-trajectory future goals.
#[derive(Debug, Clone, Copy, Default)]
pub struct SubpolicyStats {
    pub mean_adv_subgoal: f64,
    pub mean_adv_future_goal: f64,
    pub final_loss: f64,
}

/// Train the subpolicy with AWR on k-step subgoals and freeze it (the caller
/// keeps the returned table immutable afterwards). `on_step` receives
/// (step, loss, batch mean advantage wrt subgoal, wrt uniform-future goal).
pub fn subpolicy_train<R: Rng>(
    p_sub: &mut PolicyTable,
    v: &ValueTable,
    env: &GridWorld,
    d: &Dataset,
    hp: &Hyperparams,
    rng: &mut R,
    mut on_step: impl FnMut(usize, f64, f64, f64),
) -> Result<SubpolicyStats> {
    let mut stats = SubpolicyStats::default();
    let mut adv_sub_sum = 0.0;
    let mut adv_fut_sum = 0.0;
    let mut count = 0usize;
    for step in 1..=hp.steps_sub {
        let batch = sample_policy_batch(d, hp.k, PolicyGoalConfig::default(), hp.batch_size, rng)?;
        let mut batch_sub = 0.0;
        let mut batch_fut = 0.0;
        for item in &batch {
            batch_sub += action_advantage(v, env, item.s, item.a, item.w, hp.gamma)?;
            batch_fut += action_advantage(v, env, item.s, item.a, item.g, hp.gamma)?;
        }
        adv_sub_sum += batch_sub;
        adv_fut_sum += batch_fut;
        count += batch.len();
        let (loss, grads) = sub_awr_loss_grad(p_sub, v, env, &batch, hp)?;
        apply_grads(p_sub, grads, lr_of(hp));
        stats.final_loss = loss;
        if !loss.is_finite() {
            return Err(Error::NumericalAbort("subpolicy loss diverged".into()));
        }
        on_step(step, loss, batch_sub / batch.len() as f64, batch_fut / batch.len() as f64);
    }
    stats.mean_adv_subgoal = adv_sub_sum / count as f64;
    stats.mean_adv_future_goal = adv_fut_sum / count as f64;
    Ok(stats)
}

/// Serialize logits as a text matrix with a role-tagged header.
pub fn write_policy_table<W: Write>(p: &PolicyTable, maze_hash: &str, mut out: W) -> Result<()> {
    writeln!(
        out,
        "policytable {} {maze_hash} {} {} {}",
        p.role.tag(),
        p.n_states,
        p.n_cond,
        p.n_out
    )?;
    for si in 0..p.n_states {
        for ci in 0..p.n_cond {
            let row: Vec<String> = p.row(si, ci).iter().map(|&x| fmt_f64(x)).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
    }
    Ok(())
}

pub fn read_policy_table<R: BufRead>(input: R) -> Result<(PolicyTable, String)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("missing policy table header".into()))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 || parts[0] != "policytable" {
        return Err(Error::Format("bad policy table header".into()));
    }
    let role = PolicyRole::from_tag(parts[1])?;
    let maze_hash = parts[2].to_string();
    let dims: Vec<usize> = parts[3..6]
        .iter()
        .map(|s| s.parse().map_err(|_| Error::Format("bad policy table dims".into())))
        .collect::<Result<_>>()?;
    let (n_states, n_cond, n_out) = (dims[0], dims[1], dims[2]);
    let mut logits = Vec::with_capacity(n_states * n_cond * n_out);
    for line in lines {
        let line = line?;
        for tok in line.split_whitespace() {
            logits.push(tok.parse::<f64>().map_err(|_| Error::Format("bad logit".into()))?);
        }
    }
    if logits.len() != n_states * n_cond * n_out {
        return Err(Error::Format("policy table size mismatch".into()));
    }
    Ok((PolicyTable { role, n_states, n_cond, n_out, logits }, maze_hash))
}

//! Experiment orchestration: the strictly sequential training phases
//! (value, subpolicy, policy), metrics logging, periodic evaluation, sweeps,
//! and deterministic artifact emission.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{as_map, is_sweepable, Algo, ExperimentConfig};
use crate::dataset::{
    generate_dataset, maze_hash, read_jsonl, sample_policy_batch, sample_value_batch, write_jsonl,
    Dataset,
};
use crate::env::GridWorld;
use crate::error::{Error, Result};
use crate::eval::{builtin_tasks, evaluate, flat_selector, hier_selector, EvalResult, TaskSet};
use crate::policy::{
    apply_grads, awr_update, gcbc_update, gcwae_loss_grad, hiql_update, high_awr_update,
    imagine_subgoals, ris_update, saw_update, subgoal_advantage, subpolicy_train, ActMode,
    PolicyTable, SawOptions,
};
use crate::value::{fmt_f64, gcivl_update, write_value_table, ValueTable};
use crate::policy::{action_advantage, write_policy_table};

pub const METRICS_PERIOD: usize = 100;
pub const EVAL_PERIOD: usize = 2000;

#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub phase: &'static str,
    pub step: usize,
    pub loss: f64,
    pub mean_action_adv: f64,
    pub mean_subgoal_adv: f64,
    pub eval_success: Option<f64>,
}

impl MetricsRow {
    fn check_finite(&self) -> Result<()> {
        let finite = self.loss.is_finite()
            && self.mean_action_adv.is_finite()
            && self.mean_subgoal_adv.is_finite()
            && self.eval_success.map_or(true, f64::is_finite);
        if finite {
            Ok(())
        } else {
            Err(Error::NumericalAbort(format!(
                "non-finite metrics at {} step {}",
                self.phase, self.step
            )))
        }
    }
}

/// Advantage diagnostics aggregated over the run: mean one-step action
/// advantage measured against real k-step subgoals, against uniform future
/// goals, and (when imagined subgoals are used) against imagined subgoals.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Diagnostics {
    pub mean_adv_subgoal: Option<f64>,
    pub mean_adv_future: Option<f64>,
    pub mean_adv_imagined: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub algo: Algo,
    pub maze: String,
    pub seed: u64,
    pub eval: EvalResult,
    pub metrics: Vec<MetricsRow>,
    pub diag: Diagnostics,
}

struct Tables {
    v: Option<ValueTable>,
    p_flat: Option<PolicyTable>,
    p_sub: Option<PolicyTable>,
    p_high: Option<PolicyTable>,
    p_low: Option<PolicyTable>,
}

fn eval_success_now(
    env: &GridWorld,
    algo: Algo,
    t: &Tables,
    tasks: &TaskSet,
    mode: ActMode,
    seed: u64,
    step: usize,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(step as u64));
    let r = match algo {
        Algo::Hiql => {
            let (ph, pl) = (t.p_high.as_ref().unwrap(), t.p_low.as_ref().unwrap());
            evaluate(env, hier_selector(ph, pl, mode), tasks, seed, &mut rng)?
        }
        _ => {
            let p = t.p_flat.as_ref().unwrap();
            evaluate(env, flat_selector(p, mode), tasks, seed, &mut rng)?
        }
    };
    Ok(r.success_rate)
}

fn load_or_generate_dataset(cfg: &ExperimentConfig, env: &GridWorld, seed: u64) -> Result<Dataset> {
    match &cfg.dataset.path {
        Some(path) => {
            let file = fs::File::open(path)?;
            let d = read_jsonl(BufReader::new(file))?;
            if d.meta.maze_hash != maze_hash(env) {
                return Err(Error::Config(format!(
                    "dataset {path:?} was collected on a different maze"
                )));
            }
            Ok(d)
        }
        None => {
            let max_len = match cfg.dataset.mode {
                crate::dataset::DatasetMode::Stitch => {
                    crate::dataset::stitch_cap(cfg.dataset.max_len, cfg.hp.k)
                }
                crate::dataset::DatasetMode::Navigate => cfg.dataset.max_len,
            };
            generate_dataset(
                env,
                cfg.dataset.mode,
                cfg.dataset.n_traj,
                max_len,
                cfg.dataset.epsilon,
                cfg.dataset.seed.wrapping_add(seed),
            )
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::new_with_prefix(bytes).finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Run one experiment end to end for one seed. Artifacts are written under
/// `out` when provided; the summary carries everything the files contain.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    seed: u64,
    out: Option<&Path>,
) -> Result<RunSummary> {
    cfg.validate()?;
    let env = cfg.load_maze()?;
    let d = load_or_generate_dataset(cfg, &env, seed)?;
    let mut tasks = builtin_tasks(&env, cfg.eval.episodes_per_pair)?;
    if let Some(ms) = cfg.eval.max_steps {
        tasks.max_steps = ms;
        tasks.validate(&env)?;
    }
    let hp = &cfg.hp;
    let algo = cfg.algo;
    let mode = cfg.eval.mode;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<MetricsRow> = Vec::new();
    let push_row = |rows: &mut Vec<MetricsRow>, row: MetricsRow| -> Result<()> {
        row.check_finite()?;
        rows.push(row);
        Ok(())
    };

    let mut tables = Tables { v: None, p_flat: None, p_sub: None, p_high: None, p_low: None };

    // ---- phase 1: value ----
    if algo != Algo::Gcbc {
        let mut v = ValueTable::new(&env, hp.v_init);
        for step in 1..=hp.steps_value {
            let batch = sample_value_batch(&d, hp.gamma, cfg.mix, hp.batch_size, &mut rng)?;
            let loss = gcivl_update(&mut v, &env, &batch, hp)?;
            if !loss.is_finite() || !v.is_finite() {
                return Err(Error::NumericalAbort(format!("value loss diverged at step {step}")));
            }
            if step % METRICS_PERIOD == 0 {
                push_row(
                    &mut rows,
                    MetricsRow {
                        phase: "value",
                        step,
                        loss,
                        mean_action_adv: 0.0,
                        mean_subgoal_adv: 0.0,
                        eval_success: None,
                    },
                )?;
            }
        }
        v.hard_update_target();
        tables.v = Some(v);
    }

    // ---- phase 2: subpolicy / high-level policy ----
    let mut diag = Diagnostics::default();
    let needs_sub = matches!(algo, Algo::Saw | Algo::Ris);
    let needs_high = matches!(algo, Algo::Gcwae | Algo::Ris);
    if needs_sub {
        let v = tables.v.as_ref().unwrap();
        let mut p_sub = PolicyTable::new_sub(&env);
        let mut sub_rows: Vec<MetricsRow> = Vec::new();
        let stats = subpolicy_train(
            &mut p_sub,
            v,
            &env,
            &d,
            hp,
            &mut rng,
            |step, loss, adv_sub, adv_fut| {
                if step % METRICS_PERIOD == 0 {
                    sub_rows.push(MetricsRow {
                        phase: "subpolicy",
                        step,
                        loss,
                        mean_action_adv: adv_fut,
                        mean_subgoal_adv: adv_sub,
                        eval_success: None,
                    });
                }
            },
        )?;
        for row in sub_rows {
            push_row(&mut rows, row)?;
        }
        diag.mean_adv_subgoal = Some(stats.mean_adv_subgoal);
        diag.mean_adv_future = Some(stats.mean_adv_future_goal);
        tables.p_sub = Some(p_sub);
    }
    if needs_high {
        let v = tables.v.as_ref().unwrap();
        let mut p_high = PolicyTable::new_high(&env);
        for step in 1..=hp.steps_sub {
            let batch =
                sample_policy_batch(&d, hp.k, cfg.policy_goals, hp.batch_size, &mut rng)?;
            let loss = high_awr_update(&mut p_high, v, &env, &batch, hp)?;
            if !loss.is_finite() {
                return Err(Error::NumericalAbort(format!(
                    "high-level loss diverged at step {step}"
                )));
            }
            if step % METRICS_PERIOD == 0 {
                push_row(
                    &mut rows,
                    MetricsRow {
                        phase: "subpolicy",
                        step,
                        loss,
                        mean_action_adv: 0.0,
                        mean_subgoal_adv: 0.0,
                        eval_success: None,
                    },
                )?;
            }
        }
        tables.p_high = Some(p_high);
    }

    // snapshots: the policy phase must not touch earlier-phase tables
    let v_snapshot = tables.v.as_ref().map(|v| v.values().to_vec());
    let sub_snapshot = tables.p_sub.as_ref().map(|p| p.logits().to_vec());
    let high_snapshot = tables.p_high.as_ref().map(|p| p.logits().to_vec());

    // ---- phase 3: policy ----
    if algo == Algo::Hiql {
        tables.p_high = Some(PolicyTable::new_high(&env));
        tables.p_low = Some(PolicyTable::new_sub(&env));
    } else {
        tables.p_flat = Some(PolicyTable::new_flat(&env));
    }
    let zero_v = ValueTable::new(&env, 0.0); // advantage logging for GCBC
    let mut imagined_adv_sum = 0.0;
    let mut imagined_count = 0usize;
    for step in 1..=hp.steps_policy {
        let batch = sample_policy_batch(&d, hp.k, cfg.policy_goals, hp.batch_size, &mut rng)?;
        let v = tables.v.as_ref().unwrap_or(&zero_v);
        let loss = match algo {
            Algo::Gcbc => gcbc_update(tables.p_flat.as_mut().unwrap(), &env, &batch, hp.lr_pi)?,
            Algo::GcivlAwr => awr_update(tables.p_flat.as_mut().unwrap(), v, &env, &batch, hp)?,
            Algo::Hiql => {
                let (lh, ll) = hiql_update(
                    tables.p_high.as_mut().unwrap(),
                    tables.p_low.as_mut().unwrap(),
                    v,
                    &env,
                    &batch,
                    hp,
                )?;
                lh + ll
            }
            Algo::Gcwae => {
                let p_high = tables.p_high.as_ref().unwrap();
                let imagined = imagine_subgoals(p_high, &env, &batch, &mut rng)?;
                for (item, &w) in batch.iter().zip(&imagined) {
                    imagined_adv_sum +=
                        action_advantage(v, &env, item.s, item.a, w, hp.gamma)?;
                }
                imagined_count += batch.len();
                let (loss, grads) = gcwae_loss_grad(
                    tables.p_flat.as_ref().unwrap(),
                    v,
                    &env,
                    &batch,
                    &imagined,
                    hp,
                )?;
                apply_grads(tables.p_flat.as_mut().unwrap(), grads, hp.lr_pi);
                loss
            }
            Algo::Ris => {
                // split borrows: clone the frozen tables' references via raw options
                let p_high = tables.p_high.take().unwrap();
                let p_sub = tables.p_sub.take().unwrap();
                let loss = ris_update(
                    tables.p_flat.as_mut().unwrap(),
                    &p_high,
                    &p_sub,
                    v,
                    &env,
                    &batch,
                    hp,
                    &mut rng,
                )?;
                tables.p_high = Some(p_high);
                tables.p_sub = Some(p_sub);
                loss
            }
            Algo::Saw => {
                let p_sub = tables.p_sub.take().unwrap();
                let loss = saw_update(
                    tables.p_flat.as_mut().unwrap(),
                    &p_sub,
                    v,
                    &env,
                    &batch,
                    hp,
                    SawOptions { use_one_step: cfg.saw_use_one_step },
                )?;
                tables.p_sub = Some(p_sub);
                loss
            }
        };
        if !loss.is_finite() {
            return Err(Error::NumericalAbort(format!("policy loss diverged at step {step}")));
        }
        if step % METRICS_PERIOD == 0 {
            let mut a_sum = 0.0;
            let mut w_sum = 0.0;
            for item in &batch {
                a_sum += action_advantage(v, &env, item.s, item.a, item.g, hp.gamma)?;
                w_sum += subgoal_advantage(v, &env, item.s, item.w, item.g)?;
            }
            let eval_success = if step % EVAL_PERIOD == 0 {
                Some(eval_success_now(&env, algo, &tables, &tasks, mode, seed, step)?)
            } else {
                None
            };
            push_row(
                &mut rows,
                MetricsRow {
                    phase: "policy",
                    step,
                    loss,
                    mean_action_adv: a_sum / batch.len() as f64,
                    mean_subgoal_adv: w_sum / batch.len() as f64,
                    eval_success,
                },
            )?;
        }
    }
    if imagined_count > 0 {
        diag.mean_adv_imagined = Some(imagined_adv_sum / imagined_count as f64);
        // pair with the real-subgoal and future-goal advantage means over the
        // same policy-phase sampling distribution (from the metrics rows)
        let policy_rows: Vec<&MetricsRow> =
            rows.iter().filter(|r| r.phase == "policy").collect();
        let n = policy_rows.len() as f64;
        if n > 0.0 {
            diag.mean_adv_future =
                Some(policy_rows.iter().map(|r| r.mean_action_adv).sum::<f64>() / n);
        }
    }

    // invariant: the policy phase never mutates value or subpolicy tables
    if let (Some(v), Some(snap)) = (&tables.v, &v_snapshot) {
        assert_eq!(v.values(), &snap[..], "policy phase mutated the value table");
    }
    if let (Some(p), Some(snap)) = (&tables.p_sub, &sub_snapshot) {
        assert_eq!(p.logits(), &snap[..], "policy phase mutated the subpolicy table");
    }
    if algo != Algo::Hiql {
        if let (Some(p), Some(snap)) = (&tables.p_high, &high_snapshot) {
            assert_eq!(p.logits(), &snap[..], "policy phase mutated the high-level table");
        }
    }

    // ---- final evaluation ----
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003));
    let eval = match algo {
        Algo::Hiql => evaluate(
            &env,
            hier_selector(tables.p_high.as_ref().unwrap(), tables.p_low.as_ref().unwrap(), mode),
            &tasks,
            seed,
            &mut eval_rng,
        )?,
        _ => evaluate(
            &env,
            flat_selector(tables.p_flat.as_ref().unwrap(), mode),
            &tasks,
            seed,
            &mut eval_rng,
        )?,
    };

    let summary = RunSummary {
        algo,
        maze: cfg.maze.clone(),
        seed,
        eval,
        metrics: rows,
        diag,
    };
    if let Some(dir) = out {
        write_artifacts(cfg, seed, &env, &d, &tables, &summary, dir)?;
    }
    Ok(summary)
}

fn render_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("phase,step,loss,mean_action_adv,mean_subgoal_adv,eval_success\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.phase,
            r.step,
            fmt_f64(r.loss),
            fmt_f64(r.mean_action_adv),
            fmt_f64(r.mean_subgoal_adv),
            r.eval_success.map(fmt_f64).unwrap_or_default()
        ));
    }
    s
}

fn render_eval_csv(summary: &RunSummary) -> String {
    let mut s = String::from("algo,maze,pair,seed,success_rate,mean_length\n");
    let e = &summary.eval;
    for (i, (&sr, &len)) in e.per_pair.iter().zip(&e.per_pair_length).enumerate() {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            summary.algo.name(),
            summary.maze,
            i,
            summary.seed,
            fmt_f64(sr),
            fmt_f64(len)
        ));
    }
    s.push_str(&format!(
        "{},{},aggregate,{},{},{}\n",
        summary.algo.name(),
        summary.maze,
        summary.seed,
        fmt_f64(e.success_rate),
        fmt_f64(e.mean_episode_length)
    ));
    s
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    seed: u64,
    env: &GridWorld,
    d: &Dataset,
    tables: &Tables,
    summary: &RunSummary,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.csv"), render_metrics_csv(&summary.metrics))?;
    fs::write(dir.join("eval.csv"), render_eval_csv(summary))?;

    let hash = maze_hash(env);
    let mut artifacts = vec!["metrics.csv".to_string(), "eval.csv".to_string()];
    if let Some(v) = &tables.v {
        let mut buf = Vec::new();
        write_value_table(v, &hash, cfg.hp.gamma, &mut buf)?;
        fs::write(dir.join("value.tbl"), buf)?;
        artifacts.push("value.tbl".into());
    }
    for (name, table) in [
        ("policy_flat.tbl", &tables.p_flat),
        ("policy_sub.tbl", &tables.p_sub),
        ("policy_high.tbl", &tables.p_high),
        ("policy_low.tbl", &tables.p_low),
    ] {
        if let Some(p) = table {
            let mut buf = Vec::new();
            write_policy_table(p, &hash, &mut buf)?;
            fs::write(dir.join(name), buf)?;
            artifacts.push(name.into());
        }
    }

    let mut dataset_bytes = Vec::new();
    write_jsonl(d, &mut dataset_bytes)?;
    let canonical = cfg.canonical();
    let manifest = serde_json::json!({
        "config_hash": sha256_hex(canonical.as_bytes()),
        "config": as_map(cfg),
        "seed": seed,
        "maze_hash": hash,
        "dataset_hash": sha256_hex(&dataset_bytes),
        "diagnostics": summary.diag,
        "final_success_rate": summary.eval.success_rate,
        "artifacts": artifacts,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub seed: u64,
    pub step: usize,
    pub success: f64,
}

/// Run the config once per (value, seed) pair with `param` overridden, and
/// collect success-vs-step curves (policy-phase eval points plus the final
/// evaluation) in long format.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    param: &str,
    values: &[String],
    out: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep requires at least one value".into()));
    }
    if !is_sweepable(param) {
        return Err(Error::Config(format!("unknown sweep parameter {param:?}")));
    }
    let mut rows = Vec::new();
    for value in values {
        let mut run_cfg = cfg.clone();
        run_cfg.set(param, value)?;
        run_cfg.validate()?;
        for &seed in &cfg.seeds {
            let run_dir = out.map(|d| d.join(format!("{param}={value}")).join(format!("seed-{seed}")));
            let summary = run_experiment(&run_cfg, seed, run_dir.as_deref())?;
            for m in &summary.metrics {
                if let Some(s) = m.eval_success {
                    rows.push(SweepRow {
                        param: param.to_string(),
                        value: value.clone(),
                        seed,
                        step: m.step,
                        success: s,
                    });
                }
            }
            rows.push(SweepRow {
                param: param.to_string(),
                value: value.clone(),
                seed,
                step: cfg.hp.steps_policy,
                success: summary.eval.success_rate,
            });
        }
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut s = String::from("param,value,seed,step,success\n");
        for r in &rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.param,
                r.value,
                r.seed,
                r.step,
                fmt_f64(r.success)
            ));
        }
        fs::write(dir.join("sweep.csv"), s)?;
    }
    Ok(rows)
}

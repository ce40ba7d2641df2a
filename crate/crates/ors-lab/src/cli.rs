//! Command orchestration behind the `ors-lab` binary: dataset generation,
//! staged training, theory verification, the value-noise study, and policy
//! evaluation. Every command writes its artifacts under one output directory
//! and updates a manifest of file hashes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{reward_field_dump, sweep_sigma, AnalysisError, RewardMode, TraceInstance};
use crate::config::{ConfigError, RunConfig};
use crate::envs::{
    check_assumptions, generate_dataset, read_jsonl, write_jsonl, DeterministicMdp,
    EmbeddedDataset, EnvError, GridMaze, PolicySpec, PolicyTable, TabularDataset,
};
use crate::flow::{train_occupancy, FlowError, VelocityFieldNet};
use crate::gcrl::{train_gciql, GcrlError, RewardSource};
use crate::nn::{Checkpoint, NnError};
use crate::occupancy::OccError;
use crate::reward::{train_reward, validate_w2_bound, RewardError, RewardNet, ShapedRewardSource};
use crate::suite::{standard_family, verify_family, FamilyCheck, SuiteInstance};
use crate::util::{fnv1a64, stream_seed};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATIONS: i32 = 2;
pub const EXIT_PRECONDITIONS_UNMET: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing {artifact}: run `ors-lab {hint}` first")]
    MissingArtifact { artifact: String, hint: String },
    #[error("unsupported verify target {0:?} (expected prop1, prop2, theorem1, or all)")]
    BadWhich(String),
    #[error("unsupported train stage {0:?} (expected occupancy, reward, policy, or all)")]
    BadStage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Gcrl(#[from] GcrlError),
    #[error(transparent)]
    Occ(#[from] OccError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.out_dir).join(name)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok(())
}

/// Adds files to `manifest.json` (path, byte count, FNV-1a hash). Entries
/// are keyed by relative path, so re-runs update in place.
fn update_manifest(cfg: &RunConfig, files: &[PathBuf]) -> Result<(), CliError> {
    #[derive(Serialize, Deserialize, Default)]
    struct Manifest {
        artifacts: BTreeMap<String, ManifestEntry>,
    }
    #[derive(Serialize, Deserialize)]
    struct ManifestEntry {
        bytes: u64,
        fnv1a64: String,
    }
    let path = out_path(cfg, "manifest.json");
    let mut manifest: Manifest = match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
        Err(_) => Manifest::default(),
    };
    for file in files {
        let bytes = std::fs::read(file)?;
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| file.display().to_string());
        manifest.artifacts.insert(
            name,
            ManifestEntry { bytes: bytes.len() as u64, fnv1a64: format!("{:016x}", fnv1a64(&bytes)) },
        );
    }
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Generates the offline dataset and its assumption report.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<(), CliError> {
    ensure_out_dir(cfg)?;
    let mdp = cfg.build_env()?;
    let spec = cfg.dataset_policy()?;
    let goal = cfg.dataset_goal(&mdp);
    let ds = generate_dataset(
        &mdp,
        spec,
        goal,
        cfg.dataset.n_trajectories,
        cfg.dataset.horizon,
        stream_seed(cfg.seed, "dataset"),
    )?;
    let ds_path = out_path(cfg, "dataset.jsonl");
    write_jsonl(&ds, &mdp, &ds_path)?;
    let report = check_assumptions(&mdp, &ds, goal);
    let report_path = out_path(cfg, "assumptions.json");
    write_json(&report_path, &report)?;
    update_manifest(cfg, &[ds_path, report_path])?;
    println!(
        "dataset: {} trajectories x {} steps under {}; assumptions hold: {}",
        ds.n_trajectories(),
        cfg.dataset.horizon,
        ds.policy,
        report.all_hold()
    );
    Ok(())
}

fn load_dataset(cfg: &RunConfig, mdp: &DeterministicMdp) -> Result<TabularDataset, CliError> {
    let path = out_path(cfg, "dataset.jsonl");
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            artifact: "dataset.jsonl".to_string(),
            hint: "gen-data".to_string(),
        });
    }
    Ok(read_jsonl(&path, mdp)?)
}

#[derive(Serialize, Deserialize)]
struct FlowCheckpoint {
    model: Checkpoint,
    state_dim: usize,
    cond_dim: usize,
    flow_steps: usize,
    gamma: f64,
    embed_scale: f64,
    config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct RewardCheckpoint {
    net: Checkpoint,
    scale: f64,
    state_dim: usize,
    cond_dim: usize,
    config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct PolicyCheckpoint {
    net: Checkpoint,
    action_dim: usize,
    config_hash: String,
}

fn warn_on_hash_mismatch(stored: &str, cfg: &RunConfig, what: &str) {
    if stored != cfg.hash() {
        eprintln!(
            "warning: {what} was trained under config hash {stored}, current is {}",
            cfg.hash()
        );
    }
}

fn load_flow_model(cfg: &RunConfig) -> Result<VelocityFieldNet, CliError> {
    let path = out_path(cfg, "occupancy.json");
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            artifact: "occupancy.json".to_string(),
            hint: "train --stage occupancy".to_string(),
        });
    }
    let ck: FlowCheckpoint = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    warn_on_hash_mismatch(&ck.config_hash, cfg, "occupancy model");
    let (net, _) = ck.model.to_mlp()?;
    let mut model =
        VelocityFieldNet::from_net(net, ck.state_dim, ck.cond_dim, ck.flow_steps, ck.gamma);
    model.embed_scale = ck.embed_scale;
    Ok(model)
}

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<(), CliError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    Ok(())
}

fn train_occupancy_stage(cfg: &RunConfig, mdp: &DeterministicMdp) -> Result<(), CliError> {
    let ds = load_dataset(cfg, mdp)?;
    let emb = EmbeddedDataset::from_tabular(mdp, &ds);
    let (model, curve) =
        train_occupancy(&emb, cfg.occupancy.clone(), stream_seed(cfg.seed, "occupancy"))?;
    let ck = FlowCheckpoint {
        model: {
            let mut c = Checkpoint::from_mlp(model.net(), None);
            c.config_hash = Some(cfg.hash());
            c
        },
        state_dim: model.state_dim,
        cond_dim: model.cond_dim,
        flow_steps: model.flow_steps,
        gamma: model.gamma,
        embed_scale: model.embed_scale,
        config_hash: cfg.hash(),
    };
    let ck_path = out_path(cfg, "occupancy.json");
    write_json(&ck_path, &ck)?;
    let csv_path = out_path(cfg, "occupancy_loss.csv");
    write_csv(
        &csv_path,
        "step,phase,total,next,future",
        curve.iter().map(|p| format!("{},{},{},{},{}", p.step, p.phase, p.total, p.next, p.future)),
    )?;
    update_manifest(cfg, &[ck_path, csv_path])?;
    println!(
        "occupancy model trained ({} pretrain + {} bootstrapped steps)",
        cfg.occupancy.pretrain_steps, cfg.occupancy.flow_steps_train
    );
    Ok(())
}

fn train_reward_stage(cfg: &RunConfig, mdp: &DeterministicMdp) -> Result<(), CliError> {
    let ds = load_dataset(cfg, mdp)?;
    let emb = EmbeddedDataset::from_tabular(mdp, &ds);
    let model = load_flow_model(cfg)?;
    let sampler = cfg.reward.sampler.to_sampler()?;
    let (net, losses) =
        train_reward(&model, &emb, &sampler, &cfg.reward.train, stream_seed(cfg.seed, "reward"))?;
    let ck = RewardCheckpoint {
        net: Checkpoint::from_mlp(net.net(), None),
        scale: net.scale,
        state_dim: net.state_dim,
        cond_dim: net.cond_dim,
        config_hash: cfg.hash(),
    };
    let ck_path = out_path(cfg, "reward.json");
    write_json(&ck_path, &ck)?;
    let csv_path = out_path(cfg, "reward_loss.csv");
    write_csv(
        &csv_path,
        "step,loss",
        losses.iter().map(|(s, l)| format!("{s},{l}")),
    )?;
    update_manifest(cfg, &[ck_path, csv_path])?;
    println!("reward net distilled ({} steps)", cfg.reward.train.steps);
    Ok(())
}

fn load_reward_net(cfg: &RunConfig) -> Result<RewardNet, CliError> {
    let path = out_path(cfg, "reward.json");
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            artifact: "reward.json".to_string(),
            hint: "train --stage reward".to_string(),
        });
    }
    let ck: RewardCheckpoint = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    warn_on_hash_mismatch(&ck.config_hash, cfg, "reward net");
    let (net, _) = ck.net.to_mlp()?;
    Ok(RewardNet::from_net(net, ck.state_dim, ck.cond_dim, ck.scale))
}

fn default_eval_goals(mdp: &DeterministicMdp) -> Vec<usize> {
    let n = mdp.n_states;
    if n <= 5 {
        (0..n).collect()
    } else {
        (0..5).map(|i| i * (n - 1) / 4).collect()
    }
}

fn build_reward_source(cfg: &RunConfig, mdp: &DeterministicMdp, ds: &TabularDataset) -> Result<RewardSource, CliError> {
    match cfg.policy.reward_source.as_str() {
        "sparse" => Ok(RewardSource::Sparse),
        "distilled" => {
            let net = load_reward_net(cfg)?;
            Ok(RewardSource::Shaped(ShapedRewardSource::distilled(mdp, net)))
        }
        _ => {
            let pi = ds.empirical_policy();
            if cfg.policy.reward_scale > 0.0 {
                Ok(RewardSource::Shaped(ShapedRewardSource::exact_all_goals(
                    mdp,
                    &pi,
                    cfg.env.gamma,
                    cfg.policy.reward_scale,
                )?))
            } else {
                // Non-positive scale: normalize by the mean table magnitude
                // so typical rewards sit near -1 regardless of maze size.
                Ok(RewardSource::Shaped(ShapedRewardSource::exact_all_goals_normalized(
                    mdp,
                    &pi,
                    cfg.env.gamma,
                )?))
            }
        }
    }
}

fn train_policy_stage(cfg: &RunConfig, mdp: &DeterministicMdp) -> Result<(), CliError> {
    let ds = load_dataset(cfg, mdp)?;
    let emb = EmbeddedDataset::from_tabular(mdp, &ds);
    let reward = build_reward_source(cfg, mdp, &ds)?;
    let critic_sampler = cfg.policy.critic_sampler.to_sampler()?;
    let actor_sampler = cfg.policy.actor_sampler.to_sampler()?;
    let eval_goals = if cfg.policy.eval_goals.is_empty() {
        default_eval_goals(mdp)
    } else {
        cfg.policy.eval_goals.clone()
    };
    let (policy, _critic, metrics) = train_gciql(
        mdp,
        &emb,
        &reward,
        &critic_sampler,
        &actor_sampler,
        &cfg.policy.gciql,
        &eval_goals,
        stream_seed(cfg.seed, "policy"),
    )?;
    let ck = PolicyCheckpoint {
        net: Checkpoint::from_mlp(policy.net(), None),
        action_dim: policy.action_dim,
        config_hash: cfg.hash(),
    };
    let ck_path = out_path(cfg, "policy.json");
    write_json(&ck_path, &ck)?;
    let csv_path = out_path(cfg, "metrics.csv");
    write_csv(
        &csv_path,
        "step,loss_v,loss_q,loss_pi,eval_success,eval_return",
        metrics.iter().map(|m| {
            format!(
                "{},{},{},{},{},{}",
                m.step, m.loss_v, m.loss_q, m.loss_pi, m.eval_success, m.eval_return
            )
        }),
    )?;
    update_manifest(cfg, &[ck_path, csv_path])?;
    if let Some(last) = metrics.last() {
        println!(
            "policy trained ({} steps, {} rewards): eval success {:.3}",
            cfg.policy.gciql.steps, cfg.policy.reward_source, last.eval_success
        );
    }
    Ok(())
}

/// `train --stage occupancy|reward|policy|all`. Later stages require the
/// earlier checkpoints and name the missing stage otherwise.
pub fn cmd_train(cfg: &RunConfig, stage: &str) -> Result<(), CliError> {
    ensure_out_dir(cfg)?;
    let mdp = cfg.build_env()?;
    match stage {
        "occupancy" => train_occupancy_stage(cfg, &mdp),
        "reward" => train_reward_stage(cfg, &mdp),
        "policy" => train_policy_stage(cfg, &mdp),
        "all" => {
            train_occupancy_stage(cfg, &mdp)?;
            train_reward_stage(cfg, &mdp)?;
            train_policy_stage(cfg, &mdp)
        }
        other => Err(CliError::BadStage(other.to_string())),
    }
}

fn verify_instances(cfg: &RunConfig) -> Result<Vec<SuiteInstance>, CliError> {
    if cfg.env.spec == "family:standard" {
        return Ok(standard_family());
    }
    // Single instance: the maze's marked goal when present, else the
    // configured dataset goal.
    let marker = if cfg.env.spec == "umaze" { GridMaze::u_maze().goal_marker } else { None };
    let mdp = cfg.build_env()?;
    let goal = match marker {
        Some((r, c)) => mdp.state_at(r, c).expect("marker on a free cell"),
        None => cfg.dataset_goal(&mdp),
    };
    Ok(vec![SuiteInstance { name: cfg.env.spec.clone(), mdp, goals: vec![goal] }])
}

/// `verify --which prop1|prop2|theorem1|all`. Exit code 0 means zero
/// violations among assumption-satisfying instances; 2 means violations;
/// 3 means every checked instance failed the assumption gate.
pub fn cmd_verify(cfg: &RunConfig, which: &str, diagnostic: bool) -> Result<i32, CliError> {
    ensure_out_dir(cfg)?;
    let mut exit = EXIT_OK;
    let mut artifacts = Vec::new();
    let run_family = |check: FamilyCheck, file: &str, artifacts: &mut Vec<PathBuf>| -> Result<i32, CliError> {
        let instances = verify_instances(cfg)?;
        let report = verify_family(&instances, &[0.9, 0.99], check)?;
        let path = out_path(cfg, file);
        write_json(&path, &report)?;
        artifacts.push(path);
        let code = if report.total_violations > 0 {
            EXIT_VIOLATIONS
        } else if report.all_gated() {
            EXIT_PRECONDITIONS_UNMET
        } else {
            EXIT_OK
        };
        println!(
            "{}: {} cells checked, {} violations, {} gated out -> {}",
            report.check,
            report.entries.len(),
            report.total_violations,
            report.gated_out,
            match code {
                EXIT_OK => "clean",
                EXIT_VIOLATIONS => "VIOLATIONS",
                _ => "preconditions unmet",
            }
        );
        Ok(code)
    };
    let merge = |exit: &mut i32, code: i32| {
        // Violations dominate; otherwise a precondition failure does.
        if code == EXIT_VIOLATIONS || (*exit != EXIT_VIOLATIONS && code != EXIT_OK) {
            *exit = code;
        }
    };
    match which {
        "prop1" => merge(&mut exit, run_family(FamilyCheck::Monotonicity, "verify_monotonicity.json", &mut artifacts)?),
        "theorem1" => merge(&mut exit, run_family(FamilyCheck::GreedyOptimality, "verify_greedy.json", &mut artifacts)?),
        "prop2" => merge(&mut exit, verify_bound(cfg, diagnostic, &mut artifacts)?),
        "all" => {
            merge(&mut exit, run_family(FamilyCheck::Monotonicity, "verify_monotonicity.json", &mut artifacts)?);
            merge(&mut exit, run_family(FamilyCheck::GreedyOptimality, "verify_greedy.json", &mut artifacts)?);
            merge(&mut exit, verify_bound(cfg, diagnostic, &mut artifacts)?);
        }
        other => return Err(CliError::BadWhich(other.to_string())),
    }
    update_manifest(cfg, &artifacts)?;
    Ok(exit)
}

fn verify_bound(cfg: &RunConfig, diagnostic: bool, artifacts: &mut Vec<PathBuf>) -> Result<i32, CliError> {
    let mdp = cfg.build_env()?;
    let ds = load_dataset(cfg, &mdp)?;
    let model = load_flow_model(cfg)?;
    let pi = ds.empirical_policy();
    let tables: Vec<_> = (0..mdp.n_states)
        .map(|g| crate::occupancy::goal_tables(&mdp, &pi, cfg.env.gamma, g))
        .collect::<Result<_, _>>()?;
    let mut rng = crate::util::stream_rng(cfg.seed, "verify-bound");
    let report = validate_w2_bound(&model, &mdp, &tables, cfg.reward.train.mc_draws, diagnostic, &mut rng)?;
    let path = out_path(cfg, "verify_bound.json");
    write_json(&path, &report)?;
    artifacts.push(path);
    println!(
        "bound: {} triples, C_hat {:.4}, spearman {:.4}{} -> {}",
        report.triples,
        report.c_hat,
        report.spearman_rho,
        if report.warning.is_some() { " (diagnostic)" } else { "" },
        if report.passed { "clean" } else { "VIOLATIONS" }
    );
    Ok(if report.passed { EXIT_OK } else { EXIT_VIOLATIONS })
}

/// `analyze`: the value-noise sweep and the reward-field dump.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<(), CliError> {
    ensure_out_dir(cfg)?;
    // Expert trajectories: chains of decreasing length, goal at the end.
    let n = cfg.analysis.n_trajectories.max(1);
    let step = cfg.analysis.max_length / (2 * n).max(1);
    let mut instances = Vec::new();
    for i in 0..n {
        let len = (cfg.analysis.max_length - i * step).max(2);
        let mdp = DeterministicMdp::from_maze(&GridMaze::chain(len), cfg.analysis.gamma);
        instances.push(TraceInstance::shortest_path(
            &mdp,
            cfg.analysis.gamma,
            0,
            len - 1,
            cfg.analysis.scale,
        )?);
    }
    let table = sweep_sigma(
        &instances,
        &[RewardMode::Sparse, RewardMode::Ors, RewardMode::RawRw],
        &cfg.analysis.sigmas,
        cfg.analysis.seeds,
        cfg.analysis.gamma,
        stream_seed(cfg.seed, "analysis"),
    )?;
    let sweep_path = out_path(cfg, "delta_v_sweep.csv");
    std::fs::write(&sweep_path, table.to_csv())?;
    for &sigma in &cfg.analysis.sigmas {
        let sparse = table.mean_for(RewardMode::Sparse, sigma).unwrap_or(f64::NAN);
        let ors = table.mean_for(RewardMode::Ors, sigma).unwrap_or(f64::NAN);
        println!(
            "sigma {sigma}: sparse {sparse:.4} vs shaped {ors:.4} ({})",
            if ors <= sparse { "shaped <= sparse" } else { "ORDERING VIOLATED" }
        );
    }

    // Field dump on the configured environment.
    let mdp = cfg.build_env()?;
    let goal = cfg.dataset_goal(&mdp);
    let pi = PolicyTable::from_spec(&mdp, PolicySpec::LayerMonotone, goal)
        .unwrap_or_else(|_| PolicyTable::uniform(&mdp));
    let m = crate::occupancy::goal_tables(&mdp, &pi, cfg.env.gamma, goal)?;
    let dump = reward_field_dump(&mdp, &m, cfg.analysis.scale);
    let field_path = out_path(cfg, "reward_field.csv");
    std::fs::write(&field_path, dump.to_csv())?;
    println!("reward field: spearman vs shortest-path steps = {:.4}", dump.spearman_vs_steps);
    update_manifest(cfg, &[sweep_path, field_path])?;
    Ok(())
}

/// `eval`: load the trained policy and report success rates.
pub fn cmd_eval(cfg: &RunConfig) -> Result<(), CliError> {
    ensure_out_dir(cfg)?;
    let mdp = cfg.build_env()?;
    let path = out_path(cfg, "policy.json");
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            artifact: "policy.json".to_string(),
            hint: "train --stage policy".to_string(),
        });
    }
    let ck: PolicyCheckpoint = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    warn_on_hash_mismatch(&ck.config_hash, cfg, "policy");
    let (net, _) = ck.net.to_mlp()?;
    let policy = crate::gcrl::GaussianPolicy::from_net(net, ck.action_dim, &cfg.policy.gciql);
    let goals = if cfg.policy.eval_goals.is_empty() {
        default_eval_goals(&mdp)
    } else {
        cfg.policy.eval_goals.clone()
    };
    let report = crate::gcrl::evaluate_net_policy(
        &mdp,
        &policy,
        &goals,
        cfg.policy.gciql.eval_episodes,
        cfg.policy.gciql.eval_horizon,
        stream_seed(cfg.seed, "eval"),
    )?;
    let eval_path = out_path(cfg, "eval.json");
    write_json(&eval_path, &report)?;
    update_manifest(cfg, &[eval_path])?;
    println!(
        "eval: success {:.3}, return {:.2} over {} goals",
        report.mean_success,
        report.mean_return,
        report.per_goal.len()
    );
    Ok(())
}

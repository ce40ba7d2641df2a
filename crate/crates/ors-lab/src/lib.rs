//! Occupancy reward shaping for offline goal-conditioned RL, at desk scale.
//!
//! The crate has two halves that check each other:
//!
//! - An **exact tabular pipeline** on enumerable deterministic MDPs: closed-form
//!   occupancy measures, Wasserstein-2 distances to goal Diracs, shaped rewards,
//!   and machine checks that the shaped rewards are layer-monotone and that
//!   greedy value iteration under them recovers shortest paths.
//! - A **learned pipeline** on the same instances plus toy continuous mazes:
//!   a flow-matching occupancy model, a Monte-Carlo velocity-MSE reward
//!   estimator, a distilled reward network, and an expectile-regression
//!   (GCIQL-style) policy trainer.
//!
//! Start with the runnable examples (`cargo run --release --example <name>`):
//!
//! - `exact_pipeline` - occupancy tables, shaped rewards, and the theory checks
//! - `dataset_generation` - behavioral policies, datasets, assumption reports
//! - `flow_occupancy` - train a flow-matching occupancy model and compare it
//!   against the exact tables
//! - `reward_distillation` - distill the reward network and validate the
//!   velocity-MSE upper bound
//! - `policy_training` - GCIQL with shaped vs sparse rewards on a maze
//! - `value_noise_study` - the value non-monotonicity sweep
//! - `point_maze` - the continuous 2D maze pipeline
//!
//! A thin `ors-lab` binary wraps the same library calls behind `gen-data`,
//! `train`, `verify`, `analyze`, and `eval` subcommands for scripted runs.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod envs;
pub mod flow;
pub mod gcrl;
pub mod nn;
pub mod occupancy;
pub mod reward;
pub mod suite;
pub mod util;

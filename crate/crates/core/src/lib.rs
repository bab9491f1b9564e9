//! Preference-based reinforcement learning with crowds of LLM-written
//! evaluation programs fused by Dempster-Shafer evidence combination.
//!
//! The pieces, bottom up:
//! - [`model`]: segments, preference queries, the replay buffer, run config
//! - [`envs`]: two small grid worlds with ground-truth rewards
//! - [`dsl`]: the sandboxed language evaluation programs are written in
//! - [`dst`]: mass assignment and Dempster's rule over pairwise preferences
//! - [`teachers`]: scripted, crowd and human labellers and the alignment filter
//! - [`reward`]: Bradley-Terry reward ensemble
//! - [`gateway`]: prompting chat-completion endpoints, or the stub crowd
//! - [`pbrl`]: the training loop
//! - [`service`]: the HTTP control plane

pub mod dsl;
pub mod dst;
pub mod envs;
pub mod gateway;
pub mod model;
pub mod pbrl;
pub mod reward;
pub mod service;
pub mod teachers;

//! Agent checkpoints: a directory with a manifest, the agent and the
//! environment state it was trained against.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sili_core::agents::AgentKind;
use sili_core::envs::AnyEnv;
use sili_core::nn::DenseNet;
use sili_core::stability::StabilityMetric;
use sili_core::trainer::AgentSnapshot;

pub const CHECKPOINT_FORMAT: &str = "sili-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub kind: AgentKind,
    pub metric: StabilityMetric,
    pub env: String,
    pub seed: u64,
    pub interactions: u64,
    /// Layer sizes of every bundled network, by role.
    pub networks: Vec<(String, Vec<usize>)>,
}

fn networks(agent: &AgentSnapshot) -> Vec<(String, Vec<usize>)> {
    let ac = &agent.actor_critic;
    let mut out: Vec<(&str, &DenseNet)> =
        vec![("actor", &ac.actor), ("q1", &ac.q1), ("q2", &ac.q2), ("q1_target", &ac.q1_target), ("q2_target", &ac.q2_target)];
    if let Some(m) = &agent.latent {
        out.push(("encoder", &m.encoder));
        out.push(("decoder", &m.decoder));
    }
    out.into_iter().map(|(n, net)| (n.to_string(), net.sizes().to_vec())).collect()
}

pub fn save(dir: &Path, agent: &AgentSnapshot, env: &AnyEnv, seed: u64, interactions: u64) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.to_string(),
        kind: agent.kind,
        metric: agent.metric,
        env: env.describe(),
        seed,
        interactions,
        networks: networks(agent),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    write_json(&dir.join("agent.json"), agent)?;
    write_json(&dir.join("env.json"), env)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<(Manifest, AgentSnapshot, AnyEnv)> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    if manifest.format != CHECKPOINT_FORMAT {
        bail!("{}: unsupported checkpoint format {:?}", dir.display(), manifest.format);
    }
    let agent: AgentSnapshot = read_json(&dir.join("agent.json"))?;
    let env: AnyEnv = read_json(&dir.join("env.json"))?;
    if agent.kind != manifest.kind || networks(&agent) != manifest.networks {
        bail!("{}: manifest does not match the stored agent", dir.display());
    }
    Ok((manifest, agent, env))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::run_experiment;
    use sili_core::trainer::{evaluate, Policy};

    #[test]
    fn saved_agent_acts_identically_after_loading() {
        let mut cfg = crate::run::tests::tiny(AgentKind::Sili);
        cfg.seeds = vec![3];
        let res = run_experiment(&cfg).unwrap();
        let (agent, env, n) = res.seeds[0].snapshot.clone().unwrap();
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &agent, &env, 3, n).unwrap();
        let (manifest, mut loaded, mut loaded_env) = load(dir.path()).unwrap();
        assert_eq!(manifest.kind, AgentKind::Sili);
        assert_eq!(manifest.interactions, 3);
        assert!(manifest.networks.iter().any(|(n, _)| n == "encoder"));
        let (mut a, mut e) = (agent.clone(), env.clone());
        assert!(!a.wants_oracle());
        let r1 = evaluate(&mut a, &mut e, 2).unwrap();
        let r2 = evaluate(&mut loaded, &mut loaded_env, 2).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn tampered_manifests_are_rejected() {
        let mut cfg = crate::run::tests::tiny(AgentKind::Sac);
        cfg.seeds = vec![1];
        let res = run_experiment(&cfg).unwrap();
        let (agent, env, n) = res.seeds[0].snapshot.clone().unwrap();
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &agent, &env, 1, n).unwrap();
        let path = dir.path().join("manifest.json");
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replace(CHECKPOINT_FORMAT, "sili-checkpoint-v0")).unwrap();
        assert!(load(dir.path()).is_err());
        fs::write(&path, text.replace("\"SAC\"", "\"SILI\"")).unwrap();
        assert!(load(dir.path()).is_err());
    }
}

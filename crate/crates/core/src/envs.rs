//! Built-in benchmark MDPs and the JSON interchange format.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::FiniteMdp;
use crate::policy::ActionFeatures;

/// Gridworld actions, in the usual Frozen-Lake order.
pub const LEFT: usize = 0;
pub const DOWN: usize = 1;
pub const RIGHT: usize = 2;
pub const UP: usize = 3;

/// Slippery gridworld. Terminal cells (holes, goal) either restart at
/// `start` or absorb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub start: usize,
    pub holes: Vec<usize>,
    pub goal: usize,
    /// Probability of slipping to one of the two perpendicular moves.
    pub slip_prob: f64,
    pub step_reward: f64,
    pub hole_reward: f64,
    pub goal_reward: f64,
    pub restart_on_terminal: bool,
}

impl GridworldSpec {
    /// The 4x4 layout `SFFF / FHFH / FFFH / HFFG` with the intended move
    /// and each perpendicular move taken with probability 1/3.
    pub fn frozen_lake_4x4() -> Self {
        Self {
            width: 4,
            height: 4,
            start: 0,
            holes: vec![5, 7, 11, 12],
            goal: 15,
            slip_prob: 2.0 / 3.0,
            step_reward: 0.0,
            hole_reward: 0.0,
            goal_reward: 1.0,
            restart_on_terminal: true,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if n == 0 {
            return Err(Error::InvalidSpec("gridworld needs a positive width and height".into()));
        }
        if !(0.0..1.0).contains(&self.slip_prob) {
            return Err(Error::InvalidSpec(format!("slip_prob {} not in [0, 1)", self.slip_prob)));
        }
        if self.start >= n || self.goal >= n || self.holes.iter().any(|h| *h >= n) {
            return Err(Error::InvalidSpec("cell index out of range".into()));
        }
        if self.start == self.goal || self.holes.contains(&self.start) || self.holes.contains(&self.goal) {
            return Err(Error::InvalidSpec("start, goal and holes must be disjoint".into()));
        }
        Ok(())
    }

    fn is_terminal(&self, cell: usize) -> bool {
        cell == self.goal || self.holes.contains(&cell)
    }

    fn moved(&self, cell: usize, action: usize) -> usize {
        let (row, col) = (cell / self.width, cell % self.width);
        let (row, col) = match action {
            LEFT => (row, col.saturating_sub(1)),
            DOWN => ((row + 1).min(self.height - 1), col),
            RIGHT => (row, (col + 1).min(self.width - 1)),
            _ => (row.saturating_sub(1), col),
        };
        row * self.width + col
    }
}

pub fn build_gridworld(spec: &GridworldSpec) -> Result<FiniteMdp> {
    spec.validate()?;
    let n = spec.width * spec.height;
    let mut p = vec![vec![vec![0.0; n]; 4]; n];
    let mut r = vec![vec![spec.step_reward; 4]; n];
    for cell in 0..n {
        for action in 0..4 {
            let row = &mut p[cell][action];
            if spec.is_terminal(cell) {
                let target = if spec.restart_on_terminal { spec.start } else { cell };
                row[target] = 1.0;
                r[cell][action] = if cell == spec.goal { spec.goal_reward } else { spec.hole_reward };
                continue;
            }
            row[spec.moved(cell, action)] += 1.0 - spec.slip_prob;
            for side in [(action + 1) % 4, (action + 3) % 4] {
                row[spec.moved(cell, side)] += spec.slip_prob / 2.0;
            }
        }
    }
    let bound = [spec.step_reward, spec.hole_reward, spec.goal_reward]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    FiniteMdp::new(p, r, bound)
}

/// Random MDP with a fixed branching factor, mixed toward uniform by `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarnetSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub branching: usize,
    /// Rewards are uniform in `[−reward_scale, reward_scale]`.
    pub reward_scale: f64,
    pub ergodicity_mix: f64,
    pub seed: u64,
}

impl GarnetSpec {
    pub fn new(n_states: usize, n_actions: usize, branching: usize, ergodicity_mix: f64, seed: u64) -> Self {
        Self { n_states, n_actions, branching, reward_scale: 1.0, ergodicity_mix, seed }
    }
}

pub fn build_garnet(spec: &GarnetSpec) -> Result<FiniteMdp> {
    let GarnetSpec { n_states: n, n_actions: m, branching, reward_scale, ergodicity_mix: eps, seed } = *spec;
    if n == 0 || m == 0 || branching == 0 || branching > n {
        return Err(Error::InvalidSpec(format!("garnet needs 1 <= branching <= n_states, got {branching}/{n}")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidSpec(format!("ergodicity_mix {eps} not in (0, 1]")));
    }
    if reward_scale.is_nan() || reward_scale <= 0.0 {
        return Err(Error::InvalidSpec("reward_scale must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![vec![vec![0.0; n]; m]; n];
    for row in p.iter_mut().flat_map(|per_action| per_action.iter_mut()) {
        let successors = index::sample(&mut rng, n, branching);
        // Dirichlet(1, ..., 1) as normalized exponentials
        let weights: Vec<f64> = (0..branching).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = weights.iter().sum();
        for (next, w) in successors.iter().zip(&weights) {
            row[next] = w / total;
        }
        for x in row.iter_mut() {
            *x = (1.0 - eps) * *x + eps / n as f64;
        }
    }
    let r = (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(-reward_scale..=reward_scale)).collect())
        .collect();
    FiniteMdp::new(p, r, reward_scale)
}

/// Four states on a line with a reward that grows toward the right end.
///
/// `advance` (action 1) moves one state right, `reset` (action 0) returns to
/// state 0; either intended move happens with probability 0.8 and otherwise
/// the next state is uniform. Advancing is also the myopically better action
/// everywhere, so the optimum is reachable by any reasonable learner.
pub fn easy4() -> FiniteMdp {
    let n = 4;
    let mix = 0.2;
    let mut p = vec![vec![vec![mix / n as f64; n]; 2]; n];
    let mut r = vec![vec![0.0; 2]; n];
    for s in 0..n {
        p[s][0][0] += 1.0 - mix;
        p[s][1][(s + 1).min(n - 1)] += 1.0 - mix;
        r[s][0] = 0.1;
        r[s][1] = 0.2 + 0.25 * s as f64;
    }
    FiniteMdp::new(p, r, 1.0).expect("easy4 fixture is valid")
}

/// Deterministic two-cycle with one action; irreducible but periodic.
pub fn two_cycle() -> FiniteMdp {
    FiniteMdp::new(vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]], vec![vec![1.0], vec![0.0]], 1.0)
        .expect("two-cycle fixture is valid")
}

/// An MDP plus optional critic and actor feature tables, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub mdp: FiniteMdp,
    pub features: Option<FeatureMap>,
    pub action_features: Option<ActionFeatures>,
}

impl Environment {
    pub fn bare(mdp: FiniteMdp) -> Self {
        Self { mdp, features: None, action_features: None }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MdpDocument {
    n_states: usize,
    n_actions: usize,
    reward_bound: f64,
    #[serde(rename = "P")]
    p: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    action_features: Option<Vec<Vec<Vec<f64>>>>,
}

/// Parses the JSON document, validating shapes and every probability row.
pub fn parse_environment(text: &str) -> Result<Environment> {
    let doc: MdpDocument =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    if doc.p.len() != doc.n_states || doc.r.len() != doc.n_states {
        return Err(Error::Parse(format!(
            "field P/R: expected {} state rows, found {}/{}",
            doc.n_states,
            doc.p.len(),
            doc.r.len()
        )));
    }
    for (s, per_action) in doc.p.iter().enumerate() {
        if per_action.len() != doc.n_actions {
            return Err(Error::Parse(format!("field P[{s}]: expected {} actions", doc.n_actions)));
        }
    }
    let mdp = FiniteMdp::new(doc.p, doc.r, doc.reward_bound).map_err(|e| match e {
        Error::DimensionMismatch(msg) => Error::Parse(msg),
        other => other,
    })?;
    let features = doc.features.map(FeatureMap::from_nested).transpose()?;
    if let Some(f) = &features {
        if f.n_states() != mdp.n_states() {
            return Err(Error::Parse(format!("field features: expected {} rows", mdp.n_states())));
        }
    }
    let action_features = doc.action_features.map(ActionFeatures::from_nested).transpose()?;
    if let Some(x) = &action_features {
        if x.n_states() != mdp.n_states() || x.n_actions() != mdp.n_actions() {
            return Err(Error::Parse("field action_features: shape does not match the MDP".into()));
        }
    }
    Ok(Environment { mdp, features, action_features })
}

pub fn environment_to_json(env: &Environment) -> String {
    let doc = MdpDocument {
        n_states: env.mdp.n_states(),
        n_actions: env.mdp.n_actions(),
        reward_bound: env.mdp.reward_bound(),
        p: env.mdp.transition_nested(),
        r: env.mdp.reward_nested(),
        features: env.features.as_ref().map(FeatureMap::to_nested),
        action_features: env.action_features.as_ref().map(ActionFeatures::to_nested),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("document serializes");
    out.push('\n');
    out
}

pub fn load_environment(path: &Path) -> Result<Environment> {
    let text = std::fs::read_to_string(path)?;
    parse_environment(&text)
}

pub fn save_environment(env: &Environment, path: &Path) -> Result<()> {
    std::fs::write(path, environment_to_json(env))?;
    Ok(())
}

pub fn load_mdp(path: &Path) -> Result<FiniteMdp> {
    Ok(load_environment(path)?.mdp)
}

pub fn save_mdp(mdp: &FiniteMdp, path: &Path) -> Result<()> {
    save_environment(&Environment::bare(mdp.clone()), path)
}

/// Builtin names: `easy4`, `frozen_lake_4x4`, `two_cycle`,
/// `garnet:<states>:<actions>:<branching>:<eps>:<seed>`.
pub fn builtin(name: &str) -> Result<FiniteMdp> {
    match name {
        "easy4" => Ok(easy4()),
        "frozen_lake_4x4" | "frozenlake" => build_gridworld(&GridworldSpec::frozen_lake_4x4()),
        "two_cycle" | "cycle2" => Ok(two_cycle()),
        other => {
            let Some(rest) = other.strip_prefix("garnet:") else {
                return Err(Error::Parse(format!("unknown builtin environment {other:?}")));
            };
            let parts: Vec<&str> = rest.split(':').collect();
            let bad = || Error::Parse(format!("expected garnet:<states>:<actions>:<branching>:<eps>:<seed>, got {other:?}"));
            if parts.len() != 5 {
                return Err(bad());
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
            let spec = GarnetSpec::new(
                int(parts[0])?,
                int(parts[1])?,
                int(parts[2])?,
                parts[3].parse().map_err(|_| bad())?,
                parts[4].parse().map_err(|_| bad())?,
            );
            build_garnet(&spec)
        }
    }
}

/// A builtin name, or else a path to an environment JSON file.
pub fn resolve_environment(name_or_path: &str) -> Result<Environment> {
    match builtin(name_or_path) {
        Ok(mdp) => Ok(Environment::bare(mdp)),
        Err(_) if Path::new(name_or_path).exists() => load_environment(Path::new(name_or_path)),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::PolicyChain;
    use nalgebra::DMatrix;

    fn uniform_chain(mdp: &FiniteMdp) -> PolicyChain {
        let probs = DMatrix::from_element(mdp.n_states(), mdp.n_actions(), 1.0 / mdp.n_actions() as f64);
        mdp.policy_chain(&probs)
    }

    #[test]
    fn no_slip_is_deterministic() {
        let spec = GridworldSpec { slip_prob: 0.0, ..GridworldSpec::frozen_lake_4x4() };
        let mdp = build_gridworld(&spec).unwrap();
        for s in 0..16 {
            for a in 0..4 {
                assert_eq!(mdp.transition_row(s, a).iter().filter(|p| **p > 0.0).count(), 1);
            }
        }
        assert_eq!(mdp.prob(0, RIGHT, 1), 1.0);
        assert_eq!(mdp.prob(0, LEFT, 0), 1.0);
    }

    #[test]
    fn small_grid_is_irreducible() {
        let spec = GridworldSpec {
            width: 2,
            height: 2,
            start: 0,
            holes: vec![],
            goal: 3,
            slip_prob: 0.2,
            step_reward: 0.0,
            hole_reward: 0.0,
            goal_reward: 1.0,
            restart_on_terminal: true,
        };
        assert!(uniform_chain(&build_gridworld(&spec).unwrap()).is_irreducible());
    }

    #[test]
    fn frozen_lake_restarts_and_is_irreducible() {
        let mdp = builtin("frozen_lake_4x4").unwrap();
        assert_eq!((mdp.n_states(), mdp.n_actions()), (16, 4));
        assert_eq!(mdp.prob(15, UP, 0), 1.0);
        assert_eq!(mdp.reward(15, 0), 1.0);
        assert!(uniform_chain(&mdp).is_irreducible());
        // intended 1/3, perpendicular 1/3 each
        assert!((mdp.prob(1, DOWN, 5) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gridworld_rejects_overlap() {
        let spec = GridworldSpec { holes: vec![0], ..GridworldSpec::frozen_lake_4x4() };
        assert!(matches!(build_gridworld(&spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn garnet_full_mix_is_uniform() {
        let mdp = build_garnet(&GarnetSpec::new(5, 2, 2, 1.0, 3)).unwrap();
        for s in 0..5 {
            for a in 0..2 {
                assert!(mdp.transition_row(s, a).iter().all(|p| (p - 0.2).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn garnet_is_seed_deterministic_and_lower_bounded() {
        let spec = GarnetSpec::new(6, 3, 2, 0.05, 17);
        let a = build_garnet(&spec).unwrap();
        assert_eq!(a, build_garnet(&spec).unwrap());
        assert_ne!(a, build_garnet(&GarnetSpec { seed: 18, ..spec }).unwrap());
        for s in 0..6 {
            for act in 0..3 {
                assert!(a.transition_row(s, act).iter().all(|p| *p >= 0.05 / 6.0 - 1e-15));
            }
        }
    }

    #[test]
    fn missing_reward_field_fails_to_parse() {
        let text = r#"{"n_states": 1, "n_actions": 1, "reward_bound": 1.0, "P": [[[1.0]]]}"#;
        let err = parse_environment(text).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("`R`"), "{err}");
    }

    #[test]
    fn bad_row_sum_names_the_pair() {
        let text = r#"{"n_states": 2, "n_actions": 1, "reward_bound": 1.0,
            "P": [[[0.5, 0.5]], [[0.49, 0.49]]], "R": [[0.0], [0.0]]}"#;
        let err = parse_environment(text).unwrap_err();
        assert!(matches!(err, Error::InvariantViolation(_)));
        assert!(err.to_string().contains("s=1,a=0"), "{err}");
    }

    #[test]
    fn optional_feature_blocks_round_trip() {
        let mdp = easy4();
        let env = Environment {
            features: Some(FeatureMap::new(DMatrix::from_fn(4, 3, |s, j| f64::from(s == j))).unwrap()),
            action_features: Some(ActionFeatures::tabular(4, 2)),
            mdp,
        };
        let back = parse_environment(&environment_to_json(&env)).unwrap();
        assert_eq!(back, env);
    }

    #[test]
    fn builtin_names() {
        assert!(builtin("garnet:5:3:3:0.05:1").is_ok());
        assert!(builtin("garnet:5:3").is_err());
        assert!(builtin("nope").is_err());
        assert_eq!(builtin("two_cycle").unwrap(), two_cycle());
    }
}

//! Random solvable environments for oracle-extraction experiments.
//!
//! Environments are influence diagrams with uniformly drawn CPD and utility
//! parameters over a family-specific graph, accepted only when they are
//! actually learnable from policy answers: the assumption validator must
//! pass, every state's best decision must win by a margin, and every edge
//! must be decided by an interventional difference of at least that margin.
//! The margin rejection is the operational stand-in for "almost every
//! parameterization works" — near-ties are a measure-zero set, and the
//! margin carves out a neighborhood of it.
//!
//! Generation is pure: a config plus a stream seed reproduces the same
//! environment bit for bit, and batch generation derives per-index streams
//! so environments are independent of ordering and parallelism.

use crate::cbn::{next_state, state_count, Cbn, Cpd, Dag, VariableDecl};
use crate::cid::{validate_assumptions, Cid, CidError};
use crate::extraction::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Attempt budget per environment; exceeding it means the config's
/// acceptance rate is below 1%, which is treated as a configuration error.
const MAX_ATTEMPTS: u64 = 100_000;

/// Margin used by correctness audits (excludes only near-exact ties).
pub const MARGIN_AUDIT: f64 = 1e-6;

/// Margin used by the experiment harness (keeps estimators well away from
/// decision boundaries at realistic sample sizes).
pub const MARGIN_EXPERIMENT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvGenError {
    #[error("invalid generator config: {reason}")]
    BadConfig { reason: String },
    #[error("rejection rate above 99% over {attempts} attempts; margins or family are unsatisfiable")]
    RejectionRateTooHigh { attempts: u64 },
}

/// Graph families environments are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFamily {
    /// Two binary chance variables with one edge, direction fair-coin
    /// chosen; never the empty graph.
    BinaryPair,
    /// Uniformly shuffled topological order with each forward edge present
    /// independently with probability 1/2 (empty graphs possible).
    RandomDag,
}

/// Configuration for environment sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_chance: usize,
    /// Per-variable state counts, one per chance variable.
    pub cardinalities: Vec<usize>,
    pub graph_family: GraphFamily,
    pub decision_cardinality: usize,
    /// Minimum accepted normalized decision gap and interventional parameter
    /// separation. 0 disables margin rejection (assumption validation still
    /// applies).
    pub margin: f64,
    /// Base seed; environment `i` of a batch uses the derived stream
    /// [`env_stream_seed`]`(seed, i)`.
    pub seed: u64,
}

impl GeneratorConfig {
    /// A binary-pair config at the experiment margin.
    pub fn binary_pair(seed: u64) -> Self {
        Self {
            n_chance: 2,
            cardinalities: vec![2, 2],
            graph_family: GraphFamily::BinaryPair,
            decision_cardinality: 2,
            margin: MARGIN_EXPERIMENT,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), EnvGenError> {
        let bad = |reason: String| Err(EnvGenError::BadConfig { reason });
        if self.n_chance == 0 {
            return bad("need at least one chance variable".into());
        }
        if self.cardinalities.len() != self.n_chance {
            return bad(format!(
                "{} cardinalities for {} chance variables",
                self.cardinalities.len(),
                self.n_chance
            ));
        }
        if let Some(&k) = self.cardinalities.iter().find(|&&k| k < 2) {
            return bad(format!("cardinality {k} below 2"));
        }
        if self.decision_cardinality < 2 {
            return bad(format!(
                "decision cardinality {} below 2",
                self.decision_cardinality
            ));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad(format!("margin {} must be finite and nonnegative", self.margin));
        }
        if self.graph_family == GraphFamily::BinaryPair
            && (self.n_chance != 2 || self.cardinalities.iter().any(|&k| k != 2))
        {
            return bad("binary-pair family requires exactly two binary chance variables".into());
        }
        Ok(())
    }
}

/// Stream seed for environment `index` under a config base seed.
pub fn env_stream_seed(config_seed: u64, index: u64) -> u64 {
    derive_seed(config_seed, &[0x656e76, index])
}

/// Draws one environment from the rejection sampler on the given stream.
/// Deterministic in `(config, stream_seed)`; `config.seed` plays no role
/// here (it seeds batch streams).
pub fn random_cid(config: &GeneratorConfig, stream_seed: u64) -> Result<Cid, EnvGenError> {
    config.validate()?;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(stream_seed, &[attempt]));
        if let Some(cid) = try_draw(config, &mut rng) {
            return Ok(cid);
        }
    }
    Err(EnvGenError::RejectionRateTooHigh {
        attempts: MAX_ATTEMPTS,
    })
}

/// Draws `count` environments on per-index streams derived from
/// `config.seed`.
pub fn generate_batch(config: &GeneratorConfig, count: usize) -> Result<Vec<Cid>, EnvGenError> {
    (0..count)
        .map(|i| random_cid(config, env_stream_seed(config.seed, i as u64)))
        .collect()
}

fn try_draw(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Option<Cid> {
    let n = config.n_chance;
    let decls: Vec<VariableDecl> = if config.graph_family == GraphFamily::BinaryPair {
        vec![VariableDecl::new("X", 2), VariableDecl::new("Y", 2)]
    } else {
        (0..n)
            .map(|i| VariableDecl::new(format!("C{i}"), config.cardinalities[i]))
            .collect()
    };
    let edges: Vec<(usize, usize)> = match config.graph_family {
        GraphFamily::BinaryPair => {
            if rng.random::<bool>() {
                vec![(0, 1)]
            } else {
                vec![(1, 0)]
            }
        }
        GraphFamily::RandomDag => {
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<bool>() {
                        edges.push((order[i], order[j]));
                    }
                }
            }
            edges
        }
    };
    let dag = Dag::new(decls, &edges).expect("generated orders are acyclic");

    let mut cpds = Vec::with_capacity(n);
    for v in 0..n {
        let parents = dag.parents(v).to_vec();
        let parent_cards: Vec<usize> = parents.iter().map(|&p| dag.cardinality(p)).collect();
        let card = dag.cardinality(v);
        let rows = state_count(&parent_cards);
        let mut table = Vec::with_capacity(rows);
        for _ in 0..rows {
            table.push(random_row(card, rng));
        }
        cpds.push(Cpd::new(v, parents, table));
    }
    let chance = Cbn::new(dag, cpds).expect("rows are normalized by construction");

    let utility_parents: Vec<usize> = (0..n).collect();
    let u_len = state_count(&config.cardinalities) * config.decision_cardinality;
    let utility_raw: Vec<f64> = (0..u_len).map(|_| rng.random::<f64>()).collect();

    let cid = Cid::new(
        chance,
        VariableDecl::new("D", config.decision_cardinality),
        vec![],
        utility_parents,
        utility_raw,
    )
    .ok()?;

    if !validate_assumptions(&cid).learnable() {
        return None;
    }
    if config.margin > 0.0 && !margins_hold(&cid, config.margin) {
        return None;
    }
    Some(cid)
}

/// A uniform CPD row: each free entry Uniform(0,1), the last the complement,
/// rows with a negative complement redrawn (uniform on the simplex).
fn random_row(card: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut row: Vec<f64> = (0..card - 1).map(|_| rng.random::<f64>()).collect();
        let head: f64 = row.iter().sum();
        if head <= 1.0 {
            row.push(1.0 - head);
            return row;
        }
    }
}

/// Margin checks on a constructed environment: every utility-parent state's
/// best decision wins by ≥ margin (normalized utilities), and for every edge
/// some single-coordinate context pair of the child's CPD differs by
/// ≥ margin in some state.
fn margins_hold(cid: &Cid, margin: f64) -> bool {
    let public = cid.public();
    let cards: Vec<usize> = public
        .utility_parents
        .iter()
        .map(|&p| public.cardinality(p))
        .collect();
    let k = public.decision.cardinality;
    let mut x = vec![0usize; cards.len()];
    loop {
        let mut best = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for d in 0..k {
            let u = public.utility_value(&x, d);
            if u > best {
                second = best;
                best = u;
            } else if u > second {
                second = u;
            }
        }
        if best - second < margin {
            return false;
        }
        if !next_state(&mut x, &cards) {
            break;
        }
    }

    let chance = cid.chance();
    for (u, v) in chance.dag().edges().collect::<Vec<_>>() {
        let cpd = chance.cpd(v);
        let parent_cards: Vec<usize> = cpd
            .parents
            .iter()
            .map(|&p| chance.dag().cardinality(p))
            .collect();
        let ui = cpd
            .parents
            .iter()
            .position(|&p| p == u)
            .expect("edge parent appears in child CPD");
        let mut max_diff = 0.0f64;
        let mut coords = vec![0usize; cpd.parents.len()];
        for row_a in 0..cpd.table.len() {
            crate::cbn::unpack_index(row_a, &parent_cards, &mut coords);
            for alt in coords[ui] + 1..parent_cards[ui] {
                let mut coords_b = coords.clone();
                coords_b[ui] = alt;
                let row_b = crate::cbn::pack_index(&coords_b, &parent_cards);
                for s in 0..cpd.table[row_a].len() {
                    max_diff = max_diff.max((cpd.table[row_a][s] - cpd.table[row_b][s]).abs());
                }
            }
        }
        if max_diff < margin {
            return false;
        }
    }
    true
}

/// Convenience: errors from constructing hand-specified environments are
/// distinct from generation errors; this bridges them for callers composing
/// both.
impl From<CidError> for EnvGenError {
    fn from(e: CidError) -> Self {
        EnvGenError::BadConfig {
            reason: e.to_string(),
        }
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let config = GeneratorConfig::binary_pair(42);
        let a = random_cid(&config, env_stream_seed(42, 0)).unwrap();
        let b = random_cid(&config, env_stream_seed(42, 0)).unwrap();
        assert_eq!(a, b);
        let c = random_cid(&config, env_stream_seed(42, 1)).unwrap();
        assert_ne!(a, c, "different streams should give different draws");
    }

    #[test]
    fn binary_pair_family_shape() {
        let config = GeneratorConfig::binary_pair(7);
        let envs = generate_batch(&config, 100).unwrap();
        let mut saw = [false, false];
        for cid in &envs {
            let edges: Vec<_> = cid.chance().dag().edges().collect();
            assert_eq!(edges.len(), 1, "binary pair always has exactly one edge");
            match edges[0] {
                (0, 1) => saw[0] = true,
                (1, 0) => saw[1] = true,
                other => panic!("unexpected edge {other:?}"),
            }
            assert!(validate_assumptions(cid).learnable());
        }
        assert!(saw[0] && saw[1], "both directions should occur in 100 draws");
    }

    #[test]
    fn margin_rejection_audit() {
        // Accepted environments must respect the margin: best decision wins
        // every state by ≥ margin and each edge is decided by ≥ margin.
        let mut config = GeneratorConfig::binary_pair(11);
        config.margin = 0.05;
        for i in 0..1000u64 {
            let cid = random_cid(&config, env_stream_seed(config.seed, i)).unwrap();
            let public = cid.public();
            for x0 in 0..2 {
                for x1 in 0..2 {
                    let u0 = public.utility_value(&[x0, x1], 0);
                    let u1 = public.utility_value(&[x0, x1], 1);
                    assert!(
                        (u0 - u1).abs() >= 0.05,
                        "env {i}: decision gap {} below margin at ({x0},{x1})",
                        (u0 - u1).abs()
                    );
                }
            }
            let (_, child) = cid.chance().dag().edges().next().unwrap();
            let cpd = cid.chance().cpd(child);
            assert!(
                (cpd.table[0][0] - cpd.table[1][0]).abs() >= 0.05,
                "env {i}: edge-deciding difference below margin"
            );
        }
    }

    #[test]
    fn random_dag_family_builds_learnable_models() {
        let config = GeneratorConfig {
            n_chance: 4,
            cardinalities: vec![2, 3, 2, 2],
            graph_family: GraphFamily::RandomDag,
            decision_cardinality: 3,
            margin: MARGIN_AUDIT,
            seed: 5,
        };
        let envs = generate_batch(&config, 20).unwrap();
        let mut edge_counts = std::collections::BTreeSet::new();
        for cid in &envs {
            assert!(validate_assumptions(cid).learnable());
            assert_eq!(cid.chance().dag().variable_count(), 4);
            assert_eq!(cid.decision_cardinality(), 3);
            edge_counts.insert(cid.chance().dag().edge_count());
        }
        assert!(edge_counts.len() > 1, "edge counts should vary across draws");
    }

    #[test]
    fn config_validation() {
        let mut bad = GeneratorConfig::binary_pair(1);
        bad.n_chance = 3;
        bad.cardinalities = vec![2, 2, 2];
        assert!(matches!(
            random_cid(&bad, 0),
            Err(EnvGenError::BadConfig { .. })
        ));
        let mut bad = GeneratorConfig::binary_pair(1);
        bad.cardinalities = vec![2];
        assert!(matches!(
            random_cid(&bad, 0),
            Err(EnvGenError::BadConfig { .. })
        ));
        let mut bad = GeneratorConfig::binary_pair(1);
        bad.margin = -0.2;
        assert!(matches!(
            random_cid(&bad, 0),
            Err(EnvGenError::BadConfig { .. })
        ));
        let mut zero = GeneratorConfig::binary_pair(1);
        zero.margin = 0.0;
        assert!(random_cid(&zero, 3).is_ok(), "margin 0 disables rejection only");
    }

    #[test]
    fn unsatisfiable_margin_is_a_config_error() {
        let mut config = GeneratorConfig::binary_pair(9);
        config.margin = 0.9;
        assert!(matches!(
            random_cid(&config, 0),
            Err(EnvGenError::RejectionRateTooHigh { .. })
        ));
    }
}

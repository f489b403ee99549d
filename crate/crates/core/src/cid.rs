//! Causal influence diagrams: a chance [`Cbn`], one decision variable, and
//! one utility node.
//!
//! The decision observes a subset of chance variables (its information
//! parents) and has no children, so the chance distribution never depends on
//! the policy. Utility is a table over a subset of chance variables plus the
//! decision, normalized to min 0 / max 1 at construction (the affine
//! parameters are retained for reporting regrets on the raw scale).
//!
//! [`PolicyOracle`] simulates an agent that plays some decision whose
//! conditional expected utility is within `delta` of optimal — the
//! regret-bounded oracles that model reconstruction queries. Oracle picks are
//! deterministic functions of (seed, shift, context), so repeated queries are
//! reproducible and order-independent.

use crate::cbn::{next_state, pack_index, state_count, Cbn, CbnError, InterventionSpec, VariableDecl};
use serde::{Deserialize, Serialize};

/// Tie tolerance for argmax sets and the δ-oracle admissibility boundary,
/// applied on the conditional expected-utility scale.
pub const EPS_TIE: f64 = 1e-12;

/// Utility ranges narrower than this cannot be normalized (and admit a
/// dominant decision trivially).
const MIN_UTILITY_RANGE: f64 = 1e-12;

// ── Errors ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CidError {
    #[error(transparent)]
    Chance(#[from] CbnError),
    #[error("decision name `{name}` collides with a chance variable")]
    DecisionNameClash { name: String },
    #[error("decision cardinality {cardinality} must be at least 2")]
    BadDecisionCardinality { cardinality: usize },
    #[error("variable index {index} out of range for chance network ({count} variables)")]
    BadChanceIndex { index: usize, count: usize },
    #[error("parent list contains variable index {index} twice")]
    DuplicateParent { index: usize },
    #[error("utility table has {len} entries, expected {expected}")]
    UtilityTableLength { len: usize, expected: usize },
    #[error("utility table contains a non-finite entry")]
    NonFiniteUtility,
    #[error("utility is constant (range below {MIN_UTILITY_RANGE}); cannot normalize")]
    ConstantUtility,
    #[error("domain shift touches the decision variable `{name}`")]
    ShiftTouchesDecision { name: String },
    #[error("oracle regret bound {delta} must be nonnegative and finite")]
    BadDelta { delta: f64 },
    #[error("policy has {rows} rows, expected one per decision context ({expected})")]
    PolicyRowCount { rows: usize, expected: usize },
    #[error("policy row {row} is not a distribution over {cardinality} decisions")]
    PolicyRow { row: usize, cardinality: usize },
    #[error("serialized model lists no variable named `{name}` for the decision")]
    DecisionUndeclared { name: String },
    #[error("utility parent list must end with the decision variable `{name}`")]
    DecisionNotLastInUtility { name: String },
    #[error("edge ({parent}, {child}) touches the decision; decision edges are implied by info_parents")]
    EdgeTouchesDecision { parent: String, child: String },
}

// ── Policies ────────────────────────────────────────────────────────────────

/// A stochastic decision rule: one distribution over decisions per joint
/// state of the information parents (mixed-radix order, first info parent
/// most significant).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub decision_cardinality: usize,
    pub rows: Vec<Vec<f64>>,
}

impl Policy {
    /// A deterministic policy from one decision per context.
    pub fn point(decision_cardinality: usize, decisions: &[usize]) -> Self {
        let rows = decisions
            .iter()
            .map(|&d| {
                let mut row = vec![0.0; decision_cardinality];
                row[d] = 1.0;
                row
            })
            .collect();
        Self {
            decision_cardinality,
            rows,
        }
    }

    /// The uniform policy over every context.
    pub fn uniform(decision_cardinality: usize, contexts: usize) -> Self {
        let row = vec![1.0 / decision_cardinality as f64; decision_cardinality];
        Self {
            decision_cardinality,
            rows: vec![row; contexts],
        }
    }

    /// Decisions with positive probability in the given context, ascending.
    pub fn support(&self, context: usize) -> Vec<usize> {
        self.rows[context]
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(d, _)| d)
            .collect()
    }

    /// The played decision when the context's row is a point mass.
    pub fn decision(&self, context: usize) -> Option<usize> {
        let row = &self.rows[context];
        let d = row.iter().position(|&p| p == 1.0)?;
        row.iter()
            .enumerate()
            .all(|(i, &p)| p == if i == d { 1.0 } else { 0.0 })
            .then_some(d)
    }
}

// ── The influence diagram ───────────────────────────────────────────────────

/// Per-context decision statistics under one shift.
///
/// `joint_utility[ctx][d] = Σ_{c ⊨ ctx} P(c; σ) · U(c, d)` — the
/// joint-weighted expected utility, linear in mixture weights of σ. Dividing
/// by `context_prob[ctx]` gives the conditional expected utility of playing
/// `d` in that context.
#[derive(Clone, Debug)]
pub struct DecisionTables {
    pub context_prob: Vec<f64>,
    pub joint_utility: Vec<Vec<f64>>,
}

/// A single-decision causal influence diagram over categorical variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Cid {
    chance: Cbn,
    decision: VariableDecl,
    info_parents: Vec<usize>,
    utility_parents: Vec<usize>,
    utility: Vec<f64>,
    raw_scale: f64,
    raw_offset: f64,
}

impl Cid {
    /// Builds and validates a CID. `utility_raw` is mixed-radix over the
    /// chance utility parents (declared order, first most significant) with
    /// the decision as the last, fastest-varying axis; it is normalized to
    /// min 0 / max 1 here.
    pub fn new(
        chance: Cbn,
        decision: VariableDecl,
        info_parents: Vec<usize>,
        utility_parents: Vec<usize>,
        utility_raw: Vec<f64>,
    ) -> Result<Self, CidError> {
        if decision.cardinality < 2 {
            return Err(CidError::BadDecisionCardinality {
                cardinality: decision.cardinality,
            });
        }
        if chance.dag().index_of(&decision.name).is_some() {
            return Err(CidError::DecisionNameClash {
                name: decision.name,
            });
        }
        let n = chance.variable_count();
        for list in [&info_parents, &utility_parents] {
            let mut seen = vec![false; n];
            for &p in list.iter() {
                if p >= n {
                    return Err(CidError::BadChanceIndex { index: p, count: n });
                }
                if seen[p] {
                    return Err(CidError::DuplicateParent { index: p });
                }
                seen[p] = true;
            }
        }
        let pa_cards: Vec<usize> = utility_parents
            .iter()
            .map(|&p| chance.dag().cardinality(p))
            .collect();
        let expected = state_count(&pa_cards) * decision.cardinality;
        if utility_raw.len() != expected {
            return Err(CidError::UtilityTableLength {
                len: utility_raw.len(),
                expected,
            });
        }
        if utility_raw.iter().any(|u| !u.is_finite()) {
            return Err(CidError::NonFiniteUtility);
        }
        let lo = utility_raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = utility_raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        if range < MIN_UTILITY_RANGE {
            return Err(CidError::ConstantUtility);
        }
        let utility = utility_raw.iter().map(|&u| (u - lo) / range).collect();
        Ok(Self {
            chance,
            decision,
            info_parents,
            utility_parents,
            utility,
            raw_scale: range,
            raw_offset: lo,
        })
    }

    pub fn chance(&self) -> &Cbn {
        &self.chance
    }

    pub fn decision(&self) -> &VariableDecl {
        &self.decision
    }

    pub fn decision_cardinality(&self) -> usize {
        self.decision.cardinality
    }

    /// Chance indices the decision observes, in context layout order.
    pub fn info_parents(&self) -> &[usize] {
        &self.info_parents
    }

    /// Chance indices the utility reads (the decision is implicitly last).
    pub fn utility_parents(&self) -> &[usize] {
        &self.utility_parents
    }

    /// Normalized utility table (decision last, fastest-varying).
    pub fn utility_table(&self) -> &[f64] {
        &self.utility
    }

    /// Affine parameters mapping normalized utility back to the raw scale:
    /// `raw = scale · normalized + offset`.
    pub fn raw_affine(&self) -> (f64, f64) {
        (self.raw_scale, self.raw_offset)
    }

    /// Number of decision contexts (joint info-parent states).
    pub fn context_count(&self) -> usize {
        self.info_parents
            .iter()
            .map(|&p| self.chance.dag().cardinality(p))
            .product()
    }

    /// Normalized utility of deciding `d` with the chance utility parents in
    /// `pa_states` (declared order).
    pub fn utility_value(&self, pa_states: &[usize], d: usize) -> f64 {
        let mut idx = 0;
        for (&p, &s) in self.utility_parents.iter().zip(pa_states) {
            idx = idx * self.chance.dag().cardinality(p) + s;
        }
        self.utility[idx * self.decision.cardinality + d]
    }

    /// Normalized utility of deciding `d` under a full chance assignment.
    pub fn utility_from_assignment(&self, assignment: &[usize], d: usize) -> f64 {
        let mut idx = 0;
        for &p in &self.utility_parents {
            idx = idx * self.chance.dag().cardinality(p) + assignment[p];
        }
        self.utility[idx * self.decision.cardinality + d]
    }

    fn check_shift(&self, shift: &InterventionSpec) -> Result<(), CidError> {
        if shift.touched_variables().contains(self.decision.name.as_str()) {
            return Err(CidError::ShiftTouchesDecision {
                name: self.decision.name.clone(),
            });
        }
        Ok(())
    }

    /// Enumerates the chance joint under `shift` into per-context decision
    /// statistics. The workhorse behind every policy and regret computation.
    pub fn decision_tables(&self, shift: &InterventionSpec) -> Result<DecisionTables, CidError> {
        self.check_shift(shift)?;
        let model = self.chance.intervene(shift)?;
        let cards = self.chance.dag().cardinalities();
        let ctx_cards: Vec<usize> = self.info_parents.iter().map(|&p| cards[p]).collect();
        let contexts = state_count(&ctx_cards);
        let k = self.decision.cardinality;
        let mut context_prob = vec![0.0; contexts];
        let mut joint_utility = vec![vec![0.0; k]; contexts];
        let mut state = vec![0usize; cards.len()];
        let mut ctx_state = vec![0usize; self.info_parents.len()];
        loop {
            let p = model.joint_probability(&state)?;
            if p != 0.0 {
                for (i, &ip) in self.info_parents.iter().enumerate() {
                    ctx_state[i] = state[ip];
                }
                let ctx = pack_index(&ctx_state, &ctx_cards);
                context_prob[ctx] += p;
                for (d, ju) in joint_utility[ctx].iter_mut().enumerate() {
                    *ju += p * self.utility_from_assignment(&state, d);
                }
            }
            if !next_state(&mut state, &cards) {
                break;
            }
        }
        Ok(DecisionTables {
            context_prob,
            joint_utility,
        })
    }

    /// `E[U; π, σ]` under the normalized utility.
    pub fn expected_utility(
        &self,
        policy: &Policy,
        shift: &InterventionSpec,
    ) -> Result<f64, CidError> {
        self.check_policy(policy)?;
        let tables = self.decision_tables(shift)?;
        Ok(expected_utility_from_tables(&tables, policy))
    }

    fn check_policy(&self, policy: &Policy) -> Result<(), CidError> {
        let contexts = self.context_count();
        if policy.rows.len() != contexts {
            return Err(CidError::PolicyRowCount {
                rows: policy.rows.len(),
                expected: contexts,
            });
        }
        for (r, row) in policy.rows.iter().enumerate() {
            let ok = row.len() == self.decision.cardinality
                && row.iter().all(|&p| (0.0..=1.0).contains(&p))
                && (row.iter().sum::<f64>() - 1.0).abs() <= crate::cbn::ROW_SUM_TOL;
            if !ok {
                return Err(CidError::PolicyRow {
                    row: r,
                    cardinality: self.decision.cardinality,
                });
            }
        }
        Ok(())
    }

    /// Conditional expected utilities `E[U | d, pa_D; σ]` per context;
    /// `None` where the context has probability 0 (the conditional is
    /// undefined there).
    pub fn conditional_expected_utility(
        &self,
        shift: &InterventionSpec,
    ) -> Result<Vec<Option<Vec<f64>>>, CidError> {
        let tables = self.decision_tables(shift)?;
        Ok(tables
            .context_prob
            .iter()
            .zip(&tables.joint_utility)
            .map(|(&pden, joint)| {
                (pden > 0.0).then(|| joint.iter().map(|&g| g / pden).collect())
            })
            .collect())
    }

    /// The optimal policy under `shift`: per positive-probability context,
    /// uniform over the argmax set of conditional expected utility (ties
    /// within [`EPS_TIE`]); zero-probability contexts get the uniform policy.
    pub fn optimal_policy(&self, shift: &InterventionSpec) -> Result<Policy, CidError> {
        let tables = self.decision_tables(shift)?;
        Ok(optimal_policy_from_tables(&tables, self.decision.cardinality))
    }

    /// `E[U; π*, σ] − E[U; π, σ]` on the normalized scale; nonnegative.
    pub fn regret(&self, policy: &Policy, shift: &InterventionSpec) -> Result<f64, CidError> {
        self.check_policy(policy)?;
        let tables = self.decision_tables(shift)?;
        let best = optimal_policy_from_tables(&tables, self.decision.cardinality);
        let gap = expected_utility_from_tables(&tables, &best)
            - expected_utility_from_tables(&tables, policy);
        Ok(gap.max(0.0))
    }

    /// The learner-visible half of the diagram: everything except the chance
    /// graph and its CPDs.
    pub fn public(&self) -> CidPublic {
        CidPublic {
            variables: self.chance.dag().variables().to_vec(),
            decision: self.decision.clone(),
            info_parents: self.info_parents.clone(),
            utility_parents: self.utility_parents.clone(),
            utility: self.utility.clone(),
        }
    }
}

fn expected_utility_from_tables(tables: &DecisionTables, policy: &Policy) -> f64 {
    tables
        .joint_utility
        .iter()
        .zip(&policy.rows)
        .map(|(joint, row)| joint.iter().zip(row).map(|(g, p)| g * p).sum::<f64>())
        .sum()
}

fn optimal_policy_from_tables(tables: &DecisionTables, k: usize) -> Policy {
    let rows = tables
        .context_prob
        .iter()
        .zip(&tables.joint_utility)
        .map(|(&pden, joint)| {
            if pden <= 0.0 {
                return vec![1.0 / k as f64; k];
            }
            let cond: Vec<f64> = joint.iter().map(|&g| g / pden).collect();
            let best = cond.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let winners: Vec<usize> = (0..k).filter(|&d| cond[d] >= best - EPS_TIE).collect();
            let mut row = vec![0.0; k];
            let w = 1.0 / winners.len() as f64;
            for d in winners {
                row[d] = w;
            }
            row
        })
        .collect();
    Policy {
        decision_cardinality: k,
        rows,
    }
}

/// Optimal policy computed against an estimated chance model instead of the
/// true one, keeping the true diagram's decision and utility. Estimates
/// typically come from model reconstruction; the regret such a policy incurs
/// against the true diagram is measured with [`Cid::regret`].
pub fn policy_from_approximate_model(
    public: &CidPublic,
    estimate: &Cbn,
    shift: &InterventionSpec,
) -> Result<Policy, CidError> {
    let surrogate = Cid::new(
        estimate.clone(),
        public.decision.clone(),
        public.info_parents.clone(),
        public.utility_parents.clone(),
        public.utility.clone(),
    )?;
    surrogate.optimal_policy(shift)
}

// ── Learner-visible interface ───────────────────────────────────────────────

/// What a model-reconstruction procedure is allowed to see: variable
/// declarations, the decision, its information parents, and the (normalized)
/// utility — but not the chance graph or CPDs.
#[derive(Clone, Debug, PartialEq)]
pub struct CidPublic {
    pub variables: Vec<VariableDecl>,
    pub decision: VariableDecl,
    pub info_parents: Vec<usize>,
    pub utility_parents: Vec<usize>,
    pub utility: Vec<f64>,
}

impl CidPublic {
    pub fn cardinality(&self, v: usize) -> usize {
        self.variables[v].cardinality
    }

    /// Normalized utility of deciding `d` with the chance utility parents in
    /// `pa_states` (declared order).
    pub fn utility_value(&self, pa_states: &[usize], d: usize) -> f64 {
        let mut idx = 0;
        for (&p, &s) in self.utility_parents.iter().zip(pa_states) {
            idx = idx * self.variables[p].cardinality + s;
        }
        self.utility[idx * self.decision.cardinality + d]
    }
}

// ── Assumption validation ───────────────────────────────────────────────────

/// Pass/fail per learnability condition, with witnesses for failures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// The decision has no chance children, so no decision influence can
    /// reach the utility except through the utility's own decision axis.
    /// Structural in this representation.
    pub unmediated: bool,
    /// No decision is optimal for every utility-parent state.
    pub no_dominant_decision: bool,
    /// A dominant decision, if one exists.
    pub dominant_decision: Option<usize>,
    /// Info parents are a strict subset of the utility's chance ancestors.
    pub info_parents_strict_subset: bool,
    /// The utility reads the decision directly. Structural here.
    pub decision_in_utility: bool,
    /// `Anc_U ⊆ Pa_D`: the optimal policy is the same under every shift
    /// (nothing to learn from shifts when this holds).
    pub domain_independent: bool,
}

impl AssumptionReport {
    /// True when the diagram is learnable: all of the conditions hold and
    /// the diagram is not domain independent.
    pub fn learnable(&self) -> bool {
        self.unmediated
            && self.no_dominant_decision
            && self.info_parents_strict_subset
            && self.decision_in_utility
            && !self.domain_independent
    }
}

/// Evaluates the learnability conditions for a diagram.
pub fn validate_assumptions(cid: &Cid) -> AssumptionReport {
    let dag = cid.chance.dag();
    // Chance ancestors of the utility: its chance parents and all of theirs.
    let mut anc_u: Vec<bool> = vec![false; dag.variable_count()];
    for &p in cid.utility_parents() {
        anc_u[p] = true;
        for a in dag.ancestors(p) {
            anc_u[a] = true;
        }
    }
    let info_subset = cid.info_parents().iter().all(|&p| anc_u[p]);
    let info_strict =
        info_subset && anc_u.iter().filter(|&&b| b).count() > cid.info_parents().len();

    let k = cid.decision_cardinality();
    let pa_cards: Vec<usize> = cid
        .utility_parents()
        .iter()
        .map(|&p| dag.cardinality(p))
        .collect();
    let mut dominant = None;
    for d in 0..k {
        let mut pa_state = vec![0usize; pa_cards.len()];
        let mut everywhere_best = true;
        loop {
            let u_d = cid.utility_value(&pa_state, d);
            let best = (0..k)
                .map(|d2| cid.utility_value(&pa_state, d2))
                .fold(f64::NEG_INFINITY, f64::max);
            if u_d < best - EPS_TIE {
                everywhere_best = false;
                break;
            }
            if !next_state(&mut pa_state, &pa_cards) {
                break;
            }
        }
        if everywhere_best {
            dominant = Some(d);
            break;
        }
    }

    let info_covers_anc = anc_u
        .iter()
        .enumerate()
        .all(|(v, &is_anc)| !is_anc || cid.info_parents().contains(&v));

    AssumptionReport {
        unmediated: true,
        no_dominant_decision: dominant.is_none(),
        dominant_decision: dominant,
        info_parents_strict_subset: info_strict,
        decision_in_utility: true,
        domain_independent: info_covers_anc,
    }
}

// ── Keyed randomization ─────────────────────────────────────────────────────
//
// Oracle picks must be identical across process runs and thread schedules,
// and independent across distinct shifts. Each pick is keyed by folding
// (seed, shift structure, context, shift mixture-weights) through a 64-bit
// mixer. Mixture weights fold last — deepest first — so callers that sweep a
// family of mixtures differing only in the outermost weights can precompute
// everything up to those weights.

/// SplitMix64 finalizer: a full-avalanche 64-bit mixer.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub(crate) fn fold(state: u64, word: u64) -> u64 {
    splitmix64(state ^ word)
}

/// Canonical encoding of a shift against a variable-name resolver:
/// `structure` covers tags, variables, values, and maps; `weights` collects
/// every mixture weight's bit pattern, children before their own mixture's
/// weights (deepest first, outermost last).
pub(crate) fn spec_words(
    spec: &InterventionSpec,
    resolve: &impl Fn(&str) -> usize,
) -> (Vec<u64>, Vec<u64>) {
    let mut structure = Vec::new();
    let mut weights = Vec::new();
    walk_spec(spec, resolve, &mut structure, &mut weights);
    (structure, weights)
}

fn walk_spec(
    spec: &InterventionSpec,
    resolve: &impl Fn(&str) -> usize,
    structure: &mut Vec<u64>,
    weights: &mut Vec<u64>,
) {
    match spec {
        InterventionSpec::Null => structure.push(0),
        InterventionSpec::Hard { variable, value } => {
            structure.extend([1, resolve(variable) as u64, *value as u64]);
        }
        InterventionSpec::Local { variable, map } => {
            structure.extend([2, resolve(variable) as u64, map.len() as u64]);
            structure.extend(map.iter().map(|&t| t as u64));
        }
        InterventionSpec::Mixture { components } => {
            structure.extend([3, components.len() as u64]);
            for c in components {
                walk_spec(&c.spec, resolve, structure, weights);
            }
            weights.extend(components.iter().map(|c| c.weight.to_bits()));
        }
        InterventionSpec::Composite { parts } => {
            structure.extend([4, parts.len() as u64]);
            for p in parts {
                walk_spec(p, resolve, structure, weights);
            }
        }
    }
}

/// Folds seed, structure, and context — everything that stays fixed while
/// mixture weights vary.
pub(crate) fn prepare_key_prefix(seed: u64, structure: &[u64], context: usize) -> u64 {
    let mut state = fold(0x72656772_65743263, seed); // constant domain tag
    for &w in structure {
        state = fold(state, w);
    }
    fold(state, context as u64)
}

pub(crate) fn finalize_key(prefix: u64, weights: &[u64]) -> u64 {
    let mut state = prefix;
    for &w in weights {
        state = fold(state, w);
    }
    splitmix64(state)
}

/// Unbiased-enough uniform pick from `0..len` (fixed-point multiply).
pub(crate) fn pick_uniform(key: u64, len: usize) -> usize {
    ((key as u128 * len as u128) >> 64) as usize
}

// ── Regret-bounded policy oracles ───────────────────────────────────────────

/// A simulated agent with bounded regret: on each query it plays, per
/// context, some decision whose conditional expected utility is within
/// `delta` of the best (every decision, for zero-probability contexts). The
/// pick is uniform over that admissible set, derandomized by keying on
/// (seed, shift, context).
#[derive(Clone, Debug)]
pub struct PolicyOracle {
    cid: Cid,
    delta: f64,
    seed: u64,
}

/// Builds a regret-bounded oracle; `delta = 0` plays optimally everywhere.
pub fn make_delta_oracle(cid: Cid, delta: f64, seed: u64) -> Result<PolicyOracle, CidError> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(CidError::BadDelta { delta });
    }
    Ok(PolicyOracle { cid, delta, seed })
}

impl PolicyOracle {
    pub fn cid(&self) -> &Cid {
        &self.cid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The oracle's policy under `shift`: a point decision per context.
    pub fn query(&self, shift: &InterventionSpec) -> Result<Policy, CidError> {
        self.cid.check_shift(shift)?;
        let tables = self.cid.decision_tables(shift)?;
        let dag = self.cid.chance.dag();
        let resolve = |name: &str| dag.index_of(name).expect("shift validated against model");
        let (structure, weights) = spec_words(shift, &resolve);
        let k = self.cid.decision_cardinality();
        let decisions: Vec<usize> = (0..tables.context_prob.len())
            .map(|ctx| {
                let admissible = admissible_set(
                    tables.context_prob[ctx],
                    &tables.joint_utility[ctx],
                    self.delta,
                    k,
                );
                let key = finalize_key(prepare_key_prefix(self.seed, &structure, ctx), &weights);
                admissible[pick_uniform(key, admissible.len())]
            })
            .collect();
        Ok(Policy::point(k, &decisions))
    }

    /// The oracle's decision in one context under `shift`.
    pub fn decision(&self, shift: &InterventionSpec, context: usize) -> Result<usize, CidError> {
        let policy = self.query(shift)?;
        Ok(policy.decision(context).expect("oracle rows are point masses"))
    }
}

/// Decisions within `delta` of the best conditional expected utility
/// (boundary inclusive within [`EPS_TIE`]); all decisions when the context
/// has probability 0. Ascending, never empty.
pub(crate) fn admissible_set(pden: f64, joint: &[f64], delta: f64, k: usize) -> Vec<usize> {
    if pden <= 0.0 {
        return (0..k).collect();
    }
    // Conditional criterion E[u|d] ≥ max − δ, scaled through by pden > 0 to
    // stay in the joint-weighted tables.
    let best = joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cut = best - (delta + EPS_TIE) * pden;
    (0..k).filter(|&d| joint[d] >= cut).collect()
}

// ── JSON schema ─────────────────────────────────────────────────────────────

/// Serialized influence diagram: the chance-model schema with the decision
/// variable appended to `variables` (no CPD for it), plus
/// `"decision":{"name":…,"info_parents":[…]}` and
/// `"utility":{"parents":[…],"table":[…]}`. The utility's parent list ends
/// with the decision variable; its table is mixed-radix in that parent order
/// (decision last ⇒ fastest-varying), flattened to one list. Edges connect
/// chance variables only — the decision's incoming edges are implied by
/// `info_parents`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CidJson {
    pub variables: Vec<VariableDecl>,
    pub edges: Vec<[String; 2]>,
    pub cpds: Vec<crate::cbn::CpdJson>,
    pub decision: DecisionJson,
    pub utility: UtilityJson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecisionJson {
    pub name: String,
    pub info_parents: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UtilityJson {
    pub parents: Vec<String>,
    pub table: Vec<f64>,
}

impl Cid {
    /// Serializes with the normalized utility table (round-trip stable).
    pub fn to_json(&self) -> CidJson {
        let chance_json = self.chance.to_json();
        let dag = self.chance.dag();
        let mut variables = chance_json.variables;
        variables.push(self.decision.clone());
        let mut utility_parents: Vec<String> = self
            .utility_parents
            .iter()
            .map(|&p| dag.name(p).to_string())
            .collect();
        utility_parents.push(self.decision.name.clone());
        CidJson {
            variables,
            edges: chance_json.edges,
            cpds: chance_json.cpds,
            decision: DecisionJson {
                name: self.decision.name.clone(),
                info_parents: self
                    .info_parents
                    .iter()
                    .map(|&p| dag.name(p).to_string())
                    .collect(),
            },
            utility: UtilityJson {
                parents: utility_parents,
                table: self.utility.clone(),
            },
        }
    }

    pub fn from_json(json: &CidJson) -> Result<Self, CidError> {
        let d_pos = json
            .variables
            .iter()
            .position(|v| v.name == json.decision.name)
            .ok_or_else(|| CidError::DecisionUndeclared {
                name: json.decision.name.clone(),
            })?;
        let decision = json.variables[d_pos].clone();
        let chance_vars: Vec<VariableDecl> = json
            .variables
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != d_pos)
            .map(|(_, v)| v.clone())
            .collect();
        for [p, c] in &json.edges {
            if *p == decision.name || *c == decision.name {
                return Err(CidError::EdgeTouchesDecision {
                    parent: p.clone(),
                    child: c.clone(),
                });
            }
        }
        let chance = Cbn::from_json(&crate::cbn::CbnJson {
            variables: chance_vars,
            edges: json.edges.clone(),
            cpds: json.cpds.clone(),
        })?;
        let lookup = |name: &str| -> Result<usize, CidError> {
            chance
                .dag()
                .index_of(name)
                .ok_or_else(|| CbnError::UnknownVariable {
                    name: name.to_string(),
                }.into())
        };
        let info_parents = json
            .decision
            .info_parents
            .iter()
            .map(|n| lookup(n))
            .collect::<Result<Vec<_>, _>>()?;
        match json.utility.parents.last() {
            Some(last) if *last == decision.name => {}
            _ => {
                return Err(CidError::DecisionNotLastInUtility {
                    name: decision.name.clone(),
                })
            }
        }
        let utility_parents = json.utility.parents[..json.utility.parents.len() - 1]
            .iter()
            .map(|n| lookup(n))
            .collect::<Result<Vec<_>, _>>()?;
        Cid::new(
            chance,
            decision,
            info_parents,
            utility_parents,
            json.utility.table.clone(),
        )
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::env_a;
    use crate::cbn::MixtureComponent;

    fn hard(variable: &str, value: usize) -> InterventionSpec {
        InterventionSpec::Hard {
            variable: variable.into(),
            value,
        }
    }

    #[test]
    fn expected_utility_by_decision_under_null() {
        let cid = env_a();
        let always = |d| Policy::point(2, &[d]);
        let e0 = cid.expected_utility(&always(0), &InterventionSpec::Null).unwrap();
        let e1 = cid.expected_utility(&always(1), &InterventionSpec::Null).unwrap();
        assert!((e0 - 0.5).abs() < 1e-15);
        assert!((e1 - 0.38).abs() < 1e-15, "0.62·0 + 0.38·1 = 0.38, got {e1}");
    }

    #[test]
    fn optimal_policy_flips_with_shift() {
        let cid = env_a();
        let null = cid.optimal_policy(&InterventionSpec::Null).unwrap();
        assert_eq!(null.decision(0), Some(0), "0.5 > 0.38");
        let shifted = cid.optimal_policy(&hard("X", 1)).unwrap();
        assert_eq!(shifted.decision(0), Some(1), "0.8 > 0.5");
    }

    #[test]
    fn regret_matches_hand_values() {
        let cid = env_a();
        let null = InterventionSpec::Null;
        let best = cid.optimal_policy(&null).unwrap();
        assert_eq!(cid.regret(&best, &null).unwrap(), 0.0);
        let r1 = cid.regret(&Policy::point(2, &[1]), &null).unwrap();
        assert!((r1 - 0.12).abs() < 1e-15);
        let ru = cid.regret(&Policy::uniform(2, 1), &null).unwrap();
        assert!((ru - 0.06).abs() < 1e-15);
    }

    #[test]
    fn majority_class_utility() {
        // U(d, x) = [d = x] with P(X=1) = 0.9: match the likely state.
        let dag = crate::cbn::Dag::new(vec![VariableDecl::new("X", 2)], &[]).unwrap();
        let chance = Cbn::new(dag, vec![crate::cbn::Cpd::new(0, vec![], vec![vec![0.1, 0.9]])])
            .unwrap();
        let cid = Cid::new(
            chance,
            VariableDecl::new("D", 2),
            vec![],
            vec![0],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let pi = cid.optimal_policy(&InterventionSpec::Null).unwrap();
        assert_eq!(pi.decision(0), Some(1));
    }

    #[test]
    fn delta_oracle_admissibility_boundary() {
        let cid = env_a();
        // The decision gap under Null is exactly 0.12.
        let wide = make_delta_oracle(cid.clone(), 0.12, 3).unwrap();
        let narrow = make_delta_oracle(cid, 0.119, 3).unwrap();
        let tables = wide.cid().decision_tables(&InterventionSpec::Null).unwrap();
        let adm_wide = admissible_set(tables.context_prob[0], &tables.joint_utility[0], 0.12, 2);
        let adm_narrow = admissible_set(tables.context_prob[0], &tables.joint_utility[0], 0.119, 2);
        assert_eq!(adm_wide, vec![0, 1]);
        assert_eq!(adm_narrow, vec![0]);
        assert_eq!(narrow.decision(&InterventionSpec::Null, 0).unwrap(), 0);
    }

    #[test]
    fn zero_delta_matches_optimal_policy() {
        let cid = env_a();
        let oracle = make_delta_oracle(cid.clone(), 0.0, 9).unwrap();
        for shift in [InterventionSpec::Null, hard("X", 1), hard("Y", 0)] {
            let picked = oracle.decision(&shift, 0).unwrap();
            let best = cid.optimal_policy(&shift).unwrap();
            assert!(best.support(0).contains(&picked));
        }
    }

    #[test]
    fn vacuous_delta_spreads_over_both_decisions() {
        let cid = env_a();
        let mut seen = [false; 2];
        for seed in 0..32 {
            let oracle = make_delta_oracle(cid.clone(), 1.0, seed).unwrap();
            seen[oracle.decision(&InterventionSpec::Null, 0).unwrap()] = true;
        }
        assert_eq!(seen, [true, true], "both decisions admissible at δ = 1");
    }

    #[test]
    fn oracle_is_deterministic_per_key() {
        let cid = env_a();
        let oracle = make_delta_oracle(cid, 0.3, 42).unwrap();
        let shift = InterventionSpec::Mixture {
            components: vec![
                MixtureComponent {
                    weight: 0.375,
                    spec: hard("X", 1),
                },
                MixtureComponent {
                    weight: 0.625,
                    spec: InterventionSpec::Composite {
                        parts: vec![hard("X", 0), hard("Y", 0)],
                    },
                },
            ],
        };
        let a = oracle.query(&shift).unwrap();
        let b = oracle.query(&shift).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_soundness_regret_within_delta() {
        let cid = env_a();
        for delta in [0.0, 0.05, 0.12, 0.3] {
            for seed in 0..8 {
                let oracle = make_delta_oracle(cid.clone(), delta, seed).unwrap();
                for shift in [InterventionSpec::Null, hard("X", 1), hard("Y", 1)] {
                    let pi = oracle.query(&shift).unwrap();
                    let r = cid.regret(&pi, &shift).unwrap();
                    assert!(r <= delta + 1e-12, "regret {r} over bound {delta}");
                }
            }
        }
    }

    #[test]
    fn assumptions_pass_on_reference_model() {
        let report = validate_assumptions(&env_a());
        assert!(report.unmediated);
        assert!(report.no_dominant_decision);
        assert!(report.info_parents_strict_subset);
        assert!(report.decision_in_utility);
        assert!(!report.domain_independent);
        assert!(report.learnable());
    }

    #[test]
    fn dominant_decision_detected() {
        let chance = crate::fixtures::chain_xy();
        let cid = Cid::new(
            chance,
            VariableDecl::new("D", 2),
            vec![],
            vec![1],
            vec![0.9, 0.1, 1.0, 0.2], // d=0 beats d=1 at every y
        )
        .unwrap();
        let report = validate_assumptions(&cid);
        assert!(!report.no_dominant_decision);
        assert_eq!(report.dominant_decision, Some(0));
        assert!(!report.learnable());
    }

    #[test]
    fn full_observation_is_domain_independent() {
        let chance = crate::fixtures::chain_xy();
        let cid = Cid::new(
            chance,
            VariableDecl::new("D", 2),
            vec![0, 1], // observes every chance ancestor of the utility
            vec![1],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let report = validate_assumptions(&cid);
        assert!(report.domain_independent);
        assert!(!report.learnable());
    }

    #[test]
    fn constant_utility_rejected() {
        let chance = crate::fixtures::chain_xy();
        let r = Cid::new(
            chance,
            VariableDecl::new("D", 2),
            vec![],
            vec![1],
            vec![0.5; 4],
        );
        assert!(matches!(r, Err(CidError::ConstantUtility)));
    }

    #[test]
    fn utility_normalization_keeps_argmax() {
        // 3·U + 7 must induce the same optimal policy and scaled regret.
        let chance = crate::fixtures::chain_xy();
        let build = |table: Vec<f64>| {
            Cid::new(
                chance.clone(),
                VariableDecl::new("D", 2),
                vec![],
                vec![1],
                table,
            )
            .unwrap()
        };
        let base = build(vec![0.5, 0.0, 0.5, 1.0]);
        let scaled = build([0.5, 0.0, 0.5, 1.0].iter().map(|u| 3.0 * u + 7.0).collect());
        assert_eq!(scaled.utility_table(), base.utility_table());
        let (scale, offset) = scaled.raw_affine();
        assert!((scale - 3.0).abs() < 1e-12 && (offset - 7.0).abs() < 1e-12);
        let null = InterventionSpec::Null;
        assert_eq!(
            base.optimal_policy(&null).unwrap(),
            scaled.optimal_policy(&null).unwrap()
        );
    }

    #[test]
    fn shift_touching_decision_rejected() {
        let cid = env_a();
        let r = cid.expected_utility(&Policy::point(2, &[0]), &hard("D", 1));
        assert!(matches!(r, Err(CidError::ShiftTouchesDecision { .. })));
    }

    #[test]
    fn json_roundtrip_and_schema_keys() {
        let cid = env_a();
        let text = serde_json::to_string(&cid.to_json()).unwrap();
        assert!(text.contains("\"decision\":{\"name\":\"D\",\"info_parents\":[]}"));
        assert!(text.contains("\"utility\""));
        assert!(text.contains("\"parents\":[\"Y\",\"D\"]"));
        let parsed: CidJson = serde_json::from_str(&text).unwrap();
        let back = Cid::from_json(&parsed).unwrap();
        assert_eq!(back, cid);
    }

    #[test]
    fn json_requires_decision_last_in_utility() {
        let mut json = env_a().to_json();
        json.utility.parents = vec!["D".into(), "Y".into()];
        assert!(matches!(
            Cid::from_json(&json),
            Err(CidError::DecisionNotLastInUtility { .. })
        ));
    }
}

//! Categorical causal Bayesian networks.
//!
//! A [`Cbn`] is a DAG over categorical variables plus one conditional
//! probability table per variable. Interventions are described by
//! [`InterventionSpec`] values — hard settings, local state-maps, mixtures,
//! and per-variable composites — and applied with [`Cbn::intervene`], which
//! yields an [`IntervenedModel`] supporting exact joint, marginal, and
//! conditional queries by enumeration, plus ancestral sampling.
//!
//! Scope is desk scale: exact queries enumerate the full joint state space,
//! which is practical up to roughly eight variables of cardinality four.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// Tolerance for CPD row sums and mixture weight sums; rows within this of 1
/// are renormalized at construction, anything further off is rejected.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Tolerance for the full joint distribution summing to 1.
pub const JOINT_SUM_TOL: f64 = 1e-9;

// ── Errors ──────────────────────────────────────────────────────────────────

/// Validation and query failures for model construction and interventions.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CbnError {
    #[error("variable name `{name}` is declared more than once")]
    DuplicateVariable { name: String },
    #[error("cardinality of `{name}` is {cardinality}, must be at least 2")]
    BadCardinality { name: String, cardinality: usize },
    #[error("edge ({parent}, {child}) references an undeclared variable")]
    UnknownEdgeEndpoint { parent: usize, child: usize },
    #[error("graph has a cycle (no topological order exists)")]
    Cyclic,
    #[error("unknown variable `{name}`")]
    UnknownVariable { name: String },
    #[error("variable index {index} out of range ({count} variables)")]
    VariableIndexOutOfRange { index: usize, count: usize },
    #[error("state {state} out of range for variable `{name}` (cardinality {cardinality})")]
    StateOutOfRange {
        name: String,
        state: usize,
        cardinality: usize,
    },
    #[error("model needs exactly one CPD per variable; `{name}` has {count}")]
    CpdCount { name: String, count: usize },
    #[error("CPD for `{name}` lists parents that differ from the graph's parent set")]
    CpdParentMismatch { name: String },
    #[error("CPD for `{name}` has {rows} rows, expected {expected} (one per joint parent state)")]
    CpdRowCount {
        name: String,
        rows: usize,
        expected: usize,
    },
    #[error("CPD row {row} for `{name}` has {len} entries, expected cardinality {cardinality}")]
    CpdRowLength {
        name: String,
        row: usize,
        len: usize,
        cardinality: usize,
    },
    #[error("CPD row {row} for `{name}` sums to {sum}, outside 1 ± {tol}")]
    CpdRowSum {
        name: String,
        row: usize,
        sum: f64,
        tol: f64,
    },
    #[error("CPD entry at row {row} for `{name}` is {value}, outside [0, 1]")]
    CpdEntryRange { name: String, row: usize, value: f64 },
    #[error("joint distribution sums to {sum}, outside 1 ± {tol}")]
    JointSum { sum: f64, tol: f64 },
    #[error("local map for `{name}` has {len} entries, must be total on {cardinality} states")]
    LocalMapNotTotal {
        name: String,
        len: usize,
        cardinality: usize,
    },
    #[error("mixture weight {weight} is negative")]
    NegativeMixtureWeight { weight: f64 },
    #[error("mixture weights sum to {sum}, outside 1 ± {tol}")]
    MixtureWeightSum { sum: f64, tol: f64 },
    #[error("mixture has no components")]
    EmptyMixture,
    #[error("composite intervention touches `{name}` more than once")]
    CompositeDuplicate { name: String },
    #[error("composite parts must be hard or local interventions, found {found}")]
    CompositeBadPart { found: String },
    #[error("assignment has {len} states, expected one per variable ({expected})")]
    AssignmentLength { len: usize, expected: usize },
    #[error("query and conditioning variable sets overlap on index {index}")]
    QueryOverlap { index: usize },
}

// ── Mixed-radix indexing ────────────────────────────────────────────────────

/// Packs `states` into a single index, first coordinate most significant.
pub fn pack_index(states: &[usize], cards: &[usize]) -> usize {
    debug_assert_eq!(states.len(), cards.len());
    let mut idx = 0;
    for (&s, &k) in states.iter().zip(cards) {
        debug_assert!(s < k);
        idx = idx * k + s;
    }
    idx
}

/// Inverse of [`pack_index`]; writes the decoded states into `out`.
pub fn unpack_index(mut idx: usize, cards: &[usize], out: &mut [usize]) {
    debug_assert_eq!(out.len(), cards.len());
    for i in (0..cards.len()).rev() {
        out[i] = idx % cards[i];
        idx /= cards[i];
    }
    debug_assert_eq!(idx, 0);
}

/// Number of joint states for the given cardinalities.
pub fn state_count(cards: &[usize]) -> usize {
    cards.iter().product()
}

/// Advances `states` to the next joint state in mixed-radix order (last
/// coordinate fastest). Returns false after the last state.
pub fn next_state(states: &mut [usize], cards: &[usize]) -> bool {
    for i in (0..states.len()).rev() {
        states[i] += 1;
        if states[i] < cards[i] {
            return true;
        }
        states[i] = 0;
    }
    false
}

// ── Variables and graph ─────────────────────────────────────────────────────

/// A categorical variable: a name and a state count. States are the integers
/// `0..cardinality`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableDecl {
    pub name: String,
    pub cardinality: usize,
}

impl VariableDecl {
    pub fn new(name: impl Into<String>, cardinality: usize) -> Self {
        Self {
            name: name.into(),
            cardinality,
        }
    }
}

/// A directed acyclic graph over declared variables.
///
/// Edges are `(parent, child)` pairs of variable indices. Ancestor and
/// descendant sets are proper (a variable is not its own ancestor).
#[derive(Clone, Debug, PartialEq)]
pub struct Dag {
    variables: Vec<VariableDecl>,
    edges: BTreeSet<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl Dag {
    pub fn new(variables: Vec<VariableDecl>, edges: &[(usize, usize)]) -> Result<Self, CbnError> {
        let n = variables.len();
        let mut names = BTreeSet::new();
        for v in &variables {
            if v.cardinality < 2 {
                return Err(CbnError::BadCardinality {
                    name: v.name.clone(),
                    cardinality: v.cardinality,
                });
            }
            if !names.insert(v.name.clone()) {
                return Err(CbnError::DuplicateVariable {
                    name: v.name.clone(),
                });
            }
        }
        let mut edge_set = BTreeSet::new();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(p, c) in edges {
            if p >= n || c >= n || p == c {
                return Err(CbnError::UnknownEdgeEndpoint { parent: p, child: c });
            }
            if edge_set.insert((p, c)) {
                parents[c].push(p);
                children[p].push(c);
            }
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        // Kahn's algorithm; leftover in-degrees mean a cycle.
        let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(v) = queue.pop() {
            topo.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push(c);
                }
            }
        }
        if topo.len() != n {
            return Err(CbnError::Cyclic);
        }
        // Deterministic topological order: repeatedly take the smallest-index
        // variable whose parents are all placed.
        let mut placed = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let next = (0..n)
                .find(|&v| !placed[v] && parents[v].iter().all(|&p| placed[p]))
                .expect("acyclic graph always has a placeable variable");
            placed[next] = true;
            order.push(next);
        }
        Ok(Self {
            variables,
            edges: edge_set,
            parents,
            children,
            topo: order,
        })
    }

    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &[VariableDecl] {
        &self.variables
    }

    pub fn cardinality(&self, v: usize) -> usize {
        self.variables[v].cardinality
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.cardinality).collect()
    }

    pub fn name(&self, v: usize) -> &str {
        &self.variables[v].name
    }

    /// Index of the variable with the given name, if declared.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// Proper ancestors of `v` (excludes `v`), ascending.
    pub fn ancestors(&self, v: usize) -> Vec<usize> {
        self.reach(v, |u| &self.parents[u])
    }

    /// Proper descendants of `v` (excludes `v`), ascending.
    pub fn descendants(&self, v: usize) -> Vec<usize> {
        self.reach(v, |u| &self.children[u])
    }

    fn reach<'a>(&'a self, v: usize, step: impl Fn(usize) -> &'a [usize]) -> Vec<usize> {
        let mut seen = vec![false; self.variables.len()];
        let mut stack = step(v).to_vec();
        while let Some(u) = stack.pop() {
            if !seen[u] {
                seen[u] = true;
                stack.extend_from_slice(step(u));
            }
        }
        (0..self.variables.len()).filter(|&u| seen[u]).collect()
    }

    /// A topological order (parents before children), deterministic for a
    /// given graph: smallest-index variable first among the ready ones.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }
}

// ── CPDs and the network ────────────────────────────────────────────────────

/// A conditional probability table for one variable.
///
/// `table` has one row per joint parent state in mixed-radix order over
/// `parents` (first listed parent most significant); each row is a
/// distribution over the variable's states.
#[derive(Clone, Debug, PartialEq)]
pub struct Cpd {
    pub variable: usize,
    pub parents: Vec<usize>,
    pub table: Vec<Vec<f64>>,
}

impl Cpd {
    pub fn new(variable: usize, parents: Vec<usize>, table: Vec<Vec<f64>>) -> Self {
        Self {
            variable,
            parents,
            table,
        }
    }

    /// Row index for a full-model assignment, reading this CPD's parents.
    fn row_for(&self, assignment: &[usize], cards: &[usize]) -> usize {
        let mut idx = 0;
        for &p in &self.parents {
            idx = idx * cards[p] + assignment[p];
        }
        idx
    }
}

/// A causal Bayesian network: a [`Dag`] plus one validated [`Cpd`] per
/// variable. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Cbn {
    dag: Dag,
    cpds: Vec<Cpd>, // indexed by variable
}

impl Cbn {
    /// Validates and normalizes the tables: every row must be entrywise in
    /// [0, 1] and sum to 1 within [`ROW_SUM_TOL`] (such rows are renormalized
    /// exactly); the full joint must sum to 1 within [`JOINT_SUM_TOL`].
    pub fn new(dag: Dag, cpds: Vec<Cpd>) -> Result<Self, CbnError> {
        let n = dag.variable_count();
        let cards = dag.cardinalities();
        let mut by_var: Vec<Option<Cpd>> = vec![None; n];
        for cpd in cpds {
            let v = cpd.variable;
            if v >= n {
                return Err(CbnError::VariableIndexOutOfRange { index: v, count: n });
            }
            if by_var[v].is_some() {
                return Err(CbnError::CpdCount {
                    name: dag.name(v).to_string(),
                    count: 2,
                });
            }
            by_var[v] = Some(cpd);
        }
        let mut checked = Vec::with_capacity(n);
        for v in 0..n {
            let Some(mut cpd) = by_var[v].take() else {
                return Err(CbnError::CpdCount {
                    name: dag.name(v).to_string(),
                    count: 0,
                });
            };
            let declared: BTreeSet<usize> = cpd.parents.iter().copied().collect();
            let graph: BTreeSet<usize> = dag.parents(v).iter().copied().collect();
            if declared != graph || declared.len() != cpd.parents.len() {
                return Err(CbnError::CpdParentMismatch {
                    name: dag.name(v).to_string(),
                });
            }
            let parent_cards: Vec<usize> = cpd.parents.iter().map(|&p| cards[p]).collect();
            let expected_rows = state_count(&parent_cards);
            if cpd.table.len() != expected_rows {
                return Err(CbnError::CpdRowCount {
                    name: dag.name(v).to_string(),
                    rows: cpd.table.len(),
                    expected: expected_rows,
                });
            }
            for (r, row) in cpd.table.iter_mut().enumerate() {
                normalize_row(row, dag.name(v), r, cards[v])?;
            }
            checked.push(cpd);
        }
        let model = Self { dag, cpds: checked };
        let total: f64 = model.intervene(&InterventionSpec::Null)?.joint_sum();
        if (total - 1.0).abs() > JOINT_SUM_TOL {
            return Err(CbnError::JointSum {
                sum: total,
                tol: JOINT_SUM_TOL,
            });
        }
        Ok(model)
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn cpd(&self, v: usize) -> &Cpd {
        &self.cpds[v]
    }

    pub fn variable_count(&self) -> usize {
        self.dag.variable_count()
    }

    /// `P(v₁, …, vₙ)`: the product of CPD entries along the assignment.
    pub fn joint_probability(&self, assignment: &[usize]) -> Result<f64, CbnError> {
        self.check_assignment(assignment)?;
        let cards = self.dag.cardinalities();
        let mut p = 1.0;
        for cpd in &self.cpds {
            p *= cpd.table[cpd.row_for(assignment, &cards)][assignment[cpd.variable]];
        }
        Ok(p)
    }

    fn check_assignment(&self, assignment: &[usize]) -> Result<(), CbnError> {
        if assignment.len() != self.variable_count() {
            return Err(CbnError::AssignmentLength {
                len: assignment.len(),
                expected: self.variable_count(),
            });
        }
        for (v, &s) in assignment.iter().enumerate() {
            if s >= self.dag.cardinality(v) {
                return Err(CbnError::StateOutOfRange {
                    name: self.dag.name(v).to_string(),
                    state: s,
                    cardinality: self.dag.cardinality(v),
                });
            }
        }
        Ok(())
    }

    /// Validates `spec` against this model's variables (existence, state
    /// ranges, map totality, weight sums, composite uniqueness).
    pub fn validate_spec(&self, spec: &InterventionSpec) -> Result<(), CbnError> {
        validate_spec_for(&self.dag, spec)
    }

    /// Applies an intervention, producing a queryable intervened model.
    ///
    /// Hard and local interventions rewrite the touched variable's rows; a
    /// mixture stays a lazy weighted list of intervened factorizations and is
    /// never collapsed into a single network (a mixture generally breaks the
    /// factorization of the graph).
    pub fn intervene(&self, spec: &InterventionSpec) -> Result<IntervenedModel<'_>, CbnError> {
        self.validate_spec(spec)?;
        let mut flat = Vec::new();
        flatten_spec(spec, 1.0, &mut Vec::new(), &mut flat);
        let terms = flat
            .into_iter()
            .map(|(w, ops)| {
                let mut tables: Vec<Option<Vec<Vec<f64>>>> = vec![None; self.variable_count()];
                for op in ops {
                    let v = op.variable(&self.dag).expect("validated above");
                    tables[v] = Some(op.rewrite_rows(&self.cpds[v].table, self.dag.cardinality(v)));
                }
                Term {
                    weight: w,
                    tables,
                }
            })
            .collect();
        Ok(IntervenedModel { base: self, terms })
    }
}

fn normalize_row(row: &mut [f64], name: &str, r: usize, cardinality: usize) -> Result<(), CbnError> {
    if row.len() != cardinality {
        return Err(CbnError::CpdRowLength {
            name: name.to_string(),
            row: r,
            len: row.len(),
            cardinality,
        });
    }
    for &p in row.iter() {
        if !(0.0..=1.0 + ROW_SUM_TOL).contains(&p) || !p.is_finite() {
            return Err(CbnError::CpdEntryRange {
                name: name.to_string(),
                row: r,
                value: p,
            });
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(CbnError::CpdRowSum {
            name: name.to_string(),
            row: r,
            sum,
            tol: ROW_SUM_TOL,
        });
    }
    if sum != 1.0 {
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
    Ok(())
}

// ── Interventions ───────────────────────────────────────────────────────────

/// One weighted component of a mixture intervention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub spec: InterventionSpec,
}

/// A domain shift: hard setting, local state-map, probabilistic mixture,
/// per-variable composite, or no change.
///
/// Serialized form is tagged: `{"type":"hard","variable":…,"value":…}`,
/// `{"type":"local","variable":…,"map":[…]}`,
/// `{"type":"mixture","components":[{"weight":…,"spec":…},…]}`,
/// `{"type":"composite","parts":[…]}`, `{"type":"null"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum InterventionSpec {
    Null,
    Hard { variable: String, value: usize },
    Local { variable: String, map: Vec<usize> },
    Mixture { components: Vec<MixtureComponent> },
    Composite { parts: Vec<InterventionSpec> },
}

impl InterventionSpec {
    /// Variables touched by this spec (transitively, through mixtures).
    pub fn touched_variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_touched(&mut out);
        out
    }

    fn collect_touched<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            InterventionSpec::Null => {}
            InterventionSpec::Hard { variable, .. } | InterventionSpec::Local { variable, .. } => {
                out.insert(variable.as_str());
            }
            InterventionSpec::Mixture { components } => {
                for c in components {
                    c.spec.collect_touched(out);
                }
            }
            InterventionSpec::Composite { parts } => {
                for p in parts {
                    p.collect_touched(out);
                }
            }
        }
    }
}

impl fmt::Display for InterventionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterventionSpec::Null => write!(f, "null"),
            InterventionSpec::Hard { variable, value } => write!(f, "do({variable}={value})"),
            InterventionSpec::Local { variable, map } => {
                write!(f, "local({variable}:{map:?})")
            }
            InterventionSpec::Mixture { components } => {
                write!(f, "mix(")?;
                for (i, c) in components.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{}·{}", c.weight, c.spec)?;
                }
                write!(f, ")")
            }
            InterventionSpec::Composite { parts } => {
                write!(f, "do[")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, "]")
            }
        }
    }
}

fn validate_spec_for(dag: &Dag, spec: &InterventionSpec) -> Result<(), CbnError> {
    match spec {
        InterventionSpec::Null => Ok(()),
        InterventionSpec::Hard { variable, value } => {
            let v = dag
                .index_of(variable)
                .ok_or_else(|| CbnError::UnknownVariable {
                    name: variable.clone(),
                })?;
            if *value >= dag.cardinality(v) {
                return Err(CbnError::StateOutOfRange {
                    name: variable.clone(),
                    state: *value,
                    cardinality: dag.cardinality(v),
                });
            }
            Ok(())
        }
        InterventionSpec::Local { variable, map } => {
            let v = dag
                .index_of(variable)
                .ok_or_else(|| CbnError::UnknownVariable {
                    name: variable.clone(),
                })?;
            let k = dag.cardinality(v);
            if map.len() != k {
                return Err(CbnError::LocalMapNotTotal {
                    name: variable.clone(),
                    len: map.len(),
                    cardinality: k,
                });
            }
            for &t in map {
                if t >= k {
                    return Err(CbnError::StateOutOfRange {
                        name: variable.clone(),
                        state: t,
                        cardinality: k,
                    });
                }
            }
            Ok(())
        }
        InterventionSpec::Mixture { components } => {
            if components.is_empty() {
                return Err(CbnError::EmptyMixture);
            }
            let mut sum = 0.0;
            for c in components {
                if c.weight < 0.0 || !c.weight.is_finite() {
                    return Err(CbnError::NegativeMixtureWeight { weight: c.weight });
                }
                sum += c.weight;
                validate_spec_for(dag, &c.spec)?;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(CbnError::MixtureWeightSum {
                    sum,
                    tol: ROW_SUM_TOL,
                });
            }
            Ok(())
        }
        InterventionSpec::Composite { parts } => {
            let mut touched = BTreeSet::new();
            for p in parts {
                match p {
                    InterventionSpec::Hard { variable, .. }
                    | InterventionSpec::Local { variable, .. } => {
                        if !touched.insert(variable.clone()) {
                            return Err(CbnError::CompositeDuplicate {
                                name: variable.clone(),
                            });
                        }
                    }
                    other => {
                        return Err(CbnError::CompositeBadPart {
                            found: format!("{other}"),
                        })
                    }
                }
                validate_spec_for(dag, p)?;
            }
            Ok(())
        }
    }
}

/// A single hard/local rewrite of one variable's CPD rows.
#[derive(Clone, Debug)]
enum AtomicOp {
    Hard { variable: String, value: usize },
    Local { variable: String, map: Vec<usize> },
}

impl AtomicOp {
    fn variable(&self, dag: &Dag) -> Option<usize> {
        match self {
            AtomicOp::Hard { variable, .. } | AtomicOp::Local { variable, .. } => {
                dag.index_of(variable)
            }
        }
    }

    /// Pushes each row's mass through the map; a hard setting is the constant
    /// map, giving a point-mass row.
    fn rewrite_rows(&self, rows: &[Vec<f64>], cardinality: usize) -> Vec<Vec<f64>> {
        match self {
            AtomicOp::Hard { value, .. } => {
                let mut point = vec![0.0; cardinality];
                point[*value] = 1.0;
                vec![point; rows.len()]
            }
            AtomicOp::Local { map, .. } => rows
                .iter()
                .map(|row| {
                    let mut pushed = vec![0.0; cardinality];
                    for (from, &p) in row.iter().enumerate() {
                        pushed[map[from]] += p;
                    }
                    pushed
                })
                .collect(),
        }
    }
}

/// Flattens nested mixtures into `(weight, atomic ops)` terms; weights
/// multiply down the tree.
fn flatten_spec(
    spec: &InterventionSpec,
    weight: f64,
    ops: &mut Vec<AtomicOp>,
    out: &mut Vec<(f64, Vec<AtomicOp>)>,
) {
    match spec {
        InterventionSpec::Null => out.push((weight, ops.clone())),
        InterventionSpec::Hard { variable, value } => {
            let mut with = ops.clone();
            with.push(AtomicOp::Hard {
                variable: variable.clone(),
                value: *value,
            });
            out.push((weight, with));
        }
        InterventionSpec::Local { variable, map } => {
            let mut with = ops.clone();
            with.push(AtomicOp::Local {
                variable: variable.clone(),
                map: map.clone(),
            });
            out.push((weight, with));
        }
        InterventionSpec::Mixture { components } => {
            for c in components {
                flatten_spec(&c.spec, weight * c.weight, ops, out);
            }
        }
        InterventionSpec::Composite { parts } => {
            let mut with = ops.clone();
            for p in parts {
                match p {
                    InterventionSpec::Hard { variable, value } => with.push(AtomicOp::Hard {
                        variable: variable.clone(),
                        value: *value,
                    }),
                    InterventionSpec::Local { variable, map } => with.push(AtomicOp::Local {
                        variable: variable.clone(),
                        map: map.clone(),
                    }),
                    _ => unreachable!("composites are validated to hold hard/local parts only"),
                }
            }
            out.push((weight, with));
        }
    }
}

// ── Intervened models and queries ───────────────────────────────────────────

#[derive(Clone, Debug)]
struct Term {
    weight: f64,
    /// Replacement tables for intervened variables; `None` keeps the base CPD.
    tables: Vec<Option<Vec<Vec<f64>>>>,
}

/// A [`Cbn`] under an intervention: a weighted list of modified
/// factorizations (one term for a hard/local/composite spec, several for a
/// mixture). All queries are exact enumeration.
#[derive(Clone, Debug)]
pub struct IntervenedModel<'a> {
    base: &'a Cbn,
    terms: Vec<Term>,
}

/// A probability table over a set of query variables, mixed-radix indexed
/// (first query variable most significant).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbTable {
    pub variables: Vec<usize>,
    pub cardinalities: Vec<usize>,
    pub probabilities: Vec<f64>,
}

impl ProbTable {
    pub fn probability(&self, states: &[usize]) -> f64 {
        self.probabilities[pack_index(states, &self.cardinalities)]
    }
}

impl<'a> IntervenedModel<'a> {
    pub fn base(&self) -> &'a Cbn {
        self.base
    }

    fn term_joint(&self, term: &Term, assignment: &[usize], cards: &[usize]) -> f64 {
        let mut p = 1.0;
        for cpd in &self.base.cpds {
            let row = cpd.row_for(assignment, cards);
            let v = cpd.variable;
            let table = match &term.tables[v] {
                Some(t) => t,
                None => &cpd.table,
            };
            p *= table[row][assignment[v]];
        }
        p
    }

    /// `P(v; σ)` for a full assignment: the truncated-factorization product,
    /// mixed over terms.
    pub fn joint_probability(&self, assignment: &[usize]) -> Result<f64, CbnError> {
        self.base.check_assignment(assignment)?;
        let cards = self.base.dag.cardinalities();
        Ok(self
            .terms
            .iter()
            .map(|t| t.weight * self.term_joint(t, assignment, &cards))
            .sum())
    }

    fn joint_sum(&self) -> f64 {
        let cards = self.base.dag.cardinalities();
        let mut state = vec![0; cards.len()];
        let mut total = 0.0;
        loop {
            total += self
                .terms
                .iter()
                .map(|t| t.weight * self.term_joint(t, &state, &cards))
                .sum::<f64>();
            if !next_state(&mut state, &cards) {
                break;
            }
        }
        total
    }

    /// Exact marginal `P(query; σ)` by enumeration over the full joint.
    pub fn marginal(&self, query: &[usize]) -> Result<ProbTable, CbnError> {
        let n = self.base.variable_count();
        for &q in query {
            if q >= n {
                return Err(CbnError::VariableIndexOutOfRange { index: q, count: n });
            }
        }
        let cards = self.base.dag.cardinalities();
        let q_cards: Vec<usize> = query.iter().map(|&q| cards[q]).collect();
        let mut probs = vec![0.0; state_count(&q_cards)];
        let mut state = vec![0; n];
        let mut q_state = vec![0; query.len()];
        loop {
            let p: f64 = self
                .terms
                .iter()
                .map(|t| t.weight * self.term_joint(t, &state, &cards))
                .sum();
            for (i, &q) in query.iter().enumerate() {
                q_state[i] = state[q];
            }
            probs[pack_index(&q_state, &q_cards)] += p;
            if !next_state(&mut state, &cards) {
                break;
            }
        }
        Ok(ProbTable {
            variables: query.to_vec(),
            cardinalities: q_cards,
            probabilities: probs,
        })
    }

    /// Exact conditional `P(query | given; σ)`: one table per joint state of
    /// `given`, `None` where the conditioning event has probability 0 (the
    /// row is undefined, not fabricated).
    pub fn conditional(
        &self,
        query: &[usize],
        given: &[usize],
    ) -> Result<Vec<Option<ProbTable>>, CbnError> {
        for &g in given {
            if query.contains(&g) {
                return Err(CbnError::QueryOverlap { index: g });
            }
        }
        let mut all: Vec<usize> = given.to_vec();
        all.extend_from_slice(query);
        let joint = self.marginal(&all)?;
        let giv = self.marginal(given)?;
        let q_cards: Vec<usize> = query.iter().map(|&q| self.base.dag.cardinality(q)).collect();
        let q_size = state_count(&q_cards);
        let mut out = Vec::with_capacity(giv.probabilities.len());
        for (g_idx, &pg) in giv.probabilities.iter().enumerate() {
            if pg <= 0.0 {
                out.push(None);
                continue;
            }
            // `all` is ordered given-then-query, so the joint index is
            // g_idx * q_size + q_idx.
            let probs: Vec<f64> = (0..q_size)
                .map(|q_idx| joint.probabilities[g_idx * q_size + q_idx] / pg)
                .collect();
            out.push(Some(ProbTable {
                variables: query.to_vec(),
                cardinalities: q_cards.clone(),
                probabilities: probs,
            }));
        }
        Ok(out)
    }

    /// Ancestral sampling: draws a mixture term by weight, then each variable
    /// along the topological order from its (possibly rewritten) CPD row.
    pub fn sample(&self, rng: &mut impl Rng, n: usize) -> Vec<Vec<usize>> {
        let cards = self.base.dag.cardinalities();
        let order = self.base.dag.topological_order();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let term = self.draw_term(rng);
            let mut state = vec![0usize; cards.len()];
            for &v in order {
                let cpd = &self.base.cpds[v];
                let row = cpd.row_for(&state, &cards);
                let table = match &term.tables[v] {
                    Some(t) => &t[row],
                    None => &cpd.table[row],
                };
                state[v] = draw_categorical(rng, table);
            }
            out.push(state);
        }
        out
    }

    fn draw_term(&self, rng: &mut impl Rng) -> &Term {
        if self.terms.len() == 1 {
            return &self.terms[0];
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.weight;
            if u < acc {
                return t;
            }
        }
        self.terms.last().expect("mixtures are non-empty")
    }
}

fn draw_categorical(rng: &mut impl Rng, row: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (s, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return s;
        }
    }
    row.len() - 1
}

// ── JSON model schema ───────────────────────────────────────────────────────

/// Serialized form of a [`Cbn`]:
/// `{"variables":[{"name":…,"cardinality":…}],"edges":[[p,c]],"cpds":[…]}`
/// with CPD table rows in mixed-radix parent order (first parent most
/// significant). Edges and CPD parents are written by variable name.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CbnJson {
    pub variables: Vec<VariableDecl>,
    pub edges: Vec<[String; 2]>,
    pub cpds: Vec<CpdJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CpdJson {
    pub variable: String,
    pub parents: Vec<String>,
    pub table: Vec<Vec<f64>>,
}

impl Cbn {
    pub fn to_json(&self) -> CbnJson {
        let dag = &self.dag;
        CbnJson {
            variables: dag.variables().to_vec(),
            edges: dag
                .edges()
                .map(|(p, c)| [dag.name(p).to_string(), dag.name(c).to_string()])
                .collect(),
            cpds: self
                .cpds
                .iter()
                .map(|cpd| CpdJson {
                    variable: dag.name(cpd.variable).to_string(),
                    parents: cpd.parents.iter().map(|&p| dag.name(p).to_string()).collect(),
                    table: cpd.table.clone(),
                })
                .collect(),
        }
    }

    pub fn from_json(json: &CbnJson) -> Result<Self, CbnError> {
        let lookup = |name: &str, vars: &[VariableDecl]| -> Result<usize, CbnError> {
            vars.iter()
                .position(|v| v.name == name)
                .ok_or_else(|| CbnError::UnknownVariable {
                    name: name.to_string(),
                })
        };
        let mut edges = Vec::with_capacity(json.edges.len());
        for [p, c] in &json.edges {
            edges.push((lookup(p, &json.variables)?, lookup(c, &json.variables)?));
        }
        let dag = Dag::new(json.variables.clone(), &edges)?;
        let mut cpds = Vec::with_capacity(json.cpds.len());
        for cpd in &json.cpds {
            let v = lookup(&cpd.variable, &json.variables)?;
            let parents = cpd
                .parents
                .iter()
                .map(|p| lookup(p, &json.variables))
                .collect::<Result<Vec<_>, _>>()?;
            cpds.push(Cpd::new(v, parents, cpd.table.clone()));
        }
        Cbn::new(dag, cpds)
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::fixtures::chain_xy;

    fn hard(variable: &str, value: usize) -> InterventionSpec {
        InterventionSpec::Hard {
            variable: variable.into(),
            value,
        }
    }

    #[test]
    fn mixed_radix_roundtrip() {
        let cards = [2, 3, 2];
        let mut buf = [0; 3];
        for idx in 0..state_count(&cards) {
            unpack_index(idx, &cards, &mut buf);
            assert_eq!(pack_index(&buf, &cards), idx);
        }
    }

    #[test]
    fn joint_probability_single_node() {
        let dag = Dag::new(vec![VariableDecl::new("V", 2)], &[]).unwrap();
        let cbn = Cbn::new(dag, vec![Cpd::new(0, vec![], vec![vec![0.5, 0.5]])]).unwrap();
        assert_eq!(cbn.joint_probability(&[0]).unwrap(), 0.5);
    }

    #[test]
    fn joint_probability_chain() {
        let cbn = chain_xy();
        let p = cbn.joint_probability(&[1, 1]).unwrap();
        assert!((p - 0.24).abs() < 1e-15, "0.3 · 0.8 = 0.24, got {p}");
    }

    #[test]
    fn joint_probability_deterministic_chain() {
        let dag = Dag::new(
            vec![VariableDecl::new("A", 2), VariableDecl::new("B", 2)],
            &[(0, 1)],
        )
        .unwrap();
        let cbn = Cbn::new(
            dag,
            vec![
                Cpd::new(0, vec![], vec![vec![1.0, 0.0]]),
                Cpd::new(1, vec![0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]),
            ],
        )
        .unwrap();
        assert_eq!(cbn.joint_probability(&[0, 1]).unwrap(), 1.0);
        assert_eq!(cbn.joint_probability(&[0, 0]).unwrap(), 0.0);
        assert_eq!(cbn.joint_probability(&[1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn hard_intervention_sets_point_mass() {
        let cbn = chain_xy();
        let m = cbn.intervene(&hard("X", 1)).unwrap();
        let px = m.marginal(&[0]).unwrap();
        assert_eq!(px.probabilities, vec![0.0, 1.0]);
        let py = m.marginal(&[1]).unwrap();
        assert!((py.probabilities[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn intervening_on_child_leaves_parent_marginal() {
        let cbn = chain_xy();
        let m = cbn.intervene(&hard("Y", 0)).unwrap();
        let px = m.marginal(&[0]).unwrap();
        assert!((px.probabilities[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn local_merge_moves_mass() {
        let cbn = chain_xy();
        let m = cbn
            .intervene(&InterventionSpec::Local {
                variable: "X".into(),
                map: vec![1, 1],
            })
            .unwrap();
        let px = m.marginal(&[0]).unwrap();
        assert_eq!(px.probabilities, vec![0.0, 1.0]);
    }

    #[test]
    fn mixture_of_hards_matches_weighted_sum() {
        let cbn = chain_xy();
        let spec = InterventionSpec::Mixture {
            components: vec![
                MixtureComponent {
                    weight: 0.4,
                    spec: hard("X", 0),
                },
                MixtureComponent {
                    weight: 0.6,
                    spec: hard("X", 1),
                },
            ],
        };
        let m = cbn.intervene(&spec).unwrap();
        let px = m.marginal(&[0]).unwrap();
        assert!((px.probabilities[1] - 0.6).abs() < 1e-15);
        let py = m.marginal(&[1]).unwrap();
        assert!((py.probabilities[1] - 0.56).abs() < 1e-15, "0.4·0.2 + 0.6·0.8");
    }

    #[test]
    fn null_marginal_matches_hand_sum() {
        let cbn = chain_xy();
        let m = cbn.intervene(&InterventionSpec::Null).unwrap();
        let py = m.marginal(&[1]).unwrap();
        assert!((py.probabilities[1] - 0.38).abs() < 1e-15, "0.7·0.2 + 0.3·0.8");
    }

    #[test]
    fn conditional_zero_probability_row_is_undefined() {
        let cbn = chain_xy();
        let m = cbn.intervene(&hard("X", 1)).unwrap();
        let rows = m.conditional(&[1], &[0]).unwrap();
        assert!(rows[0].is_none(), "P(Y | X=0) undefined under do(X=1)");
        let row1 = rows[1].as_ref().unwrap();
        assert!((row1.probabilities[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn composite_touches_each_variable_once() {
        let cbn = chain_xy();
        let dup = InterventionSpec::Composite {
            parts: vec![hard("X", 0), hard("X", 1)],
        };
        assert!(matches!(
            cbn.intervene(&dup),
            Err(CbnError::CompositeDuplicate { .. })
        ));
    }

    #[test]
    fn rejects_bad_rows() {
        let dag = Dag::new(vec![VariableDecl::new("V", 2)], &[]).unwrap();
        let bad = Cbn::new(dag.clone(), vec![Cpd::new(0, vec![], vec![vec![0.6, 0.6]])]);
        assert!(matches!(bad, Err(CbnError::CpdRowSum { .. })));
        let renorm = Cbn::new(
            dag,
            vec![Cpd::new(0, vec![], vec![vec![0.5 + 4e-13, 0.5 - 1e-13]])],
        )
        .unwrap();
        let row = &renorm.cpd(0).table[0];
        assert!((row.iter().sum::<f64>() - 1.0).abs() < f64::EPSILON);
    }

    #[test]
    fn rejects_cycles() {
        let r = Dag::new(
            vec![VariableDecl::new("A", 2), VariableDecl::new("B", 2)],
            &[(0, 1), (1, 0)],
        );
        assert!(matches!(r, Err(CbnError::Cyclic)));
    }

    #[test]
    fn graph_queries_chain() {
        let cbn = chain_xy();
        assert_eq!(cbn.dag().ancestors(1), vec![0]);
        assert_eq!(cbn.dag().descendants(0), vec![1]);
        assert_eq!(cbn.dag().ancestors(0), Vec::<usize>::new());
        assert_eq!(cbn.dag().topological_order(), &[0, 1]);
    }

    #[test]
    fn sample_empty_and_deterministic() {
        let cbn = chain_xy();
        let m = cbn.intervene(&InterventionSpec::Null).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(m.sample(&mut rng, 0).is_empty());

        let dag = Dag::new(vec![VariableDecl::new("V", 2)], &[]).unwrap();
        let det = Cbn::new(dag, vec![Cpd::new(0, vec![], vec![vec![0.0, 1.0]])]).unwrap();
        let dm = det.intervene(&InterventionSpec::Null).unwrap();
        let samples = dm.sample(&mut rng, 50);
        assert!(samples.iter().all(|s| s == &[1]));
    }

    #[test]
    fn sample_frequencies_converge() {
        let cbn = chain_xy();
        let m = cbn.intervene(&InterventionSpec::Null).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let samples = m.sample(&mut rng, n);
        let hits = samples.iter().filter(|s| s == &&vec![1, 1]).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.24).abs() < 0.01, "empirical {freq} vs exact 0.24");
    }

    #[test]
    fn json_roundtrip_preserves_model() {
        let cbn = chain_xy();
        let text = serde_json::to_string(&cbn.to_json()).unwrap();
        let parsed: CbnJson = serde_json::from_str(&text).unwrap();
        let back = Cbn::from_json(&parsed).unwrap();
        assert_eq!(back, cbn);
        // Bit-exact schema keys.
        assert!(text.contains("\"variables\""));
        assert!(text.contains("\"cardinality\""));
        assert!(text.contains("\"edges\""));
        assert!(text.contains("\"cpds\""));
        assert!(text.contains("\"table\""));
    }

    #[test]
    fn intervention_spec_json_shapes() {
        let spec = InterventionSpec::Mixture {
            components: vec![
                MixtureComponent {
                    weight: 0.25,
                    spec: hard("X", 0),
                },
                MixtureComponent {
                    weight: 0.75,
                    spec: InterventionSpec::Local {
                        variable: "Y".into(),
                        map: vec![1, 1],
                    },
                },
            ],
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"type\":\"mixture\""));
        assert!(text.contains("\"components\""));
        assert!(text.contains("\"weight\":0.25"));
        assert!(text.contains("\"map\":[1,1]"));
        let back: InterventionSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(
            serde_json::to_string(&InterventionSpec::Null).unwrap(),
            "{\"type\":\"null\"}"
        );
    }
}

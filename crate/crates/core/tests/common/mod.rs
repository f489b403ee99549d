//! Independent reference implementations for integration tests.
//!
//! Everything here computes by direct full-joint enumeration with its own
//! state indexing and its own reading of the intervention semantics — none of
//! the library's inference paths are reused — so agreement between the two is
//! evidence, not circularity.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use regret2cause_core::{
    Cbn, Cid, Cpd, Dag, InterventionSpec, MixtureComponent, VariableDecl,
};

pub const TOL: f64 = 1e-12;

// ── Independent enumeration ─────────────────────────────────────────────────

/// All joint assignments over `cards`, last coordinate fastest.
pub fn all_states(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &c in cards {
        let mut next = Vec::with_capacity(out.len() * c);
        for prefix in &out {
            for s in 0..c {
                let mut row = prefix.clone();
                row.push(s);
                next.push(row);
            }
        }
        out = next;
    }
    out
}

/// P(variable = state | full assignment) under `spec`, by literally replacing
/// the variable's mechanism: a hard setting becomes a point mass, a local map
/// pushes the row's mass through the map, composites apply their parts to
/// their own variables, null keeps the row. Mixtures are handled by
/// [`joint_probability`], not here.
fn factor(cbn: &Cbn, spec: &InterventionSpec, assignment: &[usize], v: usize) -> f64 {
    fn applicable<'s>(spec: &'s InterventionSpec, name: &str) -> Option<&'s InterventionSpec> {
        match spec {
            InterventionSpec::Null => None,
            InterventionSpec::Hard { variable, .. } | InterventionSpec::Local { variable, .. } => {
                (variable == name).then_some(spec)
            }
            InterventionSpec::Composite { parts } => {
                parts.iter().find_map(|p| applicable(p, name))
            }
            InterventionSpec::Mixture { .. } => {
                panic!("mixtures are expanded before factor evaluation")
            }
        }
    }
    let dag = cbn.dag();
    let cpd = cbn.cpd(v);
    // Row selected by the parent assignment, first parent most significant —
    // recomputed here from the public parent list.
    let mut row_idx = 0;
    for &p in &cpd.parents {
        row_idx = row_idx * dag.cardinality(p) + assignment[p];
    }
    let base_row = &cpd.table[row_idx];
    let s = assignment[v];
    match applicable(spec, dag.name(v)) {
        None => base_row[s],
        Some(InterventionSpec::Hard { value, .. }) => {
            if s == *value {
                1.0
            } else {
                0.0
            }
        }
        Some(InterventionSpec::Local { map, .. }) => (0..base_row.len())
            .filter(|&orig| map[orig] == s)
            .map(|orig| base_row[orig])
            .sum(),
        Some(_) => unreachable!("applicable returns only hard/local"),
    }
}

/// P(assignment; spec) by products of factors, with mixtures expanded as
/// weighted sums of component joints.
pub fn joint_probability(cbn: &Cbn, spec: &InterventionSpec, assignment: &[usize]) -> f64 {
    if let InterventionSpec::Mixture { components } = spec {
        return components
            .iter()
            .map(|c| c.weight * joint_probability(cbn, &c.spec, assignment))
            .sum();
    }
    (0..cbn.dag().variable_count())
        .map(|v| factor(cbn, spec, assignment, v))
        .product()
}

/// Marginal P(targets = states; spec) by summing the full joint.
pub fn marginal_probability(
    cbn: &Cbn,
    spec: &InterventionSpec,
    targets: &[usize],
    states: &[usize],
) -> f64 {
    let cards = cbn.dag().cardinalities();
    all_states(&cards)
        .iter()
        .filter(|a| targets.iter().zip(states).all(|(&t, &s)| a[t] == s))
        .map(|a| joint_probability(cbn, spec, a))
        .sum()
}

/// Per-context probability mass and per-(context, decision) joint-weighted
/// utility, by one pass over the full joint. Context index packs the
/// information-parent states with the first parent most significant.
pub fn brute_decision_tables(cid: &Cid, spec: &InterventionSpec) -> (Vec<f64>, Vec<Vec<f64>>) {
    let public = cid.public();
    let cbn = cid.chance();
    let cards = cbn.dag().cardinalities();
    let ctx_cards: Vec<usize> = cid.info_parents().iter().map(|&p| cards[p]).collect();
    let contexts: usize = ctx_cards.iter().product();
    let k = cid.decision_cardinality();
    let mut mass = vec![0.0; contexts];
    let mut weighted = vec![vec![0.0; k]; contexts];
    for a in all_states(&cards) {
        let p = joint_probability(cbn, spec, &a);
        let mut ctx = 0;
        for &ip in cid.info_parents() {
            ctx = ctx * cards[ip] + a[ip];
        }
        let pa_u: Vec<usize> = cid.utility_parents().iter().map(|&u| a[u]).collect();
        mass[ctx] += p;
        for (d, w) in weighted[ctx].iter_mut().enumerate() {
            *w += p * public.utility_value(&pa_u, d);
        }
    }
    (mass, weighted)
}

// ── Random instances (test-local generator, independent of the library's) ──

pub struct Instance {
    pub cid: Cid,
    pub chance: Cbn,
    pub info_parents: Vec<usize>,
    pub utility_parents: Vec<usize>,
    pub utility_raw: Vec<f64>,
    pub decision_cardinality: usize,
}

/// A random influence diagram over 2–4 chance variables with cardinalities
/// 2–3, arbitrary DAG, uniform-normalized CPD rows, and a random utility.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    loop {
        let n = rng.random_range(2..=4);
        let cards: Vec<usize> = (0..n).map(|_| rng.random_range(2..=3)).collect();
        let variables: Vec<VariableDecl> = (0..n)
            .map(|i| VariableDecl::new(format!("V{i}"), cards[i]))
            .collect();
        // Random topological order, then each earlier→later pair becomes an
        // edge with probability 1/2.
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<bool>() {
                    edges.push((order[i], order[j]));
                }
            }
        }
        let dag = Dag::new(variables.clone(), &edges).expect("construction is acyclic");
        let mut cpds = Vec::new();
        for v in 0..n {
            let n_rows: usize = dag.parents(v).iter().map(|&p| cards[p]).product();
            let table: Vec<Vec<f64>> = (0..n_rows)
                .map(|_| {
                    let raw: Vec<f64> =
                        (0..cards[v]).map(|_| rng.random::<f64>() + 1e-3).collect();
                    let sum: f64 = raw.iter().sum();
                    raw.iter().map(|x| x / sum).collect()
                })
                .collect();
            cpds.push(Cpd::new(v, dag.parents(v).to_vec(), table));
        }
        let chance = Cbn::new(dag, cpds).expect("rows are normalized");
        let k = rng.random_range(2..=3);
        let mut utility_parents: Vec<usize> = (0..n).filter(|_| rng.random::<bool>()).collect();
        if utility_parents.is_empty() {
            utility_parents.push(rng.random_range(0..n));
        }
        let info_parents: Vec<usize> = (0..n).filter(|_| rng.random_range(0..4) == 0).collect();
        let u_states: usize = utility_parents.iter().map(|&u| cards[u]).product();
        let utility_raw: Vec<f64> = (0..u_states * k).map(|_| rng.random::<f64>()).collect();
        let decision = VariableDecl::new("D", k);
        if let Ok(cid) = Cid::new(
            chance.clone(),
            decision,
            info_parents.clone(),
            utility_parents.clone(),
            utility_raw.clone(),
        ) {
            return Instance {
                cid,
                chance,
                info_parents,
                utility_parents,
                utility_raw,
                decision_cardinality: k,
            };
        }
    }
}

/// A random domain shift touching only chance variables: null, hard, local,
/// a composite of per-variable hard/local parts, or (when `allow_mixture`) a
/// mixture of two simpler shifts.
pub fn random_shift(rng: &mut ChaCha8Rng, cbn: &Cbn, allow_mixture: bool) -> InterventionSpec {
    let dag = cbn.dag();
    let n = dag.variable_count();
    let hard = |rng: &mut ChaCha8Rng, v: usize| InterventionSpec::Hard {
        variable: dag.name(v).to_string(),
        value: rng.random_range(0..dag.cardinality(v)),
    };
    let local = |rng: &mut ChaCha8Rng, v: usize| {
        let card = dag.cardinality(v);
        InterventionSpec::Local {
            variable: dag.name(v).to_string(),
            map: (0..card).map(|_| rng.random_range(0..card)).collect(),
        }
    };
    let top = if allow_mixture { 5 } else { 4 };
    let kind = rng.random_range(0..top);
    let target = rng.random_range(0..n);
    match kind {
        0 => InterventionSpec::Null,
        1 => hard(rng, target),
        2 => local(rng, target),
        3 => {
            let mut vars: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                vars.swap(i, rng.random_range(0..=i));
            }
            let count = rng.random_range(1..=n);
            InterventionSpec::Composite {
                parts: vars[..count]
                    .iter()
                    .map(|&v| {
                        if rng.random::<bool>() {
                            hard(rng, v)
                        } else {
                            local(rng, v)
                        }
                    })
                    .collect(),
            }
        }
        _ => {
            let w = rng.random_range(0.05..0.95);
            InterventionSpec::Mixture {
                components: vec![
                    MixtureComponent {
                        weight: w,
                        spec: random_shift(rng, cbn, false),
                    },
                    MixtureComponent {
                        weight: 1.0 - w,
                        spec: random_shift(rng, cbn, false),
                    },
                ],
            }
        }
    }
}

// ── Shared property checks ──────────────────────────────────────────────────
//
// Each check builds one random instance from the seed and returns Err with a
// description on the first disagreement. They are driven both by the
// randomized property suites and by the fixed-seed acceptance loops.

fn fail(name: &str, seed: u64, detail: String) -> Result<(), String> {
    Err(format!("{name} (seed {seed}): {detail}"))
}

/// Library interventional joint and marginals match full-joint enumeration.
pub fn check_factorization(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(&mut rng);
    let cbn = &inst.chance;
    let spec = random_shift(&mut rng, cbn, true);
    let cards = cbn.dag().cardinalities();
    let model = cbn.intervene(&spec).map_err(|e| e.to_string())?;
    for a in all_states(&cards) {
        let lib = model.joint_probability(&a).map_err(|e| e.to_string())?;
        let brute = joint_probability(cbn, &spec, &a);
        if (lib - brute).abs() > TOL {
            return fail(
                "factorization",
                seed,
                format!("joint at {a:?}: library {lib} vs enumeration {brute} under {spec}"),
            );
        }
    }
    // A random strict subset marginal, compared entry by entry.
    let n = cards.len();
    let targets: Vec<usize> = (0..n).filter(|_| rng.random::<bool>()).collect();
    let targets = if targets.is_empty() { vec![0] } else { targets };
    let table = model.marginal(&targets).map_err(|e| e.to_string())?;
    let t_cards: Vec<usize> = targets.iter().map(|&t| cards[t]).collect();
    for s in all_states(&t_cards) {
        let lib = table.probability(&s);
        let brute = marginal_probability(cbn, &spec, &targets, &s);
        if (lib - brute).abs() > TOL {
            return fail(
                "factorization",
                seed,
                format!("marginal over {targets:?} at {s:?}: library {lib} vs enumeration {brute}"),
            );
        }
    }
    Ok(())
}

/// Every shift kind conserves total probability mass.
pub fn check_mass_conservation(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(&mut rng);
    let cbn = &inst.chance;
    let spec = random_shift(&mut rng, cbn, true);
    let cards = cbn.dag().cardinalities();
    let model = cbn.intervene(&spec).map_err(|e| e.to_string())?;
    let mut lib_sum = 0.0;
    let mut brute_sum = 0.0;
    for a in all_states(&cards) {
        lib_sum += model.joint_probability(&a).map_err(|e| e.to_string())?;
        brute_sum += joint_probability(cbn, &spec, &a);
    }
    if (lib_sum - 1.0).abs() > TOL || (brute_sum - 1.0).abs() > TOL {
        return fail(
            "mass conservation",
            seed,
            format!("joint sums: library {lib_sum}, enumeration {brute_sum} under {spec}"),
        );
    }
    Ok(())
}

/// Library decision statistics (context mass and joint-weighted utility, the
/// inputs to every policy and regret computation) match enumeration.
pub fn check_decision_tables(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(&mut rng);
    let spec = random_shift(&mut rng, &inst.chance, true);
    let tables = inst.cid.decision_tables(&spec).map_err(|e| e.to_string())?;
    let (mass, weighted) = brute_decision_tables(&inst.cid, &spec);
    if tables.context_prob.len() != mass.len() {
        return fail(
            "decision tables",
            seed,
            format!(
                "context count: library {} vs enumeration {}",
                tables.context_prob.len(),
                mass.len()
            ),
        );
    }
    for c in 0..mass.len() {
        if (tables.context_prob[c] - mass[c]).abs() > TOL {
            return fail(
                "decision tables",
                seed,
                format!(
                    "context mass {c}: library {} vs enumeration {}",
                    tables.context_prob[c], mass[c]
                ),
            );
        }
        assert_eq!(tables.joint_utility[c].len(), inst.decision_cardinality);
        for (d, (lib, brute)) in tables.joint_utility[c].iter().zip(&weighted[c]).enumerate() {
            if (lib - brute).abs() > TOL {
                return fail(
                    "decision tables",
                    seed,
                    format!("joint utility ({c}, {d}): library {lib} vs enumeration {brute}"),
                );
            }
        }
    }
    Ok(())
}

/// Mixture queries are the weight-wise combination of component queries, both
/// for the joint and for the decision statistics.
pub fn check_mixture_linearity(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(&mut rng);
    let cbn = &inst.chance;
    let s1 = random_shift(&mut rng, cbn, false);
    let s2 = random_shift(&mut rng, cbn, false);
    let w = rng.random_range(0.05..0.95);
    let mix = InterventionSpec::Mixture {
        components: vec![
            MixtureComponent {
                weight: w,
                spec: s1.clone(),
            },
            MixtureComponent {
                weight: 1.0 - w,
                spec: s2.clone(),
            },
        ],
    };
    let cards = cbn.dag().cardinalities();
    let m_mix = cbn.intervene(&mix).map_err(|e| e.to_string())?;
    let m1 = cbn.intervene(&s1).map_err(|e| e.to_string())?;
    let m2 = cbn.intervene(&s2).map_err(|e| e.to_string())?;
    for a in all_states(&cards) {
        let lhs = m_mix.joint_probability(&a).map_err(|e| e.to_string())?;
        let rhs = w * m1.joint_probability(&a).map_err(|e| e.to_string())?
            + (1.0 - w) * m2.joint_probability(&a).map_err(|e| e.to_string())?;
        if (lhs - rhs).abs() > TOL {
            return fail(
                "mixture linearity",
                seed,
                format!("joint at {a:?}: mixture {lhs} vs combination {rhs}"),
            );
        }
    }
    let t_mix = inst.cid.decision_tables(&mix).map_err(|e| e.to_string())?;
    let t1 = inst.cid.decision_tables(&s1).map_err(|e| e.to_string())?;
    let t2 = inst.cid.decision_tables(&s2).map_err(|e| e.to_string())?;
    for c in 0..t_mix.context_prob.len() {
        let rhs = w * t1.context_prob[c] + (1.0 - w) * t2.context_prob[c];
        if (t_mix.context_prob[c] - rhs).abs() > TOL {
            return fail(
                "mixture linearity",
                seed,
                format!(
                    "context mass {c}: mixture {} vs combination {rhs}",
                    t_mix.context_prob[c]
                ),
            );
        }
        for d in 0..inst.decision_cardinality {
            let rhs = w * t1.joint_utility[c][d] + (1.0 - w) * t2.joint_utility[c][d];
            if (t_mix.joint_utility[c][d] - rhs).abs() > TOL {
                return fail(
                    "mixture linearity",
                    seed,
                    format!(
                        "joint utility ({c}, {d}): mixture {} vs combination {rhs}",
                        t_mix.joint_utility[c][d]
                    ),
                );
            }
        }
    }
    Ok(())
}

/// Positive affine rescaling of the raw utility changes neither the optimal
/// policy nor any regret (normalization cancels the transform).
pub fn check_affine_invariance(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(&mut rng);
    let a = rng.random_range(0.1..10.0);
    let b = rng.random_range(-5.0..5.0);
    let rescaled_raw: Vec<f64> = inst.utility_raw.iter().map(|&u| a * u + b).collect();
    let rescaled = Cid::new(
        inst.chance.clone(),
        VariableDecl::new("D", inst.decision_cardinality),
        inst.info_parents.clone(),
        inst.utility_parents.clone(),
        rescaled_raw,
    )
    .map_err(|e| e.to_string())?;
    let spec = random_shift(&mut rng, &inst.chance, true);
    let p1 = inst.cid.optimal_policy(&spec).map_err(|e| e.to_string())?;
    let p2 = rescaled.optimal_policy(&spec).map_err(|e| e.to_string())?;
    for (c, (r1, r2)) in p1.rows.iter().zip(&p2.rows).enumerate() {
        for d in 0..inst.decision_cardinality {
            if (r1[d] - r2[d]).abs() > 1e-9 {
                return fail(
                    "affine invariance",
                    seed,
                    format!("optimal policy differs at context {c}: {r1:?} vs {r2:?} (scale {a}, offset {b})"),
                );
            }
        }
    }
    let contexts = p1.rows.len();
    let uniform = regret2cause_core::Policy::uniform(inst.decision_cardinality, contexts);
    let decisions: Vec<usize> = (0..contexts)
        .map(|_| rng.random_range(0..inst.decision_cardinality))
        .collect();
    let point = regret2cause_core::Policy::point(inst.decision_cardinality, &decisions);
    for (label, policy) in [("uniform", &uniform), ("point", &point)] {
        let g1 = inst.cid.regret(policy, &spec).map_err(|e| e.to_string())?;
        let g2 = rescaled.regret(policy, &spec).map_err(|e| e.to_string())?;
        if (g1 - g2).abs() > TOL {
            return fail(
                "affine invariance",
                seed,
                format!("{label}-policy regret {g1} vs {g2} (scale {a}, offset {b})"),
            );
        }
    }
    Ok(())
}

/// A hard setting is the constant-map special case of a local shift.
pub fn check_hard_is_constant_local(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(&mut rng);
    let cbn = &inst.chance;
    let dag = cbn.dag();
    let v = rng.random_range(0..dag.variable_count());
    let value = rng.random_range(0..dag.cardinality(v));
    let hard = InterventionSpec::Hard {
        variable: dag.name(v).to_string(),
        value,
    };
    let local = InterventionSpec::Local {
        variable: dag.name(v).to_string(),
        map: vec![value; dag.cardinality(v)],
    };
    let mh = cbn.intervene(&hard).map_err(|e| e.to_string())?;
    let ml = cbn.intervene(&local).map_err(|e| e.to_string())?;
    let cards = dag.cardinalities();
    for a in all_states(&cards) {
        let ph = mh.joint_probability(&a).map_err(|e| e.to_string())?;
        let pl = ml.joint_probability(&a).map_err(|e| e.to_string())?;
        if (ph - pl).abs() > TOL {
            return fail(
                "hard as constant local",
                seed,
                format!("joint at {a:?}: hard {ph} vs constant-map local {pl}"),
            );
        }
    }
    Ok(())
}

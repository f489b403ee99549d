//! Recovering the causal model from a regret-bounded policy oracle.
//!
//! The oracle answers "what would you do under shift σ?"; nothing else about
//! the chance mechanism is observable. The machinery here chooses shifts so
//! that those answers betray the mechanism:
//!
//! 1. **Switch-point estimation** ([`estimate_qcrit`]). Sweep the mixture
//!    `mix(q, σ, σ′)` between a shift of interest and an anchor intervention
//!    whose optimal decision differs. The weight `q_crit` where the oracle's
//!    decision switches encodes the expected-utility gap
//!    `Q = Σ_c P(c; σ)·[U(d₂, x) − U(d₃, x)]` via
//!    `q_crit = 1 / (1 − Q/Δ₀)` ([`gap_from_qcrit`]).
//! 2. **Interval certificates**. A δ-oracle switches anywhere in a band
//!    around `q_crit`; the band's width yields hard bounds `[Q̃⁻, Q̃⁺]`
//!    containing the true `Q`.
//! 3. **Parameter recovery** ([`recover_cpd_entry`]). Holding everything but
//!    a chain of variables fixed by hard interventions, differences of such
//!    gaps isolate single CPD entries as ratios `(Q₁−Q₂)/(Q₃−Q₄)`.
//! 4. **Structure learning** ([`reconstruct`], [`graph_learner_binary`]).
//!    Leave-one-out interventional tables reveal parents: an entry reacts to
//!    a context coordinate iff that coordinate is a parent.
//!
//! Estimations simulate the oracle's answers along the mixture family
//! through a precomputed fast path ([`PreparedRun`]) that is semantically
//! identical to literal [`PolicyOracle::query`] calls (property-tested), so
//! large Monte-Carlo sweeps stay cheap.

use crate::cbn::{next_state, pack_index, state_count, InterventionSpec, MixtureComponent};
use crate::cid::{self, CidError, CidPublic, PolicyOracle, EPS_TIE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Exact-mode edge/equality threshold: absorbs bisection and float noise
/// while staying far below any generator degeneracy margin.
pub const EPS_EDGE: f64 = 1e-9;

/// Monte-Carlo equality z-score for Algorithm-style branch tests: two
/// estimates are "equal" when they differ by less than `Z_EDGE` combined
/// standard errors (plus [`EPS_EDGE`]).
pub const Z_EDGE: f64 = 3.0;

const BISECT_ITERS: u32 = 50;

/// Smallest mixture coefficient tried when referencing a gap measurement
/// back to a consistent anchor (λ-blending); below this the parameter is
/// reported unidentifiable.
const LAMBDA_MIN: f64 = 1.0 / ((1u64 << 20) as f64);

// ── Errors ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error(transparent)]
    Cid(#[from] CidError),
    #[error("no utility-parent state makes decision {decision} sub-optimal (dominant decision; domain dependence violated)")]
    NoAnchor { decision: usize },
    #[error("bisection mode needs an exact oracle, got regret bound {delta}")]
    BisectionNeedsExactOracle { delta: f64 },
    #[error("oracle decision stays optimal-for-anchor up to q = 1; inconsistent with a decision switch")]
    InconsistentOracle,
    #[error("no decision switch in [0, 1] under the fixed anchor (gap is nonnegative for this pair)")]
    NoSwitch,
    #[error("estimated q_crit is 0; mixture is degenerate, gap unbounded")]
    DegenerateMixture,
    #[error("anchor utility gap Δ₀ = {delta0} is not positive")]
    DegenerateAnchor { delta0: f64 },
    #[error("decision switch exits to {found}, run requires {expected}; pair inconsistent")]
    AnchorPairMismatch { expected: usize, found: usize },
    #[error("no λ-blend produced a pair-consistent switch")]
    NoConsistentBlend,
    #[error("parameter (variable {variable}, state {state}) unidentifiable: {reason}")]
    Unidentifiable {
        variable: usize,
        state: usize,
        reason: String,
    },
    #[error("invalid recovery chain: {reason}")]
    BadChain { reason: String },
    #[error("invalid target context: {reason}")]
    BadTargetContext { reason: String },
    #[error("model is not a binary two-variable decision problem: {reason}")]
    NotBinaryPair { reason: String },
    #[error("decision cardinality {cardinality} exceeds the supported 64")]
    TooManyDecisions { cardinality: usize },
}

// ── Modes and domain types ──────────────────────────────────────────────────

/// How a switch point is located along the mixture family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimationMode {
    /// Sample `q ~ Uniform(0,1)` n times and count draws decided
    /// anchor-optimally; standard error ≤ 1/(2√n). Works for any δ.
    MonteCarlo,
    /// Binary-search the unique decision threshold; exact oracles (δ = 0)
    /// only, precision 2⁻⁵⁰.
    Bisection,
    /// The n → ∞ limit of Monte-Carlo: integrate the probability of an
    /// anchor-optimal answer in closed form over the admissibility
    /// breakpoints. Deterministic; works for any δ.
    ExactSwitch,
}

/// An anchor intervention: a full hard setting of the chance variables under
/// which the answer is readable straight off the utility table.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    /// Composite hard intervention on every chance variable.
    pub sigma_prime: InterventionSpec,
    /// States of the utility's chance parents under the anchor.
    pub x_prime: Vec<usize>,
    /// Best decision at the anchor (smallest index among ties).
    pub d2: usize,
    /// All decisions optimal at the anchor (the set the oracle's answer is
    /// tested against while sweeping the mixture).
    pub optimal_set: Vec<usize>,
}

/// Result of one switch-point estimation along `mix(q, σ, σ′)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QCritEstimate {
    /// Estimated switch weight in [0, 1].
    pub q_crit_hat: f64,
    /// Oracle's decision under σ itself.
    pub d1: usize,
    /// Optimal decision at the anchor (q = 0 endpoint).
    pub d2: usize,
    /// Decision the oracle exits to just past the switch.
    pub d3: usize,
    pub anchor: Anchor,
    pub n_samples: usize,
    pub mode: EstimationMode,
    /// Monte Carlo only: strata where set membership flipped relative to the
    /// previous stratum (≥ 1). Bounds the sampling error: with jittered
    /// stratification only boundary strata are uncertain, so
    /// `se(q̂) ≈ √boundaries / (2n)`. 0 for deterministic modes.
    pub mc_boundaries: usize,
}

/// An expected-utility gap `Q` with interval certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    /// Point estimate Q̃ = Δ₀(1 − 1/q̂).
    pub q_value: f64,
    /// Q̃⁻ = Δ₀(1 − (1+ξ)/q̂); equals the point estimate when δ = 0.
    pub lower: f64,
    /// Q̃⁺ = Δ₀(1 − (1−ξ)/q̂); equals the point estimate when δ = 0.
    pub upper: f64,
    /// Oracle regret bound the certificate accounts for.
    pub delta: f64,
    /// ξ = δ/Δ₀.
    pub xi: f64,
    /// Anchor decision gap Δ₀ = U(d₂, x′) − U(d₃, x′) > 0.
    pub delta0: f64,
}

// ── Mixture helper ──────────────────────────────────────────────────────────

/// The two-point mixture `q·σ + (1−q)·σ′`: behaves as σ at q = 1 and as σ′
/// at q = 0, with every interventional quantity affine in q between.
pub fn mix(q: f64, sigma: &InterventionSpec, sigma_prime: &InterventionSpec) -> InterventionSpec {
    debug_assert!((0.0..=1.0).contains(&q));
    InterventionSpec::Mixture {
        components: vec![
            MixtureComponent {
                weight: q,
                spec: sigma.clone(),
            },
            MixtureComponent {
                weight: 1.0 - q,
                spec: sigma_prime.clone(),
            },
        ],
    }
}

// ── Anchor search ───────────────────────────────────────────────────────────

/// Scans utility-parent states in lexicographic order for one where `d1` is
/// not optimal, and returns a full hard intervention realizing it. Chance
/// variables outside the utility's parents are set to 0 unless pinned.
pub fn find_anchor(public: &CidPublic, d1: usize) -> Result<Anchor, ExtractError> {
    find_anchor_constrained(public, d1, &[])
}

/// [`find_anchor`] under pins `(variable, value)` the anchor must honor —
/// used to keep a decision context at positive probability under the anchor.
/// Pinned utility parents restrict the scan; pinned non-utility variables
/// are set verbatim.
pub(crate) fn find_anchor_constrained(
    public: &CidPublic,
    d1: usize,
    pins: &[(usize, usize)],
) -> Result<Anchor, ExtractError> {
    let k = public.decision.cardinality;
    let pa = &public.utility_parents;
    let pa_cards: Vec<usize> = pa.iter().map(|&p| public.cardinality(p)).collect();
    let mut x = vec![0usize; pa.len()];
    // Among all states where d1 is suboptimal, prefer the one with the widest
    // gap between the optimal tier and the runner-up tier. The switch-point
    // certificate's width scales with δ divided by that gap, so a wide-gap
    // anchor keeps both the interval and the point-estimate bias small.
    let mut chosen: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    loop {
        let consistent = pa
            .iter()
            .zip(&x)
            .all(|(&p, &s)| pins.iter().all(|&(v, val)| v != p || val == s));
        if consistent {
            let best = (0..k)
                .map(|d| public.utility_value(&x, d))
                .fold(f64::NEG_INFINITY, f64::max);
            let optimal_set: Vec<usize> = (0..k)
                .filter(|&d| public.utility_value(&x, d) >= best - EPS_TIE)
                .collect();
            if !optimal_set.contains(&d1) {
                let runner_up = (0..k)
                    .filter(|d| !optimal_set.contains(d))
                    .map(|d| public.utility_value(&x, d))
                    .fold(f64::NEG_INFINITY, f64::max);
                let gap = if runner_up.is_finite() {
                    best - runner_up
                } else {
                    f64::INFINITY
                };
                if chosen.as_ref().is_none_or(|(g, _, _)| gap > *g) {
                    chosen = Some((gap, x.clone(), optimal_set));
                }
            }
        }
        if !next_state(&mut x, &pa_cards) {
            break;
        }
    }
    let Some((_, x, optimal_set)) = chosen else {
        return Err(ExtractError::NoAnchor { decision: d1 });
    };
    let parts = (0..public.variables.len())
        .map(|v| {
            let value = pa
                .iter()
                .position(|&p| p == v)
                .map(|i| x[i])
                .or_else(|| pins.iter().find(|&&(pv, _)| pv == v).map(|&(_, val)| val))
                .unwrap_or(0);
            InterventionSpec::Hard {
                variable: public.variables[v].name.clone(),
                value,
            }
        })
        .collect();
    Ok(Anchor {
        sigma_prime: InterventionSpec::Composite { parts },
        x_prime: x.clone(),
        d2: optimal_set[0],
        optimal_set,
    })
}

// ── The prepared mixture family ─────────────────────────────────────────────

/// Precomputed state for answering "what does the oracle play at
/// `mix(q, σ, σ′)` in context `ctx`?" for many values of q.
///
/// Every joint-weighted expected utility is affine in q (mixtures mix
/// distributions linearly), so both endpoints suffice. Decisions produced
/// here agree with literal [`PolicyOracle::query`] calls on the mixture: the
/// admissible set uses the same cut expression and the keyed pick folds the
/// same canonical words in the same order.
pub(crate) struct PreparedRun {
    g_sigma: Vec<f64>,
    g_anchor: Vec<f64>,
    pden_sigma: f64,
    pden_anchor: f64,
    delta: f64,
    k: usize,
    s_mask: u64,
    /// Key prefix folded through seed, mixture structure, context, and the
    /// inner specs' weights — everything except (q, 1−q).
    prefix: u64,
}

impl PreparedRun {
    pub(crate) fn new(
        oracle: &PolicyOracle,
        sigma: &InterventionSpec,
        anchor: &Anchor,
        ctx: usize,
        optimal_set: &[usize],
    ) -> Result<Self, ExtractError> {
        let cid = oracle.cid();
        let k = cid.decision_cardinality();
        if k > 64 {
            return Err(ExtractError::TooManyDecisions { cardinality: k });
        }
        let t_sigma = cid.decision_tables(sigma)?;
        let t_anchor = cid.decision_tables(&anchor.sigma_prime)?;
        // Canonical words of the family mix(q, σ, σ′): structure is
        // q-independent; the weight list is W(σ) ++ W(σ′) ++ [q, 1−q]
        // (children's weights precede their mixture's own), so everything
        // except the outermost pair can be folded now.
        let dag = cid.chance().dag();
        let resolve = |name: &str| dag.index_of(name).expect("specs validated against model");
        let family = mix(0.5, sigma, &anchor.sigma_prime);
        let (structure, weights_all) = cid::spec_words(&family, &resolve);
        debug_assert!(weights_all.len() >= 2);
        let inner = &weights_all[..weights_all.len() - 2];
        let mut prefix = cid::prepare_key_prefix(oracle.seed(), &structure, ctx);
        for &w in inner {
            prefix = cid::fold(prefix, w);
        }
        let mut s_mask = 0u64;
        for &d in optimal_set {
            s_mask |= 1 << d;
        }
        Ok(Self {
            g_sigma: t_sigma.joint_utility[ctx].clone(),
            g_anchor: t_anchor.joint_utility[ctx].clone(),
            pden_sigma: t_sigma.context_prob[ctx],
            pden_anchor: t_anchor.context_prob[ctx],
            delta: oracle.delta(),
            k,
            s_mask,
            prefix,
        })
    }

    fn pden_at(&self, q: f64) -> f64 {
        q * self.pden_sigma + (1.0 - q) * self.pden_anchor
    }

    /// Admissible decisions at q, as (bitmask, count). Mirrors
    /// [`cid::admissible_set`]'s cut expression exactly.
    fn admissible_mask(&self, q: f64) -> (u64, usize) {
        let pden = self.pden_at(q);
        if pden <= 0.0 {
            return (((1u128 << self.k) - 1) as u64, self.k);
        }
        let mut g = [0.0f64; 64];
        let mut best = f64::NEG_INFINITY;
        for (d, gd) in g.iter_mut().enumerate().take(self.k) {
            *gd = q * self.g_sigma[d] + (1.0 - q) * self.g_anchor[d];
            best = best.max(*gd);
        }
        let cut = best - (self.delta + EPS_TIE) * pden;
        let mut mask = 0u64;
        let mut count = 0;
        for (d, &gd) in g.iter().enumerate().take(self.k) {
            if gd >= cut {
                mask |= 1 << d;
                count += 1;
            }
        }
        (mask, count)
    }

    /// The oracle's keyed decision at `mix(q, σ, σ′)`.
    pub(crate) fn decide_at(&self, q: f64) -> usize {
        let (mask, count) = self.admissible_mask(q);
        let state = cid::fold(cid::fold(self.prefix, q.to_bits()), (1.0 - q).to_bits());
        let key = cid::splitmix64(state);
        let mut idx = cid::pick_uniform(key, count);
        for d in 0..self.k {
            if mask & (1 << d) != 0 {
                if idx == 0 {
                    return d;
                }
                idx -= 1;
            }
        }
        unreachable!("admissible sets are never empty");
    }

    fn in_set(&self, q: f64) -> bool {
        self.s_mask & (1 << self.decide_at(q)) != 0
    }

    /// Probability that a keyed pick at q lands in the anchor-optimal set.
    fn frac_in_set(&self, q: f64) -> f64 {
        let (mask, count) = self.admissible_mask(q);
        (mask & self.s_mask).count_ones() as f64 / count as f64
    }

    /// Exact `∫₀¹ P(answer ∈ S | q) dq`: the admissibility pattern is
    /// piecewise constant between roots of the pairwise affine margins, so
    /// the integral is a finite sum.
    fn exact_switch_qhat(&self) -> f64 {
        let a: Vec<f64> = self.g_anchor.clone();
        let b: Vec<f64> = (0..self.k)
            .map(|d| self.g_sigma[d] - self.g_anchor[d])
            .collect();
        let pa = self.pden_anchor;
        let pb = self.pden_sigma - self.pden_anchor;
        let dtol = self.delta + EPS_TIE;
        let mut cuts = vec![0.0, 1.0];
        let push_root = |c0: f64, c1: f64, cuts: &mut Vec<f64>| {
            // root of c0 + q·c1 in (0, 1)
            if c1 != 0.0 {
                let q = -c0 / c1;
                if q > 0.0 && q < 1.0 {
                    cuts.push(q);
                }
            }
        };
        for d in 0..self.k {
            for j in 0..self.k {
                if d == j {
                    continue;
                }
                // argmax switches: G_d = G_j
                push_root(a[d] - a[j], b[d] - b[j], &mut cuts);
                // band edges: G_d = max − δ̃·pden crossing against leader j
                push_root(a[d] - a[j] + dtol * pa, b[d] - b[j] + dtol * pb, &mut cuts);
            }
        }
        // zero-probability context boundary
        push_root(pa, pb, &mut cuts);
        cuts.sort_by(|x, y| x.partial_cmp(y).expect("cuts are finite"));
        cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
        let mut integral = 0.0;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            integral += self.frac_in_set(0.5 * (lo + hi)) * (hi - lo);
        }
        integral
    }
}

// ── Switch-point estimation ─────────────────────────────────────────────────

/// How an estimation chooses its anchor.
pub(crate) enum AnchorChoice<'a> {
    /// Scan for an anchor given the oracle's decision under σ, honoring pins.
    Fresh { pins: &'a [(usize, usize)] },
    /// Reuse a previous run's anchor; the switch must exit to `required_d3`
    /// when given, so gaps from several runs refer to one decision pair.
    Fixed {
        anchor: &'a Anchor,
        required_d3: Option<usize>,
    },
}

/// Estimates the decision-switch weight along `mix(q, σ, σ′)` against a
/// freshly scanned anchor, reading the oracle's policy at context 0 (the
/// only context when the decision has no information parents).
pub fn estimate_qcrit(
    oracle: &PolicyOracle,
    sigma: &InterventionSpec,
    public: &CidPublic,
    n: usize,
    stream_seed: u64,
    mode: EstimationMode,
) -> Result<QCritEstimate, ExtractError> {
    estimate_qcrit_at(
        oracle,
        sigma,
        public,
        0,
        n,
        stream_seed,
        mode,
        AnchorChoice::Fresh { pins: &[] },
    )
}

/// Full-control variant: explicit decision context and anchor choice.
#[allow(clippy::too_many_arguments)]
pub(crate) fn estimate_qcrit_at(
    oracle: &PolicyOracle,
    sigma: &InterventionSpec,
    public: &CidPublic,
    ctx: usize,
    n: usize,
    stream_seed: u64,
    mode: EstimationMode,
    choice: AnchorChoice<'_>,
) -> Result<QCritEstimate, ExtractError> {
    let n = n.max(1);
    let d1 = oracle
        .query(sigma)?
        .decision(ctx)
        .expect("oracle rows are point masses");
    let (anchor, fixed, required_d3) = match choice {
        AnchorChoice::Fresh { pins } => (find_anchor_constrained(public, d1, pins)?, false, None),
        AnchorChoice::Fixed {
            anchor,
            required_d3,
        } => (anchor.clone(), true, required_d3),
    };
    let run = PreparedRun::new(oracle, sigma, &anchor, ctx, &anchor.optimal_set)?;

    let mut mc_boundaries = 0usize;
    let q_hat = match mode {
        EstimationMode::MonteCarlo => {
            // Jittered stratification: one uniform draw inside each of n
            // equal strata. The oracle's answer is a deterministic function
            // of q, so only strata containing a membership boundary
            // contribute sampling error — q̂ converges at rate 1/n instead
            // of 1/√n, and the flip count measures how many such strata
            // this run actually crossed.
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
            let inv = 1.0 / n as f64;
            let mut hits = 0usize;
            let mut prev = true;
            for i in 0..n {
                let q = (i as f64 + rng.random::<f64>()) * inv;
                let inside = run.in_set(q);
                if inside {
                    hits += 1;
                }
                if i > 0 && inside != prev {
                    mc_boundaries += 1;
                }
                prev = inside;
            }
            mc_boundaries = mc_boundaries.max(1);
            if hits == n && fixed {
                // No draw ever left the anchor-optimal set: the gap for this
                // pair is nonnegative, there is no switch to find.
                return Err(ExtractError::NoSwitch);
            }
            hits as f64 / n as f64
        }
        EstimationMode::Bisection => {
            if oracle.delta() != 0.0 {
                return Err(ExtractError::BisectionNeedsExactOracle {
                    delta: oracle.delta(),
                });
            }
            if !run.in_set(0.0) {
                return Err(ExtractError::InconsistentOracle);
            }
            if run.in_set(1.0) {
                return Err(if fixed {
                    ExtractError::NoSwitch
                } else {
                    ExtractError::InconsistentOracle
                });
            }
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..BISECT_ITERS {
                let mid = 0.5 * (lo + hi);
                if run.in_set(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
        EstimationMode::ExactSwitch => {
            let q = run.exact_switch_qhat();
            if q >= 1.0 - 1e-15 && fixed {
                return Err(ExtractError::NoSwitch);
            }
            q
        }
    };

    // Exit decision just past the switch: step η beyond q̂, doubling until
    // the answer leaves the anchor-optimal set.
    let mut eta = 1.0 / n as f64;
    let d3 = loop {
        let q = (q_hat + eta).min(1.0);
        let d = run.decide_at(q);
        if run.s_mask & (1 << d) == 0 {
            break d;
        }
        if q >= 1.0 {
            return Err(if fixed {
                ExtractError::NoSwitch
            } else {
                ExtractError::InconsistentOracle
            });
        }
        eta *= 2.0;
    };
    if let Some(expected) = required_d3 {
        if d3 != expected {
            return Err(ExtractError::AnchorPairMismatch {
                expected,
                found: d3,
            });
        }
    }
    Ok(QCritEstimate {
        q_crit_hat: q_hat,
        d1,
        d2: anchor.d2,
        d3,
        anchor,
        n_samples: n,
        mode,
        mc_boundaries,
    })
}

/// Converts a switch-point estimate into the expected-utility gap it
/// certifies. With `delta = 0` the bounds collapse onto the point estimate;
/// otherwise `ξ = delta/Δ₀` widens them to cover every admissible switch
/// position of a δ-oracle.
pub fn gap_from_qcrit(
    est: &QCritEstimate,
    public: &CidPublic,
    delta: f64,
) -> Result<GapEstimate, ExtractError> {
    let delta0 = public.utility_value(&est.anchor.x_prime, est.d2)
        - public.utility_value(&est.anchor.x_prime, est.d3);
    if delta0 <= 0.0 || delta0.is_nan() {
        return Err(ExtractError::DegenerateAnchor { delta0 });
    }
    let q = est.q_crit_hat;
    if q <= 0.0 {
        return Err(ExtractError::DegenerateMixture);
    }
    // The indifference band is symmetric around the true switch point, so the
    // observed d2-mass midpoint inverts to an unbiased gap — unless the band
    // runs past q = 1 (it does exactly when |gap| < delta) and gets clipped.
    // In the clipped regime the midpoint is (q_a + 1)/2, which still pins the
    // band's lower edge and yields the corrected closed form below. The two
    // expressions agree on the regime boundary q = Δ₀/(Δ₀+δ).
    let point = if delta > 0.0 && q > delta0 / (delta0 + delta) && 2.0 * q - 1.0 > 1e-12 {
        delta0 - (delta0 - delta) / (2.0 * q - 1.0)
    } else {
        delta0 * (1.0 - 1.0 / q)
    };
    let (lower, upper, xi) = if delta == 0.0 {
        (point, point, 0.0)
    } else {
        let xi = delta / delta0;
        (
            delta0 * (1.0 - (1.0 + xi) / q),
            delta0 * (1.0 - (1.0 - xi) / q),
            xi,
        )
    };
    Ok(GapEstimate {
        q_value: point,
        lower,
        upper,
        delta,
        xi,
        delta0,
    })
}

// ── Consistent gap measurement across several shifts ────────────────────────

/// One measured gap: the switch estimate plus its certified interval.
#[derive(Clone, Debug)]
pub(crate) struct GapRun {
    pub(crate) est: QCritEstimate,
    pub(crate) gap: GapEstimate,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn measure_gap(
    oracle: &PolicyOracle,
    public: &CidPublic,
    sigma: &InterventionSpec,
    ctx: usize,
    n: usize,
    stream_seed: u64,
    mode: EstimationMode,
    choice: AnchorChoice<'_>,
) -> Result<GapRun, ExtractError> {
    let est = estimate_qcrit_at(oracle, sigma, public, ctx, n, stream_seed, mode, choice)?;
    let gap = gap_from_qcrit(&est, public, oracle.delta())?;
    Ok(GapRun { est, gap })
}

/// An interval-carrying gap value for interval arithmetic downstream.
#[derive(Clone, Copy, Debug)]
pub(crate) struct GapInterval {
    pub(crate) point: f64,
    pub(crate) lower: f64,
    pub(crate) upper: f64,
}

impl GapInterval {
    fn from_gap(g: &GapEstimate) -> Self {
        Self {
            point: g.q_value,
            lower: g.lower,
            upper: g.upper,
        }
    }

    fn sub(self, other: Self) -> Self {
        Self {
            point: self.point - other.point,
            lower: self.lower - other.upper,
            upper: self.upper - other.lower,
        }
    }

    fn straddles_zero(self) -> bool {
        self.lower <= 0.0 && self.upper >= 0.0
    }

    /// Interval quotient for a denominator of one sign (corner form).
    fn div(self, den: Self) -> Self {
        let corners = [
            self.lower / den.lower,
            self.lower / den.upper,
            self.upper / den.lower,
            self.upper / den.upper,
        ];
        Self {
            point: self.point / den.point,
            lower: corners.iter().cloned().fold(f64::INFINITY, f64::min),
            upper: corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn exact(v: f64) -> Self {
        Self {
            point: v,
            lower: v,
            upper: v,
        }
    }
}

/// Measures the gap of `sigma_target` for the *same decision pair* as a
/// reference run. When the pair has no switch under the target (its gap is
/// nonnegative) or exits to a different decision, the target is blended
/// toward the reference — `(1−λ)·σ_ref + λ·σ_target` — until the pair's
/// switch reappears, and the target's gap is recovered from the blend by
/// linearity: `Q_t = (Q_blend − (1−λ)·Q_ref)/λ`. The 1/λ amplification is
/// carried into the interval honestly.
#[allow(clippy::too_many_arguments)]
fn measure_gap_consistent(
    oracle: &PolicyOracle,
    public: &CidPublic,
    sigma_target: &InterventionSpec,
    sigma_ref: &InterventionSpec,
    reference: &GapRun,
    ctx: usize,
    n: usize,
    stream_seed: u64,
    mode: EstimationMode,
    provenance: &mut Vec<GapEstimate>,
) -> Result<GapInterval, ExtractError> {
    let fixed = AnchorChoice::Fixed {
        anchor: &reference.est.anchor,
        required_d3: Some(reference.est.d3),
    };
    match measure_gap(oracle, public, sigma_target, ctx, n, stream_seed, mode, fixed) {
        Ok(run) => {
            provenance.push(run.gap.clone());
            return Ok(GapInterval::from_gap(&run.gap));
        }
        Err(ExtractError::NoSwitch) | Err(ExtractError::AnchorPairMismatch { .. }) => {}
        Err(e) => return Err(e),
    }
    let r = GapInterval::from_gap(&reference.gap);
    let mut lambda = 0.5f64;
    let mut level = 0u64;
    while lambda >= LAMBDA_MIN {
        let blend = InterventionSpec::Mixture {
            components: vec![
                MixtureComponent {
                    weight: 1.0 - lambda,
                    spec: sigma_ref.clone(),
                },
                MixtureComponent {
                    weight: lambda,
                    spec: sigma_target.clone(),
                },
            ],
        };
        let fixed = AnchorChoice::Fixed {
            anchor: &reference.est.anchor,
            required_d3: Some(reference.est.d3),
        };
        let seed = derive_seed(stream_seed, &[0x626c656e64, level]);
        match measure_gap(oracle, public, &blend, ctx, n, seed, mode, fixed) {
            Ok(run) => {
                let b = GapInterval::from_gap(&run.gap);
                provenance.push(run.gap.clone());
                return Ok(GapInterval {
                    point: (b.point - (1.0 - lambda) * r.point) / lambda,
                    lower: (b.lower - (1.0 - lambda) * r.upper) / lambda,
                    upper: (b.upper - (1.0 - lambda) * r.lower) / lambda,
                });
            }
            Err(ExtractError::NoSwitch) | Err(ExtractError::AnchorPairMismatch { .. }) => {
                lambda *= 0.5;
                level += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Err(ExtractError::NoConsistentBlend)
}

/// Derives an independent sub-stream seed from a master seed and a path of
/// tag words; deterministic regardless of execution order.
pub(crate) fn derive_seed(master: u64, words: &[u64]) -> u64 {
    let mut s = cid::splitmix64(master);
    for &w in words {
        s = cid::fold(s, w);
    }
    s
}

// ── Single-parameter recovery ───────────────────────────────────────────────

/// Which CPD entry to recover: `P(variable = state | do(context))` with the
/// context given as hard settings of every chance variable outside the
/// recovery chain.
#[derive(Clone, Debug, PartialEq)]
pub struct CpdTarget {
    pub variable: usize,
    pub state: usize,
    /// `(variable, value)` hard pins; must cover exactly the chance
    /// variables outside the chain.
    pub context: Vec<(usize, usize)>,
}

/// A recovered probability with its certificate.
#[derive(Clone, Debug)]
pub struct EntryEstimate {
    pub point: f64,
    pub interval: (f64, f64),
    /// The gap estimates that entered this value.
    pub provenance: Vec<GapEstimate>,
}

/// Recovers one interventional CPD entry from oracle answers alone.
///
/// The chain runs from the target down to a variable the decision context or
/// the utility can see: its last element must be an information parent of
/// the decision (read through the policy context) or a chance parent of the
/// utility (read through the utility table); interior elements must be
/// neither. All other chance variables are hard-set by `target.context`, so
/// the target's CPD row is exposed:
///
/// * base chains of length 1 divide the measured gap by known utility
///   differences;
/// * longer chains take the ratio `(Q₁ − Q₂)/(Q₃ − Q₄)` of gaps under the
///   plain, state-merged, and two hard-set versions of the target, all
///   measured for one consistent decision pair.
///
/// Intervals combine by worst-case interval arithmetic; a denominator
/// interval straddling 0 makes the entry unidentifiable (reported, never
/// guessed).
pub fn recover_cpd_entry(
    oracle: &PolicyOracle,
    public: &CidPublic,
    target: &CpdTarget,
    chain: &[usize],
    n: usize,
    mode: EstimationMode,
    stream_seed: u64,
) -> Result<EntryEstimate, ExtractError> {
    validate_chain(public, target, chain)?;
    let base = *chain.last().expect("chain validated non-empty");
    let case1 = public.info_parents.contains(&base);
    if chain.len() == 1 {
        if case1 {
            recover_base_case1(oracle, public, target, n, mode, stream_seed)
        } else {
            recover_base_case2(oracle, public, target, n, mode, stream_seed)
        }
    } else {
        recover_recursive(oracle, public, target, chain, case1, n, mode, stream_seed)
    }
}

fn validate_chain(
    public: &CidPublic,
    target: &CpdTarget,
    chain: &[usize],
) -> Result<(), ExtractError> {
    let n_vars = public.variables.len();
    if chain.is_empty() || chain[0] != target.variable {
        return Err(ExtractError::BadChain {
            reason: "chain must start at the target variable".into(),
        });
    }
    let mut seen = vec![false; n_vars];
    for &v in chain {
        if v >= n_vars || seen[v] {
            return Err(ExtractError::BadChain {
                reason: format!("chain variable {v} out of range or repeated"),
            });
        }
        seen[v] = true;
    }
    let base = *chain.last().expect("non-empty");
    if !public.info_parents.contains(&base) && !public.utility_parents.contains(&base) {
        return Err(ExtractError::BadChain {
            reason: "chain base must be visible to the decision or the utility".into(),
        });
    }
    for &v in &chain[..chain.len() - 1] {
        if v != target.variable
            && (public.info_parents.contains(&v) || public.utility_parents.contains(&v))
        {
            return Err(ExtractError::BadChain {
                reason: format!("chain interior variable {v} is directly visible"),
            });
        }
    }
    if target.state >= public.cardinality(target.variable) {
        return Err(ExtractError::BadTargetContext {
            reason: "target state out of range".into(),
        });
    }
    let mut covered = vec![false; n_vars];
    for &(v, val) in &target.context {
        if v >= n_vars || val >= public.cardinality(v) {
            return Err(ExtractError::BadTargetContext {
                reason: format!("pin ({v}, {val}) out of range"),
            });
        }
        if seen[v] || covered[v] {
            return Err(ExtractError::BadTargetContext {
                reason: format!("variable {v} pinned but in the chain or pinned twice"),
            });
        }
        covered[v] = true;
    }
    for v in 0..n_vars {
        if !seen[v] && !covered[v] {
            return Err(ExtractError::BadTargetContext {
                reason: format!("variable {v} neither in the chain nor pinned"),
            });
        }
    }
    Ok(())
}

fn context_value(context: &[(usize, usize)], v: usize) -> Option<usize> {
    context.iter().find(|&&(cv, _)| cv == v).map(|&(_, val)| val)
}

/// Hard intervention on every pinned variable, ascending for determinism.
fn context_spec(public: &CidPublic, context: &[(usize, usize)]) -> InterventionSpec {
    let mut pins: Vec<(usize, usize)> = context.to_vec();
    pins.sort_unstable();
    InterventionSpec::Composite {
        parts: pins
            .iter()
            .map(|&(v, val)| InterventionSpec::Hard {
                variable: public.variables[v].name.clone(),
                value: val,
            })
            .collect(),
    }
}

/// Utility-parent states when the target takes `t` and everything else
/// follows the context pins.
fn x_states(
    public: &CidPublic,
    target_var: usize,
    t: usize,
    context: &[(usize, usize)],
) -> Result<Vec<usize>, ExtractError> {
    public
        .utility_parents
        .iter()
        .map(|&u| {
            if u == target_var {
                Ok(t)
            } else {
                context_value(context, u).ok_or_else(|| ExtractError::BadTargetContext {
                    reason: format!("utility parent {u} is free but not on the chain"),
                })
            }
        })
        .collect()
}

/// Decision-context index and anchor pins induced by the pins plus an
/// optional overriding value for one info parent (the Case-1 base).
fn decision_context(
    public: &CidPublic,
    context: &[(usize, usize)],
    base_override: Option<(usize, usize)>,
) -> Result<(usize, Vec<(usize, usize)>), ExtractError> {
    let cards: Vec<usize> = public
        .info_parents
        .iter()
        .map(|&p| public.cardinality(p))
        .collect();
    let mut coords = Vec::with_capacity(public.info_parents.len());
    let mut pins = Vec::with_capacity(public.info_parents.len());
    for &p in &public.info_parents {
        let value = match base_override {
            Some((bv, s)) if bv == p => s,
            _ => context_value(context, p).ok_or_else(|| ExtractError::BadTargetContext {
                reason: format!("decision information parent {p} is free but not the chain base"),
            })?,
        };
        coords.push(value);
        pins.push((p, value));
    }
    Ok((pack_index(&coords, &cards), pins))
}

/// Base case, target visible to the decision: the policy context pins the
/// target, so the gap is directly `P(target = state | pa)·ΔU` with ΔU known.
fn recover_base_case1(
    oracle: &PolicyOracle,
    public: &CidPublic,
    target: &CpdTarget,
    n: usize,
    mode: EstimationMode,
    stream_seed: u64,
) -> Result<EntryEstimate, ExtractError> {
    let sigma1 = context_spec(public, &target.context);
    let (ctx, pins) =
        decision_context(public, &target.context, Some((target.variable, target.state)))?;
    let run = match measure_gap(
        oracle,
        public,
        &sigma1,
        ctx,
        n,
        derive_seed(stream_seed, &[1]),
        mode,
        AnchorChoice::Fresh { pins: &pins },
    ) {
        Ok(run) => run,
        Err(ExtractError::NoSwitch) | Err(ExtractError::InconsistentOracle) => {
            return Err(ExtractError::Unidentifiable {
                variable: target.variable,
                state: target.state,
                reason: "no decision switch; the entry has (near-)zero probability".into(),
            })
        }
        Err(e) => return Err(e),
    };
    let x = x_states(public, target.variable, target.state, &target.context)?;
    let beta = public.utility_value(&x, run.est.d2) - public.utility_value(&x, run.est.d3);
    if beta.abs() < EPS_TIE {
        return Err(ExtractError::Unidentifiable {
            variable: target.variable,
            state: target.state,
            reason: "utility difference at the pinned state vanishes".into(),
        });
    }
    let p = GapInterval::from_gap(&run.gap).div(GapInterval::exact(beta));
    Ok(finish_entry(p, vec![run.gap]))
}

/// Base case, target visible to the utility: gaps under the plain and
/// state-merged interventions differ by `P(target = s)·(β(s) − β(s′))` with
/// both β known from the utility table, and the merged gap itself reduces to
/// known β values when the target is binary.
fn recover_base_case2(
    oracle: &PolicyOracle,
    public: &CidPublic,
    target: &CpdTarget,
    n: usize,
    mode: EstimationMode,
    stream_seed: u64,
) -> Result<EntryEstimate, ExtractError> {
    let card = public.cardinality(target.variable);
    let s = target.state;
    let sigma1 = context_spec(public, &target.context);
    let (ctx, pins) = decision_context(public, &target.context, None)?;
    let run1 = measure_gap(
        oracle,
        public,
        &sigma1,
        ctx,
        n,
        derive_seed(stream_seed, &[1]),
        mode,
        AnchorChoice::Fresh { pins: &pins },
    )?;
    let q1 = GapInterval::from_gap(&run1.gap);
    let beta = |t: usize| -> Result<f64, ExtractError> {
        let x = x_states(public, target.variable, t, &target.context)?;
        Ok(public.utility_value(&x, run1.est.d2) - public.utility_value(&x, run1.est.d3))
    };
    let mut provenance = vec![run1.gap.clone()];
    let mut last_reason = "no companion state separates the utility".to_string();
    for s_prime in (0..card).filter(|&t| t != s) {
        let den = beta(s)? - beta(s_prime)?;
        if den.abs() < EPS_TIE {
            continue;
        }
        // Q₂: gap under σ₁ + merge(s → s′). For a binary target the merge
        // makes it deterministic, so Q₂ = β(s′) exactly — no oracle run.
        let q2 = if card == 2 {
            GapInterval::exact(beta(s_prime)?)
        } else {
            let mut map: Vec<usize> = (0..card).collect();
            map[s] = s_prime;
            let sigma2 = with_part(
                &sigma1,
                InterventionSpec::Local {
                    variable: public.variables[target.variable].name.clone(),
                    map,
                },
            );
            match measure_gap_consistent(
                oracle,
                public,
                &sigma2,
                &sigma1,
                &run1,
                ctx,
                n,
                derive_seed(stream_seed, &[2, s_prime as u64]),
                mode,
                &mut provenance,
            ) {
                Ok(q2) => q2,
                Err(ExtractError::NoConsistentBlend) => {
                    last_reason = "no pair-consistent measurement of the merged shift".into();
                    continue;
                }
                Err(e) => return Err(e),
            }
        };
        let p = q1.sub(q2).div(GapInterval::exact(den));
        return Ok(finish_entry(p, provenance));
    }
    Err(ExtractError::Unidentifiable {
        variable: target.variable,
        state: s,
        reason: last_reason,
    })
}

/// Recursive case: the target influences the visible base only through free
/// chain variables, so the denominator gaps must be measured too.
#[allow(clippy::too_many_arguments)]
fn recover_recursive(
    oracle: &PolicyOracle,
    public: &CidPublic,
    target: &CpdTarget,
    chain: &[usize],
    case1: bool,
    n: usize,
    mode: EstimationMode,
    stream_seed: u64,
) -> Result<EntryEstimate, ExtractError> {
    let card = public.cardinality(target.variable);
    let s = target.state;
    let base = *chain.last().expect("validated");
    let sigma1 = context_spec(public, &target.context);
    let base_states = if case1 {
        (0..public.cardinality(base)).collect::<Vec<_>>()
    } else {
        vec![0]
    };
    let mut last_reason = "denominator gap interval straddles zero".to_string();
    for &c_b in &base_states {
        let base_override = case1.then_some((base, c_b));
        let (ctx, pins) = decision_context(public, &target.context, base_override)?;
        let seed_cb = derive_seed(stream_seed, &[c_b as u64]);
        let run1 = match measure_gap(
            oracle,
            public,
            &sigma1,
            ctx,
            n,
            derive_seed(seed_cb, &[1]),
            mode,
            AnchorChoice::Fresh { pins: &pins },
        ) {
            Ok(r) => r,
            Err(ExtractError::NoSwitch) | Err(ExtractError::InconsistentOracle) => {
                last_reason = "reference shift produced no decision switch".into();
                continue;
            }
            Err(e) => return Err(e),
        };
        let q1 = GapInterval::from_gap(&run1.gap);
        let target_name = public.variables[target.variable].name.clone();
        for s_prime in (0..card).filter(|&t| t != s) {
            let mut provenance = vec![run1.gap.clone()];
            let mut map: Vec<usize> = (0..card).collect();
            map[s] = s_prime;
            let sigma2 = with_part(
                &sigma1,
                InterventionSpec::Local {
                    variable: target_name.clone(),
                    map: map.clone(),
                },
            );
            let sigma3 = with_part(
                &sigma1,
                InterventionSpec::Hard {
                    variable: target_name.clone(),
                    value: s,
                },
            );
            let sigma4 = with_part(
                &sigma1,
                InterventionSpec::Hard {
                    variable: target_name.clone(),
                    value: s_prime,
                },
            );
            let consistent = |spec: &InterventionSpec, tag: u64, prov: &mut Vec<GapEstimate>| {
                measure_gap_consistent(
                    oracle,
                    public,
                    spec,
                    &sigma1,
                    &run1,
                    ctx,
                    n,
                    derive_seed(seed_cb, &[tag, s_prime as u64]),
                    mode,
                    prov,
                )
            };
            let q2 = match consistent(&sigma2, 2, &mut provenance) {
                Ok(v) => v,
                Err(ExtractError::NoConsistentBlend) => continue,
                Err(e) => return Err(e),
            };
            let q3 = match consistent(&sigma3, 3, &mut provenance) {
                Ok(v) => v,
                Err(ExtractError::NoConsistentBlend) => continue,
                Err(e) => return Err(e),
            };
            let q4 = match consistent(&sigma4, 4, &mut provenance) {
                Ok(v) => v,
                Err(ExtractError::NoConsistentBlend) => continue,
                Err(e) => return Err(e),
            };
            let den = q3.sub(q4);
            if den.straddles_zero() {
                last_reason = "denominator gap interval straddles zero".into();
                continue;
            }
            let p = q1.sub(q2).div(den);
            return Ok(finish_entry(p, provenance));
        }
    }
    Err(ExtractError::Unidentifiable {
        variable: target.variable,
        state: s,
        reason: last_reason,
    })
}

/// Appends one hard/local part to a composite context intervention.
fn with_part(sigma1: &InterventionSpec, part: InterventionSpec) -> InterventionSpec {
    let InterventionSpec::Composite { parts } = sigma1 else {
        unreachable!("context interventions are composites");
    };
    let mut parts = parts.clone();
    parts.push(part);
    InterventionSpec::Composite { parts }
}

/// Clamps a recovered probability and its interval into [0, 1], keeping the
/// point inside the interval.
fn finish_entry(p: GapInterval, provenance: Vec<GapEstimate>) -> EntryEstimate {
    let lower = p.lower.clamp(0.0, 1.0);
    let upper = p.upper.clamp(0.0, 1.0);
    let point = p.point.clamp(lower, upper);
    EntryEstimate {
        point,
        interval: (lower, upper),
        provenance,
    }
}

// ── Whole-model reconstruction ──────────────────────────────────────────────

/// One CPD entry that could not be identified, with the failure reason.
#[derive(Clone, Debug)]
pub struct UnidentifiedEntry {
    pub variable: usize,
    pub state: usize,
    pub context: Vec<(usize, usize)>,
    pub reason: String,
}

/// A recovered conditional probability table.
#[derive(Clone, Debug)]
pub struct RecoveredCpd {
    /// Detected parents, as original chance indices, ascending.
    pub parents: Vec<usize>,
    /// Point estimates; rows in mixed-radix parent order, each row summing
    /// to 1 after the final state is filled by complement and normalized.
    pub point: Vec<Vec<f64>>,
    /// Per-entry interval bounds.
    pub bounds: Vec<Vec<(f64, f64)>>,
    /// Per-entry gap estimates that produced the value (empty for the
    /// complement-filled final state).
    pub provenance: Vec<Vec<Vec<GapEstimate>>>,
}

/// The reconstructed causal model over the variables the procedure reached:
/// the decision's information parents, the utility's chance parents, and
/// every ancestor discovered behind them.
#[derive(Clone, Debug)]
pub struct ReconstructedModel {
    /// Original chance indices of recovered variables, ascending.
    pub variables: Vec<usize>,
    /// Detected edges `(parent, child)` as original chance indices. In
    /// approximate mode this is guaranteed a sub-graph of the truth (weak
    /// edges may be missed); in exact mode it is the truth on faithful
    /// models.
    pub edges: Vec<(usize, usize)>,
    /// Recovered CPD per variable (aligned with `variables`); `None` when
    /// any of its entries was unidentifiable.
    pub cpds: Vec<Option<RecoveredCpd>>,
    pub unidentifiable: Vec<UnidentifiedEntry>,
}

/// Recovers graph and CPDs from the oracle by the leave-one-out worklist:
/// seed at the directly visible variables, recover each frontier variable's
/// interventional table under every context of the others, detect parents by
/// single-coordinate response, and push newly discovered parents onto the
/// frontier with an extended chain.
///
/// Complexity is exponential in the number of chance variables (each
/// variable's table enumerates all contexts of the others); intended for
/// desk-scale models (the experiment harness caps at 6).
pub fn reconstruct(
    oracle: &PolicyOracle,
    public: &CidPublic,
    n: usize,
    mode: EstimationMode,
    stream_seed: u64,
) -> Result<ReconstructedModel, ExtractError> {
    let n_vars = public.variables.len();
    let exact = oracle.delta() == 0.0;
    let mut visited = vec![false; n_vars];
    let mut frontier: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut seed_vars: Vec<usize> = public.info_parents.clone();
    seed_vars.sort_unstable();
    for &b in &seed_vars {
        if !visited[b] {
            visited[b] = true;
            frontier.push((b, vec![b]));
        }
    }
    let mut u_seeds: Vec<usize> = public
        .utility_parents
        .iter()
        .copied()
        .filter(|p| !public.info_parents.contains(p))
        .collect();
    u_seeds.sort_unstable();
    for &t in &u_seeds {
        if !visited[t] {
            visited[t] = true;
            frontier.push((t, vec![t]));
        }
    }

    let mut recovered: Vec<Option<RecoveredCpd>> = vec![None; n_vars];
    let mut reached: Vec<bool> = vec![false; n_vars];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut unidentifiable = Vec::new();

    let mut cursor = 0;
    while cursor < frontier.len() {
        let (v, chain) = frontier[cursor].clone();
        cursor += 1;
        reached[v] = true;
        let others: Vec<usize> = (0..n_vars).filter(|u| !chain.contains(u)).collect();
        let other_cards: Vec<usize> = others.iter().map(|&u| public.cardinality(u)).collect();
        let card = public.cardinality(v);
        let n_contexts = state_count(&other_cards);

        // Leave-one-out tables: per context of the others, the target's
        // first card−1 interventional probabilities (with certificates).
        let mut table: Vec<Vec<Option<EntryEstimate>>> = Vec::with_capacity(n_contexts);
        let mut y = vec![0usize; others.len()];
        for y_idx in 0..n_contexts {
            let context: Vec<(usize, usize)> =
                others.iter().copied().zip(y.iter().copied()).collect();
            let mut row = Vec::with_capacity(card - 1);
            for s in 0..card - 1 {
                let target = CpdTarget {
                    variable: v,
                    state: s,
                    context: context.clone(),
                };
                let seed = derive_seed(stream_seed, &[v as u64, y_idx as u64, s as u64]);
                match recover_cpd_entry(oracle, public, &target, &chain, n, mode, seed) {
                    Ok(e) => row.push(Some(e)),
                    Err(ExtractError::Unidentifiable { reason, .. }) => {
                        unidentifiable.push(UnidentifiedEntry {
                            variable: v,
                            state: s,
                            context: context.clone(),
                            reason,
                        });
                        row.push(None);
                    }
                    Err(e) => return Err(e),
                }
            }
            table.push(row);
            next_state(&mut y, &other_cards);
        }

        // Parent detection: variable u is a parent iff some pair of contexts
        // differing only in u's coordinate yields distinguishable entries.
        let mut parents = Vec::new();
        for (ui, &u) in others.iter().enumerate() {
            let mut is_parent = false;
            'pairs: for a_idx in 0..n_contexts {
                let mut coords = vec![0usize; others.len()];
                crate::cbn::unpack_index(a_idx, &other_cards, &mut coords);
                for alt in coords[ui] + 1..other_cards[ui] {
                    let mut coords_b = coords.clone();
                    coords_b[ui] = alt;
                    let b_idx = pack_index(&coords_b, &other_cards);
                    for (ea, eb) in table[a_idx].iter().zip(&table[b_idx]).take(card - 1) {
                        let (Some(ea), Some(eb)) = (ea, eb) else {
                            continue;
                        };
                        let differs = if exact {
                            (ea.point - eb.point).abs() > EPS_EDGE
                        } else {
                            ea.interval.0 > eb.interval.1 + EPS_EDGE
                                || eb.interval.0 > ea.interval.1 + EPS_EDGE
                        };
                        if differs {
                            is_parent = true;
                            break 'pairs;
                        }
                    }
                }
            }
            if is_parent {
                parents.push(u);
                edges.push((u, v));
                if !visited[u] {
                    visited[u] = true;
                    let mut chain_u = vec![u];
                    chain_u.extend_from_slice(&chain);
                    frontier.push((u, chain_u));
                }
            }
        }

        // Collapse contexts onto the detected parent set: equal projections
        // are repeated measurements of one row.
        let complete = table.iter().all(|row| row.iter().all(Option::is_some));
        if complete {
            let parent_cards: Vec<usize> = parents.iter().map(|&p| public.cardinality(p)).collect();
            let n_rows = state_count(&parent_cards);
            let mut point = vec![vec![0.0f64; card]; n_rows];
            let mut bounds = vec![vec![(1.0f64, 0.0f64); card]; n_rows];
            let mut provenance = vec![vec![Vec::new(); card]; n_rows];
            let mut counts = vec![0usize; n_rows];
            let mut y = vec![0usize; others.len()];
            for row in table.iter() {
                let proj: Vec<usize> = parents
                    .iter()
                    .map(|&p| y[others.iter().position(|&o| o == p).expect("parent ∈ others")])
                    .collect();
                let r = pack_index(&proj, &parent_cards);
                counts[r] += 1;
                for (s, entry) in row.iter().enumerate() {
                    let e = entry.as_ref().expect("checked complete");
                    point[r][s] += e.point;
                    let (lo, hi) = &mut bounds[r][s];
                    *lo = lo.min(e.interval.0);
                    *hi = hi.max(e.interval.1);
                    provenance[r][s].extend(e.provenance.iter().cloned());
                }
                next_state(&mut y, &other_cards);
            }
            for r in 0..n_rows {
                let m = counts[r] as f64;
                let mut head_sum = 0.0;
                let mut head_lo = 0.0;
                let mut head_hi = 0.0;
                for s in 0..card - 1 {
                    point[r][s] /= m;
                    head_sum += point[r][s];
                    head_lo += bounds[r][s].0;
                    head_hi += bounds[r][s].1;
                }
                point[r][card - 1] = (1.0 - head_sum).max(0.0);
                bounds[r][card - 1] = ((1.0 - head_hi).clamp(0.0, 1.0), (1.0 - head_lo).clamp(0.0, 1.0));
                let total: f64 = point[r].iter().sum();
                if total > 0.0 {
                    for ps in point[r].iter_mut() {
                        *ps /= total;
                    }
                }
            }
            recovered[v] = Some(RecoveredCpd {
                parents,
                point,
                bounds,
                provenance,
            });
        }
    }

    let variables: Vec<usize> = (0..n_vars).filter(|&v| reached[v]).collect();
    edges.sort_unstable();
    let cpds = variables.iter().map(|&v| recovered[v].take()).collect();
    Ok(ReconstructedModel {
        variables,
        edges,
        cpds,
        unidentifiable,
    })
}

impl ReconstructedModel {
    /// Builds an executable chance model from the point estimates over the
    /// recovered variables. Fails when any variable's table is missing.
    pub fn to_cbn(&self, public: &CidPublic) -> Result<crate::cbn::Cbn, ExtractError> {
        let local = |orig: usize| -> usize {
            self.variables
                .iter()
                .position(|&v| v == orig)
                .expect("edges reference recovered variables")
        };
        let decls: Vec<crate::cbn::VariableDecl> = self
            .variables
            .iter()
            .map(|&v| public.variables[v].clone())
            .collect();
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(p, c)| (local(p), local(c)))
            .collect();
        let dag = crate::cbn::Dag::new(decls, &edges).map_err(CidError::from)?;
        let mut cpds = Vec::with_capacity(self.variables.len());
        for (i, cpd) in self.cpds.iter().enumerate() {
            let Some(cpd) = cpd else {
                return Err(ExtractError::Unidentifiable {
                    variable: self.variables[i],
                    state: 0,
                    reason: "variable has no identified table".into(),
                });
            };
            cpds.push(crate::cbn::Cpd::new(
                i,
                cpd.parents.iter().map(|&p| local(p)).collect(),
                cpd.point.clone(),
            ));
        }
        crate::cbn::Cbn::new(dag, cpds)
            .map_err(CidError::from)
            .map_err(ExtractError::from)
    }
}

// ── Serialized reconstruction output ────────────────────────────────────────

/// Reconstruction result in the chance-model schema plus a `bounds` section
/// mirroring the CPD table shapes with `[lower, upper]` pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscoverJson {
    pub variables: Vec<crate::cbn::VariableDecl>,
    pub edges: Vec<[String; 2]>,
    pub cpds: Vec<crate::cbn::CpdJson>,
    pub bounds: Vec<BoundsJson>,
    pub unidentifiable: Vec<UnidentifiableJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundsJson {
    pub variable: String,
    pub parents: Vec<String>,
    pub table: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnidentifiableJson {
    pub variable: String,
    pub state: usize,
    pub context: Vec<(String, usize)>,
    pub reason: String,
}

impl ReconstructedModel {
    pub fn to_json(&self, public: &CidPublic) -> DiscoverJson {
        let name = |v: usize| public.variables[v].name.clone();
        let mut cpds = Vec::new();
        let mut bounds = Vec::new();
        for (i, cpd) in self.cpds.iter().enumerate() {
            let Some(cpd) = cpd else { continue };
            let variable = name(self.variables[i]);
            let parents: Vec<String> = cpd.parents.iter().map(|&p| name(p)).collect();
            cpds.push(crate::cbn::CpdJson {
                variable: variable.clone(),
                parents: parents.clone(),
                table: cpd.point.clone(),
            });
            bounds.push(BoundsJson {
                variable,
                parents,
                table: cpd
                    .bounds
                    .iter()
                    .map(|row| row.iter().map(|&(lo, hi)| [lo, hi]).collect())
                    .collect(),
            });
        }
        DiscoverJson {
            variables: self
                .variables
                .iter()
                .map(|&v| public.variables[v].clone())
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|&(p, c)| [name(p), name(c)])
                .collect(),
            cpds,
            bounds,
            unidentifiable: self
                .unidentifiable
                .iter()
                .map(|u| UnidentifiableJson {
                    variable: name(u.variable),
                    state: u.state,
                    context: u.context.iter().map(|&(v, s)| (name(v), s)).collect(),
                    reason: u.reason.clone(),
                })
                .collect(),
        }
    }
}

// ── Two-variable binary graph learner ───────────────────────────────────────

/// One interventional probability estimated by a learner block.
#[derive(Clone, Debug)]
pub struct BlockEstimate {
    /// Estimated `P(free variable = 0; do(block))`.
    pub p0: f64,
    /// Interval certificate from the gap bounds.
    pub interval: (f64, f64),
    /// Standard error of `p0` (0 for deterministic modes).
    pub se: f64,
    pub gap: GapEstimate,
}

/// Outcome of the four-block binary learner.
#[derive(Clone, Debug)]
pub struct BinaryLearnOutcome {
    /// Detected edges over the two chance variables: empty, `[(0, 1)]`
    /// (first causes second), or `[(1, 0)]`.
    pub edges: Vec<(usize, usize)>,
    /// Joint estimate `P(v0 = a, v1 = b)` at index `a·2 + b`.
    pub joint: [f64; 4],
    /// Block estimates in order: do(v1=0), do(v1=1), do(v0=0), do(v0=1).
    pub blocks: [BlockEstimate; 4],
    /// The predicted joint has a cell outside [0, 1] (callers typically
    /// fall back to a random guess).
    pub flagged: bool,
}

/// Learns the structure and joint of a two-variable binary chance model by
/// four switch-point estimations, one per hard intervention, comparing the
/// implied interventional probabilities:
///
/// * both `P(v1; do(v0))` blocks equal → check `P(v0; do(v1))`: equal means
///   no edge (product joint), unequal means v1 → v0;
/// * otherwise v0 → v1.
///
/// Equality is exact (within [`EPS_EDGE`]) for deterministic modes and a
/// [`Z_EDGE`]-standard-error test for Monte-Carlo.
pub fn graph_learner_binary(
    oracle: &PolicyOracle,
    public: &CidPublic,
    n: usize,
    mode: EstimationMode,
    stream_seed: u64,
) -> Result<BinaryLearnOutcome, ExtractError> {
    if public.variables.len() != 2
        || public.variables.iter().any(|v| v.cardinality != 2)
        || public.decision.cardinality != 2
        || !public.info_parents.is_empty()
    {
        return Err(ExtractError::NotBinaryPair {
            reason: "need two binary chance variables, a binary decision, and no information parents"
                .into(),
        });
    }
    let upos = |v: usize| -> Result<usize, ExtractError> {
        public
            .utility_parents
            .iter()
            .position(|&p| p == v)
            .ok_or_else(|| ExtractError::NotBinaryPair {
                reason: format!("variable {v} is not a utility parent"),
            })
    };
    let (u0, u1) = (upos(0)?, upos(1)?);
    // U(a, b, d) with a the state of variable 0 and b of variable 1.
    let util = |a: usize, b: usize, d: usize| -> f64 {
        let mut x = vec![0usize; 2];
        x[u0] = a;
        x[u1] = b;
        public.utility_value(&x, d)
    };

    // Blocks: intervene on one variable, read the other's distribution from
    // the measured gap Q = P(free=0)·Δ_at_free0 + P(free=1)·Δ_at_free1.
    let blocks_spec = [(1usize, 0usize), (1, 1), (0, 0), (0, 1)];
    let mut blocks = Vec::with_capacity(4);
    for (i, &(var, val)) in blocks_spec.iter().enumerate() {
        let sigma = InterventionSpec::Hard {
            variable: public.variables[var].name.clone(),
            value: val,
        };
        let est = estimate_qcrit(
            oracle,
            &sigma,
            public,
            n,
            derive_seed(stream_seed, &[i as u64]),
            mode,
        )?;
        let gap = gap_from_qcrit(&est, public, oracle.delta())?;
        let du = |free_state: usize| -> f64 {
            let (a, b) = if var == 1 {
                (free_state, val)
            } else {
                (val, free_state)
            };
            util(a, b, est.d2) - util(a, b, est.d3)
        };
        let (delta_at_0, delta_at_1) = (du(0), du(1));
        let den = delta_at_0 - delta_at_1;
        let p0 = (gap.q_value - delta_at_1) / den;
        let (lo, hi) = if den > 0.0 {
            ((gap.lower - delta_at_1) / den, (gap.upper - delta_at_1) / den)
        } else {
            ((gap.upper - delta_at_1) / den, (gap.lower - delta_at_1) / den)
        };
        let se = match mode {
            EstimationMode::MonteCarlo => {
                // Stratified sampling error: only boundary strata are
                // uncertain, each contributing at most 1/(2n). The gap's
                // sensitivity to the measured mass depends on whether the
                // indifference band was clipped at q = 1 (see
                // [`gap_from_qcrit`]); use the matching derivative.
                let q = est.q_crit_hat;
                let delta = oracle.delta();
                let se_q = ((est.mc_boundaries as f64).sqrt() / (2.0 * n as f64))
                    .max(1.0 / n as f64);
                let dq = if delta > 0.0
                    && q > gap.delta0 / (gap.delta0 + delta)
                    && 2.0 * q - 1.0 > 1e-12
                {
                    let r = 2.0 * q - 1.0;
                    2.0 * (gap.delta0 - delta) / (r * r)
                } else {
                    gap.delta0 / (q * q)
                };
                dq * se_q / den.abs()
            }
            _ => 0.0,
        };
        blocks.push(BlockEstimate {
            p0,
            interval: (lo, hi),
            se,
            gap,
        });
    }
    let blocks: [BlockEstimate; 4] = blocks.try_into().expect("exactly four blocks");

    let equal = |a: &BlockEstimate, b: &BlockEstimate| -> bool {
        (a.p0 - b.p0).abs() <= Z_EDGE * (a.se * a.se + b.se * b.se).sqrt() + EPS_EDGE
    };
    let strength = |a: &BlockEstimate, b: &BlockEstimate| -> f64 {
        (a.p0 - b.p0).abs() / (a.se * a.se + b.se * b.se).sqrt().max(EPS_EDGE / Z_EDGE)
    };
    // A block whose anchor gap does not exceed the oracle's slack certifies
    // nothing: the admissible band covers the anchor endpoint, so no
    // mixture weight makes d2 the unique answer and the switch point is
    // unidentifiable. Predictions built on such a block are not trusted.
    let void_premise = blocks.iter().any(|b| b.gap.xi >= 1.0);

    // blocks[0..2]: P(v0 = 0; do(v1 = ·));  blocks[2..4]: P(v1 = 0; do(v0 = ·)).
    // do(v0) moving v1's distribution witnesses v0 → v1 and vice versa; a
    // two-variable acyclic model admits at most one direction, so if both
    // pairs look different the stronger deviation wins.
    let diff_y = !equal(&blocks[2], &blocks[3]);
    let diff_x = !equal(&blocks[0], &blocks[1]);
    let edge_v0_v1 = match (diff_y, diff_x) {
        (true, false) => Some(true),
        (false, true) => Some(false),
        (false, false) => None,
        (true, true) => {
            Some(strength(&blocks[2], &blocks[3]) >= strength(&blocks[0], &blocks[1]))
        }
    };

    // The certificate says where the true value can be. If it admits a
    // probability, project the point estimate into [0, 1]; if it excludes
    // every probability outright, the prediction is rejected below.
    let consistent = |b: &BlockEstimate| -> bool {
        b.p0.is_finite() && b.interval.1 >= 0.0 && b.interval.0 <= 1.0
    };
    let cp = |b: &BlockEstimate| b.p0.clamp(0.0, 1.0);
    let px = |x: usize, p: f64| if x == 0 { p } else { 1.0 - p };
    let mut joint = [0.0f64; 4];
    let (edges, used): (Vec<(usize, usize)>, &[usize]) = match edge_v0_v1 {
        None => {
            // Fully invariant: independent; product of the do(·=0) marginals.
            for x in 0..2 {
                for y in 0..2 {
                    joint[x * 2 + y] = px(x, cp(&blocks[0])) * px(y, cp(&blocks[2]));
                }
            }
            (vec![], &[0, 2])
        }
        Some(false) => {
            for y in 0..2 {
                let x_at_y = cp(&blocks[y]);
                for x in 0..2 {
                    joint[x * 2 + y] = px(y, cp(&blocks[2])) * px(x, x_at_y);
                }
            }
            (vec![(1, 0)], &[0, 1, 2])
        }
        Some(true) => {
            for x in 0..2 {
                let y_at_x = cp(&blocks[2 + x]);
                for y in 0..2 {
                    joint[x * 2 + y] = px(x, cp(&blocks[0])) * px(y, y_at_x);
                }
            }
            (vec![(0, 1)], &[0, 2, 3])
        }
    };
    let flagged = void_premise
        || used.iter().any(|&i| !consistent(&blocks[i]))
        || joint.iter().any(|&c| !c.is_finite() || !(0.0..=1.0).contains(&c));
    Ok(BinaryLearnOutcome {
        edges,
        joint,
        blocks,
        flagged,
    })
}

// ── Tests ───────────────────────────────────────────────────────────────────

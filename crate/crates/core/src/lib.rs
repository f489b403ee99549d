//! regret2cause: recover causal models from the policies of regret-bounded
//! agents.
//!
//! The library has two halves. The forward half ([`cbn`], [`cid`]) builds
//! causal Bayesian networks over categorical variables, applies interventions
//! (hard, local, mixture, composite), and simulates decision-making agents —
//! exact optimizers or regret-bounded oracles — inside single-decision
//! influence diagrams. The inverse half ([`extraction`]) watches only how
//! such an agent's policy responds to chosen interventional shifts and
//! reconstructs the hidden causal model: the graph, the conditional
//! probability tables, and — when the agent is merely near-optimal —
//! certified interval bounds on every recovered parameter.
//!
//! [`envgen`] samples random solvable environments and [`harness`] runs the
//! error-versus-regret sweeps that quantify how reconstruction degrades as
//! the agent's regret bound grows.

pub mod cbn;
pub mod cid;
pub mod extraction;
pub mod envgen;
pub mod fixtures;
pub mod harness;

pub use cbn::{Cbn, CbnError, Cpd, Dag, IntervenedModel, InterventionSpec, MixtureComponent,
    ProbTable, VariableDecl};
pub use cid::{make_delta_oracle, policy_from_approximate_model, validate_assumptions,
    AssumptionReport, Cid, CidError, CidPublic, DecisionTables, Policy, PolicyOracle};
pub use extraction::{estimate_qcrit, find_anchor, gap_from_qcrit, graph_learner_binary, mix,
    recover_cpd_entry, reconstruct, Anchor, BinaryLearnOutcome, CpdTarget, EntryEstimate,
    EstimationMode, ExtractError, GapEstimate, QCritEstimate, ReconstructedModel};
pub use envgen::{env_stream_seed, generate_batch, random_cid, EnvGenError, GeneratorConfig,
    GraphFamily};
pub use harness::{emit_reports, log_log_slope, max_mc_error_at, run_exact_recovery,
    run_gap_sweep, run_sufficiency, run_sweep, EnvOutcome, ExactRecoveryRecord, GapRecord,
    GapSweepConfig, HarnessError, SufficiencyConfig, SufficiencyPoint, SweepConfig, SweepReport,
    SweepRow};

//! Small reference models used across unit tests, integration tests, and
//! benches. Every quantity about them asserted in the test suite is derived
//! by hand from the tables below.

use crate::cbn::{Cbn, Cpd, Dag, VariableDecl};
use crate::cid::Cid;

/// The two-variable chain X → Y with
/// `P(X=1) = 0.3`, `P(Y=1|X=0) = 0.2`, `P(Y=1|X=1) = 0.8`.
pub fn chain_xy() -> Cbn {
    let dag = Dag::new(
        vec![VariableDecl::new("X", 2), VariableDecl::new("Y", 2)],
        &[(0, 1)],
    )
    .expect("chain graph is valid");
    let cpds = vec![
        Cpd::new(0, vec![], vec![vec![0.7, 0.3]]),
        Cpd::new(1, vec![0], vec![vec![0.8, 0.2], vec![0.2, 0.8]]),
    ];
    Cbn::new(dag, cpds).expect("chain tables are valid")
}

/// The reference decision problem on [`chain_xy`]: a binary decision with no
/// information parents and utility over (Y, D) given by
/// `U(y=0,d=0) = 0.5`, `U(0,1) = 0`, `U(1,0) = 0.5`, `U(1,1) = 1`.
///
/// Worked values used throughout the suite: `E[U|d=0; Null] = 0.5`,
/// `E[U|d=1; Null] = 0.38`; under `do(X=1)` the optimum flips to `d=1`
/// (`0.8` vs `0.5`); the anchor `do(X=0, Y=0)` gives a decision gap
/// `Δ₀ = 0.5`, an interventional gap `Q = −0.3`, and a critical mixture
/// weight `q_crit = 1/(1 − Q/Δ₀) = 0.625`.
pub fn env_a() -> Cid {
    Cid::new(
        chain_xy(),
        VariableDecl::new("D", 2),
        vec![],
        vec![1],
        vec![0.5, 0.0, 0.5, 1.0],
    )
    .expect("reference decision problem is valid")
}

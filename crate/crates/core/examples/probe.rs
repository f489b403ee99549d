//! Development probe: dissects binary-learner failures at a given bound.

use regret2cause_core::*;

fn main() {
    let bound: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.0);
    let verbose = std::env::args().nth(2).is_some();
    let n_envs = 200;
    let n_samples = 10_000;
    let mut empty_out = 0;
    let mut reversed = 0;
    let mut flagged_right = 0;
    let mut flagged_wrong = 0;
    let mut errored = 0;
    let mut ok = 0;
    for i in 0..n_envs {
        let mut config = GeneratorConfig::binary_pair(0);
        config.margin = 0.01;
        let cid = random_cid(&config, env_stream_seed(900 + i, 0)).unwrap();
        let public = cid.public();
        let true_edge = cid.chance().dag().edges().next().unwrap();
        let tables = cid
            .decision_tables(&cbn::InterventionSpec::Null)
            .unwrap();
        let gap = (tables.joint_utility[0][1] - tables.joint_utility[0][0]).abs();
        let delta = bound * gap;
        let oracle = make_delta_oracle(cid.clone(), delta, 1234 + i).unwrap();
        let out = graph_learner_binary(
            &oracle,
            &public,
            n_samples,
            EstimationMode::MonteCarlo,
            5678 + i,
        );
        match out {
            Err(e) => {
                errored += 1;
                println!("env {i}: ERROR {e}");
            }
            Ok(out) => {
                let verdict = if out.flagged {
                    if out.edges == vec![true_edge] {
                        flagged_right += 1;
                        "FLAGGED(right-edge)"
                    } else {
                        flagged_wrong += 1;
                        "FLAGGED(wrong-edge)"
                    }
                } else if out.edges == vec![true_edge] {
                    ok += 1;
                    continue;
                } else if out.edges.is_empty() {
                    empty_out += 1;
                    "EMPTY"
                } else {
                    reversed += 1;
                    "REVERSED"
                };
                if !verbose {
                    continue;
                }
                println!(
                    "env {i}: {verdict} true {:?} got {:?} δ {:.4}",
                    true_edge, out.edges, delta
                );
                for (b, blk) in out.blocks.iter().enumerate() {
                    let g = &blk.gap;
                    println!(
                        "   block {b}: p0 {:+.4} se {:.4} iv [{:+.3},{:+.3}] Q̃ {:+.4} ξ {:.3} Δ0 {:.4}",
                        blk.p0, blk.se, blk.interval.0, blk.interval.1, g.q_value, g.xi, g.delta0
                    );
                }
                let child = true_edge.1;
                let cpd = cid.chance().cpd(child);
                println!(
                    "   margin diff {:.4}",
                    (cpd.table[0][0] - cpd.table[1][0]).abs()
                );
            }
        }
    }
    println!(
        "\nbound {bound}: ok {ok} empty {empty_out} reversed {reversed} \
         flagged-right {flagged_right} flagged-wrong {flagged_wrong} errored {errored} / {n_envs}"
    );
}

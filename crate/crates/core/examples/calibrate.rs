//! Development probe: runs scaled-down versions of the acceptance
//! measurements and prints the numbers the thresholds are tuned against.

use regret2cause_core::*;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();

    // Error-versus-regret sweep shape.
    let bounds: Vec<f64> = (0..=10).map(|i| i as f64 * 0.05).collect();
    let mut config = SweepConfig::new(bounds, 1000, 7, EstimationMode::MonteCarlo);
    config.n_samples = 10_000;
    let t = Instant::now();
    let report = run_sweep(&config).unwrap();
    println!("sweep 11x1000 mc 1e4: {:?}", t.elapsed());
    println!(
        "{:>6} {:>8} {:>10} {:>10} {:>8} {:>8} {:>8}",
        "bound", "g_err", "p_mean", "p_worst", "base_g", "base_p", "fallback"
    );
    for row in &report.rows {
        println!(
            "{:>6.2} {:>8.3} {:>10.5} {:>10.5} {:>8.3} {:>8.4} {:>8.3}",
            row.regret_bound_normalized,
            row.g_error_rate,
            row.p_mean_abs_error,
            row.p_worst_abs_error,
            row.baseline_g_error_rate,
            row.baseline_p_mean_abs_error,
            row.fallback_rate
        );
    }

    // Gap certificates: containment and δ-vs-δ/2 error ratios.
    let gap_config = GapSweepConfig {
        n_envs: 170,
        deltas: vec![0.005, 0.01, 0.02, 0.025, 0.05],
        n_samples: 10_000,
        margin: 0.12,
        seed: 7,
    };
    let t = Instant::now();
    let records = run_gap_sweep(&gap_config).unwrap();
    println!(
        "\ngap sweep 170x5: {:?}, {} records",
        t.elapsed(),
        records.len()
    );
    let contained = records.iter().filter(|r| r.contained).count();
    println!("containment: {}/{}", contained, records.len());
    for &(d, half) in &[(0.01, 0.005), (0.02, 0.01), (0.05, 0.025)] {
        let e_full = harness_max(&records, d);
        let e_half = harness_max(&records, half);
        println!(
            "max mc err at {:>5}: {:.5}  at {:>5}: {:.5}  ratio {:.3}",
            d,
            e_full,
            half,
            e_half,
            e_full / e_half
        );
    }

    // Sufficiency slope.
    let suff = SufficiencyConfig {
        n_envs: 200,
        epsilons: vec![f64::EPSILON, 1e-3, 1e-2, 1e-1],
        seed: 7,
    };
    let t = Instant::now();
    let points = run_sufficiency(&suff).unwrap();
    println!("\nsufficiency 200 envs: {:?}", t.elapsed());
    for p in &points {
        println!(
            "eps {:>9.1e}: family {:.6e}  fixed {:.6e}",
            p.epsilon, p.median_family_regret, p.median_fixed_regret
        );
    }
    let slope_pts: Vec<(f64, f64)> = points
        .iter()
        .skip(1)
        .map(|p| (p.epsilon, p.median_family_regret))
        .collect();
    println!("family slope: {:.4}", log_log_slope(&slope_pts));

    // Exact recovery.
    let t = Instant::now();
    let recs = run_exact_recovery(200, 7).unwrap();
    let good_graph = recs.iter().filter(|r| r.graph_correct).count();
    let tight = recs.iter().filter(|r| r.max_joint_error <= 1e-6).count();
    println!(
        "\nexact recovery 200: {:?}, graph {}/200, tight {}/200",
        t.elapsed(),
        good_graph,
        tight
    );
    for r in recs.iter().filter(|r| !r.graph_correct || r.max_joint_error > 1e-6) {
        println!("  env {}: err {:.2e} {:?}", r.env_index, r.max_joint_error, r.failure);
    }

    println!("\ntotal: {:?}", t0.elapsed());
}

fn harness_max(records: &[GapRecord], delta: f64) -> f64 {
    records
        .iter()
        .filter(|r| r.delta == delta)
        .map(|r| r.mc_abs_error)
        .fold(0.0, f64::max)
}

//! Scratch calibration runs (not part of the deliverable test surface).

use localsa::apps::*;
use localsa::engine::*;
use localsa::harness::*;
use localsa::markov::MixingOracle;
use localsa::operators::*;
use localsa::schedule::*;
use localsa::theory::*;
use nalgebra::DVector;
use rayon::prelude::*;
use std::sync::Arc;
use std::time::Instant;

fn quad_params() -> QuadraticParams {
    QuadraticParams {
        n_states: 4,
        mu_target: 260.0,
        l_target: 286.0,
        heterogeneity: 0.5,
        curvature_noise: 0.1,
        offset_base: 0.0,
        offset_noise: 0.1,
        smoothing: 0.9,
    }
}

fn avg(series: &[Vec<f64>]) -> Vec<f64> {
    let n = series[0].len();
    let mut out = vec![0.0; n];
    for s in series {
        for (o, v) in out.iter_mut().zip(s) {
            *o += v;
        }
    }
    for o in out.iter_mut() {
        *o /= series.len() as f64;
    }
    out
}

fn run_many(fed: &Federation, cfg: &AlgorithmConfig, trials: usize, seed: u64) -> Vec<Vec<f64>> {
    let star = fed.theta_star();
    (0..trials)
        .into_par_iter()
        .map(|t| {
            run_local_sa(fed, cfg, derive_seed(seed, &[0x7a, t as u64]))
                .unwrap()
                .mse_series(star)
        })
        .collect()
}

fn main() {
    let t0 = Instant::now();
    let n_agents = 5;
    let dim = 4;
    let h = 4;
    let fed = make_quadratic_federation_with(n_agents, dim, &quad_params(), 424242).unwrap();
    let c = fed.constants();
    println!(
        "[quad] B={:.4} L={:.2} mu={:.2} |theta*|={:.6}",
        c.b, c.l, c.mu, c.theta_star_norm
    );
    let oracle = Arc::new(MixingOracle::new(fed.chains()).unwrap());
    let alpha = max_constant_step(c, n_agents, h, |a| oracle.tau(a)).unwrap();
    let tau = oracle.tau(alpha).unwrap();
    println!(
        "[quad] alpha_max={alpha:.3e} tau={tau} r*4000={:.1}",
        4000.0 * h as f64 * c.mu * alpha / n_agents as f64
    );

    // Constant-step plateau at alpha and alpha/2.
    let rounds = 5000;
    let trials = 60;
    for (label, a) in [("alpha", alpha), ("alpha/2", alpha / 2.0)] {
        let cfg = AlgorithmConfig::new(n_agents, h, dim, StepSchedule::Constant { alpha: a }, rounds);
        let series = run_many(&fed, &cfg, trials, 1);
        let mean = avg(&series);
        let start = (rounds as f64 * 0.8) as usize;
        let plateau: f64 =
            mean[start..=rounds].iter().sum::<f64>() / (rounds - start + 1) as f64;
        println!(
            "[quad const {label}] plateau={plateau:.3e} mse@{}={:.3e} mse@{rounds}={:.3e}",
            start, mean[start], mean[rounds]
        );
    }

    // Harmonic schedule.
    let alpha0 = 2.0 * n_agents as f64 / (h as f64 * c.mu);
    let sched = StepSchedule::Harmonic { alpha0 };
    let k_star = find_k_star(&sched, h, c, n_agents, h, |a| oracle.tau(a), None, 10_000_000).unwrap();
    println!("[quad tv] alpha0={alpha0:.3e} K*={k_star}");
    let base = k_star.max(50);
    let rounds_tv = 50 * base;
    let cfg = AlgorithmConfig::new(n_agents, h, dim, sched, rounds_tv);
    let series = run_many(&fed, &cfg, trials, 2);
    let mean = avg(&series);
    let fit = fit_loglog_slope(&mean, base, rounds_tv).unwrap();
    println!(
        "[quad tv] rounds={rounds_tv} slope={:.3} r2={:.3} mse@base={:.3e} mse@end={:.3e}",
        fit.slope, fit.r_squared, mean[base], mean[rounds_tv]
    );

    // Bound domination + lemma monitors on one seed.
    let grid = geometric_constant_grid();
    let mut cgeo = 0.0f64;
    for chain in fed.chains() {
        cgeo = cgeo.max(chain.estimate_geometric_constant(&grid).unwrap());
    }
    let params = BoundParams::new(c, n_agents, h, cgeo, BoundParams::oracle_tau(oracle.clone()));
    let bound_at_end = bound_constant_step(rounds, alpha, &params, 1e-6).unwrap();
    println!("[quad] C={cgeo:.3} bound_const@5000={bound_at_end:.3e}");

    let mut mon_cfg =
        AlgorithmConfig::new(n_agents, h, dim, StepSchedule::Constant { alpha }, 400);
    mon_cfg.record_locals = true;
    for seed in 0..50 {
        let traj = run_local_sa(&fed, &mon_cfg, derive_seed(3, &[seed])).unwrap();
        let r1 = check_iterate_bounds(&traj, &params, 0).unwrap();
        let r2 = check_consensus_drift(&traj, &params, 0).unwrap();
        if !(r1.passed && r2.passed) {
            println!(
                "[quad monitors seed {seed}] VIOLATIONS iterate={} drift={} worst={:?}/{:?}",
                r1.violations, r2.violations, r1.worst_margin, r2.worst_margin
            );
        }
        if seed == 0 {
            println!(
                "[quad monitors] iterate worst margin {:?}, drift worst margin {:?}",
                r1.worst_margin, r2.worst_margin
            );
        }
    }
    println!("[quad monitors] 50 constant-step seeds done");

    let mut tv_cfg = AlgorithmConfig::new(n_agents, h, dim, sched, k_star + 150);
    tv_cfg.record_locals = true;
    for seed in 0..50 {
        let traj = run_local_sa(&fed, &tv_cfg, derive_seed(4, &[seed])).unwrap();
        let r1 = check_iterate_bounds(&traj, &params, k_star).unwrap();
        let r2 = check_consensus_drift(&traj, &params, k_star).unwrap();
        if !(r1.passed && r2.passed) {
            println!(
                "[quad tv monitors seed {seed}] VIOLATIONS iterate={} drift={}",
                r1.violations, r2.violations
            );
        }
        if seed == 0 {
            println!(
                "[quad tv monitors] iterate worst {:?}, drift worst {:?}",
                r1.worst_margin, r2.worst_margin
            );
        }
    }
    println!("[quad tv monitors] 50 seeds done  t={:?}", t0.elapsed());

    // ---- TD(0) ----
    let t1 = Instant::now();
    for features_kind in ["trig", "random"] {
        let mut envs = Vec::new();
        for i in 0..3u64 {
            let mdp = make_random_mdp_with(5, 2, 0.9, 1.0, 0.05, 20.0, 1000 + i).unwrap();
            let policy = Policy::uniform(5, 2);
            let feats = if features_kind == "trig" {
                FeatureMap::trig_basis(5, 3).unwrap()
            } else {
                FeatureMap::random_orthonormal(5, 3, &[], 2000 + i).unwrap()
            };
            envs.push((mdp, policy, feats));
        }
        let fed = td_federation(&envs, ProbeOptions::default()).unwrap();
        let c = fed.constants();
        let star = td_fixed_point(&fed).unwrap();
        let alpha0 = 2.0 * 3.0 / (4.0 * c.mu);
        println!(
            "[td {features_kind}] B={:.3} L={:.3} mu={:.4} |theta*|={:.3} alpha0={:.2}",
            c.b, c.l, c.mu, star.norm(), alpha0
        );
        let cfg = AlgorithmConfig::new(3, 4, 3, StepSchedule::Harmonic { alpha0 }, 20_000);
        let trials = 20;
        let finals: Vec<DVector<f64>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                run_local_sa(&fed, &cfg, derive_seed(5, &[t as u64]))
                    .unwrap()
                    .final_iterate()
                    .clone()
            })
            .collect();
        let mut mean = DVector::<f64>::zeros(3);
        for f in &finals {
            mean += f;
        }
        mean /= trials as f64;
        let rel = (mean - &star).norm() / star.norm();
        println!(
            "[td {features_kind}] rel err of trial-avg after 2e4 rounds: {rel:.3e}  t={:?}",
            t1.elapsed()
        );
    }

    // ---- Q-learning ----
    let analytic = Mdp {
        transition: vec![vec![vec![1.0]], vec![vec![1.0]]],
        reward: vec![vec![1.0, 0.0]],
        gamma: 0.5,
        r_max: 1.0,
    };
    let envs = vec![
        (
            analytic.clone(),
            Policy::uniform(1, 2),
            FeatureMap::tabular(2),
        ),
        (
            analytic.clone(),
            Policy::uniform(1, 2),
            FeatureMap::tabular(2),
        ),
    ];
    let fed = q_federation(&envs, ProbeOptions::default()).unwrap();
    let c = fed.constants();
    let root = q_fixed_point_oracle(&fed).unwrap();
    let alpha0 = 2.0 * 2.0 / (2.0 * c.mu);
    println!(
        "[q analytic] mu_hat={:.3} L_hat={:.3} B={:.3} root=({:.4},{:.4}) alpha0={alpha0:.2}",
        c.mu, c.l, c.b, root[0], root[1]
    );
    let cfg = AlgorithmConfig::new(2, 2, 2, StepSchedule::Harmonic { alpha0 }, 4000);
    let trials = 20;
    let finals: Vec<DVector<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            run_local_sa(&fed, &cfg, derive_seed(6, &[t as u64]))
                .unwrap()
                .final_iterate()
                .clone()
        })
        .collect();
    let mut mean = DVector::<f64>::zeros(2);
    for f in &finals {
        mean += f;
    }
    mean /= trials as f64;
    println!(
        "[q analytic] trial-avg final=({:.5},{:.5}) dist={:.3e}",
        mean[0],
        mean[1],
        (&mean - &root).norm()
    );

    // Random tabular instance passing the gate.
    for seed in 0..20u64 {
        let mdp = make_random_mdp(2, 2, 0.5, 1.0, 0.1, 3000 + seed).unwrap();
        let envs = vec![
            (mdp.clone(), Policy::uniform(2, 2), FeatureMap::tabular(4)),
            (mdp.clone(), Policy::uniform(2, 2), FeatureMap::tabular(4)),
        ];
        match q_federation(&envs, ProbeOptions::default()) {
            Ok(fed) => {
                let c = fed.constants();
                let root = q_fixed_point_oracle(&fed).unwrap();
                let alpha0 = 2.0 * 2.0 / (2.0 * c.mu);
                let cfg =
                    AlgorithmConfig::new(2, 2, 4, StepSchedule::Harmonic { alpha0 }, 8000);
                let finals: Vec<DVector<f64>> = (0..trials)
                    .into_par_iter()
                    .map(|t| {
                        run_local_sa(&fed, &cfg, derive_seed(7, &[t as u64]))
                            .unwrap()
                            .final_iterate()
                            .clone()
                    })
                    .collect();
                let mut mean = DVector::<f64>::zeros(4);
                for f in &finals {
                    mean += f;
                }
                mean /= trials as f64;
                println!(
                    "[q random seed {seed}] mu_hat={:.3} alpha0={:.2} dist={:.3e}",
                    c.mu,
                    alpha0,
                    (&mean - &root).norm()
                );
                break;
            }
            Err(e) => println!("[q random seed {seed}] gate rejected: {e}"),
        }
    }
    println!("[total] {:?}", t0.elapsed());
}

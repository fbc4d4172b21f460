//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any gating criterion fails.
//!
//! The MNIST reproduction note only runs when `DMJC_MNIST_FEATURES` and
//! `DMJC_MNIST_LABELS` point at a flattened 784-column feature file and its
//! labels; it never affects the exit code.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use common::{fd_max_rel_err, normal_matrix, random_stochastic, row_sums_within, two_blobs};
use dmjc::assignment::{
    dec_gradients, dec_train, init_view_centroids, kl_loss, soft_assignment, target_distribution,
    DecHyper,
};
use dmjc::autoencoder::{pretrain, Mlp, MlpSpec, PretrainConfig};
use dmjc::dmjc_s::{
    dmjc_s_gradients, dmjc_s_objective, dmjc_s_train, importance_softmax,
    multiview_soft_assignment, DmjcSState,
};
use dmjc::dmjc_t::{
    dmjc_t_network_gradients, dmjc_t_train, objective_t, solve_w_apg, ApgConfig, DmjcTState,
};
use dmjc::kmeans::KmeansConfig;
use dmjc::metrics::{ari, clustering_accuracy, hungarian, nmi};
use dmjc::numerics::{Matrix, OptimizerKind, RngState};
use dmjc::pipeline::{
    make_synthetic, run_on_views, ConfusionPlan, Method, RunConfig, SyntheticConfig, ViewConfig,
};
use dmjc::train::{EpochSnapshot, TrainConfig, ViewBranch};

fn refs(m: &[Matrix]) -> Vec<&Matrix> {
    m.iter().collect()
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within_budget(v: Verdict, elapsed: Duration, budget: Duration) -> Verdict {
    let ok = elapsed < budget;
    verdict(
        v.pass && ok,
        format!(
            "{} [{:.1}s of {}s budget]",
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        ),
    )
}

const ALPHAS: [f64; 3] = [0.5, 1.0, 3.0];
const INSTANCES: usize = 100;
const GRAD_TOL: f64 = 1e-4;

fn gradient_correctness() -> Verdict {
    let mut worst = [0.0f64; 3];
    for (ai, &alpha) in ALPHAS.iter().enumerate() {
        let mut rng = RngState::new(1000 + ai as u64);
        for _ in 0..INSTANCES {
            let n = 2 + rng.below(6);
            let k = 2 + rng.below(3);
            let d = 1 + rng.below(4);
            let v = 2 + rng.below(2);

            // single-view KL with P frozen
            let z = normal_matrix(&mut rng, n, d, 1.0);
            let mu = normal_matrix(&mut rng, k, d, 1.0);
            let p = random_stochastic(&mut rng, n, k);
            let (gz, gm) = dec_gradients(&z, &mu, &p, alpha).unwrap();
            let loss = |z: &Matrix, mu: &Matrix| {
                kl_loss(&p, &soft_assignment(z, mu, alpha).unwrap()).unwrap()
            };
            worst[0] = worst[0]
                .max(fd_max_rel_err(&z, &gz, |x| loss(x, &mu)))
                .max(fd_max_rel_err(&mu, &gm, |x| loss(&z, x)));

            // implicit fusion: every z^(v), μ^(v) and W
            let zs: Vec<Matrix> = (0..v).map(|_| normal_matrix(&mut rng, n, d, 1.0)).collect();
            let mus: Vec<Matrix> = (0..v).map(|_| normal_matrix(&mut rng, k, d, 1.0)).collect();
            let w = normal_matrix(&mut rng, k, v, 1.0);
            let p = random_stochastic(&mut rng, n, k);
            let g = dmjc_s_gradients(&zs, &refs(&mus), &w, &p, alpha).unwrap();
            let f = |zs: &[Matrix], mus: &[Matrix], w: &Matrix| {
                dmjc_s_objective(zs, &refs(mus), w, &p, alpha).unwrap()
            };
            let mut e = fd_max_rel_err(&w, &g.grad_w, |x| f(&zs, &mus, x));
            for view in 0..v {
                e = e.max(fd_max_rel_err(&zs[view], &g.grad_z[view], |x| {
                    let mut zz = zs.clone();
                    zz[view] = x.clone();
                    f(&zz, &mus, &w)
                }));
                e = e.max(fd_max_rel_err(&mus[view], &g.grad_mu[view], |x| {
                    let mut mm = mus.clone();
                    mm[view] = x.clone();
                    f(&zs, &mm, &w)
                }));
            }
            worst[1] = worst[1].max(e);

            // explicit fusion: one view's network gradients against the fused target
            let p_views: Vec<Matrix> = (0..v).map(|_| random_stochastic(&mut rng, n, k)).collect();
            let wv = vec![1.0 / v as f64; v];
            let fused = dmjc::dmjc_t::fused_target(&p_views, &wv).unwrap();
            let view = rng.below(v);
            let (gz, gm) = dmjc_t_network_gradients(&zs[view], &mus[view], &fused, alpha).unwrap();
            let total = |z: &Matrix, mu: &Matrix| {
                let q_views: Vec<Matrix> = (0..v)
                    .map(|u| {
                        if u == view {
                            soft_assignment(z, mu, alpha).unwrap()
                        } else {
                            soft_assignment(&zs[u], &mus[u], alpha).unwrap()
                        }
                    })
                    .collect();
                q_views
                    .iter()
                    .map(|q| kl_loss(&fused, q).unwrap())
                    .sum::<f64>()
            };
            worst[2] = worst[2]
                .max(fd_max_rel_err(&zs[view], &gz, |x| total(x, &mus[view])))
                .max(fd_max_rel_err(&mus[view], &gm, |x| total(&zs[view], x)));
        }
    }
    verdict(
        worst.iter().all(|&e| e < GRAD_TOL),
        format!(
            "max rel err single-view {:.2e}, implicit {:.2e}, explicit {:.2e} over {} instances x 3 alphas (tol {GRAD_TOL:e})",
            worst[0], worst[1], worst[2], INSTANCES
        ),
    )
}

fn grid_min(p_views: &[Matrix], q_views: &[Matrix], lambda: f64) -> f64 {
    const STEPS: usize = 1000;
    (0..=STEPS)
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            for j in 0..=STEPS - i {
                let w = [
                    i as f64 / STEPS as f64,
                    j as f64 / STEPS as f64,
                    (STEPS - i - j) as f64 / STEPS as f64,
                ];
                best = best.min(objective_t(p_views, q_views, &w, lambda).unwrap());
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

fn weight_subproblem_oracle() -> Verdict {
    let mut rng = RngState::new(2024);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut monotone = true;
    for inst in 0..20 {
        let q_views: Vec<Matrix> = (0..3).map(|_| random_stochastic(&mut rng, 8, 3)).collect();
        let p_views: Vec<Matrix> = (0..3)
            .map(|_| target_distribution(&random_stochastic(&mut rng, 8, 3), 2.0).unwrap())
            .collect();
        let lambda = [0.0, 0.05, 0.5, 2.0, 10.0][inst % 5];
        let out = solve_w_apg(&p_views, &q_views, lambda, &ApgConfig::default()).unwrap();
        let attained = objective_t(&p_views, &q_views, out.weights.as_slice(), lambda).unwrap();
        worst_gap = worst_gap.max(attained - grid_min(&p_views, &q_views, lambda));
        monotone &= out.objective_trace.windows(2).all(|w| w[1] <= w[0]);
    }
    verdict(
        worst_gap < 1e-4 && monotone,
        format!("worst (apg - grid) objective gap {worst_gap:.2e} (tol 1e-4), accepted iterates monotone: {monotone}"),
    )
}

fn single_view_setup(seed: u64) -> (ViewBranch, Matrix, Vec<usize>) {
    let mut rng = RngState::new(seed);
    let mut cfg = SyntheticConfig::new(1, 3, 40);
    cfg.dim = 5;
    let data = make_synthetic(&cfg, &ConfusionPlan::none(1), &mut rng).unwrap();
    let x = data.views[0].clone();
    let encoder = Mlp::init(&MlpSpec::encoder(vec![5, 6, 2]).unwrap(), &mut rng);
    let z = encoder.forward(&x).unwrap();
    let init = init_view_centroids(&[z], 3, &KmeansConfig::default(), &mut rng).unwrap();
    let branch = ViewBranch::new(encoder, init.centroids[0].clone()).unwrap();
    (branch, x, data.labels)
}

fn reductions() -> Verdict {
    let mut rng = RngState::new(5);
    let mut q_gap = 0.0f64;
    for _ in 0..100 {
        let n = 1 + rng.below(10);
        let k = 1 + rng.below(5);
        let d = 1 + rng.below(4);
        let z = normal_matrix(&mut rng, n, d, 2.0);
        let mu = normal_matrix(&mut rng, k, d, 2.0);
        let pi = importance_softmax(&Matrix::zeros(k, 1));
        let fused = multiview_soft_assignment(std::slice::from_ref(&z), &[&mu], &pi, 1.0).unwrap();
        q_gap = q_gap.max(
            fused
                .sub(&soft_assignment(&z, &mu, 1.0).unwrap())
                .unwrap()
                .max_abs(),
        );
    }

    let mut s_identical = true;
    let mut t_identical = true;
    let lambda = 2e4;
    let mut runs = 0;
    for seed in 0..3u64 {
        for (optimizer, tol) in [
            (OptimizerKind::adagrad(), 0.0),
            (OptimizerKind::adam().with_lr(0.01), 0.001),
        ] {
            let (branch, x, labels) = single_view_setup(seed);
            let config = TrainConfig {
                hyper: DecHyper {
                    max_epochs: 25,
                    label_change_tol: tol,
                    ..DecHyper::default()
                },
                optimizer,
                batch_size: 32,
            };
            let views = std::slice::from_ref(&x);
            let dec = dec_train(
                branch.clone(),
                &x,
                &config,
                &mut RngState::new(77),
                Some(&labels),
                |_| {},
            )
            .unwrap();
            let s = dmjc_s_train(
                DmjcSState::new(vec![branch.clone()]).unwrap(),
                views,
                &config,
                &mut RngState::new(77),
                Some(&labels),
                |_| {},
            )
            .unwrap();
            let t = dmjc_t_train(
                DmjcTState::new(vec![branch], lambda).unwrap(),
                views,
                &config,
                &ApgConfig::default(),
                &mut RngState::new(77),
                Some(&labels),
                |_| {},
            )
            .unwrap();
            let same_records = |other: &dmjc::train::TrainHistory, offset: f64| {
                other.records.len() == dec.history.records.len()
                    && other
                        .records
                        .iter()
                        .zip(&dec.history.records)
                        .all(|(a, b)| {
                            a.loss == b.loss + offset
                                && a.acc_fused == b.acc_fused
                                && a.acc_views == b.acc_views
                                && a.label_change == b.label_change
                        })
            };
            s_identical &= same_records(&s.history, 0.0)
                && s.state.branches[0] == dec.branch
                && s.labels == dec.labels
                && s.history.converged == dec.history.converged;
            t_identical &= same_records(&t.history, lambda)
                && t.state.branches[0] == dec.branch
                && t.labels == dec.labels
                && t.state.weights.as_slice() == [1.0];
            runs += 1;
        }
    }
    verdict(
        q_gap <= 1e-12 && s_identical && t_identical,
        format!(
            "single-view fused Q max gap {q_gap:.1e}; {runs} trajectories: implicit identical {s_identical}, explicit identical with +lambda offset {t_identical}"
        ),
    )
}

fn pretrained_branches(views: &[Matrix], k: usize, seed: u64) -> Vec<ViewBranch> {
    let root = RngState::new(seed);
    let cfg = PretrainConfig {
        epochs: 20,
        batch_size: 64,
        ..PretrainConfig::default()
    };
    let encoders: Vec<Mlp> = views
        .iter()
        .map(|x| {
            let spec = MlpSpec::encoder(vec![x.cols(), 8, 2]).unwrap();
            pretrain(&spec, x, &cfg, &mut root.fork(1))
                .unwrap()
                .params
                .encoder
        })
        .collect();
    let z: Vec<Matrix> = encoders
        .iter()
        .zip(views)
        .map(|(e, x)| e.forward(x).unwrap())
        .collect();
    let init = init_view_centroids(&z, k, &KmeansConfig::default(), &mut root.fork(2)).unwrap();
    encoders
        .into_iter()
        .zip(init.centroids)
        .map(|(e, c)| ViewBranch::new(e, c).unwrap())
        .collect()
}

fn distribution_invariants() -> Verdict {
    let mut rng = RngState::new(11);
    let data = make_synthetic(
        &SyntheticConfig::new(3, 4, 50),
        &ConfusionPlan::chain(3, 4),
        &mut rng,
    )
    .unwrap();
    let config = TrainConfig {
        hyper: DecHyper {
            max_epochs: 50,
            label_change_tol: 0.0,
            ..DecHyper::default()
        },
        batch_size: 64,
        ..TrainConfig::default()
    };
    let mut epochs = 0;
    let mut ok = true;
    let mut check = |snap: &EpochSnapshot<'_>| {
        epochs += 1;
        ok &= snap
            .soft
            .iter()
            .chain(snap.targets)
            .all(|m| row_sums_within(m, 1e-9));
        ok &= row_sums_within(snap.simplex_rows, 1e-9)
            && snap.simplex_rows.data().iter().all(|&x| x > 0.0);
    };
    let branches = pretrained_branches(&data.views, 4, 3);
    let s = dmjc_s_train(
        DmjcSState::new(branches.clone()).unwrap(),
        &data.views,
        &config,
        &mut RngState::new(1),
        Some(&data.labels),
        &mut check,
    )
    .unwrap();
    let t = dmjc_t_train(
        DmjcTState::new(branches.clone(), 1.0).unwrap(),
        &data.views,
        &config,
        &ApgConfig::default(),
        &mut RngState::new(1),
        Some(&data.labels),
        &mut check,
    )
    .unwrap();
    let d = dec_train(
        branches[0].clone(),
        &data.views[0],
        &config,
        &mut RngState::new(1),
        None,
        &mut check,
    )
    .unwrap();
    let final_w = t.state.weights.as_slice();
    let w_ok =
        final_w.iter().all(|&w| w > 0.0) && (final_w.iter().sum::<f64>() - 1.0).abs() <= 1e-10;
    let pi_ok = row_sums_within(&s.state.importance(), 1e-9);
    let full = s.history.epochs_run() == 50
        && t.history.epochs_run() == 50
        && d.history.epochs_run() == 50;
    verdict(
        ok && w_ok && pi_ok && full,
        format!("{epochs} epoch snapshots checked (Q, P rows within 1e-9; pi and w positive on the simplex); 50 epochs each: {full}"),
    )
}

fn benefit_config(method: Method, view: usize, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::from_toml_str("method = \"dec\"\nclusters = 4\nviews = []").unwrap();
    cfg.method = method;
    cfg.view = view;
    cfg.seed = seed;
    cfg.views = (0..3)
        .map(|i| ViewConfig {
            feature_file: format!("view_{i}.csv").into(),
            encoder_dims: vec![8, 2],
            normalization: Default::default(),
        })
        .collect();
    cfg
}

fn multi_view_benefit() -> Verdict {
    const SEEDS: u64 = 10;
    let mut j_view = [0.0f64; 3];
    let mut s_mean = 0.0;
    let mut t_mean = 0.0;
    for seed in 0..SEEDS {
        let data = make_synthetic(
            &SyntheticConfig::new(3, 4, 150),
            &ConfusionPlan::chain(3, 4),
            &mut RngState::new(500 + seed),
        )
        .unwrap();
        let acc = |method, view| {
            run_on_views(
                &benefit_config(method, view, seed),
                &data.views,
                Some(&data.labels),
            )
            .unwrap()
            .summary
            .scores
            .unwrap()
            .acc
        };
        for (v, slot) in j_view.iter_mut().enumerate() {
            *slot += acc(Method::Dec, v) / SEEDS as f64;
        }
        s_mean += acc(Method::DmjcS, 0) / SEEDS as f64;
        t_mean += acc(Method::DmjcT, 0) / SEEDS as f64;
    }
    let best = j_view.iter().copied().fold(f64::MIN, f64::max);
    verdict(
        s_mean - best >= 0.05 && t_mean - best >= 0.05,
        format!(
            "mean ACC over {SEEDS} seeds: single-view {:.4}/{:.4}/{:.4}, implicit {s_mean:.4}, explicit {t_mean:.4}; margins {:.4} and {:.4} (need >= 0.05)",
            j_view[0],
            j_view[1],
            j_view[2],
            s_mean - best,
            t_mean - best
        ),
    )
}

fn separable_sanity() -> Verdict {
    let mut perfect = 0;
    let mut max_epochs_used = 0;
    for seed in 0..10u64 {
        let mut rng = RngState::new(seed);
        let (x, labels) = two_blobs(&mut rng, 100);
        let encoder = Mlp::identity(2);
        let init = init_view_centroids(
            std::slice::from_ref(&x),
            2,
            &KmeansConfig::default(),
            &mut rng,
        )
        .unwrap();
        let branch = ViewBranch::new(encoder, init.centroids[0].clone()).unwrap();
        let config = TrainConfig {
            hyper: DecHyper {
                max_epochs: 50,
                ..DecHyper::default()
            },
            ..TrainConfig::default()
        };
        let out = dec_train(branch, &x, &config, &mut rng, Some(&labels), |_| {}).unwrap();
        max_epochs_used = max_epochs_used.max(out.history.epochs_run());
        if clustering_accuracy(&out.labels, &labels).unwrap() == 1.0 {
            perfect += 1;
        }
    }
    verdict(
        perfect == 10 && max_epochs_used <= 50,
        format!("ACC = 1.0 on {perfect}/10 seeds, at most {max_epochs_used} epochs"),
    )
}

fn brute_force_accuracy(pred: &[usize], truth: &[usize], kp: usize, kt: usize) -> f64 {
    let size = kp.max(kt);
    let mut perm: Vec<usize> = (0..size).collect();
    let mut best = 0;
    let mut search = |perm: &[usize]| {
        let hits = pred
            .iter()
            .zip(truth)
            .filter(|(&p, &t)| perm[p] == t)
            .count();
        best = best.max(hits);
    };
    permute(&mut perm, 0, &mut search);
    best as f64 / pred.len() as f64
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

fn metrics_golden() -> Verdict {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let truth = [0, 0, 1, 1];
    let cross = [0, 1, 0, 1];
    let relabel = [7, 7, 3, 3];
    let mut golden = vec![
        close(clustering_accuracy(&truth, &truth).unwrap(), 1.0),
        close(clustering_accuracy(&relabel, &truth).unwrap(), 1.0),
        close(clustering_accuracy(&cross, &truth).unwrap(), 0.5),
        close(nmi(&truth, &truth).unwrap(), 1.0),
        close(nmi(&[0, 0, 0, 0], &truth).unwrap(), 0.0),
        close(nmi(&cross, &truth).unwrap(), 0.0),
        close(ari(&truth, &truth).unwrap(), 1.0),
        close(ari(&cross, &truth).unwrap(), -0.5),
    ];
    // 2 x 2 table [[2, 1], [0, 3]]: MI and entropies by hand
    let p = [0, 0, 0, 1, 1, 1];
    let t = [0, 0, 1, 1, 1, 1];
    let mi = (2.0 / 6.0) * (2.0f64 * 6.0 / (3.0 * 2.0)).ln()
        + (1.0 / 6.0) * (6.0f64 / (3.0 * 4.0)).ln()
        + (3.0 / 6.0) * (3.0f64 * 6.0 / (3.0 * 4.0)).ln();
    let h = |a: f64, b: f64| -(a * a.ln() + b * b.ln());
    golden.push(close(
        nmi(&p, &t).unwrap(),
        mi / (h(0.5, 0.5) * h(1.0 / 3.0, 2.0 / 3.0)).sqrt(),
    ));
    // pairs: index 1 + 3 = 4, rows 3 + 3 = 6, cols 1 + 6 = 7, total 15
    let expected = 6.0 * 7.0 / 15.0;
    golden.push(close(
        ari(&p, &t).unwrap(),
        (4.0 - expected) / (0.5 * 13.0 - expected),
    ));
    golden.push(close(clustering_accuracy(&p, &t).unwrap(), 5.0 / 6.0));
    let golden_ok = golden.iter().all(|&g| g);

    let mut rng = RngState::new(99);
    let mut matches = 0;
    let mut instances = 0;
    for _ in 0..400 {
        let kp = 1 + rng.below(6);
        let kt = 1 + rng.below(6);
        let n = 1 + rng.below(30);
        let pred: Vec<usize> = (0..n).map(|_| rng.below(kp)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.below(kt)).collect();
        let dense = |l: &[usize]| {
            let mut ids: Vec<usize> = l.to_vec();
            ids.sort_unstable();
            ids.dedup();
            (
                l.iter()
                    .map(|x| ids.binary_search(x).unwrap())
                    .collect::<Vec<_>>(),
                ids.len(),
            )
        };
        let (dp, np) = dense(&pred);
        let (dt, nt) = dense(&truth);
        instances += 1;
        if clustering_accuracy(&pred, &truth).unwrap() == brute_force_accuracy(&dp, &dt, np, nt) {
            matches += 1;
        }
    }
    for _ in 0..200 {
        let size = 1 + rng.below(6);
        let cost: Vec<Vec<i64>> = (0..size)
            .map(|_| (0..size).map(|_| rng.below(50) as i64 - 25).collect())
            .collect();
        let got: i64 = hungarian(&cost)
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[i][j])
            .sum();
        let mut best = i64::MAX;
        permute(&mut (0..size).collect(), 0, &mut |perm| {
            best = best.min(perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum());
        });
        instances += 1;
        if got == best {
            matches += 1;
        }
    }
    verdict(
        golden_ok && matches == instances,
        format!(
            "{}/{} golden values within 1e-12; matching equals brute force on {matches}/{instances} instances",
            golden.iter().filter(|&&g| g).count(),
            golden.len()
        ),
    )
}

fn determinism() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_dmjc");
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let status = Command::new(bin)
        .args([
            "synth",
            "--views",
            "3",
            "--clusters",
            "4",
            "--n",
            "60",
            "--seed",
            "1",
            "--out",
        ])
        .arg(root)
        .status()
        .unwrap();
    if !status.success() {
        return verdict(false, "synth failed");
    }
    let config = root.join("config.toml");
    let run_once = || {
        let status = Command::new(bin)
            .args(["run", "--seed", "7", "--config"])
            .arg(&config)
            .output()
            .unwrap()
            .status;
        let read = |name: &str| std::fs::read(root.join("output").join(name)).unwrap_or_default();
        (status.success(), read("metrics.json"), read("labels.csv"))
    };
    let (ok1, m1, l1) = run_once();
    let (ok2, m2, l2) = run_once();
    verdict(
        ok1 && ok2 && !m1.is_empty() && m1 == m2 && l1 == l2,
        format!(
            "two runs with --seed 7: metrics.json identical {} ({} bytes), labels.csv identical {} ({} bytes)",
            m1 == m2,
            m1.len(),
            l1 == l2,
            l1.len()
        ),
    )
}

fn mnist_note() -> Option<Verdict> {
    let features = std::env::var("DMJC_MNIST_FEATURES").ok()?;
    let labels = std::env::var("DMJC_MNIST_LABELS").ok()?;
    let x = dmjc::pipeline::load_feature_matrix(Path::new(&features)).ok()?;
    let truth = dmjc::pipeline::load_labels(Path::new(&labels)).ok()?;
    let mut cfg = RunConfig::from_toml_str("method = \"dec\"\nclusters = 10\nviews = []").unwrap();
    cfg.views = vec![ViewConfig {
        feature_file: features.into(),
        encoder_dims: vec![500, 500, 2000, 10],
        normalization: dmjc::pipeline::Normalization::UnitInterval,
    }];
    cfg.pretrain.epochs = 50;
    let started = Instant::now();
    let acc = run_on_views(&cfg, &[x], Some(&truth))
        .ok()?
        .summary
        .scores?
        .acc;
    let minutes = started.elapsed().as_secs_f64() / 60.0;
    Some(verdict(
        acc >= 0.80 && minutes <= 60.0,
        format!(
            "single-view MNIST ACC {acc:.4} in {minutes:.1} min (target >= 0.80 within 60 min)"
        ),
    ))
}

fn main() {
    let criteria: Vec<(&str, u64, fn() -> Verdict)> = vec![
        ("1 gradient correctness", 60, gradient_correctness),
        (
            "2 weight subproblem vs grid search",
            120,
            weight_subproblem_oracle,
        ),
        ("3 single-view reductions", 600, reductions),
        ("4 distribution invariants", 600, distribution_invariants),
        ("5 multi-view benefit", 600, multi_view_benefit),
        ("6 separable sanity", 600, separable_sanity),
        ("7 metrics golden values", 600, metrics_golden),
        ("8 CLI determinism", 600, determinism),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let started = Instant::now();
        let v = within_budget(run(), started.elapsed(), Duration::from_secs(budget));
        if !v.pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    match mnist_note() {
        Some(v) => println!(
            "[{}] criterion 9 MNIST reproduction note (non-gating): {}",
            if v.pass { "PASS" } else { "MISS" },
            v.detail
        ),
        None => println!("[SKIP] criterion 9 MNIST reproduction note (non-gating): set DMJC_MNIST_FEATURES and DMJC_MNIST_LABELS"),
    }
    if failed > 0 {
        println!("{failed} gating criteria failed");
        std::process::exit(1);
    }
}

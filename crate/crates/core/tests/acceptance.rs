//! Acceptance suite. Prints one PASS/FAIL line per item and exits non-zero
//! if any item fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use curenewton::data::{encode_idx_images, encode_idx_labels, gen_blobs, parse_idx_images, parse_idx_labels, BlobSpec};
use curenewton::eval::{accuracy, jsd, mia_from_losses, MetricsReport};
use curenewton::harness::{
    run_batch, run_sequential, DatasetConfig, ErasureConfig, ExperimentConfig, ExperimentOutcome, MethodConfig,
    ModelConfig,
};
use curenewton::linalg::{damped_apply, pinv_apply, sym_eigendecompose, SymmetricMatrix};
use curenewton::model::{
    split, split_fraction, train, Activation, Dataset, ModelKind, ModelSpec, ParamVector, Targets, TrainConfig,
};
use curenewton::unlearn::{
    cubic_surrogate, cure_newton_unlearn, damped_newton_unlearn, estimate_hessian_lipschitz, newton_unlearn,
    pinv_newton_unlearn, scure_newton_unlearn, trust_region_solve, CureNewtonConfig, FirstOrderConfig, Problem,
    RandomLabelsConfig, SCureNewtonConfig, TrustRegionCase, UnlearnResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Default)]
struct Checks {
    failed: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn expect(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.failed.push(msg.into());
        }
    }

    fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }

    fn budget(&mut self, start: Instant, limit: Duration) {
        let t = start.elapsed();
        self.expect(t < limit, format!("took {:.1}s, budget {}s", t.as_secs_f64(), limit.as_secs()));
        self.note(format!("{:.2}s", t.as_secs_f64()));
    }
}

/// `(label, alpha, ‖w − w*‖)` for every CureNewton run in items 4 to 6.
type AlphaRecord = (String, f64, f64);

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let d = b.len();
    for col in 0..d {
        let piv = (col..d).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..d {
            let f = a[r][col] / a[col][col];
            for c in col..d {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; d];
    for r in (0..d).rev() {
        let s: f64 = (r + 1..d).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for q in &cols {
                let p = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= p * qi;
                }
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    cols
}

fn from_spectrum(q: &[Vec<f64>], lambda: &[f64]) -> SymmetricMatrix {
    let d = lambda.len();
    SymmetricMatrix::from_fn(d, |i, j| (0..d).map(|k| lambda[k] * q[k][i] * q[k][j]).sum()).unwrap()
}

fn item1() -> Checks {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let d = rng.random_range(5..=30);
        let rank = rng.random_range(1..d);
        let q = random_orthogonal(d, &mut rng);
        let mags: Vec<f64> = (0..d).map(|k| if k < rank { rng.random_range(0.5..5.0) } else { 0.0 }).collect();
        let signed: Vec<f64> = mags.iter().map(|&m| if rng.random::<bool>() { m } else { -m }).collect();
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let gamma = 10f64.powf(rng.random_range(-3.0..0.0));
        let coeff: Vec<f64> = q.iter().map(|qk| dot(qk, &g)).collect();

        let expect_pinv = (0..rank).map(|k| (coeff[k] / signed[k]).powi(2)).sum::<f64>().sqrt();
        let expect_damped = (0..d).map(|k| (coeff[k] / (mags[k] + gamma)).powi(2)).sum::<f64>().sqrt();

        let h = from_spectrum(&q, &signed);
        let got_pinv = norm(&pinv_apply(&sym_eigendecompose(&h).unwrap(), &g, 1e-8).unwrap());
        let got_damped = norm(&damped_apply(&from_spectrum(&q, &mags), &g, gamma).unwrap());
        let e1 = (got_pinv - expect_pinv).abs() / expect_pinv;
        let e2 = (got_damped - expect_damped).abs() / expect_damped;
        worst = worst.max(e1).max(e2);
        c.expect(e1 <= 1e-10, format!("trial {trial} (d {d}, rank {rank}): pinv rel err {e1:e}"));
        c.expect(e2 <= 1e-10, format!("trial {trial} (d {d}, rank {rank}): damped rel err {e2:e}"));
    }
    c.note(format!("worst rel err {worst:.1e}"));
    c.budget(start, Duration::from_secs(5));
    c
}

// Coarse-to-fine lattice search for the minimum of the cubic model over
// ‖s‖∞ ≤ 5, keeping the best few points at each level down to spacing 1e-3.
fn lattice_min(h: &[Vec<f64>], g: &[f64], l: f64) -> (Vec<f64>, f64) {
    let d = g.len();
    let f = |s: &[f64]| {
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += s[i] * h[i][j] * s[j];
            }
        }
        let n = norm(s);
        dot(g, s) + 0.5 * q + l / 3.0 * n * n * n
    };
    let scan = |center: &[f64], half: f64, step: f64, keep: usize| {
        let per = (2.0 * half / step).round() as usize + 1;
        let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut idx = vec![0usize; d];
        loop {
            let s: Vec<f64> = (0..d).map(|k| (center[k] - half + idx[k] as f64 * step).clamp(-5.0, 5.0)).collect();
            let v = f(&s);
            if best.len() < keep || v < best[best.len() - 1].0 {
                best.push((v, s));
                best.sort_by(|a, b| a.0.total_cmp(&b.0));
                best.truncate(keep);
            }
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] < per {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        best
    };
    let mut step = if d <= 2 { 0.05 } else { 0.25 };
    let mut cands = scan(&vec![0.0; d], 5.0, step, 6);
    while step > 1e-3 {
        let next = step / 5.0;
        let mut all = Vec::new();
        for (_, c) in &cands {
            all.extend(scan(c, 2.0 * step, next, 3));
        }
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        all.dedup_by(|a, b| a.1.iter().zip(&b.1).all(|(x, y)| (x - y).abs() < 1e-12));
        all.truncate(6);
        cands = all;
        step = next;
    }
    let (v, s) = cands.swap_remove(0);
    (s, v)
}

fn item2() -> Checks {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let eps = 1e-6;
    let (mut boundary, mut indefinite) = (0, 0);
    for trial in 0..50 {
        let d = 1 + trial % 4;
        let mut rows = vec![vec![0.0; d]; d];
        if trial % 2 == 0 {
            let b: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            for i in 0..d {
                for j in 0..d {
                    rows[i][j] = (0..d).map(|k| b[i * d + k] * b[j * d + k]).sum::<f64>() / d as f64;
                }
                rows[i][i] += 0.05;
            }
        } else {
            for i in 0..d {
                for j in 0..=i {
                    let v = rng.random_range(-1.0..1.0);
                    rows[i][j] = v;
                    rows[j][i] = v;
                }
            }
        }
        let g: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let l = rng.random_range(1.0..3.0);
        let h = SymmetricMatrix::from_row_major(d, rows.concat()).unwrap();
        if sym_eigendecompose(&h).unwrap().smallest().0 < 0.0 {
            indefinite += 1;
        }
        let sol = match trust_region_solve(&h, &g, l, eps, 100) {
            Ok(s) => s,
            Err(e) => {
                c.expect(false, format!("trial {trial}: {e}"));
                continue;
            }
        };
        let (s, v) = lattice_min(&rows, &g, l);
        let ds = dist(&sol.delta, &s);
        c.expect(ds <= 1e-2, format!("trial {trial}: step off lattice minimum by {ds:e}"));
        c.expect(
            (sol.primal_value - v).abs() <= 1e-2,
            format!("trial {trial}: objective {} vs lattice {v}", sol.primal_value),
        );
        if sol.case == TrustRegionCase::Boundary {
            boundary += 1;
            let n = norm(&sol.delta);
            let a = sol.alpha;
            c.expect((n - a).abs() <= eps, format!("trial {trial}: |‖s‖ − α| = {:e}", (n - a).abs()));
            let shifted: Vec<Vec<f64>> = (0..d)
                .map(|i| (0..d).map(|j| rows[i][j] + if i == j { a * l } else { 0.0 }).collect())
                .collect();
            let x = gauss_solve(shifted, g.clone());
            let v_l = -0.5 * dot(&x, &g) - l / 6.0 * a.powi(3);
            let dv = 0.5 * l * (n * n - a * a);
            let gap = 2.0 / (3.0 * l) * (a + 2.0 * n) / (a + n).powi(2) * dv * dv;
            c.expect(gap <= 10.0 * eps * (1.0 + v_l.abs()), format!("trial {trial}: duality gap {gap:e}"));
        }
    }
    c.note(format!("{boundary} boundary, {indefinite} indefinite of 50"));
    c.budget(start, Duration::from_secs(60));
    c
}

fn item3() -> Checks {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, p) = (500, 6);
    let truth: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    let x: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| dot(&x[i * p..(i + 1) * p], &truth) + 0.7 + 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let data = Dataset::regression("ridge", p, x, y).unwrap();
    let spec = ModelSpec::linear_regression(p, 0.1);

    let closed_form = |subset: &[usize]| {
        let d = p + 1;
        let m = subset.len() as f64;
        let Targets::Real(t) = data.targets() else { unreachable!() };
        let mut a = vec![vec![0.0; d]; d];
        let mut b = vec![0.0; d];
        for &i in subset {
            let mut row = data.row(i).to_vec();
            row.push(1.0);
            for r in 0..d {
                b[r] += row[r] * t[i] / m;
                for k in 0..d {
                    a[r][k] += row[r] * row[k] / m;
                }
            }
        }
        for (r, row) in a.iter_mut().enumerate() {
            row[r] += spec.l2_coeff;
        }
        gauss_solve(a, b)
    };

    let w_star = spec.params(closed_form(&data.all_indices())).unwrap();
    let s = split_fraction(&data, 0.2, 3).unwrap();
    let exact = closed_form(s.retained());
    let problem = Problem::new(&spec, &data, &s, &w_star).unwrap();
    let newton = newton_unlearn(&problem).unwrap();
    let cure = cure_newton_unlearn(&problem, &CureNewtonConfig {
        lipschitz_l: 1e-10,
        ..CureNewtonConfig::default()
    })
    .unwrap();
    for r in [&newton, &cure] {
        let e = dist(r.w_unlearned.as_slice(), &exact);
        c.expect(e <= 1e-6, format!("{} endpoint off by {e:e}", r.method));
        c.note(format!("{} {e:.1e}", r.method));
    }
    c.budget(start, Duration::from_secs(5));
    c
}

fn polish(spec: &ModelSpec, data: &Dataset, mut w: ParamVector, steps: usize) -> ParamVector {
    let none = split(data, &[]).unwrap();
    for _ in 0..steps {
        w = newton_unlearn(&Problem::new(spec, data, &none, &w).unwrap()).unwrap().w_unlearned;
    }
    w
}

fn cure_alpha(label: &str, r: &UnlearnResult, alphas: &mut Vec<AlphaRecord>) {
    if let Some(sol) = &r.trust_region {
        alphas.push((label.to_string(), sol.alpha, r.update_norm));
    }
}

fn item4(alphas: &mut Vec<AlphaRecord>) -> Checks {
    let start = Instant::now();
    let mut c = Checks::default();
    let data = gen_blobs(&BlobSpec {
        classes: 3,
        per_class: 200,
        dims: 2,
        spread: 1.0,
        seed: 4,
    })
    .unwrap();
    let spec = ModelSpec::logistic_regression(2, 3, 0.1);
    let cfg = TrainConfig {
        epochs: 15,
        weight_decay: 0.0,
        seed: 4,
        ..TrainConfig::default()
    };
    let w0 = train(&spec, &data, &data.all_indices(), &cfg).unwrap().params;
    let w_star = polish(&spec, &data, w0, 20);
    let s = split_fraction(&data, 0.1, 4).unwrap();
    let problem = Problem::new(&spec, &data, &s, &w_star).unwrap();
    let g0 = spec.grad(&w_star, &data, s.retained()).unwrap().norm();
    let ratio = |w: &ParamVector| spec.grad(w, &data, s.retained()).unwrap().norm() / g0;

    let cure = cure_newton_unlearn(&problem, &CureNewtonConfig {
        lipschitz_l: 1.0,
        ..CureNewtonConfig::default()
    })
    .unwrap();
    cure_alpha("logistic", &cure, alphas);
    let r1 = ratio(&cure.w_unlearned);
    c.expect(r1 <= 0.1, format!("cure-newton gradient ratio {r1:.4}"));

    let l_hat = estimate_hessian_lipschitz(&spec, &data, s.retained(), &w_star, 1.0, 20, 4).unwrap();
    let scure = scure_newton_unlearn(&problem, &SCureNewtonConfig {
        lipschitz_m: l_hat,
        sigma: 1e-5,
        eta: 0.5,
        k_outer: 20,
        k_inner: 5,
        grad_batch: s.n_retained(),
        hess_batch: 128,
        seed: 4,
    })
    .unwrap();
    let r2 = ratio(&scure.w_unlearned);
    c.expect(r2 <= 0.2, format!("scure-newton gradient ratio {r2:.4}"));
    c.note(format!("ratios cure {r1:.3}, scure {r2:.4}, L̂ {l_hat:.1}"));
    c.budget(start, Duration::from_secs(30));
    c
}

fn overlapping_classes(n: usize, p: usize, classes: usize, sep: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..p).map(|_| sep * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % classes;
        x.extend(centers[k].iter().map(|c| c + rng.sample::<f64, _>(StandardNormal)));
        y.push(k);
    }
    Dataset::classification("overlap", p, x, y, classes).unwrap()
}

fn item5(alphas: &mut Vec<AlphaRecord>) -> Checks {
    let start = Instant::now();
    let mut c = Checks::default();
    let (p, seed) = (5, 2);
    let data = overlapping_classes(200, p, 3, 0.3, seed);
    let spec = ModelSpec::mlp(p, 64, 3, 0.0);
    let cfg = TrainConfig {
        epochs: 1000,
        batch_size: 50,
        weight_decay: 0.0,
        lr_decay_every_steps: 1000,
        seed,
        ..TrainConfig::default()
    };
    let w_star = train(&spec, &data, &data.all_indices(), &cfg).unwrap().params;
    let s = split_fraction(&data, 0.1, seed).unwrap();
    let reference = train(&spec, &data, s.retained(), &cfg).unwrap().params;
    let problem = Problem::new(&spec, &data, &s, &w_star).unwrap();

    let h = problem.retained_hessian().unwrap();
    let rank = sym_eigendecompose(&h).unwrap().numerical_rank(1e-8);
    c.expect(rank < h.dim(), format!("Hessian has full rank {rank}"));

    let acc = |w: &ParamVector| accuracy(&spec, w, &data, s.retained()).unwrap();
    let acc_ref = acc(&reference);
    let cure = cure_newton_unlearn(&problem, &CureNewtonConfig::default()).unwrap();
    cure_alpha("mlp-64", &cure, alphas);
    let acc_cure = acc(&cure.w_unlearned);
    c.expect(
        (acc_cure - acc_ref).abs() <= 0.05,
        format!("cure-newton retained acc {acc_cure:.3} vs retraining {acc_ref:.3}"),
    );
    let mut line = format!("rank {rank}/{}, cure norm {:.3}", h.dim(), cure.update_norm);
    let others = [
        pinv_newton_unlearn(&problem, 1e-8).map_err(|e| ("pinv-newton", e)),
        damped_newton_unlearn(&problem, 1e-3).map_err(|e| ("damped-newton", e)),
    ];
    for r in others {
        match r {
            Ok(r) => {
                let a = acc(&r.w_unlearned);
                c.expect(
                    r.update_norm >= 10.0 * cure.update_norm,
                    format!("{} norm {:.3} is under 10x cure-newton", r.method, r.update_norm),
                );
                c.expect(
                    acc_ref - a >= 0.30,
                    format!("{} retained acc {a:.3} is within 30 points of retraining {acc_ref:.3}", r.method),
                );
                line += &format!(", {} norm {:.2} acc {a:.3}", r.method, r.update_norm);
            }
            Err((m, e)) => c.expect(false, format!("{m} failed: {e}")),
        }
    }
    c.note(line);
    c.budget(start, Duration::from_secs(300));
    c
}

fn class_config() -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetConfig::Blobs {
            classes: 3,
            per_class: 200,
            dims: 2,
            spread: 3.0,
            seed: 2,
            test_fraction: 0.2,
        },
        model: ModelConfig {
            kind: ModelKind::Mlp,
            hidden_units: 4,
            l2_coeff: 0.3,
            activation: Activation::Tanh,
        },
        train: TrainConfig {
            epochs: 30,
            weight_decay: 0.0,
            ..TrainConfig::default()
        },
        erasure: ErasureConfig::Class { class: 0 },
        methods: vec![
            MethodConfig::Original,
            MethodConfig::Retraining,
            MethodConfig::CureNewton(CureNewtonConfig {
                lipschitz_l: 0.5,
                ..CureNewtonConfig::default()
            }),
            MethodConfig::ScureNewton(SCureNewtonConfig::default()),
        ],
        seeds: vec![5, 1, 2],
        ..ExperimentConfig::default()
    }
}

fn item6(alphas: &mut Vec<AlphaRecord>) -> (Checks, Duration) {
    let start = Instant::now();
    let mut c = Checks::default();
    let out = run_batch(&class_config()).unwrap();
    for f in out.failures() {
        c.expect(false, format!("{} seed {} failed: {}", f.method, f.seed, f.error));
    }
    let agg = |m: &str| out.aggregates.iter().find(|a| a.method == m).cloned();
    let (Some(orig), Some(reference)) = (agg("original"), agg("retraining")) else {
        c.expect(false, "missing original or retraining row");
        return (c, start.elapsed());
    };
    c.expect(
        reference.acc_erased.mean == 0.0,
        format!("retraining acc_erased {}", reference.acc_erased.mean),
    );
    let mut line = String::new();
    for m in ["cure-newton", "scure-newton"] {
        let Some(a) = agg(m) else {
            c.expect(false, format!("{m} has no results"));
            continue;
        };
        c.expect(a.acc_erased.mean <= 0.10, format!("{m} acc_erased {:.3}", a.acc_erased.mean));
        c.expect(
            (a.acc_retained.mean - reference.acc_retained.mean).abs() <= 0.05,
            format!(
                "{m} acc_retained {:.3} vs retraining {:.3}",
                a.acc_retained.mean, reference.acc_retained.mean
            ),
        );
        c.expect(
            a.js_div.mean < orig.js_div.mean,
            format!("{m} js_div {:.4} vs original {:.4}", a.js_div.mean, orig.js_div.mean),
        );
        line += &format!(
            "{m} erased {:.3} retained {:.3} js {:.4}; ",
            a.acc_erased.mean, a.acc_retained.mean, a.js_div.mean
        );
    }
    for r in out.reports().filter(|r| r.method == "cure-newton") {
        if let Some(a) = r.alpha {
            alphas.push((format!("blobs seed {}", r.seed), a, r.update_norm));
        }
    }
    line += &format!(
        "retraining retained {:.3}, original js {:.4}",
        reference.acc_retained.mean, orig.js_div.mean
    );
    c.note(line);
    let took = start.elapsed();
    c.budget(start, Duration::from_secs(120));
    (c, took)
}

fn item7(alphas: &[AlphaRecord], budget_left: Duration) -> Checks {
    let start = Instant::now();
    let mut c = Checks::default();
    c.expect(!alphas.is_empty(), "no CureNewton runs recorded");
    for (label, a, n) in alphas {
        c.expect((a - n).abs() <= 0.1 * a.max(1e-12), format!("{label}: alpha {a:e} vs update norm {n:e}"));
    }
    let mut cfg = class_config();
    cfg.methods = vec![MethodConfig::CureNewton(CureNewtonConfig {
        lipschitz_l: 0.5,
        ..CureNewtonConfig::default()
    })];
    cfg.rounds = 5;
    let out = run_sequential(&cfg).unwrap();
    let mut per_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for log in &out.rounds {
        for (_, a) in log.alphas() {
            per_seed.entry(log.seed).or_default().push(a);
        }
    }
    c.expect(per_seed.len() == cfg.seeds.len(), "sequential run lost a seed");
    let mut line = format!("{} runs consistent; final/prior-mean alpha:", alphas.len());
    for (seed, a) in &per_seed {
        if a.len() != 5 {
            c.expect(false, format!("seed {seed}: {} rounds", a.len()));
            continue;
        }
        let prior = a[..4].iter().sum::<f64>() / 4.0;
        c.expect(a[4] > prior, format!("seed {seed}: final alpha {:.4} vs prior mean {prior:.4}", a[4]));
        line += &format!(" {:.3}/{prior:.3}", a[4]);
    }
    c.note(line);
    c.budget(start, budget_left);
    c
}

fn item8() -> Checks {
    let start = Instant::now();
    let mut c = Checks::default();
    let data = gen_blobs(&BlobSpec {
        classes: 3,
        per_class: 200,
        dims: 2,
        spread: 3.0,
        seed: 8,
    })
    .unwrap();
    let spec = ModelSpec::mlp(2, 4, 3, 0.3);
    let cfg = TrainConfig {
        epochs: 30,
        weight_decay: 0.0,
        seed: 8,
        ..TrainConfig::default()
    };
    let w_star = train(&spec, &data, &data.all_indices(), &cfg).unwrap().params;
    let s = split_fraction(&data, 0.1, 8).unwrap();
    let retained = s.retained();
    let l_hat = estimate_hessian_lipschitz(&spec, &data, retained, &w_star, 1.0, 20, 8).unwrap();
    let loss0 = spec.loss(&w_star, &data, retained).unwrap();
    let g = spec.grad(&w_star, &data, retained).unwrap().into_vec();
    let h = spec.hessian(&w_star, &data, retained).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = w_star.len();
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let r = rng.random::<f64>().powf(1.0 / d as f64) / norm(&dir);
        let delta: Vec<f64> = dir.iter().map(|x| x * r).collect();
        let w: Vec<f64> = w_star.as_slice().iter().zip(&delta).map(|(a, b)| a + b).collect();
        let upper = cubic_surrogate(loss0, &g, &h, l_hat, &delta).unwrap();
        let actual = spec.loss(&w_star.with_values(w).unwrap(), &data, retained).unwrap();
        worst = worst.min(upper - actual);
    }
    c.expect(worst >= -1e-8, format!("surrogate below loss by {:e}", -worst));
    c.note(format!("L̂ {l_hat:.2}, smallest margin {worst:.3e}"));
    c.budget(start, Duration::from_secs(30));
    c
}

fn item9() -> Checks {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dist_of = |rng: &mut ChaCha8Rng, k: usize| {
        let raw: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    for trial in 0..200 {
        let k = 2 + trial % 9;
        let p = dist_of(&mut rng, k);
        let q = dist_of(&mut rng, k);
        let (a, b) = (jsd(&p, &q), jsd(&q, &p));
        c.expect((a - b).abs() <= 1e-12, format!("jsd asymmetric by {:e}", (a - b).abs()));
        c.expect(a >= -1e-12 && a <= std::f64::consts::LN_2 + 1e-12, format!("jsd {a} out of [0, ln 2]"));
        c.expect(jsd(&p, &p).abs() <= 1e-12, "jsd(p, p) is not zero");
        let m: Vec<f64> = p.iter().zip(&q).map(|(x, y)| 0.5 * (x + y)).collect();
        let kl = |x: &[f64]| x.iter().zip(&m).filter(|(v, _)| **v > 0.0).map(|(v, w)| v * (v / w).ln()).sum::<f64>();
        let naive = 0.5 * kl(&p) + 0.5 * kl(&q);
        c.expect((a - naive).abs() <= 1e-12, format!("jsd {a} vs naive {naive}"));
    }

    let losses: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
    let same = mia_from_losses(&losses, &losses, 5, 9).unwrap();
    c.expect((same - 0.5).abs() <= 0.05, format!("mia on identical losses {same:.3}"));
    let members: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..0.1)).collect();
    let outsiders: Vec<f64> = (0..500).map(|_| rng.random_range(1.0..2.0)).collect();
    let apart = mia_from_losses(&members, &outsiders, 5, 9).unwrap();
    c.expect(apart >= 0.95, format!("mia on separated losses {apart:.3}"));

    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let img_bytes = std::fs::read(fixtures.join("tiny-images.idx3")).unwrap();
    let lbl_bytes = std::fs::read(fixtures.join("tiny-labels.idx1")).unwrap();
    let images = parse_idx_images(&img_bytes).unwrap();
    let labels = parse_idx_labels(&lbl_bytes).unwrap();
    c.expect(encode_idx_images(&images) == img_bytes, "IDX images do not round-trip");
    c.expect(encode_idx_labels(&labels) == lbl_bytes, "IDX labels do not round-trip");
    c.expect(images.count == labels.len(), "IDX image and label counts differ");
    c.note(format!("mia {same:.3} / {apart:.3}, {} IDX images", images.count));
    c.budget(start, Duration::from_secs(10));
    c
}

fn without_time(out: &ExperimentOutcome) -> BTreeMap<(String, u64, usize), MetricsReport> {
    out.reports()
        .map(|r| {
            let mut r = r.clone();
            r.wall_time_seconds = 0.0;
            ((r.method.clone(), r.seed, r.round), r)
        })
        .collect()
}

fn failures(out: &ExperimentOutcome) -> BTreeMap<(String, u64, usize), String> {
    out.failures().map(|f| ((f.method.clone(), f.seed, f.round), f.error.clone())).collect()
}

fn item10() -> Checks {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut cfg = class_config();
    cfg.erasure = ErasureConfig::Fraction { fraction: 0.1 };
    cfg.methods = vec![
        MethodConfig::Original,
        MethodConfig::Retraining,
        MethodConfig::Newton,
        MethodConfig::PinvNewton { rank_tol: 1e-8 },
        MethodConfig::DampedNewton { gamma: 1e-3 },
        MethodConfig::CureNewton(CureNewtonConfig::default()),
        MethodConfig::ScureNewton(SCureNewtonConfig::default()),
        MethodConfig::Gd(FirstOrderConfig::default()),
        MethodConfig::Ga(FirstOrderConfig::default()),
        MethodConfig::RandomLabels(RandomLabelsConfig::default()),
    ];
    let a = run_batch(&cfg).unwrap();
    let b = run_batch(&cfg).unwrap();
    let mut perm = cfg.clone();
    perm.methods.reverse();
    perm.methods.swap(2, 7);
    let p = run_batch(&perm).unwrap();

    c.expect(without_time(&a) == without_time(&b), "re-run changed a metric");
    c.expect(failures(&a) == failures(&b), "re-run changed the failures");
    c.expect(without_time(&a) == without_time(&p), "permuted methods changed a metric");
    c.expect(failures(&a) == failures(&p), "permuted methods changed the failures");
    let bits = |out: &ExperimentOutcome| {
        out.aggregates
            .iter()
            .map(|g| (g.method.clone(), (g.acc_test.mean.to_bits(), g.js_div.mean.to_bits())))
            .collect::<BTreeMap<_, _>>()
    };
    c.expect(bits(&a) == bits(&b) && bits(&a) == bits(&p), "aggregates differ");
    c.note(format!("{} reports, {} failures per run", a.reports().count(), a.failures().count()));
    c.budget(start, Duration::from_secs(600));
    c
}

fn report(id: usize, name: &str, c: &Checks) -> bool {
    let ok = c.failed.is_empty();
    let status = if ok { "PASS" } else { "FAIL" };
    let detail = if ok { c.notes.join("; ") } else { format!("{} ({})", c.failed.join("; "), c.notes.join("; ")) };
    println!("acceptance {id:>2} {status} {name}: {detail}");
    ok
}

fn main() -> ExitCode {
    let mut alphas = Vec::new();
    let mut all = true;
    all &= report(1, "spectral pinv and damped norms", &item1());
    all &= report(2, "trust-region solver vs lattice search", &item2());
    all &= report(3, "exact unlearning on ridge regression", &item3());
    all &= report(4, "convex gradient contraction", &item4(&mut alphas));
    all &= report(5, "degeneracy contrast on an overparameterized MLP", &item5(&mut alphas));
    let (c6, took6) = item6(&mut alphas);
    all &= report(6, "class unlearning on blobs", &c6);
    let left = Duration::from_secs(120).saturating_sub(took6);
    all &= report(7, "alpha matches step norm; final-round alpha jump", &item7(&alphas, left));
    all &= report(8, "cubic surrogate bounds the loss", &item8());
    all &= report(9, "metric suite and IDX round trip", &item9());
    all &= report(10, "determinism and method-order independence", &item10());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

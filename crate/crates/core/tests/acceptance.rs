//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the verdict lines reach the terminal.
//! `CAFS_ACCEPTANCE_ONLY=1,4,7` restricts the run to the listed criteria.
//! A FAIL line is a recorded outcome; the process exits nonzero on a FAIL
//! only when `CAFS_ACCEPTANCE_STRICT=1`. Errors and panics always fail.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use cafs::analysis::{c_sum, reachable_point, MonteCarloOptions};
use cafs::experiment::{run_experiment, write_outputs, write_results_csv, ExperimentConfig, Study, SummaryRow};
use cafs::graph::random::{backdoor_sweep, theorem10_sweep, SweepReport};
use cafs::graph::{CausalDag, DiscreteBayesNet, NodeClass, PathQuery};
use cafs::regression::fit;
use cafs::selection::{solve_group_lasso, GroupLassoProblem, Method};
use cafs::seed::{derive_seed, rng_from_seed};
use cafs::sem::{generate_network, generate_sem, SemConfig};
use nalgebra::DVector;
use rand::Rng;

const MASTER: u64 = 20_241_016;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

// 1
fn d_separation_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = rng_from_seed(derive_seed(MASTER, &[1]));
    let (mut dags, mut queries, mut disagreements) = (0, 0, 0);
    for _ in 0..1000 {
        let n = rng.random_range(2..=6);
        let p = rng.random_range(0.1..0.9);
        let dag = common::random_dag(&mut rng, n, p);
        dags += 1;
        for _ in 0..4 {
            let (a, b, s) = common::random_query(&mut rng, n);
            let fast = dag.is_d_separated(&PathQuery::new(&a, &b, &s).unwrap()).unwrap();
            queries += 1;
            if fast != common::naive_d_separated(&dag, &a, &b, &s) {
                disagreements += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        disagreements == 0 && elapsed < Duration::from_secs(10),
        format!("{dags} DAGs, {queries} queries, {disagreements} disagreements, {}", secs(elapsed)),
    )
}

fn sweep_over_sizes(
    tag: u64,
    sizes: &[usize],
    per_size: usize,
    sweep: impl Fn(&mut rand_chacha::ChaCha8Rng, usize, usize) -> SweepReport,
) -> SweepReport {
    let mut total = SweepReport::default();
    for &n in sizes {
        let mut rng = rng_from_seed(derive_seed(MASTER, &[tag, n as u64]));
        let r = sweep(&mut rng, n, per_size);
        total.networks += r.networks;
        total.sets_checked += r.sets_checked;
        total.sets_admitted += r.sets_admitted;
        total.violations += r.violations;
        total.max_admitted_gap = total.max_admitted_gap.max(r.max_admitted_gap);
    }
    total
}

fn describe(r: &SweepReport) -> String {
    format!(
        "{} nets, {} sets checked, {} admitted, {} violations, max admitted gap {:.2e}",
        r.networks, r.sets_checked, r.sets_admitted, r.violations, r.max_admitted_gap
    )
}

// 2
fn backdoor_brute_force() -> Verdict {
    let r = sweep_over_sizes(2, &[3, 4, 5, 6], 60, |rng, n, t| backdoor_sweep(rng, n, t, 1e-9).unwrap());
    verdict(r.networks >= 200 && r.violations == 0 && r.sets_admitted > 0, describe(&r))
}

// 3
fn feature_set_brute_force() -> Verdict {
    let start = Instant::now();
    let r = sweep_over_sizes(3, &[3, 4, 5, 6], 60, |rng, n, t| theorem10_sweep(rng, n, t, 1e-9).unwrap());
    let elapsed = start.elapsed();
    verdict(
        r.networks >= 200 && r.violations == 0 && r.sets_admitted > 0 && elapsed < Duration::from_secs(60),
        format!("{}, {}", describe(&r), secs(elapsed)),
    )
}

// 4
fn copy_counterexample() -> Verdict {
    // z -> x, z -> y, x -> y with x a deterministic copy of z
    let dag = CausalDag::new(
        vec![
            (NodeClass::External, "z".into()),
            (NodeClass::Decision, "x".into()),
            (NodeClass::Target, "y".into()),
        ],
        &[(0, 1), (0, 2), (1, 2)],
    )
    .unwrap();
    let py = |z: f64, x: f64| 0.2 + 0.3 * x + 0.4 * z;
    let mut y_table = Vec::new();
    for z in [0.0, 1.0] {
        for x in [0.0, 1.0] {
            y_table.extend([1.0 - py(z, x), py(z, x)]);
        }
    }
    let net = DiscreteBayesNet::new(
        dag,
        vec![2, 2, 2],
        vec![vec![0.4, 0.6], vec![1.0, 0.0, 0.0, 1.0], y_table],
    )
    .unwrap();
    let ci = net.conditional_independence(&[2], &[0], &[1], 1e-12).unwrap();
    let fs_gap = net.adjustment_gap(&[1], &[2], &[]).unwrap();
    let cf_gap = net.adjustment_gap(&[1], &[2], &[0]).unwrap();
    verdict(
        ci && fs_gap > 0.01 && cf_gap <= 1e-9,
        format!("y indep z given x: {ci}, gap with {{x}}: {fs_gap:.4}, gap with {{z}}: {cf_gap:.2e}"),
    )
}

// 5
fn group_lasso_brute_force() -> Verdict {
    let (mut mismatches, mut kkt_failures, mut unconverged) = (0, 0, 0);
    let mut worst_kkt: f64 = 0.0;
    let instances = 60;
    for i in 0..instances {
        let (t, c, mu) = common::lasso_instance(derive_seed(MASTER, &[5, i]), 6);
        let sol = solve_group_lasso(&GroupLassoProblem::new(t.clone(), c.clone(), mu)).unwrap();
        let norms: Vec<f64> = sol.weights.column_iter().map(|col| col.norm()).collect();
        let top = norms.iter().copied().fold(0.0, f64::max);
        let support: Vec<usize> = (0..norms.len()).filter(|&v| top > 0.0 && norms[v] > 1e-6 * top).collect();
        let (oracle, _) = common::brute_force_support(&t, &c, mu, 1e-9);
        if support != oracle {
            mismatches += 1;
        }
        if sol.converged {
            worst_kkt = worst_kkt.max(sol.kkt.max());
            if sol.kkt.max() > 1e-6 {
                kkt_failures += 1;
            }
        } else {
            unconverged += 1;
        }
    }
    verdict(
        mismatches == 0 && kkt_failures == 0,
        format!(
            "{instances} instances, {mismatches} support mismatches, {kkt_failures} KKT failures \
             (worst {worst_kkt:.1e}), {unconverged} unconverged"
        ),
    )
}

fn small_sem(m: usize, seed: u64) -> cafs::sem::LinearSem {
    let cfg = SemConfig {
        products: m,
        features: m,
        seed,
        ..SemConfig::default()
    };
    generate_sem(&generate_network(&cfg).unwrap(), &cfg).unwrap()
}

// 6
fn decomposition_identity() -> Verdict {
    let mut outside = 0;
    let mut worst: f64 = 0.0;
    let instances = 20;
    for i in 0..instances {
        let seed = derive_seed(MASTER, &[6, i]);
        let m = 1 + (i as usize % 5);
        let sem = small_sem(m, seed);
        let (x, z) = reachable_point(&sem, derive_seed(seed, &[1])).unwrap();
        let mut rng = rng_from_seed(derive_seed(seed, &[2]));
        let kappa: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.5)).collect();
        let opts = MonteCarloOptions {
            sample_size: 60,
            replications: 500,
            bootstrap: 0,
            seed: derive_seed(seed, &[3]),
        };
        let rep = c_sum(&sem, &kappa, &x, &z, &opts).unwrap();
        let z_score = (rep.total_mse_mc - rep.decomposed_total()).abs() / rep.total_mse_se;
        worst = worst.max(z_score);
        if z_score > 3.0 {
            outside += 1;
        }
    }
    verdict(
        outside == 0,
        format!("{instances} SEMs, 500 replications, {outside} outside 3 SE (largest {worst:.2} SE)"),
    )
}

// 7
fn duplicate_feature() -> Verdict {
    let sem = small_sem(3, derive_seed(MASTER, &[7]));
    let source = 0;
    let twin = sem.with_feature_copy(source).unwrap();
    let copy = twin.features() - 1;
    let (k1, k2) = (vec![source, 1], vec![source, 1, copy]);

    let a = sem.sample(80, 11).unwrap();
    let b = twin.sample(80, 11).unwrap();
    let (fa, fb) = (fit(&a, &k1).unwrap(), fit(&b, &k2).unwrap());
    let mut identical = true;
    for j in 0..20 {
        let (x, z) = reachable_point(&sem, derive_seed(MASTER, &[7, 1, j])).unwrap();
        let pa = fa.predict(&x, &DVector::from_vec(vec![z[source], z[1]])).unwrap();
        let pb = fb.predict(&x, &DVector::from_vec(vec![z[source], z[1], z[source]])).unwrap();
        identical &= pa.iter().zip(pb.iter()).all(|(u, v)| u.to_bits() == v.to_bits());
    }

    let (x, z) = reachable_point(&sem, derive_seed(MASTER, &[7, 2])).unwrap();
    let mut z_twin: Vec<f64> = z.iter().copied().collect();
    z_twin.push(z[source]);
    let opts = MonteCarloOptions {
        sample_size: 50,
        replications: 100,
        bootstrap: 50,
        seed: 5,
    };
    let ra = c_sum(&sem, &k1, &x, &z, &opts).unwrap();
    let rb = c_sum(&twin, &k2, &x, &DVector::from_vec(z_twin), &opts).unwrap();
    let same = ra.same_numbers(&rb);
    verdict(
        identical && same,
        format!("predictions bitwise identical: {identical}, reports identical: {same}"),
    )
}

/// (method, alpha bits, D, mu bits, lambda bits)
type CellKey = (String, u64, usize, u64, u64);

fn summary_means(rows: &[SummaryRow], study: Study, metric: &str) -> BTreeMap<CellKey, f64> {
    rows.iter()
        .filter(|r| r.study == study && r.metric == metric)
        .map(|r| {
            let key = (
                r.method.to_string(),
                r.alpha.to_bits(),
                r.d,
                r.mu.to_bits(),
                r.lambda.unwrap_or(0.0).to_bits(),
            );
            (key, r.mean)
        })
        .collect()
}

// 8
fn prediction_direction() -> Verdict {
    let cfg = ExperimentConfig {
        optimization_study: false,
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let out = run_experiment(&cfg, 1).unwrap();
    let elapsed = start.elapsed();
    let _ = write_outputs(&cfg, &out, &std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-prediction"));
    let means = summary_means(&out.summary, Study::Prediction, "pred_mse");
    let mut ok = true;
    let mut parts = Vec::new();
    for &alpha in &cfg.alphas {
        for &mu in &cfg.mus {
            let get = |m: Method| means[&(m.to_string(), alpha.to_bits(), 40, mu.to_bits(), 0.0f64.to_bits())];
            let (fs, cf) = (get(Method::Fs), get(Method::Cf));
            ok &= fs <= cf;
            parts.push(format!("a={alpha} mu={mu}: FS {fs:.2} CF {cf:.2}"));
        }
    }
    verdict(
        ok && elapsed < Duration::from_secs(600),
        format!("D=40, {} trials; {}; {}", cfg.trials, parts.join(", "), secs(elapsed)),
    )
}

// 9
fn optimization_direction() -> Verdict {
    let cfg = ExperimentConfig {
        prediction_study: false,
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let out = run_experiment(&cfg, 1).unwrap();
    let elapsed = start.elapsed();
    let _ = write_outputs(&cfg, &out, &std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-optimization"));
    let means = summary_means(&out.summary, Study::Optimization, "normalized_value");
    // mean over the sample-size grid
    let avg = |m: Method, alpha: f64, lambda: f64| {
        let v: Vec<f64> = cfg
            .sample_sizes
            .iter()
            .map(|&d| means[&(m.to_string(), alpha.to_bits(), d, cfg.opt_mu.to_bits(), lambda.to_bits())])
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let cf10 = avg(Method::Cf, 0.1, 10.0);
    let fs: Vec<f64> = cfg.lambdas.iter().map(|&l| avg(Method::Fs, 0.1, l)).collect();
    let a = fs.iter().all(|&v| cf10 > v);
    let b = cf10 > avg(Method::Cf, 0.1, 0.0);
    let gap_low = cf10 - avg(Method::Fs, 0.1, 10.0);
    let gap_high = avg(Method::Cf, 0.5, 10.0) - avg(Method::Fs, 0.5, 10.0);
    let c = gap_high < gap_low;
    let fs_text: Vec<String> = cfg.lambdas.iter().zip(&fs).map(|(l, v)| format!("FS l={l} {v:.4}")).collect();
    verdict(
        a && b && c && elapsed < Duration::from_secs(1800),
        format!(
            "(a) {a}: CF l=10 {cf10:.4} vs {}; (b) {b}: CF l=0 {:.4}; (c) {c}: gap a=0.1 {gap_low:.4}, a=0.5 {gap_high:.4}; {}",
            fs_text.join(", "),
            avg(Method::Cf, 0.1, 0.0),
            secs(elapsed)
        ),
    )
}

// 10
fn determinism() -> Verdict {
    let cfg = ExperimentConfig {
        trials: 3,
        sample_sizes: vec![40, 80],
        mus: vec![200.0],
        lambdas: vec![0.0, 3.0],
        z_draws: 2,
        holdout: 200,
        master_seed: 99,
        ..ExperimentConfig::default()
    };
    let csv = |jobs: usize| {
        let mut buf = Vec::new();
        write_results_csv(&run_experiment(&cfg, jobs).unwrap().rows, &mut buf).unwrap();
        buf
    };
    let (first, again, parallel) = (csv(1), csv(1), csv(3));
    let files = |jobs: usize| {
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&cfg, &run_experiment(&cfg, jobs).unwrap(), dir.path()).unwrap();
        std::fs::read(dir.path().join("results.csv")).unwrap()
    };
    let on_disk = files(2) == first;
    verdict(
        first == again && first == parallel && on_disk && !first.is_empty(),
        format!(
            "{} bytes; rerun identical: {}, jobs=3 identical: {}, written file identical: {on_disk}",
            first.len(),
            first == again,
            first == parallel
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 10] = [
        (1, "d-separation matches path enumeration", d_separation_oracle),
        (2, "back-door sets pass exact adjustment check", backdoor_brute_force),
        (3, "premise-admitted feature sets pass exact adjustment check", feature_set_brute_force),
        (4, "copy counterexample: blanket {x} confounded, {z} not", copy_counterexample),
        (5, "group lasso support matches exhaustive search", group_lasso_brute_force),
        (6, "decomposition matches Monte-Carlo MSE within 3 SE", decomposition_identity),
        (7, "duplicate feature gives identical predictions and reports", duplicate_feature),
        (8, "prediction study: FS error <= CF error at D=40", prediction_direction),
        (9, "optimization study: robust CF directions", optimization_direction),
        (10, "results.csv byte-identical across reruns and jobs", determinism),
    ];
    let only: Option<Vec<u32>> = std::env::var("CAFS_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("CAFS_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let v = run();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {name}: {}", v.detail);
        if !v.pass {
            failed.push(id);
        }
    }
    println!("acceptance: {}/{ran} criteria passed, failed: {failed:?}", ran - failed.len());
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if
//! any criterion fails.

#[path = "../../core/tests/common/gradcheck.rs"]
mod gradcheck;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use lookahead::evaluation::spearman;
use lookahead::rng::stream_rng;
use lookahead::uncertainty::{fit_pinball, importance_weighted_risk, EssFormula, IntervalFit};
use lookahead::{
    decide, fit_predictive, fit_vanilla_bootstrap, frontier_sweep, train_lookahead, Dataset,
    Experiment, FeatureMask, ModelKind, PredictiveModel, TrainConfig,
};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const SEEDS: u64 = 5;

struct Verdict {
    pass: bool,
    detail: String,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn regime(eta: f64, budget: Duration) -> (bool, String) {
    let start = Instant::now();
    let mut base = (vec![], vec![], vec![]);
    let mut look = (vec![], vec![], vec![]);
    for seed in 0..SEEDS {
        let exp = Experiment::synthetic(25, seed).unwrap();
        let config = TrainConfig {
            seed,
            ..TrainConfig::synthetic(eta)
        };
        let b = exp.evaluate(&exp.baseline(&config).unwrap(), eta).unwrap();
        let l = exp.evaluate(&exp.train(&config).unwrap().predictive, eta).unwrap();
        for (acc, r) in [(&mut base, b), (&mut look, l)] {
            acc.0.push(r.rmse);
            acc.1.push(r.improvement_rate);
            acc.2.push(r.improvement_magnitude);
        }
    }
    let elapsed = start.elapsed();
    let (b_rmse, b_rate, b_mag) = (median(&base.0), median(&base.1), median(&base.2));
    let (l_rmse, l_rate, l_mag) = (median(&look.0), median(&look.1), median(&look.2));
    let bands = if eta == 0.75 {
        (l_rmse - b_rmse).abs() <= 0.05 && b_rate >= 0.7 && l_rate >= 0.7
    } else if eta == 1.25 {
        b_rate <= 0.35 && b_mag < 0.0 && l_rate >= 0.5 && l_mag > 0.0
    } else {
        b_rate <= 0.1 && b_mag <= -5.0 && l_rmse > b_rmse
    };
    let detail = format!(
        "eta={eta}: baseline rmse {b_rmse:.3} rate {b_rate:.3} mag {b_mag:.3}; \
         lookahead rmse {l_rmse:.3} rate {l_rate:.3} mag {l_mag:.3}; {:.1}s/{}s",
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    (bands && elapsed < budget, detail)
}

fn c1_synthetic_regimes() -> Verdict {
    let runs = [(0.75, 30), (1.25, 60), (3.5, 60)].map(|(e, s)| regime(e, Duration::from_secs(s)));
    Verdict {
        pass: runs.iter().all(|r| r.0),
        detail: runs.iter().map(|r| r.1.as_str()).collect::<Vec<_>>().join(" | "),
    }
}

fn c2_gradients() -> Verdict {
    let start = Instant::now();
    let checks = gradcheck::run_all(60, 0);
    let elapsed = start.elapsed();
    let detail = checks
        .iter()
        .map(|c| format!("{} {} draws worst {:.1e}", c.name, c.draws, c.worst))
        .collect::<Vec<_>>()
        .join(", ");
    Verdict {
        pass: checks.iter().all(gradcheck::Check::passed) && elapsed < Duration::from_secs(10),
        detail: format!("{detail}; {}ms", elapsed.as_millis()),
    }
}

fn c3_zero_lambda() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let exp = Experiment::synthetic(25, seed).unwrap();
        let config = TrainConfig {
            lambda: 0.0,
            seed,
            ..TrainConfig::synthetic(1.25)
        };
        let bundle = train_lookahead(&exp.train, &config).unwrap();
        let epochs = config.epochs_init + config.rounds * config.epochs_per_round;
        let plain = fit_predictive(&exp.train, config.model_kind, config.learning_rate, epochs).unwrap();
        for (a, b) in bundle.predictive.params().iter().zip(plain.params()) {
            worst = worst.max((a - b).abs());
        }
    }
    Verdict {
        pass: worst <= 1e-8,
        detail: format!("max parameter difference {worst:.1e}"),
    }
}

fn c4_mask_invariance() -> Verdict {
    let mut rng = stream_rng(4, 0);
    let mut violations = 0;
    let mut frozen = 0;
    for _ in 0..100 {
        let d = rng.random_range(1..6);
        let kind = if rng.random_bool(0.5) { ModelKind::Linear } else { ModelKind::Quadratic };
        let params: Vec<f64> = (0..kind.n_params(d)).map(|_| rng.random_range(-3.0..3.0)).collect();
        let f = PredictiveModel::from_params(kind, d, &params).unwrap();
        let flags: Vec<bool> = (0..d).map(|_| rng.random_bool(0.5)).collect();
        let m = rng.random_range(1..20);
        let rows = (0..m).map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let data = Dataset::new(rows, vec![0.0; m]).unwrap();
        let eta = rng.random_range(0.0..10.0);
        let out = decide(&f, &data, eta, &FeatureMask::new(flags.clone())).unwrap();
        for i in 0..m {
            for j in (0..d).filter(|&j| !flags[j]) {
                frozen += 1;
                if out.decided.row(i)[j].to_bits() != data.row(i)[j].to_bits() {
                    violations += 1;
                }
            }
        }
    }
    Verdict {
        pass: violations == 0 && frozen > 0,
        detail: format!("100 configurations, {frozen} immutable coordinates, {violations} changed"),
    }
}

fn c5_quantiles() -> Verdict {
    let mut rng = stream_rng(5, 0);
    let ys: Vec<f64> = (0..101).map(|_| StandardNormal.sample(&mut rng)).collect();
    let data = Dataset::new(vec![vec![0.0]; 101], ys.clone()).unwrap();
    let mut sorted = ys;
    sorted.sort_by(f64::total_cmp);
    let mut pass = true;
    let mut parts = vec![];
    for level in [0.1, 0.5, 0.9] {
        let c = fit_pinball(&data, None, level, ModelKind::Linear, 0.005, 20_000)
            .unwrap()
            .predict(&[0.0])
            .unwrap();
        let k = (level * 100.0_f64).round() as usize;
        let gap = (sorted[k] - sorted[k - 1]).max(sorted[k + 1] - sorted[k]);
        let err = (c - sorted[k]).abs();
        pass &= err <= gap;
        parts.push(format!("level {level}: |c - q| {err:.4} gap {gap:.4}"));
    }
    Verdict { pass, detail: parts.join(", ") }
}

fn linear_gaussian(m: usize, seed: u64, stream: u64) -> Dataset {
    let mut rng = stream_rng(seed, stream);
    let (mut rows, mut ys) = (vec![], vec![]);
    for _ in 0..m {
        let x: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        rows.push(vec![x]);
        ys.push(1.5 * x - 0.5 + e);
    }
    Dataset::new(rows, ys).unwrap()
}

fn c6_coverage() -> Verdict {
    let mut covs = vec![];
    for seed in 0..20 {
        let train = linear_gaussian(500, seed, 1);
        let test = linear_gaussian(500, seed, 2);
        let fit = IntervalFit {
            model_kind: ModelKind::Linear,
            lr: 0.1,
            epochs: 500,
            seed,
            ess: EssFormula::MeanOverVariance,
        };
        let g = fit_vanilla_bootstrap(&train, &vec![1.0; 500], 10, 0.9, fit).unwrap();
        let hits = test
            .rows()
            .zip(test.outcomes())
            .filter(|(x, y)| {
                let (l, u) = g.predict_interval(x).unwrap();
                l <= **y && **y <= u
            })
            .count();
        covs.push(hits as f64 / 500.0);
    }
    let mean = covs.iter().sum::<f64>() / covs.len() as f64;
    let (lo, hi) = covs.iter().fold((1.0f64, 0.0f64), |a, &c| (a.0.min(c), a.1.max(c)));
    Verdict {
        pass: (0.8..=1.0).contains(&mean),
        detail: format!("mean held-out coverage {mean:.3} over 20 seeds (range {lo:.3}..{hi:.3})"),
    }
}

fn c7_importance_weighting() -> Verdict {
    let p = [0.25, 0.25, 0.25, 0.25];
    let q = [0.1, 0.2, 0.3, 0.4];
    let mut rng = stream_rng(7, 0);
    let mut sample = |probs: &[f64]| {
        let u: f64 = rng.random();
        let x = probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .position(|c| u < c)
            .unwrap_or(probs.len() - 1);
        let e: f64 = StandardNormal.sample(&mut rng);
        let y = x as f64 + 0.5 * e;
        (x, (y - 0.5 * x as f64).powi(2))
    };
    let n = 20_000;
    let (mut w, mut src) = (vec![], vec![]);
    for _ in 0..n {
        let (x, l) = sample(&p);
        w.push(q[x] / p[x]);
        src.push(l);
    }
    let dst: Vec<f64> = (0..n).map(|_| sample(&q).1).collect();
    let weighted = importance_weighted_risk(&w, &src).unwrap();
    let direct = dst.iter().sum::<f64>() / n as f64;
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let wl: Vec<f64> = w.iter().zip(&src).map(|(a, b)| a * b).collect();
    let se = (var(&wl) / n as f64 + var(&dst) / n as f64).sqrt();
    let gap = (weighted - direct).abs();
    Verdict {
        pass: gap <= 3.0 * se,
        detail: format!("weighted {weighted:.4} vs shifted {direct:.4}, |diff| {gap:.4} <= 3se {:.4}", 3.0 * se),
    }
}

fn c8_frontier() -> Verdict {
    let grid = [0.0, 1.0, 2.0, 4.0, 8.0];
    let mut rhos = vec![];
    let mut penalties = vec![vec![]; grid.len()];
    for seed in 0..SEEDS {
        let exp = Experiment::synthetic(25, seed).unwrap();
        let config = TrainConfig {
            seed,
            ..TrainConfig::synthetic(1.25)
        };
        let points = frontier_sweep(&exp, &config, &grid).unwrap();
        let rates: Vec<f64> = points.iter().map(|p| p.report.improvement_rate).collect();
        rhos.push(spearman(&grid, &rates));
        for (acc, p) in penalties.iter_mut().zip(&points) {
            acc.push(p.final_penalty);
        }
    }
    let rho = median(&rhos);
    let med: Vec<f64> = penalties.iter().map(|v| median(v)).collect();
    let monotone = med.windows(2).all(|w| w[1] <= w[0]);
    Verdict {
        pass: rho > 0.0 && monotone,
        detail: format!(
            "median spearman(lambda, rate) {rho:.3}; median final penalty by lambda {:?} ({})",
            med.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            if monotone { "nonincreasing" } else { "not monotone" }
        ),
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn c9_determinism() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_lookahead");
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    let mut body = String::from("x1,x2,y\n");
    for i in 0..40 {
        let (a, b) = ((i % 8) as f64 * 0.25 - 1.0, (i % 5) as f64 * 0.5);
        body.push_str(&format!("{a},{b},{}\n", 0.3 + a - 0.6 * a * a + 0.1 * b));
    }
    std::fs::write(&csv, body).unwrap();
    let csv = csv.to_str().unwrap();
    let runs: [(&str, Vec<&str>); 3] = [
        ("synth", vec!["--eta", "1.25", "--seed", "3"]),
        ("train", vec!["--data", csv, "--target", "y", "--mutable", "x1", "--lr", "0.01",
                       "--epochs-init", "5000", "--epochs-round", "300"]),
        ("sweep", vec!["--grid", "0,1,2,4,8", "--seed", "1", "--epochs-init", "5000",
                       "--epochs-round", "300"]),
    ];
    let mut identical = 0;
    let mut notes = vec![];
    for (cmd, extra) in &runs {
        let out = dir.path().join(cmd);
        let first = Command::new(bin)
            .args([cmd, "--out", out.to_str().unwrap()])
            .args(extra)
            .status()
            .unwrap();
        let files = snapshot(&out);
        let manifest = out.join("manifest.json");
        let second = Command::new(bin)
            .args([cmd, "--manifest", manifest.to_str().unwrap()])
            .status()
            .unwrap();
        let same = first.success() && second.success() && snapshot(&out) == files;
        identical += same as usize;
        notes.push(format!("{cmd} {} files {}", files.len(), if same { "identical" } else { "DIFFER" }));
    }
    Verdict {
        pass: identical == runs.len(),
        detail: notes.join(", "),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("synthetic regime reproduction", c1_synthetic_regimes),
        ("gradient suite", c2_gradients),
        ("lambda=0 equivalence", c3_zero_lambda),
        ("mask invariance", c4_mask_invariance),
        ("quantile correctness", c5_quantiles),
        ("bootstrap coverage", c6_coverage),
        ("importance-weighting identity", c7_importance_weighting),
        ("frontier trend", c8_frontier),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let v = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| Verdict {
            pass: false,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>().map(String::as_str)
                    .or_else(|| e.downcast_ref::<&str>().copied())
                    .unwrap_or("?")
            ),
        });
        failed += !v.pass as usize;
        println!(
            "criterion {} {:<30} {}  {}",
            i + 1,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Central finite-difference checks for every analytic gradient.

use lookahead::rng::stream_rng;
use lookahead::training::{grad_naive, naive_objective};
use lookahead::uncertainty::{combine_bootstrap, IntervalModel};
use lookahead::{
    ddecided_dparams, decide, grad_lookahead, lookahead_objective, Dataset, FeatureMask,
    ModelKind, PredictiveModel, UncertaintyKind,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const STRUCTURAL_TOL: f64 = 1e-5;
pub const OBJECTIVE_TOL: f64 = 1e-4;
pub const KINK_MARGIN: f64 = 1e-6;

#[derive(Debug)]
pub struct Check {
    pub name: &'static str,
    pub draws: usize,
    pub rejected: usize,
    pub worst: f64,
    pub tol: f64,
}

impl Check {
    fn new(name: &'static str, tol: f64) -> Self {
        Self { name, draws: 0, rejected: 0, worst: 0.0, tol }
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        let err = (analytic - numeric).abs() / numeric.abs().max(1.0);
        self.worst = self.worst.max(err);
    }

    pub fn passed(&self) -> bool {
        self.draws >= 50 && self.worst <= self.tol
    }
}

const KINDS: [ModelKind; 2] = [ModelKind::Linear, ModelKind::Quadratic];

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn model(rng: &mut ChaCha8Rng, kind: ModelKind, d: usize) -> PredictiveModel {
    PredictiveModel::from_params(kind, d, &uniform(rng, kind.n_params(d), 1.0)).unwrap()
}

fn mask(rng: &mut ChaCha8Rng, d: usize) -> FeatureMask {
    FeatureMask::new((0..d).map(|_| rng.random_bool(0.7)).collect())
}

fn dataset(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Dataset {
    let rows = (0..m).map(|_| uniform(rng, d, 1.5)).collect();
    Dataset::new(rows, uniform(rng, m, 2.0)).unwrap()
}

fn perturbed(v: &[f64], j: usize, h: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    out[j] += h;
    out
}

fn central<F: Fn(&[f64]) -> f64>(f: F, at: &[f64], j: usize, h: f64) -> f64 {
    (f(&perturbed(at, j, h)) - f(&perturbed(at, j, -h))) / (2.0 * h)
}

fn interval_model(rng: &mut ChaCha8Rng, kind: ModelKind, d: usize, ensemble: bool) -> IntervalModel {
    if ensemble {
        let subs = (0..rng.random_range(2..6)).map(|_| model(rng, kind, d)).collect();
        combine_bootstrap(UncertaintyKind::VanillaBootstrap, subs, rng.random_range(0.5..0.99)).unwrap()
    } else {
        IntervalModel::Quantile {
            lower_model: model(rng, kind, d),
            upper_model: model(rng, kind, d),
            tau: 0.8,
        }
    }
}

pub fn check_grad_x(draws: usize, seed: u64) -> Check {
    let mut rng = stream_rng(seed, 101);
    let mut c = Check::new("grad_x", STRUCTURAL_TOL);
    for i in 0..draws {
        let d = rng.random_range(1..4);
        let f = model(&mut rng, KINDS[i % 2], d);
        let x = uniform(&mut rng, d, 2.0);
        let g = f.grad_x(&x).unwrap();
        for j in 0..d {
            c.record(g[j], central(|p| f.predict(p).unwrap(), &x, j, 1e-5));
        }
        c.draws += 1;
    }
    c
}

pub fn check_dgrad_dparams(draws: usize, seed: u64) -> Check {
    let mut rng = stream_rng(seed, 102);
    let mut c = Check::new("dgrad_dparams", STRUCTURAL_TOL);
    for i in 0..draws {
        let (kind, d) = (KINDS[i % 2], rng.random_range(1..4));
        let f = model(&mut rng, kind, d);
        let x = uniform(&mut rng, d, 2.0);
        let jac = f.dgrad_dparams(&x).unwrap();
        let params = f.params();
        for r in 0..d {
            let gx = |p: &[f64]| PredictiveModel::from_params(kind, d, p).unwrap().grad_x(&x).unwrap()[r];
            for k in 0..params.len() {
                c.record(jac.get(r, k), central(gx, &params, k, 1e-5));
            }
        }
        c.draws += 1;
    }
    c
}

pub fn check_ddecided_dparams(draws: usize, seed: u64) -> Check {
    let mut rng = stream_rng(seed, 103);
    let mut c = Check::new("ddecided_dparams", STRUCTURAL_TOL);
    for i in 0..draws {
        let (kind, d) = (KINDS[i % 2], rng.random_range(1..4));
        let f = model(&mut rng, kind, d);
        let gamma = mask(&mut rng, d);
        let eta = rng.random_range(0.0..3.0);
        let x = uniform(&mut rng, d, 2.0);
        let point = Dataset::new(vec![x.clone()], vec![0.0]).unwrap();
        let jac = ddecided_dparams(&f, &x, eta, &gamma).unwrap();
        let params = f.params();
        for r in 0..d {
            let xr = |p: &[f64]| {
                let g = PredictiveModel::from_params(kind, d, p).unwrap();
                decide(&g, &point, eta, &gamma).unwrap().decided.row(0)[r]
            };
            for k in 0..params.len() {
                c.record(jac.get(r, k), central(xr, &params, k, 1e-5));
            }
        }
        c.draws += 1;
    }
    c
}

pub fn check_dlower_dx(draws: usize, seed: u64) -> Check {
    let mut rng = stream_rng(seed, 104);
    let mut c = Check::new("dlower_dx", STRUCTURAL_TOL);
    let mut i = 0;
    while c.draws < draws {
        let (kind, d) = (KINDS[i % 2], rng.random_range(1..4));
        i += 1;
        let g = interval_model(&mut rng, kind, d, i % 4 < 2);
        let x = uniform(&mut rng, d, 2.0);
        if let IntervalModel::Quantile { lower_model, upper_model, .. } = &g {
            // swapping the bounds is a kink
            let gap = lower_model.predict(&x).unwrap() - upper_model.predict(&x).unwrap();
            if gap.abs() < 1e-3 {
                c.rejected += 1;
                continue;
            }
        }
        let grad = g.dlower_dx(&x).unwrap();
        for j in 0..d {
            c.record(grad[j], central(|p| g.predict_interval(p).unwrap().0, &x, j, 1e-5));
        }
        c.draws += 1;
    }
    c
}

/// Signs of y − ℓ' at every decided point.
fn hinge_pattern(
    kind: ModelKind,
    params: &[f64],
    g: &IntervalModel,
    data: &Dataset,
    eta: f64,
    gamma: &FeatureMask,
) -> Vec<(bool, f64)> {
    let f = PredictiveModel::from_params(kind, data.dim(), params).unwrap();
    let decided = decide(&f, data, eta, gamma).unwrap().decided;
    data.outcomes()
        .iter()
        .zip(decided.rows())
        .map(|(y, x)| {
            let gap = y - g.predict_interval(x).unwrap().0;
            (gap > 0.0, gap.abs())
        })
        .collect()
}

pub fn check_grad_lookahead(draws: usize, seed: u64) -> Check {
    let mut rng = stream_rng(seed, 105);
    let mut c = Check::new("grad_lookahead", OBJECTIVE_TOL);
    let h = 1e-6;
    let mut i = 0;
    while c.draws < draws {
        let (kind, d) = (KINDS[i % 2], rng.random_range(1..4));
        i += 1;
        let data = dataset(&mut rng, 8, d);
        let g = interval_model(&mut rng, kind, d, i % 3 != 0);
        let gamma = mask(&mut rng, d);
        let eta = rng.random_range(0.0..2.0);
        let lambda = rng.random_range(0.5..8.0);
        let params = uniform(&mut rng, kind.n_params(d), 1.0);

        let base = hinge_pattern(kind, &params, &g, &data, eta, &gamma);
        let mut near_kink = base.iter().any(|&(_, gap)| gap < KINK_MARGIN);
        for k in 0..params.len() {
            for s in [h, -h] {
                let moved = hinge_pattern(kind, &perturbed(&params, k, s), &g, &data, eta, &gamma);
                near_kink |= moved.iter().zip(&base).any(|(a, b)| a.0 != b.0);
            }
        }
        if near_kink {
            c.rejected += 1;
            continue;
        }

        let f = PredictiveModel::from_params(kind, d, &params).unwrap();
        let grad = grad_lookahead(&f, &g, &data, lambda, eta, &gamma).unwrap();
        let objective = |p: &[f64]| {
            let f = PredictiveModel::from_params(kind, d, p).unwrap();
            lookahead_objective(&f, &g, &data, lambda, eta, &gamma).unwrap()
        };
        for k in 0..params.len() {
            c.record(grad[k], central(objective, &params, k, h));
        }
        c.draws += 1;
    }
    c
}

pub fn check_grad_naive(draws: usize, seed: u64) -> Check {
    let mut rng = stream_rng(seed, 106);
    let mut c = Check::new("grad_naive", OBJECTIVE_TOL);
    for i in 0..draws {
        let (kind, d) = (KINDS[i % 2], rng.random_range(1..4));
        let data = dataset(&mut rng, 8, d);
        let gamma = mask(&mut rng, d);
        let eta = rng.random_range(0.0..2.0);
        let lambda = rng.random_range(0.0..8.0);
        let f = model(&mut rng, kind, d);
        let params = f.params();
        let grad = grad_naive(&f, &data, lambda, eta, &gamma).unwrap();
        let objective = |p: &[f64]| {
            let f = PredictiveModel::from_params(kind, d, p).unwrap();
            naive_objective(&f, &data, lambda, eta, &gamma).unwrap()
        };
        for k in 0..params.len() {
            c.record(grad[k], central(objective, &params, k, 1e-5));
        }
        c.draws += 1;
    }
    c
}

pub fn run_all(draws: usize, seed: u64) -> Vec<Check> {
    vec![
        check_grad_x(draws, seed),
        check_dgrad_dparams(draws, seed),
        check_ddecided_dparams(draws, seed),
        check_dlower_dx(draws, seed),
        check_grad_lookahead(draws, seed),
        check_grad_naive(draws, seed),
    ]
}

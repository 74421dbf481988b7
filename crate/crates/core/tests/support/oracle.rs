//! Randomized finite-difference oracle for graph derivatives.
//!
//! Each case builds a scalar root over randomly bound variables and compares
//! the symbolic gradient with respect to every bound variable against
//! central differences.

use opvi_core::autodiff::check::{analytic_gradient, finite_difference, tolerance_ratio};
use opvi_core::autodiff::{Bindings, Graph, NodeId, ParamSet, Shape};
use opvi_core::models::lfa::LfaPosterior;
use opvi_core::models::{GaussianHierarchy, LogisticFactorAnalysis, MixtureTarget, Model};
use opvi_core::operators::{apply_kl, apply_ls};
use opvi_core::rng::{substream, StreamRng};
use opvi_core::testfn::{BoundedMlp, ClipMode, TestFunction};
use opvi_core::variational::{score, MeanFieldGaussian, SignSplitProgram, VariationalFamily, VariationalProgram};
use opvi_core::Result;
use rand::Rng;

pub const STEP: f64 = 1e-5;
pub const REL: f64 = 1e-6;
pub const ABS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub name: &'static str,
    pub ratio: f64,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.ratio <= 1.0
    }
}

struct Case {
    g: Graph,
    b: Bindings,
    root: NodeId,
}

impl Case {
    fn new() -> Self {
        let mut g = Graph::new();
        let root = g.scalar(0.0);
        Self { g, b: Bindings::new(), root }
    }

    fn bind(&mut self, name: &str, values: Vec<f64>) -> NodeId {
        let shape = Shape::Vector(values.len());
        let n = self.g.input(name, shape).unwrap();
        self.b.set(self.g.var_id(name).unwrap(), &values);
        n
    }

    fn bind_scalar(&mut self, name: &str, v: f64) -> NodeId {
        let n = self.g.input(name, Shape::Scalar).unwrap();
        self.b.set(self.g.var_id(name).unwrap(), &[v]);
        n
    }

    fn bind_params(&mut self, set: &ParamSet, values: &[f64]) {
        set.bind(&mut self.b, values).unwrap();
    }

    /// Reduces a vector node to a scalar with random weights.
    fn finish(&mut self, out: NodeId, rng: &mut StreamRng) -> Result<()> {
        self.root = match self.g.shape(out) {
            Shape::Scalar => out,
            Shape::Vector(n) => {
                let c = self.g.vector(uniform(rng, n, -2.0, 2.0));
                self.g.dot(c, out)?
            }
        };
        Ok(())
    }

    fn check(mut self) -> f64 {
        let names: Vec<String> = self.g.vars().iter().map(|v| v.name.clone()).collect();
        let vars: Vec<_> =
            names.iter().map(|n| self.g.var_id(n).unwrap()).filter(|&v| self.b.get(v).is_some()).collect();
        let mut worst = 0.0f64;
        for v in vars {
            let fd = finite_difference(&self.g, self.root, v, &self.b, STEP);
            let an = analytic_gradient(&mut self.g, self.root, v, &self.b);
            match (an, fd) {
                (Ok(a), Ok(f)) => worst = worst.max(tolerance_ratio(&a, &f, REL, ABS)),
                _ => return f64::INFINITY,
            }
        }
        worst
    }
}

fn uniform(rng: &mut StreamRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Uniform on `(lo, hi)` but at least `gap` away from every point in `avoid`.
fn uniform_avoiding(rng: &mut StreamRng, n: usize, lo: f64, hi: f64, avoid: &[f64], gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let v = rng.random_range(lo..hi);
            if avoid.iter().all(|a| (v - a).abs() > gap) {
                break v;
            }
        })
        .collect()
}

type Builder = fn(&mut Case, &mut StreamRng) -> Result<()>;

fn unary(
    c: &mut Case,
    rng: &mut StreamRng,
    op: fn(&mut Graph, NodeId) -> Result<NodeId>,
    lo: f64,
    hi: f64,
) -> Result<()> {
    let n = rng.random_range(1..5);
    let x = c.bind("x", uniform(rng, n, lo, hi));
    let y = op(&mut c.g, x)?;
    c.finish(y, rng)
}

fn binary(c: &mut Case, rng: &mut StreamRng, op: fn(&mut Graph, NodeId, NodeId) -> Result<NodeId>) -> Result<()> {
    let n = rng.random_range(1..5);
    let x = c.bind("x", uniform(rng, n, -3.0, 3.0));
    let y = c.bind("y", uniform(rng, n, -3.0, 3.0));
    let z = op(&mut c.g, x, y)?;
    c.finish(z, rng)
}

const PRIMITIVES: &[(&str, Builder)] = &[
    ("add", |c, r| binary(c, r, Graph::add)),
    ("sub", |c, r| binary(c, r, Graph::sub)),
    ("mul", |c, r| binary(c, r, Graph::mul)),
    ("dot", |c, r| binary(c, r, Graph::dot)),
    ("neg", |c, r| unary(c, r, Graph::neg, -3.0, 3.0)),
    ("recip", |c, r| unary(c, r, Graph::recip, 0.2, 3.0)),
    ("exp", |c, r| unary(c, r, Graph::exp, -3.0, 3.0)),
    ("log", |c, r| unary(c, r, Graph::log, 0.2, 3.0)),
    ("tanh", |c, r| unary(c, r, Graph::tanh, -3.0, 3.0)),
    ("sigmoid", |c, r| unary(c, r, Graph::sigmoid, -3.0, 3.0)),
    ("softplus", |c, r| unary(c, r, Graph::softplus, -3.0, 3.0)),
    ("log_sigmoid", |c, r| unary(c, r, Graph::log_sigmoid, -3.0, 3.0)),
    ("square", |c, r| unary(c, r, Graph::square, -3.0, 3.0)),
    ("sqrt", |c, r| unary(c, r, Graph::sqrt, 0.2, 3.0)),
    ("sum", |c, r| unary(c, r, Graph::sum, -3.0, 3.0)),
    ("relu", |c, r| {
        let n = r.random_range(1..5);
        let x = c.bind("x", uniform_avoiding(r, n, -3.0, 3.0, &[0.0], 1e-3));
        let y = c.g.relu(x)?;
        c.finish(y, r)
    }),
    ("max", |c, r| {
        let x = c.bind_scalar("x", r.random_range(-3.0..3.0));
        let yv = uniform_avoiding(r, 1, -3.0, 3.0, &[c.b.get(c.g.var_id("x").unwrap()).unwrap()[0]], 1e-3);
        let y = c.bind_scalar("y", yv[0]);
        let m = c.g.max(x, y)?;
        c.finish(m, r)
    }),
    ("log_add_exp", |c, r| {
        let x = c.bind_scalar("x", r.random_range(-3.0..3.0));
        let y = c.bind_scalar("y", r.random_range(-3.0..3.0));
        let m = c.g.log_add_exp(x, y)?;
        c.finish(m, r)
    }),
    ("matvec", |c, r| {
        let (rows, cols) = (r.random_range(1..5), r.random_range(1..5));
        let w = c.bind("w", uniform(r, rows * cols, -3.0, 3.0));
        let x = c.bind("x", uniform(r, cols, -3.0, 3.0));
        let y = c.g.matvec(w, x, rows, cols)?;
        c.finish(y, r)
    }),
    ("mattvec", |c, r| {
        let (rows, cols) = (r.random_range(1..5), r.random_range(1..5));
        let w = c.bind("w", uniform(r, rows * cols, -3.0, 3.0));
        let y = c.bind("y", uniform(r, rows, -3.0, 3.0));
        let x = c.g.mattvec(w, y, rows, cols)?;
        c.finish(x, r)
    }),
    ("affine", |c, r| {
        let (rows, cols) = (r.random_range(1..5), r.random_range(1..5));
        let w = c.bind("w", uniform(r, rows * cols, -3.0, 3.0));
        let x = c.bind("x", uniform(r, cols, -3.0, 3.0));
        let b = c.bind("b", uniform(r, rows, -3.0, 3.0));
        let y = c.g.affine(w, x, b, rows, cols)?;
        c.finish(y, r)
    }),
    ("outer", |c, r| {
        let (n, m) = (r.random_range(1..4), r.random_range(1..4));
        let a = c.bind("a", uniform(r, n, -3.0, 3.0));
        let b = c.bind("b", uniform(r, m, -3.0, 3.0));
        let o = c.g.outer(a, b)?;
        c.finish(o, r)
    }),
    ("outer_scalar", |c, r| {
        let a = c.bind_scalar("a", r.random_range(-3.0..3.0));
        let b = c.bind("b", uniform(r, 3, -3.0, 3.0));
        let o = c.g.outer(a, b)?;
        c.finish(o, r)
    }),
    ("broadcast", |c, r| {
        let s = c.bind_scalar("s", r.random_range(-3.0..3.0));
        let b = c.g.broadcast(s, 4)?;
        let x = c.bind("x", uniform(r, 4, -3.0, 3.0));
        let y = c.g.mul(b, x)?;
        c.finish(y, r)
    }),
    ("scale", |c, r| {
        let s = c.bind_scalar("s", r.random_range(-3.0..3.0));
        let x = c.bind("x", uniform(r, 3, -3.0, 3.0));
        let y = c.g.scale(s, x)?;
        c.finish(y, r)
    }),
    ("scale_by", |c, r| {
        let x = c.bind("x", uniform(r, 3, -3.0, 3.0));
        let y = c.g.scale_by(r.random_range(-3.0..3.0), x)?;
        let y = c.g.square(y)?;
        c.finish(y, r)
    }),
    ("index", |c, r| {
        let n = r.random_range(1..5);
        let x = c.bind("x", uniform(r, n, -3.0, 3.0));
        let i = c.g.index(x, r.random_range(0..n))?;
        let y = c.g.exp(i)?;
        c.finish(y, r)
    }),
    ("one_hot", |c, r| {
        let s = c.bind_scalar("s", r.random_range(-3.0..3.0));
        let t = c.g.tanh(s)?;
        let y = c.g.one_hot(t, r.random_range(0..4), 4)?;
        c.finish(y, r)
    }),
    ("slice", |c, r| {
        let x = c.bind("x", uniform(r, 6, -3.0, 3.0));
        let start = r.random_range(0..4);
        let s = c.g.slice(x, start, 6 - start)?;
        let y = c.g.tanh(s)?;
        c.finish(y, r)
    }),
    ("embed", |c, r| {
        let x = c.bind("x", uniform(r, 2, -3.0, 3.0));
        let e = c.g.embed(x, r.random_range(0..4), 6)?;
        let y = c.g.sigmoid(e)?;
        c.finish(y, r)
    }),
    ("concat", |c, r| {
        let x = c.bind("x", uniform(r, 2, -3.0, 3.0));
        let s = c.bind_scalar("s", r.random_range(-3.0..3.0));
        let y = c.bind("y", uniform(r, 3, -3.0, 3.0));
        let cat = c.g.concat(&[x, s, y, x])?;
        let out = c.g.tanh(cat)?;
        c.finish(out, r)
    }),
    ("select", |c, r| {
        let cond = c.bind("cond", uniform_avoiding(r, 4, -3.0, 3.0, &[0.0], 1e-3));
        let a = c.bind("a", uniform(r, 4, -3.0, 3.0));
        let b = c.bind("b", uniform(r, 4, -3.0, 3.0));
        let a2 = c.g.square(a)?;
        let s = c.g.select(cond, a2, b)?;
        c.finish(s, r)
    }),
    ("clip_norm", |c, r| {
        let n = r.random_range(1..5);
        let raw = loop {
            let raw = uniform(r, n, -3.0, 3.0);
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 2.0).abs() > 1e-2 && norm > 1e-2 {
                break raw;
            }
        };
        let h = c.bind("h", raw);
        let y = c.g.clip_norm(h, 2.0)?;
        c.finish(y, r)
    }),
    ("clamp", |c, r| {
        let h = c.bind("h", uniform_avoiding(r, 4, -3.0, 3.0, &[-2.0, 2.0], 1e-3));
        let y = c.g.clamp(h, 2.0)?;
        c.finish(y, r)
    }),
];

fn random_mlp(rng: &mut StreamRng, clip: ClipMode) -> (BoundedMlp, Vec<f64>) {
    let d = rng.random_range(1..4);
    let f = BoundedMlp { clip, ..BoundedMlp::new(d) };
    let theta = f.init(rng).into_iter().map(|v| 3.0 * v + rng.random_range(-0.1..0.1)).collect();
    (f, theta)
}

const COMPOSED: &[(&str, Builder)] = &[
    ("mlp", |c, r| {
        let (f, theta) = random_mlp(r, ClipMode::LayerNorm);
        let set = f.declare(&mut c.g)?;
        c.bind_params(&set, &theta);
        let z = c.bind("z", uniform(r, f.dim, -3.0, 3.0));
        let y = f.apply(&mut c.g, z, &set)?;
        c.finish(y, r)
    }),
    ("mlp_per_unit", |c, r| {
        let (f, theta) = random_mlp(r, ClipMode::PerUnit);
        let f = BoundedMlp { bound: 0.9, ..f };
        let set = f.declare(&mut c.g)?;
        c.bind_params(&set, &theta);
        let z = c.bind("z", uniform(r, f.dim, -3.0, 3.0));
        let y = f.apply(&mut c.g, z, &set)?;
        c.finish(y, r)
    }),
    ("divergence", |c, r| {
        let (f, theta) = random_mlp(r, ClipMode::LayerNorm);
        let set = f.declare(&mut c.g)?;
        c.bind_params(&set, &theta);
        let z = c.bind("z", uniform(r, f.dim, -3.0, 3.0));
        let y = f.apply(&mut c.g, z, &set)?;
        let div = c.g.divergence(y, z)?;
        c.finish(div, r)
    }),
    ("score", |c, r| {
        let d = r.random_range(1..4);
        let q = MeanFieldGaussian::new(d);
        let set = q.declare(&mut c.g)?;
        let lam = MeanFieldGaussian::params(&uniform(r, d, -2.0, 2.0), &uniform(r, d, 0.3, 2.0));
        c.bind_params(&set, &lam);
        let z = c.bind("z", uniform(r, d, -3.0, 3.0));
        let s = score(&q, &mut c.g, z, &set)?;
        c.finish(s, r)
    }),
    ("program", |c, r| {
        let d = r.random_range(1..4);
        let q = VariationalProgram::for_latent(d);
        let set = q.declare(&mut c.g)?;
        let lam: Vec<f64> = q.init(r).into_iter().map(|v| v + r.random_range(-0.3..0.3)).collect();
        c.bind_params(&set, &lam);
        let eps = c.bind("eps", uniform(r, q.noise_dim(), -3.0, 3.0));
        let z = q.sample(&mut c.g, eps, &set)?;
        c.finish(z, r)
    }),
    ("sign_split", |c, r| {
        let q = SignSplitProgram;
        let set = q.declare(&mut c.g)?;
        c.bind_params(&set, &uniform(r, 4, -2.0, 2.0));
        let mut eps = uniform(r, 3, -3.0, 3.0);
        if eps[2].abs() < 1e-2 {
            eps[2] = 0.5;
        }
        let e = c.bind("eps", eps);
        let z = q.sample(&mut c.g, e, &set)?;
        c.finish(z, r)
    }),
    ("ls_operator", |c, r| {
        let f = BoundedMlp::new(1);
        let theta: Vec<f64> = f.init(r).into_iter().map(|v| 3.0 * v).collect();
        let m = MixtureTarget::default();
        let q = MeanFieldGaussian::new(1);
        let lset = q.declare(&mut c.g)?;
        c.bind_params(&lset, &MeanFieldGaussian::params(&[r.random_range(-2.0..2.0)], &[r.random_range(0.5..2.0)]));
        let tset = f.declare(&mut c.g)?;
        c.bind_params(&tset, &theta);
        let eps = c.bind("eps", uniform(r, 1, -2.0, 2.0));
        let z = q.sample(&mut c.g, eps, &lset)?;
        let lj = m.log_joint(&mut c.g, z, 1.0)?;
        let fz = f.apply(&mut c.g, z, &tset)?;
        let op = apply_ls(&mut c.g, lj, z, fz)?;
        c.finish(op, r)
    }),
    ("kl_operator", |c, r| {
        let data: Vec<f64> = uniform(r, 3, -2.0, 2.0);
        let m = GaussianHierarchy { data };
        let d = m.latent_dim();
        let q = MeanFieldGaussian::new(d);
        let lset = q.declare(&mut c.g)?;
        c.bind_params(&lset, &MeanFieldGaussian::params(&uniform(r, d, -1.0, 1.0), &uniform(r, d, 0.5, 1.5)));
        let eps = c.bind("eps", uniform(r, d, -2.0, 2.0));
        let z = q.sample(&mut c.g, eps, &lset)?;
        let lj = m.log_joint(&mut c.g, z, 1.0)?;
        let op = apply_kl(&mut c.g, lj, &q, &lset, z)?;
        c.finish(op, r)
    }),
    ("lfa_log_joint", |c, r| {
        let (k, p) = (3, 8);
        let model = LogisticFactorAnalysis::random(k, p, 1.0, 0.5, r);
        let x: Vec<f64> = (0..p).map(|_| if r.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let post = LfaPosterior::fully_observed(&model, &x)?;
        let z = c.bind("z", uniform(r, k, -3.0, 3.0));
        let lj = post.log_joint(&mut c.g, z, 1.0)?;
        c.finish(lj, r)
    }),
];

pub fn case_names() -> Vec<&'static str> {
    PRIMITIVES.iter().chain(COMPOSED).map(|(n, _)| *n).collect()
}

/// Runs `count` randomized checks, cycling through every case kind.
pub fn run_suite(seed: u64, count: usize) -> Vec<CaseResult> {
    let all: Vec<&(&str, Builder)> = PRIMITIVES.iter().chain(COMPOSED).collect();
    (0..count)
        .map(|i| {
            let (name, build) = all[i % all.len()];
            let mut rng = substream(seed, i as u64, 0);
            let mut case = Case::new();
            let ratio = match build(&mut case, &mut rng) {
                Ok(()) => case.check(),
                Err(_) => f64::INFINITY,
            };
            CaseResult { name, ratio }
        })
        .collect()
}

/// Random polynomial `Σ a_{ij} xⁱ yʲ` with `i + j ≤ 4`; returns the largest
/// Hessian error relative to `max(1, |exact|)`.
pub fn polynomial_hessian_error(seed: u64) -> f64 {
    let mut rng = substream(seed, 0, 1);
    let terms: Vec<(usize, usize, f64)> = (0..=4)
        .flat_map(|i| (0..=4 - i).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, rng.random_range(-2.0..2.0)))
        .collect();
    let (x0, y0) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));

    let mut g = Graph::new();
    let v = g.input("v", Shape::Vector(2)).unwrap();
    let x = g.index(v, 0).unwrap();
    let y = g.index(v, 1).unwrap();
    let mut p = g.scalar(0.0);
    for &(i, j, a) in &terms {
        let mut t = g.scalar(a);
        for _ in 0..i {
            t = g.mul(t, x).unwrap();
        }
        for _ in 0..j {
            t = g.mul(t, y).unwrap();
        }
        p = g.add(p, t).unwrap();
    }
    let grad = g.grad(p, v).unwrap();
    let b = Bindings::new().with(g.var_id("v").unwrap(), &[x0, y0]);

    let pow = |b: f64, e: i64| if e < 0 { 0.0 } else { b.powi(e as i32) };
    let exact = |di: usize, dj: usize| -> f64 {
        terms
            .iter()
            .map(|&(i, j, a)| {
                let fi = (0..di).map(|k| i as f64 - k as f64).product::<f64>();
                let fj = (0..dj).map(|k| j as f64 - k as f64).product::<f64>();
                a * fi * fj * pow(x0, i as i64 - di as i64) * pow(y0, j as i64 - dj as i64)
            })
            .sum()
    };

    let mut worst = 0.0f64;
    for r in 0..2 {
        let gr = g.index(grad, r).unwrap();
        let h = g.grad(gr, v).unwrap();
        let hv = g.eval(h, &b).unwrap();
        for s in 0..2 {
            let e = exact((r == 0) as usize + (s == 0) as usize, (r == 1) as usize + (s == 1) as usize);
            worst = worst.max((hv[s] - e).abs() / e.abs().max(1.0));
        }
    }
    // Univariate second derivative through a nested `grad(grad(·))` on x alone.
    let mut g1 = Graph::new();
    let x = g1.input("x", Shape::Scalar).unwrap();
    let mut p = g1.scalar(0.0);
    for &(i, _, a) in terms.iter().filter(|t| t.1 == 0) {
        let mut t = g1.scalar(a);
        for _ in 0..i {
            t = g1.mul(t, x).unwrap();
        }
        p = g1.add(p, t).unwrap();
    }
    let d1 = g1.grad(p, x).unwrap();
    let d2 = g1.grad(d1, x).unwrap();
    let got = g1.eval_scalar(d2, &Bindings::new().with(g1.var_id("x").unwrap(), &[x0])).unwrap();
    let e: f64 = terms
        .iter()
        .filter(|t| t.1 == 0 && t.0 >= 2)
        .map(|&(i, _, a)| a * (i * (i - 1)) as f64 * x0.powi(i as i32 - 2))
        .sum();
    worst.max((got - e).abs() / e.abs().max(1.0))
}

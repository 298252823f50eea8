use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hyper::{EstimationResult, Hyperparameters};
use super::likelihood::MarginalLikelihood;
use crate::error::Result;

/// Box constraints on (ρ, ln σ_d, ln l_d).
pub const LOWER: [f64; 3] = [1e-6, -23.0, -12.0];
pub const UPPER: [f64; 3] = [1e3, 12.0, 12.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerOptions {
    /// Projected-gradient ∞-norm threshold.
    pub gtol: f64,
    /// Step ∞-norm threshold.
    pub xtol: f64,
    /// Relative objective change threshold.
    pub ftol: f64,
    pub max_iter: usize,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            gtol: 1e-8,
            xtol: 1e-12,
            ftol: 1e-14,
            max_iter: 500,
            n_starts: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Run {
    x: [f64; 3],
    f: f64,
    iterations: usize,
    converged: bool,
    termination: &'static str,
}

fn clip(x: [f64; 3]) -> [f64; 3] {
    let mut y = x;
    for i in 0..3 {
        y[i] = y[i].clamp(LOWER[i], UPPER[i]);
    }
    y
}

fn projected_gradient(x: &[f64; 3], g: &[f64; 3]) -> [f64; 3] {
    let mut pg = *g;
    for i in 0..3 {
        if (x[i] <= LOWER[i] && g[i] > 0.0) || (x[i] >= UPPER[i] && g[i] < 0.0) {
            pg[i] = 0.0;
        }
    }
    pg
}

fn inf_norm(v: &[f64; 3]) -> f64 {
    v.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Projected BFGS with backtracking Armijo line search along the projected path.
fn minimize(lik: &MarginalLikelihood, x0: [f64; 3], opts: &OptimizerOptions) -> Result<Run> {
    let mut x = clip(x0);
    let e = lik.evaluate(x, true)?;
    let mut f = e.value;
    let mut g = e.gradient.expect("gradient requested");
    let mut hinv = [[0.0; 3]; 3];
    let identity = |h: &mut [[f64; 3]; 3], s: f64| {
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] = if i == j { s } else { 0.0 };
            }
        }
    };
    identity(&mut hinv, 1.0);
    let mut fresh = true;
    let mut it = 0;
    loop {
        let pg = projected_gradient(&x, &g);
        if inf_norm(&pg) < opts.gtol {
            return Ok(Run { x, f, iterations: it, converged: true, termination: "gradient tolerance" });
        }
        if it >= opts.max_iter {
            return Ok(Run { x, f, iterations: it, converged: false, termination: "iteration limit" });
        }
        it += 1;
        let free: [bool; 3] = std::array::from_fn(|i| pg[i] != 0.0 || g[i] == 0.0);
        let mut d = [0.0; 3];
        for i in 0..3 {
            if free[i] {
                d[i] = -(0..3).filter(|&j| free[j]).map(|j| hinv[i][j] * g[j]).sum::<f64>();
            }
        }
        if dot(&d, &g) >= 0.0 {
            identity(&mut hinv, 1.0);
            fresh = true;
            d = pg.map(|v| -v);
        }
        if fresh {
            let n = inf_norm(&d);
            if n > 1.0 {
                d = d.map(|v| v / n);
            }
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = clip(std::array::from_fn(|i| x[i] + alpha * d[i]));
            let s: [f64; 3] = std::array::from_fn(|i| xn[i] - x[i]);
            if inf_norm(&s) < opts.xtol {
                return Ok(Run { x, f, iterations: it, converged: true, termination: "step tolerance" });
            }
            if let Ok(en) = lik.evaluate(xn, true) {
                if en.value <= f + 1e-4 * dot(&g, &s) {
                    accepted = Some((xn, s, en));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, s, en)) = accepted else {
            return Ok(Run { x, f, iterations: it, converged: false, termination: "line search failed" });
        };
        let gn = en.gradient.expect("gradient requested");
        let y: [f64; 3] = std::array::from_fn(|i| gn[i] - g[i]);
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                identity(&mut hinv, sy / dot(&y, &y));
                fresh = false;
            }
            // H ← (I − r s yᵀ) H (I − r y sᵀ) + r s sᵀ
            let r = 1.0 / sy;
            let hy: [f64; 3] = std::array::from_fn(|i| dot(&hinv[i], &y));
            let yhy = dot(&y, &hy);
            for i in 0..3 {
                for j in 0..3 {
                    hinv[i][j] += -r * (s[i] * hy[j] + hy[i] * s[j]) + (r * r * yhy + r) * s[i] * s[j];
                }
            }
        }
        let df = (f - en.value).abs();
        let fscale = f.abs().max(en.value.abs()).max(1.0);
        x = xn;
        f = en.value;
        g = gn;
        if df <= opts.ftol * fscale && inf_norm(&s) < 1e-8 {
            return Ok(Run { x, f, iterations: it, converged: true, termination: "objective tolerance" });
        }
    }
}

/// Starting points: `init` first, then seeded perturbations of it.
pub fn start_points(init: &Hyperparameters, n_starts: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = clip([init.rho, init.sigma_d.max(1e-10).ln(), init.l_d.ln()]);
    let mut out = vec![x0];
    for _ in 1..n_starts.max(1) {
        let z: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        out.push(clip([x0[0] * (0.3 * z[0]).exp(), x0[1] + z[1], x0[2] + 0.5 * z[2]]));
    }
    out
}

/// Maximum-likelihood estimate of (ρ, σ_d, l_d) by multi-start projected BFGS;
/// the start with the smallest ϑ wins (ties go to the lower start index).
pub fn estimate_hyperparameters(lik: &MarginalLikelihood, init: &Hyperparameters, opts: &OptimizerOptions) -> Result<EstimationResult> {
    init.validate()?;
    let starts = start_points(init, opts.n_starts, opts.seed);
    let runs: Vec<Result<Run>> = starts.par_iter().map(|&x0| minimize(lik, x0, opts)).collect();
    let mut best: Option<Run> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(run) => {
                if best.as_ref().is_none_or(|b| run.f < b.f) {
                    best = Some(run);
                }
            }
            Err(e) => {
                log::warn!("optimizer start failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(run) = best else {
        return Err(first_err.expect("at least one start"));
    };
    if !run.converged {
        log::warn!("hyperparameter estimation stopped early: {}", run.termination);
    }
    let w = Hyperparameters::from_vector(run.x);
    Ok(EstimationResult {
        rho: w.rho,
        sigma_d: w.sigma_d,
        l_d: w.l_d,
        neg_log_marginal: run.f,
        iterations: run.iterations,
        converged: run.converged,
        termination: run.termination.to_string(),
    })
}

//! Ogden parameter identification from stress-stretch curves.
//!
//! The squared stress error over all curves is minimized with a multistart
//! Nelder-Mead search followed by a central-difference gradient polish. Each
//! term is searched as `(sign, ln mu~, ln alpha~)` with `mu = sign * mu~`,
//! `alpha = sign * alpha~`, so `mu_k alpha_k = mu~ alpha~ > 0` holds for
//! every point the optimizer can visit; both sign choices are enumerated
//! across starts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::characterization::{CurveSample, CurveSource, StressStretchCurve};
use crate::constitutive::{load_case_stress, OgdenParameters, OgdenTerm};
use crate::error::{Error, Result};
use crate::seed::stage_rng;
use crate::util::parallel_map;

/// Multistart sampling box: `mu~` log-uniform in [0.1, 100] kPa.
const MU_RANGE: (f64, f64) = (0.1, 100.0);
/// Multistart sampling box: `alpha~` log-uniform in [0.5, 10].
const ALPHA_RANGE: (f64, f64) = (0.5, 10.0);
/// Two candidate objectives within this relative distance are considered
/// equal and broken by the canonical parameter ordering.
const TIE_REL: f64 = 1e-12;
/// Relative objective decrease below which a polish phase counts as
/// converged.
const POLISH_TOL: f64 = 1e-10;
const POLISH_MAX_STEPS: usize = 300;

/// A set of experimental curves to fit jointly.
#[derive(Debug, Clone)]
pub struct FitProblem {
    curves: Vec<StressStretchCurve>,
    order: usize,
    weights: Vec<f64>,
}

impl FitProblem {
    pub fn new(curves: Vec<StressStretchCurve>, order: usize) -> Result<Self> {
        let weights = vec![1.0; curves.len()];
        Self::with_weights(curves, order, weights)
    }

    pub fn with_weights(
        curves: Vec<StressStretchCurve>,
        order: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::config("fit problem needs at least one curve".to_string()));
        }
        if !(1..=3).contains(&order) {
            return Err(Error::config(format!("model order {order} outside {{1, 2, 3}}")));
        }
        if weights.len() != curves.len() {
            return Err(Error::config(format!(
                "{} weights for {} curves",
                weights.len(),
                curves.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::config("curve weights must be positive".to_string()));
        }
        Ok(Self { curves, order, weights })
    }

    pub fn curves(&self) -> &[StressStretchCurve] {
        &self.curves
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Optimizer budget and reproducibility knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// Multistart count.
    pub starts: usize,
    pub seed: u64,
    /// Nelder-Mead iteration budget per start.
    pub max_iters: usize,
    /// Relative simplex-spread tolerance for the exploration phase.
    pub tol: f64,
    /// Worker threads for independent starts; 1 keeps everything serial.
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_threads() -> usize {
    1
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            starts: 32,
            seed: 0,
            max_iters: 2000,
            tol: 1e-14,
            threads: 1,
        }
    }
}

/// Outcome of a fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub params: OgdenParameters,
    /// Final weighted sum of squared stress residuals, kPa^2.
    pub objective: f64,
    /// Per-curve residual RMS, kPa.
    pub per_curve_rms: Vec<f64>,
    /// Total optimizer iterations across all starts.
    pub iterations: u64,
    /// True when the winning start's polish phase reached its tolerance.
    pub converged: bool,
    pub starts_used: usize,
}

/// Weighted sum of squared stress residuals of `params` against the
/// experimental curves, in kPa^2.
pub fn objective(params: &OgdenParameters, problem: &FitProblem) -> f64 {
    debug_assert!(params.terms().iter().all(|t| t.mu_kpa * t.alpha > 0.0));
    let mut total = 0.0;
    for (curve, w) in problem.curves.iter().zip(&problem.weights) {
        for s in curve.samples() {
            let model = match load_case_stress(params, curve.case(), s.lambda) {
                Ok(eval) => eval.sigma_kpa[0],
                Err(_) => return f64::INFINITY,
            };
            let r = model - s.sigma_kpa;
            total += w * r * r;
        }
        if !total.is_finite() {
            return f64::INFINITY;
        }
    }
    total
}

/// Model curves evaluated on each experimental curve's stretch grid.
pub fn model_curves(params: &OgdenParameters, problem: &FitProblem) -> Vec<StressStretchCurve> {
    problem
        .curves
        .iter()
        .map(|curve| {
            let samples = curve
                .samples()
                .iter()
                .map(|s| CurveSample {
                    lambda: s.lambda,
                    sigma_kpa: load_case_stress(params, curve.case(), s.lambda)
                        .expect("curve stretches are positive by invariant")
                        .sigma_kpa[0],
                })
                .collect();
            StressStretchCurve::new(curve.case(), samples, CurveSource::Model)
                .expect("model curve inherits a valid stretch grid")
        })
        .collect()
}

struct Candidate {
    params: Option<OgdenParameters>,
    objective: f64,
    iterations: u64,
    converged: bool,
}

/// Best-of-multistart constrained least-squares fit.
pub fn fit(problem: &FitProblem, config: &FitConfig) -> Result<FitResult> {
    if config.starts == 0 {
        return Err(Error::config("fit needs at least one start".to_string()));
    }
    let k = problem.order;
    let sign_patterns: usize = 1 << k;

    let candidates = parallel_map(
        (0..config.starts).collect::<Vec<_>>(),
        config.threads,
        |_, start| run_start(problem, config, start, sign_patterns),
    );

    let mut iterations = 0u64;
    let mut best: Option<&Candidate> = None;
    for cand in &candidates {
        iterations += cand.iterations;
        if cand.params.is_none() {
            continue;
        }
        best = Some(match best {
            None => cand,
            Some(cur) => pick_better(cur, cand),
        });
    }

    let Some(best) = best else {
        let sample: Vec<String> = candidates
            .iter()
            .take(8)
            .map(|c| format!("{:.3e}", c.objective))
            .collect();
        return Err(Error::Optimization(format!(
            "all {} starts diverged to non-finite objectives (first values: {})",
            config.starts,
            sample.join(", ")
        )));
    };

    let params = best.params.clone().expect("best candidate holds parameters");
    let per_curve_rms = problem
        .curves
        .iter()
        .map(|curve| {
            let mse = curve
                .samples()
                .iter()
                .map(|s| {
                    let model = load_case_stress(&params, curve.case(), s.lambda)
                        .expect("curve stretches are positive by invariant")
                        .sigma_kpa[0];
                    (model - s.sigma_kpa).powi(2)
                })
                .sum::<f64>()
                / curve.len() as f64;
            mse.sqrt()
        })
        .collect();

    Ok(FitResult {
        objective: best.objective,
        converged: best.converged,
        params,
        per_curve_rms,
        iterations,
        starts_used: config.starts,
    })
}

fn run_start(problem: &FitProblem, config: &FitConfig, start: usize, patterns: usize) -> Candidate {
    let k = problem.order;
    let signs: Vec<f64> = (0..k)
        .map(|bit| if (start % patterns) >> bit & 1 == 1 { -1.0 } else { 1.0 })
        .collect();

    let mut rng = stage_rng(config.seed, &format!("fit/start/{start}"));
    let mut x0 = Vec::with_capacity(2 * k);
    for _ in 0..k {
        x0.push(rng.gen_range(MU_RANGE.0.ln()..MU_RANGE.1.ln()));
        x0.push(rng.gen_range(ALPHA_RANGE.0.ln()..ALPHA_RANGE.1.ln()));
    }

    let eval = |x: &[f64]| match decode(x, &signs) {
        Ok(p) => objective(&p, problem),
        Err(_) => f64::INFINITY,
    };

    let (mut x, mut f, nm_iters) = nelder_mead(&eval, &x0, config.max_iters, config.tol);
    let mut iterations = nm_iters;
    let mut converged = false;
    if f.is_finite() {
        let (px, pf, p_iters, p_conv) = polish(&eval, &x, f);
        x = px;
        f = pf;
        iterations += p_iters;
        converged = p_conv;
    }

    Candidate {
        params: decode(&x, &signs).ok().filter(|_| f.is_finite()),
        objective: f,
        iterations,
        converged,
    }
}

fn decode(x: &[f64], signs: &[f64]) -> Result<OgdenParameters> {
    let terms: Vec<OgdenTerm> = signs
        .iter()
        .enumerate()
        .map(|(i, s)| OgdenTerm {
            mu_kpa: s * x[2 * i].exp(),
            alpha: s * x[2 * i + 1].exp(),
        })
        .collect();
    OgdenParameters::incompressible("fitted", terms)
}

fn pick_better<'a>(a: &'a Candidate, b: &'a Candidate) -> &'a Candidate {
    let scale = a.objective.abs().max(b.objective.abs());
    if (a.objective - b.objective).abs() <= TIE_REL * scale {
        // Deterministic tie-break: lexicographically smallest sorted
        // (alpha, mu) term list.
        if canonical_key(b) < canonical_key(a) {
            b
        } else {
            a
        }
    } else if b.objective < a.objective {
        b
    } else {
        a
    }
}

fn canonical_key(c: &Candidate) -> Vec<(u64, u64)> {
    let mut key: Vec<(f64, f64)> = c
        .params
        .as_ref()
        .map(|p| p.terms().iter().map(|t| (t.alpha, t.mu_kpa)).collect())
        .unwrap_or_default();
    key.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // total_cmp-compatible bit keys so the Vec comparison is a total order
    key.into_iter()
        .map(|(a, m)| (total_order_bits(a), total_order_bits(m)))
        .collect()
}

fn total_order_bits(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | 1 << 63
    }
}

/// Classic Nelder-Mead simplex search. Returns best point, value, iterations.
fn nelder_mead(
    eval: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    max_iters: usize,
    tol: f64,
) -> (Vec<f64>, f64, u64) {
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;
    const INIT_STEP: f64 = 0.25;

    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += INIT_STEP;
        let f = eval(&v);
        simplex.push((v, f));
    }

    let mut iters = 0u64;
    for _ in 0..max_iters {
        iters += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;
        if f_worst.is_finite() && f_worst - f_best <= tol * (f_best.abs() + 1e-12) {
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, vi) in centroid.iter_mut().zip(v) {
                *c += vi / n as f64;
            }
        }

        let lerp = |from: &[f64], coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(from)
                .map(|(c, x)| c + coef * (c - x))
                .collect()
        };

        let reflected = lerp(&simplex[n].0, REFLECT);
        let f_reflected = eval(&reflected);

        if f_reflected < simplex[0].1 {
            let expanded = lerp(&simplex[n].0, EXPAND);
            let f_expanded = eval(&expanded);
            simplex[n] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
        } else if f_reflected < simplex[n - 1].1 {
            simplex[n] = (reflected, f_reflected);
        } else {
            let contracted = if f_reflected < simplex[n].1 {
                lerp(&reflected, -CONTRACT)
            } else {
                lerp(&simplex[n].0, -CONTRACT)
            };
            let f_contracted = eval(&contracted);
            if f_contracted < simplex[n].1.min(f_reflected) {
                simplex[n] = (contracted, f_contracted);
            } else {
                let best = simplex[0].0.clone();
                for (v, f) in simplex.iter_mut().skip(1) {
                    for (vi, bi) in v.iter_mut().zip(&best) {
                        *vi = bi + SHRINK * (*vi - bi);
                    }
                    *f = eval(v);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    (x, f, iters)
}

/// Central-difference gradient descent with backtracking, refining the
/// exploration result. Returns (point, value, iterations, converged).
fn polish(
    eval: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    f0: f64,
) -> (Vec<f64>, f64, u64, bool) {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut f = f0;
    let mut iters = 0u64;

    for _ in 0..POLISH_MAX_STEPS {
        iters += 1;
        let mut grad = vec![0.0; n];
        let mut grad_norm2 = 0.0;
        for i in 0..n {
            let h = 1e-6 * x[i].abs().max(1.0);
            let mut hi = x.clone();
            hi[i] += h;
            let mut lo = x.clone();
            lo[i] -= h;
            grad[i] = (eval(&hi) - eval(&lo)) / (2.0 * h);
            grad_norm2 += grad[i] * grad[i];
        }
        if !grad_norm2.is_finite() || grad_norm2 == 0.0 {
            return (x, f, iters, true);
        }

        // Backtracking line search along -grad with an Armijo condition.
        let mut step = 1.0 / grad_norm2.sqrt().max(1.0);
        let mut improved = false;
        for _ in 0..50 {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(xi, g)| xi - step * g).collect();
            let f_trial = eval(&trial);
            if f_trial < f - 1e-4 * step * grad_norm2 {
                let decrease = (f - f_trial) / f.abs().max(1e-300);
                x = trial;
                f = f_trial;
                improved = true;
                if decrease < POLISH_TOL {
                    return (x, f, iters, true);
                }
                break;
            }
            step *= 0.5;
        }
        if !improved {
            // No descent direction at line-search resolution.
            return (x, f, iters, true);
        }
    }
    (x, f, iters, false)
}

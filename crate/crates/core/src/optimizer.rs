//! Per-band D2D power allocation maximizing network energy efficiency.
//!
//! The problem is
//!
//! ```text
//! maximize    EE(p)
//! subject to  Σ p_i ≤ P_d,            0 ≤ p_i ≤ P_d,i,max,
//!             STP_d,i(p_i) ≥ θ_d,i,   STP_c,i(p_i) ≥ θ_c,i.
//! ```
//!
//! The objective is non-convex, so the solver combines an exterior quadratic
//! penalty on the two STP families with Euclidean projection onto the
//! budget/box polytope, minimized by Nelder–Mead from 16 scattered
//! low-discrepancy starts. Because `STP_d,i` increases and `STP_c,i`
//! decreases in `p_i`, each band's QoS constraints reduce to an interval
//! `[lo_i, hi_i]` found by bisection; every local solution is clamped into
//! those intervals and re-projected before it is reported.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{evaluate_stp, Receiver};
use crate::config::{PowerVector, ScenarioConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_energy_efficiency, AnalyticOptions};

/// Tolerance on the STP floors when judging feasibility.
pub const STP_TOLERANCE: f64 = 1e-6;
/// Tolerance on the budget and box constraints, W.
pub const POWER_TOLERANCE: f64 = 1e-9;

/// Slack of every constraint at one power vector; negative means violated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// `P_d - Σ p_i`.
    pub budget: f64,
    /// `p_i`.
    pub box_lower: Vec<f64>,
    /// `P_d,i,max - p_i`.
    pub box_upper: Vec<f64>,
    pub stp_d: Vec<f64>,
    pub stp_c: Vec<f64>,
    /// `STP_d,i - θ_d,i`.
    pub qos_d: Vec<f64>,
    /// `STP_c,i - θ_c,i`.
    pub qos_c: Vec<f64>,
}

impl ConstraintReport {
    pub fn is_feasible(&self) -> bool {
        self.budget >= -POWER_TOLERANCE
            && self
                .box_lower
                .iter()
                .chain(&self.box_upper)
                .all(|&s| s >= -POWER_TOLERANCE)
            && self.qos_d.iter().chain(&self.qos_c).all(|&s| s >= -STP_TOLERANCE)
    }

    /// Smallest slack across all constraints.
    pub fn min_slack(&self) -> f64 {
        std::iter::once(self.budget)
            .chain(self.box_lower.iter().copied())
            .chain(self.box_upper.iter().copied())
            .chain(self.qos_d.iter().copied())
            .chain(self.qos_c.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Sum of squared constraint violations.
    pub fn violation(&self) -> f64 {
        std::iter::once(self.budget)
            .chain(self.box_lower.iter().copied())
            .chain(self.box_upper.iter().copied())
            .chain(self.qos_d.iter().copied())
            .chain(self.qos_c.iter().copied())
            .map(|s| s.min(0.0).powi(2))
            .sum()
    }
}

fn check_length(cfg: &ScenarioConfig, p: &PowerVector) -> Result<()> {
    if p.len() != cfg.num_bands {
        return Err(Error::InvalidArgument(format!(
            "power vector has {} entries, scenario has {} bands",
            p.len(),
            cfg.num_bands
        )));
    }
    Ok(())
}

fn band_stps(cfg: &ScenarioConfig, p_d: f64, band: usize, analytic: &AnalyticOptions) -> Result<(f64, f64)> {
    let p_d = p_d.max(0.0);
    let d = evaluate_stp(cfg, p_d, band, Receiver::D2d, analytic.method)?.value;
    let c = evaluate_stp(cfg, p_d, band, Receiver::Bs, analytic.method)?.value;
    Ok((d, c))
}

/// Slack of every budget, box and QoS constraint at `p`.
pub fn check_feasibility(cfg: &ScenarioConfig, p: &PowerVector, analytic: &AnalyticOptions) -> Result<ConstraintReport> {
    check_length(cfg, p)?;
    let mut report = ConstraintReport {
        budget: cfg.p_d_total - p.total(),
        box_lower: p.as_slice().to_vec(),
        box_upper: p.as_slice().iter().zip(&cfg.p_d_max).map(|(x, u)| u - x).collect(),
        stp_d: Vec::with_capacity(cfg.num_bands),
        stp_c: Vec::with_capacity(cfg.num_bands),
        qos_d: Vec::with_capacity(cfg.num_bands),
        qos_c: Vec::with_capacity(cfg.num_bands),
    };
    for (i, &pd) in p.as_slice().iter().enumerate() {
        let (d, c) = band_stps(cfg, pd, i, analytic)?;
        report.stp_d.push(d);
        report.stp_c.push(c);
        report.qos_d.push(d - cfg.theta_d[i]);
        report.qos_c.push(c - cfg.theta_c[i]);
    }
    Ok(report)
}

/// Range of powers meeting both QoS floors in one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBracket {
    pub lo: f64,
    pub hi: f64,
    /// False when no power in `[0, P_d,i,max]` meets both floors.
    pub feasible: bool,
}

const BRACKET_BISECTIONS: usize = 200;

/// Bisect the switch point of a predicate that changes value once on
/// `[a, b]`, with `pred(a) != pred(b)`. Returns the end of the final bracket
/// on which `pred` is true.
fn bisect_switch(mut a: f64, mut b: f64, mut pred: impl FnMut(f64) -> Result<bool>) -> Result<f64> {
    let a_true = pred(a)?;
    for _ in 0..BRACKET_BISECTIONS {
        let mid = 0.5 * (a + b);
        if !(mid > a && mid < b) {
            break;
        }
        if pred(mid)? == a_true {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(if a_true { a } else { b })
}

/// QoS interval of band `i`, exploiting the monotonicity of both STPs in
/// `p_i`. The returned end points satisfy the floors themselves.
pub fn qos_bracket(cfg: &ScenarioConfig, band: usize, analytic: &AnalyticOptions) -> Result<PowerBracket> {
    let b = cfg.band(band);
    let u = b.p_d_max;
    let meets_d = |x: f64| -> Result<bool> {
        Ok(evaluate_stp(cfg, x, band, Receiver::D2d, analytic.method)?.value >= b.theta_d)
    };
    let meets_c = |x: f64| -> Result<bool> {
        Ok(evaluate_stp(cfg, x, band, Receiver::Bs, analytic.method)?.value >= b.theta_c)
    };
    let infeasible = PowerBracket {
        lo: 0.0,
        hi: 0.0,
        feasible: false,
    };
    if !meets_d(u)? || !meets_c(0.0)? {
        return Ok(infeasible);
    }
    let lo = if meets_d(0.0)? { 0.0 } else { bisect_switch(0.0, u, meets_d)? };
    let hi = if meets_c(u)? { u } else { bisect_switch(0.0, u, meets_c)? };
    if lo > hi {
        return Ok(infeasible);
    }
    Ok(PowerBracket { lo, hi, feasible: true })
}

/// Euclidean projection onto `{l ≤ x ≤ u, Σ x ≤ budget}`. Requires
/// `Σ l ≤ budget`; otherwise the box point closest to the budget is returned.
pub fn project_onto_polytope(y: &[f64], lower: &[f64], upper: &[f64], budget: f64) -> Vec<f64> {
    let clamp_shift = |tau: f64| -> Vec<f64> {
        y.iter()
            .zip(lower.iter().zip(upper))
            .map(|(&v, (&l, &u))| (v - tau).clamp(l, u))
            .collect()
    };
    let x = clamp_shift(0.0);
    if x.iter().sum::<f64>() <= budget {
        return x;
    }
    let mut a = 0.0;
    let mut b = y
        .iter()
        .zip(lower)
        .map(|(&v, &l)| v - l)
        .fold(0.0, f64::max);
    if clamp_shift(b).iter().sum::<f64>() > budget {
        return clamp_shift(b);
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if !(mid > a && mid < b) {
            break;
        }
        if clamp_shift(mid).iter().sum::<f64>() > budget {
            a = mid;
        } else {
            b = mid;
        }
    }
    clamp_shift(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub multistarts: usize,
    /// Shifts the low-discrepancy start sequence.
    pub seed: u64,
    pub outer_iterations: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    /// Nelder–Mead stops when every vertex is this close to the best one
    /// (normalized coordinates).
    pub simplex_tolerance: f64,
    pub max_inner_iterations: usize,
    pub analytic: AnalyticOptions,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            multistarts: 16,
            seed: 0,
            outer_iterations: 6,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            simplex_tolerance: 1e-9,
            max_inner_iterations: 2000,
            analytic: AnalyticOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub start: Vec<f64>,
    /// EE at the start point when it is feasible.
    pub start_ee: Option<f64>,
    pub end: Vec<f64>,
    pub end_ee: f64,
    pub end_feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub iterations: usize,
    pub restarts: usize,
    pub evaluations: usize,
    pub brackets: Vec<PowerBracket>,
    pub starts: Vec<StartRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationOutcome {
    pub p_opt: PowerVector,
    /// bit/J, recomputed at `p_opt`.
    pub ee_opt: f64,
    pub constraint_slacks: ConstraintReport,
    pub feasible: bool,
    pub solver_trace: SolverTrace,
}

/// Radical inverse of `index` in base `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
        if f == 0.0 {
            break;
        }
        inv = 1.0 / base as f64;
    }
    out
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// `count` points of the Halton sequence in `[0,1)^dim`, rotated by a
/// seed-derived Cranley–Patterson shift.
pub fn halton_points(count: usize, dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if dim > PRIMES.len() {
        return Err(Error::InvalidArgument(format!(
            "at most {} bands supported by the start sequence",
            PRIMES.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    Ok((0..count)
        .map(|k| {
            (0..dim)
                .map(|d| (radical_inverse(k as u64 + 1, PRIMES[d]) + shift[d]).fract())
                .collect()
        })
        .collect())
}

/// Nelder–Mead minimization from an initial simplex around `x0`.
fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    x0: &[f64],
    step: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64, usize)> {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)?));
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if v[i] + step <= 1.0 { step } else { -step };
        let fv = f(&v)?;
        simplex.push((v, fv));
    }
    let mut iterations = 0;
    while iterations < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if size < tol {
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(v, _)| v[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = f(&xr)?;
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f(&xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = along(0.5);
            let fc = f(&xc)?;
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = f(&xc)?;
            (xc, fc)
        };
        if fc < fr.min(worst.1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let v: Vec<f64> = best
                .iter()
                .zip(&entry.0)
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            let fv = f(&v)?;
            *entry = (v, fv);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    Ok((x, fx, iterations))
}

struct Problem<'a> {
    cfg: &'a ScenarioConfig,
    options: &'a OptimizerOptions,
    upper: Vec<f64>,
    zeros: Vec<f64>,
    brackets: Vec<PowerBracket>,
    bracket_feasible: bool,
}

impl<'a> Problem<'a> {
    fn scale(&self, i: usize) -> f64 {
        if self.upper[i] > 0.0 {
            self.upper[i]
        } else {
            1.0
        }
    }

    fn to_power(&self, z: &[f64]) -> Vec<f64> {
        z.iter().enumerate().map(|(i, v)| v * self.scale(i)).collect()
    }

    fn to_normalized(&self, p: &[f64]) -> Vec<f64> {
        p.iter().enumerate().map(|(i, v)| v / self.scale(i)).collect()
    }

    fn project_box_budget(&self, p: &[f64]) -> Vec<f64> {
        project_onto_polytope(p, &self.zeros, &self.upper, self.cfg.p_d_total)
    }

    /// Clamp into the QoS brackets and re-project onto the budget.
    fn repair(&self, p: &[f64]) -> Vec<f64> {
        if !self.bracket_feasible {
            return self.project_box_budget(p);
        }
        let lo: Vec<f64> = self.brackets.iter().map(|b| b.lo).collect();
        let hi: Vec<f64> = self.brackets.iter().map(|b| b.hi).collect();
        project_onto_polytope(p, &lo, &hi, self.cfg.p_d_total)
    }

    /// EE and per-band STPs; EE is 0 where the power consumption vanishes.
    fn evaluate(&self, p: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
        let pv = PowerVector::new(p.to_vec());
        match evaluate_energy_efficiency(self.cfg, &pv, &self.options.analytic) {
            Ok(e) => Ok((e.ee, e.bands.iter().map(|b| (b.stp_d.value, b.stp_c.value)).collect())),
            Err(Error::ZeroPowerConsumption) => {
                let stps = p
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| band_stps(self.cfg, x, i, &self.options.analytic))
                    .collect::<Result<Vec<_>>>()?;
                Ok((0.0, stps))
            }
            Err(e) => Err(e),
        }
    }

    fn penalized(&self, z: &[f64], mu: f64, ee_scale: f64) -> Result<f64> {
        let raw = self.to_power(z);
        let p = self.project_box_budget(&raw);
        let pull: f64 = self
            .to_normalized(&p)
            .iter()
            .zip(z)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let (ee, stps) = self.evaluate(&p)?;
        let qos: f64 = stps
            .iter()
            .enumerate()
            .map(|(i, &(d, c))| {
                (self.cfg.theta_d[i] - d).max(0.0).powi(2) + (self.cfg.theta_c[i] - c).max(0.0).powi(2)
            })
            .sum();
        Ok(-ee / ee_scale + mu * qos + mu * pull)
    }
}

/// Round to 1e-9 W for tie-breaking.
fn rounded(p: &[f64]) -> Vec<i64> {
    p.iter().map(|x| (x * 1e9).round() as i64).collect()
}

/// Rearrange each group of identical bands into ascending order, the
/// lexicographically smallest member of the permutation class.
fn canonical_order(p: &[f64], groups: &[Vec<usize>]) -> Vec<f64> {
    let mut out = p.to_vec();
    for g in groups {
        let mut vals: Vec<f64> = g.iter().map(|&i| p[i]).collect();
        vals.sort_by(f64::total_cmp);
        for (&i, v) in g.iter().zip(vals) {
            out[i] = v;
        }
    }
    out
}

fn symmetrized(p: &[f64], groups: &[Vec<usize>]) -> Vec<f64> {
    let mut out = p.to_vec();
    for g in groups {
        let mean = g.iter().map(|&i| p[i]).sum::<f64>() / g.len() as f64;
        for &i in g {
            out[i] = mean;
        }
    }
    out
}

struct Candidate {
    p: Vec<f64>,
    ee: f64,
    feasible: bool,
    violation: f64,
}

/// Maximize EE over per-band D2D powers. Deterministic for fixed options.
pub fn optimize_ee(cfg: &ScenarioConfig, options: &OptimizerOptions) -> Result<OptimizationOutcome> {
    cfg.ensure_valid()?;
    if options.multistarts < 1 {
        return Err(Error::InvalidArgument("need at least one start point".into()));
    }
    let m = cfg.num_bands;
    let brackets = (0..m)
        .map(|i| qos_bracket(cfg, i, &options.analytic))
        .collect::<Result<Vec<_>>>()?;
    let bracket_feasible =
        brackets.iter().all(|b| b.feasible) && brackets.iter().map(|b| b.lo).sum::<f64>() <= cfg.p_d_total;
    let problem = Problem {
        cfg,
        options,
        upper: cfg.p_d_max.clone(),
        zeros: vec![0.0; m],
        brackets: brackets.clone(),
        bracket_feasible,
    };

    let starts: Vec<Vec<f64>> = halton_points(options.multistarts, m, options.seed)?
        .into_iter()
        .map(|u| {
            let p: Vec<f64> = if bracket_feasible {
                u.iter().zip(&brackets).map(|(t, b)| b.lo + t * (b.hi - b.lo)).collect()
            } else {
                u.iter().zip(&problem.upper).map(|(t, hi)| t * hi).collect()
            };
            problem.repair(&p)
        })
        .collect();

    let even = problem.repair(PowerVector::even_split(cfg).as_slice());
    let (even_ee, _) = problem.evaluate(&even)?;
    let ee_scale = if even_ee > 0.0 { even_ee } else { 1.0 };

    struct Run {
        record: StartRecord,
        candidates: Vec<Candidate>,
        iterations: usize,
        evaluations: usize,
    }

    let runs: Vec<Run> = starts
        .par_iter()
        .map(|start| -> Result<Run> {
            let mut evaluations = 0usize;
            let mut iterations = 0usize;
            let mut z = problem.to_normalized(start);
            let mut mu = options.initial_penalty;
            for outer in 0..options.outer_iterations {
                let mut f = |x: &[f64]| {
                    evaluations += 1;
                    problem.penalized(x, mu, ee_scale)
                };
                let step = 0.1 * 0.5f64.powi(outer as i32);
                let (zn, _, it) = nelder_mead(
                    &mut f,
                    &z,
                    step,
                    options.simplex_tolerance,
                    options.max_inner_iterations,
                )?;
                iterations += it;
                z = zn;
                mu *= options.penalty_growth;
            }
            let end = problem.repair(&problem.project_box_budget(&problem.to_power(&z)));
            let mut candidates = Vec::with_capacity(2);
            let assess = |p: Vec<f64>| -> Result<Candidate> {
                let (ee, _) = problem.evaluate(&p)?;
                let report = check_feasibility(cfg, &PowerVector::new(p.clone()), &options.analytic)?;
                Ok(Candidate {
                    feasible: report.is_feasible(),
                    violation: report.violation(),
                    p,
                    ee,
                })
            };
            let end_c = assess(end)?;
            let start_c = assess(start.clone())?;
            let record = StartRecord {
                start: start.clone(),
                start_ee: start_c.feasible.then_some(start_c.ee),
                end: end_c.p.clone(),
                end_ee: end_c.ee,
                end_feasible: end_c.feasible,
            };
            candidates.push(end_c);
            candidates.push(start_c);
            Ok(Run {
                record,
                candidates,
                iterations,
                evaluations,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let groups: Vec<Vec<usize>> = cfg
        .identical_band_groups()
        .into_iter()
        .filter(|g| g.len() > 1)
        .collect();

    let mut pool: Vec<Candidate> = Vec::new();
    let mut trace = SolverTrace {
        iterations: 0,
        restarts: runs.len(),
        evaluations: 0,
        brackets,
        starts: Vec::with_capacity(runs.len()),
    };
    for run in runs {
        trace.iterations += run.iterations;
        trace.evaluations += run.evaluations;
        trace.starts.push(run.record);
        pool.extend(run.candidates);
    }

    let any_feasible = pool.iter().any(|c| c.feasible);
    if any_feasible {
        pool.retain(|c| c.feasible);
        // symmetric variants of the best points compete as well
        if !groups.is_empty() {
            let mut extra = Vec::new();
            for c in &pool {
                let s = problem.repair(&symmetrized(&c.p, &groups));
                let (ee, _) = problem.evaluate(&s)?;
                let report = check_feasibility(cfg, &PowerVector::new(s.clone()), &options.analytic)?;
                if report.is_feasible() {
                    extra.push(Candidate {
                        p: s,
                        ee,
                        feasible: true,
                        violation: 0.0,
                    });
                }
            }
            pool.extend(extra);
        }
        let best_ee = pool.iter().map(|c| c.ee).fold(f64::NEG_INFINITY, f64::max);
        let tie = 1e-12 * best_ee.abs().max(f64::MIN_POSITIVE);
        pool.retain(|c| c.ee >= best_ee - tie);
        // equal-EE candidates: prefer symmetric splits, then the smallest vector
        for c in &mut pool {
            let sym = symmetrized(&c.p, &groups);
            if rounded(&sym) == rounded(&c.p) {
                c.p = sym;
            } else {
                c.p = canonical_order(&c.p, &groups);
            }
        }
        pool.sort_by_key(|c| rounded(&c.p));
    } else {
        pool.sort_by(|a, b| a.violation.total_cmp(&b.violation).then(b.ee.total_cmp(&a.ee)));
    }
    let best = pool.swap_remove(0);
    let p_opt = PowerVector::new(best.p);
    let constraint_slacks = check_feasibility(cfg, &p_opt, &options.analytic)?;
    let ee_opt = match evaluate_energy_efficiency(cfg, &p_opt, &options.analytic) {
        Ok(e) => e.ee,
        Err(Error::ZeroPowerConsumption) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(OptimizationOutcome {
        feasible: constraint_slacks.is_feasible(),
        p_opt,
        ee_opt,
        constraint_slacks,
        solver_trace: trace,
    })
}

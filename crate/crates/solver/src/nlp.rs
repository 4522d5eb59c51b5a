//! Primal-dual interior-point method for smooth nonlinear programs.
//!
//! Problems are stated as
//!
//! ```text
//!   min f(x)   s.t.  c_E(x) = 0,  c_I(x) <= 0,  xl <= x <= xu
//! ```
//!
//! Inequalities get slacks (`c_I(x) + s = 0`, `s >= 0`) and the bound
//! constraints a log barrier. The barrier parameter follows a monotone
//! schedule (x0.2 once each subproblem is solved loosely), steps respect
//! a 0.995 fraction-to-boundary rule, and an l1-penalty backtracking
//! line search globalizes the Newton step with primal regularization on
//! failure. For convex problems the converged point is a global
//! optimum.

use crate::linalg::{solve_sparse, Triplets};
use serde::Serialize;

/// Callbacks describing one NLP. Derivative sparsity patterns must stay
/// constant across evaluations. Hessian triplets describe the full
/// (symmetric) matrix; duplicate entries are summed.
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    /// `(lower, upper)`; use infinities for absent bounds. A pair with
    /// `upper - lower <= 1e-10` pins the variable.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn initial_point(&self) -> Vec<f64>;
    fn num_eq(&self) -> usize;
    fn num_ineq(&self) -> usize;
    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Evaluate `c_E` into `eq` and `c_I` into `ineq`.
    fn constraints(&self, x: &[f64], eq: &mut [f64], ineq: &mut [f64]);
    /// Jacobians of (eq, ineq) as `m x n` triplets.
    fn jacobians(&self, x: &[f64]) -> (Triplets, Triplets);
    /// Hessian of `obj_weight * f + lam_eq . c_E + lam_ineq . c_I`.
    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_weight: f64,
        lam_eq: &[f64],
        lam_ineq: &[f64],
    ) -> Triplets;
    /// Whether the problem is convex (objective and inequalities convex,
    /// equalities affine); a converged solve is then a global optimum.
    fn is_convex(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

/// Result of one interior-point solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    pub lam_eq: Vec<f64>,
    pub lam_ineq: Vec<f64>,
    /// max |c_E| at the final point
    pub eq_residual_inf: f64,
    /// max(0, c_I) at the final point
    pub ineq_violation_inf: f64,
    pub dual_residual_inf: f64,
    pub iterations: usize,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Scaled KKT residual tolerance.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial barrier parameter.
    pub mu_init: f64,
    /// Monotone barrier reduction factor.
    pub mu_shrink: f64,
    /// Fraction-to-boundary factor.
    pub tau: f64,
    /// Matrices below this size solve densely.
    pub dense_cutoff: usize,
    /// Print an iteration log to stderr.
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-8,
            max_iterations: 200,
            mu_init: 0.1,
            mu_shrink: 0.2,
            tau: 0.995,
            dense_cutoff: 120,
            verbose: false,
        }
    }
}

const FIXED_VAR_GAP: f64 = 1e-10;
const SIGMA_CLIP: f64 = 1e10;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 25;
const MAX_REGULARIZATIONS: usize = 14;

/// Solve an NLP with the interior-point method.
pub fn solve_nlp(problem: &dyn NlpProblem, options: &SolveOptions) -> SolveOutcome {
    Ipm::new(problem, *options).run()
}

struct Ipm<'a> {
    p: &'a dyn NlpProblem,
    opt: SolveOptions,
    n: usize,   // original variables
    mi: usize,  // inequalities
    me: usize,  // equalities
    nz: usize,  // n + mi
    m: usize,   // me + mi + fixed
    lo: Vec<f64>,
    hi: Vec<f64>,
    fixed: Vec<(usize, f64)>,
}

struct Eval {
    f: f64,
    grad: Vec<f64>,   // length nz (zeros on slacks)
    c: Vec<f64>,      // length m
    jac: Triplets,    // m x nz
    eq_raw_inf: f64,
    ineq_raw_inf: f64,
}

impl<'a> Ipm<'a> {
    fn new(p: &'a dyn NlpProblem, opt: SolveOptions) -> Self {
        let n = p.num_vars();
        let mi = p.num_ineq();
        let me = p.num_eq();
        let (mut lo, mut hi) = p.bounds();
        // slacks are variables too
        lo.extend(std::iter::repeat_n(0.0, mi));
        hi.extend(std::iter::repeat_n(f64::INFINITY, mi));
        // pinned variables become equality rows with open bounds
        let mut fixed = Vec::new();
        for i in 0..n {
            if hi[i] - lo[i] <= FIXED_VAR_GAP {
                fixed.push((i, 0.5 * (lo[i] + hi[i])));
                lo[i] = f64::NEG_INFINITY;
                hi[i] = f64::INFINITY;
            }
        }
        let nz = n + mi;
        let m = me + mi + fixed.len();
        Ipm { p, opt, n, mi, me, nz, m, lo, hi, fixed }
    }

    fn eval(&self, z: &[f64]) -> Eval {
        let x = &z[..self.n];
        let s = &z[self.n..];
        let f = self.p.objective(x);
        let mut grad = vec![0.0; self.nz];
        self.p.gradient(x, &mut grad[..self.n]);
        let mut ceq = vec![0.0; self.me];
        let mut cineq = vec![0.0; self.mi];
        self.p.constraints(x, &mut ceq, &mut cineq);
        let eq_raw_inf = ceq.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let ineq_raw_inf = cineq.iter().fold(0.0f64, |a, v| a.max(*v));
        let (jeq, jineq) = self.p.jacobians(x);
        debug_assert_eq!(jeq.rows, self.me);
        debug_assert_eq!(jineq.rows, self.mi);
        let mut c = Vec::with_capacity(self.m);
        c.extend_from_slice(&ceq);
        for (k, &sv) in s.iter().enumerate() {
            c.push(cineq[k] + sv);
        }
        for &(i, val) in &self.fixed {
            c.push(z[i] - val);
        }
        let mut jac = Triplets::new(self.m, self.nz);
        for &(r, col, v) in jeq.iter() {
            jac.push(r, col, v);
        }
        for &(r, col, v) in jineq.iter() {
            jac.push(self.me + r, col, v);
        }
        for k in 0..self.mi {
            jac.push(self.me + k, self.n + k, 1.0);
        }
        for (fi, &(i, _)) in self.fixed.iter().enumerate() {
            jac.push(self.me + self.mi + fi, i, 1.0);
        }
        Eval { f, grad, c, jac, eq_raw_inf, ineq_raw_inf }
    }

    fn hessian(&self, z: &[f64], lam: &[f64]) -> Triplets {
        let lam_eq = &lam[..self.me];
        let lam_ineq = &lam[self.me..self.me + self.mi];
        let h = self.p.lagrangian_hessian(&z[..self.n], 1.0, lam_eq, lam_ineq);
        debug_assert_eq!((h.rows, h.cols), (self.n, self.n));
        let mut out = Triplets::new(self.nz, self.nz);
        for &(i, j, v) in h.iter() {
            out.push(i, j, v);
        }
        out
    }

    /// Barrier objective over explicitly tracked bound distances.
    fn barrier_value(&self, dlo: &[f64], dhi: &[f64], f: f64, mu: f64) -> f64 {
        let mut phi = f;
        for i in 0..self.nz {
            if self.lo[i].is_finite() {
                phi -= mu * dlo[i].ln();
            }
            if self.hi[i].is_finite() {
                phi -= mu * dhi[i].ln();
            }
        }
        phi
    }

    fn run(&mut self) -> SolveOutcome {
        let opt = self.opt;
        // start strictly inside the bounds
        let mut z = vec![0.0; self.nz];
        let x0 = self.p.initial_point();
        z[..self.n].copy_from_slice(&x0);
        {
            let mut ceq = vec![0.0; self.me];
            let mut cineq = vec![0.0; self.mi];
            self.p.constraints(&x0, &mut ceq, &mut cineq);
            for k in 0..self.mi {
                z[self.n + k] = (-cineq[k]).max(1e-2);
            }
        }
        for i in 0..self.nz {
            let (lo, hi) = (self.lo[i], self.hi[i]);
            if lo.is_finite() && hi.is_finite() {
                let pad = (0.01 * (hi - lo)).min(0.01 * (1.0 + lo.abs()));
                z[i] = z[i].clamp(lo + pad, hi - pad);
            } else if lo.is_finite() {
                z[i] = z[i].max(lo + 0.01 * (1.0 + lo.abs()));
            } else if hi.is_finite() {
                z[i] = z[i].min(hi - 0.01 * (1.0 + hi.abs()));
            }
        }

        // Bound distances are explicit state, updated by displacements
        // rather than recomputed from z: near-active bounds sit many
        // orders of magnitude below |z|, where recomputing hi - z would
        // drown the barrier terms in cancellation noise.
        let mut dlo = vec![f64::INFINITY; self.nz];
        let mut dhi = vec![f64::INFINITY; self.nz];
        for i in 0..self.nz {
            if self.lo[i].is_finite() {
                dlo[i] = z[i] - self.lo[i];
            }
            if self.hi[i].is_finite() {
                dhi[i] = self.hi[i] - z[i];
            }
        }

        let mut mu = opt.mu_init;
        let mut lam = vec![0.0; self.m];
        let mut zl = vec![0.0; self.nz];
        let mut zu = vec![0.0; self.nz];
        for i in 0..self.nz {
            if self.lo[i].is_finite() {
                zl[i] = mu / dlo[i];
            }
            if self.hi[i].is_finite() {
                zu[i] = mu / dhi[i];
            }
        }

        let mut ev = self.eval(&z);
        let mut delta = 0.0f64; // primal regularization
        let mut iterations = 0;
        let mut last_alpha = (0.0f64, 0.0f64);
        let finish = |status: SolveStatus,
                      z: &[f64],
                      lam: &[f64],
                      ev: &Eval,
                      dual_inf: f64,
                      iterations: usize,
                      mu: f64| SolveOutcome {
            status,
            objective: ev.f,
            x: z[..self.n].to_vec(),
            lam_eq: lam[..self.me].to_vec(),
            lam_ineq: lam[self.me..self.me + self.mi].to_vec(),
            eq_residual_inf: ev.eq_raw_inf,
            ineq_violation_inf: ev.ineq_raw_inf,
            dual_residual_inf: dual_inf,
            iterations,
            mu,
        };

        let mut dual_resets = 0;
        loop {
            // runaway multipliers mean the dual iteration left the
            // region where the Newton model is useful: re-center once
            // rather than diverging
            let lam_inf = lam.iter().fold(0.0f64, |a, l: &f64| a.max(l.abs()));
            if lam_inf > 1e9 && dual_resets < 3 {
                dual_resets += 1;
                lam.fill(0.0);
                for i in 0..self.nz {
                    if self.lo[i].is_finite() {
                        zl[i] = mu / dlo[i];
                    }
                    if self.hi[i].is_finite() {
                        zu[i] = mu / dhi[i];
                    }
                }
            }
            // KKT residuals
            let jt_lam = ev.jac.to_csc().mul_transpose_vec(&lam);
            let mut dual = vec![0.0; self.nz];
            for i in 0..self.nz {
                dual[i] = ev.grad[i] + jt_lam[i] - zl[i] + zu[i];
            }
            let dual_inf = dual.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let prim_inf = ev.c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let (mut comp0, mut comp_mu) = (0.0f64, 0.0f64);
            for i in 0..self.nz {
                if self.lo[i].is_finite() {
                    let c = dlo[i] * zl[i];
                    comp0 = comp0.max(c.abs());
                    comp_mu = comp_mu.max((c - mu).abs());
                }
                if self.hi[i].is_finite() {
                    let c = dhi[i] * zu[i];
                    comp0 = comp0.max(c.abs());
                    comp_mu = comp_mu.max((c - mu).abs());
                }
            }
            // scaling guards against runaway multipliers
            let s_max = 100.0f64;
            let lam_norm: f64 = lam.iter().map(|v| v.abs()).sum::<f64>()
                + zl.iter().map(|v| v.abs()).sum::<f64>()
                + zu.iter().map(|v| v.abs()).sum::<f64>();
            let denom = (self.m + 2 * self.nz).max(1) as f64;
            let s_d = (lam_norm / denom).max(s_max) / s_max;
            let err_0 = (dual_inf / s_d).max(prim_inf).max(comp0 / s_d);
            let err_mu = (dual_inf / s_d).max(prim_inf).max(comp_mu / s_d);

            if opt.verbose {
                eprintln!(
                    "ipm iter {iterations:3} f {:+.6e} prim {:.2e} dual {:.2e} compl {:.2e} mu {:.1e} delta {:.1e} a {:.2e}/{:.2e}",
                    ev.f, prim_inf, dual_inf, comp0, mu, delta, last_alpha.0, last_alpha.1
                );
            }
            if err_0 <= opt.tolerance {
                return finish(SolveStatus::Optimal, &z, &lam, &ev, dual_inf, iterations, mu);
            }
            if iterations >= opt.max_iterations {
                return finish(
                    SolveStatus::IterationLimit,
                    &z,
                    &lam,
                    &ev,
                    dual_inf,
                    iterations,
                    mu,
                );
            }
            // barrier subproblem solved loosely: shrink mu
            if err_mu <= 10.0 * mu {
                mu = (mu * opt.mu_shrink).max(opt.tolerance / 100.0);
            }
            iterations += 1;

            // condensed primal-dual system
            let mut sigma = vec![0.0; self.nz];
            for i in 0..self.nz {
                if self.lo[i].is_finite() {
                    sigma[i] += zl[i] / dlo[i];
                }
                if self.hi[i].is_finite() {
                    sigma[i] += zu[i] / dhi[i];
                }
            }
            let mut rtilde = vec![0.0; self.nz];
            for i in 0..self.nz {
                let mut v = ev.grad[i] + jt_lam[i];
                if self.lo[i].is_finite() {
                    v -= mu / dlo[i];
                }
                if self.hi[i].is_finite() {
                    v += mu / dhi[i];
                }
                rtilde[i] = v;
            }
            let hess = self.hessian(&z, &lam);
            let dim = self.nz + self.m;

            // Regularization escalates per iteration: start unregularized,
            // add delta to the Hessian block whenever the direction fails
            // its checks or the line search cannot make real progress.
            let mut delta_try = 0.0f64;
            let mut accepted: Option<Accepted> = None;
            for attempt in 0..=MAX_REGULARIZATIONS {
                if attempt == 1 {
                    delta_try = (0.1 * delta).max(1e-8);
                } else if attempt > 1 {
                    delta_try *= 100.0;
                }
                let gamma: f64 = if delta_try > 0.0 { 1e-10 } else { 0.0 };
                let mut kkt = Triplets::new(dim, dim);
                for &(i, j, v) in hess.iter() {
                    kkt.push(i, j, v);
                }
                for i in 0..self.nz {
                    kkt.push(i, i, sigma[i] + delta_try);
                }
                for &(r, c, v) in ev.jac.iter() {
                    kkt.push(self.nz + r, c, v);
                    kkt.push(c, self.nz + r, v);
                }
                if gamma > 0.0 {
                    for r in 0..self.m {
                        kkt.push(self.nz + r, self.nz + r, -gamma);
                    }
                }
                let mut rhs = vec![0.0; dim];
                for i in 0..self.nz {
                    rhs[i] = -rtilde[i];
                }
                for r in 0..self.m {
                    rhs[self.nz + r] = -ev.c[r];
                }
                let kkt = kkt.to_csc();
                let Some(sol) = solve_kkt(&kkt, &rhs, opt.dense_cutoff) else {
                    continue;
                };
                let dz = sol[..self.nz].to_vec();
                let dlam = sol[self.nz..].to_vec();

                // inertia surrogate: positive curvature along the step
                let dz_sq: f64 = dz.iter().map(|d| d * d).sum();
                let mut curv = delta_try * dz_sq;
                for i in 0..self.nz {
                    curv += sigma[i] * dz[i] * dz[i];
                }
                for &(i, j, v) in hess.iter() {
                    curv += v * dz[i] * dz[j];
                }
                if curv < 1e-10 * dz_sq && dz_sq > 1e-24 {
                    continue;
                }
                // descent for the l1 merit
                let cnorm1: f64 = ev.c.iter().map(|v| v.abs()).sum();
                // penalty weight follows the current multiplier estimate
                // rather than ratcheting on transient excursions
                let lam_next_inf =
                    lam.iter().zip(&dlam).fold(0.0f64, |a, (l, d)| a.max((l + d).abs()));
                let rho_try = 2.0 * lam_next_inf + 1.0;
                let dphi = rtilde.iter().zip(&dz).map(|(r, d)| r * d).sum::<f64>()
                    + lam.iter().zip(&ev.c).map(|(l, c)| l * c).sum::<f64>()
                    - rho_try * cnorm1;
                if dphi > 1e-12 * (1.0 + ev.f.abs()) {
                    continue;
                }

                // fraction-to-boundary limit
                let mut alpha_max = 1.0f64;
                for i in 0..self.nz {
                    if self.lo[i].is_finite() && dz[i] < 0.0 {
                        alpha_max = alpha_max.min(opt.tau * dlo[i] / -dz[i]);
                    }
                    if self.hi[i].is_finite() && dz[i] > 0.0 {
                        alpha_max = alpha_max.min(opt.tau * dhi[i] / dz[i]);
                    }
                }
                // backtracking Armijo line search on the l1 merit; every
                // candidate is described by its displacement from z so the
                // tracked bound distances stay cancellation-free
                let phi0 = self.barrier_value(&dlo, &dhi, ev.f, mu) + rho_try * cnorm1;
                let slack = 1e-14 * (1.0 + phi0.abs());
                let merit = |evt: &Eval, w: &[f64]| -> f64 {
                    let ct: f64 = evt.c.iter().map(|v| v.abs()).sum();
                    let dlo_t: Vec<f64> = dlo.iter().zip(w).map(|(d, wi)| d + wi).collect();
                    let dhi_t: Vec<f64> = dhi.iter().zip(w).map(|(d, wi)| d - wi).collect();
                    self.barrier_value(&dlo_t, &dhi_t, evt.f, mu) + rho_try * ct
                };
                let mut alpha = alpha_max;
                let mut found: Option<(Vec<f64>, Eval, f64)> = None;
                let mut tried_correction = false;
                for _ in 0..MAX_BACKTRACKS {
                    let w: Vec<f64> = dz.iter().map(|d| alpha * d).collect();
                    let zt: Vec<f64> = z.iter().zip(&w).map(|(zi, wi)| zi + wi).collect();
                    let evt = self.eval(&zt);
                    let phit = merit(&evt, &w);
                    if phit.is_finite() && phit <= phi0 + ARMIJO * alpha * dphi.min(0.0) + slack
                    {
                        found = Some((w, evt, alpha));
                        break;
                    }
                    // Second-order correction: quadratic constraint growth
                    // can block an otherwise good step (Maratos effect).
                    // Re-target the constraints by solving the same KKT
                    // system against the residual at the trial point.
                    if !tried_correction {
                        tried_correction = true;
                        let mut wc = w.clone();
                        let mut evc = evt;
                        let mut ok = false;
                        for _round in 0..3 {
                            let mut rhs2 = vec![0.0; dim];
                            for r in 0..self.m {
                                rhs2[self.nz + r] = -evc.c[r];
                            }
                            let Some(sol2) = solve_kkt(&kkt, &rhs2, opt.dense_cutoff) else {
                                break;
                            };
                            // keep the corrected point interior
                            let mut acor = 1.0f64;
                            for i in 0..self.nz {
                                let d = sol2[i];
                                if self.lo[i].is_finite() && d < 0.0 {
                                    acor = acor.min(opt.tau * (dlo[i] + wc[i]) / -d);
                                }
                                if self.hi[i].is_finite() && d > 0.0 {
                                    acor = acor.min(opt.tau * (dhi[i] - wc[i]) / d);
                                }
                            }
                            if acor < 0.1 {
                                break;
                            }
                            for i in 0..self.nz {
                                wc[i] += acor * sol2[i];
                            }
                            let zc: Vec<f64> =
                                z.iter().zip(&wc).map(|(zi, wi)| zi + wi).collect();
                            evc = self.eval(&zc);
                            let phic = merit(&evc, &wc);
                            if phic.is_finite()
                                && phic <= phi0 + ARMIJO * alpha * dphi.min(0.0) + slack
                            {
                                ok = true;
                                break;
                            }
                        }
                        if ok {
                            found = Some((wc, evc, alpha));
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                match found {
                    // a step that only survives heavy backtracking points at
                    // a bad direction, not a short boundary: regularize more
                    Some((w, evt, alpha)) if alpha >= 1e-3 * alpha_max => {
                        delta = delta_try;
                        accepted = Some(Accepted { w, evt, alpha, alpha_max, dlam });
                        break;
                    }
                    _ => continue,
                }
            }
            let Some(Accepted { w, evt, alpha, alpha_max, dlam }) = accepted else {
                return finish(
                    SolveStatus::NumericalFailure,
                    &z,
                    &lam,
                    &ev,
                    dual_inf,
                    iterations,
                    mu,
                );
            };
            let _ = alpha_max;

            // bound-dual Newton steps for the realized displacement,
            // with their own fraction-to-boundary limit
            let mut dzl = vec![0.0; self.nz];
            let mut dzu = vec![0.0; self.nz];
            for i in 0..self.nz {
                if self.lo[i].is_finite() {
                    dzl[i] = mu / dlo[i] - zl[i] - zl[i] / dlo[i] * w[i];
                }
                if self.hi[i].is_finite() {
                    dzu[i] = mu / dhi[i] - zu[i] + zu[i] / dhi[i] * w[i];
                }
            }
            let mut alpha_dual = 1.0f64;
            for i in 0..self.nz {
                if dzl[i] < 0.0 && zl[i] > 0.0 {
                    alpha_dual = alpha_dual.min(opt.tau * zl[i] / -dzl[i]);
                }
                if dzu[i] < 0.0 && zu[i] > 0.0 {
                    alpha_dual = alpha_dual.min(opt.tau * zu[i] / -dzu[i]);
                }
            }
            last_alpha = (alpha, alpha_dual);
            for i in 0..self.nz {
                z[i] += w[i];
                dlo[i] += w[i];
                dhi[i] -= w[i];
            }
            ev = evt;
            for i in 0..self.m {
                lam[i] += alpha * dlam[i];
            }
            for i in 0..self.nz {
                zl[i] = (zl[i] + alpha_dual * dzl[i]).max(0.0);
                zu[i] = (zu[i] + alpha_dual * dzu[i]).max(0.0);
                // keep duals compatible with the barrier (safeguard)
                if self.lo[i].is_finite() {
                    zl[i] = zl[i].clamp(mu / (SIGMA_CLIP * dlo[i]), mu * SIGMA_CLIP / dlo[i]);
                }
                if self.hi[i].is_finite() {
                    zu[i] = zu[i].clamp(mu / (SIGMA_CLIP * dhi[i]), mu * SIGMA_CLIP / dhi[i]);
                }
            }
        }
    }
}


/// Solve the (symmetric, badly scaled) KKT system with symmetric Jacobi
/// equilibration and one round of iterative refinement. The barrier
/// diagonal spans many orders of magnitude near convergence; plain LU
/// loses the small-block accuracy without the rescaling.
fn solve_kkt(kkt: &crate::linalg::CscMatrix, rhs: &[f64], dense_cutoff: usize) -> Option<Vec<f64>> {
    let n = kkt.rows;
    let mut diag = vec![0.0f64; n];
    for c in 0..n {
        for k in kkt.col_ptr[c]..kkt.col_ptr[c + 1] {
            let r = kkt.row_idx[k];
            let v = kkt.values[k].abs();
            if v > diag[r] {
                diag[r] = v;
            }
            if v > diag[c] {
                diag[c] = v;
            }
        }
    }
    let scale: Vec<f64> =
        diag.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 }).collect();
    let mut scaled = kkt.clone();
    for c in 0..n {
        for k in scaled.col_ptr[c]..scaled.col_ptr[c + 1] {
            let r = scaled.row_idx[k];
            scaled.values[k] *= scale[r] * scale[c];
        }
    }
    let rhs_s: Vec<f64> = rhs.iter().zip(&scale).map(|(b, s)| b * s).collect();
    let mut y = solve_sparse(&scaled, &rhs_s, dense_cutoff).ok()?;
    // one refinement pass in the scaled system
    let resid: Vec<f64> = scaled
        .mul_vec(&y)
        .iter()
        .zip(&rhs_s)
        .map(|(ax, b)| b - ax)
        .collect();
    if let Ok(corr) = solve_sparse(&scaled, &resid, dense_cutoff) {
        for (yi, ci) in y.iter_mut().zip(&corr) {
            *yi += ci;
        }
    }
    let x: Vec<f64> = y.iter().zip(&scale).map(|(yi, s)| yi * s).collect();
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// One accepted interior-point step, described by its displacement.
struct Accepted {
    w: Vec<f64>,
    evt: Eval,
    alpha: f64,
    alpha_max: f64,
    dlam: Vec<f64>,
}

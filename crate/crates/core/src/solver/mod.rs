//! First-order operator-splitting QP solver.
//!
//! Solves
//!
//! ```text
//! minimize    ½ xᵀ P x + qᵀ x
//! subject to  l ≤ A x ≤ u
//! ```
//!
//! with an ADMM iteration on the equilibrated problem. Each iteration solves a
//! quasi-definite KKT system with a cached sparse `L D Lᵀ` factorization,
//! which is rebuilt only when the adaptive step size changes. Converged
//! iterates can be polished by solving the equality-constrained problem on the
//! detected active set.

pub mod csc;
pub mod ldl;
mod polish;
mod scaling;

use serde::{Deserialize, Serialize};

pub use csc::CscMatrix;
use csc::{dot, inf_norm};
use ldl::LdlFactor;
use scaling::Scaling;

use crate::error::{Error, Result};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
/// Tighter-tolerance continuations tried when polishing fails.
const POLISH_RETRIES: usize = 2;
/// Bounds at or beyond this magnitude are treated as infinite.
pub const INFINITY_BOUND: f64 = 1e20;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Upper triangle of the symmetric positive semidefinite cost matrix.
    pub p: CscMatrix,
    pub q: Vec<f64>,
    pub a: CscMatrix,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl QpProblem {
    pub fn new(p: CscMatrix, q: Vec<f64>, a: CscMatrix, l: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        let n = q.len();
        if p.nrows != n || p.ncols != n {
            return Err(Error::Domain(format!("P is {}x{}, expected {n}x{n}", p.nrows, p.ncols)));
        }
        if a.ncols != n || l.len() != a.nrows || u.len() != a.nrows {
            return Err(Error::Domain("constraint dimensions do not match".into()));
        }
        if p.triplets().any(|(r, c, _)| r > c) {
            return Err(Error::Domain("P must be given as its upper triangle".into()));
        }
        for (i, (&lo, &hi)) in l.iter().zip(&u).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Domain(format!("row {i}: bounds [{lo}, {hi}] are invalid")));
            }
        }
        let clamp = |v: f64| {
            if v >= INFINITY_BOUND {
                f64::INFINITY
            } else if v <= -INFINITY_BOUND {
                f64::NEG_INFINITY
            } else {
                v
            }
        };
        let l = l.into_iter().map(clamp).collect();
        let u = u.into_iter().map(clamp).collect();
        Ok(QpProblem { p, q, a, l, u })
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; x.len()];
        self.p.sym_upper_mul_vec(x, &mut px);
        0.5 * dot(x, &px) + dot(&self.q, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_primal_infeasible: f64,
    pub eps_dual_infeasible: f64,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation parameter.
    pub alpha: f64,
    pub adaptive_rho: bool,
    pub adaptive_rho_interval: usize,
    pub adaptive_rho_tolerance: f64,
    pub scaling_iterations: usize,
    pub check_termination: usize,
    pub polish: bool,
    pub polish_refine_iterations: usize,
    pub polish_delta: f64,
    /// Reserved; the iteration is deterministic and draws no random numbers.
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 200_000,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_primal_infeasible: 1e-5,
            eps_dual_infeasible: 1e-5,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            adaptive_rho_interval: 50,
            adaptive_rho_tolerance: 5.0,
            scaling_iterations: 10,
            check_termination: 10,
            polish: true,
            polish_refine_iterations: 3,
            polish_delta: 1e-6,
            seed: 0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("solver settings: {what}")));
        if !(self.eps_abs > 0.0 && self.eps_rel >= 0.0) {
            return bad("eps_abs must be positive and eps_rel non-negative");
        }
        if !(self.eps_primal_infeasible > 0.0 && self.eps_dual_infeasible > 0.0) {
            return bad("infeasibility tolerances must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return bad("alpha must lie in (0, 2)");
        }
        if !(self.rho > 0.0 && self.sigma > 0.0) {
            return bad("rho and sigma must be positive");
        }
        if self.max_iterations == 0 || self.check_termination == 0 || self.adaptive_rho_interval == 0 {
            return bad("iteration counts must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Solved,
    SolvedInaccurate,
    PrimalInfeasible,
    DualInfeasible,
    IterationLimit,
}

impl SolverStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolverStatus::Solved | SolverStatus::SolvedInaccurate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub status: SolverStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub polished: bool,
    pub rho_updates: usize,
}

/// One line of the optional iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: f64,
}

/// Primal, dual and complementarity residuals of a candidate `(x, y)`,
/// computed directly from the problem data.
///
/// `y_i > 0` pairs with the upper bound of row `i` and `y_i < 0` with the lower
/// bound. A multiplier pointing at an infinite bound counts fully toward the
/// complementarity residual.
pub fn kkt_residuals(problem: &QpProblem, x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = problem.num_vars();
    let m = problem.num_rows();
    let mut ax = vec![0.0; m];
    problem.a.mul_vec(x, &mut ax);
    let r_prim = (0..m).map(|i| (problem.l[i] - ax[i]).max(ax[i] - problem.u[i]).max(0.0)).fold(0.0, f64::max);

    let mut px = vec![0.0; n];
    problem.p.sym_upper_mul_vec(x, &mut px);
    let mut aty = vec![0.0; n];
    problem.a.tr_mul_vec(y, &mut aty);
    let r_dual = (0..n).map(|j| (px[j] + problem.q[j] + aty[j]).abs()).fold(0.0, f64::max);

    let r_comp = (0..m)
        .map(|i| {
            let yi = y[i];
            if yi > 0.0 {
                if problem.u[i].is_finite() {
                    yi * (problem.u[i] - ax[i]).abs()
                } else {
                    yi
                }
            } else if yi < 0.0 {
                if problem.l[i].is_finite() {
                    -yi * (ax[i] - problem.l[i]).abs()
                } else {
                    -yi
                }
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    (r_prim, r_dual, r_comp)
}

pub fn solve_qp(problem: &QpProblem, settings: &SolverSettings) -> Result<SolverResult> {
    solve_qp_with_log(problem, settings, &mut |_| {})
}

/// Like [`solve_qp`], calling `log` at every termination check.
pub fn solve_qp_with_log(
    problem: &QpProblem,
    settings: &SolverSettings,
    log: &mut dyn FnMut(&IterationRecord),
) -> Result<SolverResult> {
    settings.validate()?;
    let mut ws = Workspace::new(problem, settings)?;
    Ok(ws.run(log))
}

/// Unscaled residual norms and the quantities used to build relative tolerances.
#[derive(Debug, Clone, Copy)]
struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
}

impl Residuals {
    fn converged(&self, factor: f64) -> bool {
        self.prim <= factor * self.eps_prim && self.dual <= factor * self.eps_dual
    }
}

struct Workspace<'a> {
    original: &'a QpProblem,
    settings: &'a SolverSettings,
    n: usize,
    m: usize,
    p: CscMatrix,
    q: Vec<f64>,
    a: CscMatrix,
    at: CscMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    scaling: Scaling,
    rho: f64,
    rho_vec: Vec<f64>,
    kkt: LdlFactor,
    /// value index of each `-1/rho_i` diagonal entry in the KKT upper triangle
    rho_slots: Vec<usize>,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    dx: Vec<f64>,
    dy: Vec<f64>,
    rho_updates: usize,
}

fn is_equality(l: f64, u: f64) -> bool {
    l.is_finite() && u.is_finite() && (u - l).abs() <= 1e-10 * (1.0 + l.abs())
}

fn row_rho(rho: f64, l: f64, u: f64) -> f64 {
    if !l.is_finite() && !u.is_finite() {
        RHO_MIN
    } else if is_equality(l, u) {
        (RHO_EQ_FACTOR * rho).min(RHO_MAX)
    } else {
        rho
    }
}

/// Upper triangle of `[P + σI, Aᵀ; A, -diag(1/ρ)]` and the value indices of the
/// `-1/ρ` diagonal.
fn assemble_kkt(p: &CscMatrix, a: &CscMatrix, sigma: f64, rho_vec: &[f64]) -> (CscMatrix, Vec<usize>) {
    let n = p.ncols;
    let m = a.nrows;
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(p.nnz() + a.nnz() + n + m);
    t.extend(p.triplets());
    t.extend((0..n).map(|j| (j, j, sigma)));
    t.extend(a.triplets().map(|(r, c, v)| (c, n + r, v)));
    t.extend((0..m).map(|i| (n + i, n + i, -1.0 / rho_vec[i])));
    let k = CscMatrix::from_triplets(n + m, n + m, t);
    // the diagonal is the last stored entry of an upper-triangular column
    let slots = (0..m).map(|i| k.col_ptr[n + i + 1] - 1).collect();
    (k, slots)
}

impl<'a> Workspace<'a> {
    fn new(problem: &'a QpProblem, settings: &'a SolverSettings) -> Result<Self> {
        let n = problem.num_vars();
        let m = problem.num_rows();
        let mut p = problem.p.clone();
        let mut q = problem.q.clone();
        let mut a = problem.a.clone();
        let scaling = if settings.scaling_iterations > 0 {
            Scaling::equilibrate(&mut p, &mut q, &mut a, settings.scaling_iterations)
        } else {
            Scaling::identity(n, m)
        };
        let mut l = problem.l.clone();
        let mut u = problem.u.clone();
        scaling.scale_bounds(&mut l, &mut u);
        let rho = settings.rho;
        let rho_vec: Vec<f64> = (0..m).map(|i| row_rho(rho, l[i], u[i])).collect();
        let (k, rho_slots) = assemble_kkt(&p, &a, settings.sigma, &rho_vec);
        let kkt = LdlFactor::new(&k).map_err(|e| Error::Algorithm(format!("KKT factorization failed: {e:?}")))?;
        let at = a.transpose();
        Ok(Workspace {
            original: problem,
            settings,
            n,
            m,
            p,
            q,
            a,
            at,
            l,
            u,
            scaling,
            rho,
            rho_vec,
            kkt,
            rho_slots,
            x: vec![0.0; n],
            z: vec![0.0; m],
            y: vec![0.0; m],
            dx: vec![0.0; n],
            dy: vec![0.0; m],
            rho_updates: 0,
        })
    }

    fn iterate(&mut self, rhs: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let s = self.settings;
        for j in 0..n {
            rhs[j] = s.sigma * self.x[j] - self.q[j];
        }
        for i in 0..m {
            rhs[n + i] = self.z[i] - self.y[i] / self.rho_vec[i];
        }
        self.kkt.solve(rhs);
        for j in 0..n {
            let x_new = s.alpha * rhs[j] + (1.0 - s.alpha) * self.x[j];
            self.dx[j] = x_new - self.x[j];
            self.x[j] = x_new;
        }
        for i in 0..m {
            let rho = self.rho_vec[i];
            let z_tilde = self.z[i] + (rhs[n + i] - self.y[i]) / rho;
            let z_relaxed = s.alpha * z_tilde + (1.0 - s.alpha) * self.z[i];
            let z_new = (z_relaxed + self.y[i] / rho).clamp(self.l[i], self.u[i]);
            let dy = rho * (z_relaxed - z_new);
            self.y[i] += dy;
            self.dy[i] = dy;
            self.z[i] = z_new;
        }
    }

    /// Unscaled residuals of scaled iterates `(x, z, y)`.
    fn residuals(&self, x: &[f64], z: &[f64], y: &[f64]) -> Residuals {
        let (n, m) = (self.n, self.m);
        let sc = &self.scaling;
        let mut ax = vec![0.0; m];
        self.a.mul_vec(x, &mut ax);
        let mut prim = 0.0f64;
        let mut ax_norm = 0.0f64;
        let mut z_norm = 0.0f64;
        for i in 0..m {
            let inv_e = 1.0 / sc.e[i];
            prim = prim.max(((ax[i] - z[i]) * inv_e).abs());
            ax_norm = ax_norm.max((ax[i] * inv_e).abs());
            z_norm = z_norm.max((z[i] * inv_e).abs());
        }
        let mut px = vec![0.0; n];
        self.p.sym_upper_mul_vec(x, &mut px);
        let mut aty = vec![0.0; n];
        self.at.mul_vec(y, &mut aty);
        let mut dual = 0.0f64;
        let (mut px_norm, mut aty_norm, mut q_norm) = (0.0f64, 0.0f64, 0.0f64);
        for j in 0..n {
            let k = 1.0 / (sc.d[j] * sc.c);
            dual = dual.max(((px[j] + self.q[j] + aty[j]) * k).abs());
            px_norm = px_norm.max((px[j] * k).abs());
            aty_norm = aty_norm.max((aty[j] * k).abs());
            q_norm = q_norm.max((self.q[j] * k).abs());
        }
        let s = self.settings;
        Residuals {
            prim,
            dual,
            eps_prim: s.eps_abs + s.eps_rel * ax_norm.max(z_norm),
            eps_dual: s.eps_abs + s.eps_rel * px_norm.max(aty_norm).max(q_norm),
        }
    }

    fn primal_infeasible(&self) -> bool {
        let orig = self.original;
        let mut dy = self.scaling.unscale_y(&self.dy);
        for i in 0..self.m {
            if !orig.u[i].is_finite() {
                dy[i] = dy[i].min(0.0);
            }
            if !orig.l[i].is_finite() {
                dy[i] = dy[i].max(0.0);
            }
        }
        let norm = inf_norm(&dy);
        if norm < 1e-30 {
            return false;
        }
        let eps = self.settings.eps_primal_infeasible * norm;
        let mut aty = vec![0.0; self.n];
        orig.a.tr_mul_vec(&dy, &mut aty);
        if inf_norm(&aty) > eps {
            return false;
        }
        let support: f64 = (0..self.m)
            .map(|i| {
                if dy[i] > 0.0 {
                    orig.u[i] * dy[i]
                } else if dy[i] < 0.0 {
                    orig.l[i] * dy[i]
                } else {
                    0.0
                }
            })
            .sum();
        support < -eps
    }

    fn dual_infeasible(&self) -> bool {
        let orig = self.original;
        let dx = self.scaling.unscale_x(&self.dx);
        let norm = inf_norm(&dx);
        if norm < 1e-30 {
            return false;
        }
        let eps = self.settings.eps_dual_infeasible * norm;
        if dot(&orig.q, &dx) > -eps {
            return false;
        }
        let mut pdx = vec![0.0; self.n];
        orig.p.sym_upper_mul_vec(&dx, &mut pdx);
        if inf_norm(&pdx) > eps {
            return false;
        }
        let mut adx = vec![0.0; self.m];
        orig.a.mul_vec(&dx, &mut adx);
        (0..self.m).all(|i| {
            let upper_ok = !orig.u[i].is_finite() || adx[i] <= eps;
            let lower_ok = !orig.l[i].is_finite() || adx[i] >= -eps;
            upper_ok && lower_ok
        })
    }

    fn adapt_rho(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut ax = vec![0.0; m];
        self.a.mul_vec(&self.x, &mut ax);
        let prim = (0..m).map(|i| (ax[i] - self.z[i]).abs()).fold(0.0, f64::max);
        let prim_scale = inf_norm(&ax).max(inf_norm(&self.z));
        let mut px = vec![0.0; n];
        self.p.sym_upper_mul_vec(&self.x, &mut px);
        let mut aty = vec![0.0; n];
        self.at.mul_vec(&self.y, &mut aty);
        let dual = (0..n).map(|j| (px[j] + self.q[j] + aty[j]).abs()).fold(0.0, f64::max);
        let dual_scale = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&self.q));
        let prim_rel = prim / (prim_scale + 1e-30);
        let dual_rel = dual / (dual_scale + 1e-30);
        let proposal = (self.rho * (prim_rel / (dual_rel + 1e-30)).sqrt()).clamp(RHO_MIN, RHO_MAX);
        let tol = self.settings.adaptive_rho_tolerance;
        if proposal > self.rho * tol || proposal < self.rho / tol {
            self.rho = proposal;
            for i in 0..m {
                self.rho_vec[i] = row_rho(self.rho, self.l[i], self.u[i]);
                self.kkt.set_value(self.rho_slots[i], -1.0 / self.rho_vec[i]);
            }
            if self.kkt.refactor_in_place().is_ok() {
                self.rho_updates += 1;
            }
        }
    }

    fn finish(
        &self,
        status: SolverStatus,
        x: &[f64],
        z: &[f64],
        y: &[f64],
        iterations: usize,
        polished: bool,
    ) -> SolverResult {
        let _ = z;
        let res = self.residuals(x, z, y);
        let x_out = self.scaling.unscale_x(x);
        let y_out = self.scaling.unscale_y(y);
        let objective = self.original.objective(&x_out);
        SolverResult {
            status,
            x: x_out,
            y: y_out,
            objective,
            primal_residual: res.prim,
            dual_residual: res.dual,
            iterations,
            polished,
            rho_updates: self.rho_updates,
        }
    }

    /// Polished result when polishing succeeds and is at least as accurate.
    fn try_polish(&self, status: SolverStatus, iterations: usize) -> Option<SolverResult> {
        let admm = self.residuals(&self.x, &self.z, &self.y);
        let (px, pz, py) = polish::polish(self)?;
        let pres = self.residuals(&px, &pz, &py);
        let tiny = 1e-10;
        let better = (pres.prim <= admm.prim || pres.prim <= tiny) && (pres.dual <= admm.dual || pres.dual <= tiny);
        let within = pres.converged(1.0);
        if !(better || (within && status != SolverStatus::Solved)) {
            return None;
        }
        let st = if within { SolverStatus::Solved } else { status };
        st.has_solution().then(|| self.finish(st, &px, &pz, &py, iterations, true))
    }

    fn run(&mut self, log: &mut dyn FnMut(&IterationRecord)) -> SolverResult {
        let s = self.settings;
        let mut rhs = vec![0.0; self.n + self.m];
        let mut status = SolverStatus::IterationLimit;
        let mut iterations = s.max_iterations;
        // after a failed polish, keep iterating to a tighter target and retry
        let mut target = 1.0;
        let mut retries = 0;
        for k in 1..=s.max_iterations {
            self.iterate(&mut rhs);
            if k % s.check_termination == 0 || k == s.max_iterations {
                let res = self.residuals(&self.x, &self.z, &self.y);
                log(&IterationRecord {
                    iteration: k,
                    objective: self.original.objective(&self.scaling.unscale_x(&self.x)),
                    primal_residual: res.prim,
                    dual_residual: res.dual,
                    rho: self.rho,
                });
                if res.converged(target) {
                    if s.polish {
                        if let Some(out) = self.try_polish(SolverStatus::Solved, k) {
                            return out;
                        }
                    }
                    if !s.polish || retries == POLISH_RETRIES {
                        status = SolverStatus::Solved;
                        iterations = k;
                        break;
                    }
                    retries += 1;
                    target *= 0.1;
                    continue;
                }
                if retries == 0 && self.primal_infeasible() {
                    status = SolverStatus::PrimalInfeasible;
                    iterations = k;
                    break;
                }
                if retries == 0 && self.dual_infeasible() {
                    status = SolverStatus::DualInfeasible;
                    iterations = k;
                    break;
                }
            }
            if s.adaptive_rho && k % s.adaptive_rho_interval == 0 {
                self.adapt_rho();
            }
        }

        if !matches!(status, SolverStatus::Solved | SolverStatus::IterationLimit) {
            let mut out = self.finish(status, &self.x, &self.z, &self.y, iterations, false);
            out.x.iter_mut().for_each(|v| *v = f64::NAN);
            out.objective = f64::NAN;
            return out;
        }

        if status == SolverStatus::IterationLimit {
            let admm_res = self.residuals(&self.x, &self.z, &self.y);
            if admm_res.converged(1.0) {
                status = SolverStatus::Solved;
            } else if admm_res.converged(10.0) {
                status = SolverStatus::SolvedInaccurate;
            }
            if s.polish {
                if let Some(out) = self.try_polish(status, iterations) {
                    return out;
                }
            }
        }
        self.finish(status, &self.x, &self.z, &self.y, iterations, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(
        p: &[(usize, usize, f64)],
        q: Vec<f64>,
        a: &[(usize, usize, f64)],
        m: usize,
        l: Vec<f64>,
        u: Vec<f64>,
    ) -> QpProblem {
        let n = q.len();
        QpProblem::new(CscMatrix::from_triplets(n, n, p.to_vec()), q, CscMatrix::from_triplets(m, n, a.to_vec()), l, u)
            .unwrap()
    }

    #[test]
    fn active_lower_bound() {
        // (v - 1)^2 = v^2 - 2v + 1
        let qp = problem(&[(0, 0, 2.0)], vec![-2.0], &[(0, 0, 1.0)], 1, vec![2.0], vec![f64::INFINITY]);
        let r = solve_qp(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolverStatus::Solved);
        assert!((r.x[0] - 2.0).abs() < 1e-6, "{:?}", r.x);
        let (rp, rd, rc) = kkt_residuals(&qp, &r.x, &r.y);
        assert!(rp < 1e-6 && rd < 1e-6 && rc < 1e-6);
    }

    #[test]
    fn symmetric_equality() {
        let qp =
            problem(&[(0, 0, 2.0), (1, 1, 2.0)], vec![0.0, 0.0], &[(0, 0, 1.0), (0, 1, 1.0)], 1, vec![2.0], vec![2.0]);
        let r = solve_qp(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolverStatus::Solved);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exact_solution_has_zero_residuals() {
        let qp = problem(&[(0, 0, 2.0)], vec![-2.0], &[(0, 0, 1.0)], 1, vec![2.0], vec![f64::INFINITY]);
        // stationarity: 2*2 - 2 + y = 0  =>  y = -2 (lower bound active)
        assert_eq!(kkt_residuals(&qp, &[2.0], &[-2.0]), (0.0, 0.0, 0.0));
        let (rp, _, _) = kkt_residuals(&qp, &[2.0 - 1e-3], &[-2.0]);
        assert!(rp >= 1e-3 - 1e-15);
    }

    #[test]
    fn detects_primal_infeasibility() {
        // x >= 1 and x <= 0
        let qp = problem(
            &[(0, 0, 1.0)],
            vec![0.0],
            &[(0, 0, 1.0), (1, 0, 1.0)],
            2,
            vec![1.0, f64::NEG_INFINITY],
            vec![f64::INFINITY, 0.0],
        );
        let r = solve_qp(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolverStatus::PrimalInfeasible);
    }

    #[test]
    fn detects_dual_infeasibility() {
        // minimize -x subject to x >= 0
        let qp = problem(&[], vec![-1.0], &[(0, 0, 1.0)], 1, vec![0.0], vec![f64::INFINITY]);
        let r = solve_qp(&qp, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolverStatus::DualInfeasible);
    }

    #[test]
    fn iteration_limit_reported() {
        let qp = problem(
            &[(0, 0, 1.0), (1, 1, 1e-3)],
            vec![1.0, -1.0],
            &[(0, 0, 1.0), (0, 1, 1.0)],
            1,
            vec![1.0],
            vec![1.0],
        );
        let settings = SolverSettings { max_iterations: 1, polish: false, ..Default::default() };
        let r = solve_qp(&qp, &settings).unwrap();
        assert_eq!(r.status, SolverStatus::IterationLimit);
    }

    #[test]
    fn deterministic_iterates() {
        let qp = problem(
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 1, 2.0)],
            vec![1.0, 1.0],
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (2, 1, 1.0)],
            3,
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.7, 0.7],
        );
        let mut a = Vec::new();
        let mut b = Vec::new();
        solve_qp_with_log(&qp, &SolverSettings::default(), &mut |r| a.push(r.clone())).unwrap();
        solve_qp_with_log(&qp, &SolverSettings::default(), &mut |r| b.push(r.clone())).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_settings() {
        let qp = problem(&[(0, 0, 1.0)], vec![0.0], &[], 0, vec![], vec![]);
        let s = SolverSettings { alpha: 2.5, ..Default::default() };
        assert!(matches!(solve_qp(&qp, &s), Err(Error::Config(_))));
    }
}

//! Strictly convex quadratic programs over named decision variables, solved
//! with a dense two-phase primal active-set method.
//!
//! The solver is deterministic: variables are kept in canonical id order, all
//! ties (blocking rows, multiplier drops) break toward the lowest index, and
//! no hashing is involved, so identical problems produce bitwise identical
//! solutions.

use crate::constraints::{ConstraintRow, RowSense, VarId};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("variable {0} added twice")]
    DuplicateVariable(String),
    #[error("row '{row}' references unknown variable {var}")]
    UnknownVariable { row: String, var: String },
    #[error("variable {var}: quadratic weight must be strictly positive, got {weight}")]
    BadWeight { var: String, weight: f64 },
    #[error("variable {var}: lower bound {lower} exceeds upper bound {upper}")]
    BadBounds { var: String, lower: f64, upper: f64 },
}

/// One decision variable with its diagonal cost and box bounds
/// (bounds may be infinite).
#[derive(Debug, Clone, PartialEq)]
pub struct VarSpec {
    pub id: VarId,
    pub quad: f64,
    pub linear: f64,
    pub lower: f64,
    pub upper: f64,
}

/// minimize 1/2 z'Qz + F'z  subject to  rows and variable bounds,
/// with diagonal Q > 0 (strict convexity).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QpProblem {
    vars: Vec<VarSpec>,
    rows: Vec<ConstraintRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    /// Iteration budget exhausted or optimality could not be certified.
    MaxIter,
}

/// Solver output. Multipliers follow the sign convention of
/// [`kkt_residuals`]: `<=` rows and upper bounds enter the stationarity sum
/// positively, `>=` rows and lower bounds negatively, equality multipliers are
/// free, and all inequality multipliers are reported nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    /// Variable ids in canonical order, aligned with `values`.
    pub ids: Vec<VarId>,
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub row_multipliers: Vec<f64>,
    pub lower_multipliers: Vec<f64>,
    pub upper_multipliers: Vec<f64>,
    /// Largest constraint violation at the returned point.
    pub max_violation: f64,
}

impl QpSolution {
    pub fn value(&self, id: VarId) -> Option<f64> {
        self.ids.iter().position(|&v| v == id).map(|i| self.values[i])
    }
}

/// Infinity norms of the four KKT residual groups at a candidate
/// primal/dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

const FEAS_TOL: f64 = 1e-9;
const MULT_TOL: f64 = 1e-9;
const PHASE1_TOL: f64 = 1e-8;
const KKT_ACCEPT: f64 = 1e-6;

impl QpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a variable with cost 1/2 quad z^2 + linear z and box bounds.
    /// Variables are kept sorted by id; `quad` must be strictly positive.
    pub fn add_var(
        &mut self,
        id: VarId,
        quad: f64,
        linear: f64,
        lower: f64,
        upper: f64,
    ) -> Result<(), QpError> {
        if !(quad > 0.0) {
            return Err(QpError::BadWeight { var: id.label(), weight: quad });
        }
        if lower > upper {
            return Err(QpError::BadBounds { var: id.label(), lower, upper });
        }
        match self.vars.binary_search_by(|v| v.id.cmp(&id)) {
            Ok(_) => Err(QpError::DuplicateVariable(id.label())),
            Err(i) => {
                self.vars.insert(i, VarSpec { id, quad, linear, lower, upper });
                Ok(())
            }
        }
    }

    /// Add a constraint row; every referenced variable must already exist.
    pub fn add_row(&mut self, row: ConstraintRow) -> Result<(), QpError> {
        for (var, _) in &row.coeffs {
            if self.index_of(*var).is_none() {
                return Err(QpError::UnknownVariable { row: row.tag.clone(), var: var.label() });
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn vars(&self) -> &[VarSpec] {
        &self.vars
    }

    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    pub fn index_of(&self, id: VarId) -> Option<usize> {
        self.vars.binary_search_by(|v| v.id.cmp(&id)).ok()
    }

    fn dense_row(&self, row: &ConstraintRow) -> DVector<f64> {
        let mut out = DVector::zeros(self.vars.len());
        for (var, coeff) in &row.coeffs {
            out[self.index_of(*var).expect("validated in add_row")] += *coeff;
        }
        out
    }

    fn objective_at(&self, z: &DVector<f64>) -> f64 {
        let mut obj = 0.0;
        for (i, v) in self.vars.iter().enumerate() {
            obj += 0.5 * v.quad * z[i] * z[i] + v.linear * z[i];
        }
        obj
    }

    /// Solve to optimality, or report infeasibility / a failed certificate.
    ///
    /// Phase 1 finds a feasible start by relaxing every inequality with a
    /// shared overshoot variable; phase 2 runs the active-set iteration from
    /// there. A returned `Optimal` status has passed a KKT residual check at
    /// [`KKT_ACCEPT`]; a solution that cannot be certified is downgraded to
    /// `MaxIter`.
    pub fn solve(&self) -> QpSolution {
        let canon = self.canonicalize();
        let canon = match canon {
            Ok(c) => c,
            Err(sol) => return *sol,
        };

        // Least-norm point on the equality manifold.
        let n = canon.n;
        let mut z0 = DVector::zeros(n);
        if !canon.eq.is_empty() {
            let e = canon.eq_matrix();
            let d = canon.eq_rhs();
            let svd = e.clone().svd(true, true);
            match svd.solve(&d, 1e-12) {
                Ok(sol) => z0 = sol,
                Err(_) => return self.failed(QpStatus::MaxIter, &canon, z0, 0),
            }
            let residual = (&e * &z0 - &d).amax();
            if residual > 1e-7 {
                return self.failed(QpStatus::Infeasible, &canon, z0, 0);
            }
        }

        let viol = canon.max_ineq_violation(&z0);
        let mut iterations = 0usize;
        let start = if viol <= FEAS_TOL {
            z0
        } else {
            // Phase 1: lift with overshoot t, start at (z0, viol + 1). The
            // exact penalty slope must dominate the projection multipliers;
            // escalate it when a positive overshoot remains with the penalty
            // binding (sum of relaxation multipliers at the slope).
            let mut m_penalty = 10.0 * (1.0 + viol);
            let mut phase1_exit = None;
            for attempt in 0..4 {
                let (p1, zt0) = canon.phase1(&z0, viol, m_penalty);
                let out = active_set_core(&p1, zt0);
                iterations += out.iterations;
                let t_star = out.z[n];
                let relaxed_mult: f64 = out
                    .working
                    .iter()
                    .zip(&out.ineq_multipliers)
                    .filter(|(&j, _)| j < p1.ineq.len() - 1)
                    .map(|(_, &pi)| pi.max(0.0))
                    .sum();
                let penalty_binding = out.status == CoreStatus::Converged
                    && t_star > PHASE1_TOL
                    && relaxed_mult >= 0.99 * m_penalty;
                phase1_exit = Some(out);
                if !penalty_binding || attempt == 3 {
                    break;
                }
                m_penalty *= 100.0;
            }
            let out = phase1_exit.expect("loop always sets an exit");
            let t_star = out.z[n];
            if out.status != CoreStatus::Converged || t_star > PHASE1_TOL {
                let z = out.z.rows(0, n).into_owned();
                let status = if out.status == CoreStatus::Converged {
                    QpStatus::Infeasible
                } else {
                    QpStatus::MaxIter
                };
                return self.failed(status, &canon, z, iterations);
            }
            out.z.rows(0, n).into_owned()
        };

        let out = active_set_core(&canon, start);
        iterations += out.iterations;
        if out.status != CoreStatus::Converged {
            return self.failed(QpStatus::MaxIter, &canon, out.z, iterations);
        }

        let solution = self.finish(&canon, out, iterations);
        let residuals = kkt_residuals(self, &solution);
        if residuals.max() <= KKT_ACCEPT {
            solution
        } else {
            QpSolution { status: QpStatus::MaxIter, ..solution }
        }
    }

    fn failed(
        &self,
        status: QpStatus,
        canon: &Canonical,
        z: DVector<f64>,
        iterations: usize,
    ) -> QpSolution {
        let max_violation = canon.max_violation(&z);
        QpSolution {
            status,
            ids: self.vars.iter().map(|v| v.id).collect(),
            objective: self.objective_at(&z),
            values: z.iter().copied().collect(),
            iterations,
            row_multipliers: vec![0.0; self.rows.len()],
            lower_multipliers: vec![0.0; self.vars.len()],
            upper_multipliers: vec![0.0; self.vars.len()],
            max_violation,
        }
    }

    fn finish(&self, canon: &Canonical, out: CoreOutput, iterations: usize) -> QpSolution {
        let mut row_multipliers = vec![0.0; self.rows.len()];
        let mut lower_multipliers = vec![0.0; self.vars.len()];
        let mut upper_multipliers = vec![0.0; self.vars.len()];
        // Equality multipliers: canonical rows were scaled by s, so the
        // multiplier of the original row is pi * s.
        for (k, row) in canon.eq.iter().enumerate() {
            if let RowOrigin::User(i) = row.origin {
                row_multipliers[i] = out.eq_multipliers[k] * row.scale;
            }
        }
        for (w_pos, &j) in out.working.iter().enumerate() {
            let row = &canon.ineq[j];
            let pi = out.ineq_multipliers[w_pos].max(0.0) * row.scale;
            match row.origin {
                RowOrigin::User(i) => row_multipliers[i] = pi,
                RowOrigin::Lower(v) => lower_multipliers[v] = pi,
                RowOrigin::Upper(v) => upper_multipliers[v] = pi,
            }
        }
        let max_violation = canon.max_violation(&out.z);
        QpSolution {
            status: QpStatus::Optimal,
            ids: self.vars.iter().map(|v| v.id).collect(),
            objective: self.objective_at(&out.z),
            values: out.z.iter().copied().collect(),
            iterations,
            row_multipliers,
            lower_multipliers,
            upper_multipliers,
            max_violation,
        }
    }

    /// Human-readable dump of the problem and a solution, for debugging
    /// infeasible or suspicious steps.
    pub fn debug_dump(&self, sol: &QpSolution) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "status: {:?}  objective: {:.6e}  iterations: {}  max violation: {:.3e}",
            sol.status, sol.objective, sol.iterations, sol.max_violation
        );
        let _ = writeln!(out, "variables:");
        for (i, v) in self.vars.iter().enumerate() {
            let _ = writeln!(
                out,
                "  {:<22} = {:>12.6}  in [{:>9.3}, {:>9.3}]  quad {:.1e}  mult lo/hi {:.2e}/{:.2e}",
                v.id.label(),
                sol.values[i],
                v.lower,
                v.upper,
                v.quad,
                sol.lower_multipliers[i],
                sol.upper_multipliers[i],
            );
        }
        let _ = writeln!(out, "rows:");
        for (i, row) in self.rows.iter().enumerate() {
            let lhs: f64 = row
                .coeffs
                .iter()
                .map(|(var, c)| c * sol.values[self.index_of(*var).unwrap()])
                .sum();
            let sense = match row.sense {
                RowSense::Le => "<=",
                RowSense::Eq => "==",
                RowSense::Ge => ">=",
            };
            let _ = writeln!(
                out,
                "  {:<22} lhs {:>12.6} {} {:>12.6}  slack {:>10.3e}  mult {:.4e}",
                row.tag,
                lhs,
                sense,
                row.rhs,
                match row.sense {
                    RowSense::Le => row.rhs - lhs,
                    RowSense::Eq => (lhs - row.rhs).abs(),
                    RowSense::Ge => lhs - row.rhs,
                },
                sol.row_multipliers[i],
            );
        }
        out
    }

    fn canonicalize(&self) -> Result<Canonical, Box<QpSolution>> {
        let n = self.vars.len();
        let mut canon = Canonical {
            n,
            quad: DVector::from_iterator(n, self.vars.iter().map(|v| v.quad)),
            linear: DVector::from_iterator(n, self.vars.iter().map(|v| v.linear)),
            eq: Vec::new(),
            ineq: Vec::new(),
        };
        for (i, row) in self.rows.iter().enumerate() {
            let coeffs = self.dense_row(row);
            let norm = coeffs.amax();
            if norm <= 1e-14 {
                // Constant row: either vacuous or a contradiction.
                let violated = match row.sense {
                    RowSense::Le => row.rhs < -1e-10,
                    RowSense::Ge => row.rhs > 1e-10,
                    RowSense::Eq => row.rhs.abs() > 1e-10,
                };
                if violated {
                    return Err(Box::new(self.failed(
                        QpStatus::Infeasible,
                        &Canonical::empty(n),
                        DVector::zeros(n),
                        0,
                    )));
                }
                continue;
            }
            let scale = 1.0 / norm;
            match row.sense {
                RowSense::Eq => canon.eq.push(CanonRow {
                    coeffs: coeffs * scale,
                    rhs: row.rhs * scale,
                    origin: RowOrigin::User(i),
                    scale,
                }),
                RowSense::Le => canon.ineq.push(CanonRow {
                    coeffs: coeffs * scale,
                    rhs: row.rhs * scale,
                    origin: RowOrigin::User(i),
                    scale,
                }),
                RowSense::Ge => canon.ineq.push(CanonRow {
                    coeffs: coeffs * (-scale),
                    rhs: -row.rhs * scale,
                    origin: RowOrigin::User(i),
                    scale,
                }),
            }
        }
        for (v, spec) in self.vars.iter().enumerate() {
            if spec.lower.is_finite() {
                let mut coeffs = DVector::zeros(n);
                coeffs[v] = -1.0;
                canon.ineq.push(CanonRow {
                    coeffs,
                    rhs: -spec.lower,
                    origin: RowOrigin::Lower(v),
                    scale: 1.0,
                });
            }
            if spec.upper.is_finite() {
                let mut coeffs = DVector::zeros(n);
                coeffs[v] = 1.0;
                canon.ineq.push(CanonRow {
                    coeffs,
                    rhs: spec.upper,
                    origin: RowOrigin::Upper(v),
                    scale: 1.0,
                });
            }
        }
        Ok(canon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowOrigin {
    User(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Debug, Clone)]
struct CanonRow {
    coeffs: DVector<f64>,
    rhs: f64,
    origin: RowOrigin,
    scale: f64,
}

/// Canonical form: diagonal cost, equality rows, `<=` inequality rows
/// (user rows normalized to unit infinity norm, bounds appended).
#[derive(Debug, Clone)]
struct Canonical {
    n: usize,
    quad: DVector<f64>,
    linear: DVector<f64>,
    eq: Vec<CanonRow>,
    ineq: Vec<CanonRow>,
}

impl Canonical {
    fn empty(n: usize) -> Self {
        Self {
            n,
            quad: DVector::from_element(n, 1.0),
            linear: DVector::zeros(n),
            eq: Vec::new(),
            ineq: Vec::new(),
        }
    }

    fn eq_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.eq.len(), self.n, |r, c| self.eq[r].coeffs[c])
    }

    fn eq_rhs(&self) -> DVector<f64> {
        DVector::from_iterator(self.eq.len(), self.eq.iter().map(|r| r.rhs))
    }

    fn max_ineq_violation(&self, z: &DVector<f64>) -> f64 {
        self.ineq.iter().map(|r| r.coeffs.dot(z) - r.rhs).fold(0.0, f64::max)
    }

    fn max_violation(&self, z: &DVector<f64>) -> f64 {
        let eq = self.eq.iter().map(|r| (r.coeffs.dot(z) - r.rhs).abs()).fold(0.0, f64::max);
        eq.max(self.max_ineq_violation(z))
    }

    /// Lifted feasibility problem over (z, t): minimize
    /// 1/2 |z - z0|^2 + 1/2 t^2 + M t subject to the equalities, every
    /// inequality relaxed by -t, and t >= 0. The linear cost on t is an exact
    /// penalty: when the problem is feasible and M exceeds the projection
    /// multipliers, the optimum sits at t = 0 exactly (the t bound holds it
    /// with multiplier M - sum pi > 0), so the phase-2 start carries no
    /// residual violation. A quadratic penalty alone cannot do this —
    /// stationarity in t would pin t at the multiplier sum, never at zero.
    /// The start (z0, viol + 1) is strictly feasible.
    fn phase1(&self, z0: &DVector<f64>, viol: f64, m_penalty: f64) -> (Canonical, DVector<f64>) {
        let n = self.n;
        let quad = DVector::from_element(n + 1, 1.0);
        let mut linear = DVector::zeros(n + 1);
        for i in 0..n {
            linear[i] = -z0[i];
        }
        linear[n] = m_penalty;
        let lift = |row: &CanonRow, relax: bool| {
            let mut coeffs = DVector::zeros(n + 1);
            coeffs.rows_mut(0, n).copy_from(&row.coeffs);
            if relax {
                coeffs[n] = -1.0;
            }
            CanonRow { coeffs, rhs: row.rhs, origin: row.origin, scale: row.scale }
        };
        let mut canon = Canonical {
            n: n + 1,
            quad,
            linear,
            eq: self.eq.iter().map(|r| lift(r, false)).collect(),
            ineq: self.ineq.iter().map(|r| lift(r, true)).collect(),
        };
        // t >= 0. The origin index is out of range for the original problem
        // but is never dereferenced: phase-1 output bypasses multiplier
        // mapping.
        let mut t_row = DVector::zeros(n + 1);
        t_row[n] = -1.0;
        canon.ineq.push(CanonRow {
            coeffs: t_row,
            rhs: 0.0,
            origin: RowOrigin::Lower(n),
            scale: 1.0,
        });
        let mut start = DVector::zeros(n + 1);
        start.rows_mut(0, n).copy_from(z0);
        start[n] = viol + 1.0;
        (canon, start)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CoreStatus {
    Converged,
    IterationLimit,
    NumericalFailure,
}

struct CoreOutput {
    status: CoreStatus,
    z: DVector<f64>,
    /// Indices into `canon.ineq` of the final working set (sorted).
    working: Vec<usize>,
    ineq_multipliers: Vec<f64>,
    eq_multipliers: Vec<f64>,
    iterations: usize,
}

/// Primal active-set iteration from a feasible start.
///
/// Each step solves the equality-constrained subproblem on the working set
/// through a Schur complement on the diagonal cost. Blocking rows are added on
/// nonzero steps (which keeps the active matrix full row rank), and the most
/// negative multiplier is dropped at stationary points. Ties break toward the
/// lowest row index so reruns are bitwise identical.
fn active_set_core(canon: &Canonical, mut z: DVector<f64>) -> CoreOutput {
    let n = canon.n;
    let m_e = canon.eq.len();
    let max_iters = 100 + 10 * (n + canon.ineq.len());
    let mut working: Vec<usize> = Vec::new();
    let mut iterations = 0usize;

    let fail = |status: CoreStatus, z: DVector<f64>, working: Vec<usize>, iterations| CoreOutput {
        status,
        z,
        working,
        ineq_multipliers: Vec::new(),
        eq_multipliers: Vec::new(),
        iterations,
    };

    loop {
        if iterations >= max_iters {
            return fail(CoreStatus::IterationLimit, z, working, iterations);
        }
        iterations += 1;

        // Gradient and active matrix C = [equalities; working rows].
        let grad = DVector::from_fn(n, |i, _| canon.quad[i] * z[i] + canon.linear[i]);
        let m_a = m_e + working.len();
        let active_row = |k: usize| -> &CanonRow {
            if k < m_e {
                &canon.eq[k]
            } else {
                &canon.ineq[working[k - m_e]]
            }
        };

        // The step targets the exact active surface, C (z + p) = b_active,
        // rather than C p = 0 through the current point, so any drift the
        // iterate carries (inexact phase-1 exit, accumulated roundoff) is
        // absorbed instead of propagated. The subproblem is solved as the
        // saddle system
        //   [diag(Q) C'] [z_new]   [-F]
        //   [C       0 ] [ pi  ] = [ b]
        // rather than through the Schur complement C Qinv C': weakly
        // regularized variables (quad ~1e-6) would inflate the Schur entries
        // by 1/quad and put the double-precision noise floor near the
        // tolerances this solver must certify, while the saddle matrix keeps
        // every entry at its natural scale.
        let qinv_grad = DVector::from_fn(n, |i, _| grad[i] / canon.quad[i]);
        let (p, pi) = if m_a == 0 {
            (-&qinv_grad, DVector::zeros(0))
        } else {
            let dim = n + m_a;
            let mut m = DMatrix::zeros(dim, dim);
            for i in 0..n {
                m[(i, i)] = canon.quad[i];
            }
            for r in 0..m_a {
                for j in 0..n {
                    let a = active_row(r).coeffs[j];
                    m[(j, n + r)] = a;
                    m[(n + r, j)] = a;
                }
            }
            let mut rhs = DVector::zeros(dim);
            for i in 0..n {
                rhs[i] = -canon.linear[i];
            }
            for r in 0..m_a {
                rhs[n + r] = active_row(r).rhs;
            }
            let lu = m.clone().lu();
            let mut sol = match lu.solve(&rhs) {
                Some(sol) => sol,
                None => return fail(CoreStatus::NumericalFailure, z, working, iterations),
            };
            // One step of iterative refinement pushes the forward error from
            // kappa * eps down to the residual floor.
            let residual = &m * &sol - &rhs;
            match lu.solve(&residual) {
                Some(correction) => sol -= correction,
                None => return fail(CoreStatus::NumericalFailure, z, working, iterations),
            }
            if !sol.iter().all(|v| v.is_finite()) {
                return fail(CoreStatus::NumericalFailure, z, working, iterations);
            }
            let p = DVector::from_fn(n, |i, _| sol[i] - z[i]);
            let pi = DVector::from_fn(m_a, |r, _| sol[n + r]);
            (p, pi)
        };

        let step_tol = 1e-10 * (1.0 + z.amax());
        if p.amax() <= step_tol {
            // Stationary on the working set: check inequality multipliers.
            let mut drop: Option<(usize, f64)> = None;
            for (w_pos, _) in working.iter().enumerate() {
                let mult = pi[m_e + w_pos];
                if mult < -MULT_TOL && drop.map_or(true, |(_, best)| mult < best) {
                    drop = Some((w_pos, mult));
                }
            }
            match drop {
                None => {
                    let ineq_multipliers =
                        (0..working.len()).map(|w| pi[m_e + w]).collect::<Vec<_>>();
                    let eq_multipliers = (0..m_e).map(|k| pi[k]).collect::<Vec<_>>();
                    return CoreOutput {
                        status: CoreStatus::Converged,
                        z,
                        working,
                        ineq_multipliers,
                        eq_multipliers,
                        iterations,
                    };
                }
                Some((w_pos, _)) => {
                    working.remove(w_pos);
                    continue;
                }
            }
        }

        // Ratio test over rows not in the working set.
        let mut alpha = 1.0f64;
        let mut blocking: Option<usize> = None;
        for (j, row) in canon.ineq.iter().enumerate() {
            if working.contains(&j) {
                continue;
            }
            let dir = row.coeffs.dot(&p);
            if dir > 1e-12 {
                let slack = (row.rhs - row.coeffs.dot(&z)).max(0.0);
                let ratio = slack / dir;
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(j);
                }
            }
        }
        z += p * alpha;
        if let Some(j) = blocking {
            let pos = working.partition_point(|&k| k < j);
            working.insert(pos, j);
        }
    }
}

/// KKT residuals of a primal/dual candidate for `problem`, using the
/// stationarity convention
///
///   Q z + F + sum_{<=} pi a - sum_{>=} pi a + sum_{=} pi a
///         + (upper-bound pi) e - (lower-bound pi) e = 0.
pub fn kkt_residuals(problem: &QpProblem, sol: &QpSolution) -> KktResiduals {
    let n = problem.vars().len();
    let z = DVector::from_iterator(n, sol.values.iter().copied());
    let mut stationarity =
        DVector::from_fn(n, |i, _| problem.vars()[i].quad * z[i] + problem.vars()[i].linear);
    let mut primal = 0.0f64;
    let mut dual = 0.0f64;
    let mut comp = 0.0f64;

    for (i, row) in problem.rows().iter().enumerate() {
        let coeffs = problem.dense_row(row);
        let lhs = coeffs.dot(&z);
        let pi = sol.row_multipliers[i];
        match row.sense {
            RowSense::Le => {
                primal = primal.max(lhs - row.rhs);
                dual = dual.max(-pi);
                comp = comp.max((pi * (row.rhs - lhs)).abs());
                stationarity += coeffs * pi;
            }
            RowSense::Ge => {
                primal = primal.max(row.rhs - lhs);
                dual = dual.max(-pi);
                comp = comp.max((pi * (lhs - row.rhs)).abs());
                stationarity -= coeffs * pi;
            }
            RowSense::Eq => {
                primal = primal.max((lhs - row.rhs).abs());
                stationarity += coeffs * pi;
            }
        }
    }
    for (v, spec) in problem.vars().iter().enumerate() {
        let lo = sol.lower_multipliers[v];
        let hi = sol.upper_multipliers[v];
        if spec.lower.is_finite() {
            primal = primal.max(spec.lower - z[v]);
            dual = dual.max(-lo);
            comp = comp.max((lo * (z[v] - spec.lower)).abs());
            stationarity[v] -= lo;
        }
        if spec.upper.is_finite() {
            primal = primal.max(z[v] - spec.upper);
            dual = dual.max(-hi);
            comp = comp.max((hi * (spec.upper - z[v])).abs());
            stationarity[v] += hi;
        }
    }
    KktResiduals {
        stationarity: stationarity.amax(),
        primal: primal.max(0.0),
        dual: dual.max(0.0),
        complementarity: comp,
    }
}

/// Exact supremum of c·w over the box [lo, hi] (componentwise), used as the
/// independent reference for the dual embedding.
pub fn lp_box_sup_oracle(c: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    assert_eq!(c.len(), lo.len());
    assert_eq!(c.len(), hi.len());
    c.iter().zip(lo.iter().zip(hi)).map(|(&ci, (&l, &h))| (ci * l).max(ci * h)).sum()
}

/// Exact infimum of c·w over the box [lo, hi].
pub fn lp_box_inf_oracle(c: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    assert_eq!(c.len(), lo.len());
    assert_eq!(c.len(), hi.len());
    c.iter().zip(lo.iter().zip(hi)).map(|(&ci, (&l, &h))| (ci * l).min(ci * h)).sum()
}

/// Slow reference minimizer: enumerate candidate active sets, solve the
/// corresponding equality-constrained systems by SVD, and keep the best
/// KKT-consistent point. Exponential in the constraint count — use only on
/// small problems (tests).
pub fn brute_force_reference(problem: &QpProblem) -> Option<(Vec<f64>, f64)> {
    let n = problem.vars().len();
    // Collect inequality rows (user + finite bounds) and equality rows.
    let mut eqs: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut ineqs: Vec<(DVector<f64>, f64)> = Vec::new();
    for row in problem.rows() {
        let coeffs = problem.dense_row(row);
        match row.sense {
            RowSense::Eq => eqs.push((coeffs, row.rhs)),
            RowSense::Le => ineqs.push((coeffs, row.rhs)),
            RowSense::Ge => ineqs.push((-coeffs, -row.rhs)),
        }
    }
    for (v, spec) in problem.vars().iter().enumerate() {
        let mut e = DVector::zeros(n);
        e[v] = -1.0;
        if spec.lower.is_finite() {
            ineqs.push((e.clone(), -spec.lower));
        }
        if spec.upper.is_finite() {
            ineqs.push((-e, spec.upper));
        }
    }
    assert!(ineqs.len() <= 20, "brute force reference is exponential in the row count");

    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << ineqs.len()) {
        let active: Vec<usize> =
            (0..ineqs.len()).filter(|j| mask & (1 << j) != 0).collect();
        if eqs.len() + active.len() > n {
            continue;
        }
        // KKT system over (z, eq mults, active mults).
        let m = eqs.len() + active.len();
        let dim = n + m;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for i in 0..n {
            kkt[(i, i)] = problem.vars()[i].quad;
            rhs[i] = -problem.vars()[i].linear;
        }
        for (k, (coeffs, d)) in eqs.iter().chain(active.iter().map(|&j| &ineqs[j])).enumerate() {
            for i in 0..n {
                kkt[(i, n + k)] = coeffs[i];
                kkt[(n + k, i)] = coeffs[i];
            }
            rhs[n + k] = *d;
        }
        let Some(sol) = kkt.clone().full_piv_lu().solve(&rhs) else { continue };
        // Singular KKT systems (redundant or contradictory active sets) can
        // still yield a vector; demand a genuine solution before trusting it.
        if (&kkt * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
            continue;
        }
        let z = sol.rows(0, n).into_owned();
        // Validate: primal feasibility and nonnegative active multipliers.
        let mut ok = true;
        for (k, (coeffs, d)) in eqs.iter().chain(active.iter().map(|&j| &ineqs[j])).enumerate() {
            if (coeffs.dot(&z) - d).abs() > 1e-7 {
                ok = false;
                break;
            }
            if k >= eqs.len() && sol[n + k] < -1e-9 {
                ok = false;
                break;
            }
        }
        if ok {
            for (coeffs, g) in &ineqs {
                if coeffs.dot(&z) - g > 1e-7 {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let obj = problem.objective_at(&z);
            if best.as_ref().map_or(true, |(_, b)| obj < b - 0.0) {
                best = Some((z, obj));
            }
        }
    }
    best.map(|(z, obj)| (z.iter().copied().collect(), obj))
}

/// Per-step controller weights; the quadratic cost is
/// 1/2 (accel du^2 + steer phi^2 + slack sum e^2 + delta sum (d-1)^2)
/// plus a tiny `dual_reg` ridge on every variable that would otherwise be
/// costless (relaxation gains when `delta` is zero, dual vectors).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpWeights {
    pub accel: f64,
    pub steer: f64,
    /// Pull of relaxation gains toward 1; zero leaves them free.
    pub delta: f64,
    pub slack: f64,
    pub dual_reg: f64,
}

impl Default for QpWeights {
    fn default() -> Self {
        // The ridge never distorts the pinned duals — they sit on
        // equality-determined faces where it only tie-breaks — it just keeps
        // the otherwise-costless variables strictly convex.
        Self { accel: 1.0, steer: 0.1, delta: 2.0, slack: 10.0, dual_reg: 1e-8 }
    }
}

/// Actuation envelope of the assembled step problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBounds {
    pub u_min: f64,
    pub u_max: f64,
    pub steer_limit: f64,
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self { u_min: -5.0, u_max: 5.0, steer_limit: 0.6 }
    }
}

/// Build the per-step QP from constraint rows.
///
/// The acceleration variable is the deviation du = u - u_ref (the row
/// coefficients are written against physical u, so u_ref is folded into each
/// right-hand side), which makes the objective a minimal perturbation of the
/// reference control. Variable classes get their bounds here: du and phi from
/// the actuation envelope, relaxation gains in [0, delta_max], slacks
/// nonnegative, duals sign-restricted by their family.
pub fn assemble(
    rows: &[ConstraintRow],
    u_ref: f64,
    bounds: &ControlBounds,
    weights: &QpWeights,
    delta_max: f64,
) -> Result<QpProblem, QpError> {
    use crate::constraints::DualSign;
    use std::collections::BTreeSet;

    let mut ids: BTreeSet<VarId> = BTreeSet::new();
    ids.insert(VarId::ControlAccel);
    ids.insert(VarId::ControlSteer);
    for row in rows {
        for (var, _) in &row.coeffs {
            ids.insert(*var);
        }
    }

    let mut problem = QpProblem::new();
    for id in ids {
        let (quad, linear, lower, upper) = match id {
            VarId::ControlAccel => {
                (weights.accel, 0.0, bounds.u_min - u_ref, bounds.u_max - u_ref)
            }
            VarId::ControlSteer => {
                (weights.steer, 0.0, -bounds.steer_limit, bounds.steer_limit)
            }
            VarId::Delta(_) => {
                (weights.delta + weights.dual_reg, -weights.delta, 0.0, delta_max)
            }
            VarId::Slack(_) => (weights.slack, 0.0, 0.0, f64::INFINITY),
            VarId::Dual(kind, _) => match kind.dual_sign() {
                DualSign::NonNegative => (weights.dual_reg, 0.0, 0.0, f64::INFINITY),
                DualSign::NonPositive => (weights.dual_reg, 0.0, f64::NEG_INFINITY, 0.0),
            },
            VarId::Aux(_) => {
                return Err(QpError::BadWeight { var: id.label(), weight: f64::NAN })
            }
        };
        problem.add_var(id, quad, linear, lower, upper)?;
    }
    for row in rows {
        let mut shifted = row.clone();
        shifted.rhs -= shifted.coeff(VarId::ControlAccel) * u_ref;
        problem.add_row(shifted)?;
    }
    Ok(problem)
}

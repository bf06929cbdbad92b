//! Primal-dual interior-point method for the storage dispatch QP.
//!
//! Variables per unit `u` and step `k`: charge power, discharge power and the
//! stored energy at the end of the step. Per step there are one or two
//! aggregate columns (the summed net power and, in phase one, a violation
//! slack). With energies as variables every inequality is a simple bound and
//! the Hessian is diagonal, so the only coupling lives in the equality rows:
//!
//! ```text
//! C(u,k):  e[u,k] - e[u,k-1] - dt*eta_c*pc[u,k] + dt/eta_d*pd[u,k] = e0[u] if k == 0 else 0
//! S(k):    sum_u (pc[u,k] - pd[u,k]) + sum_j coef_j * agg[j,k]   = 0
//! ```
//!
//! The normal matrix `A Q^-1 A^T` is block-arrow shaped: one tridiagonal block
//! per unit bordered by diagonal couplings to the `S` rows. Eliminating the
//! unit blocks leaves a dense `n x n` Schur complement, so one Newton step
//! costs `O(units * n^2 + n^3)`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct UnitBlock {
    pub p_max: f64,
    pub capacity: f64,
    pub eta_chg: f64,
    pub eta_dch: f64,
    pub e0: f64,
    /// `true` pins the charge power of that step to zero.
    pub fix_chg: Vec<bool>,
    pub fix_dch: Vec<bool>,
}

/// An aggregate column entering every `S(k)` row.
#[derive(Debug, Clone)]
pub(crate) struct AggColumn {
    /// Diagonal Hessian entry (same for every step).
    pub hess: f64,
    pub lin: Vec<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub coef: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct StructuredQp {
    pub n: usize,
    pub dt: f64,
    /// Weight of `pc^2 + pd^2` in the objective.
    pub reg: f64,
    pub units: Vec<UnitBlock>,
    pub aggs: Vec<AggColumn>,
    pub constant: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmSettings {
    pub max_iter: usize,
    /// Targets for a clean exit.
    pub tight_feas: f64,
    pub tight_gap: f64,
    /// Acceptance thresholds if the method stalls before the tight targets.
    pub loose_feas: f64,
    pub loose_gap: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct QpSolution {
    pub x: Vec<f64>,
    /// Objective including the regulariser and constant.
    pub objective: f64,
    pub iterations: usize,
}

impl QpSolution {
    pub fn p_chg(&self, qp: &StructuredQp, u: usize, k: usize) -> f64 {
        self.x[qp.idx_pc(u, k)]
    }

    pub fn p_dch(&self, qp: &StructuredQp, u: usize, k: usize) -> f64 {
        self.x[qp.idx_pc(u, k) + 1]
    }

    pub fn agg(&self, qp: &StructuredQp, j: usize, k: usize) -> f64 {
        self.x[qp.idx_agg(j, k)]
    }
}

impl StructuredQp {
    fn n_unit_vars(&self) -> usize {
        3 * self.units.len() * self.n
    }

    fn n_vars(&self) -> usize {
        self.n_unit_vars() + self.aggs.len() * self.n
    }

    fn n_rows(&self) -> usize {
        (self.units.len() + 1) * self.n
    }

    pub fn idx_pc(&self, u: usize, k: usize) -> usize {
        3 * (u * self.n + k)
    }

    fn idx_e(&self, u: usize, k: usize) -> usize {
        3 * (u * self.n + k) + 2
    }

    pub fn idx_agg(&self, j: usize, k: usize) -> usize {
        self.n_unit_vars() + j * self.n + k
    }

    fn coef_chg(&self, u: usize) -> f64 {
        -self.dt * self.units[u].eta_chg
    }

    fn coef_dch(&self, u: usize) -> f64 {
        self.dt / self.units[u].eta_dch
    }

    fn row_s(&self, k: usize) -> usize {
        self.units.len() * self.n + k
    }

    /// Per-variable data: (hessian, linear, lower, upper, fixed).
    fn variable_data(&self) -> VarData {
        let nv = self.n_vars();
        let mut d = VarData {
            hess: vec![0.0; nv],
            lin: vec![0.0; nv],
            lower: vec![f64::NEG_INFINITY; nv],
            upper: vec![f64::INFINITY; nv],
            fixed: vec![false; nv],
        };
        for (u, unit) in self.units.iter().enumerate() {
            for k in 0..self.n {
                let ic = self.idx_pc(u, k);
                for (i, fix) in [(ic, unit.fix_chg[k]), (ic + 1, unit.fix_dch[k])] {
                    d.hess[i] = 2.0 * self.reg;
                    d.lower[i] = 0.0;
                    d.upper[i] = unit.p_max;
                    d.fixed[i] = fix;
                }
                let ie = self.idx_e(u, k);
                d.lower[ie] = 0.0;
                d.upper[ie] = unit.capacity;
            }
        }
        for (j, col) in self.aggs.iter().enumerate() {
            for k in 0..self.n {
                let i = self.idx_agg(j, k);
                d.hess[i] = col.hess;
                d.lin[i] = col.lin[k];
                if let Some(lo) = &col.lower {
                    d.lower[i] = lo[k];
                }
                if let Some(up) = &col.upper {
                    d.upper[i] = up[k];
                }
            }
        }
        d
    }

    fn rhs(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.n_rows()];
        for (u, unit) in self.units.iter().enumerate() {
            b[u * self.n] = unit.e0;
        }
        b
    }

    fn mul_a(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for u in 0..self.units.len() {
            let (ac, ad) = (self.coef_chg(u), self.coef_dch(u));
            for k in 0..n {
                let ic = self.idx_pc(u, k);
                let mut r = x[ic + 2] + ac * x[ic] + ad * x[ic + 1];
                if k > 0 {
                    r -= x[self.idx_e(u, k - 1)];
                }
                out[u * n + k] = r;
            }
        }
        for k in 0..n {
            let mut r = 0.0;
            for u in 0..self.units.len() {
                let ic = self.idx_pc(u, k);
                r += x[ic] - x[ic + 1];
            }
            for (j, col) in self.aggs.iter().enumerate() {
                r += col.coef * x[self.idx_agg(j, k)];
            }
            out[self.row_s(k)] = r;
        }
    }

    fn mul_at(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        for u in 0..self.units.len() {
            let (ac, ad) = (self.coef_chg(u), self.coef_dch(u));
            for k in 0..n {
                let ic = self.idx_pc(u, k);
                let yc = y[u * n + k];
                let ys = y[self.row_s(k)];
                out[ic] = ac * yc + ys;
                out[ic + 1] = ad * yc - ys;
                out[ic + 2] = yc - if k + 1 < n { y[u * n + k + 1] } else { 0.0 };
            }
        }
        for (j, col) in self.aggs.iter().enumerate() {
            for k in 0..n {
                out[self.idx_agg(j, k)] = col.coef * y[self.row_s(k)];
            }
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let d = self.variable_data();
        let mut obj = self.constant;
        for i in 0..x.len() {
            obj += 0.5 * d.hess[i] * x[i] * x[i] + d.lin[i] * x[i];
        }
        obj
    }
}

struct VarData {
    hess: Vec<f64>,
    lin: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    fixed: Vec<bool>,
}

/// LDL^T factor of a symmetric tridiagonal matrix. Pivots that cancel to
/// round-off are floored at a tiny multiple of their diagonal entry.
struct Tridiag {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl Tridiag {
    fn factor(diag: &[f64], off: &[f64]) -> Self {
        let n = diag.len();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n];
        let floor = |v: f64, scale: f64| v.max(1e-14 * scale.abs()).max(f64::MIN_POSITIVE);
        d[0] = floor(diag[0], diag[0]);
        for k in 1..n {
            l[k] = off[k - 1] / d[k - 1];
            d[k] = floor(diag[k] - l[k] * off[k - 1], diag[k]);
        }
        Self { d, l }
    }

    fn solve_in_place(&self, r: &mut [f64]) {
        let n = r.len();
        for k in 1..n {
            r[k] -= self.l[k] * r[k - 1];
        }
        for k in 0..n {
            r[k] /= self.d[k];
        }
        for k in (0..n.saturating_sub(1)).rev() {
            r[k] -= self.l[k + 1] * r[k + 1];
        }
    }
}

/// Factorisation of the block-arrow normal matrix.
struct NormalFactor {
    blocks: Vec<Tridiag>,
    border: Vec<Vec<f64>>,
    schur: Cholesky<f64, nalgebra::Dyn>,
}

impl NormalFactor {
    /// `q` is the diagonal of the scaled inverse Hessian.
    fn new(qp: &StructuredQp, q: &[f64]) -> Result<Self> {
        let n = qp.n;
        let nu = qp.units.len();
        let mut blocks = Vec::with_capacity(nu);
        let mut border = Vec::with_capacity(nu);
        let mut schur = DMatrix::<f64>::zeros(n, n);

        for k in 0..n {
            let mut s = 0.0;
            for u in 0..nu {
                let ic = qp.idx_pc(u, k);
                s += q[ic] + q[ic + 1];
            }
            for (j, col) in qp.aggs.iter().enumerate() {
                s += col.coef * col.coef * q[qp.idx_agg(j, k)];
            }
            schur[(k, k)] = s;
        }

        let mut col = vec![0.0; n];
        for u in 0..nu {
            let (ac, ad) = (qp.coef_chg(u), qp.coef_dch(u));
            let mut diag = vec![0.0; n];
            let mut off = vec![0.0; n.saturating_sub(1)];
            let mut b = vec![0.0; n];
            for k in 0..n {
                let ic = qp.idx_pc(u, k);
                let (qc, qd, qe) = (q[ic], q[ic + 1], q[ic + 2]);
                diag[k] += qe + ac * ac * qc + ad * ad * qd;
                if k + 1 < n {
                    diag[k + 1] += qe;
                    off[k] = -qe;
                }
                b[k] = ac * qc - ad * qd;
            }
            let tri = Tridiag::factor(&diag, &off);
            if tri.d.iter().any(|d| !d.is_finite()) {
                return Err(Error::Solver("unit block factor is not finite".into()));
            }
            // schur -= B T^-1 B, column by column.
            for k in 0..n {
                if b[k] == 0.0 {
                    continue;
                }
                col.iter_mut().for_each(|c| *c = 0.0);
                col[k] = b[k];
                tri.solve_in_place(&mut col);
                for i in 0..n {
                    schur[(i, k)] -= b[i] * col[i];
                }
            }
            blocks.push(tri);
            border.push(b);
        }

        // Symmetrise against round-off before factoring.
        for i in 0..n {
            for k in 0..i {
                let avg = 0.5 * (schur[(i, k)] + schur[(k, i)]);
                schur[(i, k)] = avg;
                schur[(k, i)] = avg;
            }
        }
        let chol = match Cholesky::new(schur.clone()) {
            Some(c) => c,
            None => {
                let shift = 1e-12 * (0..n).map(|i| schur[(i, i)].abs()).fold(1.0, f64::max);
                let mut shifted = schur;
                for i in 0..n {
                    shifted[(i, i)] += shift;
                }
                Cholesky::new(shifted)
                    .ok_or_else(|| Error::Solver("Schur complement is not positive definite".into()))?
            }
        };
        Ok(Self {
            blocks,
            border,
            schur: chol,
        })
    }

    /// Solves `M y = r` in place.
    fn solve(&self, n: usize, r: &mut [f64]) {
        let nu = self.blocks.len();
        let mut rs = DVector::from_column_slice(&r[nu * n..]);
        let mut tmp = vec![0.0; n];
        for u in 0..nu {
            tmp.copy_from_slice(&r[u * n..(u + 1) * n]);
            self.blocks[u].solve_in_place(&mut tmp);
            for k in 0..n {
                rs[k] -= self.border[u][k] * tmp[k];
            }
        }
        self.schur.solve_mut(&mut rs);
        for u in 0..nu {
            let block = &mut r[u * n..(u + 1) * n];
            for k in 0..n {
                block[k] -= self.border[u][k] * rs[k];
            }
            self.blocks[u].solve_in_place(block);
        }
        r[nu * n..].copy_from_slice(rs.as_slice());
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const CENTRALITY: f64 = 1e-2;

/// One bound `w = x_i - l >= 0` or `w = u - x_i >= 0`.
#[derive(Debug, Clone, Copy)]
enum Slot {
    Lower(usize, f64),
    Upper(usize, f64),
}

impl Slot {
    fn index(self) -> usize {
        match self {
            Slot::Lower(i, _) | Slot::Upper(i, _) => i,
        }
    }

    fn slack(self, x: &[f64]) -> f64 {
        match self {
            Slot::Lower(i, l) => x[i] - l,
            Slot::Upper(i, u) => u - x[i],
        }
    }

    /// Change of the slack along `dx`.
    fn along(self, dx: &[f64]) -> f64 {
        match self {
            Slot::Lower(i, _) => dx[i],
            Slot::Upper(i, _) => -dx[i],
        }
    }

    /// Adds `v` times the slack's gradient to `out`.
    fn scatter(self, v: f64, out: &mut [f64]) {
        match self {
            Slot::Lower(i, _) => out[i] += v,
            Slot::Upper(i, _) => out[i] -= v,
        }
    }
}

fn slots(data: &VarData) -> Vec<Slot> {
    let mut out = Vec::new();
    for i in 0..data.fixed.len() {
        if data.fixed[i] {
            continue;
        }
        if data.lower[i].is_finite() {
            out.push(Slot::Lower(i, data.lower[i]));
        }
        if data.upper[i].is_finite() {
            out.push(Slot::Upper(i, data.upper[i]));
        }
    }
    out
}

/// Solves the QP to the tight tolerances if possible. Assumes the feasible set
/// has a nonempty interior (phase one is the caller's job).
pub(crate) fn solve_qp(qp: &StructuredQp, settings: &IpmSettings) -> Result<QpSolution> {
    let nv = qp.n_vars();
    let m = qp.n_rows();
    let data = qp.variable_data();
    let b = qp.rhs();
    let slots = slots(&data);
    let ns = slots.len();
    let n_comp = ns.max(1) as f64;

    // Interior starting point.
    let mut x = vec![0.0; nv];
    for i in 0..nv {
        if data.fixed[i] {
            continue;
        }
        let (lo, up) = (data.lower[i], data.upper[i]);
        let guess = if data.hess[i] > 0.0 {
            -data.lin[i] / data.hess[i]
        } else {
            0.0
        };
        x[i] = match (lo.is_finite(), up.is_finite()) {
            (true, true) => {
                let w = up - lo;
                guess.clamp(lo + 0.25 * w, up - 0.25 * w)
            }
            (true, false) => guess.max(lo + 1.0),
            (false, true) => guess.min(up - 1.0),
            (false, false) => guess,
        };
    }
    let mut y = vec![0.0; m];
    let mut z = vec![1.0; ns];
    let mut w = vec![0.0; ns];

    let b_norm = 1.0 + inf_norm(&b);
    let g_norm = 1.0 + inf_norm(&data.lin);

    let mut rp = vec![0.0; m];
    let mut rd = vec![0.0; nv];
    let mut aty = vec![0.0; nv];
    let mut q = vec![0.0; nv];
    let mut hess = vec![0.0; nv];
    let mut dx = vec![0.0; nv];
    let mut dy = vec![0.0; m];
    let mut dw = vec![0.0; ns];
    let mut dz = vec![0.0; ns];
    let mut corr = vec![0.0; ns];
    let mut xi = vec![0.0; nv];
    let mut tmp_rows = vec![0.0; m];
    let mut tmp_vars = vec![0.0; nv];

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;

    for iter in 0..settings.max_iter {
        iterations = iter;
        qp.mul_a(&x, &mut rp);
        for (r, bi) in rp.iter_mut().zip(&b) {
            *r -= bi;
        }
        qp.mul_at(&y, &mut aty);
        for i in 0..nv {
            rd[i] = data.hess[i] * x[i] + data.lin[i] - aty[i];
        }
        let mut gap = 0.0;
        for (j, slot) in slots.iter().enumerate() {
            w[j] = slot.slack(&x);
            gap += w[j] * z[j];
            slot.scatter(-z[j], &mut rd);
        }
        for i in 0..nv {
            if data.fixed[i] {
                rd[i] = 0.0;
            }
        }
        let mu = gap / n_comp;
        let obj = qp.objective(&x);
        let pres = inf_norm(&rp) / b_norm;
        let dres = inf_norm(&rd) / g_norm;
        let rel_gap = gap / (1.0 + obj.abs());

        if pres <= settings.loose_feas && dres <= settings.loose_feas && rel_gap <= settings.loose_gap {
            let score = rel_gap.max(pres).max(dres);
            if best.as_ref().is_none_or(|(s, _)| score < *s) {
                best = Some((score, x.clone()));
            }
        }
        if pres <= settings.tight_feas && dres <= settings.tight_feas && rel_gap <= settings.tight_gap {
            return Ok(QpSolution {
                objective: obj,
                x,
                iterations: iter,
            });
        }

        hess.copy_from_slice(&data.hess);
        for (j, slot) in slots.iter().enumerate() {
            hess[slot.index()] += z[j] / w[j];
        }
        for i in 0..nv {
            q[i] = if data.fixed[i] { 0.0 } else { 1.0 / hess[i].max(1e-300) };
        }
        let factor = match NormalFactor::new(qp, &q) {
            Ok(f) => f,
            Err(e) => {
                if best.is_some() {
                    break;
                }
                return Err(e);
            }
        };

        let mut newton = |xi: &[f64], dx: &mut [f64], dy: &mut [f64]| {
            for i in 0..nv {
                tmp_vars[i] = q[i] * xi[i];
            }
            qp.mul_a(&tmp_vars, &mut tmp_rows);
            for r in 0..m {
                dy[r] = -rp[r] - tmp_rows[r];
            }
            factor.solve(qp.n, dy);
            qp.mul_at(dy, &mut tmp_vars);
            for i in 0..nv {
                dx[i] = q[i] * (xi[i] + tmp_vars[i]);
            }
        };
        // `-rd` plus each slack's gradient scaled by `scaled_residual(j)`.
        let rhs = |scaled_residual: &dyn Fn(usize) -> f64, xi: &mut [f64]| {
            for i in 0..nv {
                xi[i] = -rd[i];
            }
            for (j, slot) in slots.iter().enumerate() {
                slot.scatter(scaled_residual(j), xi);
            }
            for i in 0..nv {
                if data.fixed[i] {
                    xi[i] = 0.0;
                }
            }
        };

        // Predictor.
        rhs(&|j| -z[j], &mut xi);
        newton(&xi, &mut dx, &mut dy);
        for (j, slot) in slots.iter().enumerate() {
            dw[j] = slot.along(&dx);
            dz[j] = -z[j] - z[j] * dw[j] / w[j];
        }
        let alpha_aff = max_step(&w, &z, &dw, &dz);
        let mut mu_aff = 0.0;
        for j in 0..ns {
            mu_aff += (w[j] + alpha_aff * dw[j]) * (z[j] + alpha_aff * dz[j]);
        }
        mu_aff /= n_comp;
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).clamp(0.0, 1.0) } else { 0.0 };
        let smu = sigma * mu;

        // Corrector, reusing the affine direction for the second-order term.
        for j in 0..ns {
            corr[j] = dw[j] * dz[j];
        }
        let residual = |j: usize| smu - w[j] * z[j] - corr[j];
        rhs(&|j| residual(j) / w[j], &mut xi);
        newton(&xi, &mut dx, &mut dy);
        for (j, slot) in slots.iter().enumerate() {
            dw[j] = slot.along(&dx);
            dz[j] = (residual(j) - z[j] * dw[j]) / w[j];
        }
        let mut alpha = (0.995 * max_step(&w, &z, &dw, &dz)).min(1.0);
        // Stay in a wide neighbourhood of the central path: no product may
        // fall far below the average, or later affine steps get blocked.
        let products = |a: f64| {
            let (mut lowest, mut total) = (f64::INFINITY, 0.0);
            for j in 0..ns {
                let p = (w[j] + a * dw[j]) * (z[j] + a * dz[j]);
                lowest = lowest.min(p);
                total += p;
            }
            (lowest, total / n_comp)
        };
        let (lowest0, mean0) = products(0.0);
        let target = CENTRALITY.min(0.5 * lowest0 / mean0);
        for _ in 0..60 {
            let (lowest, mean) = products(alpha);
            if lowest >= target * mean {
                break;
            }
            alpha *= 0.8;
        }
        let finite = dx.iter().chain(&dz).chain(dy.iter()).all(|v| v.is_finite());
        if !finite || !alpha.is_finite() || alpha < 1e-14 {
            break;
        }
        for i in 0..nv {
            x[i] += alpha * dx[i];
        }
        for j in 0..ns {
            z[j] += alpha * dz[j];
        }
        for r in 0..m {
            y[r] += alpha * dy[r];
        }
        iterations = iter + 1;
    }

    match best {
        Some((_, x)) => Ok(QpSolution {
            objective: qp.objective(&x),
            x,
            iterations,
        }),
        None => Err(Error::Solver(format!(
            "interior-point method did not converge in {iterations} iterations"
        ))),
    }
}

/// Largest step in `(0, 1]` keeping every slack and dual nonnegative.
fn max_step(w: &[f64], z: &[f64], dw: &[f64], dz: &[f64]) -> f64 {
    let mut alpha: f64 = 1.0;
    for j in 0..w.len() {
        if dw[j] < 0.0 {
            alpha = alpha.min(-w[j] / dw[j]);
        }
        if dz[j] < 0.0 {
            alpha = alpha.min(-z[j] / dz[j]);
        }
    }
    alpha
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> IpmSettings {
        IpmSettings {
            max_iter: 200,
            tight_feas: 1e-11,
            tight_gap: 1e-13,
            loose_feas: 1e-8,
            loose_gap: 1e-6,
        }
    }

    fn unit(p_max: f64, capacity: f64, soc0: f64, n: usize) -> UnitBlock {
        UnitBlock {
            p_max,
            capacity,
            eta_chg: 1.0,
            eta_dch: 1.0,
            e0: soc0 * capacity,
            fix_chg: vec![false; n],
            fix_dch: vec![false; n],
        }
    }

    fn tracking(units: Vec<UnitBlock>, target: Vec<f64>, dt: f64) -> StructuredQp {
        let n = target.len();
        StructuredQp {
            n,
            dt,
            reg: 1e-6,
            units,
            aggs: vec![AggColumn {
                hess: 2.0,
                lin: target.iter().map(|t| 2.0 * t).collect(),
                lower: None,
                upper: None,
                coef: -1.0,
            }],
            constant: target.iter().map(|t| t * t).sum(),
        }
    }

    #[test]
    fn tridiagonal_solve_matches_dense() {
        let diag = [4.0, 5.0, 6.0, 3.0];
        let off = [1.0, -2.0, 0.5];
        let tri = Tridiag::factor(&diag, &off);
        let mut r = [1.0, 2.0, 3.0, 4.0];
        tri.solve_in_place(&mut r);
        let mut dense = DMatrix::<f64>::zeros(4, 4);
        for i in 0..4 {
            dense[(i, i)] = diag[i];
        }
        for i in 0..3 {
            dense[(i, i + 1)] = off[i];
            dense[(i + 1, i)] = off[i];
        }
        let back = dense * DVector::from_column_slice(&r);
        for (i, v) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            assert!((back[i] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_factor_matches_dense_system() {
        let n = 4;
        let mut lossy = unit(0.5, 2.0, 0.2, n);
        lossy.eta_chg = 0.9;
        lossy.eta_dch = 0.8;
        let qp = tracking(vec![unit(1.0, 1.0, 0.5, n), lossy], vec![0.3, -0.1, 0.7, 0.2], 0.25);
        let nv = qp.n_vars();
        let m = qp.n_rows();
        let q: Vec<f64> = (0..nv).map(|i| 0.3 + (i % 7) as f64 * 0.1).collect();
        let factor = NormalFactor::new(&qp, &q).unwrap();

        // Dense A Q A^T assembled column by column through mul_a.
        let mut a = DMatrix::<f64>::zeros(m, nv);
        let mut e = vec![0.0; nv];
        let mut col = vec![0.0; m];
        for j in 0..nv {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            qp.mul_a(&e, &mut col);
            for r in 0..m {
                a[(r, j)] = col[r];
            }
        }
        let qd = DMatrix::from_diagonal(&DVector::from_vec(q));
        let normal = &a * qd * a.transpose();
        let rhs: Vec<f64> = (0..m).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = rhs.clone();
        factor.solve(n, &mut y);
        let back = normal * DVector::from_vec(y);
        for r in 0..m {
            assert!((back[r] - rhs[r]).abs() < 1e-10, "row {r}");
        }
    }

    #[test]
    fn tracking_within_limits_is_exact() {
        let n = 3;
        let qp = tracking(vec![unit(1.0, 1.0, 0.5, n)], vec![0.2, -0.3, 0.1], 0.25);
        let sol = solve_qp(&qp, &settings()).unwrap();
        for k in 0..n {
            let net = sol.p_chg(&qp, 0, k) - sol.p_dch(&qp, 0, k);
            // residual target + net ~ 0
            assert!((net + [0.2, -0.3, 0.1][k]).abs() < 1e-5, "step {k}");
        }
    }

    #[test]
    fn power_limit_binds() {
        let qp = tracking(vec![unit(1.0, 10.0, 0.5, 1)], vec![3.0], 0.25);
        let sol = solve_qp(&qp, &settings()).unwrap();
        let net = sol.p_chg(&qp, 0, 0) - sol.p_dch(&qp, 0, 0);
        assert!((net + 1.0).abs() < 1e-7);
        assert!((sol.objective - 4.0).abs() < 1e-5);
    }
}

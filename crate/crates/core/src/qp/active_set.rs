use nalgebra::{Cholesky, DMatrix, DVector};

use super::linalg::column_qr;
use super::{KktResiduals, QpOptions, QpSolution, QpStatus, QuadraticProgram};

const DEPENDENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fix {
    Lower,
    Upper,
}

#[derive(Debug, Clone)]
struct WorkingSet {
    fixed: Vec<Option<Fix>>,
    active: Vec<bool>,
}

impl WorkingSet {
    fn at_bounds(qp: &QuadraticProgram, x: &DVector<f64>) -> Self {
        let fixed = (0..x.len())
            .map(|i| {
                if x[i] == qp.lower[i] {
                    Some(Fix::Lower)
                } else if x[i] == qp.upper[i] {
                    Some(Fix::Upper)
                } else {
                    None
                }
            })
            .collect();
        Self { fixed, active: vec![false; qp.a_in.nrows()] }
    }
}

struct Outcome {
    status: QpStatus,
    /// Multipliers of equality rows followed by all inequality rows.
    rows: DVector<f64>,
    /// `grad + A^T mu` over every variable.
    reduced: DVector<f64>,
    iterations: usize,
}

struct Core<'a> {
    qp: &'a QuadraticProgram,
    eps: f64,
    in_norms: Vec<f64>,
}

enum Block {
    Row(usize),
    Var(usize, Fix),
}

impl<'a> Core<'a> {
    fn new(qp: &'a QuadraticProgram, eps: f64) -> Self {
        let in_norms = (0..qp.a_in.nrows()).map(|r| qp.a_in.row(r).norm()).collect();
        Self { qp, eps, in_norms }
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.qp.gradient(x);
        g.axpy(self.eps, x, 1.0);
        g
    }

    fn row_entry(&self, row: usize, col: usize) -> f64 {
        let me = self.qp.a_eq.nrows();
        if row < me {
            self.qp.a_eq[(row, col)]
        } else {
            self.qp.a_in[(row - me, col)]
        }
    }

    /// `(H_ff + eps I) Z` where `free` is sorted, so the Hessian-carrying
    /// free variables form a prefix.
    fn hessian_times(&self, free: &[usize], z: &DMatrix<f64>) -> DMatrix<f64> {
        let nh = self.qp.hessian.nrows();
        let prefix = free.iter().take_while(|&&i| i < nh).count();
        let mut out = z * self.eps;
        if prefix > 0 {
            let mut hff = DMatrix::zeros(prefix, prefix);
            for a in 0..prefix {
                for b in 0..prefix {
                    hff[(a, b)] = self.qp.hessian[(free[a], free[b])];
                }
            }
            let part = hff * z.rows(0, prefix);
            let mut top = out.rows_mut(0, prefix);
            top += part;
        }
        out
    }

    fn run(&self, x: &mut DVector<f64>, ws: &mut WorkingSet, max_iter: usize, opts: &QpOptions) -> Outcome {
        let qp = self.qp;
        let nv = qp.num_vars();
        let me = qp.a_eq.nrows();
        let mi = qp.a_in.nrows();
        let mut zero_steps = 0usize;
        let mut last_rows = DVector::zeros(me + mi);
        let mut last_reduced = self.gradient(x);
        for it in 0..max_iter {
            let bland = zero_steps > opts.bland_after;
            let free: Vec<usize> = (0..nv).filter(|&i| ws.fixed[i].is_none()).collect();
            let rows: Vec<usize> = (0..me).chain((0..mi).filter(|&r| ws.active[r]).map(|r| me + r)).collect();
            let nf = free.len();
            let mut ct = DMatrix::zeros(nf, rows.len());
            for (c, &r) in rows.iter().enumerate() {
                for (fi, &i) in free.iter().enumerate() {
                    ct[(fi, c)] = self.row_entry(r, i);
                }
            }
            let grad = self.gradient(x);
            let gf = DVector::from_iterator(nf, free.iter().map(|&i| grad[i]));
            let qr = column_qr(&ct, DEPENDENCE_TOL);
            let nz = nf - qr.rank();
            let mut pf = DVector::zeros(nf);
            let mut predicted = 0.0;
            if nz > 0 {
                let z = qr.null_space();
                let hz = self.hessian_times(&free, &z);
                let mut m = z.transpose() * &hz;
                m = (&m + m.transpose()) * 0.5;
                let rhs = -(z.transpose() * &gf);
                let pz = cholesky_solve(m, &rhs);
                predicted = 0.5 * pz.dot(&rhs);
                pf = &z * pz;
            }
            let f = qp.objective(x);
            let xnorm = x.amax();
            let stationary = predicted <= 1e-14 * (1.0 + f.abs()) || pf.amax() <= 1e-13 * (1.0 + xnorm);

            if stationary {
                let q1 = qr.range();
                let mu_ind = qr.solve_upper(&(-(q1.transpose() * &gf)));
                let mut mu = DVector::zeros(rows.len());
                for (c, &j) in qr.independent.iter().enumerate() {
                    mu[j] = mu_ind[c];
                }
                let mut reduced = grad.clone();
                for (c, &r) in rows.iter().enumerate() {
                    if mu[c] != 0.0 {
                        if r < me {
                            reduced.axpy(mu[c], &qp.a_eq.row(r).transpose(), 1.0);
                        } else {
                            reduced.axpy(mu[c], &qp.a_in.row(r - me).transpose(), 1.0);
                        }
                    }
                }
                let mut row_mult = DVector::zeros(me + mi);
                for (c, &r) in rows.iter().enumerate() {
                    row_mult[r] = mu[c];
                }
                last_rows = row_mult;
                last_reduced = reduced.clone();

                let tol = opts.multiplier_tol * (1.0 + grad.amax());
                // Candidate keys: inequality rows first, then variables.
                let mut best: Option<(f64, usize)> = None;
                let mut consider = |val: f64, key: usize| {
                    if val < -tol {
                        let better = match best {
                            None => true,
                            Some((bv, bk)) => {
                                if bland {
                                    key < bk
                                } else {
                                    val < bv || (val == bv && key < bk)
                                }
                            }
                        };
                        if better {
                            best = Some((val, key));
                        }
                    }
                };
                for r in 0..mi {
                    if ws.active[r] {
                        consider(last_rows[me + r], r);
                    }
                }
                for i in 0..nv {
                    if qp.lower[i] == qp.upper[i] {
                        continue;
                    }
                    match ws.fixed[i] {
                        Some(Fix::Lower) => consider(reduced[i], mi + i),
                        Some(Fix::Upper) => consider(-reduced[i], mi + i),
                        None => {}
                    }
                }
                match best {
                    None => {
                        return Outcome { status: QpStatus::Optimal, rows: last_rows, reduced: last_reduced, iterations: it + 1 };
                    }
                    Some((_, key)) => {
                        if key < mi {
                            ws.active[key] = false;
                        } else {
                            ws.fixed[key - mi] = None;
                        }
                        zero_steps += 1;
                    }
                }
                continue;
            }

            let pnorm = pf.norm();
            let mut alpha = 1.0;
            let mut block = None;
            for r in 0..mi {
                if ws.active[r] {
                    continue;
                }
                let mut ap = 0.0;
                for (fi, &i) in free.iter().enumerate() {
                    ap += qp.a_in[(r, i)] * pf[fi];
                }
                if ap > 1e-14 * self.in_norms[r] * pnorm {
                    let slack = qp.b_in[r] - qp.a_in.row(r).transpose().dot(x);
                    let t = slack.max(0.0) / ap;
                    if t < alpha {
                        alpha = t;
                        block = Some(Block::Row(r));
                    }
                }
            }
            for (fi, &i) in free.iter().enumerate() {
                let p = pf[fi];
                if p < -1e-14 * pnorm && qp.lower[i].is_finite() {
                    let t = (x[i] - qp.lower[i]).max(0.0) / -p;
                    if t < alpha {
                        alpha = t;
                        block = Some(Block::Var(i, Fix::Lower));
                    }
                } else if p > 1e-14 * pnorm && qp.upper[i].is_finite() {
                    let t = (qp.upper[i] - x[i]).max(0.0) / p;
                    if t < alpha {
                        alpha = t;
                        block = Some(Block::Var(i, Fix::Upper));
                    }
                }
            }
            for (fi, &i) in free.iter().enumerate() {
                x[i] += alpha * pf[fi];
            }
            match block {
                Some(Block::Row(r)) => ws.active[r] = true,
                Some(Block::Var(i, side)) => {
                    ws.fixed[i] = Some(side);
                    x[i] = if side == Fix::Lower { qp.lower[i] } else { qp.upper[i] };
                }
                None => {}
            }
            if alpha * pnorm <= 1e-14 * (1.0 + xnorm) {
                zero_steps += 1;
            } else {
                zero_steps = 0;
            }
        }
        Outcome { status: QpStatus::MaxIter, rows: last_rows, reduced: last_reduced, iterations: max_iter }
    }
}

fn cholesky_solve(m: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let scale = m.diagonal().amax().max(1e-300);
    let mut jitter = 0.0;
    loop {
        let mut mm = m.clone();
        for i in 0..mm.nrows() {
            mm[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(mm) {
            return ch.solve(rhs);
        }
        jitter = if jitter == 0.0 { 1e-14 * scale } else { jitter * 10.0 };
    }
}

fn data_scale(qp: &QuadraticProgram) -> f64 {
    let finite_max = |v: &DVector<f64>| v.iter().filter(|x| x.is_finite()).fold(0.0f64, |m, x| m.max(x.abs()));
    1.0 + finite_max(&qp.b_eq).max(finite_max(&qp.b_in))
}

fn primal_violation(qp: &QuadraticProgram, x: &DVector<f64>) -> f64 {
    let mut v = 0.0f64;
    if qp.a_eq.nrows() > 0 {
        v = v.max((&qp.a_eq * x - &qp.b_eq).amax());
    }
    if qp.a_in.nrows() > 0 {
        v = v.max((&qp.a_in * x - &qp.b_in).max());
    }
    for i in 0..x.len() {
        v = v.max(qp.lower[i] - x[i]).max(x[i] - qp.upper[i]);
    }
    v
}

fn clip(qp: &QuadraticProgram, x: &mut DVector<f64>) {
    for i in 0..x.len() {
        if !x[i].is_finite() {
            x[i] = 0.0;
        }
        x[i] = x[i].max(qp.lower[i]).min(qp.upper[i]);
    }
}

/// Minimum-norm correction of the equality residual over the free variables.
fn restore_equalities(qp: &QuadraticProgram, x: &DVector<f64>, ws: &WorkingSet) -> DVector<f64> {
    let me = qp.a_eq.nrows();
    if me == 0 {
        return x.clone();
    }
    let free: Vec<usize> = (0..x.len()).filter(|&i| ws.fixed[i].is_none()).collect();
    let r = &qp.b_eq - &qp.a_eq * x;
    let mut ct = DMatrix::zeros(free.len(), me);
    for row in 0..me {
        for (fi, &i) in free.iter().enumerate() {
            ct[(fi, row)] = qp.a_eq[(row, i)];
        }
    }
    let qr = column_qr(&ct, DEPENDENCE_TOL);
    let rhs = DVector::from_iterator(qr.rank(), qr.independent.iter().map(|&j| r[j]));
    let y = qr.solve_upper_transpose(&rhs);
    let p = qr.range() * y;
    let mut out = x.clone();
    for (fi, &i) in free.iter().enumerate() {
        out[i] += p[fi];
    }
    out
}

struct PhaseOne {
    x: DVector<f64>,
    ws: WorkingSet,
    value: f64,
    iterations: usize,
}

/// Minimizes the total violation with one artificial column per violated
/// row; rows already satisfied at `x0` stay hard.
fn phase_one(qp: &QuadraticProgram, x0: &DVector<f64>, opts: &QpOptions, max_iter: usize) -> PhaseOne {
    let nv = qp.num_vars();
    let me = qp.a_eq.nrows();
    let mi = qp.a_in.nrows();
    let r_eq = &qp.b_eq - &qp.a_eq * x0;
    let v_in = if mi > 0 { &qp.a_in * x0 - &qp.b_in } else { DVector::zeros(0) };
    let eq_art: Vec<usize> = (0..me).filter(|&r| r_eq[r] != 0.0).collect();
    let in_art: Vec<usize> = (0..mi).filter(|&r| v_in[r] > 0.0).collect();
    let na = eq_art.len() + in_art.len();
    let n1 = nv + na;

    let mut a_eq = DMatrix::zeros(me, n1);
    a_eq.columns_mut(0, nv).copy_from(&qp.a_eq);
    let mut x = DVector::zeros(n1);
    x.rows_mut(0, nv).copy_from(x0);
    for (k, &r) in eq_art.iter().enumerate() {
        a_eq[(r, nv + k)] = r_eq[r].signum();
        x[nv + k] = r_eq[r].abs();
    }
    let mut a_in = DMatrix::zeros(mi, n1);
    a_in.columns_mut(0, nv).copy_from(&qp.a_in);
    let mut art_of_row = vec![None; mi];
    for (k, &r) in in_art.iter().enumerate() {
        let c = nv + eq_art.len() + k;
        a_in[(r, c)] = -1.0;
        x[c] = v_in[r];
        art_of_row[r] = Some(c);
    }
    let mut lower = DVector::zeros(n1);
    let mut upper = DVector::from_element(n1, f64::INFINITY);
    lower.rows_mut(0, nv).copy_from(&qp.lower);
    upper.rows_mut(0, nv).copy_from(&qp.upper);
    let mut g = DVector::zeros(n1);
    g.rows_mut(nv, na).fill(1.0);
    let p1 = QuadraticProgram::new(n1).with_linear(g).with_equalities(a_eq, qp.b_eq.clone()).with_inequalities(a_in, qp.b_in.clone()).with_bounds(lower, upper);

    let mut ws = WorkingSet::at_bounds(&p1, &x);
    let core = Core::new(&p1, opts.regularization);
    let out = core.run(&mut x, &mut ws, max_iter, opts);
    let value = x.rows(nv, na).sum();
    let fixed = ws.fixed[..nv].to_vec();
    let active = (0..mi).map(|r| ws.active[r] && art_of_row[r].is_none_or(|c| ws.fixed[c].is_some())).collect();
    PhaseOne { x: x.rows(0, nv).into_owned(), ws: WorkingSet { fixed, active }, value, iterations: out.iterations }
}

pub(super) fn solve(qp: &QuadraticProgram, warm: Option<&DVector<f64>>, opts: &QpOptions) -> QpSolution {
    let nv = qp.num_vars();
    let me = qp.a_eq.nrows();
    let mi = qp.a_in.nrows();
    let max_iter = opts.max_iter.unwrap_or(50 * (nv + me + mi) + 500);
    let scale = data_scale(qp);
    let feas_tol = opts.feasibility_tol * scale;

    let mut x = warm.cloned().unwrap_or_else(|| DVector::zeros(nv));
    clip(qp, &mut x);
    let mut ws = WorkingSet::at_bounds(qp, &x);
    let mut phase1_value = 0.0;
    let mut iterations = 0;
    if primal_violation(qp, &x) > feas_tol {
        let restored = restore_equalities(qp, &x, &ws);
        if primal_violation(qp, &restored) <= feas_tol {
            x = restored;
            ws = WorkingSet::at_bounds(qp, &x);
        } else {
            let p1 = phase_one(qp, &x, opts, max_iter);
            iterations += p1.iterations;
            phase1_value = p1.value;
            x = p1.x;
            if p1.value > opts.phase1_tol * scale {
                let kkt = KktResiduals { primal: primal_violation(qp, &x) / scale, ..Default::default() };
                return QpSolution {
                    objective: qp.objective(&x),
                    x,
                    eq_multipliers: DVector::zeros(me),
                    ineq_multipliers: DVector::zeros(mi),
                    lower_multipliers: DVector::zeros(nv),
                    upper_multipliers: DVector::zeros(nv),
                    status: QpStatus::Infeasible,
                    kkt,
                    iterations,
                    phase1_value,
                };
            }
            ws = p1.ws;
        }
    }

    let core = Core::new(qp, opts.regularization);
    let out = core.run(&mut x, &mut ws, max_iter, opts);
    iterations += out.iterations;

    let eq_multipliers = out.rows.rows(0, me).into_owned();
    let ineq_multipliers = out.rows.rows(me, mi).into_owned();
    let mut lower_multipliers = DVector::zeros(nv);
    let mut upper_multipliers = DVector::zeros(nv);
    for i in 0..nv {
        if ws.fixed[i].is_some() {
            let r = out.reduced[i];
            let both = qp.lower[i] == qp.upper[i];
            match ws.fixed[i] {
                Some(Fix::Lower) if !both || r >= 0.0 => lower_multipliers[i] = r,
                Some(Fix::Upper) if !both || r <= 0.0 => upper_multipliers[i] = -r,
                _ if r >= 0.0 => lower_multipliers[i] = r,
                _ => upper_multipliers[i] = -r,
            }
        }
    }
    let kkt = kkt_residuals(qp, &x, &eq_multipliers, &ineq_multipliers, &lower_multipliers, &upper_multipliers);
    QpSolution {
        objective: qp.objective(&x),
        x,
        eq_multipliers,
        ineq_multipliers,
        lower_multipliers,
        upper_multipliers,
        status: out.status,
        kkt,
        iterations,
        phase1_value,
    }
}

fn kkt_residuals(qp: &QuadraticProgram, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, zl: &DVector<f64>, zu: &DVector<f64>) -> KktResiduals {
    let grad = qp.gradient(x);
    let mut stat = grad.clone();
    if !y.is_empty() {
        stat += qp.a_eq.transpose() * y;
    }
    if !z.is_empty() {
        stat += qp.a_in.transpose() * z;
    }
    stat -= zl;
    stat += zu;
    let gscale = 1.0 + qp.linear.amax() + if qp.hessian.nrows() > 0 { qp.hessian.amax() * x.amax() } else { 0.0 };
    let scale = data_scale(qp);
    let dual = [z, zl, zu].iter().map(|v| v.iter().fold(0.0f64, |m, &a| m.max(-a))).fold(0.0, f64::max);
    let mut comp = 0.0f64;
    if !z.is_empty() {
        let s = &qp.a_in * x - &qp.b_in;
        for r in 0..z.len() {
            comp = comp.max((z[r] * s[r]).abs());
        }
    }
    for i in 0..x.len() {
        if zl[i] != 0.0 {
            comp = comp.max((zl[i] * (x[i] - qp.lower[i])).abs());
        }
        if zu[i] != 0.0 {
            comp = comp.max((zu[i] * (qp.upper[i] - x[i])).abs());
        }
    }
    KktResiduals { stationarity: stat.amax() / gscale, primal: primal_violation(qp, x) / scale, dual: dual / gscale, complementarity: comp / (gscale * scale) }
}

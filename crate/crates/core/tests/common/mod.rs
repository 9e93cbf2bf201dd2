//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use lifted_lmpc::qp::QuadraticProgram;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Random feasible convex QP: `n <= 4` variables, 6 inequalities, box
/// `[-5, 5]`, optional single equality. `rank = 0` gives an LP.
pub fn random_qp(rng: &mut impl Rng) -> QuadraticProgram {
    let n = rng.random_range(1..=4);
    let rank = rng.random_range(0..=n);
    let l = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-2.0..2.0));
    let h = &l * l.transpose();
    let g = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let x_feas = DVector::from_fn(n, |_, _| rng.random_range(-4.0..4.0));
    let a_in = DMatrix::from_fn(6, n, |_, _| rng.random_range(-1.0..1.0));
    let b_in = &a_in * &x_feas + DVector::from_fn(6, |_, _| rng.random_range(0.0..1.5));
    let mut qp = QuadraticProgram::new(n)
        .with_hessian(h)
        .with_linear(g)
        .with_inequalities(a_in, b_in)
        .with_bounds(DVector::from_element(n, -5.0), DVector::from_element(n, 5.0));
    if n > 1 && rng.random_bool(0.3) {
        let a_eq = DMatrix::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0));
        let b_eq = &a_eq * &x_feas;
        qp = qp.with_equalities(a_eq, b_eq);
    }
    qp
}

/// Exhaustive active-set enumeration: every subset of inequalities and every
/// lower/upper/free choice per variable. Each KKT system is solved by SVD
/// least squares; the best primal-feasible consistent point wins.
pub fn enumerate_qp(qp: &QuadraticProgram) -> Option<(f64, DVector<f64>)> {
    let n = qp.num_vars();
    let mi = qp.a_in.nrows();
    let me = qp.a_eq.nrows();
    let mut h = DMatrix::zeros(n, n);
    let nh = qp.hessian.nrows();
    h.view_mut((0, 0), (nh, nh)).copy_from(&qp.hessian);
    let mut best: Option<(f64, DVector<f64>)> = None;
    let bound_choices = 3usize.pow(n as u32);
    for mask in 0..(1usize << mi) {
        for bc in 0..bound_choices {
            let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
            for r in 0..me {
                rows.push((qp.a_eq.row(r).transpose(), qp.b_eq[r]));
            }
            for r in 0..mi {
                if mask >> r & 1 == 1 {
                    rows.push((qp.a_in.row(r).transpose(), qp.b_in[r]));
                }
            }
            let mut code = bc;
            for i in 0..n {
                let c = code % 3;
                code /= 3;
                if c > 0 {
                    let mut e = DVector::zeros(n);
                    e[i] = 1.0;
                    rows.push((e, if c == 1 { qp.lower[i] } else { qp.upper[i] }));
                }
            }
            let k = rows.len();
            let mut kkt = DMatrix::zeros(n + k, n + k);
            let mut rhs = DVector::zeros(n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(&h);
            for i in 0..n {
                rhs[i] = -qp.linear[i];
            }
            for (j, (a, b)) in rows.iter().enumerate() {
                for i in 0..n {
                    kkt[(i, n + j)] = a[i];
                    kkt[(n + j, i)] = a[i];
                }
                rhs[n + j] = *b;
            }
            let svd = kkt.clone().svd(true, true);
            let Ok(sol) = svd.solve(&rhs, 1e-11) else { continue };
            if (&kkt * &sol - &rhs).amax() > 1e-8 {
                continue;
            }
            let x = sol.rows(0, n).into_owned();
            if !feasible(qp, &x, 1e-9) {
                continue;
            }
            let f = qp.objective(&x);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, x));
            }
        }
    }
    best
}

pub fn feasible(qp: &QuadraticProgram, x: &DVector<f64>, tol: f64) -> bool {
    (0..x.len()).all(|i| x[i] >= qp.lower[i] - tol && x[i] <= qp.upper[i] + tol)
        && (qp.a_eq.nrows() == 0 || (&qp.a_eq * x - &qp.b_eq).amax() <= tol)
        && (qp.a_in.nrows() == 0 || (&qp.a_in * x - &qp.b_in).max() <= tol)
}

/// Exact LP optimum over a simplex-constrained barycentric problem by vertex
/// enumeration: every basic solution with at most `rows` nonzero weights.
pub fn barycentric_lp_by_vertices(points: &[DVector<f64>], costs: &[f64], query: &DVector<f64>) -> Option<f64> {
    let k = points.len();
    let d = query.len();
    let rows = d + 1;
    let mut best: Option<f64> = None;
    for mask in 1usize..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|&i| mask >> i & 1 == 1).collect();
        if support.len() > rows {
            continue;
        }
        let mut a = DMatrix::zeros(rows, support.len());
        for (c, &i) in support.iter().enumerate() {
            for r in 0..d {
                a[(r, c)] = points[i][r];
            }
            a[(d, c)] = 1.0;
        }
        let mut b = DVector::zeros(rows);
        b.rows_mut(0, d).copy_from(query);
        b[d] = 1.0;
        let svd = a.clone().svd(true, true);
        let Ok(lam) = svd.solve(&b, 1e-12) else { continue };
        if (&a * &lam - &b).amax() > 1e-9 || lam.min() < -1e-10 {
            continue;
        }
        let v: f64 = support.iter().enumerate().map(|(c, &i)| lam[c] * costs[i]).sum();
        if best.is_none_or(|bv| v < bv) {
            best = Some(v);
        }
    }
    best
}

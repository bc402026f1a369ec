//! Krylov solvers for the linearized monotone systems.

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    /// Max-norm of the true residual `b − A x` at exit.
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Restarted GMRES with right preconditioning. Stops once the max-norm of
/// the residual falls below `tol`.
pub fn gmres(
    apply: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> SolveStats {
    let n = b.len();
    let mut iterations = 0;
    let residual_of = |apply: &mut dyn FnMut(&[f64]) -> Vec<f64>, x: &[f64]| -> Vec<f64> {
        let ax = apply(x);
        b.iter().zip(&ax).map(|(b, a)| b - a).collect()
    };
    let mut r = residual_of(apply, x);
    loop {
        let rinf = max_abs(&r);
        if rinf < tol || iterations >= max_iter || n == 0 {
            return SolveStats { iterations, residual: rinf, converged: rinf < tol };
        }
        let beta = dot(&r, &r).sqrt();
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut hmat = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        // estimate of ||r||_2 ratio to stop the inner cycle; the true max
        // norm is checked at restart
        let target2 = tol * 0.5;
        for k in 0..restart {
            let z = precond(&v[k]);
            let mut w = apply(&z);
            zs.push(z);
            iterations += 1;
            for i in 0..=k {
                hmat[i][k] = dot(&w, &v[i]);
                for (wj, vj) in w.iter_mut().zip(&v[i]) {
                    *wj -= hmat[i][k] * vj;
                }
            }
            let hn = dot(&w, &w).sqrt();
            hmat[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * hmat[i][k] + sn[i] * hmat[i + 1][k];
                hmat[i + 1][k] = -sn[i] * hmat[i][k] + cs[i] * hmat[i + 1][k];
                hmat[i][k] = t;
            }
            let den = hmat[k][k].hypot(hmat[k + 1][k]);
            cs[k] = if den == 0.0 { 1.0 } else { hmat[k][k] / den };
            sn[k] = if den == 0.0 { 0.0 } else { hmat[k + 1][k] / den };
            hmat[k][k] = den;
            hmat[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() < target2 || hn == 0.0 || iterations >= max_iter {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hmat[i][j] * y[j];
            }
            y[i] = s / hmat[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&zs[j]) {
                *xi += yj * zi;
            }
        }
        r = residual_of(apply, x);
    }
}

/// Preconditioned BiCGSTAB with the same stopping rule as `gmres`.
pub fn bicgstab(
    apply: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> SolveStats {
    let ax = apply(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; b.len()];
    let mut p = vec![0.0; b.len()];
    let mut it = 0;
    while it < max_iter {
        let rinf = max_abs(&r);
        if rinf < tol {
            return SolveStats { iterations: it, residual: rinf, converged: true };
        }
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let ph = precond(&p);
        v = apply(&ph);
        alpha = rho / dot(&r0, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(r, v)| r - alpha * v).collect();
        if max_abs(&s) < tol {
            for (xi, pi) in x.iter_mut().zip(&ph) {
                *xi += alpha * pi;
            }
            it += 1;
            break;
        }
        let sh = precond(&s);
        let t = apply(&sh);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..x.len() {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        it += 1;
    }
    // recompute the true residual
    let ax = apply(x);
    let res: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let rinf = max_abs(&res);
    SolveStats { iterations: it, residual: rinf, converged: rinf < tol }
}

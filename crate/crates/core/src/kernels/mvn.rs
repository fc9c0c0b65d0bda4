//! Normal distribution functions and rectangles in dimensions three and four.
//!
//! `Phi_m(b; R)` is obtained by integrating the Plackett derivative along the
//! path `R(t)` that scales the correlations of one detached coordinate by
//! `t in [0, 1]`. At `t = 0` the detached coordinate is independent and the
//! remainder is a lower-dimensional distribution function; the integrand is
//! a bivariate density times a conditional distribution function of
//! dimension `m - 2`.

use nalgebra::DMatrix;

use super::bvn::{bvn_pdf, BvnFixed};
use super::normal::cdf;
use super::quadrature::cached_rule;
use super::RectangleBounds;
use crate::error::{Result, WclError};

/// Quadrature rule on `t in [0, 1]` for an integrand with a pole at
/// `t = 1/max_abs_corr`. One panel when the pole is far enough away,
/// otherwise panels graded towards `t = 1`, each no longer than its distance
/// to the pole. Node counts target an absolute error near 1e-13.
fn path_rule(max_abs_corr: f64) -> Vec<(f64, f64)> {
    let pole = if max_abs_corr > 0.0 {
        1.0 / max_abs_corr
    } else {
        f64::INFINITY
    };
    let nodes_for = |a: f64, b: f64| -> usize {
        let x = 1.0 + 2.0 * (pole - b) / (b - a);
        let rate = (x + (x * x - 1.0).sqrt()).ln();
        ((17.3 / rate).ceil() as usize).clamp(6, 20)
    };
    let mut panels = Vec::new();
    let single = if pole.is_finite() {
        1.0 + 2.0 * (pole - 1.0)
    } else {
        f64::INFINITY
    };
    if single > 1.0 && (17.3 / (single + (single * single - 1.0).sqrt()).ln()) <= 20.0 {
        panels.push((0.0, 1.0));
    } else {
        let mut a = 0.0;
        while a < 1.0 {
            let b = (0.5 * (a + pole)).min(1.0);
            panels.push((a, b));
            a = b;
        }
    }
    let mut rule = Vec::new();
    for (a, b) in panels {
        let n = if pole.is_finite() { nodes_for(a, b) } else { 6 };
        let (x, w) = cached_rule(n);
        let half = 0.5 * (b - a);
        for (x, w) in x.iter().zip(w) {
            rule.push((a + half * (x + 1.0), half * w));
        }
    }
    rule
}

/// Correlation matrix of dimension at most four, stored inline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallCorr {
    m: usize,
    r: [[f64; 4]; 4],
}

impl SmallCorr {
    pub fn identity(m: usize) -> Self {
        assert!(m <= 4);
        let mut r = [[0.0; 4]; 4];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        SmallCorr { m, r }
    }

    /// Builds from a closure giving the off-diagonal entries.
    pub fn from_fn(m: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut c = Self::identity(m);
        for i in 0..m {
            for j in (i + 1)..m {
                let v = f(i, j);
                c.r[i][j] = v;
                c.r[j][i] = v;
            }
        }
        c
    }

    pub fn from_matrix(r: &DMatrix<f64>) -> Result<Self> {
        let m = r.nrows();
        if m == 0 || m > 4 || r.ncols() != m {
            return Err(WclError::Domain(format!(
                "expected a square matrix of size 1..=4, got {}x{}",
                m,
                r.ncols()
            )));
        }
        for i in 0..m {
            if (r[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(WclError::Domain("correlation matrix must have unit diagonal".into()));
            }
            for j in 0..m {
                if (r[(i, j)] - r[(j, i)]).abs() > 1e-12 {
                    return Err(WclError::Domain("correlation matrix must be symmetric".into()));
                }
            }
        }
        if r.clone().cholesky().is_none() {
            return Err(WclError::Domain("correlation matrix is not positive definite".into()));
        }
        Ok(Self::from_fn(m, |i, j| r[(i, j)]))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.r[i][j]
    }

    pub fn sub(&self, idx: &[usize]) -> SmallCorr {
        SmallCorr::from_fn(idx.len(), |i, j| self.r[idx[i]][idx[j]])
    }
}

/// Distribution function `P(Z <= b)` for `m <= 4`; infinite bounds are
/// reduced before integration.
pub fn mvn_cdf_small(b: &[f64], r: &SmallCorr) -> f64 {
    debug_assert_eq!(b.len(), r.dim());
    let mut keep = [0usize; 4];
    let mut n = 0;
    for (i, &v) in b.iter().enumerate() {
        if v == f64::NEG_INFINITY {
            return 0.0;
        }
        if v != f64::INFINITY {
            keep[n] = i;
            n += 1;
        }
    }
    let keep = &keep[..n];
    let cuts: Vec<&[f64]> = keep.iter().map(|&i| std::slice::from_ref(&b[i])).collect();
    let sub = if n == b.len() { *r } else { r.sub(keep) };
    cdf_grid(&cuts, &sub)[0]
}

/// Distribution function on the product grid `cuts[0] x ... x cuts[m-1]`
/// of finite points, `m <= 4`. The result is row-major with the last
/// coordinate varying fastest.
pub fn cdf_grid(cuts: &[&[f64]], r: &SmallCorr) -> Vec<f64> {
    debug_assert_eq!(cuts.len(), r.dim());
    match cuts.len() {
        0 => vec![1.0],
        1 => cuts[0].iter().map(|&b| cdf(b)).collect(),
        2 => grid2(cuts[0], cuts[1], r.get(0, 1)),
        3 => grid3(cuts, r),
        4 => grid4(cuts, r),
        _ => panic!("cdf_grid supports at most four coordinates"),
    }
}

fn grid2(c0: &[f64], c1: &[f64], rho: f64) -> Vec<f64> {
    let f = BvnFixed::new(rho);
    let mut out = Vec::with_capacity(c0.len() * c1.len());
    for &h in c0 {
        for &k in c1 {
            out.push(f.cdf(h, k));
        }
    }
    out
}

fn strides(cuts: &[&[f64]]) -> [usize; 4] {
    let mut s = [0usize; 4];
    let mut acc = 1;
    for i in (0..cuts.len()).rev() {
        s[i] = acc;
        acc *= cuts[i].len();
    }
    s
}

/// Normalised conditional law of one coordinate given two others fixed:
/// returns weights on the two conditioning values and the residual
/// variance.
#[inline]
fn regression2(r0k: f64, r0l: f64, rkl: f64) -> (f64, f64, f64) {
    let det = 1.0 - r0k * r0k;
    let c0 = (r0l - r0k * rkl) / det;
    let ck = (rkl - r0k * r0l) / det;
    (c0, ck, 1.0 - (c0 * r0l + ck * rkl))
}

#[inline]
fn conditional_step(diff: f64, var: f64) -> f64 {
    if var <= 1e-300 {
        if diff >= 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        cdf(diff / var.sqrt())
    }
}

fn grid3(cuts: &[&[f64]], r: &SmallCorr) -> Vec<f64> {
    // keep the most correlated pair intact as the base pair
    let triples = [(2usize, 0usize, 1usize), (1, 0, 2), (0, 1, 2)];
    let &(a, p, q) = triples
        .iter()
        .max_by(|x, y| r.get(x.1, x.2).abs().total_cmp(&r.get(y.1, y.2).abs()))
        .unwrap();
    let st = strides(cuts);
    let mut out = vec![0.0; cuts.iter().map(|c| c.len()).product()];
    let base = grid2(cuts[p], cuts[q], r.get(p, q));
    for (ia, &ba) in cuts[a].iter().enumerate() {
        let pa = cdf(ba);
        for ip in 0..cuts[p].len() {
            for iq in 0..cuts[q].len() {
                out[ia * st[a] + ip * st[p] + iq * st[q]] = pa * base[ip * cuts[q].len() + iq];
            }
        }
    }
    let (rap, raq) = (r.get(a, p), r.get(a, q));
    if rap == 0.0 && raq == 0.0 {
        return out;
    }
    let rpq = r.get(p, q);
    for (t, wt) in path_rule(rap.abs().max(raq.abs())) {
        // derivative along rho_ak, the remaining coordinate l is conditioned
        for &(k, l, rak, ral) in &[(p, q, rap, raq), (q, p, raq, rap)] {
            if rak == 0.0 {
                continue;
            }
            let (sak, sal) = (t * rak, t * ral);
            let (c0, ck, var) = regression2(sak, sal, rpq);
            for (ia, &ba) in cuts[a].iter().enumerate() {
                for (ik, &bk) in cuts[k].iter().enumerate() {
                    let dens = bvn_pdf(ba, bk, sak);
                    if dens == 0.0 {
                        continue;
                    }
                    let scale = wt * rak * dens;
                    let mu = c0 * ba + ck * bk;
                    for (il, &bl) in cuts[l].iter().enumerate() {
                        out[ia * st[a] + ik * st[k] + il * st[l]] += scale * conditional_step(bl - mu, var);
                    }
                }
            }
        }
    }
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

fn grid4(cuts: &[&[f64]], r: &SmallCorr) -> Vec<f64> {
    // detach the coordinate with the weakest total dependence
    let a = (0..4)
        .min_by(|&x, &y| {
            let sx: f64 = (0..4).filter(|&j| j != x).map(|j| r.get(x, j).abs()).sum();
            let sy: f64 = (0..4).filter(|&j| j != y).map(|j| r.get(y, j).abs()).sum();
            sx.total_cmp(&sy)
        })
        .unwrap();
    let rest: Vec<usize> = (0..4).filter(|&j| j != a).collect();
    let st = strides(cuts);
    let mut out = vec![0.0; cuts.iter().map(|c| c.len()).product()];
    let rest_cuts: Vec<&[f64]> = rest.iter().map(|&i| cuts[i]).collect();
    let rest_corr = r.sub(&rest);
    let base = grid3(&rest_cuts, &rest_corr);
    let rs = strides(&rest_cuts);
    for (ia, &ba) in cuts[a].iter().enumerate() {
        let pa = cdf(ba);
        for i0 in 0..rest_cuts[0].len() {
            for i1 in 0..rest_cuts[1].len() {
                for i2 in 0..rest_cuts[2].len() {
                    out[ia * st[a] + i0 * st[rest[0]] + i1 * st[rest[1]] + i2 * st[rest[2]]] =
                        pa * base[i0 * rs[0] + i1 * rs[1] + i2 * rs[2]];
                }
            }
        }
    }
    let ra: [f64; 3] = [r.get(a, rest[0]), r.get(a, rest[1]), r.get(a, rest[2])];
    if ra.iter().all(|&v| v == 0.0) {
        return out;
    }
    let max_ra = ra.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut xl: Vec<(f64, f64)> = Vec::new();
    let mut xm: Vec<(f64, f64)> = Vec::new();
    for (t, wt) in path_rule(max_ra) {
        for k in 0..3 {
            if ra[k] == 0.0 {
                continue;
            }
            let (l, m) = match k {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let sak = t * ra[k];
            // conditional law of (Z_l, Z_m) given Z_a and Z_k
            let det = 1.0 - sak * sak;
            let cl = [t * ra[l], rest_corr.get(k, l)];
            let cm = [t * ra[m], rest_corr.get(k, m)];
            let solve = |c: [f64; 2]| [(c[0] - sak * c[1]) / det, (c[1] - sak * c[0]) / det];
            let wl = solve(cl);
            let wm = solve(cm);
            let var_l = 1.0 - (wl[0] * cl[0] + wl[1] * cl[1]);
            let var_m = 1.0 - (wm[0] * cm[0] + wm[1] * cm[1]);
            let cov = rest_corr.get(l, m) - (wl[0] * cm[0] + wl[1] * cm[1]);
            let degenerate = var_l <= 1e-300 || var_m <= 1e-300;
            let (sl, sm) = (var_l.max(0.0).sqrt(), var_m.max(0.0).sqrt());
            let fixed = if degenerate {
                None
            } else {
                Some(BvnFixed::new((cov / (sl * sm)).clamp(-1.0 + 1e-15, 1.0 - 1e-15)))
            };
            let (gk, gl, gm) = (rest[k], rest[l], rest[m]);
            for (ia, &ba) in cuts[a].iter().enumerate() {
                for (ik, &bk) in cuts[gk].iter().enumerate() {
                    let dens = bvn_pdf(ba, bk, sak);
                    if dens == 0.0 {
                        continue;
                    }
                    let scale = wt * ra[k] * dens;
                    let mu_l = wl[0] * ba + wl[1] * bk;
                    let mu_m = wm[0] * ba + wm[1] * bk;
                    let off = ia * st[a] + ik * st[gk];
                    match &fixed {
                        Some(f) => {
                            xl.clear();
                            xl.extend(cuts[gl].iter().map(|&b| {
                                let x = (b - mu_l) / sl;
                                (x, cdf(x))
                            }));
                            xm.clear();
                            xm.extend(cuts[gm].iter().map(|&b| {
                                let y = (b - mu_m) / sm;
                                (y, cdf(y))
                            }));
                            for (il, &(x, cx)) in xl.iter().enumerate() {
                                for (im, &(y, cy)) in xm.iter().enumerate() {
                                    out[off + il * st[gl] + im * st[gm]] += scale * f.cdf_finite(x, y, cx, cy);
                                }
                            }
                        }
                        None => {
                            for (il, &bl) in cuts[gl].iter().enumerate() {
                                let pl = conditional_step(bl - mu_l, var_l);
                                for (im, &bm) in cuts[gm].iter().enumerate() {
                                    out[off + il * st[gl] + im * st[gm]] +=
                                        scale * pl * conditional_step(bm - mu_m, var_m);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

/// Probabilities of all cells of the partition generated by extended cut
/// vectors. `cuts[j]` runs from `-inf` to `+inf` (length `K_j + 1`); the
/// result has `prod K_j` cells, row-major.
pub fn rectangle_table(cuts: &[&[f64]], r: &SmallCorr) -> Vec<f64> {
    let m = cuts.len();
    let dims: Vec<usize> = cuts.iter().map(|c| c.len()).collect();
    for c in cuts {
        debug_assert!(c.len() >= 2 && c[0] == f64::NEG_INFINITY && c[c.len() - 1] == f64::INFINITY);
    }
    // extended grid: index 0 is -inf (value 0), last index +inf (marginal)
    let mut grid = vec![0.0; dims.iter().product()];
    for mask in 0u32..(1 << m) {
        // bits set: coordinate sits at +inf
        let free: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) == 0).collect();
        let inner: Vec<&[f64]> = free.iter().map(|&i| &cuts[i][1..cuts[i].len() - 1]).collect();
        if inner.iter().any(|c| c.is_empty()) {
            continue;
        }
        let vals = cdf_grid(&inner, &r.sub(&free));
        let mut idx = vec![0usize; m];
        for (flat, v) in vals.iter().enumerate() {
            let mut rem = flat;
            for (pos, &i) in free.iter().enumerate().rev() {
                let n = inner[pos].len();
                idx[i] = 1 + rem % n;
                rem /= n;
            }
            for i in 0..m {
                if mask & (1 << i) != 0 {
                    idx[i] = dims[i] - 1;
                }
            }
            let mut off = 0;
            for i in 0..m {
                off = off * dims[i] + idx[i];
            }
            grid[off] = *v;
        }
    }
    difference_grid(grid, &dims)
}

/// Turns an extended distribution-function grid into cell probabilities by
/// differencing along every axis.
fn difference_grid(mut grid: Vec<f64>, dims: &[usize]) -> Vec<f64> {
    let m = dims.len();
    let mut cur: Vec<usize> = dims.to_vec();
    for axis in 0..m {
        let outer: usize = cur[..axis].iter().product();
        let inner: usize = cur[axis + 1..].iter().product();
        let n = cur[axis];
        let mut next = vec![0.0; outer * (n - 1) * inner];
        for o in 0..outer {
            for i in 1..n {
                for k in 0..inner {
                    next[(o * (n - 1) + i - 1) * inner + k] =
                        grid[(o * n + i) * inner + k] - grid[(o * n + i - 1) * inner + k];
                }
            }
        }
        cur[axis] = n - 1;
        grid = next;
    }
    for v in &mut grid {
        *v = v.max(0.0);
    }
    grid
}

/// Rectangle probability for `m in 1..=4` by inclusion–exclusion over the
/// `2^m` corners; corners with a `-inf` coordinate vanish.
pub fn rectangle_small(lower: &[f64], upper: &[f64], r: &SmallCorr) -> f64 {
    let m = lower.len();
    match m {
        1 => (cdf(upper[0]) - cdf(lower[0])).max(0.0),
        2 => super::bvn::rectangle(lower[0], upper[0], lower[1], upper[1], r.get(0, 1)),
        _ => {
            let mut total = 0.0;
            let mut corner = [0.0; 4];
            'corners: for mask in 0..(1u32 << m) {
                let mut sign = 1.0;
                for i in 0..m {
                    if mask & (1 << i) != 0 {
                        if lower[i] == f64::NEG_INFINITY {
                            continue 'corners;
                        }
                        corner[i] = lower[i];
                        sign = -sign;
                    } else {
                        corner[i] = upper[i];
                    }
                }
                total += sign * mvn_cdf_small(&corner[..m], r);
            }
            total.clamp(0.0, 1.0)
        }
    }
}

/// Rectangle probability under a general correlation matrix of dimension
/// one to four.
pub fn mvn_rectangle_small(b: &RectangleBounds, r: &DMatrix<f64>) -> Result<f64> {
    if b.dim() != r.nrows() {
        return Err(WclError::Domain(format!(
            "bounds have {} coordinates but the correlation matrix is {}x{}",
            b.dim(),
            r.nrows(),
            r.ncols()
        )));
    }
    let corr = SmallCorr::from_matrix(r)?;
    if b.dim() == 2 && corr.get(0, 1).abs() >= 1.0 {
        return Err(WclError::Domain("bivariate correlation outside (-1, 1)".into()));
    }
    Ok(rectangle_small(b.lower(), b.upper(), &corr))
}

//! Flat, group-major storage for the coordinate descent inner loops.

use nalgebra::DMatrix;

use super::LassoProblem;

/// Design, response, coefficients and residuals laid out so that every
/// group update walks contiguous memory.
///
/// * `x[(j n + i) r + row]` is column `j` of `X_i`.
/// * `y`, `resid`: `[(i m + k) r + row]`.
/// * `beta[(j n + i) m + k]`, so group `j` is the slice `j n m .. (j + 1) n m`.
pub(super) struct Flat {
    pub n: usize,
    pub r: usize,
    pub p: usize,
    pub m: usize,
    x: Vec<f64>,
    /// `a[j n + i] = ||x_ij||²`.
    a: Vec<f64>,
    y: Vec<f64>,
    pub beta: Vec<f64>,
    pub resid: Vec<f64>,
    c: Vec<f64>,
    cn: Vec<f64>,
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

impl Flat {
    pub fn new(problem: &LassoProblem, start: Option<&[DMatrix<f64>]>) -> Flat {
        let (n, r, p, m) = (problem.n(), problem.rows(), problem.p(), problem.m());
        let mut x = Vec::with_capacity(p * n * r);
        let mut a = Vec::with_capacity(p * n);
        for j in 0..p {
            for xi in problem.x() {
                let col = xi.column(j);
                x.extend(col.iter().copied());
                a.push(col.norm_squared());
            }
        }
        let y: Vec<f64> = problem.y().iter().flat_map(|yi| yi.iter().copied()).collect();
        let mut beta = vec![0.0; p * n * m];
        if let Some(start) = start {
            for (i, b) in start.iter().enumerate() {
                for j in 0..p {
                    for k in 0..m {
                        beta[(j * n + i) * m + k] = b[(j, k)];
                    }
                }
            }
        }
        let mut flat = Flat {
            n,
            r,
            p,
            m,
            x,
            a,
            y,
            beta,
            resid: Vec::new(),
            c: vec![0.0; n * m],
            cn: vec![0.0; n],
        };
        flat.resid = flat.residuals(&flat.beta);
        flat
    }

    fn xcol(&self, j: usize, i: usize) -> &[f64] {
        let s = (j * self.n + i) * self.r;
        &self.x[s..s + self.r]
    }

    pub fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        let (n, r, m) = (self.n, self.r, self.m);
        let mut out = self.y.clone();
        for j in 0..self.p {
            for i in 0..n {
                let xj = &self.x[(j * n + i) * r..(j * n + i + 1) * r];
                for k in 0..m {
                    let b = beta[(j * n + i) * m + k];
                    if b != 0.0 {
                        let dst = &mut out[(i * m + k) * r..(i * m + k + 1) * r];
                        for (d, x) in dst.iter_mut().zip(xj) {
                            *d -= b * x;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn group_norms_of(&self, beta: &[f64]) -> Vec<f64> {
        let len = self.n * self.m;
        beta.chunks(len).map(|g| dot(g, g).sqrt()).collect()
    }

    pub fn objective_of(&self, beta: &[f64], resid: &[f64], lam: f64) -> f64 {
        0.5 * dot(resid, resid) + lam * self.group_norms_of(beta).iter().sum::<f64>()
    }

    pub fn objective(&self, lam: f64) -> f64 {
        self.objective_of(&self.beta, &self.resid, lam)
    }

    /// Recomputes the residual from scratch, discarding accumulated rounding.
    pub fn refresh(&mut self) {
        self.resid = self.residuals(&self.beta);
    }

    fn correlation_norm(&self, j: usize) -> f64 {
        let (r, m) = (self.r, self.m);
        let mut s = 0.0;
        for i in 0..self.n {
            let xj = self.xcol(j, i);
            for k in 0..m {
                let v = dot(xj, &self.resid[(i * m + k) * r..(i * m + k + 1) * r]);
                s += v * v;
            }
        }
        s.sqrt()
    }

    /// Gap between the primal value and the dual objective at the scaled
    /// residual.
    pub fn duality_gap(&self, primal: f64, lam: f64) -> f64 {
        let worst = (0..self.p).map(|j| self.correlation_norm(j)).fold(0.0, f64::max);
        let s = if worst > lam { lam / worst } else { 1.0 };
        let dual = s * dot(&self.y, &self.resid) - 0.5 * s * s * dot(&self.resid, &self.resid);
        (primal - dual).max(0.0)
    }

    /// One pass of exact block minimization over every group.
    pub fn sweep(&mut self, lam: f64) {
        let (n, r, m) = (self.n, self.r, self.m);
        for j in 0..self.p {
            let base = j * n;
            for i in 0..n {
                let xs = (base + i) * r;
                let xj = &self.x[xs..xs + r];
                let aij = self.a[base + i];
                let mut norm = 0.0;
                for k in 0..m {
                    let rs = (i * m + k) * r;
                    let v = dot(xj, &self.resid[rs..rs + r]) + aij * self.beta[(base + i) * m + k];
                    self.c[i * m + k] = v;
                    norm += v * v;
                }
                self.cn[i] = norm;
            }
            let total: f64 = self.cn.iter().sum();
            let t = if total.sqrt() <= lam {
                0.0
            } else {
                group_radius(&self.cn, &self.a[base..base + n], lam)
            };
            for i in 0..n {
                let aij = self.a[base + i];
                let denom = aij * t + lam;
                let xs = (base + i) * r;
                for k in 0..m {
                    let idx = (base + i) * m + k;
                    let new = if t == 0.0 || denom == 0.0 {
                        0.0
                    } else {
                        self.c[i * m + k] * t / denom
                    };
                    let delta = new - self.beta[idx];
                    if delta != 0.0 {
                        let rs = (i * m + k) * r;
                        for (d, x) in self.resid[rs..rs + r].iter_mut().zip(&self.x[xs..xs + r]) {
                            *d -= delta * x;
                        }
                        self.beta[idx] = new;
                    }
                }
            }
        }
    }

    /// `β_i` as `p x m` matrices.
    pub fn matrices(&self) -> Vec<DMatrix<f64>> {
        let (n, m) = (self.n, self.m);
        (0..n)
            .map(|i| DMatrix::from_fn(self.p, m, |j, k| self.beta[(j * n + i) * m + k]))
            .collect()
    }
}

/// Norm `t = ||β_j||` of the block minimizer, the root of
/// `Σ_i ||c_i||² / (a_i t + λ)² = 1`. Newton from the left converges
/// monotonically because the left side is convex and decreasing in `t`.
fn group_radius(cn: &[f64], a: &[f64], lam: f64) -> f64 {
    if lam == 0.0 {
        return cn
            .iter()
            .zip(a)
            .filter(|(_, &a)| a > 0.0)
            .map(|(c, a)| c / (a * a))
            .sum::<f64>()
            .sqrt();
    }
    let f = |t: f64| -> (f64, f64) {
        let mut v = -1.0;
        let mut dv = 0.0;
        for (c, a) in cn.iter().zip(a) {
            let den = a * t + lam;
            let q = c / (den * den);
            v += q;
            dv -= 2.0 * q * a / den;
        }
        (v, dv)
    };
    let mut t = 0.0;
    for _ in 0..200 {
        let (v, dv) = f(t);
        if v <= 0.0 || dv == 0.0 {
            break;
        }
        let next = t - v / dv;
        if next <= t * (1.0 + 1e-15) {
            t = next.max(t);
            break;
        }
        t = next;
    }
    t
}

/// Anderson extrapolation `Σ_k c_k β_k` over the last iterates, with `c`
/// minimizing the norm of the combined successive differences subject to
/// `Σ c = 1`.
pub(super) fn anderson(history: &[Vec<f64>]) -> Option<Vec<f64>> {
    let k = history.len() - 1;
    let diffs: Vec<Vec<f64>> = (0..k)
        .map(|t| history[t + 1].iter().zip(&history[t]).map(|(a, b)| a - b).collect())
        .collect();
    let mut gram = DMatrix::from_fn(k, k, |a, b| dot(&diffs[a], &diffs[b]));
    let scale = gram.trace();
    if !(scale > 0.0) {
        return None;
    }
    for t in 0..k {
        gram[(t, t)] += 1e-12 * scale;
    }
    let z = gram.cholesky()?.solve(&nalgebra::DVector::from_element(k, 1.0));
    let total: f64 = z.sum();
    if !(total.abs() > 0.0) || !z.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut out = vec![0.0; history[0].len()];
    for t in 0..k {
        let w = z[t] / total;
        for (o, v) in out.iter_mut().zip(&history[t + 1]) {
            *o += w * v;
        }
    }
    Some(out)
}

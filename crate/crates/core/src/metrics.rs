//! Distances between empirical measures on phase space.
//!
//! `dist2_exact` and `distq_exact` compute true optimal-transport distances
//! between equal-size point clouds by exact assignment (shortest augmenting
//! path, O(N^3), capped at desk scale). `distq_coupled_upper` is the cheap
//! index-coupled upper bound produced by synchronous coupling. The quadratic
//! form algebra (equivalence constants p, q and the S factorization) lives
//! here as well.

use crate::error::{Error, Result};

/// Largest cloud size accepted by the exact assignment solver.
pub const ASSIGNMENT_CAP: usize = 512;

/// The perturbed metric Q(z) = a|z1|^2 + 2<z1,z2> + b|z2|^2 on phase space
/// R^{2d}. Positive definite iff a, b > 0 and ab > 1, which the constructor
/// enforces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticForm {
    a: f64,
    b: f64,
}

impl QuadraticForm {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput(format!(
                "form coefficients must be positive and finite, got a = {a}, b = {b}"
            )));
        }
        if a * b <= 1.0 {
            return Err(Error::InvalidInput(format!(
                "form is not positive definite: need a b > 1, got {}",
                a * b
            )));
        }
        Ok(QuadraticForm { a, b })
    }

    /// The form used by the contraction estimate: b = 2/gamma, a = b + gamma.
    /// Then a b = 2 (2 + gamma^2)/gamma^2 > 1 for every gamma > 0.
    pub fn contraction_form(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        let b = 2.0 / gamma;
        QuadraticForm::new(b + gamma, b)
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Q(z) for z = (z1, z2) split into halves of equal length d.
    pub fn eval(&self, z: &[f64]) -> f64 {
        debug_assert!(z.len() % 2 == 0);
        let d = z.len() / 2;
        let (z1, z2) = z.split_at(d);
        let mut n1 = 0.0;
        let mut cross = 0.0;
        let mut n2 = 0.0;
        for i in 0..d {
            n1 += z1[i] * z1[i];
            cross += z1[i] * z2[i];
            n2 += z2[i] * z2[i];
        }
        self.a * n1 + 2.0 * cross + self.b * n2
    }

    /// Q applied to the difference z - zhat.
    pub fn eval_diff(&self, z: &[f64], zhat: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), zhat.len());
        let d = z.len() / 2;
        let mut n1 = 0.0;
        let mut cross = 0.0;
        let mut n2 = 0.0;
        for i in 0..d {
            let u = z[i] - zhat[i];
            let v = z[d + i] - zhat[d + i];
            n1 += u * u;
            cross += u * v;
            n2 += v * v;
        }
        self.a * n1 + 2.0 * cross + self.b * n2
    }

    /// Equivalence constants p, q with p|z|^2 <= Q(z) <= q|z|^2:
    /// p, q = ((a + b) -/+ sqrt(4 + (b - a)^2)) / 2. Positivity of p is
    /// equivalent to a b > 1, which holds by construction.
    pub fn equivalence_constants(&self) -> (f64, f64) {
        let root = (4.0 + (self.b - self.a) * (self.b - self.a)).sqrt();
        let p = 0.5 * (self.a + self.b - root);
        let q = 0.5 * (self.a + self.b + root);
        (p, q)
    }

    pub fn factorization(&self) -> FormFactorization {
        FormFactorization::new(self)
    }
}

/// Block representation of M_Q = [[a I, I], [I, b I]] and its Cholesky-type
/// factor S = (1/sqrt(a)) [[a I, I], [0, sqrt(ab - 1) I]] with S^T S = M_Q.
/// All blocks are scalar multiples of the identity, so a 2x2 coefficient
/// matrix describes each operator exactly.
#[derive(Debug, Clone, Copy)]
pub struct FormFactorization {
    pub m_blocks: [[f64; 2]; 2],
    pub s_blocks: [[f64; 2]; 2],
}

impl FormFactorization {
    pub fn new(form: &QuadraticForm) -> Self {
        let (a, b) = (form.a, form.b);
        let ra = a.sqrt();
        FormFactorization {
            m_blocks: [[a, 1.0], [1.0, b]],
            s_blocks: [[ra, 1.0 / ra], [0.0, (a * b - 1.0).sqrt() / ra]],
        }
    }

    /// Max block-coefficient residual of S^T S - M_Q.
    pub fn residual_max(&self) -> f64 {
        let s = self.s_blocks;
        let sts = [
            [s[0][0] * s[0][0], s[0][0] * s[0][1]],
            [
                s[0][0] * s[0][1],
                s[0][1] * s[0][1] + s[1][1] * s[1][1],
            ],
        ];
        let mut worst = 0.0_f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((sts[i][j] - self.m_blocks[i][j]).abs());
            }
        }
        worst
    }

    /// xi = S z for z = (z1, z2) of even length.
    pub fn apply_s(&self, z: &[f64]) -> Vec<f64> {
        let d = z.len() / 2;
        let s = self.s_blocks;
        let mut out = vec![0.0; 2 * d];
        for i in 0..d {
            out[i] = s[0][0] * z[i] + s[0][1] * z[d + i];
            out[d + i] = s[1][1] * z[d + i];
        }
        out
    }

    /// <z, M_Q z>, the form value through the block matrix.
    pub fn quadratic_through_m(&self, z: &[f64]) -> f64 {
        let d = z.len() / 2;
        let m = self.m_blocks;
        let mut acc = 0.0;
        for i in 0..d {
            let w1 = m[0][0] * z[i] + m[0][1] * z[d + i];
            let w2 = m[1][0] * z[i] + m[1][1] * z[d + i];
            acc += z[i] * w1 + z[d + i] * w2;
        }
        acc
    }
}

/// An N x dim point cloud stored row-major. For phase-space clouds
/// dim = 2d with positions first.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn new(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::InvalidInput("empty point cloud".into()));
        }
        if data.len() != n * dim {
            return Err(Error::InvalidInput(format!(
                "cloud data length {} does not match {} x {}",
                data.len(),
                n,
                dim
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("cloud has non-finite entries".into()));
        }
        Ok(PointCloud { n, dim, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Returned by the dist_Q operations: the squared-cost infimum is the
/// native quantity of the analysis; the square root is provided alongside
/// (it halves fitted decay rates).
#[derive(Debug, Clone, Copy)]
pub struct QDistance {
    pub squared: f64,
}

impl QDistance {
    pub fn root(&self) -> f64 {
        self.squared.max(0.0).sqrt()
    }
}

fn check_pair(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.n != b.n || a.dim != b.dim {
        return Err(Error::InvalidInput(format!(
            "cloud shapes differ: {}x{} vs {}x{}",
            a.n, a.dim, b.n, b.dim
        )));
    }
    if a.n > ASSIGNMENT_CAP {
        return Err(Error::InvalidInput(format!(
            "cloud size {} exceeds the exact-assignment cap {}",
            a.n, ASSIGNMENT_CAP
        )));
    }
    Ok(())
}

/// Exact Wasserstein-2 distance between two equal-size uniform empirical
/// measures: sqrt of the minimal mean squared Euclidean cost over
/// assignments.
pub fn dist2_exact(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_pair(a, b)?;
    let cost = cost_matrix(a, b, |x, y| sq_euclid(x, y));
    let (assign, _) = solve_assignment(&cost, a.n)?;
    Ok((assigned_total(&cost, a.n, &assign) / a.n as f64).sqrt())
}

/// Exact dist_Q^2 between two equal-size clouds under the perturbed cost
/// Q(z - zhat); the infimum of the mean cost over assignments.
pub fn distq_exact(a: &PointCloud, b: &PointCloud, form: &QuadraticForm) -> Result<QDistance> {
    check_pair(a, b)?;
    let cost = cost_matrix(a, b, |x, y| form.eval_diff(x, y));
    let (assign, _) = solve_assignment(&cost, a.n)?;
    Ok(QDistance {
        squared: assigned_total(&cost, a.n, &assign) / a.n as f64,
    })
}

/// Index-coupled upper bound (1/N) sum Q(z_i - zhat_i) for clouds produced
/// by a synchronous coupling. Always >= distq_exact on the same clouds.
pub fn distq_coupled_upper(a: &PointCloud, b: &PointCloud, form: &QuadraticForm) -> Result<QDistance> {
    if a.n != b.n || a.dim != b.dim {
        return Err(Error::InvalidInput(format!(
            "cloud shapes differ: {}x{} vs {}x{}",
            a.n, a.dim, b.n, b.dim
        )));
    }
    let mut acc = 0.0;
    for i in 0..a.n {
        acc += form.eval_diff(a.point(i), b.point(i));
    }
    Ok(QDistance {
        squared: acc / a.n as f64,
    })
}

fn sq_euclid(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(&u, &v)| (u - v) * (u - v)).sum()
}

fn cost_matrix<F: Fn(&[f64], &[f64]) -> f64>(a: &PointCloud, b: &PointCloud, f: F) -> Vec<f64> {
    let n = a.n;
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        let pi = a.point(i);
        for j in 0..n {
            cost[i * n + j] = f(pi, b.point(j));
        }
    }
    cost
}

/// Sum of assigned entries in a scheduling-independent order, so that
/// transposing the problem or permuting cloud indices reproduces the same
/// floating-point value.
fn assigned_total(cost: &[f64], n: usize, row_to_col: &[usize]) -> f64 {
    let mut terms: Vec<f64> = (0..n).map(|i| cost[i * n + row_to_col[i]]).collect();
    terms.sort_by(|x, y| x.total_cmp(y));
    terms.iter().sum()
}

/// Minimal-cost perfect matching on a square cost matrix via shortest
/// augmenting paths with dual potentials. Returns the column assigned to
/// each row and the total cost.
pub fn solve_assignment(cost: &[f64], n: usize) -> Result<(Vec<usize>, f64)> {
    if n == 0 || cost.len() != n * n {
        return Err(Error::InvalidInput(format!(
            "cost matrix must be {n} x {n}"
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("cost matrix has non-finite entries".into()));
    }
    // Dual potentials u (rows) and v (columns); p[j] is the row matched to
    // column j, with index 0 as the virtual unmatched slot (1-based).
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut p = vec![0_usize; n + 1];
    let mut way = vec![0_usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0_usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0_usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Unwind the augmenting path.
        while j0 != 0 {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        }
    }
    let mut row_to_col = vec![0_usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    let total = assigned_total(cost, n, &row_to_col);
    Ok((row_to_col, total))
}

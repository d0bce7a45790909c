//! Kernel discretization over ε-nets and maximization of bilinear forms
//! `Σ_ij M_ij x_i·y_j` over assignments of unit vectors in `R^m`.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic_bounds::{kg_lower_bound, y_closed_form};
use crate::error::{argument, domain, Error, Result};
use crate::rng::{child_stream, streams};
use crate::sphere::{read_csv_rows, EpsNet, RegionMoments, SphereSampler, UnitVector, CHUNK};

/// Largest `r + s` accepted by [`brute_force_signs`].
pub const BRUTE_FORCE_LIMIT: usize = 26;

/// A dense real kernel `M` with a note on where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
    pub provenance: String,
}

impl KernelMatrix {
    pub fn new(entries: DMatrix<f64>, provenance: impl Into<String>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(argument("kernel matrix must be non-empty"));
        }
        if let Some(bad) = entries.iter().find(|x| !x.is_finite()) {
            return Err(argument(format!("kernel entry {bad} is not finite")));
        }
        Ok(KernelMatrix {
            entries,
            provenance: provenance.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], provenance: impl Into<String>) -> Result<Self> {
        let r = rows.len();
        let s = rows.first().map_or(0, Vec::len);
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != s) {
            return Err(Error::Parse {
                line: i as u64 + 1,
                column: row.len(),
                message: format!("expected {s} columns"),
            });
        }
        KernelMatrix::new(DMatrix::from_fn(r, s, |i, j| rows[i][j]), provenance)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    /// Reads a headerless CSV, one matrix row per line.
    pub fn read_csv<R: Read>(reader: R, provenance: impl Into<String>) -> Result<Self> {
        let rows = read_csv_rows(reader)?;
        if rows.is_empty() {
            return Err(Error::Parse {
                line: 1,
                column: 0,
                message: "empty matrix file".into(),
            });
        }
        KernelMatrix::from_rows(&rows, provenance)
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        for row in self.entries.row_iter() {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(writer, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// A kernel stored as `M = L·Rᵀ`, so `M_ij = left_i · right_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableKernel {
    left: DMatrix<f64>,
    right: DMatrix<f64>,
    pub provenance: String,
}

impl SeparableKernel {
    pub fn new(
        left: DMatrix<f64>,
        right: DMatrix<f64>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if left.ncols() != right.ncols() {
            return Err(argument(format!(
                "factor widths differ: {} vs {}",
                left.ncols(),
                right.ncols()
            )));
        }
        if left.nrows() == 0 || right.nrows() == 0 {
            return Err(argument("kernel factors must be non-empty"));
        }
        if left.iter().chain(right.iter()).any(|x| !x.is_finite()) {
            return Err(argument("kernel factors must be finite"));
        }
        Ok(SeparableKernel {
            left,
            right,
            provenance: provenance.into(),
        })
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    pub fn to_dense(&self) -> KernelMatrix {
        KernelMatrix {
            entries: &self.left * self.right.transpose(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Either representation of a kernel; the optimizer only needs `M·Y` and `Mᵀ·X`.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Dense(KernelMatrix),
    Separable(SeparableKernel),
}

impl Kernel {
    pub fn rows(&self) -> usize {
        match self {
            Kernel::Dense(k) => k.rows(),
            Kernel::Separable(k) => k.left.nrows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Kernel::Dense(k) => k.cols(),
            Kernel::Separable(k) => k.right.nrows(),
        }
    }

    pub fn to_dense(&self) -> KernelMatrix {
        match self {
            Kernel::Dense(k) => k.clone(),
            Kernel::Separable(k) => k.to_dense(),
        }
    }

    /// `M·Y` for `Y` with one column-side vector per row.
    pub fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Kernel::Dense(k) => &k.entries * y,
            Kernel::Separable(k) => &k.left * (k.right.transpose() * y),
        }
    }

    /// `Mᵀ·X` for `X` with one row-side vector per row.
    pub fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Kernel::Dense(k) => k.entries.transpose() * x,
            Kernel::Separable(k) => &k.right * (k.left.transpose() * x),
        }
    }

    /// `Σ_ij M_ij x_i·y_j`.
    pub fn value(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        frobenius_dot(x, &self.apply(y))
    }
}

impl From<KernelMatrix> for Kernel {
    fn from(k: KernelMatrix) -> Self {
        Kernel::Dense(k)
    }
}

impl From<SeparableKernel> for Kernel {
    fn from(k: SeparableKernel) -> Self {
        Kernel::Separable(k)
    }
}

fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Unit vectors in `R^m` for each row index and each column index of a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorAssignment {
    pub m: usize,
    pub row_vectors: Vec<Vec<f64>>,
    pub col_vectors: Vec<Vec<f64>>,
}

impl VectorAssignment {
    fn from_matrices(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Self {
        let rows = |a: &DMatrix<f64>| a.row_iter().map(|r| r.iter().copied().collect()).collect();
        VectorAssignment {
            m: x.ncols(),
            row_vectors: rows(x),
            col_vectors: rows(y),
        }
    }

    fn to_matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let mat = |v: &[Vec<f64>]| DMatrix::from_fn(v.len(), self.m, |i, j| v[i][j]);
        (mat(&self.row_vectors), mat(&self.col_vectors))
    }

    /// Checks shapes against a kernel and unit norms within `1e-12`.
    pub fn validate(&self, kernel: &Kernel) -> Result<()> {
        if self.row_vectors.len() != kernel.rows() || self.col_vectors.len() != kernel.cols() {
            return Err(argument("assignment shape does not match the kernel"));
        }
        for v in self.row_vectors.iter().chain(&self.col_vectors) {
            if v.len() != self.m {
                return Err(argument(format!(
                    "vector of length {} in an assignment with m = {}",
                    v.len(),
                    self.m
                )));
            }
            UnitVector::new(v.clone())?;
        }
        Ok(())
    }

    /// Appends zero coordinates up to dimension `m`.
    pub fn pad_to(&self, m: usize) -> VectorAssignment {
        let pad = |v: &Vec<f64>| {
            let mut p = v.clone();
            p.resize(m.max(self.m), 0.0);
            p
        };
        VectorAssignment {
            m: m.max(self.m),
            row_vectors: self.row_vectors.iter().map(pad).collect(),
            col_vectors: self.col_vectors.iter().map(pad).collect(),
        }
    }

    /// `Σ_ij M_ij x_i·y_j`.
    pub fn value(&self, kernel: &Kernel) -> f64 {
        let (x, y) = self.to_matrices();
        kernel.value(&x, &y)
    }
}

/// A run counts as converged only once every vector is this close to its
/// optimal response, in addition to the relative-improvement test.
pub const STATIONARITY_TOL: f64 = 1e-7;

/// Budgets for [`seesaw_maximize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeesawOptions {
    pub restarts: usize,
    pub max_iters: usize,
    /// Relative improvement over a full sweep below which a run stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SeesawOptions {
    fn default() -> Self {
        SeesawOptions {
            restarts: 16,
            max_iters: 10_000,
            tol: 1e-10,
            seed: 0,
        }
    }
}

/// Best run found by [`seesaw_maximize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeesawResult {
    pub value: f64,
    pub assignment: VectorAssignment,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after initialization and after every half-sweep.
    pub value_trace: Vec<f64>,
    /// Index of the winning start (hints first, then random restarts).
    pub start_index: usize,
    /// Largest distance between a vector and its optimal response.
    pub stationarity: f64,
}

/// Replaces each row of `g` by its direction; zero rows keep `prev`.
fn normalize_rows(g: &DMatrix<f64>, prev: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = g.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let n = row.norm();
        if n > 0.0 && n.is_finite() {
            row /= n;
        } else {
            row.copy_from(&prev.row(i));
        }
    }
    out
}

fn random_unit_rows(count: usize, m: usize, sampler: &mut SphereSampler) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(count, m);
    let mut buf = vec![0.0; m];
    for i in 0..count {
        sampler.fill(&mut buf);
        for (j, x) in buf.iter().enumerate() {
            out[(i, j)] = *x;
        }
    }
    out
}

fn row_residual(v: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    v.row_iter()
        .zip(g.row_iter())
        .filter_map(|(v, g)| {
            let n = g.norm();
            (n > 0.0).then(|| (v - g / n).norm())
        })
        .fold(0.0, f64::max)
}

/// Largest `‖v − g/‖g‖‖` over all vectors, where `g` is the vector's optimal
/// response to the other side. Zero responses are skipped.
pub fn stationarity_residual(kernel: &Kernel, assignment: &VectorAssignment) -> f64 {
    let (x, y) = assignment.to_matrices();
    row_residual(&x, &kernel.apply(&y)).max(row_residual(&y, &kernel.apply_transpose(&x)))
}

struct Run {
    value: f64,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn seesaw_run(
    kernel: &Kernel,
    mut x: DMatrix<f64>,
    mut y: DMatrix<f64>,
    options: &SeesawOptions,
) -> Run {
    let mut my = kernel.apply(&y);
    let mut value = frobenius_dot(&x, &my);
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iters {
        let start = value;
        let new_x = normalize_rows(&my, &x);
        let v = frobenius_dot(&new_x, &my);
        // A rounding-level decrease is rejected so the trace never goes down.
        if v >= value {
            x = new_x;
            value = v;
        }
        trace.push(value);
        let mx = kernel.apply_transpose(&x);
        let new_y = normalize_rows(&mx, &y);
        let v = frobenius_dot(&mx, &new_y);
        if v >= value {
            y = new_y;
            value = v;
        }
        trace.push(value);
        my = kernel.apply(&y);
        iterations += 1;
        // y is now an exact response to x, so only x can be off stationarity.
        if value - start <= options.tol * value.abs() && row_residual(&x, &my) <= STATIONARITY_TOL {
            converged = true;
            break;
        }
    }
    Run {
        value,
        x,
        y,
        iterations,
        converged,
        trace,
    }
}

/// See-saw maximization of `Σ_ij M_ij x_i·y_j` over unit `x_i, y_j ∈ R^m`.
pub fn seesaw_maximize(kernel: &Kernel, m: usize, options: &SeesawOptions) -> Result<SeesawResult> {
    seesaw_maximize_with_hints(kernel, m, options, &[])
}

/// As [`seesaw_maximize`], additionally starting from each of `hints` before
/// the random restarts. The best run wins; ties go to the earliest start.
pub fn seesaw_maximize_with_hints(
    kernel: &Kernel,
    m: usize,
    options: &SeesawOptions,
    hints: &[VectorAssignment],
) -> Result<SeesawResult> {
    if m < 1 {
        return Err(domain("target dimension m must be at least 1"));
    }
    if options.restarts + hints.len() == 0 {
        return Err(argument("see-saw needs at least one start"));
    }
    if options.tol.is_nan() || options.tol < 0.0 {
        return Err(argument("tolerance must be non-negative"));
    }
    for hint in hints {
        if hint.m != m {
            return Err(argument(format!("hint has m = {}, expected {m}", hint.m)));
        }
        hint.validate(kernel)?;
    }
    let (r, s) = (kernel.rows(), kernel.cols());
    let runs: Vec<Run> = (0..hints.len() + options.restarts)
        .into_par_iter()
        .map(|start| {
            let (x, y) = if start < hints.len() {
                hints[start].to_matrices()
            } else {
                let restart = (start - hints.len()) as u64;
                let mut sampler = SphereSampler::new(
                    m,
                    options.seed,
                    child_stream(streams::SEESAW_RESTARTS, restart),
                );
                let x = random_unit_rows(r, m, &mut sampler);
                let y = random_unit_rows(s, m, &mut sampler);
                (x, y)
            };
            seesaw_run(kernel, x, y, options)
        })
        .collect();
    let (start_index, best) = runs
        .into_iter()
        .enumerate()
        .reduce(|best, next| {
            if next.1.value > best.1.value {
                next
            } else {
                best
            }
        })
        .expect("at least one start");
    let assignment = VectorAssignment::from_matrices(&best.x, &best.y);
    let stationarity = stationarity_residual(kernel, &assignment);
    Ok(SeesawResult {
        value: best.value,
        assignment,
        iterations: best.iterations,
        converged: best.converged,
        value_trace: best.trace,
        start_index,
        stationarity,
    })
}

/// Exact `max Σ_ij M_ij α_i β_j` over signs `α, β ∈ {±1}`.
///
/// Enumerates the smaller side with a Gray code (first sign fixed by the
/// global symmetry `α, β → −α, −β`); the other side is then optimal at
/// `β_j = sign(Σ_i M_ij α_i)`.
pub fn brute_force_signs(kernel: &KernelMatrix) -> Result<f64> {
    let (r, s) = (kernel.rows(), kernel.cols());
    if r + s > BRUTE_FORCE_LIMIT {
        return Err(Error::Resource {
            what: format!("sign enumeration for a {r}×{s} kernel"),
            estimate: (r + s) as f64,
            limit: BRUTE_FORCE_LIMIT as f64,
        });
    }
    let m = if r <= s {
        kernel.entries.clone()
    } else {
        kernel.entries.transpose()
    };
    let (r, s) = (m.nrows(), m.ncols());
    let mut signs = vec![1.0; r];
    let mut column_sums: Vec<f64> = (0..s).map(|j| m.column(j).sum()).collect();
    let score = |sums: &[f64]| sums.iter().map(|x| x.abs()).sum::<f64>();
    let mut best = score(&column_sums);
    for step in 1u64..(1u64 << (r - 1)) {
        // Flip the sign at the position of the lowest set bit (rows 1..r).
        let i = step.trailing_zeros() as usize + 1;
        signs[i] = -signs[i];
        for (j, sum) in column_sums.iter_mut().enumerate() {
            *sum += 2.0 * signs[i] * m[(i, j)];
        }
        best = best.max(score(&column_sums));
    }
    Ok(best)
}

/// The optimal `m`-dimensional value `D = Ŷ_m²/m` of the kernel `a·b`
/// under the normalized measure.
pub fn analytic_d(n: u64, m: u64) -> Result<f64> {
    if m < 1 || m > n {
        return Err(domain(format!(
            "analytic_d requires 1 ≤ m ≤ n (got n = {n}, m = {m})"
        )));
    }
    let y = y_closed_form(n, m)?;
    Ok(y * y / m as f64)
}

/// Normalized first `m` coordinates of `a`; an all-zero prefix maps to `e₁`.
pub fn project_embed(a: &UnitVector, m: usize) -> Result<UnitVector> {
    if m < 1 || m > a.dim() {
        return Err(domain(format!("need 1 ≤ m ≤ {}, got m = {m}", a.dim())));
    }
    Ok(
        UnitVector::normalize(a.as_slice()[..m].to_vec())
            .unwrap_or_else(|| UnitVector::basis(m, 0)),
    )
}

/// A pointwise kernel `M′(a, b)` to be integrated over pairs of regions.
#[derive(Clone, Copy)]
pub enum PairKernel<'a> {
    /// `a·b`, discretized exactly from the vector moments.
    Dot,
    /// A constant kernel, discretized exactly from the region weights.
    Constant(f64),
    /// Any other kernel, discretized by Monte Carlo over independent pairs.
    Sampled(&'a (dyn Fn(&[f64], &[f64]) -> f64 + Sync)),
}

fn check_moments(net: &EpsNet, moments: &RegionMoments) -> Result<()> {
    if moments.net != net.id() {
        return Err(argument("region moments were computed on a different net"));
    }
    Ok(())
}

/// `M_ij = ∫_{R_i}∫_{R_j} M′(a, b) da db` over the regions of `net`.
///
/// `samples` and `sampler` are only used by [`PairKernel::Sampled`].
pub fn discretize_kernel(
    kernel: PairKernel<'_>,
    net: &EpsNet,
    moments: &RegionMoments,
    samples: usize,
    sampler: &SphereSampler,
) -> Result<Kernel> {
    check_moments(net, moments)?;
    let r = net.len();
    match kernel {
        PairKernel::Dot => {
            let w = moment_matrix(moments);
            Ok(Kernel::Separable(SeparableKernel::new(
                w.clone(),
                w,
                "vector moments of the a·b kernel",
            )?))
        }
        PairKernel::Constant(c) => {
            let mu = &moments.weights;
            Ok(Kernel::Dense(KernelMatrix::new(
                DMatrix::from_fn(r, r, |i, j| c * mu[i] * mu[j]),
                format!("constant kernel {c}"),
            )?))
        }
        PairKernel::Sampled(f) => {
            if samples == 0 {
                return Err(domain("sampled kernels need at least one sample pair"));
            }
            if sampler.dim() != net.dim() {
                return Err(argument("sampler dimension does not match the net"));
            }
            let dim = net.dim();
            let chunks = samples.div_ceil(CHUNK);
            let partial: Vec<DMatrix<f64>> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let size = CHUNK.min(samples - c * CHUNK);
                    let mut sub = sampler.substream(child_stream(streams::KERNEL_PAIRS, c as u64));
                    let mut acc = DMatrix::zeros(r, r);
                    let (mut a, mut b) = (vec![0.0; dim], vec![0.0; dim]);
                    for _ in 0..size {
                        sub.fill(&mut a);
                        sub.fill(&mut b);
                        acc[(net.nearest(&a), net.nearest(&b))] += f(&a, &b);
                    }
                    acc
                })
                .collect();
            let total = partial
                .into_iter()
                .fold(DMatrix::zeros(r, r), |acc, p| acc + p)
                / samples as f64;
            Ok(Kernel::Dense(KernelMatrix::new(
                total,
                format!("Monte Carlo over {samples} pairs"),
            )?))
        }
    }
}

/// The vector moments as an `|net| × dim` matrix.
pub fn moment_matrix(moments: &RegionMoments) -> DMatrix<f64> {
    DMatrix::from_row_slice(moments.len(), moments.dim(), &moments.moment_vectors)
}

/// Outcome of [`empirical_ratio`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRatio {
    pub n: usize,
    pub m: usize,
    pub ratio: f64,
    /// Delta-method standard error propagated from the moment estimates.
    pub std_error: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// Objective at `x_u = y_u = w_u/‖w_u‖`.
    pub aligned_numerator: f64,
    /// The analytic lower bound on the constant at `(n, m)`.
    pub analytic_bound: f64,
    pub numerator_iterations: usize,
    pub denominator_iterations: usize,
}

pub(crate) fn aligned_assignment(moments: &RegionMoments, m: usize) -> VectorAssignment {
    let vectors: Vec<Vec<f64>> = (0..moments.len())
        .map(|u| {
            let w = UnitVector::normalize(moments.moment(u).to_vec())
                .unwrap_or_else(|| UnitVector::basis(moments.dim(), 0));
            project_embed(&w, m).expect("m ≤ dim").into_inner()
        })
        .collect();
    VectorAssignment {
        m,
        row_vectors: vectors.clone(),
        col_vectors: vectors,
    }
}

/// `∂V/∂w_u = (Wᵀ Y) x_u + (Wᵀ X) y_u` for `V = Σ_uv (w_u·w_v)(x_u·y_v)`.
pub(crate) fn value_gradient(w: &DMatrix<f64>, a: &VectorAssignment) -> DMatrix<f64> {
    let (x, y) = a.to_matrices();
    let tx = w.transpose() * &x;
    let ty = w.transpose() * &y;
    x * ty.transpose() + y * tx.transpose()
}

/// Ratio of the best `n`-dimensional to the best `m`-dimensional value of the
/// discretized kernel `a·b` on `net`.
///
/// Both sides are see-saw maximizations of the separable kernel `W·Wᵀ`. The
/// `m`-side also starts from the coordinate projection of the aligned
/// vectors, and the `n`-side from the aligned vectors and from the zero-padded
/// `m`-side optimum, so the reported numerator is never below the
/// denominator and never below the aligned value.
pub fn empirical_ratio(
    n: usize,
    m: usize,
    net: &EpsNet,
    moments: &RegionMoments,
    options: &SeesawOptions,
) -> Result<EmpiricalRatio> {
    if net.dim() != n {
        return Err(argument(format!(
            "net lives on S^{}, expected n = {n}",
            net.dim() - 1
        )));
    }
    if m < 1 || m > n {
        return Err(domain(format!("need 1 ≤ m ≤ n (got n = {n}, m = {m})")));
    }
    check_moments(net, moments)?;
    let sampler = SphereSampler::new(n, 0, 0);
    let kernel = discretize_kernel(PairKernel::Dot, net, moments, 0, &sampler)?;
    let w = moment_matrix(moments);

    let aligned = aligned_assignment(moments, n);
    let aligned_numerator = aligned.value(&kernel);
    let den = seesaw_maximize_with_hints(&kernel, m, options, &[aligned_assignment(moments, m)])?;
    let num = if m == n {
        den.clone()
    } else {
        seesaw_maximize_with_hints(&kernel, n, options, &[aligned, den.assignment.pad_to(n)])?
    };
    let ratio = num.value / den.value;

    let grad = (value_gradient(&w, &num.assignment) - value_gradient(&w, &den.assignment) * ratio)
        / den.value;
    let row_major: Vec<f64> = grad.transpose().iter().copied().collect();
    let std_error = if m == n {
        0.0
    } else {
        moments.linear_std_error(&row_major)
    };

    Ok(EmpiricalRatio {
        n,
        m,
        ratio,
        std_error,
        numerator: num.value,
        denominator: den.value,
        aligned_numerator,
        analytic_bound: kg_lower_bound(n as u64, m as u64)?.bound,
        numerator_iterations: num.iterations,
        denominator_iterations: den.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{build_eps_net, region_moments, NetOptions};
    use rand::{Rng, SeedableRng};

    fn chsh() -> Kernel {
        Kernel::Dense(KernelMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]], "CHSH").unwrap())
    }

    fn random_kernel(r: usize, s: usize, seed: u64) -> KernelMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        KernelMatrix::new(
            DMatrix::from_fn(r, s, |_, _| rng.random_range(-1.0..=1.0)),
            "random",
        )
        .unwrap()
    }

    fn opts(restarts: usize, seed: u64) -> SeesawOptions {
        SeesawOptions {
            restarts,
            seed,
            ..SeesawOptions::default()
        }
    }

    #[test]
    fn chsh_values() {
        let one = seesaw_maximize(&chsh(), 1, &opts(16, 1)).unwrap();
        assert!((one.value - 2.0).abs() < 1e-7);
        let two = seesaw_maximize(&chsh(), 2, &opts(16, 1)).unwrap();
        assert!(
            (two.value - 2.0 * 2f64.sqrt()).abs() < 1e-7,
            "{}",
            two.value
        );
        assert!(two.converged);
    }

    #[test]
    fn brute_force_examples() {
        let one = KernelMatrix::from_rows(&[vec![1.0]], "").unwrap();
        assert_eq!(brute_force_signs(&one).unwrap(), 1.0);
        assert_eq!(brute_force_signs(&chsh().to_dense()).unwrap(), 2.0);
        let big = KernelMatrix::new(DMatrix::zeros(14, 13), "").unwrap();
        assert!(matches!(
            brute_force_signs(&big),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn brute_force_matches_naive_enumeration() {
        for seed in 0..20 {
            let k = random_kernel(3, 5, seed);
            let mut naive = f64::NEG_INFINITY;
            for a in 0..8u32 {
                for b in 0..32u32 {
                    let sign = |bits: u32, i: usize| if bits >> i & 1 == 1 { -1.0 } else { 1.0 };
                    let mut v = 0.0;
                    for i in 0..3 {
                        for j in 0..5 {
                            v += k.entries()[(i, j)] * sign(a, i) * sign(b, j);
                        }
                    }
                    naive = naive.max(v);
                }
            }
            assert!((brute_force_signs(&k).unwrap() - naive).abs() < 1e-12);
            // The transposed orientation takes the other branch.
            let t = KernelMatrix::new(k.entries().transpose(), "").unwrap();
            assert!((brute_force_signs(&t).unwrap() - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn seesaw_result_is_consistent() {
        let k: Kernel = random_kernel(6, 5, 3).into();
        let res = seesaw_maximize(&k, 3, &opts(8, 2)).unwrap();
        assert!(res.value_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!((res.assignment.value(&k) - res.value).abs() < 1e-9);
        res.assignment.validate(&k).unwrap();
        assert!(res.converged);
        assert!(res.stationarity < 1e-6, "{}", res.stationarity);
    }

    #[test]
    fn seesaw_is_deterministic_across_thread_counts() {
        let k: Kernel = random_kernel(7, 7, 9).into();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| seesaw_maximize(&k, 2, &opts(12, 5)).unwrap());
        let b = many.install(|| seesaw_maximize(&k, 2, &opts(12, 5)).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn zero_kernel_keeps_vectors() {
        let k: Kernel = KernelMatrix::new(DMatrix::zeros(2, 3), "zero")
            .unwrap()
            .into();
        let res = seesaw_maximize(&k, 2, &opts(2, 0)).unwrap();
        assert_eq!(res.value, 0.0);
        res.assignment.validate(&k).unwrap();
    }

    #[test]
    fn extra_dimensions_do_not_help_beyond_the_span() {
        let k: Kernel = random_kernel(3, 3, 4).into();
        let at = seesaw_maximize(&k, 3, &opts(16, 1)).unwrap().value;
        let above = seesaw_maximize(&k, 5, &opts(16, 1)).unwrap().value;
        assert!((at - above).abs() <= 1e-8 * at.abs(), "{at} vs {above}");
    }

    #[test]
    fn hints_must_match_the_kernel() {
        let k = chsh();
        let bad = VectorAssignment {
            m: 1,
            row_vectors: vec![vec![1.0]],
            col_vectors: vec![vec![1.0], vec![1.0]],
        };
        assert!(seesaw_maximize_with_hints(&k, 1, &opts(1, 0), &[bad]).is_err());
        assert!(seesaw_maximize(&k, 0, &opts(1, 0)).is_err());
    }

    #[test]
    fn separable_matches_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let l = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let r = DMatrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        let sep: Kernel = SeparableKernel::new(l, r, "").unwrap().into();
        let dense: Kernel = sep.to_dense().into();
        let y = DMatrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64 * 0.1);
        let x = DMatrix::from_fn(6, 2, |i, j| (i as f64 - j as f64) * 0.2);
        assert!((sep.apply(&y) - dense.apply(&y)).amax() < 1e-12);
        assert!((sep.apply_transpose(&x) - dense.apply_transpose(&x)).amax() < 1e-12);
        let a = seesaw_maximize(&sep, 2, &opts(4, 3)).unwrap().value;
        let b = seesaw_maximize(&dense, 2, &opts(4, 3)).unwrap().value;
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn analytic_d_examples() {
        use std::f64::consts::PI;
        assert_eq!(analytic_d(5, 5).unwrap(), 0.2);
        assert!((analytic_d(2, 1).unwrap() - 4.0 / (PI * PI)).abs() < 1e-15);
        let ratio = (1.0 / 3.0) / analytic_d(3, 2).unwrap();
        assert!((ratio - 32.0 / (3.0 * PI * PI)).abs() < 1e-12);
        assert!(analytic_d(2, 3).is_err());
    }

    #[test]
    fn project_embed_examples() {
        let a = UnitVector::new(vec![0.6, 0.8, 0.0]).unwrap();
        assert_eq!(project_embed(&a, 3).unwrap(), a);
        assert_eq!(project_embed(&a, 2).unwrap().as_slice(), &[0.6, 0.8]);
        let b = UnitVector::new(vec![0.6, 0.0, 0.8]).unwrap();
        assert_eq!(project_embed(&b, 1).unwrap().as_slice(), &[1.0]);
        let c = UnitVector::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(project_embed(&c, 2).unwrap().as_slice(), &[1.0, 0.0]);
        assert!(project_embed(&a, 4).is_err());
    }

    fn two_point() -> (EpsNet, RegionMoments) {
        let net = build_eps_net(1, 0.5, 0, NetOptions::default()).unwrap();
        let s = SphereSampler::new(1, 2, 0);
        let m = region_moments(&net, 200_000, &s).unwrap();
        (net, m)
    }

    #[test]
    fn dot_kernel_on_two_points() {
        let (net, mom) = two_point();
        let s = SphereSampler::new(1, 0, 0);
        let k = discretize_kernel(PairKernel::Dot, &net, &mom, 0, &s)
            .unwrap()
            .to_dense();
        let sign = |u: usize| net.points()[u].as_slice()[0];
        for i in 0..2 {
            for j in 0..2 {
                let expect = 0.25 * sign(i) * sign(j);
                assert!((k.entries()[(i, j)] - expect).abs() < 5e-3, "{i},{j}");
                assert_eq!(
                    k.entries()[(i, j)],
                    mom.weights[i] * mom.weights[j] * sign(i) * sign(j)
                );
            }
        }
    }

    #[test]
    fn constant_kernel_is_weight_product() {
        let (net, mom) = two_point();
        let s = SphereSampler::new(1, 0, 0);
        let k = discretize_kernel(PairKernel::Constant(1.0), &net, &mom, 0, &s)
            .unwrap()
            .to_dense();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(k.entries()[(i, j)], mom.weights[i] * mom.weights[j]);
            }
        }
    }

    #[test]
    fn sampled_kernel_agrees_with_exact_dot() {
        let net = build_eps_net(2, 0.8, 1, NetOptions::default()).unwrap();
        let s = SphereSampler::new(2, 4, 0);
        let mom = region_moments(&net, 400_000, &s).unwrap();
        let dot = |a: &[f64], b: &[f64]| a[0] * b[0] + a[1] * b[1];
        let sampled = discretize_kernel(PairKernel::Sampled(&dot), &net, &mom, 400_000, &s)
            .unwrap()
            .to_dense();
        let exact = discretize_kernel(PairKernel::Dot, &net, &mom, 0, &s)
            .unwrap()
            .to_dense();
        assert!((sampled.entries() - exact.entries()).amax() < 5e-3);
    }

    #[test]
    fn odd_kernel_has_vanishing_column_sums() {
        let mut pts = Vec::new();
        for i in 0..2 {
            pts.push(UnitVector::basis(2, i));
            pts.push(
                UnitVector::new((0..2).map(|j| if j == i { -1.0 } else { 0.0 }).collect()).unwrap(),
            );
        }
        let net = EpsNet::from_points(2, 0.5, 0, pts).unwrap();
        let s = SphereSampler::new(2, 8, 0);
        let mom = region_moments(&net, 10_000, &s).unwrap();
        let odd = |a: &[f64], b: &[f64]| a[0] * (1.0 + b[1]);
        let k = discretize_kernel(PairKernel::Sampled(&odd), &net, &mom, 400_000, &s)
            .unwrap()
            .to_dense();
        for j in 0..4 {
            assert!(k.entries().column(j).sum().abs() < 1e-2, "column {j}");
        }
    }

    #[test]
    fn mismatched_moments_are_rejected() {
        let (net, _) = two_point();
        let other = build_eps_net(2, 0.5, 0, NetOptions::default()).unwrap();
        let s = SphereSampler::new(2, 0, 0);
        let mom = region_moments(&other, 10_000, &s).unwrap();
        assert!(matches!(
            discretize_kernel(PairKernel::Dot, &net, &mom, 0, &s),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn ratio_is_one_at_equal_dimensions() {
        let net = build_eps_net(3, 0.4, 1, NetOptions::default()).unwrap();
        let s = SphereSampler::new(3, 2, 0);
        let mom = region_moments(&net, 100 * net.len(), &s).unwrap();
        let r = empirical_ratio(3, 3, &net, &mom, &opts(4, 0)).unwrap();
        assert_eq!(r.ratio, 1.0);
    }

    #[test]
    fn ratio_on_the_circle_is_bracketed() {
        let net = build_eps_net(2, 0.1, 3, NetOptions::default()).unwrap();
        let s = SphereSampler::new(2, 4, 0);
        let mom = region_moments(&net, 1000 * net.len(), &s).unwrap();
        let r = empirical_ratio(2, 1, &net, &mom, &opts(16, 1)).unwrap();
        assert!(r.ratio > 1.0);
        assert!(r.ratio <= r.analytic_bound + 4.0 * r.std_error, "{r:?}");
        assert!(r.numerator >= r.aligned_numerator);
    }
}

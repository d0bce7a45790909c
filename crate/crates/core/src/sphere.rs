//! Uniform sampling on `S^{n−1}`, ε-nets, Voronoi region assignment and
//! Monte Carlo estimates of sphere integrals.
//!
//! All integrals are against the normalized Haar measure. Monte Carlo work is
//! split into chunks of [`CHUNK`] samples; chunk `c` draws from the derived
//! stream `child_stream(stream_id, c)` and partial results are merged in chunk
//! order, so estimates are bit-identical for any number of worker threads.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, Error, Result};
use crate::rng::{child_stream, seeded, streams};

/// Samples per Monte Carlo chunk.
pub const CHUNK: usize = 4096;

/// Chunks processed per parallel batch when per-sample output is buffered.
const CHUNKS_PER_BATCH: usize = 128;

/// Norm tolerance for [`UnitVector::new`].
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// A point on `S^{dim−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wraps `components`, which must already have unit norm.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(domain("unit vector needs at least one component"));
        }
        let norm = norm(&components);
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(argument(format!("vector norm {norm} is not 1")));
        }
        Ok(UnitVector(components))
    }

    /// Scales `components` to unit norm; `None` for the zero vector.
    pub fn normalize(mut components: Vec<f64>) -> Option<Self> {
        let norm = norm(&components);
        if components.is_empty() || !norm.is_finite() || norm == 0.0 {
            return None;
        }
        components.iter_mut().for_each(|c| *c /= norm);
        Some(UnitVector(components))
    }

    /// The `i`-th standard basis vector of `R^dim`.
    pub fn basis(dim: usize, i: usize) -> Self {
        assert!(i < dim, "basis index {i} out of range for dimension {dim}");
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        UnitVector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn distance(&self, other: &UnitVector) -> f64 {
        distance_sq(&self.0, &other.0).sqrt()
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn distance_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded source of uniform points on `S^{dim−1}`.
///
/// Identical `(dim, seed, stream_id)` produce identical sequences.
#[derive(Debug, Clone)]
pub struct SphereSampler {
    dim: usize,
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl SphereSampler {
    pub fn new(dim: usize, seed: u64, stream_id: u64) -> Self {
        assert!(dim >= 1, "sphere dimension must be at least 1");
        SphereSampler {
            dim,
            seed,
            stream_id,
            rng: seeded(seed, stream_id),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh sampler on the derived stream `index`, independent of how far
    /// this one has advanced.
    pub fn substream(&self, index: u64) -> SphereSampler {
        SphereSampler::new(self.dim, self.seed, child_stream(self.stream_id, index))
    }

    /// Same seed and stream, different dimension.
    pub fn with_dim(&self, dim: usize) -> SphereSampler {
        SphereSampler::new(dim, self.seed, self.stream_id)
    }

    /// Writes a uniform point into `out` (Gaussian-normalize construction).
    pub fn fill(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        if self.dim == 1 {
            out[0] = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
            return;
        }
        loop {
            let mut sq = 0.0;
            for c in out.iter_mut() {
                let g: f64 = self.rng.sample(StandardNormal);
                *c = g;
                sq += g * g;
            }
            if sq > 0.0 && sq.is_finite() {
                let inv = 1.0 / sq.sqrt();
                out.iter_mut().for_each(|c| *c *= inv);
                return;
            }
        }
    }

    pub fn sample(&mut self) -> UnitVector {
        let mut v = vec![0.0; self.dim];
        self.fill(&mut v);
        UnitVector(v)
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Draws one uniform point from `sampler`.
pub fn sample_uniform(sampler: &mut SphereSampler) -> UnitVector {
    sampler.sample()
}

/// A Monte Carlo estimate with its standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            std_error: 0.0,
            samples: 0,
        }
    }

    /// `|value − target| ≤ k·std_error`.
    pub fn within_sigmas(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// Welford accumulator; merged across chunks in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * (self.count as f64 * other.count as f64 / count as f64);
        Moments { count, mean, m2 }
    }

    fn estimate(&self) -> Estimate {
        let n = self.count as f64;
        let var = if self.count > 1 {
            self.m2 / (n - 1.0)
        } else {
            0.0
        };
        Estimate {
            value: self.mean,
            std_error: (var / n).sqrt(),
            samples: self.count,
        }
    }
}

fn chunk_sizes(samples: usize) -> Vec<usize> {
    let full = samples / CHUNK;
    let mut sizes = vec![CHUNK; full];
    if !samples.is_multiple_of(CHUNK) {
        sizes.push(samples % CHUNK);
    }
    sizes
}

/// Mean of `integrand` over `samples` draws, chunked across substreams.
pub(crate) fn chunked_mean<F>(sampler: &SphereSampler, samples: usize, integrand: F) -> Estimate
where
    F: Fn(&mut SphereSampler) -> f64 + Sync,
{
    let sizes = chunk_sizes(samples);
    let parts: Vec<Moments> = sizes
        .par_iter()
        .enumerate()
        .map(|(c, &size)| {
            let mut sub = sampler.substream(c as u64);
            let mut acc = Moments::default();
            for _ in 0..size {
                acc.push(integrand(&mut sub));
            }
            acc
        })
        .collect();
    parts
        .into_iter()
        .fold(Moments::default(), Moments::merge)
        .estimate()
}

const MIN_MC_SAMPLES: usize = 1000;

/// Monte Carlo estimate of `E[(Σ_{i≤k} a_i²)^{1/2}]` for uniform `a ∈ S^{n−1}`.
pub fn partial_norm_expectation(
    n: usize,
    k: usize,
    samples: usize,
    sampler: &SphereSampler,
) -> Result<Estimate> {
    if k < 1 || k > n {
        return Err(domain(format!("need 1 ≤ k ≤ n, got n = {n}, k = {k}")));
    }
    if samples < MIN_MC_SAMPLES {
        return Err(domain(format!(
            "need at least {MIN_MC_SAMPLES} samples, got {samples}"
        )));
    }
    if sampler.dim() != n {
        return Err(argument(format!(
            "sampler dimension {} ≠ n = {n}",
            sampler.dim()
        )));
    }
    if k == n {
        // The integrand is identically 1 on the sphere.
        return Ok(Estimate {
            value: 1.0,
            std_error: 0.0,
            samples: samples as u64,
        });
    }
    Ok(chunked_mean(sampler, samples, |s| {
        let mut a = vec![0.0; n];
        s.fill(&mut a);
        a[..k].iter().map(|x| x * x).sum::<f64>().sqrt()
    }))
}

/// Monte Carlo estimate of `E[(a·b)²]` for independent uniform `a, b`.
pub fn dot_squared_expectation(
    n: usize,
    samples: usize,
    sampler: &SphereSampler,
) -> Result<Estimate> {
    if samples < MIN_MC_SAMPLES {
        return Err(domain(format!(
            "need at least {MIN_MC_SAMPLES} samples, got {samples}"
        )));
    }
    if sampler.dim() != n {
        return Err(argument(format!(
            "sampler dimension {} ≠ n = {n}",
            sampler.dim()
        )));
    }
    Ok(chunked_mean(sampler, samples, |s| {
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        s.fill(&mut a);
        s.fill(&mut b);
        let d = dot(&a, &b);
        d * d
    }))
}

/// Normalized measure of a cap of angular radius `theta` on `S^{dim−1}`.
pub fn cap_fraction(dim: usize, theta: f64) -> f64 {
    if theta <= 0.0 {
        return 0.0;
    }
    if theta >= std::f64::consts::PI {
        return 1.0;
    }
    match dim {
        0 => 0.0,
        1 => 0.5,
        2 => theta / std::f64::consts::PI,
        _ => {
            // ∫_0^θ sin^{d−2} / ∫_0^π sin^{d−2}, Simpson's rule on both.
            let p = (dim - 2) as i32;
            let simpson = |upper: f64| {
                let intervals = 4096;
                let h = upper / intervals as f64;
                let mut s = upper.sin().powi(p);
                for i in 1..intervals {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    s += w * (i as f64 * h).sin().powi(p);
                }
                s * h / 3.0
            };
            (simpson(theta) / simpson(std::f64::consts::PI)).min(1.0)
        }
    }
}

/// Upper bound on the size of any ε-packing of `S^{dim−1}`.
///
/// Caps of chord radius `ε/2` around packing points have disjoint interiors,
/// so the count is at most the reciprocal of one cap's measure. The volume
/// bound `(1 + 2/ε)^dim` is also valid and sometimes smaller.
pub fn packing_size_bound(dim: usize, eps: f64) -> f64 {
    let volume = (1.0 + 2.0 / eps).powi(dim as i32);
    let theta = 2.0 * (eps / 4.0).asin();
    let caps = 1.0 / cap_fraction(dim, theta);
    volume.min(caps)
}

/// Budgets for [`build_eps_net`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetOptions {
    /// Consecutive rejections that end each construction phase. `None` uses
    /// `max(200·|net|, 1000)`, re-evaluated as the net grows.
    pub max_candidates: Option<usize>,
    /// Resource limit on the number of net points.
    pub max_points: usize,
}

impl Default for NetOptions {
    fn default() -> Self {
        NetOptions {
            max_candidates: None,
            max_points: 200_000,
        }
    }
}

/// Grid hashing is used for dimensions up to this value.
const GRID_MAX_DIM: usize = 4;

type CellKey = [i32; GRID_MAX_DIM];

/// Uniform grid with cell side `eps` over `[−1, 1]^dim`. Every point within
/// distance `eps` of a query lies in the `3^dim` cells around the query's cell.
#[derive(Debug, Clone, Default)]
struct GridIndex {
    cell: f64,
    dim: usize,
    cells: HashMap<CellKey, Vec<u32>>,
}

impl GridIndex {
    fn new(dim: usize, cell: f64) -> Self {
        GridIndex {
            cell,
            dim,
            cells: HashMap::new(),
        }
    }

    fn key(&self, p: &[f64]) -> CellKey {
        let mut key = [0; GRID_MAX_DIM];
        for (k, x) in key.iter_mut().zip(p) {
            *k = ((x + 1.0) / self.cell).floor() as i32;
        }
        key
    }

    fn insert(&mut self, p: &[f64], index: u32) {
        let key = self.key(p);
        self.cells.entry(key).or_default().push(index);
    }

    /// Calls `visit` with every indexed point in the neighbourhood of `p`.
    fn for_each_near(&self, p: &[f64], mut visit: impl FnMut(u32)) {
        let center = self.key(p);
        let span = 3usize.pow(self.dim as u32);
        for code in 0..span {
            let mut key = center;
            let mut rest = code;
            for k in key.iter_mut().take(self.dim) {
                *k += (rest % 3) as i32 - 1;
                rest /= 3;
            }
            if let Some(ids) = self.cells.get(&key) {
                ids.iter().for_each(|&i| visit(i));
            }
        }
    }
}

/// Identity of a net, used to check that derived data belongs to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetId {
    pub dim: usize,
    pub eps: f64,
    pub seed: u64,
    pub size: usize,
}

/// A finite ε-packing of `S^{dim−1}` that is (probabilistically) maximal,
/// hence also an ε-net.
#[derive(Debug, Clone)]
pub struct EpsNet {
    dim: usize,
    eps: f64,
    seed: u64,
    points: Vec<UnitVector>,
    grid: Option<GridIndex>,
}

/// JSON header accompanying a net's CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetHeader {
    pub dim: usize,
    pub eps: f64,
    pub seed: u64,
    pub size: usize,
}

impl EpsNet {
    fn empty(dim: usize, eps: f64, seed: u64) -> Self {
        let grid = (dim <= GRID_MAX_DIM).then(|| GridIndex::new(dim, eps));
        EpsNet {
            dim,
            eps,
            seed,
            points: Vec::new(),
            grid,
        }
    }

    /// Builds a net from explicit points, checking the packing property.
    pub fn from_points(dim: usize, eps: f64, seed: u64, points: Vec<UnitVector>) -> Result<Self> {
        validate_eps(eps)?;
        let mut net = EpsNet::empty(dim, eps, seed);
        for p in points {
            if p.dim() != dim {
                return Err(argument(format!(
                    "point of dimension {} in net of dimension {dim}",
                    p.dim()
                )));
            }
            if !net.accepts(p.as_slice()) {
                return Err(argument(format!("points closer than eps = {eps}")));
            }
            net.push(p);
        }
        Ok(net)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[UnitVector] {
        &self.points
    }

    pub fn id(&self) -> NetId {
        NetId {
            dim: self.dim,
            eps: self.eps,
            seed: self.seed,
            size: self.points.len(),
        }
    }

    pub fn header(&self) -> NetHeader {
        NetHeader {
            dim: self.dim,
            eps: self.eps,
            seed: self.seed,
            size: self.points.len(),
        }
    }

    fn push(&mut self, p: UnitVector) {
        let index = self.points.len() as u32;
        if let Some(grid) = self.grid.as_mut() {
            grid.insert(p.as_slice(), index);
        }
        self.points.push(p);
    }

    /// True when `p` is at distance `≥ eps` from every point.
    fn accepts(&self, p: &[f64]) -> bool {
        let eps_sq = self.eps * self.eps;
        match &self.grid {
            Some(grid) => {
                let mut ok = true;
                grid.for_each_near(p, |i| {
                    if ok && distance_sq(self.points[i as usize].as_slice(), p) < eps_sq {
                        ok = false;
                    }
                });
                ok
            }
            None => self
                .points
                .iter()
                .all(|q| distance_sq(q.as_slice(), p) >= eps_sq),
        }
    }

    /// Index of the closest point; ties go to the lowest index.
    pub fn nearest(&self, p: &[f64]) -> usize {
        assert!(
            !self.points.is_empty(),
            "nearest point query on an empty net"
        );
        if let Some(grid) = &self.grid {
            let mut best = (f64::INFINITY, u32::MAX);
            grid.for_each_near(p, |i| {
                let d = distance_sq(self.points[i as usize].as_slice(), p);
                if d < best.0 || (d == best.0 && i < best.1) {
                    best = (d, i);
                }
            });
            // Anything closer than eps is in the neighbourhood, so the local
            // minimum is global.
            if best.0 <= self.eps * self.eps {
                return best.1 as usize;
            }
        }
        self.nearest_linear(p)
    }

    fn nearest_linear(&self, p: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, q) in self.points.iter().enumerate() {
            let d = distance_sq(q.as_slice(), p);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Smallest distance between two distinct points (∞ below two points).
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        match &self.grid {
            Some(grid) => {
                for (i, p) in self.points.iter().enumerate() {
                    grid.for_each_near(p.as_slice(), |j| {
                        if j as usize != i {
                            best = best.min(distance_sq(
                                p.as_slice(),
                                self.points[j as usize].as_slice(),
                            ));
                        }
                    });
                }
                // Pairs farther apart than eps are invisible to the grid.
                if best.is_infinite() && self.points.len() > 1 {
                    best = self.min_pairwise_brute();
                }
            }
            None => best = self.min_pairwise_brute(),
        }
        best.sqrt()
    }

    fn min_pairwise_brute(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                best = best.min(distance_sq(
                    self.points[i].as_slice(),
                    self.points[j].as_slice(),
                ));
            }
        }
        best
    }

    /// Probes the covering property with `probes` fresh uniform points.
    pub fn covering_probe(&self, probes: usize, seed: u64) -> CoveringReport {
        let sampler = SphereSampler::new(self.dim, seed, streams::COVERING_PROBES);
        let sizes = chunk_sizes(probes);
        let parts: Vec<(usize, f64)> = sizes
            .par_iter()
            .enumerate()
            .map(|(c, &size)| {
                let mut sub = sampler.substream(c as u64);
                let mut a = vec![0.0; self.dim];
                let mut uncovered = 0;
                let mut worst: f64 = 0.0;
                for _ in 0..size {
                    sub.fill(&mut a);
                    let i = self.nearest(&a);
                    let d = distance_sq(self.points[i].as_slice(), &a).sqrt();
                    worst = worst.max(d);
                    if d > self.eps {
                        uncovered += 1;
                    }
                }
                (uncovered, worst)
            })
            .collect();
        CoveringReport {
            probes,
            uncovered: parts.iter().map(|p| p.0).sum(),
            max_distance: parts.iter().map(|p| p.1).fold(0.0, f64::max),
        }
    }

    /// One point per row, shortest round-trip decimal representation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        for p in &self.points {
            w.write_record(p.as_slice().iter().map(|x| x.to_string()))
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a net written by [`EpsNet::write_csv`], re-checking every invariant
    /// that can be checked exactly.
    pub fn read_csv<R: Read>(header: &NetHeader, reader: R) -> Result<Self> {
        let rows = read_csv_rows(reader)?;
        if rows.len() != header.size {
            return Err(argument(format!(
                "header declares {} points, file has {}",
                header.size,
                rows.len()
            )));
        }
        let points = rows
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                if row.len() != header.dim {
                    return Err(Error::Parse {
                        line: i as u64 + 1,
                        column: row.len(),
                        message: format!("expected {} columns", header.dim),
                    });
                }
                UnitVector::new(row)
            })
            .collect::<Result<Vec<_>>>()?;
        EpsNet::from_points(header.dim, header.eps, header.seed, points)
    }
}

/// Outcome of [`EpsNet::covering_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    pub probes: usize,
    pub uncovered: usize,
    pub max_distance: f64,
}

/// Parses a headerless numeric CSV, reporting the location of bad cells.
pub fn read_csv_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse {
                line,
                column: 0,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        column: c + 1,
                        message: format!("invalid number {cell:?}"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn validate_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

/// Greedy randomized ε-packing of `S^{dim−1}`.
///
/// Phase one streams uniform candidates and keeps those at distance `≥ eps`
/// from all accepted points. Phase two draws candidates just outside the
/// `eps`-sphere of a random accepted point: every uncovered hole is bounded by
/// such spheres, so this finds thin holes that uniform sampling almost never
/// hits. Each phase ends after the configured number of consecutive
/// rejections.
pub fn build_eps_net(dim: usize, eps: f64, seed: u64, options: NetOptions) -> Result<EpsNet> {
    if dim < 1 {
        return Err(domain("net dimension must be at least 1"));
    }
    validate_eps(eps)?;
    let estimate = packing_size_bound(dim, eps);
    if estimate > options.max_points as f64 {
        return Err(Error::Resource {
            what: format!("eps-net on S^{} with eps = {eps}", dim - 1),
            estimate,
            limit: options.max_points as f64,
        });
    }
    let patience = |size: usize| options.max_candidates.unwrap_or((200 * size).max(1000));
    let too_big = |size: usize| Error::Resource {
        what: format!("eps-net on S^{} with eps = {eps}", dim - 1),
        estimate: size as f64,
        limit: options.max_points as f64,
    };

    let mut net = EpsNet::empty(dim, eps, seed);
    let mut candidates = SphereSampler::new(dim, seed, streams::NET_CANDIDATES);
    let mut rejections = 0;
    let mut candidate = vec![0.0; dim];
    while rejections < patience(net.len()) {
        candidates.fill(&mut candidate);
        if net.accepts(&candidate) {
            net.push(UnitVector(candidate.clone()));
            if net.len() > options.max_points {
                return Err(too_big(net.len()));
            }
            rejections = 0;
        } else {
            rejections += 1;
        }
    }

    if dim >= 2 {
        // Chord eps·(1 + 1e-9) from the anchor, so rounding cannot reject it
        // against the anchor itself.
        let theta = 2.0 * (0.5 * eps * (1.0 + 1e-9)).asin();
        let (cos_t, sin_t) = (theta.cos(), theta.sin());
        let mut repair = SphereSampler::new(dim, seed, streams::NET_REPAIR);
        let mut tangent = vec![0.0; dim];
        rejections = 0;
        while rejections < patience(net.len()) {
            let anchor_index = repair.rng().random_range(0..net.len());
            let anchor = net.points[anchor_index].as_slice().to_vec();
            repair.fill(&mut tangent);
            let along = dot(&tangent, &anchor);
            tangent
                .iter_mut()
                .zip(&anchor)
                .for_each(|(t, a)| *t -= along * a);
            let tn = norm(&tangent);
            if tn < 1e-8 {
                continue;
            }
            for ((c, a), t) in candidate.iter_mut().zip(&anchor).zip(&tangent) {
                *c = cos_t * a + sin_t * t / tn;
            }
            let cn = norm(&candidate);
            candidate.iter_mut().for_each(|c| *c /= cn);
            if net.accepts(&candidate) {
                net.push(UnitVector(candidate.clone()));
                if net.len() > options.max_points {
                    return Err(too_big(net.len()));
                }
                rejections = 0;
            } else {
                rejections += 1;
            }
        }
    }
    Ok(net)
}

/// Index of the net point closest to `a` (ties to the lowest index).
pub fn nearest_point(net: &EpsNet, a: &UnitVector) -> Result<usize> {
    if a.dim() != net.dim() {
        return Err(argument(format!(
            "point dimension {} ≠ net dimension {}",
            a.dim(),
            net.dim()
        )));
    }
    if net.is_empty() {
        return Err(argument("empty net"));
    }
    Ok(net.nearest(a.as_slice()))
}

/// Per-region mass and vector moment of the normalized measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMoments {
    pub net: NetId,
    /// `μ_u`, the measure of region `R_u`.
    pub weights: Vec<f64>,
    /// `w_u = ∫_{R_u} a da`, row-major `|net| × dim`.
    pub moment_vectors: Vec<f64>,
    pub samples_used: u64,
    /// Standard error of each `w_u` (Euclidean norm of the per-coordinate errors).
    pub standard_errors: Vec<f64>,
    /// Standard error of each `μ_u`.
    pub weight_std_errors: Vec<f64>,
    /// Regions that received no samples; their moments are zero.
    pub empty_regions: Vec<usize>,
    /// `S_u = ∫_{R_u} a aᵀ da`, row-major `|net| × dim × dim`.
    pub second_moments: Vec<f64>,
}

impl RegionMoments {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.net.dim
    }

    pub fn moment(&self, u: usize) -> &[f64] {
        &self.moment_vectors[u * self.net.dim..(u + 1) * self.net.dim]
    }

    /// `∫_{R_u} a aᵀ da` for region `u`, row-major `dim × dim`.
    pub fn second_moment(&self, u: usize) -> &[f64] {
        let d2 = self.net.dim * self.net.dim;
        &self.second_moments[u * d2..(u + 1) * d2]
    }

    /// Delta-method standard error of a smooth function `F` of the moment
    /// vectors, given `g_u = ∂F/∂w_u` (row-major like `moment_vectors`).
    ///
    /// Linearized, `F` is the sample mean of `g_{u(a)}·a`, whose per-sample
    /// variance is `Σ_u g_uᵀ S_u g_u − (Σ_u g_u·w_u)²` with `S_u` the region
    /// second moments. This includes the covariance between regions.
    pub fn linear_std_error(&self, gradient: &[f64]) -> f64 {
        let dim = self.net.dim;
        let mut second = 0.0;
        let mut first = 0.0;
        for (u, g) in gradient.chunks(dim).enumerate() {
            let s = self.second_moment(u);
            for i in 0..dim {
                for j in 0..dim {
                    second += g[i] * s[i * dim + j] * g[j];
                }
            }
            first += dot(g, self.moment(u));
        }
        ((second - first * first).max(0.0) / self.samples_used as f64).sqrt()
    }
}

/// Monte Carlo region masses and vector moments over the Voronoi cells of
/// `net`.
pub fn region_moments(
    net: &EpsNet,
    samples: usize,
    sampler: &SphereSampler,
) -> Result<RegionMoments> {
    if net.is_empty() {
        return Err(argument("empty net"));
    }
    if sampler.dim() != net.dim() {
        return Err(argument(format!(
            "sampler dimension {} ≠ net dimension {}",
            sampler.dim(),
            net.dim()
        )));
    }
    let required = 100 * net.len();
    if samples < required {
        return Err(domain(format!(
            "region moments need at least 100 samples per region ({required}), got {samples}"
        )));
    }
    let dim = net.dim();
    let r = net.len();
    let mut counts = vec![0u64; r];
    let mut sums = vec![0.0; r * dim];
    let mut squares = vec![0.0; r * dim * dim];
    let sizes = chunk_sizes(samples);
    for (batch_index, batch) in sizes.chunks(CHUNKS_PER_BATCH).enumerate() {
        let first = batch_index * CHUNKS_PER_BATCH;
        let assigned: Vec<(Vec<u32>, Vec<f64>)> = batch
            .par_iter()
            .enumerate()
            .map(|(offset, &size)| {
                let mut sub = sampler.substream((first + offset) as u64);
                let mut regions = Vec::with_capacity(size);
                let mut points = vec![0.0; size * dim];
                for p in points.chunks_mut(dim) {
                    sub.fill(p);
                    regions.push(net.nearest(p) as u32);
                }
                (regions, points)
            })
            .collect();
        for (regions, points) in &assigned {
            for (&u, p) in regions.iter().zip(points.chunks(dim)) {
                let u = u as usize;
                counts[u] += 1;
                sums[u * dim..(u + 1) * dim]
                    .iter_mut()
                    .zip(p)
                    .for_each(|(s, x)| *s += x);
                let sq = &mut squares[u * dim * dim..(u + 1) * dim * dim];
                for i in 0..dim {
                    for j in 0..dim {
                        sq[i * dim + j] += p[i] * p[j];
                    }
                }
            }
        }
    }
    let total = samples as f64;
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let moment_vectors: Vec<f64> = sums.iter().map(|s| s / total).collect();
    let standard_errors = (0..r)
        .map(|u| {
            let w = &moment_vectors[u * dim..(u + 1) * dim];
            ((weights[u] - dot(w, w)).max(0.0) / total).sqrt()
        })
        .collect();
    let weight_std_errors = weights
        .iter()
        .map(|&mu| (mu * (1.0 - mu) / total).sqrt())
        .collect();
    let empty_regions = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(u, _)| u)
        .collect();
    Ok(RegionMoments {
        net: net.id(),
        weights,
        moment_vectors,
        samples_used: samples as u64,
        standard_errors,
        weight_std_errors,
        empty_regions,
        second_moments: squares.iter().map(|s| s / total).collect(),
    })
}

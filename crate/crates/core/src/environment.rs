//! Random edge-weight environments on the complete graph.
//!
//! An environment assigns an i.i.d. nonnegative weight to every edge of the
//! complete graph on `n` vertices. The mean-field quality of a realized
//! environment is measured by the uniform discrepancy
//!
//! `delta_n = sup |gamma(C, D) - |C||D| E(rho)| / n^2`
//!
//! over disjoint vertex sets `C, D`, where `gamma(C, D)` is the bipartite
//! weight sum. `delta_n` concentrates near zero super-exponentially fast,
//! which is what makes mean-field tilting arguments work; this module
//! provides the exact (exhaustive) and sampled (lower bound) evaluations of
//! the supremum plus replicated tail diagnostics.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::stats;

/// Exhaustive `delta_n` enumerates all `3^n` assignments; past this size the
/// exact oracle refuses and callers fall back to [`Environment::delta_sampled`].
pub const DELTA_EXACT_MAX_N: usize = 14;

/// Edge-weight distribution with its analytic mean and the exponential-moment
/// radius (the `alpha` with `E exp(alpha rho) < inf`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightDistribution {
    Constant { value: f64 },
    Bernoulli { p: f64, scale: f64 },
    Exponential { mean: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl WeightDistribution {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(msg));
        match *self {
            WeightDistribution::Constant { value } => {
                if !(value > 0.0) || !value.is_finite() {
                    return fail(format!("constant weight must be positive, got {value}"));
                }
            }
            WeightDistribution::Bernoulli { p, scale } => {
                if !(p > 0.0 && p <= 1.0) {
                    return fail(format!("bernoulli p must lie in (0, 1], got {p}"));
                }
                if !(scale > 0.0) || !scale.is_finite() {
                    return fail(format!("bernoulli scale must be positive, got {scale}"));
                }
            }
            WeightDistribution::Exponential { mean } => {
                if !(mean > 0.0) || !mean.is_finite() {
                    return fail(format!("exponential mean must be positive, got {mean}"));
                }
            }
            WeightDistribution::Uniform { lo, hi } => {
                if !(lo >= 0.0) || !(hi > lo) || !hi.is_finite() {
                    return fail(format!("uniform needs 0 <= lo < hi, got [{lo}, {hi}]"));
                }
            }
        }
        Ok(())
    }

    /// Analytic mean `E(rho)`.
    pub fn mean(&self) -> f64 {
        match *self {
            WeightDistribution::Constant { value } => value,
            WeightDistribution::Bernoulli { p, scale } => p * scale,
            WeightDistribution::Exponential { mean } => mean,
            WeightDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// Supremum of exponents `alpha` with a finite MGF. Bounded kinds have
    /// infinite radius; the exponential MGF is finite for `alpha < 1/mean`.
    pub fn mgf_radius(&self) -> f64 {
        match *self {
            WeightDistribution::Exponential { mean } => 1.0 / mean,
            _ => f64::INFINITY,
        }
    }

    /// Largest possible `|rho - E(rho)|` (infinite for unbounded kinds).
    /// Bounds `delta_n` by `max_abs_deviation() / 4` for any environment.
    pub fn max_abs_deviation(&self) -> f64 {
        let m = self.mean();
        match *self {
            WeightDistribution::Constant { .. } => 0.0,
            WeightDistribution::Bernoulli { scale, .. } => m.max(scale - m),
            WeightDistribution::Exponential { .. } => f64::INFINITY,
            WeightDistribution::Uniform { lo, hi } => (m - lo).max(hi - m),
        }
    }

    pub fn sample(&self, rng: &mut impl RngCore) -> f64 {
        match *self {
            WeightDistribution::Constant { value } => value,
            WeightDistribution::Bernoulli { p, scale } => {
                if rng::uniform_pos(rng) <= p {
                    scale
                } else {
                    0.0
                }
            }
            WeightDistribution::Exponential { mean } => mean * -rng::uniform_pos(rng).ln(),
            WeightDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng::uniform_pos(rng),
        }
    }

    fn descriptor(&self) -> (u32, f64, f64) {
        match *self {
            WeightDistribution::Constant { value } => (0, value, 0.0),
            WeightDistribution::Bernoulli { p, scale } => (1, p, scale),
            WeightDistribution::Exponential { mean } => (2, mean, 0.0),
            WeightDistribution::Uniform { lo, hi } => (3, lo, hi),
        }
    }

    fn from_descriptor(kind: u32, a: f64, b: f64) -> Result<Self> {
        let dist = match kind {
            0 => WeightDistribution::Constant { value: a },
            1 => WeightDistribution::Bernoulli { p: a, scale: b },
            2 => WeightDistribution::Exponential { mean: a },
            3 => WeightDistribution::Uniform { lo: a, hi: b },
            _ => return Err(Error::Format(format!("unknown distribution kind {kind}"))),
        };
        dist.validate()?;
        Ok(dist)
    }
}

impl std::fmt::Display for WeightDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            WeightDistribution::Constant { value } => write!(f, "constant({value})"),
            WeightDistribution::Bernoulli { p, scale } => write!(f, "bernoulli({p},{scale})"),
            WeightDistribution::Exponential { mean } => write!(f, "exponential({mean})"),
            WeightDistribution::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
        }
    }
}

/// Constant environments store no matrix: every off-diagonal entry equals the
/// constant, which keeps the simulation layer O(1) per event. All other
/// distributions store the full symmetric matrix row-major.
#[derive(Clone, Debug)]
enum Storage {
    Constant(f64),
    Dense(Arc<Vec<f64>>),
}

/// One realized edge-weight environment.
#[derive(Clone, Debug)]
pub struct Environment {
    n: usize,
    dist: WeightDistribution,
    seed: u64,
    storage: Storage,
}

impl Environment {
    /// Draw `n(n-1)/2` independent weights and place them symmetrically.
    /// Deterministic in `seed`: the upper triangle is filled row-major from
    /// a single stream.
    pub fn sample(n: usize, dist: WeightDistribution, seed: u64) -> Result<Self> {
        dist.validate()?;
        if n < 2 {
            return Err(Error::invalid(format!("environment needs n >= 2, got {n}")));
        }
        let storage = match dist {
            WeightDistribution::Constant { value } => Storage::Constant(value),
            _ => {
                let mut rng = rng::stream(seed, "environment", 0);
                let mut w = vec![0.0f64; n * n];
                for i in 0..n {
                    for j in (i + 1)..n {
                        let x = dist.sample(&mut rng);
                        w[i * n + j] = x;
                        w[j * n + i] = x;
                    }
                }
                Storage::Dense(Arc::new(w))
            }
        };
        Ok(Environment {
            n,
            dist,
            seed,
            storage,
        })
    }

    /// Bytes a dense realization of size `n` would occupy.
    pub fn required_bytes(n: usize) -> usize {
        n * n * std::mem::size_of::<f64>()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dist(&self) -> WeightDistribution {
        self.dist
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `Some(c)` when every off-diagonal weight is the constant `c`.
    pub fn constant_value(&self) -> Option<f64> {
        match self.storage {
            Storage::Constant(c) => Some(c),
            Storage::Dense(_) => None,
        }
    }

    /// Weight on the edge `{i, j}`; zero on the diagonal.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.n && j < self.n);
        if i == j {
            return 0.0;
        }
        match &self.storage {
            Storage::Constant(c) => *c,
            Storage::Dense(w) => w[i * self.n + j],
        }
    }

    /// Bipartite weight sum `gamma(C, D)` over disjoint vertex sets.
    pub fn gamma(&self, c: &[usize], d: &[usize]) -> Result<f64> {
        for &v in c.iter().chain(d) {
            if v >= self.n {
                return Err(Error::invalid(format!("vertex {v} out of range (n = {})", self.n)));
            }
        }
        let mut in_c = vec![false; self.n];
        for &v in c {
            in_c[v] = true;
        }
        for &v in d {
            if in_c[v] {
                return Err(Error::invalid(format!(
                    "gamma is defined for disjoint sets only; vertex {v} is in both"
                )));
            }
        }
        if let Storage::Constant(w) = self.storage {
            return Ok(w * c.len() as f64 * d.len() as f64);
        }
        let mut sum = 0.0;
        for &i in c {
            for &j in d {
                sum += self.weight(i, j);
            }
        }
        Ok(sum)
    }

    /// Exact `delta_n` by exhaustive enumeration of all assignments of
    /// vertices to `C`, `D` or neither. The recursion carries the partial
    /// cross sum, so the whole scan costs `O(n 3^n)` additions.
    pub fn delta_exact(&self) -> Result<f64> {
        if self.n > DELTA_EXACT_MAX_N {
            return Err(Error::refused(format!(
                "delta_exact enumerates 3^n assignments and is capped at n <= {DELTA_EXACT_MAX_N} \
                 (got n = {}); use delta_sampled instead",
                self.n
            )));
        }
        if let Storage::Constant(_) = self.storage {
            // gamma(C, D) = |C||D| E(rho) identically
            return Ok(0.0);
        }
        let mean = self.dist.mean();
        let n2 = (self.n * self.n) as f64;
        // assignment[v]: 0 = neither, 1 = C, 2 = D
        let mut assignment = vec![0u8; self.n];
        let mut best = 0.0f64;
        self.delta_scan(0, 0.0, 0, 0, &mut assignment, mean, n2, &mut best);
        Ok(best)
    }

    #[allow(clippy::too_many_arguments)]
    fn delta_scan(
        &self,
        v: usize,
        gamma: f64,
        size_c: usize,
        size_d: usize,
        assignment: &mut [u8],
        mean: f64,
        n2: f64,
        best: &mut f64,
    ) {
        if v == self.n {
            let disc = (gamma - (size_c * size_d) as f64 * mean).abs() / n2;
            if disc > *best {
                *best = disc;
            }
            return;
        }
        // cross sums of vertex v against the vertices already assigned
        let (mut to_c, mut to_d) = (0.0, 0.0);
        for u in 0..v {
            match assignment[u] {
                1 => to_c += self.weight(v, u),
                2 => to_d += self.weight(v, u),
                _ => {}
            }
        }
        assignment[v] = 0;
        self.delta_scan(v + 1, gamma, size_c, size_d, assignment, mean, n2, best);
        assignment[v] = 1;
        self.delta_scan(v + 1, gamma + to_d, size_c + 1, size_d, assignment, mean, n2, best);
        assignment[v] = 2;
        self.delta_scan(v + 1, gamma + to_c, size_c, size_d + 1, assignment, mean, n2, best);
        assignment[v] = 0;
    }

    /// Monte Carlo lower bound on `delta_n`: `trials` uniformly random
    /// assignments, each polished by steepest-ascent single-vertex moves.
    /// The result is a running maximum, so it is monotone in `trials` for a
    /// fixed seed and never exceeds [`Environment::delta_exact`].
    pub fn delta_sampled(&self, trials: usize, seed: u64) -> Result<f64> {
        if trials == 0 {
            return Err(Error::invalid("delta_sampled needs trials >= 1"));
        }
        if let Storage::Constant(_) = self.storage {
            return Ok(0.0);
        }
        let mean = self.dist.mean();
        let n = self.n;
        let n2 = (n * n) as f64;
        let mut best = 0.0f64;
        let mut assignment = vec![0u8; n];
        let mut sum_c = vec![0.0f64; n]; // per-vertex weight into C
        let mut sum_d = vec![0.0f64; n];
        for trial in 0..trials {
            let mut rng = rng::stream(seed, "delta-trial", trial as u64);
            for a in assignment.iter_mut() {
                *a = (rng.next_u64() % 3) as u8;
            }
            // build cross sums for this assignment
            sum_c.iter_mut().for_each(|x| *x = 0.0);
            sum_d.iter_mut().for_each(|x| *x = 0.0);
            let (mut size_c, mut size_d) = (0usize, 0usize);
            let mut gamma = 0.0;
            for v in 0..n {
                match assignment[v] {
                    1 => size_c += 1,
                    2 => size_d += 1,
                    _ => {}
                }
                for u in 0..v {
                    let w = self.weight(v, u);
                    if assignment[u] == 1 {
                        sum_c[v] += w;
                    } else if assignment[u] == 2 {
                        sum_d[v] += w;
                    }
                    if assignment[v] == 1 {
                        sum_c[u] += w;
                    } else if assignment[v] == 2 {
                        sum_d[u] += w;
                    }
                }
                if assignment[v] == 1 {
                    gamma += sum_d[v];
                } else if assignment[v] == 2 {
                    gamma += sum_c[v];
                }
            }
            let disc =
                |g: f64, sc: usize, sd: usize| (g - (sc * sd) as f64 * mean).abs() / n2;
            let mut current = disc(gamma, size_c, size_d);
            // steepest-ascent local search over single-vertex reassignments
            const MAX_SWEEPS: usize = 60;
            for _ in 0..MAX_SWEEPS {
                let mut best_move: Option<(usize, u8, f64, f64, usize, usize)> = None;
                for v in 0..n {
                    let from = assignment[v];
                    for to in 0..3u8 {
                        if to == from {
                            continue;
                        }
                        // remove v from its class, then add to the new one
                        let (mut g, mut sc, mut sd) = (gamma, size_c, size_d);
                        match from {
                            1 => {
                                g -= sum_d[v];
                                sc -= 1;
                            }
                            2 => {
                                g -= sum_c[v];
                                sd -= 1;
                            }
                            _ => {}
                        }
                        match to {
                            1 => {
                                g += sum_d[v];
                                sc += 1;
                            }
                            2 => {
                                g += sum_c[v];
                                sd += 1;
                            }
                            _ => {}
                        }
                        let val = disc(g, sc, sd);
                        if val > current + 1e-15
                            && best_move.is_none_or(|(_, _, _, bv, _, _)| val > bv)
                        {
                            best_move = Some((v, to, g, val, sc, sd));
                        }
                    }
                }
                let Some((v, to, g, val, sc, sd)) = best_move else {
                    break;
                };
                let from = assignment[v];
                assignment[v] = to;
                gamma = g;
                current = val;
                size_c = sc;
                size_d = sd;
                for u in 0..n {
                    if u == v {
                        continue;
                    }
                    let w = self.weight(v, u);
                    if from == 1 {
                        sum_c[u] -= w;
                    } else if from == 2 {
                        sum_d[u] -= w;
                    }
                    if to == 1 {
                        sum_c[u] += w;
                    } else if to == 2 {
                        sum_d[u] += w;
                    }
                }
            }
            if current > best {
                best = current;
            }
        }
        Ok(best)
    }

    /// Direct recomputation of `gamma(S, I)` for arbitrary index sets given
    /// as a spin mask; an oracle for the incremental bookkeeping in tests.
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn gamma_of_masks(&self, in_s: &[bool], in_i: &[bool]) -> f64 {
        if let Storage::Constant(c) = self.storage {
            let s = in_s.iter().filter(|x| **x).count();
            let i = in_i.iter().filter(|x| **x).count();
            return c * s as f64 * i as f64;
        }
        let mut sum = 0.0;
        for v in 0..self.n {
            if !in_s[v] {
                continue;
            }
            for u in 0..self.n {
                if in_i[u] {
                    sum += self.weight(v, u);
                }
            }
        }
        sum
    }

    /// Serialize: magic "SIRW", version, n, seed, distribution descriptor,
    /// then the strict upper triangle row-major as little-endian f64.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"SIRW")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        let (kind, a, b) = self.dist.descriptor();
        w.write_all(&kind.to_le_bytes())?;
        w.write_all(&a.to_le_bytes())?;
        w.write_all(&b.to_le_bytes())?;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                w.write_all(&self.weight(i, j).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"SIRW" {
            return Err(Error::Format("bad magic; not an environment file".into()));
        }
        let mut u32buf = [0u8; 4];
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != 1 {
            return Err(Error::Format(format!("unsupported environment version {version}")));
        }
        r.read_exact(&mut u32buf)?;
        let n = u32::from_le_bytes(u32buf) as usize;
        if n < 2 {
            return Err(Error::Format(format!("environment file has n = {n} < 2")));
        }
        r.read_exact(&mut u64buf)?;
        let seed = u64::from_le_bytes(u64buf);
        r.read_exact(&mut u32buf)?;
        let kind = u32::from_le_bytes(u32buf);
        r.read_exact(&mut u64buf)?;
        let a = f64::from_le_bytes(u64buf);
        r.read_exact(&mut u64buf)?;
        let b = f64::from_le_bytes(u64buf);
        let dist = WeightDistribution::from_descriptor(kind, a, b)?;
        let mut w = vec![0.0f64; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                r.read_exact(&mut u64buf)?;
                let x = f64::from_le_bytes(u64buf);
                if !(x >= 0.0) {
                    return Err(Error::Format(format!("negative weight {x} at ({i},{j})")));
                }
                w[i * n + j] = x;
                w[j * n + i] = x;
            }
        }
        let storage = match dist {
            WeightDistribution::Constant { value } => Storage::Constant(value),
            _ => Storage::Dense(Arc::new(w)),
        };
        Ok(Environment {
            n,
            dist,
            seed,
            storage,
        })
    }
}

/// Scale on which the discrepancy tail is measured: the LDP needs
/// `P(delta_n > eps)`, the MDP needs `P(n delta_n / a_n > eps)` with
/// `a_n = n^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scale", rename_all = "snake_case")]
pub enum DeltaScale {
    Ldp,
    Mdp { a_exponent: f64 },
}

impl std::fmt::Display for DeltaScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeltaScale::Ldp => write!(f, "ldp"),
            DeltaScale::Mdp { a_exponent } => write!(f, "mdp:{a_exponent}"),
        }
    }
}

/// How each replica evaluates `delta_n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaMethod {
    /// Exhaustive enumeration; every `n` must satisfy the exact-size cap.
    Exact,
    /// Sampled lower bound with this many trials per replica.
    Sampled { trials: usize },
}

/// One row of the exceedance table.
#[derive(Clone, Debug, Serialize)]
pub struct DeltaTailRow {
    pub n: usize,
    pub eps: f64,
    pub scale: DeltaScale,
    pub exceed_count: u64,
    pub replicas: u64,
    pub freq: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Empirical exceedance frequencies of the discrepancy statistic over fresh
/// environments, with Wilson 95% intervals.
pub fn delta_tail_curve(
    dist: WeightDistribution,
    n_list: &[usize],
    eps: f64,
    replicas: usize,
    scale: DeltaScale,
    method: DeltaMethod,
    seed: u64,
    threads: usize,
) -> Result<Vec<DeltaTailRow>> {
    dist.validate()?;
    if n_list.is_empty() {
        return Err(Error::invalid("delta_tail_curve needs a non-empty n list"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    if replicas == 0 {
        return Err(Error::invalid("delta_tail_curve needs replicas >= 1"));
    }
    if let DeltaMethod::Exact = method {
        if let Some(&bad) = n_list.iter().find(|&&n| n > DELTA_EXACT_MAX_N) {
            return Err(Error::refused(format!(
                "n = {bad} exceeds the exact enumeration cap {DELTA_EXACT_MAX_N}; \
                 request sampled mode explicitly"
            )));
        }
    }
    if let DeltaScale::Mdp { a_exponent } = scale {
        if !(a_exponent > 0.5 && a_exponent < 1.0) {
            return Err(Error::invalid(format!(
                "mdp exponent must lie in (0.5, 1), got {a_exponent}"
            )));
        }
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for (ni, &n) in n_list.iter().enumerate() {
        let statistic = |rep: u64| -> Result<f64> {
            let env_seed = rng::derive_seed(seed, "delta-env", (ni as u64) << 32 | rep);
            let env = Environment::sample(n, dist, env_seed)?;
            let delta = match method {
                DeltaMethod::Exact => env.delta_exact()?,
                DeltaMethod::Sampled { trials } => {
                    env.delta_sampled(trials, rng::derive_seed(seed, "delta-search", rep))?
                }
            };
            Ok(match scale {
                DeltaScale::Ldp => delta,
                DeltaScale::Mdp { a_exponent } => {
                    let a_n = (n as f64).powf(a_exponent);
                    n as f64 * delta / a_n
                }
            })
        };
        let stats: Vec<f64> = run_replicas(replicas, threads, |rep| statistic(rep))?;
        let exceed_count = stats.iter().filter(|&&s| s > eps).count() as u64;
        let freq = exceed_count as f64 / replicas as f64;
        let (ci_lo, ci_hi) = stats::wilson_interval(exceed_count, replicas as u64, 1.96);
        rows.push(DeltaTailRow {
            n,
            eps,
            scale,
            exceed_count,
            replicas: replicas as u64,
            freq,
            ci_lo,
            ci_hi,
        });
    }
    Ok(rows)
}

pub fn write_delta_csv(rows: &[DeltaTailRow], w: &mut impl Write) -> Result<()> {
    writeln!(w, "n,eps,scale,exceed_count,replicas,freq,ci_lo,ci_hi")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.n, r.eps, r.scale, r.exceed_count, r.replicas, r.freq, r.ci_lo, r.ci_hi
        )?;
    }
    Ok(())
}

/// Run `replicas` independent jobs, sequentially or on a local rayon pool.
/// Results are collected by replica index, so the outcome does not depend on
/// the thread count.
pub(crate) fn run_replicas<T: Send>(
    replicas: usize,
    threads: usize,
    job: impl Fn(u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if threads == 1 {
        (0..replicas as u64).map(job).collect()
    } else {
        let body = || (0..replicas as u64).into_par_iter().map(&job).collect();
        if threads == 0 {
            body()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(body)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts(v: f64) -> WeightDistribution {
        WeightDistribution::Constant { value: v }
    }

    #[test]
    fn constant_two_vertices_gives_unit_off_diagonal() {
        let env = Environment::sample(2, consts(1.0), 123).unwrap();
        assert_eq!(env.weight(0, 1), 1.0);
        assert_eq!(env.weight(1, 0), 1.0);
        assert_eq!(env.weight(0, 0), 0.0);
        assert_eq!(env.weight(1, 1), 0.0);
    }

    #[test]
    fn degenerate_bernoulli_is_all_scale() {
        let env =
            Environment::sample(3, WeightDistribution::Bernoulli { p: 1.0, scale: 2.0 }, 7)
                .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { 2.0 };
                assert_eq!(env.weight(i, j), expect);
            }
        }
    }

    #[test]
    fn exponential_sample_mean_within_five_standard_errors() {
        let n = 100;
        let dist = WeightDistribution::Exponential { mean: 1.5 };
        let env = Environment::sample(n, dist, 42).unwrap();
        let pairs = (n * (n - 1) / 2) as f64;
        let mut sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                sum += env.weight(i, j);
            }
        }
        let mean = sum / pairs;
        let se = 1.5 / pairs.sqrt();
        assert!((mean - 1.5).abs() < 5.0 * se, "mean = {mean}");
    }

    #[test]
    fn regeneration_is_bit_exact() {
        let dist = WeightDistribution::Uniform { lo: 0.0, hi: 3.0 };
        let a = Environment::sample(8, dist, 99).unwrap();
        let b = Environment::sample(8, dist, 99).unwrap();
        let c = Environment::sample(8, dist, 100).unwrap();
        let mut any_diff = false;
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(a.weight(i, j).to_bits(), b.weight(i, j).to_bits());
                any_diff |= a.weight(i, j) != c.weight(i, j);
            }
        }
        assert!(any_diff, "different seeds should differ somewhere");
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(Environment::sample(1, consts(1.0), 0).is_err());
        assert!(Environment::sample(4, consts(0.0), 0).is_err());
        assert!(Environment::sample(4, WeightDistribution::Exponential { mean: -1.0 }, 0).is_err());
        assert!(Environment::sample(4, WeightDistribution::Bernoulli { p: 0.0, scale: 1.0 }, 0)
            .is_err());
        assert!(Environment::sample(4, WeightDistribution::Uniform { lo: 2.0, hi: 1.0 }, 0)
            .is_err());
    }

    #[test]
    fn gamma_singletons_and_empty_sets() {
        let env = Environment::sample(5, WeightDistribution::Uniform { lo: 0.5, hi: 1.5 }, 3)
            .unwrap();
        assert_eq!(env.gamma(&[1], &[2]).unwrap(), env.weight(1, 2));
        assert_eq!(env.gamma(&[], &[0, 1, 2]).unwrap(), 0.0);
        assert!(env.gamma(&[0, 1], &[1, 2]).is_err());
    }

    #[test]
    fn gamma_constant_is_product_of_sizes() {
        let env = Environment::sample(6, consts(0.75), 3).unwrap();
        let g = env.gamma(&[0, 1, 2], &[3, 4]).unwrap();
        assert_eq!(g, 3.0 * 2.0 * 0.75);
    }

    #[test]
    fn delta_exact_constant_is_zero() {
        let env = Environment::sample(6, consts(1.0), 0).unwrap();
        assert_eq!(env.delta_exact().unwrap(), 0.0);
    }

    #[test]
    fn delta_exact_two_vertices_matches_pair_formula() {
        // only nonempty disjoint pairs are ({0},{1}) and ({1},{0})
        let dist = WeightDistribution::Exponential { mean: 2.0 };
        let env = Environment::sample(2, dist, 5).unwrap();
        let w = env.weight(0, 1);
        let expected = (w - 2.0).abs() / 4.0;
        assert!((env.delta_exact().unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn delta_exact_refuses_large_n() {
        let env = Environment::sample(15, consts(1.0), 0).unwrap();
        assert!(matches!(env.delta_exact(), Err(Error::Refused(_))));
    }

    #[test]
    fn delta_sampled_never_exceeds_exact_and_is_monotone() {
        let dist = WeightDistribution::Bernoulli { p: 0.5, scale: 1.0 };
        let env = Environment::sample(7, dist, 11).unwrap();
        let exact = env.delta_exact().unwrap();
        let few = env.delta_sampled(5, 21).unwrap();
        let more = env.delta_sampled(60, 21).unwrap();
        assert!(few <= more + 1e-15);
        assert!(more <= exact + 1e-12, "sampled {more} > exact {exact}");
    }

    #[test]
    fn delta_sampled_with_exhaustive_budget_matches_exact() {
        let dist = WeightDistribution::Bernoulli { p: 0.5, scale: 1.0 };
        let env = Environment::sample(6, dist, 17).unwrap();
        let exact = env.delta_exact().unwrap();
        let trials = 10 * 3usize.pow(6);
        let sampled = env.delta_sampled(trials, 4).unwrap();
        assert!((exact - sampled).abs() < 1e-12, "exact {exact}, sampled {sampled}");
    }

    #[test]
    fn delta_tail_constant_distribution_never_exceeds() {
        let rows = delta_tail_curve(
            consts(1.0),
            &[4, 6],
            0.01,
            20,
            DeltaScale::Ldp,
            DeltaMethod::Exact,
            1,
            1,
        )
        .unwrap();
        for r in &rows {
            assert_eq!(r.exceed_count, 0);
            assert_eq!(r.freq, 0.0);
        }
    }

    #[test]
    fn delta_tail_eps_beyond_range_is_never_exceeded() {
        // delta_n <= max|rho - E rho| / 4 pointwise
        let dist = WeightDistribution::Bernoulli { p: 0.5, scale: 1.0 };
        let eps = dist.max_abs_deviation();
        let rows = delta_tail_curve(
            dist,
            &[4, 6, 8],
            eps,
            30,
            DeltaScale::Ldp,
            DeltaMethod::Exact,
            3,
            1,
        )
        .unwrap();
        for r in &rows {
            assert_eq!(r.exceed_count, 0);
        }
    }

    #[test]
    fn delta_tail_rejects_bad_arguments() {
        let dist = consts(1.0);
        assert!(delta_tail_curve(dist, &[], 0.1, 5, DeltaScale::Ldp, DeltaMethod::Exact, 0, 1)
            .is_err());
        assert!(delta_tail_curve(
            dist,
            &[20],
            0.1,
            5,
            DeltaScale::Ldp,
            DeltaMethod::Exact,
            0,
            1
        )
        .is_err());
        assert!(delta_tail_curve(
            dist,
            &[4],
            0.1,
            5,
            DeltaScale::Mdp { a_exponent: 1.2 },
            DeltaMethod::Exact,
            0,
            1
        )
        .is_err());
    }

    #[test]
    fn binary_round_trip_preserves_weights() {
        let dist = WeightDistribution::Exponential { mean: 0.7 };
        let env = Environment::sample(9, dist, 1234).unwrap();
        let mut buf = Vec::new();
        env.write_binary(&mut buf).unwrap();
        let back = Environment::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(back.n(), 9);
        assert_eq!(back.seed(), 1234);
        assert_eq!(back.dist(), dist);
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(env.weight(i, j).to_bits(), back.weight(i, j).to_bits());
            }
        }
    }

    #[test]
    fn binary_header_layout_is_stable() {
        let env = Environment::sample(2, consts(1.0), 3).unwrap();
        let mut buf = Vec::new();
        env.write_binary(&mut buf).unwrap();
        // magic, version 1, n 2, seed 3, kind 0, params (1.0, 0.0), one weight
        assert_eq!(&buf[0..4], b"SIRW");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), 0);
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), 1.0);
        assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), 0.0);
        assert_eq!(f64::from_le_bytes(buf[40..48].try_into().unwrap()), 1.0);
        assert_eq!(buf.len(), 48);
    }

    #[test]
    fn read_binary_rejects_garbage() {
        assert!(Environment::read_binary(&mut &b"NOPE"[..]).is_err());
    }
}

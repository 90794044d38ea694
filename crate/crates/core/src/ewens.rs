//! Ewens(θ) cycle counts through the Feller coupling.
//!
//! The chain `ξ_j ~ Bernoulli(θ/(j−1+θ))` (so `ξ₁ = 1`) is read as a string of
//! successes; the gaps between consecutive successes of `(ξ₁, …, ξ_n, 1)` are
//! the cycle lengths of an Ewens(θ) permutation of `n`. Running the same chain
//! further and counting gaps of every length gives independent
//! `Poisson(θ/ℓ)` variables `W_ℓ` close to the cycle counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::CompensatedSum;

/// RNG used for every replicate stream.
pub type ReplicaRng = ChaCha8Rng;

/// Largest `n` accepted by [`exact_cycle_type_distribution`] by default.
pub const DEFAULT_EXACT_CAP: u64 = 30;

const LOG_SPACE_THRESHOLD: u64 = 64;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under `master`. Distinct indices give
/// well-separated seeds and the map is a pure function of its inputs.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

pub fn replica_rng(master: u64, index: u64) -> ReplicaRng {
    ReplicaRng::seed_from_u64(derive_seed(master, index))
}

/// Cycle type of a permutation of `n`: sorted `(ℓ, a_ℓ)` pairs with `a_ℓ > 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CycleCounts {
    n: u64,
    counts: Vec<(u64, u64)>,
}

impl CycleCounts {
    /// Validates `Σ ℓ·a_ℓ = n`. Repeated lengths are merged, zero counts dropped.
    pub fn new(n: u64, counts: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("permutation order must be at least 1"));
        }
        let mut v: Vec<(u64, u64)> = counts.into_iter().filter(|&(_, a)| a > 0).collect();
        v.sort_unstable();
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(v.len());
        for (l, a) in v {
            if l == 0 || l > n {
                return Err(Error::invalid(format!("cycle length {l} outside 1..={n}")));
            }
            match merged.last_mut() {
                Some(last) if last.0 == l => last.1 += a,
                _ => merged.push((l, a)),
            }
        }
        let total: u64 = merged.iter().map(|&(l, a)| l * a).sum();
        if total != n {
            return Err(Error::invalid(format!("cycle lengths sum to {total}, expected {n}")));
        }
        Ok(Self { n, counts: merged })
    }

    /// From a list of individual cycle lengths.
    pub fn from_lengths(lengths: &[u64]) -> Result<Self> {
        let n = lengths.iter().sum();
        Self::new(n, lengths.iter().map(|&l| (l, 1)))
    }

    pub fn identity(n: u64) -> Result<Self> {
        Self::new(n, [(1, n)])
    }

    pub fn single_cycle(n: u64) -> Result<Self> {
        Self::new(n, [(n, 1)])
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `a_ℓ`, zero for absent lengths.
    pub fn count(&self, ell: u64) -> u64 {
        self.counts
            .binary_search_by_key(&ell, |&(l, _)| l)
            .map_or(0, |i| self.counts[i].1)
    }

    /// Nonzero `(ℓ, a_ℓ)` pairs in increasing `ℓ`.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (u64, u64)> + '_ {
        self.counts.iter().copied()
    }

    pub fn distinct_lengths(&self) -> usize {
        self.counts.len()
    }

    /// Number of cycles `K(σ) = Σ a_ℓ`.
    pub fn total_cycles(&self) -> u64 {
        self.counts.iter().map(|&(_, a)| a).sum()
    }

    /// Individual cycle lengths, longest first.
    pub fn lengths(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.total_cycles() as usize);
        for &(l, a) in self.counts.iter().rev() {
            out.extend(std::iter::repeat_n(l, a as usize));
        }
        out
    }

    /// A permutation of `0..n` (as an image array) with this cycle type.
    pub fn representative_permutation(&self) -> Vec<usize> {
        let mut perm = vec![0usize; self.n as usize];
        let mut start = 0usize;
        for l in self.lengths() {
            let l = l as usize;
            for i in 0..l {
                perm[start + i] = start + (i + 1) % l;
            }
            start += l;
        }
        perm
    }
}

fn validate(n: u64, theta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid(format!("θ must be a positive real, got {theta}")));
    }
    Ok(())
}

#[inline]
fn success<R: Rng + ?Sized>(rng: &mut R, j: u64, theta: f64) -> bool {
    let u: f64 = rng.random();
    u * (j as f64 - 1.0 + theta) < theta
}

fn tally(n: u64, mut lengths: Vec<u64>) -> CycleCounts {
    lengths.sort_unstable();
    let mut counts: Vec<(u64, u64)> = Vec::new();
    for l in lengths {
        match counts.last_mut() {
            Some(last) if last.0 == l => last.1 += 1,
            _ => counts.push((l, 1)),
        }
    }
    CycleCounts { n, counts }
}

/// Runs `ξ₂..ξ_n` and returns the cycle lengths together with the position of
/// the last success in `1..=n`.
fn run_prefix<R: Rng + ?Sized>(n: u64, theta: f64, rng: &mut R) -> (Vec<u64>, u64) {
    let mut lengths = Vec::new();
    let mut last = 1u64;
    for j in 2..=n {
        if success(rng, j, theta) {
            lengths.push(j - last);
            last = j;
        }
    }
    (lengths, last)
}

/// Exact Ewens(θ) cycle counts of a permutation of `n`.
pub fn sample_ewens<R: Rng + ?Sized>(n: u64, theta: f64, rng: &mut R) -> Result<CycleCounts> {
    validate(n, theta)?;
    let (mut lengths, last) = run_prefix(n, theta, rng);
    lengths.push(n + 1 - last);
    Ok(tally(n, lengths))
}

/// Default chain horizon `max(10n, n + 1000)`.
pub fn default_horizon(n: u64) -> u64 {
    (10 * n).max(n + 1000)
}

/// Cycle counts and Poisson counts read off one Feller chain.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingSample {
    pub a: CycleCounts,
    /// Nonzero `(ℓ, W_ℓ)` for `ℓ ≤ n`, increasing in `ℓ`.
    pub w: Vec<(u64, u64)>,
    pub horizon: u64,
    /// The last success before the horizon could still start a spacing of
    /// length `≤ n` that closes past the horizon.
    pub open_spacing: bool,
    /// Upper bound `θ²n/horizon` on the expected number of `ℓ ≤ n` spacings
    /// that start after the horizon and are therefore missing from `w`.
    pub truncation_bias_bound: f64,
    pub chain_seed: Option<u64>,
}

impl CouplingSample {
    pub fn w(&self, ell: u64) -> u64 {
        self.w
            .binary_search_by_key(&ell, |&(l, _)| l)
            .map_or(0, |i| self.w[i].1)
    }

    /// `Σ_{ℓ≤n} |a_ℓ − W_ℓ|`.
    pub fn discrepancy(&self) -> u64 {
        let mut total = 0u64;
        let (mut i, mut j) = (0usize, 0usize);
        let a = &self.a.counts;
        let w = &self.w;
        while i < a.len() || j < w.len() {
            match (a.get(i), w.get(j)) {
                (Some(&(la, ca)), Some(&(lw, cw))) if la == lw => {
                    total += ca.abs_diff(cw);
                    i += 1;
                    j += 1;
                }
                (Some(&(la, ca)), Some(&(lw, _))) if la < lw => {
                    total += ca;
                    i += 1;
                }
                (Some(_), Some(&(_, cw))) => {
                    total += cw;
                    j += 1;
                }
                (Some(&(_, ca)), None) => {
                    total += ca;
                    i += 1;
                }
                (None, Some(&(_, cw))) => {
                    total += cw;
                    j += 1;
                }
                (None, None) => break,
            }
        }
        total
    }

    /// Lengths where `a_ℓ > W_ℓ`; the coupling allows at most one, with excess 1.
    pub fn excess_indices(&self) -> Vec<(u64, u64)> {
        self.a
            .iter()
            .filter_map(|(l, a)| {
                let w = self.w(l);
                (a > w).then(|| (l, a - w))
            })
            .collect()
    }
}

/// Extends the chain of [`sample_ewens`] to `ξ_horizon`.
///
/// The first `n` draws are the same as in [`sample_ewens`], so both functions
/// return the same cycle counts from equally seeded generators.
pub fn sample_coupled<R: Rng + ?Sized>(
    n: u64,
    theta: f64,
    rng: &mut R,
    horizon: u64,
) -> Result<CouplingSample> {
    validate(n, theta)?;
    if horizon < n {
        return Err(Error::invalid(format!("horizon {horizon} is smaller than n = {n}")));
    }
    let (prefix_lengths, last_in_prefix) = run_prefix(n, theta, rng);
    let mut a_lengths = prefix_lengths.clone();
    a_lengths.push(n + 1 - last_in_prefix);
    let a = tally(n, a_lengths);

    let mut w_lengths = prefix_lengths;
    let mut last = last_in_prefix;
    for j in (n + 1)..=horizon {
        if success(rng, j, theta) {
            let l = j - last;
            if l <= n {
                w_lengths.push(l);
            }
            last = j;
        }
    }
    let w = tally(n, w_lengths).counts;
    Ok(CouplingSample {
        a,
        w,
        horizon,
        open_spacing: horizon - last < n,
        truncation_bias_bound: theta * theta * n as f64 / horizon as f64,
        chain_seed: None,
    })
}

/// Like [`sample_coupled`], drawing from the replicate stream of `seed`.
pub fn sample_coupled_seeded(n: u64, theta: f64, seed: u64, horizon: u64) -> Result<CouplingSample> {
    let mut rng = ReplicaRng::seed_from_u64(seed);
    let mut s = sample_coupled(n, theta, &mut rng, horizon)?;
    s.chain_seed = Some(seed);
    Ok(s)
}

#[inline]
fn log_factor(n: u64, k: u64, theta: f64) -> f64 {
    // (n−k)/(θ+n−k−1) = 1 + (1−θ)/(θ+n−k−1)
    ((1.0 - theta) / (theta + (n - k) as f64 - 1.0)).ln_1p()
}

/// `Ψ_n(ℓ) = Π_{k=0}^{ℓ−1} (n−k)/(θ+n−k−1)`.
pub fn psi(n: u64, ell: u64, theta: f64) -> Result<f64> {
    validate(n, theta)?;
    if ell == 0 || ell > n {
        return Err(Error::invalid(format!("ℓ = {ell} outside 1..={n}")));
    }
    if ell <= LOG_SPACE_THRESHOLD {
        let mut p = 1.0;
        for k in 0..ell {
            p *= (n - k) as f64 / (theta + (n - k) as f64 - 1.0);
        }
        Ok(p)
    } else {
        let s: CompensatedSum = (0..ell).map(|k| log_factor(n, k, theta)).collect();
        Ok(s.value().exp())
    }
}

/// `E[a_{n,ℓ}] = θΨ_n(ℓ)/ℓ`.
pub fn expected_cycle_count(n: u64, ell: u64, theta: f64) -> Result<f64> {
    Ok(theta * psi(n, ell, theta)? / ell as f64)
}

/// `(1/n)ΣΨ_n(j)`, `ΣΨ_n(j)/j`, `ΣΨ_n(j)/j²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiSums {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

pub fn psi_identities(n: u64, theta: f64) -> Result<PsiSums> {
    validate(n, theta)?;
    let mut log_psi = CompensatedSum::new();
    let (mut s1, mut s2, mut s3) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    for j in 1..=n {
        log_psi.add(log_factor(n, j - 1, theta));
        let p = log_psi.value().exp();
        let jf = j as f64;
        s1.add(p);
        s2.add(p / jf);
        s3.add(p / (jf * jf));
    }
    Ok(PsiSums { s1: s1.value() / n as f64, s2: s2.value(), s3: s3.value() })
}

/// `Σ_{j=1}^n 1/(θ+j−1)`, the exact value of `ΣΨ_n(j)/j`.
pub fn rising_harmonic(n: u64, theta: f64) -> f64 {
    (1..=n).map(|j| 1.0 / (theta + j as f64 - 1.0)).collect::<CompensatedSum>().value()
}

/// All partitions of `n` as cycle types, in reverse lexicographic order of
/// the part lists.
pub fn partitions(n: u64) -> Vec<CycleCounts> {
    fn rec(rem: u64, max: u64, parts: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if rem == 0 {
            out.push(parts.clone());
            return;
        }
        for p in (1..=rem.min(max)).rev() {
            parts.push(p);
            rec(rem - p, p, parts, out);
            parts.pop();
        }
    }
    if n == 0 {
        return Vec::new();
    }
    let mut raw = Vec::new();
    rec(n, n, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|parts| CycleCounts::from_lengths(&parts).expect("partition of n"))
        .collect()
}

/// Cycle-type law of Ewens(θ) on permutations of a small `n`.
#[derive(Debug, Clone, Serialize)]
pub struct ExactCycleDistribution {
    pub n: u64,
    pub theta: f64,
    pub entries: Vec<(CycleCounts, f64)>,
}

impl ExactCycleDistribution {
    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|(_, p)| *p).collect::<CompensatedSum>().value()
    }

    pub fn probability_of(&self, cc: &CycleCounts) -> f64 {
        self.entries.iter().find(|(c, _)| c == cc).map_or(0.0, |(_, p)| *p)
    }

    /// `E[a_ℓ]` under this law.
    pub fn expected_count(&self, ell: u64) -> f64 {
        self.entries
            .iter()
            .map(|(c, p)| p * c.count(ell) as f64)
            .collect::<CompensatedSum>()
            .value()
    }
}

/// Ewens probability of one cycle type:
/// `n!·Π_ℓ (θ/ℓ)^{a_ℓ}/a_ℓ!` divided by `θ(θ+1)…(θ+n−1)`.
pub fn cycle_type_probability(cc: &CycleCounts, theta: f64) -> Result<f64> {
    validate(cc.n(), theta)?;
    let mut p = 1.0;
    for i in 1..=cc.n() {
        p *= i as f64 / (theta + i as f64 - 1.0);
    }
    for (l, a) in cc.iter() {
        for i in 1..=a {
            p *= theta / (l as f64 * i as f64);
        }
    }
    Ok(p)
}

pub fn exact_cycle_type_distribution(n: u64, theta: f64) -> Result<ExactCycleDistribution> {
    exact_cycle_type_distribution_capped(n, theta, DEFAULT_EXACT_CAP)
}

pub fn exact_cycle_type_distribution_capped(n: u64, theta: f64, cap: u64) -> Result<ExactCycleDistribution> {
    validate(n, theta)?;
    if n > cap {
        return Err(Error::ResourceCap(format!(
            "exact enumeration limited to n ≤ {cap}, got {n}"
        )));
    }
    let entries = partitions(n)
        .into_iter()
        .map(|cc| {
            let p = cycle_type_probability(&cc, theta)?;
            Ok((cc, p))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExactCycleDistribution { n, theta, entries })
}

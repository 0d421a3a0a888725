//! Non-resonance certification on a truncated lattice.
//!
//! The hypothesis under test is
//! `|Ω(j)| ≥ γ c₀^r / μ(j)^{νr}` for every non-resonant `j` of length `r`.
//! Tuples are unordered, so only canonical (non-decreasing) index sequences
//! are enumerated. `μ(j)` is clamped below by 1: a tuple whose third-largest
//! modulus is zero would otherwise carry an infinite bound.

use std::ops::ControlFlow;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequencies::Frequencies;
use crate::lattice::{Index, Lattice, Sign};
use crate::multi_index::MultiIndex;
use crate::potential::{derive_seed, Potential};

/// Default cap on the number of tuples visited by one scan.
pub const DEFAULT_BUDGET: u64 = 50_000_000;
/// Violations listed in a report; the count is always exact.
pub const MAX_LISTED: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NrConstants {
    pub gamma: f64,
    pub nu: f64,
    pub c0: f64,
}

impl NrConstants {
    pub fn new(gamma: f64, nu: f64, c0: f64) -> Result<NrConstants> {
        for (name, v) in [("gamma", gamma), ("nu", nu), ("c0", c0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive and finite"));
            }
        }
        Ok(NrConstants { gamma, nu, c0 })
    }

    /// `γ c₀^r / max(μ, 1)^{νr}`.
    pub fn bound(&self, r: usize, mu: f64) -> f64 {
        let r = r as f64;
        self.gamma * self.c0.powf(r) / mu.max(1.0).powf(self.nu * r)
    }
}

/// `ν = 2(m + d + 3)`.
pub fn default_nu(m: f64, d: usize) -> f64 {
    2.0 * (m + d as f64 + 3.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScanOptions {
    pub r_max: usize,
    /// Restrict to tuples with zero momentum.
    pub zero_momentum_only: bool,
    pub budget: u64,
}

impl ScanOptions {
    pub fn new(r_max: usize) -> ScanOptions {
        ScanOptions { r_max, zero_momentum_only: false, budget: DEFAULT_BUDGET }
    }

    pub fn zero_momentum(mut self, yes: bool) -> ScanOptions {
        self.zero_momentum_only = yes;
        self
    }

    pub fn budget(mut self, budget: u64) -> ScanOptions {
        self.budget = budget;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.r_max < 3 {
            return Err(Error::param("r_max", "must be at least 3"));
        }
        if self.r_max > 16 {
            return Err(Error::param("r_max", "at most 16 supported"));
        }
        Ok(())
    }
}

/// One enumerated non-resonant tuple.
#[derive(Clone, Copy, Debug)]
pub struct TupleInfo<'a> {
    pub entries: &'a [Index],
    pub divisor: f64,
    /// Third-largest modulus, unclamped.
    pub mu: f64,
    /// `N(j) = Π (1 + |j_k|)`.
    pub weight: f64,
}

/// Visits every non-resonant canonical tuple of lengths `3..=r_max`.
/// Returns `true` when the enumeration finished within budget.
pub fn scan_tuples<F>(freqs: &Frequencies<f64>, opts: &ScanOptions, mut visit: F) -> Result<bool>
where
    F: FnMut(TupleInfo<'_>) -> ControlFlow<()>,
{
    opts.validate()?;
    let lattice = freqs.lattice().clone();
    let mut scan = Scan {
        lattice: &lattice,
        omega: freqs.values(),
        all: lattice.indices().collect(),
        buf: Vec::with_capacity(opts.r_max),
        momentum: vec![0; lattice.dim()],
        remaining: opts.budget,
        exhausted: false,
        stopped: false,
    };
    for r in 3..=opts.r_max {
        if opts.zero_momentum_only {
            scan.zero_momentum(r, 0, &mut visit);
        } else {
            scan.all_tuples(r, 0, &mut visit);
        }
        if scan.exhausted || scan.stopped {
            break;
        }
    }
    Ok(!scan.exhausted)
}

struct Scan<'a> {
    lattice: &'a Lattice,
    omega: &'a [f64],
    all: Vec<Index>,
    buf: Vec<Index>,
    momentum: Vec<i64>,
    remaining: u64,
    exhausted: bool,
    stopped: bool,
}

impl Scan<'_> {
    fn halted(&self) -> bool {
        self.exhausted || self.stopped
    }

    fn all_tuples<F>(&mut self, r: usize, from: usize, visit: &mut F)
    where
        F: FnMut(TupleInfo<'_>) -> ControlFlow<()>,
    {
        if self.buf.len() == r {
            self.emit(visit);
            return;
        }
        for p in from..self.all.len() {
            if self.halted() {
                return;
            }
            self.buf.push(self.all[p]);
            self.all_tuples(r, p, visit);
            self.buf.pop();
        }
    }

    fn zero_momentum<F>(&mut self, r: usize, from: usize, visit: &mut F)
    where
        F: FnMut(TupleInfo<'_>) -> ControlFlow<()>,
    {
        let left = r - self.buf.len();
        let k = self.lattice.radius() as i64;
        if self.momentum.iter().any(|m| m.abs() > k * left as i64) {
            return;
        }
        if left == 1 {
            for sign in [Sign::Plus, Sign::Minus] {
                let a: Vec<i64> = self.momentum.iter().map(|m| -sign.value() * m).collect();
                let Some(site) = self.lattice.site_of(&a) else { continue };
                let last = Index::new(site, sign);
                if last < self.all[from] {
                    continue;
                }
                self.buf.push(last);
                self.emit(visit);
                self.buf.pop();
                if self.halted() {
                    return;
                }
            }
            return;
        }
        for p in from..self.all.len() {
            if self.halted() {
                return;
            }
            let j = self.all[p];
            self.shift(j, 1);
            self.buf.push(j);
            self.zero_momentum(r, p, visit);
            self.buf.pop();
            self.shift(j, -1);
        }
    }

    fn shift(&mut self, j: Index, times: i64) {
        let c = self.lattice.coords(j.site());
        for (m, a) in self.momentum.iter_mut().zip(c.iter()) {
            *m += times * j.delta() * a;
        }
    }

    fn emit<F>(&mut self, visit: &mut F)
    where
        F: FnMut(TupleInfo<'_>) -> ControlFlow<()>,
    {
        if self.remaining == 0 {
            self.exhausted = true;
            return;
        }
        self.remaining -= 1;
        if is_resonant_sorted(&self.buf) {
            return;
        }
        let mut moduli: smallvec::SmallVec<[f64; 16]> = smallvec::SmallVec::new();
        let mut divisor = 0.0;
        let mut weight = 1.0;
        for &j in &self.buf {
            let m = self.lattice.modulus(j.site());
            moduli.push(m);
            weight *= 1.0 + m;
            divisor += j.delta() as f64 * self.omega[j.site() as usize];
        }
        moduli.sort_by(|a, b| b.total_cmp(a));
        let info = TupleInfo { entries: &self.buf, divisor, mu: moduli[2], weight };
        if visit(info).is_break() {
            self.stopped = true;
        }
    }
}

/// Entries of one site are adjacent in a sorted slice, so resonance is a
/// single pass over runs.
fn is_resonant_sorted(j: &[Index]) -> bool {
    if j.len() % 2 == 1 {
        return false;
    }
    let mut i = 0;
    while i < j.len() {
        let site = j[i].site();
        let mut net = 0;
        while i < j.len() && j[i].site() == site {
            net += j[i].delta();
            i += 1;
        }
        if net != 0 {
            return false;
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Entries as `(a, δ)`.
    pub indices: Vec<(Vec<i64>, i64)>,
    pub divisor: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    pub r: usize,
    pub checked: u64,
    /// Smallest `|Ω(j)|` among non-resonant tuples of this length.
    #[serde(with = "crate::error::inf_as_null")]
    pub min_divisor: f64,
    /// Smallest `|Ω(j)| / bound`.
    #[serde(with = "crate::error::inf_as_null")]
    pub min_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonResReport {
    #[serde(flatten)]
    pub constants: NrConstants,
    pub r_max: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub zero_momentum_only: bool,
    pub checked_count: u64,
    pub violation_count: u64,
    /// At most [`MAX_LISTED`] entries.
    pub violations: Vec<Violation>,
    pub complete: bool,
    pub per_length: Vec<LengthSummary>,
}

impl NonResReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    /// `r,checked,min_divisor,min_ratio`.
    pub fn write_gap_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["r", "checked", "min_divisor", "min_ratio"])?;
        for s in &self.per_length {
            out.write_record([
                s.r.to_string(),
                s.checked.to_string(),
                format!("{:e}", s.min_divisor),
                format!("{:e}", s.min_ratio),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn entries_to_vec(lattice: &Lattice, j: &[Index]) -> Vec<(Vec<i64>, i64)> {
    j.iter().map(|&i| (lattice.coords(i.site()).to_vec(), i.delta())).collect()
}

pub fn check_nonres(freqs: &Frequencies<f64>, c: NrConstants, opts: &ScanOptions) -> Result<NonResReport> {
    NrConstants::new(c.gamma, c.nu, c.c0)?;
    let lattice = freqs.lattice().clone();
    let mut per_length: Vec<LengthSummary> = (3..=opts.r_max)
        .map(|r| LengthSummary { r, checked: 0, min_divisor: f64::INFINITY, min_ratio: f64::INFINITY })
        .collect();
    let mut violations = Vec::new();
    let mut violation_count = 0;
    let complete = scan_tuples(freqs, opts, |t| {
        let r = t.entries.len();
        let bound = c.bound(r, t.mu);
        let gap = t.divisor.abs();
        let s = &mut per_length[r - 3];
        s.checked += 1;
        s.min_divisor = s.min_divisor.min(gap);
        s.min_ratio = s.min_ratio.min(gap / bound);
        if gap < bound {
            violation_count += 1;
            if violations.len() < MAX_LISTED {
                violations.push(Violation { indices: entries_to_vec(&lattice, t.entries), divisor: t.divisor, bound });
            }
        }
        ControlFlow::Continue(())
    })?;
    Ok(NonResReport {
        constants: c,
        r_max: opts.r_max,
        k: lattice.radius(),
        d: lattice.dim(),
        zero_momentum_only: opts.zero_momentum_only,
        checked_count: per_length.iter().map(|s| s.checked).sum(),
        violation_count,
        violations,
        complete,
        per_length,
    })
}

/// True when some non-resonant tuple violates the bound; stops at the first.
pub fn has_violation(freqs: &Frequencies<f64>, c: NrConstants, opts: &ScanOptions) -> Result<bool> {
    let mut found = false;
    scan_tuples(freqs, opts, |t| {
        if t.divisor.abs() < c.bound(t.entries.len(), t.mu) {
            found = true;
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    Ok(found)
}

/// Constants fitted to one potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    #[serde(flatten)]
    pub constants: NrConstants,
    /// Exact supremum of admissible `c₀` for the chosen `γ, ν`.
    pub c0_star: f64,
    pub r_max: usize,
}

/// Geometric grid `10^{-i/8}`, `i = 0..=160`, largest first.
pub fn default_c0_grid() -> Vec<f64> {
    (0..=160).map(|i| 10f64.powf(-(i as f64) / 8.0)).collect()
}

/// Integer grid `ν = 1, 2, …, 64`.
pub fn default_nu_grid() -> Vec<f64> {
    (1..=64).map(f64::from).collect()
}

/// Largest `c₀` on `grid` such that the bound holds for every tuple, with
/// `γ` and `ν` fixed.
pub fn calibrate_c0(
    freqs: &Frequencies<f64>,
    gamma: f64,
    nu: f64,
    grid: &[f64],
    opts: &ScanOptions,
) -> Result<Calibration> {
    NrConstants::new(gamma, nu, 1.0)?;
    let mut c0_star = f64::INFINITY;
    let mut worst: Option<(Vec<Index>, f64)> = None;
    scan_tuples(freqs, opts, |t| {
        let r = t.entries.len() as f64;
        let allowed = (t.divisor.abs() * t.mu.max(1.0).powf(nu * r) / gamma).powf(1.0 / r);
        if allowed < c0_star {
            c0_star = allowed;
            worst = Some((t.entries.to_vec(), t.divisor));
        }
        ControlFlow::Continue(())
    })?;
    let c0 = grid.iter().copied().filter(|&c| c > 0.0 && c <= c0_star).fold(f64::NAN, f64::max);
    if c0.is_nan() {
        let (j, divisor) = worst.unwrap_or_default();
        return Err(Error::VanishingDivisor { multi_index: MultiIndex::new(j).display(freqs.lattice()), divisor });
    }
    Ok(Calibration { constants: NrConstants { gamma, nu, c0 }, c0_star, r_max: opts.r_max })
}

/// Smallest `ν` on `grid` such that the bound holds with `γ, c₀` fixed.
pub fn calibrate_nu(
    freqs: &Frequencies<f64>,
    gamma: f64,
    c0: f64,
    grid: &[f64],
    opts: &ScanOptions,
) -> Result<Option<f64>> {
    NrConstants::new(gamma, 1.0, c0)?;
    let mut nu_star: f64 = 0.0;
    scan_tuples(freqs, opts, |t| {
        let r = t.entries.len() as f64;
        let need = (gamma * c0.powf(r) / t.divisor.abs()).ln();
        if need > 0.0 {
            nu_star = if t.mu > 1.0 { nu_star.max(need / (r * t.mu.ln())) } else { f64::INFINITY };
        }
        ControlFlow::Continue(())
    })?;
    Ok(grid.iter().copied().filter(|&n| n > 0.0 && n >= nu_star).reduce(f64::min))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallDivisorGap {
    /// `|Ω(j) − b|`.
    pub gap: f64,
    /// `C^r γ / N(j)^{m+d+3}`.
    pub bound: f64,
    pub weight: f64,
}

pub fn smalldivisor_gap(freqs: &Frequencies<f64>, j: &MultiIndex, b: i64, gamma: f64, c: f64, m: f64) -> Result<SmallDivisorGap> {
    let lattice = freqs.lattice();
    let omega = freqs.divisor(j)?;
    let weight = j.weight(lattice);
    let exponent = m + lattice.dim() as f64 + 3.0;
    Ok(SmallDivisorGap {
        gap: (omega - b as f64).abs(),
        bound: c.powi(j.len() as i32) * gamma / weight.powf(exponent),
        weight,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedCheck {
    pub gap: f64,
    pub bound: f64,
    pub ok: bool,
}

/// `|Ω(j) + ε₁ω_{ℓ₁} + ε₂ω_{ℓ₂}|` against `C^r γ⁷ / N(j)^α`, `r = |j|`.
#[allow(clippy::too_many_arguments)]
pub fn check_extended(
    freqs: &Frequencies<f64>,
    j: &MultiIndex,
    l1: u32,
    eps1: i64,
    l2: u32,
    eps2: i64,
    gamma: f64,
    c: f64,
    alpha: f64,
) -> Result<ExtendedCheck> {
    let lattice = freqs.lattice();
    let mut combined = j.clone();
    for (site, eps) in [(l1, eps1), (l2, eps2)] {
        if !(-1..=1).contains(&eps) {
            return Err(Error::param("eps", "must be 0 or ±1"));
        }
        if site as usize >= lattice.n_sites() {
            return Err(Error::OffLattice { site: vec![site as i64], d: lattice.dim(), k: lattice.radius() });
        }
        if eps != 0 {
            combined = combined.with(Index::new(site, Sign::from_value(eps)?));
        }
    }
    if combined.is_resonant() {
        return Err(Error::ResonantTuple(combined.display(lattice)));
    }
    let gap = freqs.divisor(&combined)?.abs();
    let bound = c.powi(j.len() as i32) * gamma.powi(7) / j.weight(lattice).powf(alpha);
    Ok(ExtendedCheck { gap, bound, ok: gap >= bound })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuardReport {
    pub checked: u64,
    pub violations: u64,
    /// `max |Ω(j)| / N(j)²`.
    pub max_ratio: f64,
    pub complete: bool,
}

/// Scans `|Ω(j)| ≤ N(j)²` over every enumerated non-resonant tuple.
pub fn guard_scan(freqs: &Frequencies<f64>, opts: &ScanOptions) -> Result<GuardReport> {
    let mut rep = GuardReport { checked: 0, violations: 0, max_ratio: 0.0, complete: true };
    rep.complete = scan_tuples(freqs, opts, |t| {
        let ratio = t.divisor.abs() / (t.weight * t.weight);
        rep.checked += 1;
        rep.max_ratio = rep.max_ratio.max(ratio);
        if ratio > 1.0 {
            rep.violations += 1;
        }
        ControlFlow::Continue(())
    })?;
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub trials: u64,
    pub failures: u64,
    pub fail_fraction: f64,
    /// Binomial standard error `√(p(1−p)/n)`.
    pub stderr: f64,
    /// `4γ^{1/7}`.
    pub bound_extended: f64,
    /// `4γ`.
    pub bound_basic: f64,
    /// Trials whose scan ran out of budget.
    pub incomplete: u64,
}

/// Fraction of sampled potentials violating the bound. Trial `t` samples
/// with seed `derive_seed(seed, t)`.
#[allow(clippy::too_many_arguments)]
pub fn measure_estimate(
    m: f64,
    r: f64,
    lattice: Arc<Lattice>,
    c: NrConstants,
    opts: &ScanOptions,
    trials: u64,
    seed: u64,
) -> Result<MeasureEstimate> {
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    NrConstants::new(c.gamma, c.nu, c.c0)?;
    let outcomes: Vec<(bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(bool, bool)> {
            let v = Potential::sample(m, r, Arc::clone(&lattice), derive_seed(seed, t))?;
            let freqs = v.frequencies::<f64>();
            let mut failed = false;
            let complete = scan_tuples(&freqs, opts, |t| {
                if t.divisor.abs() < c.bound(t.entries.len(), t.mu) {
                    failed = true;
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            })?;
            Ok((failed, !complete && !failed))
        })
        .collect::<Result<_>>()?;
    let failures = outcomes.iter().filter(|o| o.0).count() as u64;
    let incomplete = outcomes.iter().filter(|o| o.1).count() as u64;
    let p = failures as f64 / trials as f64;
    Ok(MeasureEstimate {
        trials,
        failures,
        fail_fraction: p,
        stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        bound_extended: 4.0 * c.gamma.powf(1.0 / 7.0),
        bound_basic: 4.0 * c.gamma,
        incomplete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(d: usize, k: usize) -> Arc<Lattice> {
        Arc::new(Lattice::new(d, k).unwrap())
    }

    fn idx(l: &Lattice, a: i64, s: i64) -> Index {
        l.index(&[a], Sign::from_value(s).unwrap()).unwrap()
    }

    fn binom(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn enumerates_every_multiset_once() {
        let l = lat(1, 2);
        let f = Frequencies::free(l.clone());
        let opts = ScanOptions::new(4);
        let mut seen = std::collections::BTreeSet::new();
        let mut count = 0u64;
        scan_tuples(&f, &opts, |t| {
            count += 1;
            assert!(seen.insert(t.entries.to_vec()));
            ControlFlow::Continue(())
        })
        .unwrap();
        // all multisets minus resonant ones; resonant length-4 multisets on
        // 5 sites are {a,ā,b,b̄}: C(5,2) + 5 of them
        let total = binom(10 + 2, 3) + binom(10 + 3, 4);
        assert_eq!(count, total - (binom(5, 2) + 5));
    }

    #[test]
    fn zero_momentum_mode_matches_filter() {
        let l = lat(2, 1);
        let f = Frequencies::free(l.clone());
        let mut fast = Vec::new();
        scan_tuples(&f, &ScanOptions::new(4).zero_momentum(true), |t| {
            fast.push(t.entries.to_vec());
            ControlFlow::Continue(())
        })
        .unwrap();
        let mut slow = Vec::new();
        scan_tuples(&f, &ScanOptions::new(4), |t| {
            if MultiIndex::new(t.entries.iter().copied()).has_zero_momentum(&l) {
                slow.push(t.entries.to_vec());
            }
            ControlFlow::Continue(())
        })
        .unwrap();
        fast.sort();
        slow.sort();
        assert_eq!(fast, slow);
        assert!(!fast.is_empty());
    }

    #[test]
    fn resonant_tuples_are_skipped() {
        let l = lat(1, 2);
        let f = Frequencies::free(l.clone());
        scan_tuples(&f, &ScanOptions::new(6), |t| {
            assert!(!MultiIndex::new(t.entries.iter().copied()).is_resonant());
            ControlFlow::Continue(())
        })
        .unwrap();
    }

    #[test]
    fn sample_tuple_has_no_violation() {
        let l = lat(1, 4);
        let f = Frequencies::free(l.clone());
        let j = [idx(&l, 1, -1), idx(&l, 1, -1), idx(&l, 2, 1)];
        let c = NrConstants::new(0.01, 5.0, 0.1).unwrap();
        let mut found = false;
        scan_tuples(&f, &ScanOptions::new(3), |t| {
            if t.entries == MultiIndex::new(j).entries() {
                found = true;
                assert_eq!(t.divisor, 2.0);
                assert_eq!(t.mu, 1.0);
                let bound = c.bound(3, t.mu);
                assert!((bound - 1e-5).abs() < 1e-18);
                assert!(t.divisor.abs() >= bound);
            }
            ControlFlow::Continue(())
        })
        .unwrap();
        assert!(found);
    }

    #[test]
    fn free_frequencies_violate_and_report() {
        // V = 0 has non-resonant tuples with Ω = 0, e.g. (1,+)(1,+)(-1,-)(-1,-)
        let f = Frequencies::free(lat(1, 2));
        let c = NrConstants::new(1e-3, 1.0, 0.5).unwrap();
        let rep = check_nonres(&f, c, &ScanOptions::new(4)).unwrap();
        assert!(rep.complete);
        assert!(rep.violation_count > 0);
        assert!(rep.violations.iter().all(|v| v.divisor.abs() < v.bound));
        assert_eq!(rep.per_length.len(), 2);
        assert!(has_violation(&f, c, &ScanOptions::new(4)).unwrap());
    }

    #[test]
    fn budget_marks_report_incomplete() {
        let f = Frequencies::free(lat(1, 3));
        let c = NrConstants::new(1e-3, 1.0, 0.5).unwrap();
        let rep = check_nonres(&f, c, &ScanOptions::new(4).budget(100)).unwrap();
        assert!(!rep.complete);
        assert!(rep.checked_count <= 100);
    }

    #[test]
    fn calibration_is_self_consistent() {
        let v = Potential::sample(2.0, 1.0, lat(1, 4), 17).unwrap();
        let f = v.frequencies::<f64>();
        let opts = ScanOptions::new(4);
        let cal = calibrate_c0(&f, 1.0, default_nu(2.0, 1), &default_c0_grid(), &opts).unwrap();
        assert!(cal.constants.c0 <= cal.c0_star);
        let rep = check_nonres(&f, cal.constants, &opts).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations.first());
        let nu = calibrate_nu(&f, 1.0, cal.constants.c0, &default_nu_grid(), &opts).unwrap().unwrap();
        let c = NrConstants::new(1.0, nu, cal.constants.c0).unwrap();
        assert!(check_nonres(&f, c, &opts).unwrap().passed());
    }

    #[test]
    fn calibration_fails_on_exact_resonances() {
        let f = Frequencies::free(lat(1, 2));
        assert!(calibrate_c0(&f, 1.0, 4.0, &default_c0_grid(), &ScanOptions::new(4)).is_err());
    }

    #[test]
    fn gap_examples() {
        let l = lat(1, 3);
        let f = Frequencies::free(l.clone());
        let j = MultiIndex::new([idx(&l, 1, 1), idx(&l, 1, 1)]);
        assert_eq!(smalldivisor_gap(&f, &j, 2, 1.0, 1.0, 2.0).unwrap().gap, 0.0);
        let res = MultiIndex::new([idx(&l, 2, 1), idx(&l, 2, -1)]);
        assert_eq!(smalldivisor_gap(&f, &res, 0, 1.0, 1.0, 2.0).unwrap().gap, 0.0);
        let w = MultiIndex::new([idx(&l, 1, 1), idx(&l, -2, 1), idx(&l, 3, -1)]);
        let g = smalldivisor_gap(&f, &w, 0, 0.5, 2.0, 2.0).unwrap();
        assert_eq!(g.weight, 24.0);
        assert!((g.bound - 8.0 * 0.5 / 24f64.powi(6)).abs() < 1e-20);
    }

    #[test]
    fn extended_check_cases() {
        let l = lat(1, 8);
        let v = Potential::sample(2.0, 1.0, l.clone(), 5).unwrap();
        let f = v.frequencies::<f64>();
        let j = MultiIndex::new([idx(&l, 1, 1), idx(&l, 2, 1), idx(&l, 3, -1)]);
        let base = check_extended(&f, &j, 0, 0, 0, 0, 0.5, 1.0, 4.0).unwrap();
        assert_eq!(base.gap, f.divisor(&j).unwrap().abs());
        let s5 = l.site_of(&[5]).unwrap();
        let s7 = l.site_of(&[-7]).unwrap();
        let a = check_extended(&f, &j, s5, 1, s7, -1, 0.5, 1.0, 4.0).unwrap();
        let b = check_extended(&f, &j, s7, -1, s5, 1, 0.5, 1.0, 4.0).unwrap();
        assert_eq!(a.gap, b.gap);
        // |ℓ| ≥ 2N(j) forces the gap away from zero
        let n = j.weight(&l);
        let big = MultiIndex::new([idx(&l, 0, 1), idx(&l, 0, 1), idx(&l, 0, -1)]);
        assert_eq!(big.weight(&l), 1.0);
        let s2 = l.site_of(&[2]).unwrap();
        let e = check_extended(&f, &big, s2, -1, 0, 0, 0.5, 1.0, 4.0).unwrap();
        assert!(e.gap >= 4.0 - 1.0);
        assert!(n > 0.0);
        let resonant = MultiIndex::new([idx(&l, 1, 1), idx(&l, 2, 1), idx(&l, 2, -1)]);
        let s1 = l.site_of(&[1]).unwrap();
        assert!(check_extended(&f, &resonant, s1, -1, 0, 0, 0.5, 1.0, 4.0).is_err());
    }

    #[test]
    fn guard_holds_for_small_scale() {
        let v = Potential::sample(2.0, 0.5, lat(1, 3), 8).unwrap();
        let rep = guard_scan(&v.frequencies(), &ScanOptions::new(4)).unwrap();
        assert!(rep.complete);
        assert_eq!(rep.violations, 0);
        assert!(rep.max_ratio <= 1.0);
    }

    #[test]
    fn measure_with_vacuous_bound_is_clean() {
        let c = NrConstants::new(1e-30, 1.0, 0.5).unwrap();
        let est = measure_estimate(2.0, 1.0, lat(1, 2), c, &ScanOptions::new(3), 20, 1).unwrap();
        assert_eq!(est.failures, 0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn measure_is_deterministic() {
        let c = NrConstants::new(1.0, 2.0, 0.3).unwrap();
        let a = measure_estimate(2.0, 1.0, lat(1, 2), c, &ScanOptions::new(3), 40, 9).unwrap();
        let b = measure_estimate(2.0, 1.0, lat(1, 2), c, &ScanOptions::new(3), 40, 9).unwrap();
        assert_eq!(a, b);
    }
}

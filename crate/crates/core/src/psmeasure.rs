//! Conformal measure of the limit set, estimated on cylinder sets.
//!
//! The scaling exponent delta is located as the unique s where consecutive
//! level sums L_n(s) = sum over length-n words of |rho(w)'(x0)|^s stop
//! growing: the ratio L_n/L_{n-1} is continuous, strictly decreasing in s,
//! larger than 1 at s = 0 and (for a separated disk configuration) below 1
//! well before s = 2, so bisection applies. Cylinder masses then come from
//! the normalized derivative shadows at the working depth, with coarser
//! levels defined by summation so additivity holds exactly. An independent
//! transfer-operator route (Perron eigenvector on cylinder transitions) is
//! kept as a cross-check.

use std::fmt;
use std::io::{BufRead, BufWriter, Write as IoWrite};
use std::path::Path;
use std::str::FromStr;

use crate::freegroup::{alphabet, enumerate_words, word_count, word_index, Letter, Word};
use crate::moebius::{SchottkyGroupSpec, SpherePoint};
use crate::util::{fmt_g17, KahanSum};
use crate::{Error, Result};

pub const DEFAULT_DIMENSION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimensionMethod {
    /// Bisection on the level-sum ratio (the default estimator).
    LevelRatio,
    /// Bisection on the transfer-operator spectral radius.
    TransferEigenvalue,
}

impl fmt::Display for DimensionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DimensionMethod::LevelRatio => write!(f, "level-ratio"),
            DimensionMethod::TransferEigenvalue => write!(f, "transfer-eigenvalue"),
        }
    }
}

impl FromStr for DimensionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "level-ratio" => Ok(DimensionMethod::LevelRatio),
            "transfer-eigenvalue" => Ok(DimensionMethod::TransferEigenvalue),
            other => Err(Error::Parse {
                reason: format!("unknown dimension method {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionEstimate {
    pub delta: f64,
    pub depth: usize,
    pub residual: f64,
    pub method: DimensionMethod,
}

/// Per-level cylinder data in canonical index order: log-derivatives
/// ln |rho(w)'(x0)| and centers rho(w)(x0).
///
/// Built by prepending letters: for w = l.u the chain rule gives
/// logd(w) = ln |rho(l)'(c_u)| + logd(u) and c_w = rho(l)(c_u), so every
/// word needs one single-generator evaluation at a stored point. Deep matrix
/// products never appear, which keeps the arithmetic well conditioned even
/// when word maps have operator norms far beyond 1/sqrt(eps). For each first
/// letter the admissible tails are the previous level minus one contiguous
/// first-letter block, so the output order is exactly the canonical one.
struct LevelData {
    logd: Vec<Vec<f64>>,
    centers: Vec<Vec<SpherePoint>>,
}

fn level_data(spec: &SchottkyGroupSpec, n: usize) -> Result<LevelData> {
    let g = spec.rank();
    let count = word_count(g, n);
    if count > crate::freegroup::DEFAULT_WORD_CAP {
        return Err(Error::WordCountExceeded {
            length: n,
            count,
            cap: crate::freegroup::DEFAULT_WORD_CAP,
        });
    }
    let letters = alphabet(g);
    let maps: Vec<_> = letters.iter().map(|&l| spec.letter_map(l)).collect();
    let mut logd: Vec<Vec<f64>> = vec![vec![0.0]];
    let mut centers: Vec<Vec<SpherePoint>> = vec![vec![spec.basepoint()]];
    for m in 1..=n {
        let prev_logd = &logd[m - 1];
        let prev_centers = &centers[m - 1];
        let size = word_count(g, m) as usize;
        let mut cur_logd = Vec::with_capacity(size);
        let mut cur_centers = Vec::with_capacity(size);
        // tails with first letter l^{-1} form one contiguous block
        let block = prev_logd.len() / (2 * g);
        for (r, map) in maps.iter().enumerate() {
            let skip = if m == 1 {
                usize::MAX..usize::MAX
            } else {
                let inv = inverse_rank(r, g);
                inv * block..(inv + 1) * block
            };
            for j in 0..prev_logd.len() {
                if skip.contains(&j) {
                    continue;
                }
                let c = prev_centers[j];
                cur_logd.push(map.spherical_derivative(c).ln() + prev_logd[j]);
                cur_centers.push(map.apply(c));
            }
        }
        logd.push(cur_logd);
        centers.push(cur_centers);
    }
    Ok(LevelData { logd, centers })
}

/// ln |rho(w)'(x0)| for every length-n word, canonical order.
pub fn level_log_derivatives(spec: &SchottkyGroupSpec, n: usize) -> Result<Vec<f64>> {
    Ok(level_data(spec, n)?.logd.pop().expect("level n present"))
}

/// Centers rho(w)(x0) for every length-n word, canonical order.
pub fn level_centers(spec: &SchottkyGroupSpec, n: usize) -> Result<Vec<SpherePoint>> {
    Ok(level_data(spec, n)?.centers.pop().expect("level n present"))
}

fn sum_exp(logs: &[f64], s: f64) -> f64 {
    let mut k = KahanSum::new();
    for &l in logs {
        k.add((s * l).exp());
    }
    k.value()
}

/// L_n(s): the length-n derivative sum at exponent s.
pub fn level_sum(spec: &SchottkyGroupSpec, n: usize, s: f64) -> Result<f64> {
    Ok(sum_exp(&level_log_derivatives(spec, n)?, s))
}

/// Bisection for the exponent where a continuous, strictly decreasing ratio
/// crosses 1 on [0, 2].
fn bisect_ratio(mut ratio: impl FnMut(f64) -> f64, tol: f64) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (0.0f64, 2.0f64);
    let (rl, rh) = (ratio(lo), ratio(hi));
    if !(rl > 1.0 && rh < 1.0) {
        return Err(Error::NoBracket {
            lo,
            hi,
            ratio_lo: rl,
            ratio_hi: rh,
        });
    }
    let mut mid = 0.5 * (lo + hi);
    let mut res = f64::INFINITY;
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let r = ratio(mid);
        res = (r - 1.0).abs();
        if res < tol || hi - lo < 1e-15 {
            break;
        }
        if r > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((mid, res))
}

pub fn hausdorff_dimension(
    spec: &SchottkyGroupSpec,
    depth: usize,
    tol: f64,
) -> Result<DimensionEstimate> {
    hausdorff_dimension_with(spec, depth, tol, DimensionMethod::LevelRatio)
}

/// Dimension estimate at the given depth. `LevelRatio` bisects on
/// L_depth / L_{depth-1}; `TransferEigenvalue` bisects on the spectral radius
/// of the cylinder-transition operator at state length depth-1. Depth must be
/// at least 2.
pub fn hausdorff_dimension_with(
    spec: &SchottkyGroupSpec,
    depth: usize,
    tol: f64,
    method: DimensionMethod,
) -> Result<DimensionEstimate> {
    if depth < 2 {
        return Err(Error::InvalidSpec {
            reason: "dimension estimate needs depth >= 2".into(),
        });
    }
    let (delta, residual) = match method {
        DimensionMethod::LevelRatio => {
            let data = level_data(spec, depth)?;
            let shallow = &data.logd[depth - 1];
            let deep = &data.logd[depth];
            bisect_ratio(|s| sum_exp(deep, s) / sum_exp(shallow, s), tol)?
        }
        DimensionMethod::TransferEigenvalue => {
            let op = TransferOperator::new(spec, depth - 1)?;
            bisect_ratio(|s| op.spectral_radius(s), tol)?
        }
    };
    Ok(DimensionEstimate {
        delta,
        depth,
        residual,
        method,
    })
}

// ---------------------------------------------------------------------------
// transfer operator
// ---------------------------------------------------------------------------

/// Weighted transition operator on length-k cylinders. State w = w1 u feeds
/// from the states u.l' (all one-letter right extensions of its shifted
/// tail), with weight |rho(w1)'(center of the feeding cylinder)|^s. At the
/// scaling exponent the operator has Perron eigenvalue 1 and its eigenvector
/// is a refined mass vector.
pub struct TransferOperator {
    level: usize,
    /// letter_logs[r][j] = ln |rho(letter r)'(c_j)| over level-k states j.
    letter_logs: Vec<Vec<f64>>,
    /// For each state, the alphabet rank of its first letter and the index
    /// block of its feeding states (contiguous by construction).
    rows: Vec<(usize, std::ops::Range<usize>)>,
    states: usize,
}

impl TransferOperator {
    pub fn new(spec: &SchottkyGroupSpec, level: usize) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidSpec {
                reason: "transfer operator needs state length >= 1".into(),
            });
        }
        let g = spec.rank();
        let words = enumerate_words(g, level)?;
        let centers = level_centers(spec, level)?;
        let b = 2 * g - 1;
        let letters = alphabet(g);
        let mut letter_logs = vec![Vec::with_capacity(words.len()); 2 * g];
        for &center in &centers {
            for (r, &l) in letters.iter().enumerate() {
                letter_logs[r].push(spec.letter_map(l).spherical_derivative(center).ln());
            }
        }
        let mut rows = Vec::with_capacity(words.len());
        for w in &words {
            let first = w.letters()[0].rank_in(g);
            let tail = Word::new(w.letters()[1..].to_vec()).expect("tail of reduced word");
            // extensions of the tail occupy a contiguous block of length 2g-1
            let start = if level == 1 {
                // tail empty: feeding states are the single letters v with
                // v != w1^{-1}; handled separately below via a full scan
                0
            } else {
                word_index(&tail, g) * b
            };
            rows.push((first, start..start + b));
        }
        Ok(Self {
            level,
            letter_logs,
            rows,
            states: words.len(),
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    fn apply(&self, s: f64, v: &[f64], out: &mut [f64]) {
        let g = self.letter_logs.len() / 2;
        for (i, (first, block)) in self.rows.iter().enumerate() {
            let logs = &self.letter_logs[*first];
            let mut acc = 0.0;
            if self.level == 1 {
                // feeding states: every single letter except the inverse of
                // this state's letter
                let skip = inverse_rank(*first, g);
                for j in 0..self.states {
                    if j == skip {
                        continue;
                    }
                    acc += (s * logs[j]).exp() * v[j];
                }
            } else {
                for j in block.clone() {
                    acc += (s * logs[j]).exp() * v[j];
                }
            }
            out[i] = acc;
        }
    }

    /// Perron eigenvalue by power iteration on the positive cone.
    pub fn spectral_radius(&self, s: f64) -> f64 {
        let mut v = vec![1.0; self.states];
        let mut w = vec![0.0; self.states];
        let mut lambda = 1.0f64;
        for _ in 0..20_000 {
            self.apply(s, &v, &mut w);
            let total: f64 = w.iter().sum();
            let prev: f64 = v.iter().sum();
            let next = total / prev;
            let norm = w.iter().cloned().fold(0.0f64, f64::max);
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / norm;
            }
            if (next - lambda).abs() <= 1e-14 * next.abs() {
                return next;
            }
            lambda = next;
        }
        lambda
    }

    /// Normalized Perron eigenvector at exponent `delta`: refined masses of
    /// the level-k cylinders.
    pub fn perron_masses(&self, delta: f64) -> Vec<f64> {
        let mut v = vec![1.0 / self.states as f64; self.states];
        let mut w = vec![0.0; self.states];
        for _ in 0..20_000 {
            self.apply(delta, &v, &mut w);
            let mut k = KahanSum::new();
            for &x in &w {
                k.add(x);
            }
            let total = k.value();
            let mut moved = 0.0f64;
            for (vi, wi) in v.iter_mut().zip(&w) {
                let next = wi / total;
                moved = moved.max((next - *vi).abs());
                *vi = next;
            }
            if moved <= 1e-15 {
                break;
            }
        }
        v
    }
}

fn inverse_rank(rank: usize, g: usize) -> usize {
    if rank < g {
        rank + g
    } else {
        rank - g
    }
}

// ---------------------------------------------------------------------------
// cylinder measure
// ---------------------------------------------------------------------------

/// Cylinder masses down to a working depth. Level N holds the normalized
/// estimates; every shorter word's mass is the plain sum of its children, so
/// additivity is exact by construction and mass lookups are O(1) through the
/// canonical index.
#[derive(Debug, Clone)]
pub struct CylinderMeasure {
    rank: usize,
    depth: usize,
    /// absent for tables reconstructed from recovered data
    estimate: Option<DimensionEstimate>,
    /// levels[k][i] = mass of the i-th length-k word; levels[0] = [total].
    levels: Vec<Vec<f64>>,
}

impl CylinderMeasure {
    /// Shadow estimator: mass of a depth-N word proportional to
    /// |rho(w)'(x0)|^delta.
    pub fn shadow(
        spec: &SchottkyGroupSpec,
        depth: usize,
        estimate: DimensionEstimate,
    ) -> Result<Self> {
        let logs = level_log_derivatives(spec, depth)?;
        let mut raw = Vec::with_capacity(logs.len());
        for &l in &logs {
            raw.push((estimate.delta * l).exp());
        }
        Self::from_top_masses(spec.rank(), depth, Some(estimate), raw, true)
    }

    /// Transfer-operator estimator: masses at depth = state length from the
    /// Perron eigenvector.
    pub fn transfer(
        spec: &SchottkyGroupSpec,
        depth: usize,
        estimate: DimensionEstimate,
    ) -> Result<Self> {
        let op = TransferOperator::new(spec, depth)?;
        let masses = op.perron_masses(estimate.delta);
        Self::from_top_masses(spec.rank(), depth, Some(estimate), masses, true)
    }

    /// Builds the level tables from given top-level masses. `normalize`
    /// rescales to total mass one; recovery paths pass `false` to keep the
    /// caller's values bit-exact.
    pub fn from_top_masses(
        rank: usize,
        depth: usize,
        estimate: Option<DimensionEstimate>,
        mut top: Vec<f64>,
        normalize: bool,
    ) -> Result<Self> {
        let expected = word_count(rank, depth);
        if top.len() as u128 != expected {
            return Err(Error::InvalidSpec {
                reason: format!(
                    "expected {expected} masses at depth {depth}, got {}",
                    top.len()
                ),
            });
        }
        if normalize {
            let mut k = KahanSum::new();
            for &m in &top {
                k.add(m);
            }
            let total = k.value();
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::DegenerateMass {
                    word: "<level total>".into(),
                });
            }
            for m in &mut top {
                *m /= total;
            }
        }
        let mut levels = vec![Vec::new(); depth + 1];
        levels[depth] = top;
        for k in (0..depth).rev() {
            let child_width = if k == 0 { 2 * rank } else { 2 * rank - 1 };
            let children = &levels[k + 1];
            let mut parents = Vec::with_capacity(children.len() / child_width);
            for chunk in children.chunks(child_width) {
                parents.push(chunk.iter().sum());
            }
            levels[k] = parents;
        }
        for (k, level) in levels.iter().enumerate() {
            for (i, &m) in level.iter().enumerate() {
                if !(m > 0.0) || !m.is_finite() {
                    return Err(Error::DegenerateMass {
                        word: format!("<index {i} at length {k}>"),
                    });
                }
            }
        }
        Ok(Self {
            rank,
            depth,
            estimate,
            levels,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn estimate(&self) -> Option<DimensionEstimate> {
        self.estimate
    }

    pub fn delta(&self) -> Option<f64> {
        self.estimate.map(|e| e.delta)
    }

    /// All masses of length-k words in canonical order.
    pub fn level_masses(&self, k: usize) -> Result<&[f64]> {
        self.levels.get(k).map(Vec::as_slice).ok_or(Error::MeasureDepth {
            needed: k,
            available: self.depth,
        })
    }

    pub fn total(&self) -> f64 {
        self.levels[0][0]
    }

    pub fn mass(&self, w: &Word) -> Result<f64> {
        if w.len() > self.depth {
            return Err(Error::MeasureDepth {
                needed: w.len(),
                available: self.depth,
            });
        }
        Ok(self.levels[w.len()][word_index(w, self.rank)])
    }
}

/// Worst relative defect of the scaling law
/// mass(l.w) ~ |rho(l)'(c_w)|^delta * mass(w) over all length-n words `w`
/// that `l` extends reducibly. Needs masses down to length n+1.
pub fn scaling_check(
    spec: &SchottkyGroupSpec,
    cm: &CylinderMeasure,
    l: Letter,
    n: usize,
) -> Result<f64> {
    if n + 1 > cm.depth() {
        return Err(Error::MeasureDepth {
            needed: n + 1,
            available: cm.depth(),
        });
    }
    let delta = cm.delta().ok_or_else(|| Error::InvalidSpec {
        reason: "scaling check needs a measure with a dimension estimate".into(),
    })?;
    let map = spec.letter_map(l);
    let centers = level_centers(spec, n)?;
    let mut worst = 0.0f64;
    for (w, &center) in enumerate_words(spec.rank(), n)?.iter().zip(&centers) {
        if w.first() == Some(l.inverse()) {
            continue;
        }
        let lw = Word::new(
            std::iter::once(l)
                .chain(w.letters().iter().copied())
                .collect(),
        )
        .expect("l.w stays reduced");
        let left = cm.mass(&lw)?;
        let right = map.spherical_derivative(center).powf(delta) * cm.mass(w)?;
        worst = worst.max((left - right).abs() / left);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// cache file format
// ---------------------------------------------------------------------------

const MEASURE_MAGIC: &str = "# schottky-zeta measure v1";

/// Writes the depth-N mass table with a header binding it to the spec hash,
/// depth, method and exponent. 17-digit decimals round-trip bit-exactly.
pub fn write_measure(path: &Path, spec_hash: &str, cm: &CylinderMeasure) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    let est = cm.estimate().ok_or_else(|| Error::InvalidSpec {
        reason: "cannot cache a measure without a dimension estimate".into(),
    })?;
    writeln!(out, "{MEASURE_MAGIC}")?;
    writeln!(out, "# tool = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "# spec = {spec_hash}")?;
    writeln!(out, "# rank = {}", cm.rank())?;
    writeln!(out, "# depth = {}", cm.depth())?;
    writeln!(out, "# method = {}", est.method)?;
    writeln!(out, "# delta = {}", fmt_g17(est.delta))?;
    writeln!(out, "# residual = {}", fmt_g17(est.residual))?;
    writeln!(out, "word,mass")?;
    let words = enumerate_words(cm.rank(), cm.depth())?;
    let top = cm.level_masses(cm.depth())?;
    for (w, &m) in words.iter().zip(top) {
        writeln!(out, "{w},{}", fmt_g17(m))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a mass table back, verifying the header against the expected spec
/// hash (when given) and rebuilding the coarser levels by summation.
pub fn read_measure(path: &Path, expect_hash: Option<&str>) -> Result<CylinderMeasure> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let magic = lines.next().transpose()?.unwrap_or_default();
    if magic != MEASURE_MAGIC {
        return Err(Error::CacheMismatch {
            reason: format!("bad magic line {magic:?}"),
        });
    }
    let mut rank = None;
    let mut depth = None;
    let mut method = None;
    let mut delta = None;
    let mut residual = None;
    let mut hash = None;
    let mut header_done = false;
    let mut masses: Vec<f64> = Vec::new();
    let mut row = 0usize;
    let mut expected_words: Vec<Word> = Vec::new();
    for line in lines {
        let line = line?;
        if !header_done {
            if let Some(rest) = line.strip_prefix("# ") {
                let mut parts = rest.splitn(2, " = ");
                let key = parts.next().unwrap_or_default();
                let value = parts.next().unwrap_or_default();
                match key {
                    "spec" => hash = Some(value.to_string()),
                    "rank" => rank = value.parse::<usize>().ok(),
                    "depth" => depth = value.parse::<usize>().ok(),
                    "method" => method = value.parse::<DimensionMethod>().ok(),
                    "delta" => delta = value.parse::<f64>().ok(),
                    "residual" => residual = value.parse::<f64>().ok(),
                    _ => {}
                }
                continue;
            }
            if line == "word,mass" {
                header_done = true;
                let (r, d) = match (rank, depth) {
                    (Some(r), Some(d)) => (r, d),
                    _ => {
                        return Err(Error::CacheMismatch {
                            reason: "header missing rank or depth".into(),
                        })
                    }
                };
                if let (Some(want), Some(got)) = (expect_hash, hash.as_deref()) {
                    if want != got {
                        return Err(Error::CacheMismatch {
                            reason: "spec hash differs".into(),
                        });
                    }
                }
                expected_words = enumerate_words(r, d)?;
                masses.reserve(expected_words.len());
                continue;
            }
            return Err(Error::CacheMismatch {
                reason: format!("unexpected line before column header: {line:?}"),
            });
        }
        let (word_str, mass_str) = line.split_once(',').ok_or_else(|| Error::CacheMismatch {
            reason: format!("bad row {line:?}"),
        })?;
        let word: Word = word_str.parse()?;
        if row >= expected_words.len() || word != expected_words[row] {
            return Err(Error::CacheMismatch {
                reason: format!("row {row} out of canonical order at {word_str}"),
            });
        }
        let mass: f64 = mass_str.parse().map_err(|_| Error::CacheMismatch {
            reason: format!("bad mass {mass_str:?}"),
        })?;
        masses.push(mass);
        row += 1;
    }
    if row != expected_words.len() {
        return Err(Error::CacheMismatch {
            reason: format!("expected {} rows, got {row}", expected_words.len()),
        });
    }
    let estimate = DimensionEstimate {
        delta: delta.ok_or_else(|| Error::CacheMismatch {
            reason: "header missing delta".into(),
        })?,
        depth: depth.unwrap(),
        residual: residual.unwrap_or(f64::NAN),
        method: method.ok_or_else(|| Error::CacheMismatch {
            reason: "header missing method".into(),
        })?,
    };
    CylinderMeasure::from_top_masses(rank.unwrap(), depth.unwrap(), Some(estimate), masses, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn reference_measure(depth: usize) -> (SchottkyGroupSpec, CylinderMeasure) {
        let spec = fixtures::genus2_reference();
        let est = hausdorff_dimension(&spec, depth.max(3), 1e-10).unwrap();
        let cm = CylinderMeasure::shadow(&spec, depth, est).unwrap();
        (spec, cm)
    }

    #[test]
    fn level_sums_match_direct_enumeration() {
        let spec = fixtures::genus2_reference();
        // independent oracle: evaluate each full word matrix from scratch
        // (different arithmetic from the chain-rule recurrence)
        for n in [1usize, 2, 3] {
            let direct: f64 = enumerate_words(2, n)
                .unwrap()
                .iter()
                .map(|w| {
                    spec.evaluate_word(w)
                        .spherical_derivative(spec.basepoint())
                        .powf(0.31)
                })
                .sum();
            let fast = level_sum(&spec, n, 0.31).unwrap();
            assert!(
                (fast - direct).abs() < 1e-10 * direct.abs(),
                "n = {n}: {fast} vs {direct}"
            );
        }
    }

    #[test]
    fn level_sum_is_strictly_decreasing_in_s() {
        let spec = fixtures::genus2_reference();
        for n in [1usize, 2] {
            let values: Vec<f64> = [0.0, 0.5, 1.0, 1.5]
                .iter()
                .map(|&s| level_sum(&spec, n, s).unwrap())
                .collect();
            assert!(values.windows(2).all(|p| p[1] < p[0]), "{values:?}");
        }
    }

    #[test]
    fn dimension_bracket_straddles_one() {
        let spec = fixtures::genus2_reference();
        let est = hausdorff_dimension(&spec, 5, 1e-8).unwrap();
        assert!(est.delta > 0.0 && est.delta < 1.0, "delta = {}", est.delta);
        assert!(est.residual < 1e-8);
        // oracle: the ratio really crosses 1 near the reported delta
        let shallow = level_log_derivatives(&spec, 4).unwrap();
        let deep = level_log_derivatives(&spec, 5).unwrap();
        let ratio = |s: f64| sum_exp(&deep, s) / sum_exp(&shallow, s);
        assert!(ratio(est.delta - 0.05) > 1.0);
        assert!(ratio(est.delta + 0.05) < 1.0);
    }

    #[test]
    fn wider_disks_give_smaller_dimension() {
        let near = hausdorff_dimension(&fixtures::genus2_reference(), 4, 1e-8).unwrap();
        let wide = hausdorff_dimension(&fixtures::genus2_wide(), 4, 1e-8).unwrap();
        assert!(
            wide.delta < near.delta,
            "wide {} vs near {}",
            wide.delta,
            near.delta
        );
    }

    #[test]
    fn transfer_method_agrees_with_level_ratio() {
        let spec = fixtures::genus2_reference();
        let lr = hausdorff_dimension(&spec, 5, 1e-10).unwrap();
        let te =
            hausdorff_dimension_with(&spec, 5, 1e-10, DimensionMethod::TransferEigenvalue)
                .unwrap();
        assert!(
            (lr.delta - te.delta).abs() < 2e-2,
            "level-ratio {} vs transfer {}",
            lr.delta,
            te.delta
        );
    }

    #[test]
    fn masses_are_positive_normalized_and_additive() {
        let (_, cm) = reference_measure(4);
        assert!((cm.total() - 1.0).abs() < 1e-12);
        for k in 0..=4 {
            assert!(cm.level_masses(k).unwrap().iter().all(|&m| m > 0.0));
        }
        // additivity is summation by construction: recompute and compare
        for k in 0..4 {
            let parents = cm.level_masses(k).unwrap();
            let children = cm.level_masses(k + 1).unwrap();
            let width = if k == 0 { 4 } else { 3 };
            for (i, chunk) in children.chunks(width).enumerate() {
                let s: f64 = chunk.iter().sum();
                assert_eq!(s, parents[i], "parent {i} at length {k}");
            }
        }
    }

    #[test]
    fn mirror_symmetry_of_the_reference_group() {
        // z -> -z conjugates each generator to its inverse and fixes the
        // basepoint, so a word and its letterwise inverse weigh the same
        let (_, cm) = reference_measure(3);
        for (w, v) in [("a1", "a1'"), ("a2", "a2'"), ("a1.a2", "a1'.a2'")] {
            let mw = cm.mass(&w.parse().unwrap()).unwrap();
            let mv = cm.mass(&v.parse().unwrap()).unwrap();
            assert!((mw - mv).abs() < 1e-12 * mw, "{w} vs {v}");
        }
    }

    fn transfer_measure(depth: usize) -> (SchottkyGroupSpec, CylinderMeasure) {
        let spec = fixtures::genus2_reference();
        let est = hausdorff_dimension_with(
            &spec,
            depth,
            1e-12,
            DimensionMethod::TransferEigenvalue,
        )
        .unwrap();
        let cm = CylinderMeasure::transfer(&spec, depth, est).unwrap();
        (spec, cm)
    }

    #[test]
    fn scaling_defect_shrinks_with_level() {
        // the transfer-eigenvector measure is the fixed point of the
        // refinement dynamics, so its conformality defect is governed purely
        // by how much the derivative varies across a cylinder: geometric
        // decay in the level
        let (spec, cm) = transfer_measure(6);
        let l = Letter::new(1, false).unwrap();
        let d2 = scaling_check(&spec, &cm, l, 2).unwrap();
        let d3 = scaling_check(&spec, &cm, l, 3).unwrap();
        let d4 = scaling_check(&spec, &cm, l, 4).unwrap();
        let d5 = scaling_check(&spec, &cm, l, 5).unwrap();
        assert!(d3 < d2 && d4 < d3 && d5 < d4, "{d2} {d3} {d4} {d5}");
        assert!(d5 < 1e-6, "{d5}");
    }

    #[test]
    fn shadow_masses_satisfy_a_loose_scaling_law() {
        // the plain shadow estimator carries a bounded density bias, so its
        // defect does not vanish with the level; it must still be small at
        // interior levels and explode under a wrong exponent
        let (spec, cm) = reference_measure(5);
        let l = Letter::new(1, false).unwrap();
        let d2 = scaling_check(&spec, &cm, l, 2).unwrap();
        assert!(d2 < 0.1, "{d2}");
    }

    #[test]
    fn wrong_exponent_blows_up_the_scaling_defect() {
        let (spec, cm) = transfer_measure(5);
        let mut bad_est = cm.estimate().unwrap();
        bad_est.delta += 0.2;
        let bad = CylinderMeasure::transfer(&spec, 5, bad_est).unwrap();
        let l = Letter::new(1, false).unwrap();
        let good_defect = scaling_check(&spec, &cm, l, 3).unwrap();
        let bad_defect = scaling_check(&spec, &bad, l, 3).unwrap();
        assert!(
            bad_defect > 10.0 * good_defect,
            "good {good_defect} vs bad {bad_defect}"
        );
    }

    #[test]
    fn perron_masses_track_the_shadow_masses() {
        let spec = fixtures::genus2_reference();
        let est = hausdorff_dimension(&spec, 6, 1e-10).unwrap();
        let shadow = CylinderMeasure::shadow(&spec, 6, est).unwrap();
        let transfer = CylinderMeasure::transfer(&spec, 6, est).unwrap();
        for k in 1..=4usize {
            let a = shadow.level_masses(k).unwrap();
            let b = transfer.level_masses(k).unwrap();
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                let rel = (x - y).abs() / x.max(*y);
                assert!(rel < 0.05, "word {i} at length {k}: shadow {x} vs perron {y}");
            }
        }
    }

    #[test]
    fn measure_cache_round_trips_byte_identically() {
        let (spec, cm) = reference_measure(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.measure.csv");
        let hash = spec.content_hash();
        write_measure(&path, &hash, &cm).unwrap();
        let first = std::fs::read(&path).unwrap();

        let loaded = read_measure(&path, Some(&hash)).unwrap();
        assert_eq!(loaded.depth(), cm.depth());
        assert_eq!(
            loaded.level_masses(3).unwrap(),
            cm.level_masses(3).unwrap()
        );

        let path2 = dir.path().join("again.measure.csv");
        write_measure(&path2, &hash, &loaded).unwrap();
        let second = std::fs::read(&path2).unwrap();
        assert_eq!(first, second);

        let err = read_measure(&path, Some("deadbeef")).unwrap_err();
        assert!(matches!(err, Error::CacheMismatch { .. }));
    }
}

//! Hilbert-space side of the construction: step functions on the limit set,
//! the inner product induced by the cylinder measure, and the orthonormal
//! family obtained by Gram–Schmidt over the nested index sets.
//!
//! A vector at level n is a function that is constant on each length-n
//! cylinder; refining to a deeper level copies every coefficient to all
//! extensions, so the canonical index layout makes refinement a block
//! repetition and the inner product a single weighted dot product.

use std::fmt;
use std::str::FromStr;

use crate::freegroup::{max_word, word_count, word_index, IndexSetFamily, Word};
use crate::psmeasure::CylinderMeasure;
use crate::util::KahanSum;
use crate::{Error, Result};

pub const NORM_FLOOR: f64 = 1e-12;

/// A multiplication operator on the limit-set algebra: either the identity
/// or the characteristic function of a cylinder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Symbol {
    Unit,
    Cylinder(Word),
}

impl Symbol {
    /// Length of the defining word (0 for the identity).
    pub fn level(&self) -> usize {
        match self {
            Symbol::Unit => 0,
            Symbol::Cylinder(w) => w.len(),
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Unit => write!(f, "1"),
            Symbol::Cylinder(w) => write!(f, "chi:{w}"),
        }
    }
}

impl FromStr for Symbol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "1" {
            return Ok(Symbol::Unit);
        }
        let Some(word) = s.strip_prefix("chi:") else {
            return Err(Error::Parse {
                reason: format!("symbol must be \"1\" or \"chi:<word>\", got {s:?}"),
            });
        };
        let w: Word = word.parse()?;
        if w.is_empty() {
            // the empty cylinder is the whole limit set
            Ok(Symbol::Unit)
        } else {
            Ok(Symbol::Cylinder(w))
        }
    }
}

/// Step function constant on length-`level` cylinders, stored densely in
/// canonical word order.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertVector {
    rank: usize,
    level: usize,
    coeffs: Vec<f64>,
}

impl HilbertVector {
    pub fn new(rank: usize, level: usize, coeffs: Vec<f64>) -> Result<Self> {
        let expected = word_count(rank, level);
        if coeffs.len() as u128 != expected {
            return Err(Error::InvalidSpec {
                reason: format!(
                    "level-{level} vector needs {expected} coefficients, got {}",
                    coeffs.len()
                ),
            });
        }
        Ok(Self {
            rank,
            level,
            coeffs,
        })
    }

    /// The constant-one function (characteristic function of the whole
    /// limit set) at level 0.
    pub fn constant_one(rank: usize) -> Self {
        Self {
            rank,
            level: 0,
            coeffs: vec![1.0],
        }
    }

    /// Characteristic function of the cylinder of `w`, at level |w|.
    pub fn characteristic(rank: usize, w: &Word) -> Self {
        let mut coeffs = vec![0.0; word_count(rank, w.len()) as usize];
        coeffs[word_index(w, rank)] = 1.0;
        Self {
            rank,
            level: w.len(),
            coeffs,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Value on the cylinder of `w` (|w| must equal the level).
    pub fn value_at(&self, w: &Word) -> Result<f64> {
        if w.len() != self.level {
            return Err(Error::InvalidSpec {
                reason: format!(
                    "value_at wants a length-{} word, got length {}",
                    self.level,
                    w.len()
                ),
            });
        }
        Ok(self.coeffs[word_index(w, self.rank)])
    }

    /// The same function expressed on length-`level` cylinders (exact: each
    /// coefficient is copied to all extensions).
    pub fn refined_to(&self, level: usize) -> Result<HilbertVector> {
        if level < self.level {
            return Err(Error::InvalidSpec {
                reason: format!("cannot coarsen a level-{} vector to {level}", self.level),
            });
        }
        let mut coeffs = self.coeffs.clone();
        let mut cur = self.level;
        while cur < level {
            let width = if cur == 0 {
                2 * self.rank
            } else {
                2 * self.rank - 1
            };
            let mut next = Vec::with_capacity(coeffs.len() * width);
            for &c in &coeffs {
                next.extend(std::iter::repeat(c).take(width));
            }
            coeffs = next;
            cur += 1;
        }
        Ok(HilbertVector {
            rank: self.rank,
            level,
            coeffs,
        })
    }

    /// Multiplies pointwise by the symbol. A cylinder symbol zeroes every
    /// coefficient outside the extension block of its word; the identity
    /// returns the vector unchanged.
    pub fn apply_symbol(&self, a: &Symbol) -> Result<HilbertVector> {
        let eta = match a {
            Symbol::Unit => return Ok(self.clone()),
            Symbol::Cylinder(eta) if eta.is_empty() => return Ok(self.clone()),
            Symbol::Cylinder(eta) => eta,
        };
        let level = self.level.max(eta.len());
        let mut out = self.refined_to(level)?;
        let tail = (2 * self.rank - 1).pow((level - eta.len()) as u32);
        let start = word_index(eta, self.rank) * tail;
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            if !(start..start + tail).contains(&i) {
                *c = 0.0;
            }
        }
        Ok(out)
    }
}

/// Weighted inner product: refine both to the common level and sum
/// f(v) h(v) mu(->v) over the disjoint level cylinders.
pub fn inner_product(
    f: &HilbertVector,
    h: &HilbertVector,
    cm: &CylinderMeasure,
) -> Result<f64> {
    if f.rank != h.rank {
        return Err(Error::InvalidSpec {
            reason: format!("rank mismatch: {} vs {}", f.rank, h.rank),
        });
    }
    let level = f.level.max(h.level);
    let masses = cm.level_masses(level)?;
    let fr = f.refined_to(level)?;
    let hr = h.refined_to(level)?;
    Ok(dot(&fr.coeffs, &hr.coeffs, masses))
}

fn dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let mut k = KahanSum::new();
    for ((x, y), m) in a.iter().zip(b).zip(w) {
        k.add(x * y * m);
    }
    k.value()
}

/// Inner product of two characteristic functions: the measure of whichever
/// word refines the other, zero for disjoint cylinders.
pub fn gram_entry(cm: &CylinderMeasure, w: &Word, v: &Word) -> Result<f64> {
    match max_word(w, v) {
        Some(m) => cm.mass(&m),
        None => Ok(0.0),
    }
}

/// The orthonormal family built from the nested index sets: one vector per
/// index word, stored at its natural level, shell by shell.
pub struct OrthonormalBasis {
    family: IndexSetFamily,
    /// vectors[n][i] corresponds to family.level(n)[i]
    vectors: Vec<Vec<HilbertVector>>,
}

impl OrthonormalBasis {
    pub fn rank(&self) -> usize {
        self.family.rank()
    }

    pub fn depth(&self) -> usize {
        self.family.depth()
    }

    pub fn family(&self) -> &IndexSetFamily {
        &self.family
    }

    /// Vectors of the n-th shell, parallel to `family().level(n)`.
    pub fn shell(&self, n: usize) -> &[HilbertVector] {
        &self.vectors[n]
    }
}

/// Modified Gram–Schmidt over the index family in canonical order. The
/// first vector is the constant function (unit norm because the total mass
/// is one); the rest are cylinder characteristics made orthogonal to
/// everything before them. Two projection passes per vector keep the loss
/// of orthogonality at the round-off level.
pub fn orthonormalize(
    family: &IndexSetFamily,
    cm: &CylinderMeasure,
) -> Result<OrthonormalBasis> {
    let depth = family.depth();
    if depth > cm.depth() {
        return Err(Error::MeasureDepth {
            needed: depth,
            available: cm.depth(),
        });
    }
    let rank = family.rank();
    // working copies refined to the current level
    let mut work: Vec<Vec<f64>> = Vec::new();
    let mut vectors: Vec<Vec<HilbertVector>> = Vec::new();
    for n in 0..=depth {
        let masses = cm.level_masses(n)?;
        let width = if n == 0 { 1 } else if n == 1 { 2 * rank } else { 2 * rank - 1 };
        for v in &mut work {
            let mut next = Vec::with_capacity(v.len() * width);
            for &c in v.iter() {
                next.extend(std::iter::repeat(c).take(width));
            }
            *v = next;
        }
        let mut shell = Vec::with_capacity(family.level(n).len());
        for w in family.level(n) {
            let mut r = vec![0.0; masses.len()];
            r[word_index(w, rank)] = 1.0;
            for _ in 0..2 {
                for q in &work {
                    let c = dot(&r, q, masses);
                    for (ri, qi) in r.iter_mut().zip(q) {
                        *ri -= c * qi;
                    }
                }
            }
            let norm = dot(&r, &r, masses).sqrt();
            if !(norm > NORM_FLOOR) {
                return Err(Error::DegenerateNorm {
                    word: w.to_string(),
                });
            }
            for ri in &mut r {
                *ri /= norm;
            }
            shell.push(HilbertVector {
                rank,
                level: n,
                coeffs: r.clone(),
            });
            work.push(r);
        }
        vectors.push(shell);
    }
    Ok(OrthonormalBasis {
        family: family.clone(),
        vectors,
    })
}

/// n-th spectral coefficient of the symbol: the trace of the symbol
/// compressed to the n-th shell, sum of <Psi_w | a Psi_w> in canonical
/// order.
pub fn coefficient(
    basis: &OrthonormalBasis,
    a: &Symbol,
    n: usize,
    cm: &CylinderMeasure,
) -> Result<f64> {
    if n > basis.depth() {
        return Err(Error::InvalidSpec {
            reason: format!("coefficient level {n} exceeds basis depth {}", basis.depth()),
        });
    }
    let mut k = KahanSum::new();
    for psi in basis.shell(n) {
        k.add(inner_product(psi, &psi.apply_symbol(a)?, cm)?);
    }
    Ok(k.value())
}

/// The factor relating a cylinder symbol's coefficient to its mass:
/// c_{m-1}(chi_eta) = mu(->eta) * kappa(eta), where kappa sums the squared
/// values of the (m-1)-shell vectors on the length-(m-1) prefix of eta.
pub fn kappa(basis: &OrthonormalBasis, eta: &Word) -> Result<f64> {
    let m = eta.len();
    if m == 0 {
        return Err(Error::InvalidSpec {
            reason: "kappa needs a nonempty word".into(),
        });
    }
    if m - 1 > basis.depth() {
        return Err(Error::InvalidSpec {
            reason: format!("kappa of a length-{m} word needs basis depth {}", m - 1),
        });
    }
    let prefix = eta.prefix(m - 1);
    let mut k = KahanSum::new();
    for psi in basis.shell(m - 1) {
        let value = psi.value_at(&prefix)?;
        k.add(value * value);
    }
    let out = k.value();
    if !(out > NORM_FLOOR) {
        return Err(Error::DegenerateKappa {
            word: eta.to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::freegroup::{build_index_sets, build_index_sets_with, DropPolicy, IndexPolicy, LevelOrder};
    use crate::moebius::SchottkyGroupSpec;
    use crate::psmeasure::{hausdorff_dimension, CylinderMeasure};

    fn reference(depth: usize) -> (SchottkyGroupSpec, CylinderMeasure) {
        let spec = fixtures::genus2_reference();
        let est = hausdorff_dimension(&spec, depth.max(3), 1e-10).unwrap();
        let cm = CylinderMeasure::shadow(&spec, depth, est).unwrap();
        (spec, cm)
    }

    fn word(s: &str) -> Word {
        s.parse().unwrap()
    }

    #[test]
    fn refinement_is_exact_block_repetition() {
        let f = HilbertVector::new(2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = f.refined_to(2).unwrap();
        assert_eq!(r.level(), 2);
        assert_eq!(r.coeffs().len(), 12);
        assert_eq!(&r.coeffs()[..3], &[1.0, 1.0, 1.0]);
        assert_eq!(&r.coeffs()[9..], &[4.0, 4.0, 4.0]);
        // value on a cylinder is the parent's value
        assert_eq!(r.value_at(&word("a2.a1")).unwrap(), 2.0);
    }

    #[test]
    fn inner_products_match_gram_entries() {
        let (_, cm) = reference(4);
        let cases = [
            ("a1", "a1"),
            ("a1", "a2"),
            ("a1", "a1.a2"),
            ("a2.a1", "a2"),
            ("a1.a2", "a2.a1"),
        ];
        for (ws, vs) in cases {
            let (w, v) = (word(ws), word(vs));
            let lhs = inner_product(
                &HilbertVector::characteristic(2, &w),
                &HilbertVector::characteristic(2, &v),
                &cm,
            )
            .unwrap();
            let rhs = gram_entry(&cm, &w, &v).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300), "{ws} vs {vs}");
        }
        // unit vector: the whole space has mass one
        let one = HilbertVector::constant_one(2);
        assert!((inner_product(&one, &one, &cm).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symbol_application_is_the_max_rule() {
        let a = word("a1");
        let ab = word("a1.a2");
        let chi_ab = HilbertVector::characteristic(2, &ab);
        let product = chi_ab.apply_symbol(&Symbol::Cylinder(a)).unwrap();
        assert_eq!(product, chi_ab);
        // idempotence
        let chi_a = HilbertVector::characteristic(2, &word("a1"));
        let sq = chi_a.apply_symbol(&Symbol::Cylinder(word("a1"))).unwrap();
        assert_eq!(sq, chi_a);
        // unit acts as identity
        assert_eq!(chi_a.apply_symbol(&Symbol::Unit).unwrap(), chi_a);
        // disjoint cylinders annihilate
        let z = chi_a.apply_symbol(&Symbol::Cylinder(word("a2"))).unwrap();
        assert!(z.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn symbol_round_trips_through_strings() {
        for s in ["1", "chi:a1", "chi:a2.a1'"] {
            let sym: Symbol = s.parse().unwrap();
            assert_eq!(sym.to_string(), s);
        }
        assert_eq!("chi:e".parse::<Symbol>().unwrap(), Symbol::Unit);
        assert!("chi:".parse::<Symbol>().is_err());
        assert!("x".parse::<Symbol>().is_err());
    }

    #[test]
    fn basis_is_orthonormal_to_working_precision() {
        let (_, cm) = reference(4);
        let family = build_index_sets(2, 4).unwrap();
        let basis = orthonormalize(&family, &cm).unwrap();
        // full Gram recomputation across all shells
        let mut all: Vec<&HilbertVector> = Vec::new();
        for n in 0..=4 {
            all.extend(basis.shell(n));
        }
        assert_eq!(all.len(), 108);
        let mut worst = 0.0f64;
        for (i, f) in all.iter().enumerate() {
            for (j, h) in all.iter().enumerate() {
                let g = inner_product(f, h, &cm).unwrap();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        assert!(worst <= 1e-10, "worst Gram defect {worst:e}");
    }

    #[test]
    fn first_shells_have_closed_forms() {
        let (_, cm) = reference(3);
        let family = build_index_sets(2, 3).unwrap();
        let basis = orthonormalize(&family, &cm).unwrap();
        // the level-0 vector is the constant function, untouched
        assert_eq!(basis.shell(0)[0].coeffs(), &[1.0]);
        // level-1 vectors are chi/sqrt(mass) minus their projection on the
        // constant; before normalization that is chi - mass * 1, so check
        // orthogonality to 1 and unit norm instead of a literal formula
        let one = HilbertVector::constant_one(2);
        for psi in basis.shell(1) {
            assert!(inner_product(psi, &one, &cm).unwrap().abs() < 1e-12);
            let n = inner_product(psi, psi, &cm).unwrap();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_holds_on_the_filtration() {
        let (_, cm) = reference(4);
        let family = build_index_sets(2, 3).unwrap();
        let basis = orthonormalize(&family, &cm).unwrap();
        // f in H_3: an arbitrary step function at level 3
        let coeffs: Vec<f64> = (0..36).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let f = HilbertVector::new(2, 3, coeffs).unwrap();
        let direct = inner_product(&f, &f, &cm).unwrap();
        let mut sum = KahanSum::new();
        for n in 0..=3 {
            for psi in basis.shell(n) {
                let c = inner_product(psi, &f, &cm).unwrap();
                sum.add(c * c);
            }
        }
        assert!(
            (sum.value() - direct).abs() <= 1e-9 * direct.abs(),
            "{} vs {direct}",
            sum.value()
        );
    }

    #[test]
    fn unit_coefficients_count_the_shells() {
        let (_, cm) = reference(3);
        let family = build_index_sets(2, 3).unwrap();
        let basis = orthonormalize(&family, &cm).unwrap();
        for (n, expect) in [(0usize, 1.0f64), (1, 3.0), (2, 8.0), (3, 24.0)] {
            let c = coefficient(&basis, &Symbol::Unit, n, &cm).unwrap();
            assert!((c - expect).abs() < 1e-9, "c_{n} = {c}");
        }
    }

    #[test]
    fn zeroth_coefficient_is_the_state() {
        let (_, cm) = reference(3);
        let family = build_index_sets(2, 3).unwrap();
        let basis = orthonormalize(&family, &cm).unwrap();
        for ws in ["a1", "a2'", "a1.a2"] {
            let w = word(ws);
            let c = coefficient(&basis, &Symbol::Cylinder(w.clone()), 0, &cm).unwrap();
            assert!((c - cm.mass(&w).unwrap()).abs() < 1e-14, "{ws}");
        }
    }

    #[test]
    fn kappa_relates_coefficient_and_mass() {
        let (_, cm) = reference(4);
        let family = build_index_sets(2, 4).unwrap();
        let basis = orthonormalize(&family, &cm).unwrap();
        for ws in ["a1", "a2", "a1.a2", "a2.a1'", "a1.a2.a1", "a2'.a1.a2"] {
            let eta = word(ws);
            let m = eta.len();
            let direct = coefficient(&basis, &Symbol::Cylinder(eta.clone()), m - 1, &cm).unwrap();
            let predicted = cm.mass(&eta).unwrap() * kappa(&basis, &eta).unwrap();
            assert!(
                (direct - predicted).abs() <= 1e-9 * direct.abs().max(1e-30),
                "{ws}: direct {direct} vs predicted {predicted}"
            );
        }
        // kappa(eta) = 1 for single letters
        assert!((kappa(&basis, &word("a2'")).unwrap() - 1.0).abs() < 1e-12);
        // kappa only reads the prefix: siblings agree exactly
        let k1 = kappa(&basis, &word("a1.a2.a1")).unwrap();
        let k2 = kappa(&basis, &word("a1.a2.a2")).unwrap();
        assert_eq!(k1, k2);
    }

    #[test]
    fn cylinder_coefficients_are_nonnegative_at_deeper_shells() {
        let (_, cm) = reference(4);
        let family = build_index_sets(2, 4).unwrap();
        let basis = orthonormalize(&family, &cm).unwrap();
        let eta = word("a1.a2");
        for n in 2..=4 {
            let c = coefficient(&basis, &Symbol::Cylinder(eta.clone()), n, &cm).unwrap();
            assert!(c >= -1e-12, "c_{n} = {c}");
        }
    }

    #[test]
    fn traces_do_not_depend_on_the_dropped_letter_policy() {
        let (_, cm) = reference(4);
        let canonical = build_index_sets(2, 4).unwrap();
        let alt = build_index_sets_with(
            2,
            4,
            IndexPolicy {
                drop: DropPolicy::Smallest,
                order: LevelOrder::Reversed,
            },
        )
        .unwrap();
        let b1 = orthonormalize(&canonical, &cm).unwrap();
        let b2 = orthonormalize(&alt, &cm).unwrap();
        for sym in [
            Symbol::Unit,
            Symbol::Cylinder(word("a1")),
            Symbol::Cylinder(word("a2.a1'")),
        ] {
            for n in 0..=4usize {
                let c1 = coefficient(&b1, &sym, n, &cm).unwrap();
                let c2 = coefficient(&b2, &sym, n, &cm).unwrap();
                assert!(
                    (c1 - c2).abs() <= 1e-9 * c1.abs().max(1.0),
                    "{sym} at shell {n}: {c1} vs {c2}"
                );
            }
        }
    }

    #[test]
    fn compression_commutes_with_shallow_symbols() {
        // a acts within H_n for |eta| <= n, so projecting before or after
        // multiplying agrees on everything in the basis span
        let (_, cm) = reference(4);
        let family = build_index_sets(2, 3).unwrap();
        let basis = orthonormalize(&family, &cm).unwrap();
        let a = Symbol::Cylinder(word("a1"));
        let m = 2usize; // project onto the span of shells 0..=m, m > |eta|
        let mut worst = 0.0f64;
        let project = |f: &HilbertVector| -> HilbertVector {
            let mut acc = HilbertVector::new(2, f.level().max(3), vec![0.0; 36]).unwrap();
            for n in 0..=m {
                for psi in basis.shell(n) {
                    let c = inner_product(psi, f, &cm).unwrap();
                    let p = psi.refined_to(3).unwrap();
                    for (ai, pi) in acc.coeffs.iter_mut().zip(p.coeffs()) {
                        *ai += c * pi;
                    }
                }
            }
            acc
        };
        for n in 0..=3usize {
            for psi in basis.shell(n) {
                let a_psi = psi.apply_symbol(&a).unwrap();
                let qa = project(&a_psi);
                let q_psi = project(psi);
                let aq = q_psi.apply_symbol(&a).unwrap().refined_to(3).unwrap();
                for (x, y) in qa.coeffs().iter().zip(aq.coeffs()) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        assert!(worst <= 1e-9, "commutator defect {worst:e}");
    }

    #[test]
    fn degenerate_measure_is_rejected() {
        let err = HilbertVector::new(2, 1, vec![1.0; 5]).unwrap_err();
        assert!(matches!(err, Error::InvalidSpec { .. }));
    }
}

//! Spectral zeta data: the Dirac eigenvalue ladder attached to the word
//! filtration, zeta series for unit and cylinder symbols, evaluation with a
//! certified tail bound, genus inference from the eigenvalue ladder, and the
//! inverse direction — recovering the cylinder masses from a coefficient
//! table and comparing two presentations through their zeta data.

use std::fmt;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::ToPrimitive;

use crate::freegroup::{build_index_sets, enumerate_words, word_count, Word};
use crate::gns::{coefficient, kappa, orthonormalize, OrthonormalBasis, Symbol};
use crate::moebius::SchottkyGroupSpec;
use crate::psmeasure::{hausdorff_dimension, CylinderMeasure, DimensionEstimate};
use crate::util::{fmt_g17, KahanSum};
use crate::{Error, Result};

/// Default bisection tolerance for the dimension estimate inside a context.
pub const DEFAULT_CONTEXT_TOL: f64 = 1e-10;

/// Relative tolerance for the internal consistency checks run while
/// reconstructing masses from a coefficient table (positivity aside, the
/// recovered children of a cylinder must sum back to their parent).
pub const RECOVERY_CONSISTENCY_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// the eigenvalue ladder
// ---------------------------------------------------------------------------

/// Number of reduced words of length `n`: the dimension of the span of the
/// level-`n` cylinders, and the cube root of the `n`-th Dirac eigenvalue.
pub fn filtration_dimension(g: usize, n: usize) -> u128 {
    word_count(g, n)
}

/// The `n`-th Dirac eigenvalue: the cube of the filtration dimension,
/// computed exactly. `1, (2g)^3, (2g(2g-1))^3, ...`
pub fn dirac_eigenvalue(g: usize, n: usize) -> BigUint {
    BigUint::from(word_count(g, n)).pow(3)
}

/// Multiplicity of the `n`-th eigenvalue: how many orthonormal directions the
/// level-`n` shell adds. `1, 2g-1, 2g(2g-1)^(n-2)(2g-2), ...`; partial sums
/// give back the filtration dimensions.
pub fn multiplicity(g: usize, n: usize) -> u128 {
    match n {
        0 => 1,
        1 => (2 * g - 1) as u128,
        _ => word_count(g, n - 1) * (2 * g - 2) as u128,
    }
}

/// Natural log of the `n`-th eigenvalue, stable for depths far beyond what
/// fits in an f64: `3 (ln 2g + (n-1) ln (2g-1))`.
fn ln_eigenvalue(g: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    3.0 * ((2 * g) as f64).ln() + 3.0 * (n as f64 - 1.0) * ((2 * g - 1) as f64).ln()
}

/// The eigenvalue ladder with multiplicities up to a chosen level.
#[derive(Debug, Clone)]
pub struct DiracSpectrum {
    rank: usize,
    eigenvalues: Vec<BigUint>,
    multiplicities: Vec<u128>,
}

impl DiracSpectrum {
    pub fn new(rank: usize, depth: usize) -> Result<Self> {
        if rank < 2 {
            return Err(Error::InvalidSpec {
                reason: format!("spectrum needs rank >= 2, got {rank}"),
            });
        }
        let mut eigenvalues = Vec::with_capacity(depth + 1);
        let mut multiplicities = Vec::with_capacity(depth + 1);
        for n in 0..=depth {
            eigenvalues.push(dirac_eigenvalue(rank, n));
            multiplicities.push(multiplicity(rank, n));
        }
        Ok(Self {
            rank,
            eigenvalues,
            multiplicities,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn depth(&self) -> usize {
        self.eigenvalues.len() - 1
    }

    pub fn eigenvalue(&self, n: usize) -> &BigUint {
        &self.eigenvalues[n]
    }

    pub fn multiplicity(&self, n: usize) -> u128 {
        self.multiplicities[n]
    }
}

/// Summability witness: the partial sum of `m_n (1 + lambda_n^2)^(-1/2)` up
/// to the given level. The terms decay geometrically, so the partial sums
/// stay uniformly below 2 whatever the rank; once the eigenvalue overflows
/// f64 range the term is computed through logs instead.
pub fn summability_check(g: usize, depth: usize) -> f64 {
    let mut k = KahanSum::new();
    for n in 0..=depth {
        let m = multiplicity(g, n) as f64;
        let ll = ln_eigenvalue(g, n);
        let term = if ll > 345.0 {
            // lambda^2 would overflow; (1 + lambda^2)^(-1/2) = 1/lambda to
            // within 1 ulp out here
            m * (-ll).exp()
        } else {
            let lam = ll.exp();
            m / (1.0 + lam * lam).sqrt()
        };
        k.add(term);
    }
    k.value()
}

// ---------------------------------------------------------------------------
// zeta series
// ---------------------------------------------------------------------------

/// A truncated zeta series for one symbol: pairs `(lambda_n, c_n)` for
/// `n = 0..=depth`, with the eigenvalues kept exact.
#[derive(Debug, Clone)]
pub struct ZetaSeries {
    rank: usize,
    symbol: Symbol,
    terms: Vec<(BigUint, f64)>,
}

impl ZetaSeries {
    /// The unit-symbol series, where the coefficients are exactly the shell
    /// multiplicities — no measure or basis is needed.
    pub fn unit(rank: usize, depth: usize) -> Result<Self> {
        let spectrum = DiracSpectrum::new(rank, depth)?;
        let terms = (0..=depth)
            .map(|n| {
                (
                    spectrum.eigenvalue(n).clone(),
                    spectrum.multiplicity(n) as f64,
                )
            })
            .collect();
        Ok(Self {
            rank,
            symbol: Symbol::Unit,
            terms,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn symbol(&self) -> &Symbol {
        &self.symbol
    }

    pub fn depth(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn terms(&self) -> &[(BigUint, f64)] {
        &self.terms
    }

    pub fn eigenvalue(&self, n: usize) -> &BigUint {
        &self.terms[n].0
    }

    pub fn coefficient(&self, n: usize) -> f64 {
        self.terms[n].1
    }
}

/// Everything needed to compute coefficients for one presentation: the
/// dimension estimate, the cylinder measure, and the orthonormal filtration,
/// built once and reused across symbols.
pub struct ZetaContext {
    spec_hash: String,
    estimate: DimensionEstimate,
    measure: CylinderMeasure,
    basis: OrthonormalBasis,
}

impl ZetaContext {
    /// Builds the measure and filtration at the given depth. The dimension
    /// bisection and the mass table run at depth `max(depth, 2)` (the ratio
    /// needs two consecutive levels).
    pub fn prepare(spec: &SchottkyGroupSpec, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidSpec {
                reason: "context depth must be at least 1".into(),
            });
        }
        let eff = depth.max(2);
        let estimate = hausdorff_dimension(spec, eff, DEFAULT_CONTEXT_TOL)?;
        let measure = CylinderMeasure::shadow(spec, eff, estimate)?;
        let family = build_index_sets(spec.rank(), depth)?;
        let basis = orthonormalize(&family, &measure)?;
        Ok(Self {
            spec_hash: spec.content_hash(),
            estimate,
            measure,
            basis,
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn depth(&self) -> usize {
        self.basis.depth()
    }

    pub fn spec_hash(&self) -> &str {
        &self.spec_hash
    }

    pub fn estimate(&self) -> DimensionEstimate {
        self.estimate
    }

    pub fn measure(&self) -> &CylinderMeasure {
        &self.measure
    }

    pub fn basis(&self) -> &OrthonormalBasis {
        &self.basis
    }
}

/// The zeta series of a symbol, truncated at `depth`. The unit symbol short
/// circuits to the exact multiplicity series; cylinder symbols go through
/// the filtration, one compressed trace per shell.
pub fn zeta_series(ctx: &ZetaContext, symbol: &Symbol, depth: usize) -> Result<ZetaSeries> {
    if depth > ctx.depth() {
        return Err(Error::InvalidSpec {
            reason: format!(
                "series depth {depth} exceeds context depth {}",
                ctx.depth()
            ),
        });
    }
    if *symbol == Symbol::Unit {
        return ZetaSeries::unit(ctx.rank(), depth);
    }
    let mut terms = Vec::with_capacity(depth + 1);
    for n in 0..=depth {
        let c = coefficient(ctx.basis(), symbol, n, ctx.measure())?;
        terms.push((dirac_eigenvalue(ctx.rank(), n), c));
    }
    Ok(ZetaSeries {
        rank: ctx.rank(),
        symbol: symbol.clone(),
        terms,
    })
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

/// One evaluation of a truncated series: the raw partial sum, a geometric
/// completion of the dropped tail, and a rigorous envelope on the tail.
#[derive(Debug, Clone, Copy)]
pub struct ZetaValue {
    pub s: Complex64,
    pub truncated: Complex64,
    pub completion: Complex64,
    pub tail_bound: f64,
    pub depth: usize,
}

impl ZetaValue {
    /// Best estimate: partial sum plus the geometric completion.
    pub fn value(&self) -> Complex64 {
        self.truncated + self.completion
    }
}

/// Evaluates `sum c_n lambda_n^s` at `Re(s) < -1/3`.
///
/// The tail bound uses `0 <= c_n <= m_n` (true for the unit and for any
/// cylinder symbol, since each shell term is a state value in `[0, 1]`) and
/// the fact that `m_(n+1) lambda_(n+1)^sigma / (m_n lambda_n^sigma)` never
/// exceeds `r = (2g-1)^(1+3 sigma) < 1`, giving the geometric envelope
/// `m_(N+1) lambda_(N+1)^sigma / (1 - r)`.
///
/// The completion extrapolates the actual last coefficient with the exact
/// asymptotic ratio `c_(n+1)/c_n = 2g-1`, which the multiplicities satisfy
/// identically from level 2 on; it is exact for the unit series at depth >= 2
/// and is omitted for shallower series.
pub fn zeta_eval(series: &ZetaSeries, s: Complex64) -> Result<ZetaValue> {
    if !(s.re < -1.0 / 3.0) {
        return Err(Error::Divergent { re: s.re });
    }
    let g = series.rank();
    let n_top = series.depth();
    let mut re = KahanSum::new();
    let mut im = KahanSum::new();
    let mut abs_sum = 0.0f64;
    for (n, &(_, c)) in series.terms().iter().enumerate() {
        let term = (s * ln_eigenvalue(g, n)).exp() * c;
        re.add(term.re);
        im.add(term.im);
        abs_sum += term.norm();
    }
    let truncated = Complex64::new(re.value(), im.value());

    let b = (2 * g - 1) as f64;
    let ratio = (s * 3.0 + 1.0).exp_base(b);
    let ratio_abs = b.powf(1.0 + 3.0 * s.re);
    let next = ln_eigenvalue(g, n_top + 1);
    // the envelope is inflated to stay an upper bound after floating-point
    // evaluation of both the partial sum and the envelope itself (for the
    // unit series at real s the envelope equals the tail exactly, so without
    // headroom for rounding the comparison could land on either side)
    let tail_bound = multiplicity(g, n_top + 1) as f64 * (s.re * next).exp() / (1.0 - ratio_abs)
        * (1.0 + 1e-12)
        + 8.0 * f64::EPSILON * abs_sum;
    let completion = if n_top >= 2 {
        series.coefficient(n_top) * b * (s * next).exp()
            / (Complex64::new(1.0, 0.0) - ratio)
    } else {
        Complex64::new(0.0, 0.0)
    };
    Ok(ZetaValue {
        s,
        truncated,
        completion,
        tail_bound,
        depth: n_top,
    })
}

trait ExpBase {
    fn exp_base(self, base: f64) -> Complex64;
}

impl ExpBase for Complex64 {
    /// `base^self` for positive real base, through the principal log.
    fn exp_base(self, base: f64) -> Complex64 {
        (self * base.ln()).exp()
    }
}

// ---------------------------------------------------------------------------
// closed forms for the unit series
// ---------------------------------------------------------------------------

/// Which resummation of the full unit series to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedFormVariant {
    /// Keeps the exact multiplicities at every level: geometric from level 2
    /// with the level-0 and level-1 terms written out. This sums the series
    /// term for term.
    MultiplicityExact,
    /// Runs the asymptotic multiplicity ratio all the way down to level 1,
    /// which replaces `m_1 = 2g-1` by `2g(2g-2)/(2g-1)`. Smaller by exactly
    /// `(2g)^(3s) / (2g-1)` times `( (2g-1)^2 - 2g(2g-2) ) = 1`.
    GeometricFromLevelOne,
}

impl fmt::Display for ClosedFormVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClosedFormVariant::MultiplicityExact => write!(f, "multiplicity-exact"),
            ClosedFormVariant::GeometricFromLevelOne => write!(f, "geometric-from-level-one"),
        }
    }
}

impl FromStr for ClosedFormVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiplicity-exact" => Ok(ClosedFormVariant::MultiplicityExact),
            "geometric-from-level-one" => Ok(ClosedFormVariant::GeometricFromLevelOne),
            other => Err(Error::Parse {
                reason: format!(
                    "unknown closed-form variant {other:?} \
                     (expected multiplicity-exact or geometric-from-level-one)"
                ),
            }),
        }
    }
}

/// Closed form of the full (untruncated) unit zeta series on `Re(s) < -1/3`.
///
/// With `x = (2g)^(3s)`, `y = (2g-1)^(3s)` and `q = (2g-1) y`:
/// the exact sum is `1 + (2g-1) x + 2g(2g-2) x y / (1 - q)`; the level-one
/// geometric variant is `1 + 2g(2g-2) x / ((2g-1)(1 - q))`.
pub fn zeta_unit_closed_form(
    g: usize,
    s: Complex64,
    variant: ClosedFormVariant,
) -> Result<Complex64> {
    if !(s.re < -1.0 / 3.0) {
        return Err(Error::Divergent { re: s.re });
    }
    let x = (s * 3.0).exp_base((2 * g) as f64);
    let y = (s * 3.0).exp_base((2 * g - 1) as f64);
    let q = y * (2 * g - 1) as f64;
    let denom = Complex64::new(1.0, 0.0) - q;
    if denom.norm() < 1e-14 {
        return Err(Error::ClosedFormPole);
    }
    let one = Complex64::new(1.0, 0.0);
    let head = (2 * g * (2 * g - 2)) as f64;
    Ok(match variant {
        ClosedFormVariant::MultiplicityExact => one + x * (2 * g - 1) as f64 + x * y * head / denom,
        ClosedFormVariant::GeometricFromLevelOne => one + x * head / ((2 * g - 1) as f64 * denom),
    })
}

// ---------------------------------------------------------------------------
// genus inference
// ---------------------------------------------------------------------------

/// Reads the genus off a unit-symbol series: the first eigenvalue is
/// `(2g)^3`, and every other term must agree with the ladder that genus
/// generates. The coefficient growth `c_(n+1)/c_n = 2g-1` (exact from level
/// 2) is cross-checked as well.
pub fn infer_genus(series: &ZetaSeries) -> Result<usize> {
    if *series.symbol() != Symbol::Unit {
        return Err(Error::InconsistentSeries {
            reason: format!("genus inference needs the unit series, got symbol {}", series.symbol()),
        });
    }
    if series.depth() < 1 {
        return Err(Error::InconsistentSeries {
            reason: "need at least the level-1 eigenvalue".into(),
        });
    }
    let lam1 = series.eigenvalue(1);
    let root = lam1.cbrt();
    if &root.pow(3) != lam1 {
        return Err(Error::InconsistentSeries {
            reason: format!("first eigenvalue {lam1} is not a perfect cube"),
        });
    }
    let dim = root.to_usize().ok_or_else(|| Error::InconsistentSeries {
        reason: "first eigenvalue out of range".into(),
    })?;
    if dim < 4 || dim % 2 != 0 {
        return Err(Error::InconsistentSeries {
            reason: format!("cube root {dim} is not an even integer >= 4"),
        });
    }
    let g = dim / 2;
    for n in 0..=series.depth() {
        if series.eigenvalue(n) != &dirac_eigenvalue(g, n) {
            return Err(Error::InconsistentSeries {
                reason: format!("eigenvalue at level {n} does not sit on the genus-{g} ladder"),
            });
        }
    }
    let b = (2 * g - 1) as f64;
    for n in 2..series.depth() {
        let c = series.coefficient(n);
        let c_next = series.coefficient(n + 1);
        if c > 0.0 && (c_next / c - b).abs() > 1e-6 * b {
            return Err(Error::InconsistentSeries {
                reason: format!(
                    "coefficient ratio {:.6} at level {n} is off the genus-{g} growth {b}",
                    c_next / c
                ),
            });
        }
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// coefficient tables and measure recovery
// ---------------------------------------------------------------------------

/// The cylinder coefficients `c_(m-1)(chi_eta)` for every word `eta` of
/// length 1..=depth, in canonical order — exactly the data the inverse
/// direction consumes.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    rank: usize,
    depth: usize,
    spec_hash: Option<String>,
    rows: Vec<(Word, f64)>,
}

impl CoefficientTable {
    pub fn new(
        rank: usize,
        depth: usize,
        spec_hash: Option<String>,
        rows: Vec<(Word, f64)>,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InconsistentTable {
                reason: "table must cover at least the length-1 words".into(),
            });
        }
        let mut at = 0usize;
        for m in 1..=depth {
            for w in enumerate_words(rank, m)? {
                match rows.get(at) {
                    Some((got, _)) if *got == w => {}
                    Some((got, _)) => {
                        return Err(Error::InconsistentTable {
                            reason: format!("row {at}: expected word {w}, got {got}"),
                        })
                    }
                    None => {
                        return Err(Error::InconsistentTable {
                            reason: format!("table ends early at row {at} (expected {w})"),
                        })
                    }
                }
                at += 1;
            }
        }
        if at != rows.len() {
            return Err(Error::InconsistentTable {
                reason: format!("table has {} extra rows", rows.len() - at),
            });
        }
        Ok(Self {
            rank,
            depth,
            spec_hash,
            rows,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn spec_hash(&self) -> Option<&str> {
        self.spec_hash.as_deref()
    }

    pub fn rows(&self) -> &[(Word, f64)] {
        &self.rows
    }

    /// The contiguous block of rows for words of length `m`.
    pub fn level_rows(&self, m: usize) -> Result<&[(Word, f64)]> {
        if m == 0 || m > self.depth {
            return Err(Error::InconsistentTable {
                reason: format!("no rows at word length {m}"),
            });
        }
        let mut start = 0usize;
        for k in 1..m {
            start += word_count(self.rank, k) as usize;
        }
        let len = word_count(self.rank, m) as usize;
        Ok(&self.rows[start..start + len])
    }
}

/// Computes the coefficient table a context induces: one row per word of
/// length 1..=depth, each carrying the trace of its cylinder symbol
/// compressed to the shell just below it.
pub fn recovery_table(ctx: &ZetaContext, depth: usize) -> Result<CoefficientTable> {
    if depth > ctx.depth() {
        return Err(Error::InvalidSpec {
            reason: format!("table depth {depth} exceeds context depth {}", ctx.depth()),
        });
    }
    let mut rows = Vec::new();
    for m in 1..=depth {
        for w in enumerate_words(ctx.rank(), m)? {
            let c = coefficient(
                ctx.basis(),
                &Symbol::Cylinder(w.clone()),
                m - 1,
                ctx.measure(),
            )?;
            rows.push((w, c));
        }
    }
    CoefficientTable::new(
        ctx.rank(),
        depth,
        Some(ctx.spec_hash().to_string()),
        rows,
    )
}

/// Rebuilds the cylinder masses from a coefficient table, level by level:
/// the length-1 masses are the level-0 coefficients themselves, and each
/// deeper mass is its coefficient divided by the prefix weight computed
/// from the filtration of the already-recovered coarser measure. The result
/// carries no dimension estimate — none is needed, and none is implied.
pub fn recover_measures(table: &CoefficientTable) -> Result<CylinderMeasure> {
    let g = table.rank();
    let top = table.depth();

    let mut first: Vec<f64> = Vec::new();
    let mut sum = KahanSum::new();
    for (w, c) in table.level_rows(1)? {
        if !(*c > 0.0) || !c.is_finite() {
            return Err(Error::InconsistentTable {
                reason: format!("non-positive coefficient at {w}"),
            });
        }
        first.push(*c);
        sum.add(*c);
    }
    if (sum.value() - 1.0).abs() > RECOVERY_CONSISTENCY_TOL {
        return Err(Error::InconsistentTable {
            reason: format!(
                "length-1 masses sum to {:.9}, expected 1 (state is normalized)",
                sum.value()
            ),
        });
    }

    let mut masses = first;
    for m in 2..=top {
        let coarse = CylinderMeasure::from_top_masses(g, m - 1, None, masses.clone(), false)?;
        let family = build_index_sets(g, m - 1)?;
        let basis = orthonormalize(&family, &coarse)?;
        let mut next = Vec::with_capacity(word_count(g, m) as usize);
        for (w, c) in table.level_rows(m)? {
            let k = kappa(&basis, w)?;
            let mass = c / k;
            if !(mass > 0.0) || !mass.is_finite() {
                return Err(Error::InconsistentTable {
                    reason: format!("recovered mass at {w} is not positive"),
                });
            }
            next.push(mass);
        }
        // additivity check against the previous level: the children of a
        // cylinder must give back its mass
        let width = 2 * g - 1;
        for (i, chunk) in next.chunks(width).enumerate() {
            let child_sum: f64 = chunk.iter().sum();
            let parent = masses[i];
            if (child_sum - parent).abs() > RECOVERY_CONSISTENCY_TOL * parent {
                return Err(Error::InconsistentTable {
                    reason: format!(
                        "children of cylinder {i} at length {} sum to {child_sum:.9}, \
                         parent mass is {parent:.9}",
                        m - 1
                    ),
                });
            }
        }
        masses = next;
    }
    CylinderMeasure::from_top_masses(g, top, None, masses, false)
}

// ---------------------------------------------------------------------------
// coefficient table files
// ---------------------------------------------------------------------------

const COEFF_MAGIC: &str = "# schottky-zeta coefficients v1";

/// Writes a coefficient table with a header binding it to the spec hash and
/// depth. Values are 17-digit decimals, so a read-back is bit-exact.
pub fn write_coefficients(path: &Path, table: &CoefficientTable) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{COEFF_MAGIC}")?;
    writeln!(out, "# tool = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "# spec = {}", table.spec_hash().unwrap_or("unknown"))?;
    writeln!(out, "# rank = {}", table.rank())?;
    writeln!(out, "# depth = {}", table.depth())?;
    writeln!(out, "word,level,coefficient")?;
    for (w, c) in table.rows() {
        writeln!(out, "{w},{},{}", w.len() - 1, fmt_g17(*c))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a coefficient table, verifying the header, the expected spec hash
/// (when given) and the canonical row order.
pub fn read_coefficients(path: &Path, expect_hash: Option<&str>) -> Result<CoefficientTable> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let magic = lines.next().transpose()?.unwrap_or_default();
    if magic != COEFF_MAGIC {
        return Err(Error::CacheMismatch {
            reason: format!("bad magic line {magic:?}"),
        });
    }
    let mut rank = None;
    let mut depth = None;
    let mut hash = None;
    let mut header_done = false;
    let mut rows: Vec<(Word, f64)> = Vec::new();
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
                    _ => {}
                }
                continue;
            }
            if line == "word,level,coefficient" {
                header_done = true;
                if rank.is_none() || depth.is_none() {
                    return Err(Error::CacheMismatch {
                        reason: "header missing rank or depth".into(),
                    });
                }
                if let (Some(want), Some(got)) = (expect_hash, hash.as_deref()) {
                    if want != got {
                        return Err(Error::CacheMismatch {
                            reason: "spec hash differs".into(),
                        });
                    }
                }
                continue;
            }
            return Err(Error::CacheMismatch {
                reason: format!("unexpected line before column header: {line:?}"),
            });
        }
        let mut cols = line.splitn(3, ',');
        let (word_str, level_str, coeff_str) = match (cols.next(), cols.next(), cols.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(Error::CacheMismatch {
                    reason: format!("bad row {line:?}"),
                })
            }
        };
        let word: Word = word_str.parse()?;
        let level: usize = level_str.parse().map_err(|_| Error::CacheMismatch {
            reason: format!("bad level {level_str:?}"),
        })?;
        if level + 1 != word.len() {
            return Err(Error::CacheMismatch {
                reason: format!("level {level} does not match word {word}"),
            });
        }
        let c: f64 = coeff_str.parse().map_err(|_| Error::CacheMismatch {
            reason: format!("bad coefficient {coeff_str:?}"),
        })?;
        rows.push((word, c));
    }
    CoefficientTable::new(rank.unwrap(), depth.unwrap(), hash, rows).map_err(|e| match e {
        Error::InconsistentTable { reason } => Error::CacheMismatch { reason },
        other => other,
    })
}

// ---------------------------------------------------------------------------
// comparing two presentations
// ---------------------------------------------------------------------------

/// Outcome of a zeta-data comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    MeasureEqual,
    MeasureDifferent,
    GenusMismatch,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::MeasureEqual => write!(f, "MEASURE-EQUAL"),
            Verdict::MeasureDifferent => write!(f, "MEASURE-DIFFERENT"),
            Verdict::GenusMismatch => write!(f, "GENUS-MISMATCH"),
        }
    }
}

/// Full result of comparing two presentations through their zeta data.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub verdict: Verdict,
    pub genus_a: usize,
    pub genus_b: usize,
    pub depth: usize,
    pub tol: f64,
    pub delta_a: Option<f64>,
    pub delta_b: Option<f64>,
    pub max_discrepancy: Option<f64>,
    pub mean_discrepancy: Option<f64>,
    pub witness: Option<Word>,
    pub witness_discrepancy: Option<f64>,
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict: {}", self.verdict)?;
        writeln!(f, "genus: {} vs {}", self.genus_a, self.genus_b)?;
        if let (Some(da), Some(db)) = (self.delta_a, self.delta_b) {
            writeln!(f, "delta: {:.12} vs {:.12}", da, db)?;
        }
        if let (Some(mx), Some(mn)) = (self.max_discrepancy, self.mean_discrepancy) {
            writeln!(
                f,
                "cylinder masses to depth {}: max rel diff {:.3e}, mean {:.3e} (tol {:.1e})",
                self.depth, mx, mn, self.tol
            )?;
        }
        match self.verdict {
            Verdict::MeasureEqual => write!(
                f,
                "note: the zeta data agree at this depth; the surfaces are conformally \
                 or anti-conformally equivalent"
            ),
            Verdict::MeasureDifferent => {
                if let (Some(w), Some(d)) = (&self.witness, self.witness_discrepancy) {
                    write!(f, "witness: cylinder {w} (rel diff {d:.3e} exceeds tol)")
                } else {
                    write!(f, "witness: none recorded")
                }
            }
            Verdict::GenusMismatch => write!(
                f,
                "note: the eigenvalue ladders already disagree; no measures compared"
            ),
        }
    }
}

/// Compares two presentations through their zeta data at the given depth:
/// genus off the unit series first, then the cylinder masses word by word
/// (relative difference, tolerance `tol`). The witness is the first word in
/// canonical order whose masses differ beyond tolerance.
pub fn compare_triples(
    spec_a: &SchottkyGroupSpec,
    spec_b: &SchottkyGroupSpec,
    depth: usize,
    tol: f64,
) -> Result<ComparisonReport> {
    if depth == 0 {
        return Err(Error::InvalidSpec {
            reason: "comparison depth must be at least 1".into(),
        });
    }
    let eff = depth.max(2);
    let genus_a = infer_genus(&ZetaSeries::unit(spec_a.rank(), eff)?)?;
    let genus_b = infer_genus(&ZetaSeries::unit(spec_b.rank(), eff)?)?;
    if genus_a != genus_b {
        return Ok(ComparisonReport {
            verdict: Verdict::GenusMismatch,
            genus_a,
            genus_b,
            depth,
            tol,
            delta_a: None,
            delta_b: None,
            max_discrepancy: None,
            mean_discrepancy: None,
            witness: None,
            witness_discrepancy: None,
        });
    }
    let est_a = hausdorff_dimension(spec_a, eff, DEFAULT_CONTEXT_TOL)?;
    let est_b = hausdorff_dimension(spec_b, eff, DEFAULT_CONTEXT_TOL)?;
    let cm_a = CylinderMeasure::shadow(spec_a, eff, est_a)?;
    let cm_b = CylinderMeasure::shadow(spec_b, eff, est_b)?;

    let mut max_rel = 0.0f64;
    let mut mean = KahanSum::new();
    let mut count = 0usize;
    let mut witness: Option<Word> = None;
    let mut witness_rel = None;
    for n in 1..=depth {
        let ma = cm_a.level_masses(n)?;
        let mb = cm_b.level_masses(n)?;
        let words = enumerate_words(spec_a.rank(), n)?;
        for (i, w) in words.into_iter().enumerate() {
            let rel = (ma[i] - mb[i]).abs() / ma[i].max(mb[i]);
            if rel > max_rel {
                max_rel = rel;
            }
            if witness.is_none() && rel > tol {
                witness_rel = Some(rel);
                witness = Some(w);
            }
            mean.add(rel);
            count += 1;
        }
    }
    let verdict = if max_rel <= tol {
        Verdict::MeasureEqual
    } else {
        Verdict::MeasureDifferent
    };
    Ok(ComparisonReport {
        verdict,
        genus_a,
        genus_b,
        depth,
        tol,
        delta_a: Some(est_a.delta),
        delta_b: Some(est_b.delta),
        max_discrepancy: Some(max_rel),
        mean_discrepancy: Some(mean.value() / count as f64),
        witness,
        witness_discrepancy: witness_rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn multiplicities_partition_the_filtration_dimensions() {
        for g in 2..=4 {
            let spec = DiracSpectrum::new(g, 6).unwrap();
            let mut total = 0u128;
            for n in 0..=6 {
                total += spec.multiplicity(n);
                assert_eq!(total, filtration_dimension(g, n), "g={g} n={n}");
                assert_eq!(
                    spec.eigenvalue(n),
                    &BigUint::from(filtration_dimension(g, n)).pow(3)
                );
            }
        }
    }

    #[test]
    fn genus_two_eigenvalues_start_1_64_1728_46656() {
        let spec = DiracSpectrum::new(2, 3).unwrap();
        let want = [1u64, 64, 1728, 46656];
        for (n, w) in want.iter().enumerate() {
            assert_eq!(spec.eigenvalue(n), &BigUint::from(*w));
        }
    }

    #[test]
    fn summability_stays_below_two_even_at_high_rank() {
        for &g in &[2usize, 10] {
            let mut prev = 0.0;
            for depth in 0..=8 {
                let v = summability_check(g, depth);
                // deep terms fall below f64 resolution, hence >= rather than >
                assert!(v.is_finite() && v >= prev, "g={g} depth={depth} v={v}");
                assert!(v > 0.7 && v < 2.0, "g={g} depth={depth} v={v}");
                prev = v;
            }
        }
        // the n = 0 term alone is 1/sqrt(2)
        assert!((summability_check(2, 0) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn closed_form_oracles_at_s_minus_one() {
        let s = c(-1.0, 0.0);
        let exact = zeta_unit_closed_form(2, s, ClosedFormVariant::MultiplicityExact).unwrap();
        let geo = zeta_unit_closed_form(2, s, ClosedFormVariant::GeometricFromLevelOne).unwrap();
        assert!((exact - c(1.0 + 5.0 / 96.0, 0.0)).norm() < 1e-12);
        assert!((geo - c(1.0 + 3.0 / 64.0, 0.0)).norm() < 1e-12);
        assert!(((exact - geo) - c(1.0 / 192.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn truncated_unit_series_hits_the_closed_form() {
        let series = ZetaSeries::unit(2, 6).unwrap();
        let s = c(-1.0, 0.0);
        let v = zeta_eval(&series, s).unwrap();
        let closed = zeta_unit_closed_form(2, s, ClosedFormVariant::MultiplicityExact).unwrap();
        assert!(v.tail_bound > 0.0 && v.tail_bound < 1e-6);
        assert!((v.truncated - closed).norm() <= v.tail_bound);
        // the completion is exact for the unit series
        assert!((v.value() - closed).norm() < 1e-10);
    }

    #[test]
    fn evaluation_matches_the_closed_form_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for g in [2usize, 3] {
            let series = ZetaSeries::unit(g, 6).unwrap();
            for _ in 0..20 {
                let s = c(rng.gen_range(-4.0..-1.0), rng.gen_range(-3.0..3.0));
                let v = zeta_eval(&series, s).unwrap();
                let closed =
                    zeta_unit_closed_form(g, s, ClosedFormVariant::MultiplicityExact).unwrap();
                assert!(
                    (v.value() - closed).norm() <= v.tail_bound + 1e-12 * closed.norm(),
                    "g={g} s={s} diff={:e} bound={:e}",
                    (v.value() - closed).norm(),
                    v.tail_bound
                );
            }
        }
    }

    #[test]
    fn deep_negative_s_recovers_the_unit_coefficient() {
        let series = ZetaSeries::unit(2, 4).unwrap();
        let v = zeta_eval(&series, c(-40.0, 0.0)).unwrap();
        assert!((v.value() - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn divergent_half_plane_is_rejected() {
        let series = ZetaSeries::unit(2, 3).unwrap();
        for s in [c(-1.0 / 3.0, 0.0), c(0.0, 2.0), c(1.0, 0.0)] {
            assert!(matches!(
                zeta_eval(&series, s),
                Err(Error::Divergent { .. })
            ));
            assert!(matches!(
                zeta_unit_closed_form(2, s, ClosedFormVariant::MultiplicityExact),
                Err(Error::Divergent { .. })
            ));
        }
    }

    #[test]
    fn genus_inference_is_exact_and_strict() {
        for g in 2..=4 {
            let series = ZetaSeries::unit(g, 5).unwrap();
            assert_eq!(infer_genus(&series).unwrap(), g);
        }
        // tamper with one eigenvalue
        let mut bad = ZetaSeries::unit(2, 4).unwrap();
        bad.terms[3].0 += 1u32;
        assert!(matches!(
            infer_genus(&bad),
            Err(Error::InconsistentSeries { .. })
        ));
        // a non-cube leading eigenvalue
        let mut bad = ZetaSeries::unit(2, 3).unwrap();
        bad.terms[1].0 = BigUint::from(65u32);
        assert!(matches!(
            infer_genus(&bad),
            Err(Error::InconsistentSeries { .. })
        ));
        // coefficient growth off the ladder
        let mut bad = ZetaSeries::unit(2, 5).unwrap();
        bad.terms[4].1 *= 1.5;
        assert!(matches!(
            infer_genus(&bad),
            Err(Error::InconsistentSeries { .. })
        ));
        // wrong symbol
        let mut bad = ZetaSeries::unit(2, 3).unwrap();
        bad.symbol = Symbol::Cylinder("a1".parse().unwrap());
        assert!(matches!(
            infer_genus(&bad),
            Err(Error::InconsistentSeries { .. })
        ));
    }

    #[test]
    fn cylinder_series_of_conjugated_specs_agree_termwise() {
        let spec = fixtures::genus2_reference();
        let rotated = spec
            .conjugated(&fixtures::sphere_rotation(c(0.3, 0.4)))
            .unwrap();
        let ctx_a = ZetaContext::prepare(&spec, 3).unwrap();
        let ctx_b = ZetaContext::prepare(&rotated, 3).unwrap();
        let a1 = Symbol::Cylinder("a1".parse().unwrap());
        let sa = zeta_series(&ctx_a, &a1, 3).unwrap();
        let sb = zeta_series(&ctx_b, &a1, 3).unwrap();
        assert_eq!(sa.depth(), 3);
        for n in 0..=3 {
            assert_eq!(sa.eigenvalue(n), sb.eigenvalue(n));
            assert!(
                (sa.coefficient(n) - sb.coefficient(n)).abs() < 1e-9,
                "n={n}: {} vs {}",
                sa.coefficient(n),
                sb.coefficient(n)
            );
        }
        // and the unit series short-circuits to the exact multiplicities
        let unit = zeta_series(&ctx_a, &Symbol::Unit, 3).unwrap();
        for n in 0..=3 {
            assert_eq!(unit.coefficient(n), multiplicity(2, n) as f64);
        }
    }

    #[test]
    fn recovery_round_trips_the_measure() {
        let spec = fixtures::genus2_reference();
        let ctx = ZetaContext::prepare(&spec, 3).unwrap();
        let table = recovery_table(&ctx, 3).unwrap();
        let recovered = recover_measures(&table).unwrap();
        assert!(recovered.estimate().is_none());
        for n in 1..=3 {
            let want = ctx.measure().level_masses(n).unwrap();
            let got = recovered.level_masses(n).unwrap();
            for (i, (w, g_)) in want.iter().zip(got).enumerate() {
                assert!(
                    (w - g_).abs() <= 1e-8 * w,
                    "level {n} index {i}: {w} vs {g_}"
                );
            }
        }
    }

    #[test]
    fn tampered_tables_are_rejected() {
        let spec = fixtures::genus2_reference();
        let ctx = ZetaContext::prepare(&spec, 3).unwrap();
        let table = recovery_table(&ctx, 3).unwrap();

        // breaking one deep coefficient breaks additivity
        let mut rows = table.rows().to_vec();
        let last = rows.len() - 1;
        rows[last].1 *= 1.5;
        let bad = CoefficientTable::new(2, 3, None, rows).unwrap();
        assert!(matches!(
            recover_measures(&bad),
            Err(Error::InconsistentTable { .. })
        ));

        // a negative level-0 coefficient is rejected immediately
        let mut rows = table.rows().to_vec();
        rows[0].1 = -rows[0].1;
        let bad = CoefficientTable::new(2, 3, None, rows).unwrap();
        assert!(matches!(
            recover_measures(&bad),
            Err(Error::InconsistentTable { .. })
        ));

        // rows out of canonical order never make a table
        let mut rows = table.rows().to_vec();
        rows.swap(0, 1);
        assert!(matches!(
            CoefficientTable::new(2, 3, None, rows),
            Err(Error::InconsistentTable { .. })
        ));
    }

    #[test]
    fn coefficient_files_round_trip_byte_identically() {
        let spec = fixtures::genus2_reference();
        let ctx = ZetaContext::prepare(&spec, 2).unwrap();
        let table = recovery_table(&ctx, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coeffs.csv");
        write_coefficients(&path, &table).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();

        let back = read_coefficients(&path, Some(ctx.spec_hash())).unwrap();
        assert_eq!(back.rank(), 2);
        assert_eq!(back.depth(), 2);
        for ((w1, c1), (w2, c2)) in table.rows().iter().zip(back.rows()) {
            assert_eq!(w1, w2);
            assert_eq!(c1.to_bits(), c2.to_bits());
        }

        write_coefficients(&path, &back).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);

        assert!(matches!(
            read_coefficients(&path, Some("0000deadbeef")),
            Err(Error::CacheMismatch { .. })
        ));
    }

    #[test]
    fn conjugate_presentations_compare_equal() {
        let spec = fixtures::genus2_reference();
        let rotated = spec
            .conjugated(&fixtures::sphere_rotation(c(0.3, 0.4)))
            .unwrap();
        let report = compare_triples(&spec, &rotated, 3, 1e-9).unwrap();
        assert_eq!(report.verdict, Verdict::MeasureEqual);
        assert_eq!((report.genus_a, report.genus_b), (2, 2));
        assert!(report.witness.is_none());
        assert!(report.max_discrepancy.unwrap() <= 1e-9);

        let mirrored = spec.entrywise_conj();
        let report = compare_triples(&spec, &mirrored, 3, 1e-9).unwrap();
        assert_eq!(report.verdict, Verdict::MeasureEqual);
    }

    #[test]
    fn perturbed_radius_is_detected_with_a_short_witness() {
        let a = fixtures::genus2_reference();
        let b = fixtures::genus2_radius_perturbed();
        let report = compare_triples(&a, &b, 3, 1e-9).unwrap();
        assert_eq!(report.verdict, Verdict::MeasureDifferent);
        let witness = report.witness.clone().unwrap();
        assert_eq!(witness.len(), 1, "witness {witness} should be a letter");
        // the verdict and witness do not depend on the argument order
        let swapped = compare_triples(&b, &a, 3, 1e-9).unwrap();
        assert_eq!(swapped.verdict, Verdict::MeasureDifferent);
        assert_eq!(swapped.witness.unwrap(), witness);
    }

    #[test]
    fn different_ranks_are_a_genus_mismatch() {
        let a = fixtures::genus2_reference();
        let b = fixtures::genus3_reference();
        let report = compare_triples(&a, &b, 2, 1e-9).unwrap();
        assert_eq!(report.verdict, Verdict::GenusMismatch);
        assert_eq!((report.genus_a, report.genus_b), (2, 3));
        assert!(report.max_discrepancy.is_none());
        assert_eq!(report.verdict.to_string(), "GENUS-MISMATCH");
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [
            ClosedFormVariant::MultiplicityExact,
            ClosedFormVariant::GeometricFromLevelOne,
        ] {
            assert_eq!(v.to_string().parse::<ClosedFormVariant>().unwrap(), v);
        }
        assert!("exact".parse::<ClosedFormVariant>().is_err());
        assert_eq!(Verdict::MeasureEqual.to_string(), "MEASURE-EQUAL");
        assert_eq!(Verdict::MeasureDifferent.to_string(), "MEASURE-DIFFERENT");
    }
}

//! Moebius maps on the Riemann sphere, Schottky group specs and the
//! isometric-disk checks.
//!
//! Every `MoebiusMap` is stored with determinant normalized to 1 (up to the
//! projective sign), so the spherical operator norm of the derivative has the
//! closed form
//!
//! ```text
//! |m'(z)|_sph = (1 + |z|^2) / (|az+b|^2 + |cz+d|^2),     |m'(inf)|_sph = 1/(|a|^2 + |c|^2)
//! ```
//!
//! which is finite and positive everywhere, treats `inf` as a regular point,
//! and is exactly 1 for maps of the form [[a, b], [-conj(b), conj(a)]].

use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::freegroup::{Letter, Word};
use crate::{Error, Result};

const DET_FLOOR: f64 = 1e-12;
const LOXODROMY_TOL: f64 = 1e-9;

/// A point of the Riemann sphere in the two standard charts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpherePoint {
    Finite(Complex64),
    Infinity,
}

impl SpherePoint {
    pub fn finite(re: f64, im: f64) -> Self {
        SpherePoint::Finite(Complex64::new(re, im))
    }

    pub fn conj(&self) -> Self {
        match self {
            SpherePoint::Finite(z) => SpherePoint::Finite(z.conj()),
            SpherePoint::Infinity => SpherePoint::Infinity,
        }
    }
}

impl fmt::Display for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpherePoint::Finite(z) => write!(f, "{}{:+}i", z.re, z.im),
            SpherePoint::Infinity => write!(f, "inf"),
        }
    }
}

/// Chordal distance on the sphere of diameter 2.
pub fn spherical_distance(p: SpherePoint, q: SpherePoint) -> f64 {
    match (p, q) {
        (SpherePoint::Finite(z), SpherePoint::Finite(w)) => {
            2.0 * (z - w).norm() / ((1.0 + z.norm_sqr()) * (1.0 + w.norm_sqr())).sqrt()
        }
        (SpherePoint::Finite(z), SpherePoint::Infinity)
        | (SpherePoint::Infinity, SpherePoint::Finite(z)) => {
            2.0 / (1.0 + z.norm_sqr()).sqrt()
        }
        (SpherePoint::Infinity, SpherePoint::Infinity) => 0.0,
    }
}

/// Fractional-linear map with determinant normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoebiusMap {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl MoebiusMap {
    /// Builds the map from arbitrary matrix entries, rejecting a numerically
    /// singular matrix and rescaling to determinant 1.
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Result<Self> {
        let det = a * d - b * c;
        let scale = a.norm().max(b.norm()).max(c.norm()).max(d.norm());
        if det.norm() <= DET_FLOOR * scale * scale {
            return Err(Error::SingularMatrix {
                det_abs: det.norm(),
            });
        }
        let s = det.sqrt();
        Ok(Self {
            a: a / s,
            b: b / s,
            c: c / s,
            d: d / s,
        })
    }

    pub fn from_reals(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::new(
            Complex64::new(a, 0.0),
            Complex64::new(b, 0.0),
            Complex64::new(c, 0.0),
            Complex64::new(d, 0.0),
        )
    }

    pub fn identity() -> Self {
        Self {
            a: Complex64::new(1.0, 0.0),
            b: Complex64::new(0.0, 0.0),
            c: Complex64::new(0.0, 0.0),
            d: Complex64::new(1.0, 0.0),
        }
    }

    /// Inverse in the determinant-1 form.
    pub fn inverse(&self) -> Self {
        Self {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
    }

    /// Entrywise complex conjugate; conjugates the action by z -> conj(z).
    pub fn entrywise_conj(&self) -> Self {
        Self {
            a: self.a.conj(),
            b: self.b.conj(),
            c: self.c.conj(),
            d: self.d.conj(),
        }
    }

    pub fn apply(&self, p: SpherePoint) -> SpherePoint {
        match p {
            SpherePoint::Finite(z) => {
                let den = self.c * z + self.d;
                let num = self.a * z + self.b;
                if den.norm() <= f64::MIN_POSITIVE.sqrt() * num.norm().max(1.0) {
                    SpherePoint::Infinity
                } else {
                    SpherePoint::Finite(num / den)
                }
            }
            SpherePoint::Infinity => {
                if self.c.norm() == 0.0 {
                    SpherePoint::Infinity
                } else {
                    SpherePoint::Finite(self.a / self.c)
                }
            }
        }
    }

    /// Spherical operator norm of the derivative at `p`; see module notes.
    pub fn spherical_derivative(&self, p: SpherePoint) -> f64 {
        match p {
            SpherePoint::Finite(z) => {
                let num = 1.0 + z.norm_sqr();
                let den = (self.a * z + self.b).norm_sqr() + (self.c * z + self.d).norm_sqr();
                num / den
            }
            SpherePoint::Infinity => 1.0 / (self.a.norm_sqr() + self.c.norm_sqr()),
        }
    }

    /// Trace squared; well defined on the projective class.
    pub fn trace_squared(&self) -> Complex64 {
        let t = self.a + self.d;
        t * t
    }

    /// Distance of trace^2 from the segment [0, 4] of the real axis, the
    /// locus of elliptic and parabolic classes. Positive distance beyond
    /// tolerance certifies a loxodromic map.
    pub fn loxodromy_margin(&self) -> f64 {
        let t2 = self.trace_squared();
        let x = t2.re.clamp(0.0, 4.0);
        (t2 - Complex64::new(x, 0.0)).norm()
    }

    pub fn is_loxodromic(&self) -> bool {
        self.loxodromy_margin() > LOXODROMY_TOL
    }

    fn is_identity(&self) -> bool {
        self.b.norm() < 1e-14 && self.c.norm() < 1e-14 && (self.a - self.d).norm() < 1e-14
    }

    /// Fixed points; for a loxodromic map the attracting point comes first.
    pub fn fixed_points(&self) -> Result<FixedPoints> {
        if self.is_identity() {
            return Err(Error::IdentityMap);
        }
        // fixed points solve c z^2 + (d-a) z - b = 0; discriminant = tr^2 - 4
        let disc = self.trace_squared() - Complex64::new(4.0, 0.0);
        let parabolic = disc.norm() <= LOXODROMY_TOL;
        if self.c.norm() == 0.0 {
            // affine: fixes inf; the finite fixed point exists unless a = d
            if (self.a - self.d).norm() < 1e-14 {
                return Ok(FixedPoints::Parabolic(SpherePoint::Infinity));
            }
            let z = self.b / (self.d - self.a);
            if parabolic {
                return Ok(FixedPoints::Parabolic(SpherePoint::Infinity));
            }
            // derivative at inf is 1/|a|^2 in the far chart
            let inf_attracting = self.a.norm() > 1.0;
            let (first, second) = if inf_attracting {
                (SpherePoint::Infinity, SpherePoint::Finite(z))
            } else {
                (SpherePoint::Finite(z), SpherePoint::Infinity)
            };
            return Ok(FixedPoints::Pair { first, second });
        }
        let two_c = 2.0 * self.c;
        if parabolic {
            let z = (self.a - self.d) / two_c;
            return Ok(FixedPoints::Parabolic(SpherePoint::Finite(z)));
        }
        let root = disc.sqrt();
        let z1 = (self.a - self.d + root) / two_c;
        let z2 = (self.a - self.d - root) / two_c;
        let d1 = self.spherical_derivative(SpherePoint::Finite(z1));
        let (first, second) = if d1 < 1.0 { (z1, z2) } else { (z2, z1) };
        Ok(FixedPoints::Pair {
            first: SpherePoint::Finite(first),
            second: SpherePoint::Finite(second),
        })
    }
}

impl Mul for MoebiusMap {
    type Output = MoebiusMap;

    fn mul(self, rhs: MoebiusMap) -> MoebiusMap {
        // plain matrix product: both factors have determinant one, so the
        // product does too. No renormalization — once entries grow large the
        // floating-point determinant is dominated by cancellation error, and
        // dividing by it would corrupt a perfectly good matrix.
        MoebiusMap {
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixedPoints {
    /// Two isolated fixed points; attracting first when the map is loxodromic.
    Pair {
        first: SpherePoint,
        second: SpherePoint,
    },
    /// Within tolerance of a parabolic class: one fixed point.
    Parabolic(SpherePoint),
}

/// Round disk in the plane chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Complex64,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Complex64, radius: f64) -> Self {
        Self { center, radius }
    }

    /// Signed clearance of `z` outside the circle (negative inside).
    pub fn exterior_margin(&self, z: Complex64) -> f64 {
        (z - self.center).norm() - self.radius
    }

    /// Signed margin by which `other` sits inside `self`.
    pub fn containment_margin(&self, other: &Circle) -> f64 {
        self.radius - ((other.center - self.center).norm() + other.radius)
    }

    /// Signed separation between two closed disks.
    pub fn disjointness_margin(&self, other: &Circle) -> f64 {
        (other.center - self.center).norm() - (self.radius + other.radius)
    }
}

/// Exact image of a circle under a Moebius map.
///
/// Writing m(z) = a/c + B/(z - p) with pole p = -d/c and B = -1/c^2 (det 1),
/// inversion sends the circle of center s, radius r (translated by -p) to the
/// circle of center conj(s)/(|s|^2 - r^2) and radius r/||s|^2 - r^2|. A circle
/// through the pole maps to a line, which is reported as an error since an
/// unbounded image can never sit inside a disk.
pub fn image_of_circle(m: &MoebiusMap, circle: &Circle) -> Result<Circle> {
    if m.c.norm() == 0.0 {
        let scale = (m.a / m.d).norm();
        let center = (m.a * circle.center + m.b) / m.d;
        return Ok(Circle::new(center, scale * circle.radius));
    }
    let pole = -m.d / m.c;
    let s = circle.center - pole;
    let denom = s.norm_sqr() - circle.radius * circle.radius;
    if denom.abs() <= 1e-12 * (s.norm_sqr() + circle.radius * circle.radius) {
        return Err(Error::UnboundedCircleImage);
    }
    let inv_center = s.conj() / denom;
    let inv_radius = circle.radius / denom.abs();
    let big_a = m.a / m.c;
    let big_b = -1.0 / (m.c * m.c);
    Ok(Circle::new(
        big_a + big_b * inv_center,
        big_b.norm() * inv_radius,
    ))
}

// ---------------------------------------------------------------------------
// group specs
// ---------------------------------------------------------------------------

/// A marked Schottky group: `rank` free generators acting on the sphere, a
/// basepoint in the ordinary set, and optionally one isometric disk per
/// letter in canonical letter order (disk k for generator k+1, disk g+k for
/// its inverse). Generator k maps the exterior of the inverse letter's disk
/// into the interior of its own disk.
#[derive(Debug, Clone)]
pub struct SchottkyGroupSpec {
    rank: usize,
    raw_generators: Vec<[Complex64; 4]>,
    generators: Vec<MoebiusMap>,
    basepoint: SpherePoint,
    disks: Option<Vec<Circle>>,
}

impl SchottkyGroupSpec {
    pub fn new(
        generators_raw: Vec<[Complex64; 4]>,
        basepoint: SpherePoint,
        disks: Option<Vec<Circle>>,
    ) -> Result<Self> {
        let rank = generators_raw.len();
        if rank < 2 {
            return Err(Error::InvalidSpec {
                reason: format!("rank {rank} < 2"),
            });
        }
        let generators = generators_raw
            .iter()
            .map(|m| MoebiusMap::new(m[0], m[1], m[2], m[3]))
            .collect::<Result<Vec<_>>>()?;
        if let Some(ds) = &disks {
            if ds.len() != 2 * rank {
                return Err(Error::InvalidSpec {
                    reason: format!("expected {} disks, got {}", 2 * rank, ds.len()),
                });
            }
            if ds.iter().any(|d| !(d.radius > 0.0)) {
                return Err(Error::InvalidSpec {
                    reason: "disk radius must be positive".into(),
                });
            }
        }
        Ok(Self {
            rank,
            raw_generators: generators_raw,
            generators,
            basepoint,
            disks,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn basepoint(&self) -> SpherePoint {
        self.basepoint
    }

    pub fn generators(&self) -> &[MoebiusMap] {
        &self.generators
    }

    pub fn disks(&self) -> Option<&[Circle]> {
        self.disks.as_deref()
    }

    /// Normalized generator matrix acting for a letter.
    pub fn letter_map(&self, l: Letter) -> MoebiusMap {
        let m = self.generators[l.index() - 1];
        if l.is_inverted() {
            m.inverse()
        } else {
            m
        }
    }

    /// Disk attached to a letter, when disks are present.
    pub fn letter_disk(&self, l: Letter) -> Option<&Circle> {
        self.disks
            .as_ref()
            .map(|ds| &ds[l.rank_in(self.rank)])
    }

    /// Matrix of the word map, letters composed left to right:
    /// rho(w1..wn) = rho(w1) .. rho(wn).
    pub fn evaluate_word(&self, w: &Word) -> MoebiusMap {
        let mut m = MoebiusMap::identity();
        for &l in w.letters() {
            m = m * self.letter_map(l);
        }
        m
    }

    /// Center of the cylinder of `w`: the word map applied to the basepoint.
    pub fn cylinder_center(&self, w: &Word) -> SpherePoint {
        self.evaluate_word(w).apply(self.basepoint)
    }

    /// Spherical distances between consecutive nested cylinder centers of the
    /// prefixes of `w`; a quick convergence diagnostic for the end coding.
    pub fn center_gaps(&self, w: &Word) -> Vec<f64> {
        (1..w.len())
            .map(|k| {
                spherical_distance(
                    self.cylinder_center(&w.prefix(k)),
                    self.cylinder_center(&w.prefix(k + 1)),
                )
            })
            .collect()
    }

    /// SHA-256 of the canonical JSON serialization; keys measure caches.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        let digest = h.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// Conjugated spec U . self . U^{-1} with transported basepoint and disks.
    pub fn conjugated(&self, u: &MoebiusMap) -> Result<SchottkyGroupSpec> {
        let uinv = u.inverse();
        let gens: Vec<[Complex64; 4]> = self
            .generators
            .iter()
            .map(|m| {
                let c = *u * *m * uinv;
                [c.a, c.b, c.c, c.d]
            })
            .collect();
        let disks = match &self.disks {
            Some(ds) => Some(
                ds.iter()
                    .map(|d| image_of_circle(u, d))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        SchottkyGroupSpec::new(gens, u.apply(self.basepoint), disks)
    }

    /// Entrywise complex conjugate of the whole spec; realizes the
    /// orientation-reversing symmetry z -> conj(z).
    pub fn entrywise_conj(&self) -> SchottkyGroupSpec {
        let gens = self
            .raw_generators
            .iter()
            .map(|m| [m[0].conj(), m[1].conj(), m[2].conj(), m[3].conj()])
            .collect();
        let disks = self.disks.as_ref().map(|ds| {
            ds.iter()
                .map(|d| Circle::new(d.center.conj(), d.radius))
                .collect()
        });
        SchottkyGroupSpec::new(gens, self.basepoint.conj(), disks)
            .expect("conjugate of a valid spec is valid")
    }
}

// ---------------------------------------------------------------------------
// serde wire format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone)]
struct RawSpec {
    rank: usize,
    generators: Vec<[[f64; 2]; 4]>,
    basepoint: RawPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    disks: Option<Vec<RawDisk>>,
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(untagged)]
enum RawPoint {
    Finite([f64; 2]),
    Marker(String),
}

#[derive(Serialize, Deserialize, Clone)]
struct RawDisk {
    center: [f64; 2],
    radius: f64,
}

impl TryFrom<RawSpec> for SchottkyGroupSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        if raw.generators.len() != raw.rank {
            return Err(Error::InvalidSpec {
                reason: format!(
                    "rank {} but {} generators",
                    raw.rank,
                    raw.generators.len()
                ),
            });
        }
        let gens = raw
            .generators
            .iter()
            .map(|q| {
                [
                    Complex64::new(q[0][0], q[0][1]),
                    Complex64::new(q[1][0], q[1][1]),
                    Complex64::new(q[2][0], q[2][1]),
                    Complex64::new(q[3][0], q[3][1]),
                ]
            })
            .collect();
        let basepoint = match raw.basepoint {
            RawPoint::Finite(p) => SpherePoint::finite(p[0], p[1]),
            RawPoint::Marker(s) if s == "inf" => SpherePoint::Infinity,
            RawPoint::Marker(s) => {
                return Err(Error::InvalidSpec {
                    reason: format!("unknown basepoint marker {s:?}"),
                })
            }
        };
        let disks = raw.disks.map(|ds| {
            ds.iter()
                .map(|d| Circle::new(Complex64::new(d.center[0], d.center[1]), d.radius))
                .collect()
        });
        SchottkyGroupSpec::new(gens, basepoint, disks)
    }
}

impl From<&SchottkyGroupSpec> for RawSpec {
    fn from(spec: &SchottkyGroupSpec) -> Self {
        RawSpec {
            rank: spec.rank,
            generators: spec
                .raw_generators
                .iter()
                .map(|m| {
                    [
                        [m[0].re, m[0].im],
                        [m[1].re, m[1].im],
                        [m[2].re, m[2].im],
                        [m[3].re, m[3].im],
                    ]
                })
                .collect(),
            basepoint: match spec.basepoint {
                SpherePoint::Finite(z) => RawPoint::Finite([z.re, z.im]),
                SpherePoint::Infinity => RawPoint::Marker("inf".into()),
            },
            disks: spec.disks.as_ref().map(|ds| {
                ds.iter()
                    .map(|d| RawDisk {
                        center: [d.center.re, d.center.im],
                        radius: d.radius,
                    })
                    .collect()
            }),
        }
    }
}

impl Serialize for SchottkyGroupSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for SchottkyGroupSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSpec::deserialize(d)?;
        SchottkyGroupSpec::try_from(raw).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Schottky condition report
// ---------------------------------------------------------------------------

/// Margins from the numeric verification of the Schottky disk conditions.
/// All margins are signed; the configuration passes when every margin clears
/// `-1e-9` and every generator is loxodromic.
#[derive(Debug, Clone)]
pub struct SchottkyReport {
    /// Per generator: distance of trace^2 from the elliptic segment.
    pub loxodromy: Vec<f64>,
    /// Per unordered disk pair (i, j, margin).
    pub disjointness: Vec<(usize, usize, f64)>,
    /// Per letter: margin by which the image of the paired disk boundary
    /// sits inside this letter's disk.
    pub pairing: Vec<(String, f64)>,
    /// Whether the basepoint lies outside every disk.
    pub basepoint_exterior: bool,
    pub failures: Vec<String>,
    pub pass: bool,
}

/// Verifies the classical disk picture: pairwise disjoint closed disks, one
/// per letter, with each generator mapping the exterior of its inverse
/// letter's disk into the interior of its own.
pub fn check_schottky(spec: &SchottkyGroupSpec) -> Result<SchottkyReport> {
    let disks = spec.disks().ok_or(Error::MissingDisks)?;
    let g = spec.rank();
    let mut failures = Vec::new();

    let mut loxodromy = Vec::with_capacity(g);
    for (k, m) in spec.generators().iter().enumerate() {
        let margin = m.loxodromy_margin();
        if margin <= LOXODROMY_TOL {
            failures.push(format!("generator {} not loxodromic", k + 1));
        }
        loxodromy.push(margin);
    }

    let mut disjointness = Vec::new();
    for i in 0..2 * g {
        for j in i + 1..2 * g {
            let margin = disks[i].disjointness_margin(&disks[j]);
            if margin <= -1e-9 {
                failures.push(format!("disks {i} and {j} overlap"));
            }
            disjointness.push((i, j, margin));
        }
    }

    let mut pairing = Vec::new();
    for k in 0..g {
        let letter = Letter::new(k + 1, false).unwrap();
        for l in [letter, letter.inverse()] {
            let source = spec.letter_disk(l.inverse()).unwrap();
            let target = spec.letter_disk(l).unwrap();
            let label = format!("{l}");
            match image_of_circle(&spec.letter_map(l), source) {
                Ok(image) => {
                    let margin = target.containment_margin(&image);
                    if margin <= -1e-9 {
                        failures.push(format!("image of paired disk escapes disk of {l}"));
                    }
                    pairing.push((label, margin));
                }
                Err(_) => {
                    failures.push(format!("paired disk of {l} passes through the pole"));
                    pairing.push((label, f64::NEG_INFINITY));
                }
            }
        }
    }

    let basepoint_exterior = match spec.basepoint() {
        SpherePoint::Infinity => true,
        SpherePoint::Finite(z) => disks.iter().all(|d| d.exterior_margin(z) > 0.0),
    };
    if !basepoint_exterior {
        failures.push("basepoint lies inside an isometric disk".into());
    }

    let pass = failures.is_empty();
    Ok(SchottkyReport {
        loxodromy,
        disjointness,
        pairing,
        basepoint_exterior,
        failures,
        pass,
    })
}

//! Canned group specs used by the test suite and handy for CLI experiments.
//!
//! The reference spec is a classical genus-2 group on the real line: four
//! unit disks centered at -6, -2, 2, 6, paired by the maps
//!
//! ```text
//! a1: z -> 2 - 0.5/(z + 2)        a2: z -> 6 - 0.5/(z + 6)
//! ```
//!
//! Each map carries the exterior of the disk around its pole onto a disk of
//! radius 0.5 concentric with the partner, so every pairing margin is 0.5.
//! Both maps preserve the upper half plane and the whole configuration is
//! mirror symmetric under z -> -z, which swaps each generator with its
//! inverse; tests use this to predict equal masses for mirror-image words.

use num_complex::Complex64;

use crate::moebius::{Circle, MoebiusMap, SchottkyGroupSpec, SpherePoint};

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Real circle-pairing map `z -> target + k/(z - source)` with k < 0 chosen
/// as -r^2 so that the circle |z - source| = r maps onto |z - target| = r.
fn pairing_matrix(source: f64, target: f64, k: f64) -> [Complex64; 4] {
    // (target z - source*target - k) / (z - source), determinant -k
    [re(target), re(-source * target - k), re(1.0), re(-source)]
}

fn four_unit_disks(b_center: f64) -> Vec<Circle> {
    vec![
        Circle::new(re(2.0), 1.0),
        Circle::new(re(b_center), 1.0),
        Circle::new(re(-2.0), 1.0),
        Circle::new(re(-b_center), 1.0),
    ]
}

/// The genus-2 reference group described in the module notes.
pub fn genus2_reference() -> SchottkyGroupSpec {
    SchottkyGroupSpec::new(
        vec![
            pairing_matrix(-2.0, 2.0, -0.5),
            pairing_matrix(-6.0, 6.0, -0.5),
        ],
        SpherePoint::finite(0.0, 0.0),
        Some(four_unit_disks(6.0)),
    )
    .expect("reference spec is valid")
}

/// Same shape with the second disk pair pushed out to +-20; the limit set
/// thins out and the dimension drops.
pub fn genus2_wide() -> SchottkyGroupSpec {
    SchottkyGroupSpec::new(
        vec![
            pairing_matrix(-2.0, 2.0, -0.5),
            pairing_matrix(-20.0, 20.0, -0.5),
        ],
        SpherePoint::finite(0.0, 0.0),
        Some(four_unit_disks(20.0)),
    )
    .expect("wide spec is valid")
}

/// Reference spec with the second generator's multiplier changed so it pairs
/// circles of radius 0.5 instead of ~0.7; a genuinely different surface with
/// the same combinatorics.
pub fn genus2_radius_perturbed() -> SchottkyGroupSpec {
    SchottkyGroupSpec::new(
        vec![
            pairing_matrix(-2.0, 2.0, -0.5),
            pairing_matrix(-6.0, 6.0, -0.25),
        ],
        SpherePoint::finite(0.0, 0.0),
        Some(four_unit_disks(6.0)),
    )
    .expect("perturbed spec is valid")
}

/// Genus-3 sibling: six unit disks at -10, -6, -2, 2, 6, 10.
pub fn genus3_reference() -> SchottkyGroupSpec {
    SchottkyGroupSpec::new(
        vec![
            pairing_matrix(-2.0, 2.0, -0.5),
            pairing_matrix(-6.0, 6.0, -0.5),
            pairing_matrix(-10.0, 10.0, -0.5),
        ],
        SpherePoint::finite(0.0, 0.0),
        Some(vec![
            Circle::new(re(2.0), 1.0),
            Circle::new(re(6.0), 1.0),
            Circle::new(re(10.0), 1.0),
            Circle::new(re(-2.0), 1.0),
            Circle::new(re(-6.0), 1.0),
            Circle::new(re(-10.0), 1.0),
        ]),
    )
    .expect("genus-3 spec is valid")
}

/// A rotation of the sphere (unit-derivative everywhere) used to test
/// conjugation invariance: [[1, q], [-conj q, 1]] normalized.
pub fn sphere_rotation(q: Complex64) -> MoebiusMap {
    MoebiusMap::new(re(1.0), q, -q.conj(), re(1.0)).expect("rotation matrix is invertible")
}

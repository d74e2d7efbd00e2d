//! The single-qubit Clifford group and its compilation into √X pulses and
//! virtual Z rotations.
//!
//! Every element is written as Z(φ₁)·√X·Z(φ₂)·√X·Z(φ₃) (rightmost applied
//! first) with φᵢ multiples of π/2, so each Clifford costs exactly two
//! physical pulses. A virtual Z(φ) is realized by shifting the phase of all
//! later pulses by −φ.

use std::sync::OnceLock;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub type U2 = Matrix2<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Rotation about Z by `k·π/2`: diag(e^{−ikπ/4}, e^{ikπ/4}).
pub fn z_quarter(k: usize) -> U2 {
    let phi = (k % 4) as f64 * std::f64::consts::FRAC_PI_2;
    U2::new(Complex64::from_polar(1.0, -phi / 2.0), c(0.0, 0.0), c(0.0, 0.0), Complex64::from_polar(1.0, phi / 2.0))
}

/// √X = R_x(π/2).
pub fn sqrt_x() -> U2 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    U2::new(c(s, 0.0), c(0.0, -s), c(0.0, -s), c(s, 0.0))
}

/// |tr(A†B)|/2: equals 1 exactly when A and B agree up to global phase.
pub fn phase_insensitive_overlap(a: &U2, b: &U2) -> f64 {
    (a.adjoint() * b).trace().norm() / 2.0
}

/// True when `a` and `b` are equal up to a global phase, within `tol`.
pub fn equal_up_to_phase(a: &U2, b: &U2, tol: f64) -> bool {
    // Align the phase on the largest entry of b, then compare entrywise.
    let (mut idx, mut best) = ((0, 0), 0.0);
    for i in 0..2 {
        for j in 0..2 {
            if b[(i, j)].norm() > best {
                best = b[(i, j)].norm();
                idx = (i, j);
            }
        }
    }
    if best == 0.0 || a[idx].norm() == 0.0 {
        return false;
    }
    let phase = a[idx] / b[idx];
    let phase = phase / phase.norm();
    (a - b * phase).iter().all(|z| z.norm() <= tol)
}

/// One group element with its Z·√X·Z·√X·Z angles (in quarter turns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CliffordElement {
    pub index: usize,
    /// (φ₁, φ₂, φ₃) with φ₃ applied first.
    pub quarters: [usize; 3],
}

impl CliffordElement {
    /// Product of the decomposition.
    pub fn unitary(&self) -> U2 {
        let [a, b, c3] = self.quarters;
        z_quarter(a) * sqrt_x() * z_quarter(b) * sqrt_x() * z_quarter(c3)
    }
}

/// The 24 Cliffords with a multiplication table.
#[derive(Debug, Clone)]
pub struct CliffordGroup {
    pub elements: Vec<CliffordElement>,
    /// `table[a][b]` = index of U_a·U_b.
    pub table: Vec<Vec<usize>>,
    pub inverse: Vec<usize>,
}

const TOL: f64 = 1e-10;

impl CliffordGroup {
    /// Enumerates all 64 angle triples and keeps the first representative of
    /// each distinct unitary (up to phase), which yields the 24 elements.
    /// Index 0 is the identity.
    fn build() -> Self {
        let mut elements: Vec<CliffordElement> = Vec::new();
        let mut mats: Vec<U2> = Vec::new();
        // Identity first: Z(1)·√X·Z(2)·√X·Z(1) ∝ I.
        let order = std::iter::once([1, 2, 1]).chain((0..64).map(|n| [n / 16, n / 4 % 4, n % 4]));
        for q in order {
            let e = CliffordElement { index: elements.len(), quarters: q };
            let u = e.unitary();
            if !mats.iter().any(|m| equal_up_to_phase(m, &u, TOL)) {
                mats.push(u);
                elements.push(e);
            }
        }
        let find = |u: &U2| mats.iter().position(|m| equal_up_to_phase(m, u, 1e-9));
        let n = mats.len();
        let table: Vec<Vec<usize>> = (0..n)
            .map(|a| (0..n).map(|b| find(&(mats[a] * mats[b])).expect("group is closed")).collect())
            .collect();
        let inverse = (0..n).map(|a| (0..n).find(|&b| table[a][b] == 0).expect("inverse exists")).collect();
        Self { elements, table, inverse }
    }

    pub fn get() -> &'static CliffordGroup {
        static GROUP: OnceLock<CliffordGroup> = OnceLock::new();
        GROUP.get_or_init(Self::build)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Index of the element equal to `u` up to phase.
    pub fn find(&self, u: &U2) -> Option<usize> {
        self.elements.iter().position(|e| equal_up_to_phase(&e.unitary(), u, 1e-9))
    }
}

/// One physical √X pulse played with carrier phase `quarters·π/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseStep {
    pub phase_quarters: usize,
}

/// A random Clifford sequence with its recovery element and compiled pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledSequence {
    pub cliffords: Vec<usize>,
    pub recovery: usize,
    pub pulses: Vec<PulseStep>,
    /// Residual frame phase after the last pulse (quarter turns); it has no
    /// effect on a Z-basis measurement.
    pub final_frame: usize,
}

impl CompiledSequence {
    /// Unitary implemented by the pulses, followed by the residual frame
    /// rotation, in the lab frame.
    pub fn unitary(&self) -> U2 {
        // A pulse played with carrier phase θ implements Z(θ)·√X·Z(−θ).
        let mut u = U2::identity();
        for p in &self.pulses {
            let k = p.phase_quarters % 4;
            u = z_quarter(k) * sqrt_x() * z_quarter((4 - k) % 4) * u;
        }
        z_quarter((4 - self.final_frame % 4) % 4) * u
    }

    /// Product of the logical Cliffords including the recovery.
    pub fn logical_unitary(&self) -> U2 {
        let g = CliffordGroup::get();
        let mut u = U2::identity();
        for &k in self.cliffords.iter().chain(std::iter::once(&self.recovery)) {
            u = g.elements[k].unitary() * u;
        }
        u
    }
}

/// Compiles a list of Cliffords (applied in order) into √X pulses with
/// accumulated virtual-Z phases.
///
/// Z(φ)·√X·… is tracked by keeping a frame phase θ: a physical Z(φ) becomes
/// θ ← θ − φ, and every √X is played with carrier phase θ.
pub fn compile(cliffords: &[usize], recovery: usize) -> CompiledSequence {
    let g = CliffordGroup::get();
    let mut frame = 0usize;
    let mut pulses = Vec::with_capacity(2 * (cliffords.len() + 1));
    for &k in cliffords.iter().chain(std::iter::once(&recovery)) {
        let [a, b, c3] = g.elements[k].quarters;
        frame = (frame + 4 - c3 % 4) % 4;
        pulses.push(PulseStep { phase_quarters: frame });
        frame = (frame + 4 - b % 4) % 4;
        pulses.push(PulseStep { phase_quarters: frame });
        frame = (frame + 4 - a % 4) % 4;
    }
    CompiledSequence { cliffords: cliffords.to_vec(), recovery, pulses, final_frame: frame }
}

/// `m` uniformly random Cliffords followed by the recovery element that
/// returns the sequence to the identity.
pub fn compile_clifford_sequence(m: usize, rng: &mut impl Rng) -> CompiledSequence {
    let g = CliffordGroup::get();
    let cliffords: Vec<usize> = (0..m).map(|_| rng.random_range(0..g.len())).collect();
    let mut total = 0;
    for &k in &cliffords {
        total = g.table[k][total];
    }
    compile(&cliffords, g.inverse[total])
}

/// Mean number of √X pulses per compiled Clifford.
pub const SQRT_X_PER_CLIFFORD: f64 = 2.0;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn group_has_24_elements_and_identity_first() {
        let g = CliffordGroup::get();
        assert_eq!(g.len(), 24);
        assert!(equal_up_to_phase(&g.elements[0].unitary(), &U2::identity(), 1e-12));
    }

    #[test]
    fn closure_and_inverses() {
        let g = CliffordGroup::get();
        for a in 0..24 {
            assert_eq!(g.table[a][g.inverse[a]], 0);
            assert_eq!(g.table[g.inverse[a]][a], 0);
        }
    }

    #[test]
    fn identity_sequence_is_phase_only() {
        let s = compile(&[0], 0);
        assert!(equal_up_to_phase(&s.unitary(), &U2::identity(), 1e-12));
    }

    #[test]
    fn compiled_pulses_match_logical_product() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for m in [1, 2, 7, 30] {
            let s = compile_clifford_sequence(m, &mut rng);
            assert!(equal_up_to_phase(&s.logical_unitary(), &U2::identity(), 1e-9));
            assert!(equal_up_to_phase(&s.unitary(), &U2::identity(), 1e-9));
            assert_eq!(s.pulses.len(), 2 * (m + 1));
        }
    }
}

//! Density matrices and Lindblad superoperators on the joint qubit register.
//!
//! Superoperators act on column-major vectorized density matrices:
//! vec(AρB) = (Bᵀ ⊗ A) vec(ρ).

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::QubitParams;

pub type CMat = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Lindblad generator L such that d vec(ρ)/dt = L vec(ρ).
pub fn liouvillian(h: &CMat, jumps: &[CMat]) -> CMat {
    let d = h.nrows();
    let id = CMat::identity(d, d);
    let mi = Complex64::new(0.0, -1.0);
    let mut l = (id.kronecker(h) - h.transpose().kronecker(&id)) * mi;
    for c in jumps {
        let cdc = c.adjoint() * c;
        l += c.conjugate().kronecker(c);
        l -= (id.kronecker(&cdc) + cdc.transpose().kronecker(&id)) * Complex64::new(0.5, 0.0);
    }
    l
}

/// Lowering operator a on `d` levels.
pub fn lowering(d: usize) -> CMat {
    CMat::from_fn(d, d, |r, c| if c == r + 1 { Complex64::new((c as f64).sqrt(), 0.0) } else { ZERO })
}

/// Single-qubit Hamiltonian in a frame rotating at ω_01 − `detuning`:
/// Σ_n [n·detuning + α/2·n(n−1)]|n⟩⟨n| + ½(w* a† + w a), with w = Ω·s.
/// A baseband drive s ∝ e^{iνt} sits at frame + ν in the lab, so it is
/// resonant with the 0–1 transition at ν = detuning.
pub fn qubit_hamiltonian(q: &QubitParams, detuning: f64, drive: Complex64) -> CMat {
    let d = q.levels;
    let a = lowering(d);
    let mut h = CMat::from_fn(d, d, |r, c| {
        if r == c {
            let n = r as f64;
            Complex64::new(n * detuning + 0.5 * q.alpha * n * (n - 1.0), 0.0)
        } else {
            ZERO
        }
    });
    if drive != ZERO {
        h += (a.adjoint() * drive.conj() + &a * drive) * Complex64::new(0.5, 0.0);
    }
    h
}

/// Collapse operators: ladder decay and thermal excitation per transition,
/// and pure dephasing √(2Γφ)·n.
pub fn qubit_jumps(q: &QubitParams) -> Vec<CMat> {
    let d = q.levels;
    let mut v = Vec::new();
    for l in 0..d - 1 {
        let (down, up) = q.transition_rates(l);
        if down > 0.0 {
            let mut m = CMat::zeros(d, d);
            m[(l, l + 1)] = Complex64::new(down.sqrt(), 0.0);
            v.push(m);
        }
        if up > 0.0 {
            let mut m = CMat::zeros(d, d);
            m[(l + 1, l)] = Complex64::new(up.sqrt(), 0.0);
            v.push(m);
        }
    }
    let gphi = q.gamma_phi();
    if gphi > 0.0 {
        v.push(CMat::from_fn(d, d, |r, c| {
            if r == c {
                Complex64::new((2.0 * gphi).sqrt() * r as f64, 0.0)
            } else {
                ZERO
            }
        }));
    }
    v
}

/// Propagator exp(L·t) of a superoperator generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Superop {
    /// Dimension of the Hilbert space it acts on.
    pub dim: usize,
    pub matrix: CMat,
}

impl Superop {
    pub fn propagator(generator: &CMat, t: f64) -> Self {
        let dim = (generator.nrows() as f64).sqrt().round() as usize;
        Self { dim, matrix: (generator * Complex64::new(t, 0.0)).exp() }
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, matrix: CMat::identity(dim * dim, dim * dim) }
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &Superop) -> Self {
        Self { dim: self.dim, matrix: &self.matrix * &first.matrix }
    }

    /// Unitary channel ρ → UρU†.
    pub fn unitary(u: &CMat) -> Self {
        Self { dim: u.nrows(), matrix: u.conjugate().kronecker(u) }
    }
}

/// Embeds a single-qubit operator into the joint space.
pub fn embed(op: &CMat, qubit: usize, dims: &[usize]) -> CMat {
    let pre: usize = dims[..qubit].iter().product();
    let post: usize = dims[qubit + 1..].iter().product();
    CMat::identity(pre, pre).kronecker(&op.kronecker(&CMat::identity(post, post)))
}

/// Joint density matrix of all qubits; qubit 0 is the most significant digit
/// of the joint index.
#[derive(Debug, Clone, PartialEq)]
pub struct Register {
    dims: Vec<usize>,
    rho: CMat,
}

impl Register {
    pub fn product(states: &[CMat]) -> Self {
        let dims: Vec<usize> = states.iter().map(|m| m.nrows()).collect();
        let mut rho = CMat::from_element(1, 1, ONE);
        for s in states {
            rho = rho.kronecker(s);
        }
        Self { dims, rho }
    }

    /// Diagonal product state from per-qubit populations.
    pub fn from_populations(pops: &[Vec<f64>]) -> Self {
        let states: Vec<CMat> = pops
            .iter()
            .map(|p| CMat::from_diagonal(&nalgebra::DVector::from_iterator(p.len(), p.iter().map(|&x| Complex64::new(x, 0.0)))))
            .collect();
        Self::product(&states)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rho(&self) -> &CMat {
        &self.rho
    }

    pub fn set_rho(&mut self, rho: CMat) {
        assert_eq!(rho.nrows(), self.rho.nrows());
        self.rho = rho;
    }

    fn stride(&self, q: usize) -> usize {
        self.dims[q + 1..].iter().product()
    }

    /// Joint indices whose digit for qubit `q` is zero.
    fn bases(&self, q: usize) -> Vec<usize> {
        let s = self.stride(q);
        let d = self.dims[q];
        (0..self.rho.nrows()).filter(|j| (j / s) % d == 0).collect()
    }

    pub fn apply_local(&mut self, q: usize, op: &Superop) {
        let d = self.dims[q];
        debug_assert_eq!(op.dim, d);
        if self.dims.len() == 1 {
            let v = CMat::from_column_slice(d * d, 1, self.rho.as_slice());
            let w = &op.matrix * v;
            self.rho = CMat::from_column_slice(d, d, w.as_slice());
            return;
        }
        let s = self.stride(q);
        let bases = self.bases(q);
        let mut v = vec![ZERO; d * d];
        for &b in &bases {
            for &bp in &bases {
                for a in 0..d {
                    for ap in 0..d {
                        v[a + d * ap] = self.rho[(b + a * s, bp + ap * s)];
                    }
                }
                for a in 0..d {
                    for ap in 0..d {
                        let row = a + d * ap;
                        let mut acc = ZERO;
                        for (k, x) in v.iter().enumerate() {
                            acc += op.matrix[(row, k)] * x;
                        }
                        self.rho[(b + a * s, bp + ap * s)] = acc;
                    }
                }
            }
        }
    }

    pub fn apply_joint(&mut self, op: &Superop) {
        let n = self.rho.nrows();
        let v = CMat::from_column_slice(n * n, 1, self.rho.as_slice());
        let w = &op.matrix * v;
        self.rho = CMat::from_column_slice(n, n, w.as_slice());
    }

    /// Reduced level populations of qubit `q`.
    pub fn populations(&self, q: usize) -> Vec<f64> {
        let s = self.stride(q);
        let d = self.dims[q];
        let mut p = vec![0.0; d];
        for j in 0..self.rho.nrows() {
            p[(j / s) % d] += self.rho[(j, j)].re;
        }
        p
    }

    /// Populations of every joint basis state.
    pub fn joint_populations(&self) -> Vec<f64> {
        (0..self.rho.nrows()).map(|j| self.rho[(j, j)].re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    /// Projects qubit `q` onto `level` and renormalizes. Returns the
    /// probability of that outcome.
    pub fn project(&mut self, q: usize, level: usize) -> f64 {
        let s = self.stride(q);
        let d = self.dims[q];
        let p = self.populations(q)[level];
        let n = self.rho.nrows();
        for r in 0..n {
            for c in 0..n {
                if (r / s) % d != level || (c / s) % d != level {
                    self.rho[(r, c)] = ZERO;
                }
            }
        }
        if p > 0.0 {
            self.rho /= Complex64::new(p, 0.0);
        }
        p
    }

    /// Replaces qubit `q` by the pure level `level`, keeping the reduced state
    /// of the other qubits: ρ → |l⟩⟨l| ⊗ Tr_q ρ.
    pub fn reset_to(&mut self, q: usize, level: usize) {
        let s = self.stride(q);
        let d = self.dims[q];
        let n = self.rho.nrows();
        let mut out = CMat::zeros(n, n);
        let bases = self.bases(q);
        for &b in &bases {
            for &bp in &bases {
                let mut acc = ZERO;
                for a in 0..d {
                    acc += self.rho[(b + a * s, bp + a * s)];
                }
                out[(b + level * s, bp + level * s)] = acc;
            }
        }
        self.rho = out;
    }

    /// Largest deviation from Hermiticity, unit trace and non-negative
    /// diagonal; used to detect numerical failure.
    pub fn defect(&self) -> f64 {
        let herm = (&self.rho - self.rho.adjoint()).camax();
        let tr = (self.trace() - 1.0).abs();
        let neg = (0..self.rho.nrows()).map(|j| (-self.rho[(j, j)].re).max(0.0)).fold(0.0, f64::max);
        if self.rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return f64::INFINITY;
        }
        herm.max(tr).max(neg)
    }
}

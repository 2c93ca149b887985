//! Linear bosonic networks as Bogoliubov transformations.
//!
//! A network on `M` modes acts on the annihilation operators as
//! `a_out = A a_in + B a_in†`. Means and quadrature covariances of Gaussian
//! states are propagated through it. Quadratures follow `X = a + a†`,
//! `P = -i(a - a†)`, so the vacuum has unit variance (shot-noise units).

use std::collections::HashMap;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

pub type C64 = Complex<f64>;

/// Residual below which both Bogoliubov identities are considered satisfied.
pub const VALIDITY_TOL: f64 = 1e-9;
/// Symmetry tolerance for covariance matrices, relative to their largest entry.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Tolerance on the uncertainty bound `gamma + i Omega >= 0`.
pub const UNCERTAINTY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("mode count must be at least 1")]
    InvalidDimension,
    #[error("mode index {index} out of range for {modes} modes")]
    ModeOutOfRange { index: usize, modes: usize },
    #[error("the two ports of a two-mode element must differ (both are {0})")]
    Aliasing(usize),
    #[error("intensity gain must be a finite value >= 1, got {0}")]
    InvalidGain(f64),
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate mode label {0:?}")]
    DuplicateLabel(String),
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),
    #[error("non-finite mean field entry at mode {0}")]
    NonFiniteMean(usize),
}

/// Ordered, uniquely-labelled set of modes every transform in a scenario acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeRegistry {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl ModeRegistry {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, NetworkError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(NetworkError::InvalidDimension);
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), i).is_some() {
                return Err(NetworkError::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

/// Outcome of [`BogoliubovTransform::check_symplectic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticCheck {
    /// Max entry of `|A A† - B B† - I|`.
    pub commutator_residual: f64,
    /// Max entry of `|A Bᵀ - (A Bᵀ)ᵀ|`.
    pub symmetry_residual: f64,
    pub valid: bool,
}

impl SymplecticCheck {
    pub fn max_residual(&self) -> f64 {
        self.commutator_residual.max(self.symmetry_residual)
    }
}

/// The `(A, B)` pair of a linear bosonic input-output map.
#[derive(Debug, Clone, PartialEq)]
pub struct BogoliubovTransform {
    a: DMatrix<C64>,
    b: DMatrix<C64>,
}

fn check_index(index: usize, modes: usize) -> Result<(), NetworkError> {
    if index >= modes {
        Err(NetworkError::ModeOutOfRange { index, modes })
    } else {
        Ok(())
    }
}

fn check_pair(m1: usize, m2: usize, modes: usize) -> Result<(), NetworkError> {
    check_index(m1, modes)?;
    check_index(m2, modes)?;
    if m1 == m2 {
        return Err(NetworkError::Aliasing(m1));
    }
    Ok(())
}

fn check_unit_interval(name: &'static str, value: f64) -> Result<(), NetworkError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(NetworkError::OutOfRange { name, value });
    }
    Ok(())
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

impl BogoliubovTransform {
    /// Wraps an arbitrary `(A, B)` pair without validating it.
    pub fn from_parts(a: DMatrix<C64>, b: DMatrix<C64>) -> Result<Self, NetworkError> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(NetworkError::InvalidDimension);
        }
        if a.shape() != b.shape() {
            return Err(NetworkError::DimensionMismatch {
                expected: a.nrows(),
                found: b.nrows(),
            });
        }
        Ok(Self { a, b })
    }

    pub fn identity(modes: usize) -> Result<Self, NetworkError> {
        if modes == 0 {
            return Err(NetworkError::InvalidDimension);
        }
        Ok(Self {
            a: DMatrix::identity(modes, modes),
            b: DMatrix::zeros(modes, modes),
        })
    }

    /// Phase-insensitive amplifier with real positive coefficients:
    /// `a_s' = √G a_s + √(G-1) a_i†`, `a_i' = √G a_i + √(G-1) a_s†`.
    pub fn pia(modes: usize, signal: usize, idler: usize, gain: f64) -> Result<Self, NetworkError> {
        if modes == 0 {
            return Err(NetworkError::InvalidDimension);
        }
        if !gain.is_finite() || gain < 1.0 {
            return Err(NetworkError::InvalidGain(gain));
        }
        check_pair(signal, idler, modes)?;
        let mut t = Self::identity(modes)?;
        let g = gain.sqrt();
        let h = (gain - 1.0).sqrt();
        t.a[(signal, signal)] = real(g);
        t.a[(idler, idler)] = real(g);
        t.b[(signal, idler)] = real(h);
        t.b[(idler, signal)] = real(h);
        Ok(t)
    }

    /// Loss of transmission `eta` on `mode`, completed unitarily on a vacuum `ancilla`.
    pub fn loss(modes: usize, mode: usize, ancilla: usize, eta: f64) -> Result<Self, NetworkError> {
        check_unit_interval("transmission", eta)?;
        Self::mixer(modes, mode, ancilla, eta)
    }

    /// Two-mode beam splitter with intensity transmittance `t`:
    /// `a1' = √t a1 + √(1-t) a2`, `a2' = -√(1-t) a1 + √t a2`.
    pub fn beamsplitter(modes: usize, m1: usize, m2: usize, t: f64) -> Result<Self, NetworkError> {
        check_unit_interval("transmittance", t)?;
        Self::mixer(modes, m1, m2, t)
    }

    fn mixer(modes: usize, m1: usize, m2: usize, t: f64) -> Result<Self, NetworkError> {
        if modes == 0 {
            return Err(NetworkError::InvalidDimension);
        }
        check_pair(m1, m2, modes)?;
        let mut out = Self::identity(modes)?;
        let c = t.sqrt();
        let s = (1.0 - t).sqrt();
        out.a[(m1, m1)] = real(c);
        out.a[(m1, m2)] = real(s);
        out.a[(m2, m1)] = real(-s);
        out.a[(m2, m2)] = real(c);
        Ok(out)
    }

    pub fn modes(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<C64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<C64> {
        &self.b
    }

    pub fn a_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.a
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &Self) -> Result<Self, NetworkError> {
        compose(self, first)
    }

    /// `next` applied after `self`.
    pub fn then(&self, next: &Self) -> Result<Self, NetworkError> {
        compose(next, self)
    }

    /// Appends a PIA in place; equivalent to `then(&pia(..))` at O(M) cost.
    pub fn push_pia(&mut self, signal: usize, idler: usize, gain: f64) -> Result<(), NetworkError> {
        if !gain.is_finite() || gain < 1.0 {
            return Err(NetworkError::InvalidGain(gain));
        }
        check_pair(signal, idler, self.modes())?;
        let g = real(gain.sqrt());
        let h = real((gain - 1.0).sqrt());
        let zero = real(0.0);
        self.push_two_mode(
            signal,
            idler,
            [[g, zero], [zero, g]],
            [[zero, h], [h, zero]],
        );
        Ok(())
    }

    /// Appends a loss in place; equivalent to `then(&loss(..))` at O(M) cost.
    pub fn push_loss(&mut self, mode: usize, ancilla: usize, eta: f64) -> Result<(), NetworkError> {
        check_unit_interval("transmission", eta)?;
        self.push_mixer(mode, ancilla, eta)
    }

    /// Appends a beam splitter in place.
    pub fn push_beamsplitter(&mut self, m1: usize, m2: usize, t: f64) -> Result<(), NetworkError> {
        check_unit_interval("transmittance", t)?;
        self.push_mixer(m1, m2, t)
    }

    fn push_mixer(&mut self, m1: usize, m2: usize, t: f64) -> Result<(), NetworkError> {
        check_pair(m1, m2, self.modes())?;
        let c = real(t.sqrt());
        let s = real((1.0 - t).sqrt());
        let zero = real(0.0);
        self.push_two_mode(m1, m2, [[c, s], [-s, c]], [[zero; 2]; 2]);
        Ok(())
    }

    // Rows i, j of (A, B) after an element acting only on modes i, j.
    fn push_two_mode(&mut self, i: usize, j: usize, ae: [[C64; 2]; 2], be: [[C64; 2]; 2]) {
        let m = self.modes();
        let rows = [i, j];
        let old_a = [self.a.row(i).clone_owned(), self.a.row(j).clone_owned()];
        let old_b = [self.b.row(i).clone_owned(), self.b.row(j).clone_owned()];
        for (r, &row) in rows.iter().enumerate() {
            for col in 0..m {
                let mut na = real(0.0);
                let mut nb = real(0.0);
                for k in 0..2 {
                    na += ae[r][k] * old_a[k][col] + be[r][k] * old_b[k][col].conj();
                    nb += ae[r][k] * old_b[k][col] + be[r][k] * old_a[k][col].conj();
                }
                self.a[(row, col)] = na;
                self.b[(row, col)] = nb;
            }
        }
    }

    pub fn check_symplectic(&self) -> SymplecticCheck {
        let m = self.modes();
        let comm = &self.a * self.a.adjoint()
            - &self.b * self.b.adjoint()
            - DMatrix::<C64>::identity(m, m);
        let abt = &self.a * self.b.transpose();
        let asym = &abt - abt.transpose();
        let commutator_residual = comm.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let symmetry_residual = asym.iter().map(|z| z.norm()).fold(0.0, f64::max);
        SymplecticCheck {
            commutator_residual,
            symmetry_residual,
            valid: commutator_residual < VALIDITY_TOL && symmetry_residual < VALIDITY_TOL,
        }
    }

    /// `B = 0` and `A` unitary (within the validity tolerance).
    pub fn is_passive(&self) -> bool {
        self.b.iter().all(|z| z.norm() < VALIDITY_TOL) && self.check_symplectic().valid
    }

    pub fn propagate_mean(&self, alpha: &MeanField) -> Result<MeanField, NetworkError> {
        if alpha.len() != self.modes() {
            return Err(NetworkError::DimensionMismatch {
                expected: self.modes(),
                found: alpha.len(),
            });
        }
        let a = &alpha.alpha;
        Ok(MeanField {
            alpha: &self.a * a + &self.b * a.conjugate(),
        })
    }

    /// Real `2M × 2M` matrix acting on quadratures ordered `(X1, P1, …, XM, PM)`.
    pub fn quadrature_matrix(&self) -> DMatrix<f64> {
        let m = self.modes();
        let mut s = DMatrix::zeros(2 * m, 2 * m);
        for j in 0..m {
            for k in 0..m {
                let a = self.a[(j, k)];
                let b = self.b[(j, k)];
                s[(2 * j, 2 * k)] = a.re + b.re;
                s[(2 * j, 2 * k + 1)] = b.im - a.im;
                s[(2 * j + 1, 2 * k)] = a.im + b.im;
                s[(2 * j + 1, 2 * k + 1)] = a.re - b.re;
            }
        }
        s
    }

    pub fn output_covariance(
        &self,
        gamma: &QuadratureCovariance,
    ) -> Result<QuadratureCovariance, NetworkError> {
        if gamma.modes() != self.modes() {
            return Err(NetworkError::DimensionMismatch {
                expected: self.modes(),
                found: gamma.modes(),
            });
        }
        let s = self.quadrature_matrix();
        let out = &s * &gamma.gamma * s.transpose();
        Ok(QuadratureCovariance::from_matrix_unchecked(symmetrize(out)))
    }
}

/// `second ∘ first`: `A = A₂A₁ + B₂B₁*`, `B = A₂B₁ + B₂A₁*`.
pub fn compose(
    second: &BogoliubovTransform,
    first: &BogoliubovTransform,
) -> Result<BogoliubovTransform, NetworkError> {
    if second.modes() != first.modes() {
        return Err(NetworkError::DimensionMismatch {
            expected: second.modes(),
            found: first.modes(),
        });
    }
    Ok(BogoliubovTransform {
        a: &second.a * &first.a + &second.b * first.b.conjugate(),
        b: &second.a * &first.b + &second.b * first.a.conjugate(),
    })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Coherent amplitudes of all modes, in units of √(photon flux).
#[derive(Debug, Clone, PartialEq)]
pub struct MeanField {
    alpha: DVector<C64>,
}

impl MeanField {
    pub fn new(alpha: Vec<C64>) -> Result<Self, NetworkError> {
        if alpha.is_empty() {
            return Err(NetworkError::InvalidDimension);
        }
        if let Some(i) = alpha
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(NetworkError::NonFiniteMean(i));
        }
        Ok(Self {
            alpha: DVector::from_vec(alpha),
        })
    }

    pub fn zeros(modes: usize) -> Self {
        Self {
            alpha: DVector::zeros(modes),
        }
    }

    /// Single bright mode of the given intensity (real amplitude), vacuum elsewhere.
    pub fn seeded(modes: usize, mode: usize, intensity: f64) -> Self {
        let mut out = Self::zeros(modes);
        out.alpha[mode] = real(intensity.max(0.0).sqrt());
        out
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn amplitude(&self, mode: usize) -> C64 {
        self.alpha[mode]
    }

    pub fn intensity(&self, mode: usize) -> f64 {
        self.alpha[mode].norm_sqr()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.alpha.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn as_slice(&self) -> &[C64] {
        self.alpha.as_slice()
    }
}

/// Symmetric quadrature covariance in shot-noise units.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureCovariance {
    gamma: DMatrix<f64>,
}

impl QuadratureCovariance {
    /// Validates symmetry, positivity and the uncertainty bound.
    pub fn new(gamma: DMatrix<f64>) -> Result<Self, NetworkError> {
        let out = Self::from_matrix_unchecked(gamma);
        out.validate()?;
        Ok(out)
    }

    pub(crate) fn from_matrix_unchecked(gamma: DMatrix<f64>) -> Self {
        Self { gamma }
    }

    pub fn vacuum(modes: usize) -> Self {
        Self {
            gamma: DMatrix::identity(2 * modes, 2 * modes),
        }
    }

    pub fn modes(&self) -> usize {
        self.gamma.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    /// Adds classical (thermal-like) excess to the amplitude quadrature of `mode`.
    pub fn with_amplitude_excess(mut self, mode: usize, excess: f64) -> Result<Self, NetworkError> {
        check_index(mode, self.modes())?;
        if !(excess.is_finite() && excess >= 0.0) {
            return Err(NetworkError::InvalidCovariance(format!(
                "excess variance {excess} must be finite and >= 0"
            )));
        }
        self.gamma[(2 * mode, 2 * mode)] += excess;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let g = &self.gamma;
        if !g.is_square() || g.nrows() == 0 || !g.nrows().is_multiple_of(2) {
            return Err(NetworkError::InvalidCovariance(format!(
                "shape {:?} is not 2M x 2M",
                g.shape()
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(NetworkError::InvalidCovariance("non-finite entry".into()));
        }
        let scale = g.amax().max(1.0);
        let asym = (g - g.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(NetworkError::InvalidCovariance(format!(
                "asymmetry {asym:e}"
            )));
        }
        let nu_min = self
            .symplectic_eigenvalues()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if nu_min < 1.0 - UNCERTAINTY_TOL * scale {
            return Err(NetworkError::InvalidCovariance(format!(
                "uncertainty bound violated: smallest symplectic eigenvalue {nu_min}"
            )));
        }
        Ok(())
    }

    /// Symplectic eigenvalues in ascending order, one per mode.
    ///
    /// Computed from `K = γ^½ Ω γ^½`: `-K²` is symmetric with eigenvalues `ν²`,
    /// each appearing twice.
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        let n = self.gamma.nrows();
        let eig = SymmetricEigen::new(self.gamma.clone());
        let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let root =
            &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
        let omega = symplectic_form(n / 2);
        let k = &root * omega * &root;
        let k2 = -(&k * &k);
        let mut nu2: Vec<f64> = SymmetricEigen::new(symmetrize(k2))
            .eigenvalues
            .iter()
            .copied()
            .collect();
        nu2.sort_by(|a, b| a.total_cmp(b));
        nu2.chunks(2)
            .map(|pair| (0.5 * (pair[0] + pair[1])).max(0.0).sqrt())
            .collect()
    }
}

/// Block-diagonal `Ω = ⊕ [[0, 1], [-1, 0]]` for the interleaved ordering.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for j in 0..modes {
        omega[(2 * j, 2 * j + 1)] = 1.0;
        omega[(2 * j + 1, 2 * j)] = -1.0;
    }
    omega
}

//! Local operators, coherent branch superpositions, and the operator-Schmidt
//! decomposition.
//!
//! A branch superposition O = sum_k c_k O_{1,k} (x) ... (x) O_{N,k} describes
//! an N-party operation as a coherent sum of products of single-qubit
//! operators.  Coefficients are normalized to sum_k |c_k|^2 = 1 on
//! construction, matching the convention that each branch carries a share of
//! the post-selected amplitude.  How entangling the resulting operation is
//! follows from the operator-Schmidt decomposition across a bipartition: a
//! Schmidt number of 1 means a product operation, anything higher cannot be
//! realized by local operations alone.

pub mod parse;

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use thiserror::Error;

use crate::opalg::{
    realign, svd, tensor_product, tensor_product_vec, ComplexMatrix, ComplexVector, OpalgError,
    C64,
};

/// Schmidt coefficients at or below this threshold do not count toward the
/// Schmidt number.
pub const RANK_TOL: f64 = 1e-9;
/// Probability mass below this threshold counts as complete annihilation.
pub const ANNIHILATION_TOL: f64 = 1e-14;
/// Input states must be normalized to within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("local operators must be 2x2, got {rows}x{cols}")]
    WrongDimension { rows: usize, cols: usize },
    #[error("term {index} has {got} factors, expected {expected}")]
    MismatchedParties { index: usize, got: usize, expected: usize },
    #[error("a superposition needs at least one term")]
    EmptyTermList,
    #[error("all branch coefficients vanish")]
    ZeroCoefficients,
    #[error("operator annihilates the input state (weight {weight:.3e})")]
    Annihilated { weight: f64 },
    #[error("state has norm {norm} but must be normalized")]
    NotNormalized { norm: f64 },
    #[error("parameter {name} = {value} is outside {range}")]
    InvalidParameter { name: &'static str, value: f64, range: &'static str },
    #[error("unknown ket token '{0}'")]
    BadKetToken(char),
    #[error("ket string must be nonempty")]
    EmptyKet,
    #[error(transparent)]
    Linalg(#[from] OpalgError),
}

/// A single-qubit operator with a display label.  The label is what the
/// operator prints as in the mini-language (see [`parse`]).
#[derive(Clone)]
pub struct LocalOperator {
    label: String,
    matrix: ComplexMatrix,
}

impl LocalOperator {
    pub fn from_matrix(label: impl Into<String>, matrix: ComplexMatrix) -> Result<Self, OperatorError> {
        if matrix.rows() != 2 || matrix.cols() != 2 {
            return Err(OperatorError::WrongDimension { rows: matrix.rows(), cols: matrix.cols() });
        }
        Ok(Self { label: label.into(), matrix })
    }

    pub fn identity() -> Self {
        Self { label: "I".into(), matrix: ComplexMatrix::identity(2) }
    }

    pub fn pauli_x() -> Self {
        let m = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        Self { label: "X".into(), matrix: m }
    }

    pub fn pauli_y() -> Self {
        let m = ComplexMatrix::new(
            2,
            2,
            vec![C64::ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), C64::ZERO],
        )
        .unwrap();
        Self { label: "Y".into(), matrix: m }
    }

    pub fn pauli_z() -> Self {
        let m = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]).unwrap();
        Self { label: "Z".into(), matrix: m }
    }

    /// Projector onto |0> = |H>.
    pub fn proj0() -> Self {
        let m = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        Self { label: "P0".into(), matrix: m }
    }

    /// Projector onto |1> = |V>.
    pub fn proj1() -> Self {
        let m = ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        Self { label: "P1".into(), matrix: m }
    }

    /// Jones matrix of a half-wave plate with fast axis at `theta` radians:
    /// R(theta) diag(1, -1) R(-theta).
    pub fn hwp(theta: f64) -> Self {
        let (s, c) = (2.0 * theta).sin_cos();
        let m = ComplexMatrix::from_real(2, 2, &[c, s, s, -c]).unwrap();
        Self { label: format!("H({})", fmt_angle(theta)), matrix: m }
    }

    /// Jones matrix of a quarter-wave plate with fast axis at `theta` radians:
    /// R(theta) diag(1, i) R(-theta).
    pub fn qwp(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let (s2, c2) = (s * s, c * c);
        let sc = s * c;
        let m = ComplexMatrix::new(
            2,
            2,
            vec![
                C64::new(c2, s2),
                C64::new(sc, -sc),
                C64::new(sc, -sc),
                C64::new(s2, c2),
            ],
        )
        .unwrap();
        Self { label: format!("Q({})", fmt_angle(theta)), matrix: m }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }
}

impl fmt::Debug for LocalOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LocalOperator({})", self.label)
    }
}

impl fmt::Display for LocalOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

fn fmt_angle(theta: f64) -> String {
    let s = format!("{theta:.12}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

/// One branch of a superposition: a coefficient and one local factor per party.
#[derive(Debug, Clone)]
pub struct BranchTerm {
    pub coefficient: C64,
    pub factors: Vec<LocalOperator>,
}

impl BranchTerm {
    pub fn new(coefficient: C64, factors: Vec<LocalOperator>) -> Self {
        Self { coefficient, factors }
    }
}

/// Normalized coherent superposition of local-operator products.
#[derive(Debug, Clone)]
pub struct BranchSuperposition {
    parties: usize,
    terms: Vec<BranchTerm>,
}

impl BranchSuperposition {
    /// Validates the term list and rescales coefficients so that
    /// sum_k |c_k|^2 = 1.
    pub fn new(terms: Vec<BranchTerm>) -> Result<Self, OperatorError> {
        let Some(first) = terms.first() else {
            return Err(OperatorError::EmptyTermList);
        };
        let parties = first.factors.len();
        if parties == 0 {
            return Err(OperatorError::MismatchedParties { index: 0, got: 0, expected: 1 });
        }
        for (index, t) in terms.iter().enumerate() {
            if t.factors.len() != parties {
                return Err(OperatorError::MismatchedParties {
                    index,
                    got: t.factors.len(),
                    expected: parties,
                });
            }
        }
        let weight: f64 = terms.iter().map(|t| t.coefficient.norm_sqr()).sum();
        if weight < ANNIHILATION_TOL {
            return Err(OperatorError::ZeroCoefficients);
        }
        let scale = C64::new(1.0 / weight.sqrt(), 0.0);
        let terms = terms
            .into_iter()
            .map(|t| BranchTerm::new(t.coefficient * scale, t.factors))
            .collect();
        Ok(Self { parties, terms })
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn terms(&self) -> &[BranchTerm] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        1 << self.parties
    }

    /// Dense 2^N x 2^N matrix sum_k c_k O_{1,k} (x) ... (x) O_{N,k}.
    pub fn to_matrix(&self) -> ComplexMatrix {
        let dim = self.dim();
        let mut out = ComplexMatrix::zeros(dim, dim);
        for t in &self.terms {
            let mut prod = t.factors[0].matrix().clone();
            for f in &t.factors[1..] {
                prod = tensor_product(&prod, f.matrix());
            }
            out = &out + &prod.scaled(t.coefficient);
        }
        out
    }

    /// Applies the superposition to a normalized pure state.  Returns the
    /// normalized output state and the weight <psi|O^dag O|psi>, which is the
    /// success probability of an ideal lossless post-selection.
    pub fn apply_to_state(
        &self,
        psi: &ComplexVector,
    ) -> Result<(ComplexVector, f64), OperatorError> {
        if psi.dim() != self.dim() {
            return Err(OperatorError::Linalg(OpalgError::DimensionMismatch(format!(
                "state dim {} does not match {} parties",
                psi.dim(),
                self.parties
            ))));
        }
        let norm = psi.norm();
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(OperatorError::NotNormalized { norm });
        }
        let image = self.to_matrix().apply(psi);
        let weight = image.norm_sqr();
        if weight < ANNIHILATION_TOL {
            return Err(OperatorError::Annihilated { weight });
        }
        Ok((image.scaled(C64::new(1.0 / weight.sqrt(), 0.0)), weight))
    }
}

impl fmt::Display for BranchSuperposition {
    /// Canonical mini-language form, parseable by [`parse::parse_superposition`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            f.write_str(&fmt_coefficient(t.coefficient))?;
            f.write_str("*[")?;
            for (j, factor) in t.factors.iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                f.write_str(factor.label())?;
            }
            f.write_str("]")?;
        }
        Ok(())
    }
}

fn fmt_coefficient(z: C64) -> String {
    let re = fmt_angle(z.re);
    let im = fmt_angle(z.im.abs());
    let im_sign = if z.im < 0.0 { "-" } else { "+" };
    if z.im.abs() < 1e-12 {
        re
    } else if z.re.abs() < 1e-12 {
        format!("{}{}i", if z.im < 0.0 { "-" } else { "" }, im)
    } else {
        format!("{re}{im_sign}{im}i")
    }
}

/// Operator-Schmidt decomposition O = sum_t c_t L_t (x) R_t with
/// Hilbert-Schmidt orthonormal factors and descending nonnegative
/// coefficients.  The coefficient list always has full length
/// min(dim_a^2, dim_b^2), including zeros.
pub struct SchmidtDecomposition {
    pub coefficients: Vec<f64>,
    pub left_factors: Vec<ComplexMatrix>,
    pub right_factors: Vec<ComplexMatrix>,
    pub dims: (usize, usize),
}

impl SchmidtDecomposition {
    /// Number of coefficients above [`RANK_TOL`].
    pub fn schmidt_number(&self) -> usize {
        self.schmidt_number_with_tol(RANK_TOL)
    }

    pub fn schmidt_number_with_tol(&self, tol: f64) -> usize {
        self.coefficients.iter().filter(|&&c| c > tol).count()
    }

    /// sum_t c_t L_t (x) R_t, which must reproduce the decomposed operator.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = self.dims.0 * self.dims.1;
        let mut out = ComplexMatrix::zeros(d, d);
        for t in 0..self.coefficients.len() {
            let term = tensor_product(&self.left_factors[t], &self.right_factors[t]);
            out = &out + &term.scaled(C64::new(self.coefficients[t], 0.0));
        }
        out
    }
}

/// Decomposes a bipartite operator on dim_a (x) dim_b via the SVD of its
/// realignment.  Factor matrices are the row-major unvectorized singular
/// vectors.
pub fn schmidt_decompose(
    o: &ComplexMatrix,
    dim_a: usize,
    dim_b: usize,
) -> Result<SchmidtDecomposition, OperatorError> {
    let r = realign(o, dim_a, dim_b)?;
    let s = svd(&r)?;
    let k = s.singular_values.len();
    let mut left = Vec::with_capacity(k);
    let mut right = Vec::with_capacity(k);
    for t in 0..k {
        let ut = s.u.column(t);
        let vt = s.v.column(t);
        left.push(ComplexMatrix::from_fn(dim_a, dim_a, |i, j| ut[i * dim_a + j]));
        right.push(ComplexMatrix::from_fn(dim_b, dim_b, |kk, l| vt[kk * dim_b + l].conj()));
    }
    Ok(SchmidtDecomposition {
        coefficients: s.singular_values,
        left_factors: left,
        right_factors: right,
        dims: (dim_a, dim_b),
    })
}

/// True when O^dag O = I to within `tol` (max entry deviation).
pub fn is_unitary(o: &ComplexMatrix, tol: f64) -> bool {
    if !o.is_square() {
        return false;
    }
    (&o.dagger() * o).max_abs_diff(&ComplexMatrix::identity(o.rows())) <= tol
}

/// True when a = exp(i phi) b for some phase phi, to within `tol`.
pub fn global_phase_match(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return false;
    }
    let overlap = b.hs_inner(a);
    if overlap.norm() < tol {
        // Orthogonal or zero: only matches if both are (nearly) zero.
        return a.max_abs() <= tol && b.max_abs() <= tol;
    }
    let phase = overlap / overlap.norm();
    a.max_abs_diff(&b.scaled(phase)) <= tol
}

/// Canonical two-branch entangling unitary
/// sqrt(1-p) I(x)I + i sqrt(p) X(x)X, Schmidt number 2 for 0 < p < 1.
pub fn schmidt2_unitary(p: f64) -> Result<BranchSuperposition, OperatorError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(OperatorError::InvalidParameter { name: "p", value: p, range: "[0, 1]" });
    }
    BranchSuperposition::new(vec![
        BranchTerm::new(
            C64::new((1.0 - p).sqrt(), 0.0),
            vec![LocalOperator::identity(), LocalOperator::identity()],
        ),
        BranchTerm::new(
            C64::new(0.0, p.sqrt()),
            vec![LocalOperator::pauli_x(), LocalOperator::pauli_x()],
        ),
    ])
}

/// Two-qubit Ising-type interaction exp(-i theta X(x)X) as a dense matrix:
/// cos(theta) I - i sin(theta) X(x)X.
pub fn ising_xx(theta: f64) -> ComplexMatrix {
    let (s, c) = theta.sin_cos();
    let xx = tensor_product(LocalOperator::pauli_x().matrix(), LocalOperator::pauli_x().matrix());
    &ComplexMatrix::identity(4).scaled(C64::new(c, 0.0)) + &xx.scaled(C64::new(0.0, -s))
}

/// Controlled-U as the two-branch superposition
/// (P0 (x) I + P1 (x) U) / sqrt(2).
pub fn controlled_unitary(u: &LocalOperator) -> BranchSuperposition {
    BranchSuperposition::new(vec![
        BranchTerm::new(C64::ONE, vec![LocalOperator::proj0(), LocalOperator::identity()]),
        BranchTerm::new(C64::ONE, vec![LocalOperator::proj1(), u.clone()]),
    ])
    .expect("fixed two-term construction is valid")
}

/// Non-unitary entanglement filter (P0 (x) P0 + P1 (x) P1) / sqrt(2): passes
/// only the amplitudes with equal polarization.
pub fn entanglement_filter() -> BranchSuperposition {
    BranchSuperposition::new(vec![
        BranchTerm::new(C64::ONE, vec![LocalOperator::proj0(), LocalOperator::proj0()]),
        BranchTerm::new(C64::ONE, vec![LocalOperator::proj1(), LocalOperator::proj1()]),
    ])
    .expect("fixed two-term construction is valid")
}

/// Three-party operation (III + XXX) / sqrt(2); maps |000> to the GHZ state.
pub fn ghz_operator() -> BranchSuperposition {
    let i = LocalOperator::identity;
    let x = LocalOperator::pauli_x;
    BranchSuperposition::new(vec![
        BranchTerm::new(C64::ONE, vec![i(), i(), i()]),
        BranchTerm::new(C64::ONE, vec![x(), x(), x()]),
    ])
    .expect("fixed two-term construction is valid")
}

/// Three-party operation (IIX + IXI + XII) / sqrt(3); maps |000> to the W state.
pub fn w_operator() -> BranchSuperposition {
    let i = LocalOperator::identity;
    let x = LocalOperator::pauli_x;
    BranchSuperposition::new(vec![
        BranchTerm::new(C64::ONE, vec![i(), i(), x()]),
        BranchTerm::new(C64::ONE, vec![i(), x(), i()]),
        BranchTerm::new(C64::ONE, vec![x(), i(), i()]),
    ])
    .expect("fixed three-term construction is valid")
}

/// Doubly-controlled U as a four-branch projector sum, Toffoli-like for
/// U = X: (P0 P0 I + P0 P1 I + P1 P0 I + P1 P1 U) / 2.
pub fn ccu(u: &LocalOperator) -> BranchSuperposition {
    let p0 = LocalOperator::proj0;
    let p1 = LocalOperator::proj1;
    let i = LocalOperator::identity;
    BranchSuperposition::new(vec![
        BranchTerm::new(C64::ONE, vec![p0(), p0(), i()]),
        BranchTerm::new(C64::ONE, vec![p0(), p1(), i()]),
        BranchTerm::new(C64::ONE, vec![p1(), p0(), i()]),
        BranchTerm::new(C64::ONE, vec![p1(), p1(), u.clone()]),
    ])
    .expect("fixed four-term construction is valid")
}

/// SWAP written as the maximal superposition (II + XX + YY + ZZ) / 2,
/// Schmidt number 4.
pub fn swap_superposition() -> BranchSuperposition {
    BranchSuperposition::new(vec![
        BranchTerm::new(C64::ONE, vec![LocalOperator::identity(), LocalOperator::identity()]),
        BranchTerm::new(C64::ONE, vec![LocalOperator::pauli_x(), LocalOperator::pauli_x()]),
        BranchTerm::new(C64::ONE, vec![LocalOperator::pauli_y(), LocalOperator::pauli_y()]),
        BranchTerm::new(C64::ONE, vec![LocalOperator::pauli_z(), LocalOperator::pauli_z()]),
    ])
    .expect("fixed four-term construction is valid")
}

/// Single-qubit ket for a polarization token.
///
/// `H`/`0` and `V`/`1` are the computational basis, `D`/`+` and `A`/`-` the
/// diagonal basis, and `R` = (|H> + i|V>)/sqrt(2), `L` = (|H> - i|V>)/sqrt(2)
/// the circular basis.
pub fn basis_ket(token: char) -> Result<ComplexVector, OperatorError> {
    let f = FRAC_1_SQRT_2;
    let (a, b) = match token {
        'H' | '0' => (C64::ONE, C64::ZERO),
        'V' | '1' => (C64::ZERO, C64::ONE),
        'D' | '+' => (C64::new(f, 0.0), C64::new(f, 0.0)),
        'A' | '-' => (C64::new(f, 0.0), C64::new(-f, 0.0)),
        'R' => (C64::new(f, 0.0), C64::new(0.0, f)),
        'L' => (C64::new(f, 0.0), C64::new(0.0, -f)),
        other => return Err(OperatorError::BadKetToken(other)),
    };
    Ok(ComplexVector::new(vec![a, b]).expect("finite entries"))
}

/// Product ket from a token string, e.g. "HV" or "HHH".  Party 0 is the
/// leftmost character and the most significant qubit.
pub fn product_ket(tokens: &str) -> Result<ComplexVector, OperatorError> {
    let mut out: Option<ComplexVector> = None;
    for ch in tokens.chars() {
        let k = basis_ket(ch)?;
        out = Some(match out {
            None => k,
            Some(acc) => tensor_product_vec(&acc, &k),
        });
    }
    out.ok_or(OperatorError::EmptyKet)
}

/// Standard 4x4 two-qubit gates used as references in tests and scenarios.
pub fn cnot_matrix() -> ComplexMatrix {
    let mut m = ComplexMatrix::identity(4);
    m[(2, 2)] = C64::ZERO;
    m[(3, 3)] = C64::ZERO;
    m[(2, 3)] = C64::ONE;
    m[(3, 2)] = C64::ONE;
    m
}

pub fn swap_matrix() -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(4, 4);
    m[(0, 0)] = C64::ONE;
    m[(1, 2)] = C64::ONE;
    m[(2, 1)] = C64::ONE;
    m[(3, 3)] = C64::ONE;
    m
}

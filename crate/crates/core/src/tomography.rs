//! State and process tomography with maximum-likelihood reconstruction.
//!
//! Measurement settings are products of the six single-qubit polarization
//! projectors H, V, D, A, R, L; for each setting the detector registers
//! Poisson counts with mean `exposure * tr(Pi rho)`.  [`qst_mle`] inverts
//! such data with the diluted iterative algorithm, falling back to a
//! Cholesky-parametrized gradient ascent when the multiplicative update
//! stalls on a rank-deficient iterate.  [`qpt`] fits a process matrix in the
//! Pauli product basis by weighted least squares over probe-state
//! reconstructions, and [`monte_carlo`] wraps any simulate-and-reconstruct
//! trial into parametric-bootstrap error bars.

pub mod io;

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::opalg::{hermitian_eig, svd, tensor_product, ComplexMatrix, ComplexVector, OpalgError, C64};
use crate::operators::{product_ket, OperatorError};

/// Singular values below `max * RANK_TOL` do not count toward matrix rank.
const RANK_TOL: f64 = 1e-10;
/// Relative log-likelihood change that counts as converged.
pub const MLE_TOLERANCE: f64 = 1e-10;
/// Iteration cap for the maximum-likelihood search.
pub const MLE_MAX_ITERATIONS: usize = 5000;
/// Step sizes below this stall the diluted iteration.
const STEP_FLOOR: f64 = 1e-12;
/// First-order optimality slack, relative to the total exposure.  At a true
/// maximizer lambda_max(G) - tr(G rho) vanishes; trapped iterates show
/// defects many orders of magnitude above this line.
const KKT_DEFECT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TomographyError {
    #[error("invalid tomography input: {0}")]
    InvalidInput(String),
    #[error("settings span only {rank} of {required} operator dimensions")]
    IncompleteSettings { rank: usize, required: usize },
    #[error("count record references unknown setting {0:?}")]
    UnknownSetting(String),
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] OpalgError),
}

/// Single-qubit analysis bases, in the order used to enumerate settings.
pub const BASIS_LABELS: [char; 6] = ['H', 'V', 'D', 'A', 'R', 'L'];

/// One detector setting: a product projector with its label, e.g. "HV".
#[derive(Debug, Clone)]
pub struct MeasurementSetting {
    label: String,
    projector: ComplexMatrix,
}

impl MeasurementSetting {
    pub fn new(label: impl Into<String>, projector: ComplexMatrix) -> Result<Self, TomographyError> {
        let label = label.into();
        if !projector.is_square() {
            return Err(TomographyError::InvalidInput(format!(
                "projector for {label:?} is not square"
            )));
        }
        Ok(Self { label, projector })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn projector(&self) -> &ComplexMatrix {
        &self.projector
    }
}

/// All 6^n product settings, first qubit varying slowest.  The six
/// single-qubit projectors sum to 3 I, so the full set resolves the identity
/// up to the factor 3^n.
pub fn measurement_settings(qubits: usize) -> Vec<MeasurementSetting> {
    assert!(qubits > 0, "need at least one qubit");
    let total = 6usize.pow(qubits as u32);
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut label = vec!['H'; qubits];
        let mut rest = idx;
        for j in (0..qubits).rev() {
            label[j] = BASIS_LABELS[rest % 6];
            rest /= 6;
        }
        let label: String = label.into_iter().collect();
        let ket = product_ket(&label).expect("basis labels are valid ket tokens");
        out.push(MeasurementSetting { label, projector: ket.outer() });
    }
    out
}

/// Probe kets for process tomography: products of H, V, D, R.
pub fn standard_probe_kets(qubits: usize) -> Vec<ComplexVector> {
    assert!(qubits > 0, "need at least one qubit");
    const PROBES: [char; 4] = ['H', 'V', 'D', 'R'];
    let total = 4usize.pow(qubits as u32);
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut label = vec!['H'; qubits];
        let mut rest = idx;
        for j in (0..qubits).rev() {
            label[j] = PROBES[rest % 4];
            rest /= 4;
        }
        let label: String = label.into_iter().collect();
        out.push(product_ket(&label).expect("probe labels are valid ket tokens"));
    }
    out
}

/// Raw counts for one setting.  `count` stays floating point: averaged or
/// rate-corrected data does not need to be integral.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub setting: String,
    pub count: f64,
    pub exposure: f64,
}

impl CountRecord {
    fn validate(&self) -> Result<(), TomographyError> {
        if !self.count.is_finite() || self.count < 0.0 {
            return Err(TomographyError::InvalidInput(format!(
                "count {} for setting {:?} must be finite and nonnegative",
                self.count, self.setting
            )));
        }
        if !self.exposure.is_finite() || self.exposure <= 0.0 {
            return Err(TomographyError::InvalidInput(format!(
                "exposure {} for setting {:?} must be positive",
                self.exposure, self.setting
            )));
        }
        Ok(())
    }
}

/// Draws counts for every setting from the Born-rule means.  With `poisson`
/// disabled the records carry the exact means, which is useful for oracle
/// tests and noise-free pipelines.
pub fn simulate_counts<R: Rng + ?Sized>(
    rho: &ComplexMatrix,
    settings: &[MeasurementSetting],
    counts_per_setting: f64,
    poisson: bool,
    rng: &mut R,
) -> Result<Vec<CountRecord>, TomographyError> {
    if !counts_per_setting.is_finite() || counts_per_setting <= 0.0 {
        return Err(TomographyError::InvalidInput(format!(
            "countsPerSetting must be positive, got {counts_per_setting}"
        )));
    }
    let mut out = Vec::with_capacity(settings.len());
    for setting in settings {
        if setting.projector.rows() != rho.rows() {
            return Err(TomographyError::InvalidInput(format!(
                "setting {:?} dimension {} does not match state dimension {}",
                setting.label,
                setting.projector.rows(),
                rho.rows()
            )));
        }
        let p = born_probability(rho, &setting.projector);
        let mu = counts_per_setting * p;
        let count = if poisson && mu > 0.0 {
            Poisson::new(mu)
                .map_err(|e| TomographyError::InvalidInput(format!("Poisson mean {mu}: {e}")))?
                .sample(rng)
        } else {
            mu
        };
        out.push(CountRecord {
            setting: setting.label.clone(),
            count,
            exposure: counts_per_setting,
        });
    }
    Ok(out)
}

fn born_probability(rho: &ComplexMatrix, projector: &ComplexMatrix) -> f64 {
    (projector * rho).trace().re.max(0.0)
}

/// Fails unless the settings span the full d^2-dimensional operator space.
pub fn check_informational_completeness(
    settings: &[MeasurementSetting],
    dim: usize,
) -> Result<(), TomographyError> {
    let required = dim * dim;
    if settings.is_empty() {
        return Err(TomographyError::IncompleteSettings { rank: 0, required });
    }
    let stacked = ComplexMatrix::from_fn(settings.len(), required, |k, col| {
        settings[k].projector[(col / dim, col % dim)]
    });
    let s = svd(&stacked)?.singular_values;
    let cutoff = s.first().copied().unwrap_or(0.0) * RANK_TOL;
    let rank = s.iter().filter(|v| **v > cutoff).count();
    if rank < required {
        return Err(TomographyError::IncompleteSettings { rank, required });
    }
    Ok(())
}

/// Iteration diagnostics from [`qst_mle_traced`].
#[derive(Debug, Clone)]
pub struct MleTrace {
    /// Log-likelihood after every accepted update, starting from the
    /// maximally mixed initial state.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub used_fallback: bool,
}

struct MleData {
    projectors: Vec<ComplexMatrix>,
    counts: Vec<f64>,
    exposures: Vec<f64>,
    dim: usize,
}

impl MleData {
    fn assemble(
        settings: &[MeasurementSetting],
        records: &[CountRecord],
        dim: usize,
    ) -> Result<Self, TomographyError> {
        if records.is_empty() {
            return Err(TomographyError::InvalidInput("no count records".into()));
        }
        let by_label: BTreeMap<&str, &ComplexMatrix> =
            settings.iter().map(|s| (s.label.as_str(), &s.projector)).collect();
        let mut projectors = Vec::with_capacity(records.len());
        let mut counts = Vec::with_capacity(records.len());
        let mut exposures = Vec::with_capacity(records.len());
        for record in records {
            record.validate()?;
            let projector = *by_label
                .get(record.setting.as_str())
                .ok_or_else(|| TomographyError::UnknownSetting(record.setting.clone()))?;
            if projector.rows() != dim {
                return Err(TomographyError::InvalidInput(format!(
                    "setting {:?} dimension {} does not match requested dimension {dim}",
                    record.setting,
                    projector.rows()
                )));
            }
            projectors.push(projector.clone());
            counts.push(record.count);
            exposures.push(record.exposure);
        }
        Ok(Self { projectors, counts, exposures, dim })
    }

    /// Poisson log-likelihood up to the rho-independent `ln n!` terms.
    fn log_likelihood(&self, rho: &ComplexMatrix) -> f64 {
        let mut ll = 0.0;
        for k in 0..self.projectors.len() {
            let mu = self.exposures[k] * born_probability(rho, &self.projectors[k]);
            if self.counts[k] > 0.0 {
                if mu <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                ll += self.counts[k] * mu.ln();
            }
            ll -= mu;
        }
        ll
    }

    /// Likelihood gradient operator R = sum_k e_k (n_k / mu_k - 1) Pi_k.
    fn gradient(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let mut g = ComplexMatrix::zeros(self.dim, self.dim);
        for k in 0..self.projectors.len() {
            let mut factor = -self.exposures[k];
            if self.counts[k] > 0.0 {
                let mu = self.exposures[k] * born_probability(rho, &self.projectors[k]);
                factor += self.counts[k] / mu.max(1e-300) * self.exposures[k];
            }
            g = &g + &self.projectors[k].scaled(C64::new(factor, 0.0));
        }
        g.hermitized()
    }

    fn total_exposure(&self) -> f64 {
        self.exposures.iter().sum()
    }

    /// Gradient projected onto trace-preserving directions.
    fn trace_free_gradient(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let g = self.gradient(rho);
        let shift = (&g * rho).trace().re / self.dim as f64;
        let mut out = g;
        for i in 0..self.dim {
            out[(i, i)] -= C64::new(shift, 0.0);
        }
        out
    }
}

/// Convergence targets for the maximum-likelihood search.  The defaults suit
/// statistical reconstructions, where solver error far below the shot noise
/// is wasted work; tighten both tolerances to push the iterate against the
/// exact optimum, e.g. when comparing against linear inversion on noiseless
/// counts.
#[derive(Debug, Clone, Copy)]
pub struct MleOptions {
    /// Relative likelihood-gain floor that triggers the stationarity check.
    pub tolerance: f64,
    /// First-order optimality slack, relative to the total exposure.
    pub kkt_defect_tol: f64,
    /// Iteration cap shared by the main loop and the fallback ascent.
    pub max_iterations: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            tolerance: MLE_TOLERANCE,
            kkt_defect_tol: KKT_DEFECT_TOL,
            max_iterations: MLE_MAX_ITERATIONS,
        }
    }
}

impl MleOptions {
    fn validate(&self) -> Result<(), TomographyError> {
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(TomographyError::InvalidInput(format!(
                "MLE tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !self.kkt_defect_tol.is_finite() || self.kkt_defect_tol <= 0.0 {
            return Err(TomographyError::InvalidInput(format!(
                "KKT defect tolerance must be positive, got {}",
                self.kkt_defect_tol
            )));
        }
        if self.max_iterations == 0 {
            return Err(TomographyError::InvalidInput("need at least one iteration".into()));
        }
        Ok(())
    }
}

/// Maximum-likelihood state reconstruction with default options.
pub fn qst_mle(
    settings: &[MeasurementSetting],
    records: &[CountRecord],
    dim: usize,
) -> Result<ComplexMatrix, TomographyError> {
    qst_mle_traced(settings, records, dim).map(|(rho, _)| rho)
}

/// Maximum-likelihood reconstruction returning iteration diagnostics.
///
/// The diluted update rho' = (I + eps G)(rho)(I + eps G) / tr is monotone in
/// the likelihood for small enough eps; the step is halved until it improves
/// and grown again after success.  A small likelihood gain alone does not
/// count as converged: the iterate must also satisfy the first-order
/// condition lambda_max(G) = tr(G rho) that holds at every maximizer over
/// the density cone.  When the gain stalls with a large defect the iterate
/// has starved some direction of support mass (multiplicative updates
/// cannot regrow it quickly), so the best direction is mixed back in
/// directly; if even that fails the search switches to gradient ascent on a
/// Cholesky factor, which is positivity-preserving by construction.
pub fn qst_mle_traced(
    settings: &[MeasurementSetting],
    records: &[CountRecord],
    dim: usize,
) -> Result<(ComplexMatrix, MleTrace), TomographyError> {
    qst_mle_traced_with(settings, records, dim, &MleOptions::default())
}

/// [`qst_mle_traced`] with explicit convergence targets.
pub fn qst_mle_traced_with(
    settings: &[MeasurementSetting],
    records: &[CountRecord],
    dim: usize,
    options: &MleOptions,
) -> Result<(ComplexMatrix, MleTrace), TomographyError> {
    options.validate()?;
    check_informational_completeness(settings, dim)?;
    let data = MleData::assemble(settings, records, dim)?;

    let mut rho = ComplexMatrix::identity(dim).scaled(C64::new(1.0 / dim as f64, 0.0));
    let mut ll = data.log_likelihood(&rho);
    let mut trace = MleTrace {
        log_likelihoods: vec![ll],
        iterations: 0,
        converged: false,
        used_fallback: false,
    };
    let mut step = 1.0f64;
    let defect_tol = options.kkt_defect_tol * data.total_exposure();

    while trace.iterations < options.max_iterations {
        trace.iterations += 1;
        let g = data.trace_free_gradient(&rho);
        let mut accepted = false;
        let mut near_stationary = false;
        while step >= STEP_FLOOR {
            let half = &ComplexMatrix::identity(dim) + &g.scaled(C64::new(step, 0.0));
            let candidate = &(&half * &rho) * &half;
            let norm = candidate.trace().re;
            if norm > 0.0 {
                let candidate = candidate.scaled(C64::new(1.0 / norm, 0.0)).hermitized();
                let candidate_ll = data.log_likelihood(&candidate);
                if candidate_ll >= ll {
                    let delta = candidate_ll - ll;
                    rho = candidate;
                    ll = candidate_ll;
                    trace.log_likelihoods.push(ll);
                    accepted = true;
                    step = (step * 2.0).min(1.0);
                    near_stationary = delta <= options.tolerance * ll.abs().max(1.0);
                    break;
                }
            }
            step *= 0.5;
        }

        if near_stationary {
            let eig = hermitian_eig(&g)?;
            let defect = eig.eigenvalues[0] - (&g * &rho).trace().re;
            if defect <= defect_tol {
                trace.converged = true;
                return Ok((rho, trace));
            }
            // Frank-Wolfe repair: lambda_max's eigenvector is the density
            // matrix maximizing tr(G x), so mixing it in gains defect * mix
            // to first order.
            let vertex = eig.eigenvectors.column(0).outer();
            let mut mix = 0.5f64;
            let mut repaired = false;
            while mix >= STEP_FLOOR {
                let candidate = (&rho.scaled(C64::new(1.0 - mix, 0.0))
                    + &vertex.scaled(C64::new(mix, 0.0)))
                    .hermitized();
                let candidate_ll = data.log_likelihood(&candidate);
                if candidate_ll > ll {
                    rho = candidate;
                    ll = candidate_ll;
                    trace.log_likelihoods.push(ll);
                    step = 1.0;
                    repaired = true;
                    break;
                }
                mix *= 0.5;
            }
            if repaired {
                continue;
            }
            accepted = false;
        }

        if !accepted {
            trace.used_fallback = true;
            let (final_rho, lls, converged, iters) = cholesky_ascent(
                &data,
                &rho,
                options.max_iterations - trace.iterations,
                options.tolerance,
            );
            rho = final_rho;
            trace.log_likelihoods.extend(lls);
            trace.converged = converged;
            trace.iterations += iters;
            return Ok((rho, trace));
        }
    }
    Ok((rho, trace))
}

/// Gradient ascent on rho = T T^dag / tr(T T^dag) with T lower triangular.
/// The ascent direction tril(G T) cannot decrease the likelihood to first
/// order, and positivity holds for every step size.
fn cholesky_ascent(
    data: &MleData,
    start: &ComplexMatrix,
    max_iterations: usize,
    tolerance: f64,
) -> (ComplexMatrix, Vec<f64>, bool, usize) {
    let dim = data.dim;
    let mut t = cholesky_factor(start);
    let normalize = |t: &ComplexMatrix| -> ComplexMatrix {
        let raw = t * &t.dagger();
        let tr = raw.trace().re.max(1e-300);
        raw.scaled(C64::new(1.0 / tr, 0.0)).hermitized()
    };
    let mut rho = normalize(&t);
    let mut ll = data.log_likelihood(&rho);
    let mut lls = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iterations {
        iterations += 1;
        let g = data.trace_free_gradient(&rho);
        let direction = {
            let full = &g * &t;
            ComplexMatrix::from_fn(dim, dim, |i, j| if j <= i { full[(i, j)] } else { C64::ZERO })
        };
        let mut eta = 1.0f64;
        let mut accepted = false;
        while eta >= STEP_FLOOR {
            let candidate_t = &t + &direction.scaled(C64::new(eta, 0.0));
            let candidate = normalize(&candidate_t);
            let candidate_ll = data.log_likelihood(&candidate);
            if candidate_ll >= ll {
                let delta = candidate_ll - ll;
                t = candidate_t;
                rho = candidate;
                ll = candidate_ll;
                lls.push(ll);
                accepted = true;
                if delta <= tolerance * ll.abs().max(1.0) {
                    return (rho, lls, true, iterations);
                }
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            // No improving step along the triangular gradient: stationary.
            return (rho, lls, true, iterations);
        }
    }
    (rho, lls, false, iterations)
}

/// Lower-triangular factor of a PSD matrix, with a diagonal jitter so the
/// factorization exists for rank-deficient inputs.
fn cholesky_factor(m: &ComplexMatrix) -> ComplexMatrix {
    let dim = m.rows();
    let jitter = 1e-12;
    let mut l = ComplexMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..=i {
            let mut s = m[(i, j)];
            if i == j {
                s += C64::new(jitter, 0.0);
            }
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            if i == j {
                l[(i, i)] = C64::new(s.re.max(jitter).sqrt(), 0.0);
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    l
}

/// Unconstrained least-squares estimate of rho from count frequencies.
/// The result is Hermitian but may have negative eigenvalues; follow with
/// [`project_to_density`].
pub fn linear_inversion(
    settings: &[MeasurementSetting],
    records: &[CountRecord],
    dim: usize,
) -> Result<ComplexMatrix, TomographyError> {
    check_informational_completeness(settings, dim)?;
    let data = MleData::assemble(settings, records, dim)?;
    let k = data.projectors.len();
    let a = ComplexMatrix::from_fn(k, dim * dim, |row, col| {
        // tr(Pi rho) = sum_{a,b} Pi[a,b] rho[b,a]; unknown (b,a) sits at
        // column b*dim + a.
        let b = col / dim;
        let acol = col % dim;
        data.projectors[row][(acol, b)]
    });
    let rhs = ComplexVector::new(
        (0..k).map(|i| C64::new(data.counts[i] / data.exposures[i], 0.0)).collect(),
    )?;
    let x = lstsq(&a, &rhs)?;
    let rho = ComplexMatrix::from_fn(dim, dim, |r, c| x[r * dim + c]);
    Ok(rho.hermitized())
}

/// Nearest-density projection used after linear inversion: clip negative
/// eigenvalues to zero and renormalize the trace.
pub fn project_to_density(m: &ComplexMatrix) -> Result<ComplexMatrix, TomographyError> {
    let eig = crate::opalg::hermitian_eig(&m.hermitized())?;
    let dim = m.rows();
    let mut out = ComplexMatrix::zeros(dim, dim);
    let mut total = 0.0;
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        total += lambda;
        let v = eig.eigenvectors.column(idx);
        out = &out + &v.outer().scaled(C64::new(lambda, 0.0));
    }
    if total <= 0.0 {
        return Err(TomographyError::InvalidInput(
            "matrix has no positive spectral mass".into(),
        ));
    }
    Ok(out.scaled(C64::new(1.0 / total, 0.0)).hermitized())
}

/// Minimum-norm least-squares solve via the singular value decomposition.
fn lstsq(a: &ComplexMatrix, b: &ComplexVector) -> Result<ComplexVector, TomographyError> {
    let decomp = svd(a)?;
    let smax = decomp.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = smax * 1e-12;
    let r = decomp.singular_values.len();
    // x = V diag(1/s) U^dag b over the numerically nonzero spectrum.
    let mut x = ComplexVector::zeros(a.cols());
    for i in 0..r {
        let s = decomp.singular_values[i];
        if s <= cutoff {
            break;
        }
        let ui = decomp.u.column(i);
        let coeff = ui.inner(b) / C64::new(s, 0.0);
        let vi = decomp.v.column(i);
        x.add_scaled(coeff, &vi);
    }
    Ok(x)
}

/// Pauli product labels in base-4 order: "II", "IX", ..., first qubit is the
/// leading character.
pub fn pauli_labels(qubits: usize) -> Vec<String> {
    assert!(qubits > 0, "need at least one qubit");
    const CHARS: [char; 4] = ['I', 'X', 'Y', 'Z'];
    let total = 4usize.pow(qubits as u32);
    (0..total)
        .map(|idx| {
            let mut label = vec!['I'; qubits];
            let mut rest = idx;
            for j in (0..qubits).rev() {
                label[j] = CHARS[rest % 4];
                rest /= 4;
            }
            label.into_iter().collect()
        })
        .collect()
}

/// Pauli product matrices matching [`pauli_labels`].
pub fn pauli_products(qubits: usize) -> Vec<ComplexMatrix> {
    use crate::operators::LocalOperator;
    let singles = [
        LocalOperator::identity(),
        LocalOperator::pauli_x(),
        LocalOperator::pauli_y(),
        LocalOperator::pauli_z(),
    ];
    pauli_labels(qubits)
        .iter()
        .map(|label| {
            let mut chars = label.chars();
            let first = chars.next().unwrap();
            let mut m = singles["IXYZ".find(first).unwrap()].matrix().clone();
            for ch in chars {
                m = tensor_product(&m, singles["IXYZ".find(ch).unwrap()].matrix());
            }
            m
        })
        .collect()
}

/// Process matrix in the Pauli product basis, normalized to unit trace.
#[derive(Debug, Clone)]
pub struct ProcessMatrix {
    pub chi: ComplexMatrix,
    pub basis_labels: Vec<String>,
}

/// Exact process matrix of an operator O: chi = a a^dag / |a|^2 with
/// a_m = tr(P_m O) / d.
pub fn ideal_chi(op: &ComplexMatrix, qubits: usize) -> Result<ProcessMatrix, TomographyError> {
    let dim = 1usize << qubits;
    if op.rows() != dim || op.cols() != dim {
        return Err(TomographyError::InvalidInput(format!(
            "operator is {}x{}, expected {dim}x{dim}",
            op.rows(),
            op.cols()
        )));
    }
    let paulis = pauli_products(qubits);
    let a: Vec<C64> =
        paulis.iter().map(|p| (p * op).trace() / C64::new(dim as f64, 0.0)).collect();
    let norm_sq: f64 = a.iter().map(|c| c.norm_sqr()).sum();
    if norm_sq <= 0.0 {
        return Err(TomographyError::InvalidInput("operator expands to zero".into()));
    }
    let d2 = paulis.len();
    let chi = ComplexMatrix::from_fn(d2, d2, |m, n| a[m] * a[n].conj() / norm_sq);
    Ok(ProcessMatrix { chi, basis_labels: pauli_labels(qubits) })
}

/// Least-squares process tomography.
///
/// Each probe contributes the equations
/// `sum_{mn} chi_{mn} P_m |psi_i><psi_i| P_n = w_i rho_i`.  With `weights`
/// supplied, `w_i` is the probe's relative success probability and `rho_i`
/// its normalized reconstruction; a probe the operation annihilates enters
/// as weight zero with an arbitrary (ignored) matrix.  Without weights the
/// outputs are fitted as equally scaled.  The overall scale is free, so the
/// fitted chi is hermitized, clipped to the positive cone, and normalized to
/// unit trace.
pub fn qpt(
    probes: &[ComplexVector],
    outputs: &[ComplexMatrix],
    weights: Option<&[f64]>,
    qubits: usize,
) -> Result<ProcessMatrix, TomographyError> {
    let dim = 1usize << qubits;
    if probes.is_empty() || probes.len() != outputs.len() {
        return Err(TomographyError::InvalidInput(format!(
            "{} probes with {} outputs",
            probes.len(),
            outputs.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != probes.len() {
            return Err(TomographyError::InvalidInput(format!(
                "{} weights for {} probes",
                w.len(),
                probes.len()
            )));
        }
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(TomographyError::InvalidInput(
                "weights must be finite and nonnegative".into(),
            ));
        }
    }
    for (i, probe) in probes.iter().enumerate() {
        if probe.dim() != dim {
            return Err(TomographyError::InvalidInput(format!(
                "probe {i} has dimension {}, expected {dim}",
                probe.dim()
            )));
        }
        if outputs[i].rows() != dim || outputs[i].cols() != dim {
            return Err(TomographyError::InvalidInput(format!(
                "output {i} is {}x{}, expected {dim}x{dim}",
                outputs[i].rows(),
                outputs[i].cols()
            )));
        }
    }

    let paulis = pauli_products(qubits);
    let d2 = paulis.len();
    let rows = probes.len() * dim * dim;
    let mut a = ComplexMatrix::zeros(rows, d2 * d2);
    let mut b = ComplexVector::zeros(rows);
    for (i, probe) in probes.iter().enumerate() {
        let rho_in = probe.outer();
        let w = weights.map(|w| w[i]).unwrap_or(1.0);
        // Left products P_m rho_in, reused across n.
        let left: Vec<ComplexMatrix> = paulis.iter().map(|p| p * &rho_in).collect();
        for (m, lm) in left.iter().enumerate() {
            for (n, pn) in paulis.iter().enumerate() {
                let block = lm * pn;
                for r in 0..dim {
                    for c in 0..dim {
                        a[((i * dim + r) * dim + c, m * d2 + n)] = block[(r, c)];
                    }
                }
            }
        }
        for r in 0..dim {
            for c in 0..dim {
                b[(i * dim + r) * dim + c] = outputs[i][(r, c)] * C64::new(w, 0.0);
            }
        }
    }
    let x = lstsq(&a, &b)?;
    let raw = ComplexMatrix::from_fn(d2, d2, |m, n| x[m * d2 + n]).hermitized();

    // Clip to the positive cone and normalize; least squares on noisy data
    // does not respect either constraint on its own.
    let eig = crate::opalg::hermitian_eig(&raw)?;
    let mut chi = ComplexMatrix::zeros(d2, d2);
    let mut total = 0.0;
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        total += lambda;
        chi = &chi + &eig.eigenvectors.column(idx).outer().scaled(C64::new(lambda, 0.0));
    }
    if total <= 0.0 {
        return Err(TomographyError::InvalidInput(
            "fitted process matrix has no positive mass".into(),
        ));
    }
    Ok(ProcessMatrix {
        chi: chi.scaled(C64::new(1.0 / total, 0.0)).hermitized(),
        basis_labels: pauli_labels(qubits),
    })
}

/// Parametric-bootstrap summary: per-metric mean and sample standard
/// deviation over the repeats.
#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
    pub repeats: usize,
}

/// Runs `trial` once per repeat on independent, deterministic RNG streams
/// and aggregates the returned metric vectors.
///
/// Repeat r uses `ChaCha12Rng::seed_from_u64(seed)` with stream `r + 1`;
/// stream 0 is conventionally reserved for generating the primary dataset,
/// so bootstrap resamples never reuse its randomness.  Trials run in
/// parallel; the report is independent of scheduling order.
pub fn monte_carlo<F>(
    repeats: usize,
    seed: u64,
    trial: F,
) -> Result<MonteCarloReport, TomographyError>
where
    F: Fn(&mut ChaCha12Rng, usize) -> Result<Vec<f64>, TomographyError> + Sync,
{
    if repeats == 0 {
        return Err(TomographyError::InvalidInput("repeats must be at least 1".into()));
    }
    let samples: Vec<Vec<f64>> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            trial(&mut rng, r)
        })
        .collect::<Result<_, _>>()?;
    let width = samples[0].len();
    if samples.iter().any(|s| s.len() != width) {
        return Err(TomographyError::InvalidInput(
            "trials returned metric vectors of different lengths".into(),
        ));
    }
    let mut means = vec![0.0; width];
    for s in &samples {
        for (m, v) in means.iter_mut().zip(s) {
            if !v.is_finite() {
                return Err(TomographyError::InvalidInput("trial produced non-finite metric".into()));
            }
            *m += v;
        }
    }
    for m in &mut means {
        *m /= repeats as f64;
    }
    let mut std_devs = vec![0.0; width];
    if repeats > 1 {
        for s in &samples {
            for (acc, (v, m)) in std_devs.iter_mut().zip(s.iter().zip(&means)) {
                *acc += (v - m) * (v - m);
            }
        }
        for acc in &mut std_devs {
            *acc = (*acc / (repeats as f64 - 1.0)).sqrt();
        }
    }
    Ok(MonteCarloReport { means, std_devs, repeats })
}

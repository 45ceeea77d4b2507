//! Time-bin realization of branch superpositions.
//!
//! Each party's photon enters an unbalanced interferometer with `M` arms.
//! Arm `k` delays the photon by `k` delay steps and applies that party's
//! local operator for branch `k`.  A coincidence measurement keeps only the
//! events where all photons arrive with identical delays, and because the
//! pump train is phase coherent those diagonal events add coherently: the
//! post-selected state is proportional to
//!
//! ```text
//! v = sum_k (prod_j amp_{j,k} e^{i k phi_j}) (O_{1,k} (x) ... (x) O_{N,k}) |psi>
//! ```
//!
//! Arm phases follow a linear ramp `k * phi_j`, which for the common two-arm
//! case reduces to a single interferometer phase per party.  Phase noise
//! turns the coherent cross terms into dephasing; [`apply_phase_noise`]
//! supports both the exact Gaussian average (two-arm patterns) and Monte
//! Carlo sampling.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::opalg::{tensor_product, ComplexMatrix, ComplexVector, OpalgError, C64};
use crate::operators::{LocalOperator, OperatorError, NORMALIZATION_TOL};

/// Probability mass below this threshold counts as zero success.
pub const ZERO_SUCCESS_TOL: f64 = 1e-14;
/// Residual above which the two-arm interference model is rejected.
pub const HARMONIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterferometerError {
    #[error("invalid interferometer configuration: {0}")]
    InvalidConfig(String),
    #[error("post-selection kept no amplitude (success probability {probability:.3e})")]
    ZeroSuccess { probability: f64 },
    #[error(
        "analytic dephasing needs a pure two-arm interference pattern; \
         model residual {residual:.3e}"
    )]
    AnalyticUnsupported { residual: f64 },
    #[error("composite wave-plate matrix is not diagonal (off-diagonal {magnitude:.3e})")]
    NotDiagonal { magnitude: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] OpalgError),
}

/// Timing geometry of the interferometer bank.  The defaults mirror a pulsed
/// source with a 12.5 ns repetition period, a 6.25 ns delay step between
/// neighboring arms, and a 3 ns coincidence window, so distinct arrival-time
/// classes never overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBinConfig {
    pub arm_count: usize,
    pub arm_delay_step_ns: f64,
    pub pulse_period_ns: f64,
    pub coincidence_window_ns: f64,
}

impl Default for TimeBinConfig {
    fn default() -> Self {
        Self {
            arm_count: 2,
            arm_delay_step_ns: 6.25,
            pulse_period_ns: 12.5,
            coincidence_window_ns: 3.0,
        }
    }
}

impl TimeBinConfig {
    /// `arm_count` of 1 is allowed (a trivial pass-through scenario); the
    /// entangling scheme itself needs at least two arms.
    pub fn validate(&self) -> Result<(), InterferometerError> {
        if self.arm_count == 0 {
            return Err(InterferometerError::InvalidConfig("armCount must be at least 1".into()));
        }
        for (name, v) in [
            ("armDelayStepNs", self.arm_delay_step_ns),
            ("pulsePeriodNs", self.pulse_period_ns),
            ("coincidenceWindowNs", self.coincidence_window_ns),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(InterferometerError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.coincidence_window_ns >= self.arm_delay_step_ns {
            return Err(InterferometerError::InvalidConfig(format!(
                "coincidence window {} ns must be shorter than the arm delay step {} ns \
                 or arrival-time classes overlap",
                self.coincidence_window_ns, self.arm_delay_step_ns
            )));
        }
        Ok(())
    }
}

/// Per-party, per-arm complex transmission amplitudes.  Each party's squared
/// magnitudes may sum to at most one; the shortfall is loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmAmplitudes {
    per_party: Vec<Vec<C64>>,
}

impl ArmAmplitudes {
    /// Double pass through a balanced splitter: two arms with amplitude 1/2
    /// each, as in a Michelson layout.  Half the light is lost to the input
    /// port on the return pass.
    pub fn balanced_michelson(parties: usize) -> Self {
        let half = C64::new(0.5, 0.0);
        Self { per_party: vec![vec![half, half]; parties] }
    }

    /// Lossless balanced splitting over `arms` arms: amplitude 1/sqrt(M).
    pub fn balanced_lossless(parties: usize, arms: usize) -> Self {
        let a = C64::new(1.0 / (arms as f64).sqrt(), 0.0);
        Self { per_party: vec![vec![a; arms]; parties] }
    }

    pub fn custom(per_party: Vec<Vec<C64>>) -> Result<Self, InterferometerError> {
        if per_party.is_empty() {
            return Err(InterferometerError::InvalidConfig("need at least one party".into()));
        }
        let arms = per_party[0].len();
        for (j, row) in per_party.iter().enumerate() {
            if row.is_empty() || row.len() != arms {
                return Err(InterferometerError::InvalidConfig(format!(
                    "party {j} lists {} arm amplitudes, expected {arms}",
                    row.len()
                )));
            }
            let total: f64 = row.iter().map(|a| a.norm_sqr()).sum();
            if !total.is_finite() || total > 1.0 + 1e-12 {
                return Err(InterferometerError::InvalidConfig(format!(
                    "party {j} arm magnitudes sum to {total}, exceeding 1"
                )));
            }
        }
        Ok(Self { per_party })
    }

    pub fn parties(&self) -> usize {
        self.per_party.len()
    }

    pub fn arms(&self) -> usize {
        self.per_party[0].len()
    }

    pub fn amplitude(&self, party: usize, arm: usize) -> C64 {
        self.per_party[party][arm]
    }

    /// Probability that all photons survive their interferometers.
    pub fn survival_probability(&self) -> f64 {
        self.per_party
            .iter()
            .map(|row| row.iter().map(|a| a.norm_sqr()).sum::<f64>())
            .product()
    }
}

/// Mean interferometer phases and Gaussian phase noise.  `source_count`
/// controls how many of the leading parties have active noise sources: one
/// shared unbalanced interferometer contributes a single jitter, separate
/// interferometers jitter independently.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseNoiseModel {
    mean_phases: Vec<f64>,
    sigmas: Vec<f64>,
    source_count: usize,
}

impl PhaseNoiseModel {
    pub fn new(
        mean_phases: Vec<f64>,
        sigmas: Vec<f64>,
        source_count: usize,
    ) -> Result<Self, InterferometerError> {
        if mean_phases.is_empty() {
            return Err(InterferometerError::InvalidConfig("need at least one party".into()));
        }
        if sigmas.len() != mean_phases.len() {
            return Err(InterferometerError::InvalidConfig(format!(
                "{} sigmas for {} parties",
                sigmas.len(),
                mean_phases.len()
            )));
        }
        if mean_phases.iter().any(|p| !p.is_finite()) {
            return Err(InterferometerError::InvalidConfig("phases must be finite".into()));
        }
        if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(InterferometerError::InvalidConfig(
                "sigmas must be finite and nonnegative".into(),
            ));
        }
        if source_count == 0 || source_count > mean_phases.len() {
            return Err(InterferometerError::InvalidConfig(format!(
                "sourceCount {source_count} must be between 1 and the number of parties"
            )));
        }
        Ok(Self { mean_phases, sigmas, source_count })
    }

    pub fn noiseless(mean_phases: Vec<f64>) -> Result<Self, InterferometerError> {
        let n = mean_phases.len();
        Self::new(mean_phases, vec![0.0; n], n.max(1))
    }

    pub fn mean_phases(&self) -> &[f64] {
        &self.mean_phases
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn source_count(&self) -> usize {
        self.source_count
    }

    pub fn total_mean_phase(&self) -> f64 {
        self.mean_phases.iter().sum()
    }

    /// Variance of the total phase: active sources add in quadrature.
    pub fn total_sigma_sq(&self) -> f64 {
        self.sigmas[..self.source_count].iter().map(|s| s * s).sum()
    }
}

/// Arrival-time class: delay differences (k_j - k_0) for parties j >= 1.
/// All-zero means coincident arrival.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeClass(pub Vec<i64>);

impl TimeClass {
    pub fn diagonal(parties: usize) -> Self {
        Self(vec![0; parties.saturating_sub(1)])
    }

    pub fn is_diagonal(&self) -> bool {
        self.0.iter().all(|&d| d == 0)
    }
}

impl fmt::Display for TimeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("0");
        }
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{d:+}")?;
        }
        Ok(())
    }
}

/// One arm assignment per party, with its arrival-time class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub arms: Vec<usize>,
    pub class: TimeClass,
}

/// All M^N arm assignments, in lexicographic order (party 0 slowest).
pub fn enumerate_outcomes(config: &TimeBinConfig, parties: usize) -> Vec<Outcome> {
    assert!(parties > 0, "need at least one party");
    let m = config.arm_count;
    let total = m.pow(parties as u32);
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut arms = vec![0usize; parties];
        let mut rest = idx;
        for j in (0..parties).rev() {
            arms[j] = rest % m;
            rest /= m;
        }
        let class = TimeClass(arms[1..].iter().map(|&k| k as i64 - arms[0] as i64).collect());
        out.push(Outcome { arms, class });
    }
    out
}

/// Unnormalized coincidence output: the matrix v v^dag for the coincident
/// class plus the probability of every arrival-time class.
#[derive(Debug, Clone)]
pub struct RawPostSelection {
    /// v v^dag of the coincident class; its trace is the success probability.
    pub unnormalized: ComplexMatrix,
    pub outcome_breakdown: BTreeMap<TimeClass, f64>,
    /// Photon loss in the interferometers: 1 - prod_j sum_k |amp_{j,k}|^2.
    /// For unitary branch operators the class probabilities and this mass
    /// account for all events; projective branch operators absorb amplitude
    /// on top of it.
    pub loss_mass: f64,
}

/// Normalized post-selection result.
#[derive(Debug, Clone)]
pub struct PostSelectionResult {
    pub state: ComplexMatrix,
    pub success_probability: f64,
    pub outcome_breakdown: BTreeMap<TimeClass, f64>,
    pub loss_mass: f64,
}

fn validate_setup(
    config: &TimeBinConfig,
    amplitudes: &ArmAmplitudes,
    branches: &[Vec<LocalOperator>],
    party_phases: &[f64],
    psi: &ComplexVector,
) -> Result<(), InterferometerError> {
    config.validate()?;
    let n = branches.len();
    if n == 0 {
        return Err(InterferometerError::InvalidConfig("need at least one party".into()));
    }
    if amplitudes.parties() != n {
        return Err(InterferometerError::InvalidConfig(format!(
            "{} amplitude rows for {n} parties",
            amplitudes.parties()
        )));
    }
    if party_phases.len() != n {
        return Err(InterferometerError::InvalidConfig(format!(
            "{} phases for {n} parties",
            party_phases.len()
        )));
    }
    if party_phases.iter().any(|p| !p.is_finite()) {
        return Err(InterferometerError::InvalidConfig("phases must be finite".into()));
    }
    if amplitudes.arms() != config.arm_count {
        return Err(InterferometerError::InvalidConfig(format!(
            "{} arm amplitudes for {} arms",
            amplitudes.arms(),
            config.arm_count
        )));
    }
    for (j, row) in branches.iter().enumerate() {
        if row.len() != config.arm_count {
            return Err(InterferometerError::InvalidConfig(format!(
                "party {j} lists {} branch operators for {} arms",
                row.len(),
                config.arm_count
            )));
        }
    }
    if psi.dim() != 1 << n {
        return Err(InterferometerError::InvalidConfig(format!(
            "input state dim {} does not match {n} parties",
            psi.dim()
        )));
    }
    let norm = psi.norm();
    if (norm - 1.0).abs() > NORMALIZATION_TOL {
        return Err(OperatorError::NotNormalized { norm }.into());
    }
    Ok(())
}

/// Coincidence post-selection at explicit per-party interferometer phases.
/// Never rejects small success probabilities; see [`postselect`] for the
/// user-facing entry point.
pub fn postselect_raw(
    config: &TimeBinConfig,
    amplitudes: &ArmAmplitudes,
    branches: &[Vec<LocalOperator>],
    party_phases: &[f64],
    psi: &ComplexVector,
) -> Result<RawPostSelection, InterferometerError> {
    validate_setup(config, amplitudes, branches, party_phases, psi)?;
    let n = branches.len();
    let dim = 1usize << n;

    let mut class_vectors: BTreeMap<TimeClass, ComplexVector> = BTreeMap::new();
    for outcome in enumerate_outcomes(config, n) {
        let mut coeff = C64::ONE;
        for (j, &k) in outcome.arms.iter().enumerate() {
            coeff *= amplitudes.amplitude(j, k) * C64::from_polar(1.0, k as f64 * party_phases[j]);
        }
        if coeff.norm_sqr() == 0.0 {
            continue;
        }
        let mut op = branches[0][outcome.arms[0]].matrix().clone();
        for (j, &k) in outcome.arms.iter().enumerate().skip(1) {
            op = tensor_product(&op, branches[j][k].matrix());
        }
        let image = op.apply(psi);
        class_vectors
            .entry(outcome.class)
            .or_insert_with(|| ComplexVector::zeros(dim))
            .add_scaled(coeff, &image);
    }

    let mut outcome_breakdown = BTreeMap::new();
    let diagonal = TimeClass::diagonal(n);
    let mut unnormalized = ComplexMatrix::zeros(dim, dim);
    for (class, v) in &class_vectors {
        outcome_breakdown.insert(class.clone(), v.norm_sqr());
        if *class == diagonal {
            unnormalized = v.outer();
        }
    }
    outcome_breakdown.entry(diagonal).or_insert(0.0);

    Ok(RawPostSelection {
        unnormalized,
        outcome_breakdown,
        // Clamp: amplitude rows may sum to 1 within rounding either way.
        loss_mass: (1.0 - amplitudes.survival_probability()).clamp(0.0, 1.0),
    })
}

fn finalize(raw: RawPostSelection) -> Result<PostSelectionResult, InterferometerError> {
    let probability = raw.unnormalized.trace().re;
    if probability < ZERO_SUCCESS_TOL {
        return Err(InterferometerError::ZeroSuccess { probability });
    }
    let state = raw.unnormalized.scaled(C64::new(1.0 / probability, 0.0)).hermitized();
    let mut outcome_breakdown = raw.outcome_breakdown;
    let parties = outcome_breakdown.keys().next().map(|c| c.0.len() + 1).unwrap_or(1);
    outcome_breakdown.insert(TimeClass::diagonal(parties), probability);
    Ok(PostSelectionResult {
        state,
        success_probability: probability,
        outcome_breakdown,
        loss_mass: raw.loss_mass,
    })
}

/// Coincidence post-selection at the mean interferometer phases.
pub fn postselect(
    config: &TimeBinConfig,
    amplitudes: &ArmAmplitudes,
    branches: &[Vec<LocalOperator>],
    noise: &PhaseNoiseModel,
    psi: &ComplexVector,
) -> Result<PostSelectionResult, InterferometerError> {
    finalize(postselect_raw(config, amplitudes, branches, noise.mean_phases(), psi)?)
}

/// How [`apply_phase_noise`] evaluates the Gaussian phase average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseEvaluation {
    /// Exact average for two-arm interference: the cross term is damped by
    /// exp(-sigma_total^2 / 2).  Rejects configurations with higher
    /// harmonics (three or more populated arms).
    Analytic,
    /// Draw phases per shot and average the unnormalized outputs.
    Sampled { shots: usize, seed: u64 },
}

/// Averages the post-selection over Gaussian phase noise.
///
/// `eval` must run the post-selection at explicit per-party phases, normally
/// a closure over [`postselect_raw`].  The closure form keeps the averaging
/// logic independent of how the underlying scenario is assembled.
pub fn apply_phase_noise<F>(
    eval: F,
    noise: &PhaseNoiseModel,
    mode: NoiseEvaluation,
) -> Result<PostSelectionResult, InterferometerError>
where
    F: Fn(&[f64]) -> Result<RawPostSelection, InterferometerError>,
{
    let base = eval(noise.mean_phases())?;
    let sigma_sq = noise.total_sigma_sq();
    if sigma_sq == 0.0 {
        return finalize(base);
    }
    match mode {
        NoiseEvaluation::Analytic => analytic_average(eval, noise, base),
        NoiseEvaluation::Sampled { shots, seed } => sampled_average(eval, noise, base, shots, seed),
    }
}

/// Three-point reconstruction of E(t) = S + e^{it} C + e^{-it} C^dag, where t
/// is the total phase.  Valid whenever the coincident-class amplitude carries
/// exactly one interference harmonic, which is the two-arm case.
fn analytic_average<F>(
    eval: F,
    noise: &PhaseNoiseModel,
    base: RawPostSelection,
) -> Result<PostSelectionResult, InterferometerError>
where
    F: Fn(&[f64]) -> Result<RawPostSelection, InterferometerError>,
{
    let total_mean = noise.total_mean_phase();
    let at_total = |t: f64| -> Vec<f64> {
        let mut phases = noise.mean_phases().to_vec();
        phases[0] += t - total_mean;
        phases
    };
    let e0 = eval(&at_total(0.0))?.unnormalized;
    let e_half = eval(&at_total(std::f64::consts::FRAC_PI_2))?.unnormalized;
    let e_pi = eval(&at_total(std::f64::consts::PI))?.unnormalized;

    let s = (&e0 + &e_pi).scaled(C64::new(0.5, 0.0));
    let a = &e0 - &s;
    let b = &e_half - &s;
    // C = (A - iB)/2 with A = C + C^dag, B = i(C - C^dag).
    let c = (&a - &b.scaled(C64::new(0.0, 1.0))).scaled(C64::new(0.5, 0.0));

    // The model must reproduce the evaluation at the mean phases; higher
    // harmonics from three or more arms show up as a residual here.
    let rotate = C64::from_polar(1.0, total_mean);
    let cross = &c.scaled(rotate) + &c.dagger().scaled(rotate.conj());
    let predicted = &s + &cross;
    let scale = base.unnormalized.max_abs().max(1e-30);
    let residual = predicted.max_abs_diff(&base.unnormalized) / scale;
    if residual > HARMONIC_TOL {
        return Err(InterferometerError::AnalyticUnsupported { residual });
    }

    let damping = (-noise.total_sigma_sq() / 2.0).exp();
    let unnormalized = &s + &cross.scaled(C64::new(damping, 0.0));
    finalize(RawPostSelection {
        unnormalized,
        outcome_breakdown: base.outcome_breakdown,
        loss_mass: base.loss_mass,
    })
}

fn sampled_average<F>(
    eval: F,
    noise: &PhaseNoiseModel,
    base: RawPostSelection,
    shots: usize,
    seed: u64,
) -> Result<PostSelectionResult, InterferometerError>
where
    F: Fn(&[f64]) -> Result<RawPostSelection, InterferometerError>,
{
    if shots == 0 {
        return Err(InterferometerError::InvalidConfig("shots must be at least 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dim = base.unnormalized.rows();
    let mut acc = ComplexMatrix::zeros(dim, dim);
    let mut breakdown: BTreeMap<TimeClass, f64> =
        base.outcome_breakdown.keys().map(|k| (k.clone(), 0.0)).collect();
    let mut phases = noise.mean_phases().to_vec();
    for _ in 0..shots {
        for j in 0..phases.len() {
            let sigma = if j < noise.source_count() { noise.sigmas()[j] } else { 0.0 };
            phases[j] = if sigma > 0.0 {
                let normal = Normal::new(noise.mean_phases()[j], sigma)
                    .expect("validated sigma is finite and nonnegative");
                normal.sample(&mut rng)
            } else {
                noise.mean_phases()[j]
            };
        }
        let shot = eval(&phases)?;
        acc = &acc + &shot.unnormalized;
        for (class, p) in shot.outcome_breakdown {
            *breakdown.entry(class).or_insert(0.0) += p;
        }
    }
    let inv = 1.0 / shots as f64;
    for p in breakdown.values_mut() {
        *p *= inv;
    }
    finalize(RawPostSelection {
        unnormalized: acc.scaled(C64::new(inv, 0.0)),
        outcome_breakdown: breakdown,
        loss_mass: base.loss_mass,
    })
}

/// Declarative time-bin scenario, the JSON surface used by configuration
/// files.  Keys are camelCase; unknown keys are rejected.  `branches` lists
/// one operator token per party and arm in the factor mini-language ("Z",
/// "P0", "H(0.3)", "U[a,b;c,d]").  `sigma` lists one noise amplitude per
/// party and every listed source is active; model a shared interferometer by
/// giving the extra parties sigma 0.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioFragment {
    pub arm_count: usize,
    pub pulse_period_ns: f64,
    pub coincidence_window_ns: f64,
    #[serde(default = "default_arm_delay_step_ns")]
    pub arm_delay_step_ns: f64,
    pub branches: Vec<Vec<String>>,
    pub phases: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Complex amplitudes as [re, im] pairs per party and arm.  Omitted:
    /// a Michelson bank (amplitude 1/2) for two arms, balanced lossless
    /// splitting otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<Vec<[f64; 2]>>>,
}

fn default_arm_delay_step_ns() -> f64 {
    6.25
}

/// Executable form of a [`ScenarioFragment`].
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub config: TimeBinConfig,
    pub amplitudes: ArmAmplitudes,
    pub branches: Vec<Vec<LocalOperator>>,
    pub noise: PhaseNoiseModel,
}

impl ScenarioFragment {
    pub fn parties(&self) -> usize {
        self.branches.len()
    }

    pub fn build(&self) -> Result<BuiltScenario, InterferometerError> {
        let config = TimeBinConfig {
            arm_count: self.arm_count,
            arm_delay_step_ns: self.arm_delay_step_ns,
            pulse_period_ns: self.pulse_period_ns,
            coincidence_window_ns: self.coincidence_window_ns,
        };
        config.validate()?;
        let parties = self.branches.len();
        if parties == 0 {
            return Err(InterferometerError::InvalidConfig("branches lists no parties".into()));
        }
        let mut branches = Vec::with_capacity(parties);
        for (j, row) in self.branches.iter().enumerate() {
            if row.len() != self.arm_count {
                return Err(InterferometerError::InvalidConfig(format!(
                    "party {j} lists {} branch operators for {} arms",
                    row.len(),
                    self.arm_count
                )));
            }
            let mut ops = Vec::with_capacity(row.len());
            for (k, token) in row.iter().enumerate() {
                let op = crate::operators::parse::parse_local_operator(token).map_err(|e| {
                    InterferometerError::InvalidConfig(format!(
                        "party {j}, arm {k}: cannot parse operator {token:?}: {e}"
                    ))
                })?;
                ops.push(op);
            }
            branches.push(ops);
        }
        let amplitudes = match &self.amplitudes {
            Some(rows) => {
                if rows.len() != parties {
                    return Err(InterferometerError::InvalidConfig(format!(
                        "{} amplitude rows for {parties} parties",
                        rows.len()
                    )));
                }
                ArmAmplitudes::custom(
                    rows.iter()
                        .map(|row| row.iter().map(|[re, im]| C64::new(*re, *im)).collect())
                        .collect(),
                )?
            }
            None if self.arm_count == 2 => ArmAmplitudes::balanced_michelson(parties),
            None => ArmAmplitudes::balanced_lossless(parties, self.arm_count),
        };
        if self.phases.len() != parties {
            return Err(InterferometerError::InvalidConfig(format!(
                "{} phases for {parties} parties",
                self.phases.len()
            )));
        }
        let noise = PhaseNoiseModel::new(self.phases.clone(), self.sigma.clone(), parties)?;
        Ok(BuiltScenario { config, amplitudes, branches, noise })
    }
}

/// Phase of a Q(pi/4) H(alpha) Q(pi/4) wave-plate stack.
///
/// The composite is diagonal for every alpha; the relative phase it imprints
/// between |V> and |H> is arg(m_11 / m_00) = 4 alpha - pi (mod 2 pi).
/// Returned in [0, 2 pi).
pub fn waveplate_phase_control(alpha: f64) -> Result<f64, InterferometerError> {
    if !alpha.is_finite() {
        return Err(InterferometerError::InvalidConfig("alpha must be finite".into()));
    }
    let q = LocalOperator::qwp(FRAC_PI_4);
    let h = LocalOperator::hwp(alpha);
    let m = &(q.matrix() * h.matrix()) * q.matrix();
    let off = m[(0, 1)].norm().max(m[(1, 0)].norm());
    if off > 1e-10 {
        return Err(InterferometerError::NotDiagonal { magnitude: off });
    }
    let phi = (m[(1, 1)] / m[(0, 0)]).arg();
    Ok(phi.rem_euclid(2.0 * std::f64::consts::PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{concurrence, purity, state_fidelity};
    use crate::operators::product_ket;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn zz_xx_branches() -> Vec<Vec<LocalOperator>> {
        vec![
            vec![LocalOperator::pauli_z(), LocalOperator::pauli_x()],
            vec![LocalOperator::pauli_z(), LocalOperator::pauli_x()],
        ]
    }

    fn bell_phi(phi: f64) -> ComplexVector {
        let f = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = ComplexVector::zeros(4);
        v.add_scaled(c(f, 0.0), &product_ket("HH").unwrap());
        v.add_scaled(C64::from_polar(f, phi), &product_ket("VV").unwrap());
        v
    }

    #[test]
    fn config_validation() {
        let mut cfg = TimeBinConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.arm_count = 0;
        assert!(matches!(cfg.validate(), Err(InterferometerError::InvalidConfig(_))));
        let mut cfg = TimeBinConfig::default();
        cfg.coincidence_window_ns = 6.25;
        assert!(matches!(cfg.validate(), Err(InterferometerError::InvalidConfig(_))));
    }

    #[test]
    fn outcome_enumeration() {
        let mut cfg = TimeBinConfig::default();
        cfg.arm_count = 1;
        let outs = enumerate_outcomes(&cfg, 2);
        assert_eq!(outs.len(), 1);
        assert!(outs[0].class.is_diagonal());

        let cfg = TimeBinConfig::default();
        let outs = enumerate_outcomes(&cfg, 2);
        assert_eq!(outs.len(), 4);
        let classes: Vec<i64> = outs.iter().map(|o| o.class.0[0]).collect();
        assert_eq!(classes, vec![0, 1, -1, 0]);

        let mut cfg3 = TimeBinConfig::default();
        cfg3.arm_count = 3;
        assert_eq!(enumerate_outcomes(&cfg3, 2).len(), 9);
        let distinct: std::collections::BTreeSet<TimeClass> =
            enumerate_outcomes(&cfg3, 2).into_iter().map(|o| o.class).collect();
        assert_eq!(distinct.len(), 5); // differences -2..2

        let outs = enumerate_outcomes(&TimeBinConfig::default(), 3);
        assert_eq!(outs.len(), 8);
        assert_eq!(outs[0].class, TimeClass(vec![0, 0]));
        assert_eq!(outs[3].class, TimeClass(vec![1, 1])); // arms (0,1,1)
    }

    #[test]
    fn reference_scenario_bell_output() {
        // Two-arm Michelson bank, ZZ and XX branches on |HH>: the coincident
        // class collects (|HH> + e^{i phi} |VV>)/4, success 1/8, and the two
        // off-diagonal classes carry 1/16 each.
        let cfg = TimeBinConfig::default();
        let amps = ArmAmplitudes::balanced_michelson(2);
        for phi in [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2, 1.234] {
            let noise = PhaseNoiseModel::noiseless(vec![phi, 0.0]).unwrap();
            let res = postselect(&cfg, &amps, &zz_xx_branches(), &noise, &product_ket("HH").unwrap())
                .unwrap();
            assert!((res.success_probability - 0.125).abs() < 1e-12, "phi = {phi}");
            let f = state_fidelity(&res.state, &bell_phi(phi)).unwrap();
            assert!((f - 1.0).abs() < 1e-12, "phi = {phi}: fidelity {f}");

            assert_eq!(res.outcome_breakdown.len(), 3);
            assert!((res.outcome_breakdown[&TimeClass(vec![0])] - 0.125).abs() < 1e-12);
            assert!((res.outcome_breakdown[&TimeClass(vec![1])] - 0.0625).abs() < 1e-12);
            assert!((res.outcome_breakdown[&TimeClass(vec![-1])] - 0.0625).abs() < 1e-12);
            assert!((res.loss_mass - 0.75).abs() < 1e-12);

            // Unitary branches: detected classes plus loss account for everything.
            let detected: f64 = res.outcome_breakdown.values().sum();
            assert!((detected + res.loss_mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_arm_is_identity_channel() {
        let mut cfg = TimeBinConfig::default();
        cfg.arm_count = 1;
        let amps = ArmAmplitudes::custom(vec![vec![C64::ONE], vec![C64::ONE]]).unwrap();
        let branches = vec![vec![LocalOperator::identity()], vec![LocalOperator::identity()]];
        let noise = PhaseNoiseModel::noiseless(vec![0.0, 0.0]).unwrap();
        let psi = bell_phi(1.0);
        let res = postselect(&cfg, &amps, &branches, &noise, &psi).unwrap();
        assert!((res.success_probability - 1.0).abs() < 1e-12);
        assert!(res.state.max_abs_diff(&psi.outer()) < 1e-12);
        assert!(res.loss_mass.abs() < 1e-12);
    }

    #[test]
    fn projective_branches_annihilate_odd_bell() {
        // P0/P1 branches implement the parity filter; the odd Bell state has
        // no even-parity component.
        let cfg = TimeBinConfig::default();
        let amps = ArmAmplitudes::balanced_michelson(2);
        let branches = vec![
            vec![LocalOperator::proj0(), LocalOperator::proj1()],
            vec![LocalOperator::proj0(), LocalOperator::proj1()],
        ];
        let noise = PhaseNoiseModel::noiseless(vec![0.0, 0.0]).unwrap();
        let f = std::f64::consts::FRAC_1_SQRT_2;
        let mut odd = ComplexVector::zeros(4);
        odd.add_scaled(c(f, 0.0), &product_ket("HV").unwrap());
        odd.add_scaled(c(f, 0.0), &product_ket("VH").unwrap());
        assert!(matches!(
            postselect(&cfg, &amps, &branches, &noise, &odd),
            Err(InterferometerError::ZeroSuccess { .. })
        ));

        // On |HH> the filter passes |HH> with success 1/16 (amplitude 1/4
        // from the splitters on the single surviving branch).
        let res = postselect(&cfg, &amps, &branches, &noise, &product_ket("HH").unwrap()).unwrap();
        assert!((res.success_probability - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_operator_action() {
        // Lossless balanced arms with zero phases realize the equal-weight
        // superposition exactly: state = O|psi><psi|O^dag / w, success w / 2.
        let cfg = TimeBinConfig::default();
        let amps = ArmAmplitudes::balanced_lossless(2, 2);
        let noise = PhaseNoiseModel::noiseless(vec![0.0, 0.0]).unwrap();
        let op = crate::operators::parse::parse_superposition("1*[Z,Z]+1*[X,X]").unwrap();
        for tokens in ["HH", "HV", "DD", "RH"] {
            let psi = product_ket(tokens).unwrap();
            let res = postselect(&cfg, &amps, &zz_xx_branches(), &noise, &psi).unwrap();
            let (target, weight) = op.apply_to_state(&psi).unwrap();
            assert!((res.success_probability - weight / 2.0).abs() < 1e-12, "{tokens}");
            assert!(res.state.max_abs_diff(&target.outer()) < 1e-12, "{tokens}");
        }
    }

    #[test]
    fn analytic_dephasing_closed_forms() {
        // Reference scenario with phase noise: fidelity (1+q)/2, concurrence
        // q, purity (1+q^2)/2 with q = exp(-sigma_total^2 / 2).
        let cfg = TimeBinConfig::default();
        let amps = ArmAmplitudes::balanced_michelson(2);
        let branches = zz_xx_branches();
        let psi = product_ket("HH").unwrap();
        for (phi, sigma) in [(0.0, 0.3), (FRAC_PI_2, 0.5056), (0.0, 1.0)] {
            let noise = PhaseNoiseModel::new(vec![phi, 0.0], vec![sigma, 0.0], 1).unwrap();
            let res = apply_phase_noise(
                |phases| postselect_raw(&cfg, &amps, &branches, phases, &psi),
                &noise,
                NoiseEvaluation::Analytic,
            )
            .unwrap();
            let q = (-sigma * sigma / 2.0).exp();
            assert!((res.success_probability - 0.125).abs() < 1e-12);
            let f = state_fidelity(&res.state, &bell_phi(phi)).unwrap();
            assert!((f - (1.0 + q) / 2.0).abs() < 1e-12, "sigma = {sigma}");
            let con = concurrence(&res.state).unwrap();
            assert!((con - q).abs() < 1e-9, "sigma = {sigma}: {con} vs {q}");
            let p = purity(&res.state).unwrap();
            assert!((p - (1.0 + q * q) / 2.0).abs() < 1e-9, "sigma = {sigma}");
        }
    }

    #[test]
    fn two_sources_add_in_quadrature() {
        let cfg = TimeBinConfig::default();
        let amps = ArmAmplitudes::balanced_michelson(2);
        let branches = zz_xx_branches();
        let psi = product_ket("HH").unwrap();
        let sigma = 0.4;
        let two = PhaseNoiseModel::new(vec![0.0, 0.0], vec![sigma, sigma], 2).unwrap();
        let one = PhaseNoiseModel::new(
            vec![0.0, 0.0],
            vec![sigma * 2.0_f64.sqrt(), 0.0],
            1,
        )
        .unwrap();
        let run = |noise: &PhaseNoiseModel| {
            apply_phase_noise(
                |phases| postselect_raw(&cfg, &amps, &branches, phases, &psi),
                noise,
                NoiseEvaluation::Analytic,
            )
            .unwrap()
        };
        let a = run(&two);
        let b = run(&one);
        assert!(a.state.max_abs_diff(&b.state) < 1e-12);

        // And two sources degrade the state more than one at the same sigma.
        let single = PhaseNoiseModel::new(vec![0.0, 0.0], vec![sigma, sigma], 1).unwrap();
        let s = run(&single);
        let f_two = state_fidelity(&a.state, &bell_phi(0.0)).unwrap();
        let f_one = state_fidelity(&s.state, &bell_phi(0.0)).unwrap();
        assert!(f_two < f_one - 1e-3);
    }

    #[test]
    fn sampled_matches_analytic() {
        let cfg = TimeBinConfig::default();
        let amps = ArmAmplitudes::balanced_michelson(2);
        let branches = zz_xx_branches();
        let psi = product_ket("HH").unwrap();
        let noise = PhaseNoiseModel::new(vec![0.0, 0.0], vec![0.5, 0.0], 1).unwrap();
        let eval = |phases: &[f64]| postselect_raw(&cfg, &amps, &branches, phases, &psi);
        let exact = apply_phase_noise(&eval, &noise, NoiseEvaluation::Analytic).unwrap();
        let sampled =
            apply_phase_noise(&eval, &noise, NoiseEvaluation::Sampled { shots: 40_000, seed: 7 })
                .unwrap();
        assert!(exact.state.max_abs_diff(&sampled.state) < 0.01);
        assert!((exact.success_probability - sampled.success_probability).abs() < 0.002);

        // Same seed, same result.
        let again =
            apply_phase_noise(&eval, &noise, NoiseEvaluation::Sampled { shots: 1000, seed: 42 })
                .unwrap();
        let again2 =
            apply_phase_noise(&eval, &noise, NoiseEvaluation::Sampled { shots: 1000, seed: 42 })
                .unwrap();
        assert!(again.state.max_abs_diff(&again2.state) == 0.0);
    }

    #[test]
    fn strong_noise_fully_dephases() {
        let cfg = TimeBinConfig::default();
        let amps = ArmAmplitudes::balanced_michelson(2);
        let branches = zz_xx_branches();
        let psi = product_ket("HH").unwrap();
        let noise = PhaseNoiseModel::new(vec![0.0, 0.0], vec![50.0, 0.0], 1).unwrap();
        let res = apply_phase_noise(
            |phases| postselect_raw(&cfg, &amps, &branches, phases, &psi),
            &noise,
            NoiseEvaluation::Analytic,
        )
        .unwrap();
        let f = state_fidelity(&res.state, &bell_phi(0.0)).unwrap();
        assert!((f - 0.5).abs() < 1e-9);
        assert!(concurrence(&res.state).unwrap() < 1e-9);
    }

    #[test]
    fn analytic_rejects_higher_harmonics() {
        // Three populated arms produce e^{2 i phi} terms that the two-arm
        // model cannot represent.
        let mut cfg = TimeBinConfig::default();
        cfg.arm_count = 3;
        let amps = ArmAmplitudes::balanced_lossless(2, 3);
        let branches = vec![
            vec![LocalOperator::identity(), LocalOperator::pauli_x(), LocalOperator::pauli_z()],
            vec![LocalOperator::identity(), LocalOperator::pauli_x(), LocalOperator::pauli_z()],
        ];
        let psi = product_ket("HH").unwrap();
        let noise = PhaseNoiseModel::new(vec![0.7, 0.0], vec![0.3, 0.0], 1).unwrap();
        let res = apply_phase_noise(
            |phases| postselect_raw(&cfg, &amps, &branches, phases, &psi),
            &noise,
            NoiseEvaluation::Analytic,
        );
        assert!(matches!(res, Err(InterferometerError::AnalyticUnsupported { .. })));

        // Sampling still handles it.
        let res = apply_phase_noise(
            |phases| postselect_raw(&cfg, &amps, &branches, phases, &psi),
            &noise,
            NoiseEvaluation::Sampled { shots: 200, seed: 3 },
        );
        assert!(res.is_ok());
    }

    #[test]
    fn waveplate_phase_ramp() {
        let phi0 = waveplate_phase_control(0.0).unwrap();
        assert!((phi0 - PI).abs() < 1e-12);
        assert!(waveplate_phase_control(FRAC_PI_4).unwrap().abs() < 1e-12);
        // phi(alpha) - phi(0) = 4 alpha (mod 2 pi).
        for i in 0..16 {
            let alpha = i as f64 * PI / 16.0;
            let phi = waveplate_phase_control(alpha).unwrap();
            let expect = (4.0 * alpha).rem_euclid(2.0 * PI);
            let diff = (phi - phi0).rem_euclid(2.0 * PI);
            let delta = (diff - expect).abs().min((diff - expect + 2.0 * PI).abs());
            let delta = delta.min((diff - expect - 2.0 * PI).abs());
            assert!(delta < 1e-9, "alpha = {alpha}: {diff} vs {expect}");
        }
    }

    #[test]
    fn setup_validation_errors() {
        let cfg = TimeBinConfig::default();
        let amps = ArmAmplitudes::balanced_michelson(2);
        let noise = PhaseNoiseModel::noiseless(vec![0.0, 0.0]).unwrap();
        let psi = product_ket("HH").unwrap();

        // Wrong branch count per party.
        let bad = vec![vec![LocalOperator::pauli_z()], vec![LocalOperator::pauli_z()]];
        assert!(matches!(
            postselect(&cfg, &amps, &bad, &noise, &psi),
            Err(InterferometerError::InvalidConfig(_))
        ));

        // State dimension mismatch.
        assert!(matches!(
            postselect(&cfg, &amps, &zz_xx_branches(), &noise, &product_ket("H").unwrap()),
            Err(InterferometerError::InvalidConfig(_))
        ));

        // Amplitude rows exceeding unit mass.
        assert!(ArmAmplitudes::custom(vec![vec![C64::ONE, C64::ONE]]).is_err());

        // Noise model shape checks.
        assert!(PhaseNoiseModel::new(vec![0.0], vec![0.1, 0.2], 1).is_err());
        assert!(PhaseNoiseModel::new(vec![0.0], vec![-0.1], 1).is_err());
        assert!(PhaseNoiseModel::new(vec![0.0, 0.0], vec![0.1, 0.1], 3).is_err());
    }

    #[test]
    fn scenario_fragment_builds_and_round_trips() {
        let json = r#"{
            "armCount": 2,
            "pulsePeriodNs": 12.5,
            "coincidenceWindowNs": 3.0,
            "branches": [["Z", "X"], ["Z", "X"]],
            "phases": [0.0, 0.0],
            "sigma": [0.5, 0.0]
        }"#;
        let fragment: ScenarioFragment = serde_json::from_str(json).unwrap();
        assert_eq!(fragment.arm_delay_step_ns, 6.25);
        let built = fragment.build().unwrap();
        assert!((built.noise.total_sigma_sq() - 0.25).abs() < 1e-12);
        let res = postselect(
            &built.config,
            &built.amplitudes,
            &built.branches,
            &built.noise,
            &product_ket("HH").unwrap(),
        )
        .unwrap();
        assert!((res.success_probability - 0.125).abs() < 1e-12);

        let text = serde_json::to_string(&fragment).unwrap();
        let again: ScenarioFragment = serde_json::from_str(&text).unwrap();
        assert_eq!(fragment, again);
    }

    #[test]
    fn scenario_fragment_rejects_bad_input() {
        let with_unknown_key = r#"{
            "armCount": 2, "pulsePeriodNs": 12.5, "coincidenceWindowNs": 3.0,
            "branches": [["Z", "X"], ["Z", "X"]],
            "phases": [0.0, 0.0], "sigma": [0.0, 0.0], "detuning": 1.0
        }"#;
        assert!(serde_json::from_str::<ScenarioFragment>(with_unknown_key).is_err());

        let mut fragment = ScenarioFragment {
            arm_count: 2,
            pulse_period_ns: 12.5,
            coincidence_window_ns: 3.0,
            arm_delay_step_ns: 6.25,
            branches: vec![vec!["Z".into(), "Q".into()], vec!["Z".into(), "X".into()]],
            phases: vec![0.0, 0.0],
            sigma: vec![0.0, 0.0],
            amplitudes: None,
        };
        match fragment.build() {
            Err(InterferometerError::InvalidConfig(msg)) => {
                assert!(msg.contains("party 0, arm 1"), "message: {msg}");
            }
            other => panic!("expected InvalidConfig, got {other:?}"),
        }

        fragment.branches = vec![vec!["Z".into(), "X".into()]; 2];
        fragment.phases = vec![0.0];
        assert!(matches!(fragment.build(), Err(InterferometerError::InvalidConfig(_))));
    }

    #[test]
    fn scenario_fragment_custom_amplitudes() {
        let a = 1.0 / 3.0_f64.sqrt();
        let fragment = ScenarioFragment {
            arm_count: 3,
            pulse_period_ns: 25.0,
            coincidence_window_ns: 3.0,
            arm_delay_step_ns: 6.25,
            branches: vec![vec!["I".into(), "X".into(), "Z".into()]; 2],
            phases: vec![0.0, 0.0],
            sigma: vec![0.0, 0.0],
            amplitudes: Some(vec![vec![[a, 0.0], [a, 0.0], [0.0, a]]; 2]),
        };
        let built = fragment.build().unwrap();
        assert!((built.amplitudes.survival_probability() - 1.0).abs() < 1e-12);
        assert_eq!(built.amplitudes.amplitude(1, 2), c(0.0, a));
        assert_eq!(built.branches[0][1].label(), "X");
    }
}

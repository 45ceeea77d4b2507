use entop_core::interferometer::{
    apply_phase_noise, postselect_raw, ArmAmplitudes, InterferometerError, NoiseEvaluation,
    PhaseNoiseModel, PostSelectionResult, TimeBinConfig,
};
use entop_core::opalg::ComplexVector;
use entop_core::operators::parse::parse_superposition;
use entop_core::operators::{BranchSuperposition, BranchTerm, LocalOperator};
use entop_core::Complex64 as C64;

use crate::config::ScenarioConfig;
use crate::error::AppError;

/// A validated scenario with its interferometric realization.  Branch k of
/// the operator rides arm k of every party's interferometer; the relative
/// phase on the grid is dialed on party 0's arms.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub op: BranchSuperposition,
    pub psi: Option<ComplexVector>,
    pub seed: Option<u64>,
    pub timebin: TimeBinConfig,
    pub amplitudes: ArmAmplitudes,
    pub branches: Vec<Vec<LocalOperator>>,
}

impl Scenario {
    pub fn parties(&self) -> usize {
        self.op.parties()
    }

    /// The configured input ket.  `decompose` and `qpt` never need one, so
    /// the config leaves it optional and the commands that do act on a state
    /// ask here.
    pub fn require_psi(&self) -> Result<&ComplexVector, AppError> {
        self.psi
            .as_ref()
            .ok_or_else(|| AppError::Config("inputState is required for this command".into()))
    }

    /// Seed for stochastic work; scenarios that draw nothing may omit it.
    pub fn seed_or_zero(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// Parses and validates a scenario, resolving the seed (flag overrides
/// config).  Stochastic runs without a seed are rejected so every random
/// number in a report is reproducible.
pub fn prepare(config: ScenarioConfig, seed_override: Option<u64>) -> Result<Scenario, AppError> {
    let op = parse_superposition(&config.operator_spec)?;
    let parties = op.parties();
    let dim = op.dim();
    let psi = config.input_state.as_ref().map(|s| s.to_ket(dim)).transpose()?;

    if let Some(noise) = &config.noise {
        if noise.source_count > parties {
            return Err(AppError::Config(format!(
                "noise.sourceCount {} exceeds the {} interferometers in play",
                noise.source_count, parties
            )));
        }
    }

    let seed = seed_override.or(config.seed);
    if config.is_stochastic() && seed.is_none() {
        return Err(AppError::Config(
            "seed is mandatory for stochastic runs; set it in the config or pass --seed".into(),
        ));
    }

    let arms = op.terms().len();
    let timebin = TimeBinConfig { arm_count: arms, ..TimeBinConfig::default() };

    // Splitting bookkeeping: every party uses the balanced base amplitude
    // (1/2 per pass through a Michelson arm when there are two arms, 1/sqrt(M)
    // otherwise), and party 0's arms absorb the branch coefficients.  The
    // post-selected output is then proportional to sum_k c_k e^{i k phi} O_k.
    let base = if arms == 2 { 0.5 } else { 1.0 / (arms as f64).sqrt() };
    let mut rows = vec![vec![C64::new(base, 0.0); arms]; parties];
    for (k, term) in op.terms().iter().enumerate() {
        rows[0][k] = term.coefficient * (arms as f64).sqrt() * base;
    }
    let amplitudes = ArmAmplitudes::custom(rows)?;

    let branches: Vec<Vec<LocalOperator>> = (0..parties)
        .map(|j| op.terms().iter().map(|t| t.factors[j].clone()).collect())
        .collect();

    Ok(Scenario { config, op, psi, seed, timebin, amplitudes, branches })
}

/// The operator actually realized at grid point `phi`: branch k picks up
/// e^{i k phi} from party 0's arm-k path length.
pub fn phased_operator(op: &BranchSuperposition, phi: f64) -> BranchSuperposition {
    let terms = op
        .terms()
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let ramp = C64::from_polar(1.0, k as f64 * phi);
            BranchTerm::new(t.coefficient * ramp, t.factors.clone())
        })
        .collect();
    BranchSuperposition::new(terms).expect("phase ramp preserves validity")
}

/// Ideal (noiseless, lossless) normalized output and its weight ||O psi||^2.
pub fn ideal_target(
    scenario: &Scenario,
    phi: f64,
    psi: &ComplexVector,
) -> Result<(ComplexVector, f64), AppError> {
    Ok(phased_operator(&scenario.op, phi).apply_to_state(psi)?)
}

pub fn noise_model(scenario: &Scenario, phi: f64) -> Result<PhaseNoiseModel, AppError> {
    let parties = scenario.parties();
    let mut mean_phases = vec![0.0; parties];
    mean_phases[0] = phi;
    let mut sigmas = vec![0.0; parties];
    if let Some(noise) = &scenario.config.noise {
        for s in sigmas.iter_mut().take(noise.source_count) {
            *s = noise.sigma;
        }
    }
    Ok(PhaseNoiseModel::new(mean_phases, sigmas, parties)?)
}

/// Noise-averaged post-selected state of `psi` at grid point `phi`.
/// `sampled_seed` feeds the per-shot phase draws and is ignored in analytic
/// or noiseless runs.
pub fn posterior_state(
    scenario: &Scenario,
    phi: f64,
    psi: &ComplexVector,
    sampled_seed: u64,
) -> Result<PostSelectionResult, AppError> {
    let noise = noise_model(scenario, phi)?;
    let mode = match &scenario.config.noise {
        Some(n) if n.sigma > 0.0 && !n.analytic => {
            NoiseEvaluation::Sampled { shots: n.shots, seed: sampled_seed }
        }
        _ => NoiseEvaluation::Analytic,
    };
    let result = apply_phase_noise(
        |phases| {
            postselect_raw(&scenario.timebin, &scenario.amplitudes, &scenario.branches, phases, psi)
        },
        &noise,
        mode,
    );
    match result {
        Ok(post) => Ok(post),
        Err(e @ InterferometerError::ZeroSuccess { .. }) => Err(AppError::ZeroSuccess(e.to_string())),
        Err(other) => Err(other.into()),
    }
}

/// Stream-splitting rule: grid point `p` of a scenario seeded `s` simulates
/// counts from ChaCha streams of seed s + p; stream 0 is the primary dataset
/// and stream r + 1 the r-th bootstrap repeat.
pub fn phi_seed(seed: u64, phi_index: usize) -> u64 {
    seed.wrapping_add(phi_index as u64)
}

/// Sampled-noise phase draws use a SplitMix-mixed seed so they never share a
/// stream with the count simulation at the same grid point.
pub fn dephasing_seed(seed: u64, phi_index: usize) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(phi_index as u64);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Computational product labels "HH", "HV", ... for matrix CSV headers.
pub fn ket_labels(parties: usize) -> Vec<String> {
    let dim = 1usize << parties;
    (0..dim)
        .map(|idx| {
            (0..parties)
                .map(|j| if idx >> (parties - 1 - j) & 1 == 1 { 'V' } else { 'H' })
                .collect()
        })
        .collect()
}

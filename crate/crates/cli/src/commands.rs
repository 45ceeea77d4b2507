use std::collections::BTreeMap;
use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use entop_core::metrics::{concurrence, process_fidelity, purity, state_fidelity, MetricError};
use entop_core::opalg::{ComplexMatrix, ComplexVector, C64};
use entop_core::operators::parse::parse_superposition;
use entop_core::operators::{is_unitary, schmidt_decompose, BranchSuperposition};
use entop_core::tomography::io::{write_counts_csv, write_matrix_csv};
use entop_core::tomography::{
    ideal_chi, measurement_settings, monte_carlo, qpt, qst_mle, simulate_counts,
    standard_probe_kets, CountRecord, ProcessMatrix, TomographyError,
};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::config::ScenarioConfig;
use crate::error::AppError;
use crate::pipeline::{
    dephasing_seed, ideal_target, ket_labels, phased_operator, phi_seed, posterior_state, prepare,
    Scenario,
};
use crate::report::{
    write_report, DecomposeReport, PhiResult, Report, ReportFormat, Stat, R12,
};

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Scenario config (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's RNG seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the report and matrix dumps
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Report file format
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
}

fn as_tomo(e: MetricError) -> TomographyError {
    TomographyError::InvalidInput(e.to_string())
}

fn write_matrix_file(path: &Path, labels: &[String], m: &ComplexMatrix) -> Result<(), AppError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_csv(&mut w, labels, m)?;
    w.flush()?;
    Ok(())
}

fn write_counts_file(path: &Path, records: &[CountRecord]) -> Result<(), AppError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_counts_csv(&mut w, records)?;
    w.flush()?;
    Ok(())
}

fn require_parties(scenario: &Scenario, expected: usize, command: &str) -> Result<(), AppError> {
    if scenario.parties() != expected {
        return Err(AppError::Config(format!(
            "{command} handles {expected}-party scenarios, but {:?} acts on {} parties",
            scenario.config.operator_spec,
            scenario.parties()
        )));
    }
    Ok(())
}

/// Operator-Schmidt decomposition of the configured operator across the
/// first-party vs rest bipartition.
pub fn cmd_decompose(args: &RunArgs) -> Result<PathBuf, AppError> {
    let config = ScenarioConfig::load(&args.config)?;
    let op = parse_superposition(&config.operator_spec)?;
    let raw = op.to_matrix();
    // Post-selection only ever realizes the operator up to scale, so report
    // the representative with Hilbert-Schmidt norm sqrt(dim): unitaries land
    // exactly on their gate matrix and the unitary flag means "proportional
    // to a unitary".
    let norm = raw.frobenius_norm();
    if norm < 1.0e-12 {
        return Err(AppError::Numerical("operator is numerically zero".into()));
    }
    let scale = C64::new((raw.rows() as f64).sqrt() / norm, 0.0);
    let m = raw.scaled(scale);
    let dims = (2usize, m.rows() / 2);
    let sd = schmidt_decompose(&m, dims.0, dims.1)?;
    let unitary = is_unitary(&m, 1.0e-10);

    println!("operator: {}", config.operator_spec);
    println!("bipartition: {} x {}", dims.0, dims.1);
    let printable: Vec<String> = sd.coefficients.iter().map(|c| format!("{c:.6}")).collect();
    println!("schmidt coefficients: [{}]", printable.join(", "));
    println!("schmidt number: {}", sd.schmidt_number());
    println!("unitary: {unitary}");

    let report = DecomposeReport {
        command: "decompose".into(),
        scenario: config.clone(),
        dims,
        coefficients: sd.coefficients.iter().map(|&c| R12(c)).collect(),
        schmidt_number: sd.schmidt_number(),
        unitary,
    };
    let path = write_report(&args.out, &config.name, args.format, &report)?;
    println!("wrote {}", path.display());
    Ok(path)
}

/// Simulates the noisy post-selected output on the phase grid, reconstructs
/// it from (optionally Poissonian) tomography counts and reports fidelity,
/// concurrence and purity with bootstrap error bars.
pub fn cmd_generate(args: &RunArgs) -> Result<PathBuf, AppError> {
    let config = ScenarioConfig::load(&args.config)?;
    let scenario = prepare(config, args.seed)?;
    require_parties(&scenario, 2, "generate")?;

    let settings = measurement_settings(2);
    let labels = ket_labels(2);
    let counts = scenario.config.counts_per_setting;
    let poisson = scenario.config.poisson;
    let seed = scenario.seed_or_zero();
    let repeats = scenario.config.repeats;
    // Deterministic runs would repeat the same trial verbatim; one pass
    // suffices and the spread is exactly zero.
    let effective = if scenario.config.is_stochastic() { repeats } else { 1 };
    fs::create_dir_all(&args.out)?;

    let psi = scenario.require_psi()?;
    let mut results = Vec::new();
    for (p, &phi) in scenario.config.phi_list.iter().enumerate() {
        let post = posterior_state(&scenario, phi, psi, dephasing_seed(seed, p))?;
        let (target, _) = ideal_target(&scenario, phi, psi)?;
        let rho_model = post.state.clone();
        let seed_p = phi_seed(seed, p);

        let mc = monte_carlo(effective, seed_p, |rng, _| {
            let records = simulate_counts(&rho_model, &settings, counts, poisson, rng)?;
            let rho = qst_mle(&settings, &records, 4)?;
            Ok(vec![
                state_fidelity(&rho, &target).map_err(as_tomo)?,
                concurrence(&rho).map_err(as_tomo)?,
                purity(&rho).map_err(as_tomo)?,
            ])
        })?;

        let mut artifacts = Vec::new();
        let mut rng0 = ChaCha12Rng::seed_from_u64(seed_p);
        let records0 = simulate_counts(&rho_model, &settings, counts, poisson, &mut rng0)?;
        if scenario.config.wants("counts") {
            let file = format!("{}.phi{p}.counts.csv", scenario.config.name);
            write_counts_file(&args.out.join(&file), &records0)?;
            artifacts.push(file);
        }
        if scenario.config.wants("state") {
            let rho0 = qst_mle(&settings, &records0, 4)?;
            let file = format!("{}.phi{p}.state.csv", scenario.config.name);
            write_matrix_file(&args.out.join(&file), &labels, &rho0)?;
            artifacts.push(file);
        }

        let mut metrics = BTreeMap::new();
        for (i, name) in ["fidelity", "concurrence", "purity"].into_iter().enumerate() {
            metrics.insert(name.to_string(), Stat::sampled(mc.means[i], mc.std_devs[i], repeats));
        }
        metrics.insert("successProbability".into(), Stat::exact(post.success_probability));

        println!(
            "{} phi[{p}] = {phi:.6}: fidelity {:.6}, concurrence {:.6}, purity {:.6}, success {:.6}",
            scenario.config.name, mc.means[0], mc.means[1], mc.means[2], post.success_probability
        );
        results.push(PhiResult { phi: R12(phi), metrics, truth_table: None, artifacts });
    }

    let report = Report {
        command: "generate".into(),
        scenario: scenario.config.clone(),
        seed: scenario.seed,
        repeats,
        results,
    };
    let path = write_report(&args.out, &scenario.config.name, args.format, &report)?;
    println!("wrote {}", path.display());
    Ok(path)
}

/// Full process tomography over the 16 standard probe states.  Probes the
/// operation annihilates stay in the equation set with weight zero.
pub fn cmd_qpt(args: &RunArgs) -> Result<PathBuf, AppError> {
    let config = ScenarioConfig::load(&args.config)?;
    let scenario = prepare(config, args.seed)?;
    require_parties(&scenario, 2, "qpt")?;

    let probes = standard_probe_kets(2);
    let settings = measurement_settings(2);
    let counts = scenario.config.counts_per_setting;
    let poisson = scenario.config.poisson;
    let seed = scenario.seed_or_zero();
    let repeats = scenario.config.repeats;
    let effective = if scenario.config.is_stochastic() { repeats } else { 1 };
    fs::create_dir_all(&args.out)?;

    let mut results = Vec::new();
    for (p, &phi) in scenario.config.phi_list.iter().enumerate() {
        let mut model: Vec<Option<ComplexMatrix>> = Vec::with_capacity(probes.len());
        let mut weights = Vec::with_capacity(probes.len());
        for probe in &probes {
            match posterior_state(&scenario, phi, probe, dephasing_seed(seed, p)) {
                Ok(post) => {
                    weights.push(post.success_probability);
                    model.push(Some(post.state));
                }
                Err(AppError::ZeroSuccess(_)) => {
                    weights.push(0.0);
                    model.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        let ideal = ideal_chi(&phased_operator(&scenario.op, phi).to_matrix(), 2)?;

        let reconstruct = |rng: &mut ChaCha12Rng| -> Result<ProcessMatrix, TomographyError> {
            let mut outputs = Vec::with_capacity(model.len());
            for m in &model {
                match m {
                    Some(rho) => {
                        let records = simulate_counts(rho, &settings, counts, poisson, rng)?;
                        outputs.push(qst_mle(&settings, &records, 4)?);
                    }
                    None => outputs.push(ComplexMatrix::zeros(4, 4)),
                }
            }
            qpt(&probes, &outputs, Some(&weights), 2)
        };

        let seed_p = phi_seed(seed, p);
        let mc = monte_carlo(effective, seed_p, |rng, _| {
            let chi = reconstruct(rng)?;
            Ok(vec![process_fidelity(&chi, &ideal).map_err(as_tomo)?])
        })?;

        let mut artifacts = Vec::new();
        if scenario.config.wants("chi") {
            let mut rng0 = ChaCha12Rng::seed_from_u64(seed_p);
            let chi0 = reconstruct(&mut rng0)?;
            let file = format!("{}.phi{p}.chi.csv", scenario.config.name);
            write_matrix_file(&args.out.join(&file), &chi0.basis_labels, &chi0.chi)?;
            artifacts.push(file);
        }

        let mut metrics = BTreeMap::new();
        metrics.insert(
            "processFidelity".into(),
            Stat::sampled(mc.means[0], mc.std_devs[0], repeats),
        );
        println!(
            "{} phi[{p}] = {phi:.6}: process fidelity {:.6}",
            scenario.config.name, mc.means[0]
        );
        results.push(PhiResult { phi: R12(phi), metrics, truth_table: None, artifacts });
    }

    let report = Report {
        command: "qpt".into(),
        scenario: scenario.config.clone(),
        seed: scenario.seed,
        repeats,
        results,
    };
    let path = write_report(&args.out, &scenario.config.name, args.format, &report)?;
    println!("wrote {}", path.display());
    Ok(path)
}

/// Three-party scenarios: post-selected GHZ/W generation and doubly
/// controlled gates.  Reports exact model quantities (no count simulation),
/// plus a classical truth table when the operator permutes the basis kets.
pub fn cmd_multiparty(args: &RunArgs) -> Result<PathBuf, AppError> {
    let config = ScenarioConfig::load(&args.config)?;
    let scenario = prepare(config, args.seed)?;
    require_parties(&scenario, 3, "multiparty")?;

    let labels = ket_labels(3);
    let seed = scenario.seed_or_zero();
    fs::create_dir_all(&args.out)?;

    let psi = scenario.require_psi()?;
    let mut results = Vec::new();
    for (p, &phi) in scenario.config.phi_list.iter().enumerate() {
        let post = posterior_state(&scenario, phi, psi, dephasing_seed(seed, p))?;
        let (target, _) = ideal_target(&scenario, phi, psi)?;

        let mut metrics = BTreeMap::new();
        let f = state_fidelity(&post.state, &target)?;
        metrics.insert("fidelity".into(), Stat::exact(f));
        metrics.insert("purity".into(), Stat::exact(purity(&post.state)?));
        metrics.insert("successProbability".into(), Stat::exact(post.success_probability));

        let truth_table = if scenario.config.wants("truthTable") {
            basis_truth_table(&phased_operator(&scenario.op, phi), &labels)
        } else {
            None
        };

        let mut artifacts = Vec::new();
        if scenario.config.wants("state") {
            let file = format!("{}.phi{p}.state.csv", scenario.config.name);
            write_matrix_file(&args.out.join(&file), &labels, &post.state)?;
            artifacts.push(file);
        }

        println!(
            "{} phi[{p}] = {phi:.6}: fidelity {f:.6}, success {:.6}",
            scenario.config.name, post.success_probability
        );
        results.push(PhiResult { phi: R12(phi), metrics, truth_table, artifacts });
    }

    let report = Report {
        command: "multiparty".into(),
        scenario: scenario.config.clone(),
        seed: scenario.seed,
        repeats: scenario.config.repeats,
        results,
    };
    let path = write_report(&args.out, &scenario.config.name, args.format, &report)?;
    println!("wrote {}", path.display());
    Ok(path)
}

/// "HHH -> HHV" rows when every basis ket maps to a single basis ket; None
/// as soon as any image is a genuine superposition.
fn basis_truth_table(op: &BranchSuperposition, labels: &[String]) -> Option<Vec<String>> {
    let dim = op.dim();
    let mut rows = Vec::with_capacity(dim);
    for k in 0..dim {
        let (image, _) = op.apply_to_state(&ComplexVector::basis(dim, k)).ok()?;
        let mut hit = None;
        for i in 0..dim {
            if image[i].norm() > 1.0e-9 {
                if hit.is_some() {
                    return None;
                }
                hit = Some(i);
            }
        }
        rows.push(format!("{} -> {}", labels[k], labels[hit?]));
    }
    info!("basis truth table resolved for all {dim} kets");
    Some(rows)
}

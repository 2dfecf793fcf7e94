use std::path::Path;

use serde::Serialize;

use selfrep_core::cnc::cnc_defect_with_raster;
use selfrep_core::elastic::elastic_value;
use selfrep_core::nonlocal::RepulsionModel;
use selfrep_core::optimizer::Termination;
use selfrep_core::params::{parse_run_config, RunConfig, Verdict};
use selfrep_core::report::{self, rows_to_csv, to_json};
use selfrep_core::scenario::{self, Scenario};
use selfrep_core::{
    box_penalty, cnc_defect, cost_profile, gamma_sweep, minimize, validate, CncReport,
    DeformationField, ModelParams, Objective,
};

use crate::output::RunDir;
use crate::{CliError, Command, Common};

const DEFAULT_RESOLUTION: usize = 512;

pub(crate) fn dispatch(command: &Command, common: &Common) -> Result<(), CliError> {
    match command {
        Command::ValidateParams => validate_params(common),
        Command::Evaluate { pgm } => evaluate(common, *pgm),
        Command::Minimize { perturb } => minimize_cmd(common, *perturb),
        Command::GammaSweep => sweep_cmd(common),
        Command::CncCheck => cnc_check(common),
        Command::BenchScaling { sizes } => bench_scaling(common, sizes.as_deref()),
    }
}

/// Config text plus the parsed config with command-line overrides applied.
struct Loaded {
    text: String,
    config: RunConfig,
}

fn read_config(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = parse_run_config(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Loaded { text, config })
}

fn load(common: &Common) -> Result<Option<Loaded>, CliError> {
    let Some(path) = &common.config else {
        return Ok(None);
    };
    let mut loaded = read_config(path)?;
    let c = &mut loaded.config;
    if let Some(res) = common.resolution {
        c.experiment.resolution = res;
    }
    if let Some(n) = common.n {
        c.experiment.n = n;
    }
    if let Some(seed) = common.seed {
        c.optimizer.seed = seed;
    }
    Ok(Some(loaded))
}

fn require(common: &Common) -> Result<Loaded, CliError> {
    load(common)?.ok_or_else(|| CliError::Config("this command needs --config PATH".into()))
}

fn check_n(n: usize) -> Result<usize, CliError> {
    if n == 0 {
        Err(CliError::Config("--n must be at least 1".into()))
    } else {
        Ok(n)
    }
}

fn scenario_for(common: &Common, n: usize) -> Result<Scenario, CliError> {
    Ok(scenario::resolve(&common.scenario, check_n(n)?)?)
}

/// The config's box wins over the scenario's.
fn model_for(config: &RunConfig, scenario: &Scenario) -> ModelParams {
    let mut model = config.model;
    if model.confinement.is_none() {
        model.confinement = scenario.confinement;
    }
    model
}

fn warn_regime(model: &ModelParams) {
    let report = validate(model);
    if report.verdict() != Verdict::Valid {
        eprintln!(
            "warning: parameters are outside the validated regime ({:?}); continuing",
            report.verdict()
        );
    }
}

fn validate_params(common: &Common) -> Result<(), CliError> {
    let loaded = require(common)?;
    let report = validate(&loaded.config.model);
    println!("{report}");
    match report.verdict() {
        Verdict::Valid => Ok(()),
        v => Err(CliError::Config(format!(
            "parameters are not valid ({v:?})"
        ))),
    }
}

#[derive(Serialize)]
struct EnergySummary {
    grad_term: f64,
    det_term: f64,
    elastic: f64,
    nonlocal_term: f64,
    epsilon: f64,
    penalized_nonlocal: f64,
    box_term: f64,
    total: f64,
}

#[derive(Serialize)]
struct Inadmissible {
    element: usize,
    min_det: f64,
    nonpositive_elements: usize,
    elements: usize,
}

#[derive(Serialize)]
struct Refinement {
    n_coarse: usize,
    n_fine: usize,
    coarse: f64,
    fine: f64,
    ratio: f64,
    /// The value at least doubled under one mesh doubling.
    divergence_suspected: bool,
}

#[derive(Serialize)]
struct EvaluateSummary<'a> {
    scenario: &'a str,
    description: &'a str,
    variant: &'static str,
    n: usize,
    admissible: bool,
    inadmissible: Option<Inadmissible>,
    energy: Option<EnergySummary>,
    refinement: Option<Refinement>,
    cnc: &'a CncReport,
}

#[derive(Serialize)]
struct EvaluateRow<'a> {
    scenario: &'a str,
    n: usize,
    admissible: bool,
    grad_term: Option<f64>,
    det_term: Option<f64>,
    nonlocal_term: Option<f64>,
    epsilon: f64,
    box_term: Option<f64>,
    total: Option<f64>,
    det_integral: f64,
    image_area: f64,
    defect: f64,
    raster_tolerance: f64,
    max_multiplicity: u32,
    boundary_injective: bool,
}

fn energy_of(
    mesh: &selfrep_core::Mesh,
    field: &DeformationField,
    model: &ModelParams,
    repulsion: &RepulsionModel,
) -> Result<EnergySummary, CliError> {
    let elastic = elastic_value(mesh, field, model.p, model.r)?;
    let nonlocal_term = repulsion.evaluate(mesh, field, false)?.value;
    let box_term = model
        .confinement
        .map(|b| box_penalty(field.positions(), &b).0)
        .unwrap_or(0.0);
    let penalized = model.epsilon * nonlocal_term;
    Ok(EnergySummary {
        grad_term: elastic.grad_term,
        det_term: elastic.det_term,
        elastic: elastic.value,
        nonlocal_term,
        epsilon: model.epsilon,
        penalized_nonlocal: penalized,
        box_term,
        total: elastic.value + penalized + box_term,
    })
}

fn evaluate(common: &Common, pgm: bool) -> Result<(), CliError> {
    let loaded = require(common)?;
    let cfg = &loaded.config;
    let n = cfg.experiment.n;
    let res = cfg.experiment.resolution;
    let sc = scenario_for(common, n)?;
    let model = model_for(cfg, &sc);
    let quad = cfg.experiment.quadrature;
    let (mesh, field) = (&sc.mesh, &sc.field);

    let (cnc, raster) = cnc_defect_with_raster(mesh, field, res)?;
    let (worst, min_det) = field.min_det();
    let admissible = min_det > 0.0;
    let mut energy = None;
    let mut refinement = None;
    let mut inadmissible = None;
    if admissible {
        let repulsion = RepulsionModel::new(&model, mesh, quad)?;
        let e = energy_of(mesh, field, &model, &repulsion)?;
        if scenario::BUILTIN.contains(&sc.name.as_str()) {
            let fine = scenario::builtin(&sc.name, 2 * n)?;
            let fine_rep = RepulsionModel::new(&model, &fine.mesh, quad)?;
            let value = fine_rep.evaluate(&fine.mesh, &fine.field, false)?.value;
            let ratio = value / e.nonlocal_term;
            refinement = Some(Refinement {
                n_coarse: n,
                n_fine: 2 * n,
                coarse: e.nonlocal_term,
                fine: value,
                ratio,
                divergence_suspected: ratio >= 2.0,
            });
        }
        energy = Some(e);
    } else {
        let nonpositive = field
            .element_state()
            .iter()
            .filter(|s| s.det <= 0.0)
            .count();
        inadmissible = Some(Inadmissible {
            element: worst,
            min_det,
            nonpositive_elements: nonpositive,
            elements: mesh.num_triangles(),
        });
    }

    let run = RunDir::new(common, &sc.name);
    run.echo_config(
        "evaluate",
        Some(&loaded.text),
        common,
        n,
        res,
        cfg.optimizer.seed,
    )?;
    let summary = EvaluateSummary {
        scenario: &sc.name,
        description: &sc.description,
        variant: model.variant.name(),
        n,
        admissible,
        inadmissible,
        energy,
        refinement,
        cnc: &cnc,
    };
    run.write("summary.json", to_json(&summary)?)?;
    let e = summary.energy.as_ref();
    let row = EvaluateRow {
        scenario: &sc.name,
        n,
        admissible,
        grad_term: e.map(|e| e.grad_term),
        det_term: e.map(|e| e.det_term),
        nonlocal_term: e.map(|e| e.nonlocal_term),
        epsilon: model.epsilon,
        box_term: e.map(|e| e.box_term),
        total: e.map(|e| e.total),
        det_integral: cnc.det_integral,
        image_area: cnc.image_area,
        defect: cnc.defect,
        raster_tolerance: cnc.raster_tolerance,
        max_multiplicity: cnc.max_multiplicity,
        boundary_injective: cnc.boundary_injective,
    };
    run.write("evaluate.csv", rows_to_csv([row])?)?;
    if pgm {
        write_pgm(&run, &raster)?;
    }

    println!("scenario {} (n = {n}): {}", sc.name, sc.description);
    match (&summary.energy, &summary.inadmissible) {
        (Some(e), _) => println!(
            "energy: total {} = elastic {} + {} · {} [{}] + box {}",
            e.total,
            e.elastic,
            e.epsilon,
            e.nonlocal_term,
            model.variant.name(),
            e.box_term
        ),
        (None, Some(bad)) => println!(
            "inadmissible: det ∇y ≤ 0 on {} of {} elements (min {:e} on element {}); energy is +∞",
            bad.nonpositive_elements, bad.elements, bad.min_det, bad.element
        ),
        (None, None) => {}
    }
    if let Some(r) = &summary.refinement {
        println!(
            "refinement: {} at n = {}, {} at n = {}, ratio {:.4}{}",
            r.coarse,
            r.n_coarse,
            r.fine,
            r.n_fine,
            r.ratio,
            if r.divergence_suspected {
                " (divergent under refinement)"
            } else {
                ""
            }
        );
    }
    print_cnc(&cnc);
    println!("wrote {}", run.path().display());
    Ok(())
}

fn print_cnc(cnc: &CncReport) {
    println!(
        "cnc: ∫|det ∇y| {} − |y(Ω)| {} = defect {:e} (tolerance {:e}), max multiplicity {}, {} overlapping pairs, boundary {}",
        cnc.det_integral,
        cnc.image_area,
        cnc.defect,
        cnc.raster_tolerance,
        cnc.max_multiplicity,
        cnc.overlap_pairs.len(),
        match cnc.boundary_witness {
            None => "injective".to_string(),
            Some((a, b)) => format!("not injective (edges {a}, {b})"),
        }
    );
}

fn write_pgm(run: &RunDir, raster: &selfrep_core::Raster) -> Result<(), CliError> {
    let path = run.path().join("multiplicity.pgm");
    std::fs::create_dir_all(run.path())
        .and_then(|_| raster.write_pgm(&path))
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn field_json(sc: &Scenario, field: &DeformationField) -> Result<String, CliError> {
    Ok(to_json(&sc.mesh.to_file(Some(field.positions())))?)
}

#[derive(Serialize)]
struct MinimizeSummary<'a> {
    scenario: &'a str,
    variant: &'static str,
    n: usize,
    perturbation: f64,
    seed: u64,
    termination: Termination,
    iterations: usize,
    initial_total: f64,
    final_energy: EnergySummary,
    min_det: f64,
    cnc: CncReport,
}

fn minimize_cmd(common: &Common, amplitude: f64) -> Result<(), CliError> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(CliError::Config(
            "--perturb must be a finite nonnegative number".into(),
        ));
    }
    let loaded = require(common)?;
    let cfg = &loaded.config;
    let (n, res, seed) = (
        cfg.experiment.n,
        cfg.experiment.resolution,
        cfg.optimizer.seed,
    );
    let sc = scenario_for(common, n)?;
    let model = model_for(cfg, &sc);
    warn_regime(&model);
    let objective = Objective::new(&sc.mesh, model, cfg.experiment.quadrature)?;
    let y0 = if amplitude > 0.0 {
        scenario::perturb(&sc.mesh, &sc.field, amplitude, seed)
    } else {
        sc.field.clone()
    };

    let (y, trace) = minimize(&objective, y0, &cfg.optimizer)?;
    let final_energy = energy_of(&sc.mesh, &y, &model, objective.repulsion())?;
    let cnc = cnc_defect(&sc.mesh, &y, res)?;

    let run = RunDir::new(common, &sc.name);
    run.echo_config("minimize", Some(&loaded.text), common, n, res, seed)?;
    run.write("trace.csv", report::trace_csv(&trace)?)?;
    run.write("field.json", field_json(&sc, &y)?)?;
    let summary = MinimizeSummary {
        scenario: &sc.name,
        variant: model.variant.name(),
        n,
        perturbation: amplitude,
        seed,
        termination: trace.termination,
        iterations: trace.iterations(),
        initial_total: trace.records[0].total,
        final_energy,
        min_det: y.min_det().1,
        cnc,
    };
    run.write("summary.json", to_json(&summary)?)?;

    let last = trace.last();
    println!(
        "{} after {} iterations: total {} (from {}), |grad| {:e}, min det {:e}",
        trace.termination.name(),
        summary.iterations,
        last.total,
        summary.initial_total,
        last.grad_norm,
        summary.min_det
    );
    print_cnc(&summary.cnc);
    println!("wrote {}", run.path().display());
    if trace.termination == Termination::LineSearchFailed {
        return Err(CliError::Runtime(format!(
            "line search failed at iteration {}; partial results in {}",
            summary.iterations,
            run.path().display()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    scenario: &'a str,
    variant: &'static str,
    n: usize,
    schedule: Vec<f64>,
    penalized_nonlocal: Vec<f64>,
    /// `εₖ𝒟(yₖ) / εₖ₊₁𝒟(yₖ₊₁)`.
    ratios: Vec<f64>,
    defects: Vec<f64>,
    raster_tolerances: Vec<f64>,
    min_dets: Vec<f64>,
    terminations: Vec<&'static str>,
    final_elastic: f64,
    records: &'a [selfrep_core::optimizer::SweepRecord],
}

fn sweep_cmd(common: &Common) -> Result<(), CliError> {
    let loaded = require(common)?;
    let cfg = &loaded.config;
    let (n, res) = (cfg.experiment.n, cfg.experiment.resolution);
    let sc = scenario_for(common, n)?;
    let model = model_for(cfg, &sc);
    warn_regime(&model);
    let objective = Objective::new(&sc.mesh, model, cfg.experiment.quadrature)?;
    let schedule = cfg.experiment.schedule();
    let sweep = gamma_sweep(&objective, sc.field.clone(), &schedule, &cfg.optimizer, res)?;

    let run = RunDir::new(common, &sc.name);
    run.echo_config(
        "gamma-sweep",
        Some(&loaded.text),
        common,
        n,
        res,
        cfg.optimizer.seed,
    )?;
    run.write("sweep.csv", report::sweep_csv(&sweep)?)?;
    if let Some(y) = sweep.final_field() {
        run.write("field.json", field_json(&sc, y)?)?;
    }
    let penalized = sweep.penalized_series();
    let summary = SweepSummary {
        scenario: &sc.name,
        variant: model.variant.name(),
        n,
        ratios: penalized.windows(2).map(|w| w[0] / w[1]).collect(),
        penalized_nonlocal: penalized,
        schedule,
        defects: sweep.records.iter().map(|r| r.cnc.defect).collect(),
        raster_tolerances: sweep
            .records
            .iter()
            .map(|r| r.cnc.raster_tolerance)
            .collect(),
        min_dets: sweep.records.iter().map(|r| r.min_det).collect(),
        terminations: sweep.records.iter().map(|r| r.termination.name()).collect(),
        final_elastic: sweep
            .records
            .last()
            .map(|r| r.energy.elastic())
            .unwrap_or(f64::NAN),
        records: &sweep.records,
    };
    run.write("summary.json", to_json(&summary)?)?;

    println!(
        "{:>3} {:>12} {:>14} {:>12} {:>12} {:>12}  termination",
        "k", "epsilon", "eps*D", "defect", "tolerance", "min det"
    );
    for (k, r) in sweep.records.iter().enumerate() {
        println!(
            "{k:>3} {:>12.5e} {:>14.6e} {:>12.3e} {:>12.3e} {:>12.3e}  {}",
            r.epsilon,
            r.penalized_nonlocal,
            r.cnc.defect,
            r.cnc.raster_tolerance,
            r.min_det,
            r.termination.name()
        );
    }
    println!("final elastic energy {}", summary.final_elastic);
    println!("wrote {}", run.path().display());
    let failed: Vec<usize> = (0..sweep.records.len())
        .filter(|&k| sweep.records[k].termination == Termination::LineSearchFailed)
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Runtime(format!(
            "line search failed at schedule steps {failed:?}; results in {}",
            run.path().display()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct CncRow {
    scenario: String,
    n: usize,
    resolution: usize,
    det_integral: f64,
    image_area: f64,
    defect: f64,
    raster_tolerance: f64,
    max_multiplicity: u32,
    overlap_pairs: usize,
    boundary_injective: bool,
}

fn cnc_check(common: &Common) -> Result<(), CliError> {
    let loaded = load(common)?;
    let (n, res, seed) = match &loaded {
        Some(l) => (
            l.config.experiment.n,
            l.config.experiment.resolution,
            l.config.optimizer.seed,
        ),
        None => (
            common.n.unwrap_or(8),
            common.resolution.unwrap_or(DEFAULT_RESOLUTION),
            common.seed.unwrap_or(0),
        ),
    };
    let sc = scenario_for(common, n)?;
    let (cnc, raster) = cnc_defect_with_raster(&sc.mesh, &sc.field, res)?;

    let run = RunDir::new(common, &sc.name);
    run.echo_config(
        "cnc-check",
        loaded.as_ref().map(|l| l.text.as_str()),
        common,
        n,
        res,
        seed,
    )?;
    run.write("cnc.json", to_json(&cnc)?)?;
    let row = CncRow {
        scenario: sc.name.clone(),
        n,
        resolution: res,
        det_integral: cnc.det_integral,
        image_area: cnc.image_area,
        defect: cnc.defect,
        raster_tolerance: cnc.raster_tolerance,
        max_multiplicity: cnc.max_multiplicity,
        overlap_pairs: cnc.overlap_pairs.len(),
        boundary_injective: cnc.boundary_injective,
    };
    run.write("cnc.csv", rows_to_csv([row])?)?;
    write_pgm(&run, &raster)?;

    println!("scenario {} (n = {n}, resolution {res})", sc.name);
    print_cnc(&cnc);
    println!("wrote {}", run.path().display());
    Ok(())
}

#[derive(Serialize)]
struct BenchSummary<'a> {
    variant: &'static str,
    sizes: &'a [usize],
    repeats: usize,
    fitted_slope: f64,
    pair_slope: f64,
}

fn bench_scaling(common: &Common, sizes: Option<&[usize]>) -> Result<(), CliError> {
    let loaded = require(common)?;
    let cfg = &loaded.config;
    let sizes = sizes.unwrap_or(&cfg.experiment.bench_sizes);
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(CliError::Config(
            "need at least two positive mesh sizes".into(),
        ));
    }
    let repeats = cfg.experiment.bench_repeats;
    let profile = cost_profile(sizes, &cfg.model, &cfg.experiment.quadrature, repeats)?;

    let run = RunDir::new(common, "bench-scaling");
    run.echo_config(
        "bench-scaling",
        Some(&loaded.text),
        common,
        cfg.experiment.n,
        cfg.experiment.resolution,
        cfg.optimizer.seed,
    )?;
    run.write("cost.csv", report::cost_csv(&profile)?)?;
    let summary = BenchSummary {
        variant: cfg.model.variant.name(),
        sizes,
        repeats,
        fitted_slope: profile.fitted_slope,
        pair_slope: profile.pair_slope,
    };
    run.write("summary.json", to_json(&summary)?)?;

    println!(
        "{:>5} {:>10} {:>12} {:>14}",
        "n", "h", "pairs", "median [s]"
    );
    for r in &profile.rows {
        println!(
            "{:>5} {:>10.5} {:>12} {:>14.6e}",
            r.n, r.h, r.pairs, r.median_seconds
        );
    }
    println!(
        "{}: fitted time slope {:.3}, pair-count slope {:.3}",
        summary.variant, profile.fitted_slope, profile.pair_slope
    );
    println!("wrote {}", run.path().display());
    Ok(())
}

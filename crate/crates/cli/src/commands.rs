use std::f64::consts::TAU;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use ctsr_core::cases::{sample_for, scalar_problems, tensor_problem, CasePreset, DatasetSource};
use ctsr_core::dataset::{load_dataset, save_dataset, GridDataset, QuantityDecl};
use ctsr_core::invariance::{equivariance_matrix, FieldSource, OrthogonalTransform};
use ctsr_core::library::{build_scalar_library, build_tensor_library, expand_template, LibraryMode, LibraryReport, LibrarySpec};
use ctsr_core::selection::{derived_seed, prediction_error, prediction_error_labels, redundancy_count, redundancy_count_labels, sweep_dtol, GridSpec, SweepReport};
use ctsr_core::solver::{train_stridge, Hyperparams, SparseSolution, TolSchedule};
use ctsr_core::symbolic::{FactorKind, Template};
use ctsr_core::synthetic::{manufactured_dataset, AnalyticQuantity, AnalyticSource, DerivativeMode, FamilyParams, ManufacturedEquation, ManufacturedSpec};

use crate::config::{Run, RunConfig};
use crate::{BenchArgs, Common, EquivArgs, Exit, ParetoArgs, SelftestArgs};

const DEFAULT_OUTPUT_DIR: &str = "ctsr-output";
const OUTPUT_ENV: &str = "CTSR_OUTPUT_DIR";
const DATASET_FILE: &str = "dataset.ctsr";

/// Tensor library sizes reported for the presets in the reference study.
fn reference_count(case: CasePreset, mode: LibraryMode) -> usize {
    let i = CasePreset::ALL.iter().position(|c| *c == case).unwrap();
    match mode {
        LibraryMode::Tensor => [17, 74, 34, 115][i],
        LibraryMode::Scalar => [77, 374, 734, 1530][i],
    }
}

fn resolve_output(flag: &Option<PathBuf>, config: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| config.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// Loads the config, applies command-line overrides, creates the output
/// directory and records the effective config there.
fn prepare(c: &Common) -> anyhow::Result<(Run, PathBuf)> {
    let mut config = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(case) = &c.case {
        config.case = case.clone();
    }
    if let Some(mode) = c.mode {
        config.mode = mode.into();
    }
    if let Some(path) = &c.dataset {
        config.dataset = Some(path.clone());
        config.source = None;
    }
    let mut config = config.effective()?;
    let hyper = config.hyper.as_mut().unwrap();
    let sampling = config.sampling.as_mut().unwrap();
    if let Some(seed) = c.seed {
        sampling.seed = seed;
        hyper.seed = seed;
        match &mut config.source {
            Some(DatasetSource::Burgers(b)) => b.seed = seed,
            Some(DatasetSource::Manufactured(m)) => m.seed = seed,
            None => {}
        }
    }
    if let Some(d) = c.d_tol {
        hyper.d_tol = d;
    }
    if let Some(l) = c.lambda {
        hyper.lambda = l;
    }
    if let Some(s) = c.schedule {
        hyper.tol_schedule = s.into();
    }
    if let Some(n) = c.n_space {
        sampling.n_space = n;
    }
    if let Some(n) = c.n_time {
        sampling.n_time = n;
    }
    let out = resolve_output(&c.output_dir, &config.output_dir);
    config.output_dir = Some(out.clone());
    let run = Run::new(&config)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("effective_config.toml"), run.config.to_toml()?)?;
    Ok((run, out))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn component_name(free: &[u8]) -> String {
    if free.is_empty() {
        "scalar".into()
    } else {
        free.iter().map(|c| ["x", "y", "z"][*c as usize]).collect()
    }
}

pub fn gen_data(c: &Common) -> anyhow::Result<()> {
    let (run, out) = prepare(c)?;
    let Some(source) = &run.config.source else {
        bail!("gen-data needs a generator; the config names an existing dataset");
    };
    let ds = source.generate()?;
    let path = out.join(DATASET_FILE);
    save_dataset(&ds, &path)?;
    let provenance = json!({
        "case": run.config.case,
        "source": source,
        "shape": ds.shape,
        "spacing": ds.spacing,
        "dt": ds.dt,
        "snapshots": ds.times,
        "steady": ds.times == 1,
        "boundary": ds.boundary,
        "quantities": ds.quantities,
        "fields": ds.fields.keys().collect::<Vec<_>>(),
        "metadata": ds.metadata,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_json(&out.join("provenance.json"), &provenance)?;
    let timing = if ds.times == 1 {
        "steady, one snapshot".to_string()
    } else {
        format!("{} snapshots at dt {}", ds.times, ds.dt)
    };
    println!("wrote {}: grid {:?}, {timing}, {} fields", path.display(), ds.shape, ds.fields.len());
    Ok(())
}

pub fn build_library(c: &Common) -> anyhow::Result<()> {
    let (run, out) = prepare(c)?;
    let report = match run.library.mode {
        LibraryMode::Tensor => LibraryReport::tensor(&build_tensor_library(&run.library)?),
        LibraryMode::Scalar => LibraryReport::scalar(&build_scalar_library(&run.library)?),
    };
    fs::write(out.join("library.txt"), report.to_text())?;
    report.write_csv(create(&out.join("library.csv"))?)?;
    let mode = format!("{:?}", run.library.mode).to_lowercase();
    match run.preset {
        Some(p) => {
            let reference = reference_count(p, run.library.mode);
            let note = if reference == report.count { "matches" } else { "differs from" };
            println!(
                "{} {mode} library: {} candidates ({note} the reference count {reference})",
                p.name(),
                report.count
            );
        }
        None => println!("custom {mode} library: {} candidates", report.count),
    }
    Ok(())
}

#[derive(Serialize)]
struct ComponentResult {
    component: String,
    rows: usize,
    columns: usize,
    pruned: Vec<ctsr_core::assembly::PrunedColumn>,
    equation: String,
    prediction_error: Option<f64>,
    redundant_terms: Option<usize>,
    solution: SparseSolution,
}

pub fn discover(c: &Common) -> anyhow::Result<()> {
    let (run, out) = prepare(c)?;
    let ds = run.dataset()?;
    let results = fit(&run, &ds, &run.hyper)?;
    let lhs = describe_lhs(&run);
    for r in &results {
        let file = if run.library.mode == LibraryMode::Tensor {
            "solution.csv".to_string()
        } else {
            format!("solution_{}.csv", r.component)
        };
        r.solution.write_csv(create(&out.join(file))?)?;
        let label = if run.library.mode == LibraryMode::Tensor { lhs.clone() } else { format!("{lhs}[{}]", r.component) };
        println!("{label} = {}", r.equation);
        if let (Some(err), Some(red)) = (r.prediction_error, r.redundant_terms) {
            println!("  prediction error {err:.4}%, redundant terms {red}");
        }
    }
    let diagnostics = json!({
        "case": run.config.case,
        "mode": run.library.mode,
        "lhs": lhs,
        "hyperparameters": run.hyper,
        "sampling": run.sampling,
        "components": results,
    });
    write_json(&out.join("diagnostics.json"), &diagnostics)?;
    Ok(())
}

fn describe_lhs(run: &Run) -> String {
    match &run.lhs {
        ctsr_core::assembly::LhsSpec::TimeDerivative { quantity } => format!("d{quantity}/dt"),
        ctsr_core::assembly::LhsSpec::Channel { quantity } => quantity.clone(),
        ctsr_core::assembly::LhsSpec::Combination(terms) => terms
            .iter()
            .map(|(c, t)| format!("{c:+} {t}"))
            .collect::<Vec<_>>()
            .join(" "),
    }
}

/// One result for the tensor problem or one per left-hand component.
fn fit(run: &Run, ds: &GridDataset, hyper: &Hyperparams) -> anyhow::Result<Vec<ComponentResult>> {
    let table = sample_for(ds, &run.library, &run.lhs, run.sampling)?;
    match run.library.mode {
        LibraryMode::Tensor => {
            let (_, problem) = tensor_problem(&run.library, &run.lhs, &table)?;
            let solution = train_stridge(&problem, hyper)?;
            let (err, red) = match &run.truth {
                Some(t) => (Some(prediction_error(&solution, t)?), Some(redundancy_count(&solution, t)?)),
                None => (None, None),
            };
            Ok(vec![ComponentResult {
                component: "all".into(),
                rows: problem.n_rows(),
                columns: problem.n_cols(),
                pruned: problem.pruned.clone(),
                equation: solution.equation(),
                prediction_error: err,
                redundant_terms: red,
                solution,
            }])
        }
        LibraryMode::Scalar => {
            let (library, problems) = scalar_problems(&run.library, &run.lhs, &table, run.stacking)?;
            problems
                .iter()
                .map(|(free, problem)| {
                    let solution = train_stridge(problem, hyper)?;
                    let (err, red) = match &run.truth {
                        Some(t) => {
                            let labels = t.scalar_component(run.library.spatial_dim, free, &library, problem)?;
                            if labels.is_empty() {
                                (None, None)
                            } else {
                                (
                                    Some(prediction_error_labels(&solution, &labels)?),
                                    Some(redundancy_count_labels(&solution, &labels)?),
                                )
                            }
                        }
                        None => (None, None),
                    };
                    Ok(ComponentResult {
                        component: component_name(free),
                        rows: problem.n_rows(),
                        columns: problem.n_cols(),
                        pruned: problem.pruned.clone(),
                        equation: solution.equation(),
                        prediction_error: err,
                        redundant_terms: red,
                        solution,
                    })
                })
                .collect()
        }
    }
}

pub fn pareto(a: &ParetoArgs) -> anyhow::Result<()> {
    let (mut run, out) = prepare(&a.common)?;
    if run.library.mode != LibraryMode::Tensor {
        bail!("pareto sweeps the tensor problem; use --mode tensor");
    }
    if let Some(points) = a.points {
        run.config.sweep.points = points;
        fs::write(out.join("effective_config.toml"), run.config.to_toml()?)?;
    }
    let ds = run.dataset()?;
    let table = sample_for(&ds, &run.library, &run.lhs, run.sampling)?;
    let (_, problem) = tensor_problem(&run.library, &run.lhs, &table)?;
    let mut variants = vec![("pareto", run.hyper.clone())];
    if a.raw || run.preset == Some(CasePreset::Giesekus3d) {
        let raw = Hyperparams {
            normalize_columns: !run.hyper.normalize_columns,
            ..run.hyper.clone()
        };
        variants.push((if run.hyper.normalize_columns { "pareto_raw" } else { "pareto_normalized" }, raw));
    }
    for (name, hyper) in variants {
        let report = SweepReport::new(sweep_dtol(&problem, &hyper, &run.config.sweep)?);
        report.write_csv(create(&out.join(format!("{name}.csv")))?)?;
        fs::write(out.join(format!("{name}.svg")), report.to_svg())?;
        let columns = if hyper.normalize_columns { "normalized columns" } else { "raw columns" };
        println!(
            "{name} ({columns}): {} points, {} on the front",
            report.points.len(),
            report.front.len()
        );
        let mut summary = json!({
            "normalize_columns": hyper.normalize_columns,
            "grid": run.config.sweep,
            "front": report.front.iter().map(|&i| json!({
                "d_tol": report.points[i].d_tol,
                "sparsity": report.points[i].sparsity,
                "residual": report.points[i].residual,
            })).collect::<Vec<_>>(),
            "knee_d_tol": report.suggested_dtol(),
            "knee_method": report.knee_method,
        });
        match report.selected() {
            Some(k) => {
                let point = &report.points[k];
                println!("  selected d_tol {:.4e}: {}", point.d_tol, point.solution.equation());
                summary["selected"] = json!({
                    "d_tol": point.d_tol,
                    "equation": point.solution.equation(),
                });
                if let Some(t) = &run.truth {
                    let err = prediction_error(&point.solution, t)?;
                    let red = redundancy_count(&point.solution, t)?;
                    println!("  prediction error {err:.4}%, redundant terms {red}");
                    summary["selected"]["prediction_error"] = json!(err);
                    summary["selected"]["redundant_terms"] = json!(red);
                }
            }
            None => println!("  no knee: the front has fewer than three distinct points"),
        }
        write_json(&out.join(format!("{name}.json")), &summary)?;
    }
    Ok(())
}

/// Random analytic fields for every library input.
fn analytic_inputs(spec: &LibrarySpec, seed: u64) -> AnalyticSource {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut source = AnalyticSource::new(spec.spatial_dim);
    for input in &spec.inputs {
        let decl = if input.symmetric_base {
            QuantityDecl::symmetric(&input.name, input.base_order)
        } else {
            QuantityDecl::new(&input.name, input.base_order)
        };
        source.insert(AnalyticQuantity::random(decl, spec.spatial_dim, &FamilyParams::default(), &mut rng));
    }
    source
}

/// Grid fields for the lattice checks: stencil-only manufactured data for
/// presets, otherwise the configured dataset.
fn lattice_grid(run: &Run) -> anyhow::Result<GridDataset> {
    match run.preset {
        Some(p) => {
            let mut spec = ManufacturedSpec::new(match p {
                CasePreset::Burgers2d => ManufacturedEquation::Burgers2d,
                _ => p.equation(),
            });
            spec.n = 12;
            spec.times = 4;
            spec.seed = run.sampling.seed;
            spec.derivative_mode = DerivativeMode::Stencil;
            Ok(manufactured_dataset(&spec)?)
        }
        None => run.dataset(),
    }
}

pub fn equiv_check(a: &EquivArgs) -> anyhow::Result<()> {
    let (run, out) = prepare(&a.common)?;
    let mut spec = run.library.clone();
    spec.mode = LibraryMode::Tensor;
    let terms = build_tensor_library(&spec)?.terms();
    let dim = spec.spatial_dim;
    let seed = run.sampling.seed;

    let analytic = FieldSource::Analytic(analytic_inputs(&spec, seed));
    let positions = analytic.sample_positions(a.positions, TAU, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, 1));
    let mut transforms = Vec::with_capacity(2 * a.transforms);
    for i in 0..a.transforms {
        transforms.push(OrthogonalTransform::random_rotation(dim, &mut rng).with_name(format!("rotation-{i}")));
    }
    for i in 0..a.transforms {
        transforms.push(OrthogonalTransform::random_reflection(dim, &mut rng).with_name(format!("reflection-{i}")));
    }
    let analytic_matrix = equivariance_matrix(&terms, &analytic, &transforms, &positions)?;
    analytic_matrix.write_csv(create(&out.join("equivariance_analytic.csv"))?)?;

    let grid = FieldSource::Grid(lattice_grid(&run)?);
    let nodes = grid.sample_positions(a.positions.max(1) + 10, 0.0, seed);
    let lattice_matrix = equivariance_matrix(&terms, &grid, &OrthogonalTransform::lattice_group(dim), &nodes)?;
    lattice_matrix.write_csv(create(&out.join("equivariance_lattice.csv"))?)?;

    let lines = [
        format!("{} candidates", terms.len()),
        format!("analytic rotations and reflections: {}", analytic_matrix.summary(a.threshold)),
        format!("lattice symmetries on grid stencils: {}", lattice_matrix.summary(a.lattice_threshold)),
    ];
    let text = lines.join("\n") + "\n";
    print!("{text}");
    fs::write(out.join("equivariance_summary.txt"), &text)?;
    let failures: Vec<&str> = analytic_matrix
        .failures(a.threshold)
        .into_iter()
        .chain(lattice_matrix.failures(a.lattice_threshold))
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Exit(2, format!("equivariance violated by: {}", failures.join(", "))).into())
    }
}

#[derive(Serialize)]
struct Quartiles {
    runs: usize,
    mean: f64,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
}

fn quartiles(values: &[f64]) -> Quartiles {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Quartiles {
        runs: v.len(),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        min: v[0],
        q1: at(0.25),
        median: at(0.5),
        q3: at(0.75),
        max: v[v.len() - 1],
    }
}

pub fn bench(a: &BenchArgs) -> anyhow::Result<()> {
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let (run, out) = prepare(&a.common)?;
    if run.truth.is_none() {
        bail!("bench needs a ground truth to score errors");
    }
    let ds = run.dataset()?;
    let base = run.sampling.seed;

    let mut errors = csv::Writer::from_writer(create(&out.join("bench_errors.csv"))?);
    errors.write_record(["seed", "mode", "component", "prediction_error", "redundant_terms", "nnz"])?;
    let mut timings = csv::Writer::from_writer(create(&out.join("bench_timings.csv"))?);
    timings.write_record(["seed", "mode", "library_construction_s", "sparse_regression_s"])?;
    // (mode, component) -> errors across seeds
    let mut collected: Vec<((String, String), Vec<f64>)> = Vec::new();
    let mut stage_totals = [[0.0f64; 2]; 2];

    for i in 0..a.seeds {
        let seed = derived_seed(base, i);
        for (m, mode) in [LibraryMode::Tensor, LibraryMode::Scalar].into_iter().enumerate() {
            let mut config = run.config.clone();
            config.mode = mode;
            config.library = None;
            config.stacking = None;
            if run.preset.is_none() {
                let mut lib = run.library.clone();
                lib.mode = mode;
                config.library = Some(lib);
                config.stacking = Some(run.stacking);
            }
            config.sampling.as_mut().unwrap().seed = seed;
            config.hyper.as_mut().unwrap().seed = seed;
            let r = Run::new(&config)?;
            let table = sample_for(&ds, &r.library, &r.lhs, r.sampling)?;
            let truth = r.truth.as_ref().unwrap();

            let mut rows: Vec<(String, f64, usize, usize)> = Vec::new();
            let (build, regress);
            match mode {
                LibraryMode::Tensor => {
                    let start = Instant::now();
                    let (_, problem) = tensor_problem(&r.library, &r.lhs, &table)?;
                    build = start.elapsed().as_secs_f64();
                    let start = Instant::now();
                    let sol = train_stridge(&problem, &r.hyper)?;
                    regress = start.elapsed().as_secs_f64();
                    rows.push(("all".into(), prediction_error(&sol, truth)?, redundancy_count(&sol, truth)?, sol.nnz()));
                }
                LibraryMode::Scalar => {
                    let start = Instant::now();
                    let (library, problems) = scalar_problems(&r.library, &r.lhs, &table, r.stacking)?;
                    build = start.elapsed().as_secs_f64();
                    let start = Instant::now();
                    let sols = problems.iter().map(|(_, p)| train_stridge(p, &r.hyper)).collect::<Result<Vec<_>, _>>()?;
                    regress = start.elapsed().as_secs_f64();
                    for ((free, problem), sol) in problems.iter().zip(&sols) {
                        let labels = truth.scalar_component(r.library.spatial_dim, free, &library, problem)?;
                        if labels.is_empty() {
                            continue;
                        }
                        rows.push((
                            component_name(free),
                            prediction_error_labels(sol, &labels)?,
                            redundancy_count_labels(sol, &labels)?,
                            sol.nnz(),
                        ));
                    }
                }
            }
            let mode_name = format!("{mode:?}").to_lowercase();
            timings.write_record([seed.to_string(), mode_name.clone(), format!("{build:.6}"), format!("{regress:.6}")])?;
            stage_totals[m][0] += build;
            stage_totals[m][1] += regress;
            for (component, err, red, nnz) in rows {
                errors.write_record([seed.to_string(), mode_name.clone(), component.clone(), format!("{err:e}"), red.to_string(), nnz.to_string()])?;
                let key = (mode_name.clone(), component);
                match collected.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, v)) => v.push(err),
                    None => collected.push((key, vec![err])),
                }
            }
        }
    }
    errors.flush()?;
    timings.flush()?;

    let mut summary = csv::Writer::from_writer(create(&out.join("bench_summary.csv"))?);
    summary.write_record(["mode", "component", "runs", "mean", "min", "q1", "median", "q3", "max"])?;
    println!("prediction error (%) over {} seeds:", a.seeds);
    for ((mode, component), values) in &collected {
        let q = quartiles(values);
        summary.write_record([
            mode.clone(),
            component.clone(),
            q.runs.to_string(),
            format!("{:e}", q.mean),
            format!("{:e}", q.min),
            format!("{:e}", q.q1),
            format!("{:e}", q.median),
            format!("{:e}", q.q3),
            format!("{:e}", q.max),
        ])?;
        println!(
            "  {mode:<6} {component:<5} mean {:.4} median {:.4} [q1 {:.4}, q3 {:.4}]",
            q.mean, q.median, q.q1, q.q3
        );
    }
    summary.flush()?;
    let n = a.seeds as f64;
    println!("mean stage timings (s):");
    for (m, name) in ["tensor", "scalar"].iter().enumerate() {
        println!(
            "  {name:<6} library construction {:.4}, sparse regression {:.4}",
            stage_totals[m][0] / n,
            stage_totals[m][1] / n
        );
    }
    if stage_totals[0][1] > 0.0 {
        println!("  regression speed-up of tensor mode: {:.1}x", stage_totals[1][1] / stage_totals[0][1]);
    }
    Ok(())
}

pub fn selftest(a: &SelftestArgs) -> anyhow::Result<()> {
    let out = resolve_output(&a.output_dir, &None);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let checks: [(&str, fn(&Path) -> anyhow::Result<bool>); 6] = [
        ("scalar library counts", check_scalar_counts),
        ("template expansion", check_template),
        ("true terms in tensor libraries", check_truth_terms),
        ("manufactured Burgers recovery", check_recovery),
        ("lattice equivariance on grid stencils", check_lattice),
        ("dataset round trip", check_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let ok = match check(&out) {
            Ok(ok) => ok,
            Err(e) => {
                eprintln!("  {name}: {e:#}");
                false
            }
        };
        failed += usize::from(!ok);
        println!("{} {name} ({:.2} s)", if ok { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        return Err(Exit(3, format!("{failed} self-test check(s) failed")).into());
    }
    Ok(())
}

fn check_scalar_counts(_: &Path) -> anyhow::Result<bool> {
    for case in CasePreset::ALL {
        let n = build_scalar_library(&case.library_spec(LibraryMode::Scalar))?.len();
        if n != reference_count(case, LibraryMode::Scalar) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_template(_: &Path) -> anyhow::Result<bool> {
    let template = Template::new(vec![FactorKind::new("u", 1, 0, false), FactorKind::new("u", 1, 1, false)]);
    let canonical = expand_template(&template, 1);
    Ok(template.raw_assignment_count() == 27 && canonical.len() == 3)
}

fn check_truth_terms(_: &Path) -> anyhow::Result<bool> {
    for case in CasePreset::ALL {
        let lib = build_tensor_library(&case.library_spec(LibraryMode::Tensor))?;
        if case.truth().terms.iter().any(|(t, _)| lib.position(t).is_none()) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_recovery(_: &Path) -> anyhow::Result<bool> {
    let mut spec = ManufacturedSpec::new(ManufacturedEquation::Burgers2d);
    spec.n = 24;
    spec.times = 8;
    let ds = manufactured_dataset(&spec)?;
    let lib = CasePreset::Burgers2d.library_spec(LibraryMode::Tensor);
    let lhs = CasePreset::Convection2d.lhs();
    let sampling = ctsr_core::cases::Sampling {
        n_space: 50,
        n_time: 4,
        seed: 0,
    };
    let table = sample_for(&ds, &lib, &lhs, sampling)?;
    let (_, problem) = tensor_problem(&lib, &lhs, &table)?;
    let hyper = Hyperparams {
        tol_schedule: TolSchedule::Additive,
        ..Hyperparams::default()
    };
    let report = SweepReport::new(sweep_dtol(&problem, &hyper, &GridSpec::default())?);
    let Some(k) = report.selected() else {
        return Ok(false);
    };
    let sol = &report.points[k].solution;
    let truth = CasePreset::Burgers2d.truth();
    Ok(prediction_error(sol, &truth)? < 1e-2 && redundancy_count(sol, &truth)? == 0)
}

fn check_lattice(_: &Path) -> anyhow::Result<bool> {
    let lib = build_tensor_library(&CasePreset::Burgers2d.library_spec(LibraryMode::Tensor))?;
    let mut spec = ManufacturedSpec::new(ManufacturedEquation::Burgers2d);
    spec.n = 10;
    spec.times = 4;
    spec.derivative_mode = DerivativeMode::Stencil;
    let grid = FieldSource::Grid(manufactured_dataset(&spec)?);
    let nodes = grid.sample_positions(20, 0.0, 0);
    let m = equivariance_matrix(&lib.terms(), &grid, &OrthogonalTransform::lattice_group(2), &nodes)?;
    Ok(m.passes(1e-13))
}

fn check_round_trip(out: &Path) -> anyhow::Result<bool> {
    let mut spec = ManufacturedSpec::new(ManufacturedEquation::Giesekus3d);
    spec.n = 5;
    let ds = manufactured_dataset(&spec)?;
    let path = out.join("selftest_dataset.ctsr");
    save_dataset(&ds, &path)?;
    let back = load_dataset(&path)?;
    fs::remove_file(&path)?;
    Ok(back == ds)
}

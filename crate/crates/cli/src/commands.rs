use disparity::inference::{bootstrap_decomposition, BootstrapOptions, GroupIntervals};
use disparity::sensitivity::{
    benchmark_covariates, diagonal_summary, prepare_sensitivity_inputs, sensitivity_grid,
};
use disparity::sim::{self, presets, OracleMethod, StructuralModel};
use disparity::{
    decompose as decompose_joint, decompose_interposed, decompose_regression, load_table,
    validate_config, AnalysisConfig, DecompositionEstimate, Error, EstimatorKind, EstimatorOptions,
    ObservationTable, Result, Scenario,
};
use serde::Serialize;
use serde_json::json;

use crate::output::{num, write_csv, write_json, RunManifest};
use crate::{
    AnalysisArgs, DecomposeArgs, EstimatorChoice, ModelArgs, OracleArgs, OracleChoice,
    SensitivityArgs, SimulateArgs, ValidateArgs,
};

struct Loaded {
    config: AnalysisConfig,
    table: ObservationTable,
    dropped_rows: usize,
}

fn load(args: &AnalysisArgs) -> Result<Loaded> {
    let mut config = AnalysisConfig::from_file(&args.config)?;
    if let Some(p) = args.trim_pct {
        if !(p > 0.0 && p <= 100.0) {
            return Err(Error::Config(format!(
                "--trim-pct must lie in (0, 100]; got {p}"
            )));
        }
        config.weight_trim = Some(p / 100.0);
    }
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Error::Config(format!(
            "--level must lie in (0, 1); got {}",
            args.level
        )));
    }
    let ingested = load_table(&args.data, &config.schema())?;
    let binding = validate_config(&config, &ingested.table)?;
    if args.strict {
        binding.require_positivity()?;
    }
    for d in &binding.diagnostics {
        eprintln!("warning: {d}");
    }
    Ok(Loaded {
        config,
        table: ingested.table,
        dropped_rows: ingested.dropped_rows,
    })
}

fn analysis_manifest(
    command: &str,
    args: &AnalysisArgs,
    extra: serde_json::Value,
) -> Result<RunManifest> {
    let mut options = json!({
        "level": args.level,
        "differential": args.differential,
        "strict": args.strict,
        "trim_pct": args.trim_pct,
    });
    if let (Some(o), serde_json::Value::Object(e)) = (options.as_object_mut(), extra) {
        o.extend(e);
    }
    let mut m = RunManifest::new(command, args.seed, args.bootstrap, options);
    m.input(&args.config)?;
    m.input(&args.data)?;
    Ok(m)
}

fn run(
    kind: EstimatorKind,
    config: &AnalysisConfig,
    table: &ObservationTable,
    opts: &EstimatorOptions,
) -> Result<DecompositionEstimate> {
    match kind {
        EstimatorKind::Weighting | EstimatorKind::WeightingDifferential => {
            decompose_joint(config, table, opts)
        }
        EstimatorKind::WeightingInterposed => decompose_interposed(config, table, opts),
        EstimatorKind::Regression => decompose_regression(config, table, opts),
    }
}

/// Estimators requested by `choice`. Under `all`, variants whose
/// preconditions the configuration does not meet are skipped with a note.
fn plan(
    choice: EstimatorChoice,
    config: &AnalysisConfig,
    differential: bool,
    notes: &mut Vec<String>,
) -> Vec<EstimatorKind> {
    let weighting = match (config.scenario, differential) {
        (Scenario::InterposedConfounder, _) => EstimatorKind::WeightingInterposed,
        (Scenario::JointMediators, true) => EstimatorKind::WeightingDifferential,
        (Scenario::JointMediators, false) => EstimatorKind::Weighting,
    };
    match choice {
        EstimatorChoice::Weighting => vec![weighting],
        EstimatorChoice::Regression => vec![EstimatorKind::Regression],
        EstimatorChoice::Interposed => vec![EstimatorKind::WeightingInterposed],
        EstimatorChoice::All => {
            let mut kinds = vec![weighting];
            if differential || !config.interactions.is_empty() {
                notes.push("regression estimator skipped: it supports main effects only".into());
            } else {
                kinds.push(EstimatorKind::Regression);
            }
            let interposed_ok =
                !config.confounders_post.is_empty() || config.confounders_pre.is_empty();
            if weighting != EstimatorKind::WeightingInterposed {
                if interposed_ok {
                    kinds.push(EstimatorKind::WeightingInterposed);
                } else {
                    notes.push("interposed estimator skipped: no post-exposure confounders".into());
                }
            }
            kinds
        }
    }
}

struct Estimated {
    estimate: DecompositionEstimate,
    intervals: Option<Vec<GroupIntervals>>,
    failures: usize,
}

fn estimate(kind: EstimatorKind, loaded: &Loaded, args: &AnalysisArgs) -> Result<Estimated> {
    let opts = EstimatorOptions {
        differential: args.differential,
        seed: args.seed,
    };
    let estimate = run(kind, &loaded.config, &loaded.table, &opts)?;
    if args.bootstrap == 0 {
        return Ok(Estimated {
            estimate,
            intervals: None,
            failures: 0,
        });
    }
    let group_col = loaded.table.require(&loaded.config.group)?;
    let bopts = BootstrapOptions {
        replicates: args.bootstrap,
        seed: args.seed,
        level: args.level,
        stratified: true,
    };
    let (result, intervals) =
        bootstrap_decomposition(&loaded.table, group_col, &estimate, &bopts, |t, seed| {
            run(kind, &loaded.config, t, &EstimatorOptions { seed, ..opts })
        })?;
    Ok(Estimated {
        estimate,
        intervals: Some(intervals),
        failures: result.failures,
    })
}

#[derive(Serialize)]
struct DecompositionRow {
    estimator: &'static str,
    group: String,
    tau: f64,
    tau_ci_lo: Option<f64>,
    tau_ci_hi: Option<f64>,
    zeta: f64,
    zeta_ci_lo: Option<f64>,
    zeta_ci_hi: Option<f64>,
    delta: f64,
    delta_ci_lo: Option<f64>,
    delta_ci_hi: Option<f64>,
    pct_reduction: Option<f64>,
}

const DECOMPOSITION_HEADER: [&str; 12] = [
    "estimator",
    "group",
    "tau",
    "tau_ci_lo",
    "tau_ci_hi",
    "zeta",
    "zeta_ci_lo",
    "zeta_ci_hi",
    "delta",
    "delta_ci_lo",
    "delta_ci_hi",
    "pct_reduction",
];

fn rows(e: &Estimated) -> Vec<DecompositionRow> {
    e.estimate
        .groups
        .iter()
        .map(|g| {
            let iv = e
                .intervals
                .as_ref()
                .and_then(|v| v.iter().find(|i| i.level == g.level));
            DecompositionRow {
                estimator: e.estimate.estimator.as_str(),
                group: g.level.clone(),
                tau: g.tau,
                tau_ci_lo: iv.map(|i| i.tau.lo),
                tau_ci_hi: iv.map(|i| i.tau.hi),
                zeta: g.zeta,
                zeta_ci_lo: iv.map(|i| i.zeta.lo),
                zeta_ci_hi: iv.map(|i| i.zeta.hi),
                delta: g.delta,
                delta_ci_lo: iv.map(|i| i.delta.lo),
                delta_ci_hi: iv.map(|i| i.delta.hi),
                pct_reduction: g.pct_reduction,
            }
        })
        .collect()
}

fn csv_row(r: &DecompositionRow) -> Vec<String> {
    vec![
        r.estimator.to_string(),
        r.group.clone(),
        num(Some(r.tau)),
        num(r.tau_ci_lo),
        num(r.tau_ci_hi),
        num(Some(r.zeta)),
        num(r.zeta_ci_lo),
        num(r.zeta_ci_hi),
        num(Some(r.delta)),
        num(r.delta_ci_lo),
        num(r.delta_ci_hi),
        num(r.pct_reduction),
    ]
}

pub fn decompose(args: &DecomposeArgs) -> Result<()> {
    let a = &args.common;
    let loaded = load(a)?;
    let mut manifest = analysis_manifest(
        "decompose",
        a,
        json!({ "estimator": format!("{:?}", args.estimator).to_lowercase() }),
    )?;
    if loaded.dropped_rows > 0 {
        manifest.notes.push(format!(
            "{} rows with missing values dropped",
            loaded.dropped_rows
        ));
    }
    let kinds = plan(
        args.estimator,
        &loaded.config,
        a.differential,
        &mut manifest.notes,
    );
    let mut all_rows = Vec::new();
    let mut details = Vec::new();
    for kind in kinds {
        let e = estimate(kind, &loaded, a)?;
        if e.failures > 0 {
            manifest.notes.push(format!(
                "{}: {} bootstrap replicates failed and were dropped",
                kind.as_str(),
                e.failures
            ));
        }
        all_rows.extend(rows(&e));
        details.push(json!({
            "estimator": kind.as_str(),
            "reference": e.estimate.reference,
            "reference_trimmed": e.estimate.reference_trimmed,
            "diagnostics": e.estimate.diagnostics,
            "groups": e.estimate.groups,
            "intervals": e.intervals,
        }));
    }
    let dir = &a.out_dir;
    let csv_rows: Vec<Vec<String>> = all_rows.iter().map(csv_row).collect();
    write_csv(
        &manifest.output(dir, "decomposition.csv"),
        &DECOMPOSITION_HEADER,
        &csv_rows,
    )?;
    write_json(
        &manifest.output(dir, "decomposition.json"),
        &json!({ "rows": all_rows, "estimates": details }),
    )?;
    manifest.write(dir)
}

/// A crossing point, or the literal "no crossing in range".
fn crossing(x: Option<f64>) -> serde_json::Value {
    match x {
        Some(v) => json!(v),
        None => json!("no crossing in range"),
    }
}

pub fn sensitivity(args: &SensitivityArgs) -> Result<()> {
    let a = &args.common;
    let loaded = load(a)?;
    let mut manifest = analysis_manifest(
        "sensitivity",
        a,
        json!({
            "estimator": format!("{:?}", args.estimator).to_lowercase(),
            "r2_max": args.r2_max,
            "grid_n": args.grid_n,
        }),
    )?;
    let kind = match plan(
        args.estimator,
        &loaded.config,
        a.differential,
        &mut manifest.notes,
    )[..]
    {
        [k] => k,
        _ => return Err(Error::Config("sensitivity needs a single estimator".into())),
    };
    let e = estimate(kind, &loaded, a)?;
    let inputs = prepare_sensitivity_inputs(
        &loaded.table,
        &loaded.config,
        &e.estimate,
        e.intervals.as_deref(),
    )?;

    let mut grid_rows = Vec::new();
    let mut grid_json = Vec::new();
    let mut summary = Vec::new();
    for inp in &inputs {
        let grid = sensitivity_grid(inp, args.grid_n, args.r2_max)?;
        for p in &grid.points {
            grid_rows.push(vec![
                inp.level.clone(),
                num(Some(p.r2_yu)),
                num(Some(p.r2_udm)),
                num(Some(p.bias)),
                num(Some(p.delta_adj)),
                num(Some(p.zeta_adj)),
                p.zero_cross.to_string(),
                p.ci_cross.to_string(),
                p.zeta_zero_cross.to_string(),
                p.zeta_ci_cross.to_string(),
            ]);
        }
        let d = diagonal_summary(inp, args.r2_max);
        summary.push(json!({
            "group": inp.level,
            "inputs": inp,
            "diagonal": {
                "delta_zero": crossing(d.delta_zero),
                "delta_ci": crossing(d.delta_ci),
                "zeta_zero": crossing(d.zeta_zero),
                "zeta_ci": crossing(d.zeta_ci),
            },
            "contours": {
                "delta_zero": grid.zero_contour,
                "delta_ci": grid.ci_contour,
                "zeta_zero": grid.zeta_zero_contour,
                "zeta_ci": grid.zeta_ci_contour,
            },
        }));
        grid_json.push(json!({ "group": inp.level, "points": grid.points }));
    }
    let bench = benchmark_covariates(&loaded.table, &loaded.config)?;
    for (cov, why) in &bench.skipped {
        manifest
            .notes
            .push(format!("benchmark for `{cov}` skipped: {why}"));
    }
    let bench_rows: Vec<Vec<String>> = bench
        .points
        .iter()
        .map(|b| {
            vec![
                b.covariate.clone(),
                num(Some(b.r2_y)),
                num(Some(b.r2_dm)),
                num(Some(b.multiplier)),
            ]
        })
        .collect();

    let dir = &a.out_dir;
    write_csv(
        &manifest.output(dir, "sensitivity_grid.csv"),
        &[
            "group",
            "r2_yu",
            "r2_udm",
            "bias",
            "delta_adj",
            "zeta_adj",
            "zero_cross",
            "ci_cross",
            "zeta_zero_cross",
            "zeta_ci_cross",
        ],
        &grid_rows,
    )?;
    write_json(&manifest.output(dir, "sensitivity_grid.json"), &grid_json)?;
    write_csv(
        &manifest.output(dir, "benchmarks.csv"),
        &["covariate", "r2_y", "r2_dm", "multiplier"],
        &bench_rows,
    )?;
    write_json(&manifest.output(dir, "benchmarks.json"), &bench)?;
    write_json(
        &manifest.output(dir, "sensitivity_summary.json"),
        &json!({ "estimator": kind.as_str(), "r2_max": args.r2_max, "groups": summary }),
    )?;
    manifest.write(dir)
}

fn preset(name: &str) -> Result<StructuralModel> {
    Ok(match name {
        "joint" => presets::joint_discrete(),
        "interposed" => presets::interposed_discrete(),
        "linear" => presets::linear_scalar(),
        "coverage" => presets::coverage_discrete(),
        "latent" => presets::latent_symmetric(1.0, 0.8),
        "strata" => presets::LatentStrata::default().model(),
        other => return Err(Error::Model(format!("unknown preset `{other}`"))),
    })
}

fn load_model(args: &ModelArgs, manifest: &mut RunManifest) -> Result<StructuralModel> {
    match (&args.model, &args.preset) {
        (Some(p), _) => {
            manifest.input(p)?;
            StructuralModel::from_file(p)
        }
        (None, Some(name)) => preset(name),
        (None, None) => Err(Error::Model("a model file or preset is required".into())),
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "simulate",
        args.model.seed,
        0,
        json!({ "n": args.n, "expose_latent": args.expose_latent, "preset": args.model.preset }),
    );
    let model = load_model(&args.model, &mut manifest)?;
    let table = sim::generate(&model, args.n, args.model.seed, args.expose_latent)?;
    let mut bytes = Vec::new();
    table.write_csv(&mut bytes)?;
    let dir = &args.model.out_dir;
    crate::output::write_atomic(&manifest.output(dir, "data.csv"), &bytes)?;
    manifest.write(dir)
}

pub fn oracle(args: &OracleArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "oracle",
        args.model.seed,
        0,
        json!({
            "method": match args.method { OracleChoice::Exact => "exact", OracleChoice::Mc => "mc" },
            "n_mc": args.n_mc,
            "preset": args.model.preset,
        }),
    );
    let model = load_model(&args.model, &mut manifest)?;
    let n_groups = match model.variable(&model.roles.group).map(|v| &v.law) {
        Some(sim::Law::Table { support, .. } | sim::Law::Logit { support, .. }) => support.len(),
        _ => return Err(Error::Model("the group variable must be discrete".into())),
    };
    let results = (1..n_groups as u32)
        .map(|r| match args.method {
            OracleChoice::Exact => sim::oracle_truth_exact(&model, r, model.scenario),
            OracleChoice::Mc => sim::oracle_truth_mc(&model, r, args.n_mc, args.model.seed),
        })
        .collect::<Result<Vec<_>>>()?;
    let method = match args.method {
        OracleChoice::Exact => OracleMethod::ExactSum,
        OracleChoice::Mc => OracleMethod::McInterventional,
    };
    let dir = &args.model.out_dir;
    write_json(
        &manifest.output(dir, "oracle.json"),
        &json!({ "method": method, "reference": 0, "groups": results }),
    )?;
    manifest.write(dir)
}

pub fn validate(args: &ValidateArgs) -> Result<()> {
    let mut report = serde_json::Map::new();
    if let Some(p) = &args.model {
        let m = StructuralModel::from_file(p)?;
        report.insert(
            "model".into(),
            json!({ "variables": m.variables.len(), "scenario": m.scenario }),
        );
    }
    if let Some(p) = &args.config {
        let config = AnalysisConfig::from_file(p)?;
        config.check_roles()?;
        report.insert("config".into(), json!("ok"));
        if let Some(d) = &args.data {
            let ingested = load_table(d, &config.schema())?;
            let binding = validate_config(&config, &ingested.table)?;
            let diagnostics: Vec<String> =
                binding.diagnostics.iter().map(|d| d.to_string()).collect();
            report.insert(
                "data".into(),
                json!({
                    "rows": ingested.table.n_rows(),
                    "dropped_rows": ingested.dropped_rows,
                    "group_counts": binding.group_counts,
                    "diagnostics": diagnostics,
                }),
            );
            if args.strict {
                binding.require_positivity()?;
            }
        }
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?
    );
    Ok(())
}

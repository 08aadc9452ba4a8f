//! Command implementations. Each returns the output files as strings; the
//! caller writes them once the command has finished.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde_json::json;
use shapestat::asymptotics::{clt_normality_experiment, one_sample_test_with};
use shapestat::difftensor::mean_tensor;
use shapestat::frusta::{
    bootstrap_band, cylinder_geodesic, distance_to_geodesic, frustum_config, growth_curve, raw_frustum,
    synthetic_stand, FrustumParams, ELLIPTICITY_RANGE, TAPER_RANGE,
};
use shapestat::means::frechet_mean;
use shapestat::perturbation::{
    compatibility_experiment, kent_critical_eta, kent_integrals, kent_population_mean, kent_shape_scatter,
    ErrorShape, PerturbationSpec,
};
use shapestat::rng::nested_stream;
use shapestat::{center, to_preshape, Mat, MeanConfig, PreShape, Rho, ShapeDistance};

use crate::args::{
    CltArgs, Command, DtmeanArgs, FrustaArgs, GrowthArgs, InputArgs, KentArgs, MeanArgs, SolverArgs, Table2Args,
    TableArgs, TestArgs,
};
use crate::error::CliError;
use crate::io::{finish_csv, load_dataset, load_tensors, tensors_to_string, Dataset, Format};

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// File name and contents, in writing order.
    pub files: Vec<(String, String)>,
    /// False when a mean solver stopped at its iteration limit.
    pub converged: bool,
    /// Command-specific facts recorded in the manifest.
    pub metadata: serde_json::Value,
    /// One-line summary printed on success.
    pub summary: String,
}

fn csv_text<I, R>(header: &[&str], rows: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())?;
    }
    finish_csv(w)
}

fn load(input: &InputArgs) -> Result<Dataset, CliError> {
    let format = input.format.unwrap_or_else(|| Format::from_path(&input.input));
    load_dataset(&input.input, format)
}

fn mean_config(rho: Rho, s: &SolverArgs) -> MeanConfig {
    MeanConfig {
        rho,
        max_iter: s.max_iter,
        tol: s.tol,
        restarts: s.restarts,
        seed: s.seed,
        tangent_projection: s.tangent,
    }
}

fn diag(v: &[f64]) -> Mat {
    Mat::from_diagonal(&DVector::from_column_slice(v))
}

pub fn execute(command: &Command, timing: bool) -> Result<RunOutput, CliError> {
    match command {
        Command::Mean(a) => cmd_mean(a),
        Command::Test(a) => cmd_test(a),
        Command::Table1(a) => cmd_table1(a, timing),
        Command::Table2(a) => cmd_table2(a, timing),
        Command::Cltfig(a) => cmd_cltfig(a),
        Command::Frusta(a) => cmd_frusta(a),
        Command::Growth(a) => cmd_growth(a),
        Command::Dtmean(a) => cmd_dtmean(a),
        Command::Kent(a) => cmd_kent(a),
        Command::Replay(_) => Err(CliError::Argument("replay cannot be nested".into())),
    }
}

pub fn cmd_mean(a: &MeanArgs) -> Result<RunOutput, CliError> {
    let ds = load(&a.input)?;
    let data = ds.configurations()?;
    let rho = Rho::from(a.rho);
    let res = frechet_mean(&data, &mean_config(rho, &a.solver))?;
    let landmarks = res.mean.landmarks();
    let mut header = vec!["landmark".to_string()];
    header.extend((1..=ds.m).map(|i| format!("x{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mean_csv = csv_text(
        &header,
        landmarks.column_iter().enumerate().map(|(j, col)| {
            std::iter::once((j + 1).to_string()).chain(col.iter().map(|v| v.to_string())).collect::<Vec<_>>()
        }),
    )?;
    let summary_csv = csv_text(
        &["rho", "n", "m", "k", "objective", "iterations", "converged", "dropped", "restart_spread"],
        [vec![
            rho.name().to_string(),
            data.len().to_string(),
            ds.m.to_string(),
            ds.k.to_string(),
            res.objective.to_string(),
            res.iterations.to_string(),
            res.converged.to_string(),
            res.dropped.to_string(),
            res.restart_spread.to_string(),
        ]],
    )?;
    Ok(RunOutput {
        files: vec![("mean.csv".into(), mean_csv), ("mean_summary.csv".into(), summary_csv)],
        converged: res.converged,
        metadata: json!({ "rho": rho.name(), "n": data.len(), "restarts_agree": res.restarts_agree() }),
        summary: format!(
            "{} mean of {} objects: objective {:.6e} after {} iterations{}",
            rho.name(),
            data.len(),
            res.objective,
            res.iterations,
            if res.converged { "" } else { " (not converged)" }
        ),
    })
}

pub fn cmd_test(a: &TestArgs) -> Result<RunOutput, CliError> {
    let ds = load(&a.input)?;
    let data = ds.configurations()?;
    let hyp = load_dataset(&a.hypothesis, Format::from_path(&a.hypothesis))?;
    if (hyp.m, hyp.k) != (ds.m, ds.k) {
        return Err(CliError::Schema(format!(
            "hypothesis is {}x{}, data are {}x{}",
            hyp.m, hyp.k, ds.m, ds.k
        )));
    }
    let hypothesis = hyp.configurations()?.swap_remove(0);
    let rho = Rho::from(a.rho);
    let r = one_sample_test_with(&data, &hypothesis, rho, a.alpha, a.calibration.into())?;
    let calibration = match a.calibration {
        crate::args::CalibrationArg::Hotelling => "hotelling",
        crate::args::CalibrationArg::ChiSquare => "chi-square",
    };
    let text = csv_text(
        &["rho", "n", "excluded", "statistic", "dof", "p_value", "alpha", "rejected", "calibration"],
        [vec![
            rho.name().to_string(),
            r.n.to_string(),
            r.excluded.to_string(),
            r.statistic.to_string(),
            r.dof.to_string(),
            r.p_value.to_string(),
            r.alpha.to_string(),
            r.rejected.to_string(),
            calibration.to_string(),
        ]],
    )?;
    Ok(RunOutput {
        files: vec![("test.csv".into(), text)],
        converged: true,
        metadata: json!({ "rho": rho.name(), "calibration": calibration, "offset": r.offset }),
        summary: format!(
            "T = {:.4} on {} dof, p = {:.4e}: {}",
            r.statistic,
            r.dof,
            r.p_value,
            if r.rejected { "rejected" } else { "not rejected" }
        ),
    })
}

/// Templates of the isotropic model: identifier, Helmertized mean and the
/// default noise levels.
pub fn goodall_templates() -> Vec<(&'static str, Mat, Vec<f64>)> {
    vec![
        ("diag(1,1,1)/sqrt(3)", Mat::identity(3, 3) / 3f64.sqrt(), vec![0.5, 0.1, 0.01]),
        ("diag(1,0.3,0.1)/sqrt(1.1)", diag(&[1.0, 0.3, 0.1]) / 1.1f64.sqrt(), vec![0.5, 0.1, 0.01]),
        ("diag(1,0.01,0)/sqrt(1.001)", diag(&[1.0, 0.01, 0.0]) / 1.001f64.sqrt(), vec![0.1, 0.01, 0.001]),
    ]
}

pub fn tensor_templates() -> Vec<(&'static str, Mat)> {
    vec![
        ("diag(1,1,1)", Mat::identity(3, 3)),
        ("diag(1,0.3,0.1)", diag(&[1.0, 0.3, 0.1])),
        ("diag(1,0.01,0)", diag(&[1.0, 0.01, 0.0])),
    ]
}

const TABLE_HEADER: [&str; 9] = ["kind", "mu_id", "sigma", "n", "N", "rho", "d_hat", "sigma_hat", "seed"];

struct Cell {
    kind: &'static str,
    mu_id: &'static str,
    spec: PerturbationSpec,
}

fn run_table(cells: Vec<Cell>, n: usize, big_n: usize, rho: Rho, seed: u64, timing: bool) -> Result<String, CliError> {
    let mut header: Vec<&str> = TABLE_HEADER.to_vec();
    if timing {
        header.push("wall_millis");
    }
    let mut rows = Vec::with_capacity(cells.len());
    for (i, cell) in cells.into_iter().enumerate() {
        let cell_seed = nested_stream(seed, i as u64);
        let start = Instant::now();
        let r = compatibility_experiment(&cell.spec, n, big_n, rho, cell_seed)?;
        let mut row = vec![
            cell.kind.to_string(),
            cell.mu_id.to_string(),
            cell.spec.sigma.to_string(),
            n.to_string(),
            big_n.to_string(),
            rho.name().to_string(),
            r.d_hat.to_string(),
            r.sigma_hat.to_string(),
            cell_seed.to_string(),
        ];
        if timing {
            row.push(start.elapsed().as_millis().to_string());
        }
        rows.push(row);
    }
    csv_text(&header, rows)
}

pub fn cmd_table1(a: &TableArgs, timing: bool) -> Result<RunOutput, CliError> {
    let mut cells = Vec::new();
    for (id, mu, sigmas) in goodall_templates() {
        for &sigma in a.sigma.as_ref().unwrap_or(&sigmas) {
            cells.push(Cell {
                kind: "goodall",
                mu_id: id,
                spec: PerturbationSpec::goodall(mu.clone(), sigma)?,
            });
        }
    }
    let rows = cells.len();
    let rho = Rho::from(a.rho);
    let text = run_table(cells, a.n, a.big_n, rho, a.seed, timing)?;
    Ok(RunOutput {
        files: vec![("table1.csv".into(), text)],
        converged: true,
        metadata: json!({
            "cell_seed": "seed column = (seed << 32) | cell index",
            "templates": "Helmertized means perturbed directly",
        }),
        summary: format!("{rows} rows written to table1.csv"),
    })
}

pub fn cmd_table2(a: &Table2Args, timing: bool) -> Result<RunOutput, CliError> {
    let error: ErrorShape = a.error.into();
    let kind = match error {
        ErrorShape::UpperTriangularOnly => "tensor-upper",
        ErrorShape::IsotropicAll => "tensor-isotropic",
    };
    let mut cells = Vec::new();
    for (id, mu) in tensor_templates() {
        for &sigma in &a.sigma {
            cells.push(Cell {
                kind,
                mu_id: id,
                spec: PerturbationSpec::diff_tensor(mu.clone(), sigma, error)?,
            });
        }
    }
    let rows = cells.len();
    let text = run_table(cells, a.n, a.big_n, a.rho.into(), a.seed, timing)?;
    Ok(RunOutput {
        files: vec![("table2.csv".into(), text)],
        converged: true,
        metadata: json!({
            "cell_seed": "seed column = (seed << 32) | cell index",
            "reference": "size-and-shape of the extended Cholesky factor of mu^T mu",
        }),
        summary: format!("{rows} rows written to table2.csv"),
    })
}

const CLT_SCRIPT: &str = r#"# Histogram of studentized mean coordinates against the standard normal density.
import csv
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

with open("cltfig.csv", newline="") as f:
    values = [float(row["studentized"]) for row in csv.DictReader(f)]

xs = [-4 + 8 * i / 400 for i in range(401)]
plt.hist(values, bins=40, density=True, histtype="step", label="studentized coordinate")
plt.plot(xs, [math.exp(-x * x / 2) / math.sqrt(2 * math.pi) for x in xs], "--", label="standard normal")
plt.legend()
plt.savefig("cltfig.png", dpi=150)
"#;

pub fn cmd_cltfig(a: &CltArgs) -> Result<RunOutput, CliError> {
    let mu = diag(&[1.0, -1.0, 0.0]) / 2f64.sqrt();
    let nu = Mat::identity(3, 3) / 3f64.sqrt();
    let spec = PerturbationSpec::geodesic(mu, nu, a.s_sd, a.sigma)?;
    let run = clt_normality_experiment(&spec, a.n, a.replicates, a.seed)?;
    let data = csv_text(
        &["replicate", "raw", "studentized"],
        run.raw
            .iter()
            .zip(&run.studentized)
            .enumerate()
            .map(|(i, (r, s))| vec![i.to_string(), r.to_string(), s.to_string()]),
    )?;
    let summary = csv_text(
        &["n", "replicates", "s_sd", "sigma", "ks", "seed"],
        [vec![
            a.n.to_string(),
            a.replicates.to_string(),
            a.s_sd.to_string(),
            a.sigma.to_string(),
            run.ks.to_string(),
            a.seed.to_string(),
        ]],
    )?;
    Ok(RunOutput {
        files: vec![
            ("cltfig.csv".into(), data),
            ("cltfig_summary.csv".into(), summary),
            ("cltfig.py".into(), CLT_SCRIPT.into()),
        ],
        converged: true,
        metadata: json!({ "ks": run.ks, "model": "geodesic perturbation, mu = diag(1,-1,0)/sqrt(2), nu = diag(1,1,1)/sqrt(3)" }),
        summary: format!("KS distance to the standard normal: {:.4}", run.ks),
    })
}

/// Frusta grouped by age.
#[derive(Debug, Clone)]
pub struct FrustumData {
    pub kappa: usize,
    pub ages: Vec<u32>,
    pub shapes: Vec<Vec<PreShape>>,
}

/// Frustum dataset: `age, tree, kappa` and the `3 × 2κ` raw landmarks
/// row by row.
pub fn load_frusta(path: &Path) -> Result<FrustumData, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut groups: BTreeMap<u32, Vec<PreShape>> = BTreeMap::new();
    let mut kappa = None;
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| crate::io::line_of(&text, p.byte()));
        let bad = |message: String| CliError::Parse { line, message };
        let age: u32 = rec.get(0).unwrap_or("").parse().map_err(|_| bad("bad age".into()))?;
        let k: usize = rec.get(2).unwrap_or("").parse().map_err(|_| bad("bad kappa".into()))?;
        if *kappa.get_or_insert(k) != k {
            return Err(bad(format!("kappa {k} differs from earlier rows")));
        }
        if rec.len() != 3 + 6 * k {
            return Err(bad(format!("expected {} fields, found {}", 3 + 6 * k, rec.len())));
        }
        let values = rec
            .iter()
            .skip(3)
            .map(|f| f.parse::<f64>().map_err(|_| bad(format!("not a number: {f:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let raw = Mat::from_row_slice(3, 2 * k, &values);
        let shape = to_preshape(&center(&raw)?)?;
        groups.entry(age).or_default().push(shape);
    }
    let kappa = kappa.ok_or_else(|| CliError::Schema("no frusta in file".into()))?;
    let (ages, shapes) = groups.into_iter().unzip();
    Ok(FrustumData { kappa, ages, shapes })
}

fn stand_csv(ages: &[u32], trees: &[Vec<FrustumParams>]) -> Result<String, CliError> {
    let kappa = trees[0][0].kappa;
    let mut header = vec!["age".to_string(), "tree".into(), "kappa".into()];
    for row in ["x", "y", "z"] {
        header.extend((1..=2 * kappa).map(|j| format!("{row}{j}")));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for (age, row) in ages.iter().zip(trees) {
        for (tree, p) in row.iter().enumerate() {
            let raw = raw_frustum(p);
            let mut fields = vec![age.to_string(), (tree + 1).to_string(), kappa.to_string()];
            for i in 0..3 {
                fields.extend(raw.row(i).iter().map(|v| v.to_string()));
            }
            rows.push(fields);
        }
    }
    csv_text(&header, rows)
}

const FRUSTA_SCRIPT: &str = r#"# Bootstrap band for the distance of the mean frustum shape to the cylinders.
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

with open("band.csv", newline="") as f:
    rows = list(csv.DictReader(f))

age = [float(r["age"]) for r in rows]
plt.fill_between(age, [float(r["lower"]) for r in rows], [float(r["upper"]) for r in rows], alpha=0.3)
plt.plot(age, [float(r["estimate"]) for r in rows])
plt.xlabel("age")
plt.ylabel("distance to the cylinder geodesic")
plt.savefig("band.png", dpi=150)
"#;

fn metric_name(m: ShapeDistance) -> &'static str {
    match m {
        ShapeDistance::Intrinsic => "intrinsic",
        ShapeDistance::Procrustes => "procrustes",
        ShapeDistance::Ziezold => "ziezold",
    }
}

pub fn cmd_frusta(a: &FrustaArgs) -> Result<RunOutput, CliError> {
    let mut files = Vec::new();
    let (kappa, ages, shapes, mut metadata) = match &a.input {
        Some(path) => {
            let d = load_frusta(path)?;
            (d.kappa, d.ages, d.shapes, json!({ "synthetic": false, "source": path }))
        }
        None => {
            let stand = synthetic_stand(a.ages, a.trees, a.scenario(), a.seed)?;
            files.push(("stand.csv".to_string(), stand_csv(&stand.ages, &stand.trees)?));
            let meta = json!({
                "synthetic": true,
                "scenario": stand.scenario,
                "trend_weight": stand.trend_weight,
                "taper_range": TAPER_RANGE,
                "ellipticity_range": ELLIPTICITY_RANGE,
                "torsion": "none",
            });
            (stand.kappa, stand.ages.clone(), stand.shapes()?, meta)
        }
    };
    let geodesic = cylinder_geodesic(kappa, 0.05, 0.5)?;
    let metric: ShapeDistance = a.metric.into();
    let band = bootstrap_band(&shapes, a.resamples, a.level, &geodesic, metric, a.seed)?;
    let text = csv_text(
        &["age", "estimate", "lower", "upper"],
        ages.iter().zip(&band.rows).map(|(age, r)| {
            vec![age.to_string(), r.estimate.to_string(), r.lower.to_string(), r.upper.to_string()]
        }),
    )?;
    files.push(("band.csv".into(), text));
    files.push(("band.py".into(), FRUSTA_SCRIPT.into()));
    let failures: usize = band.rows.iter().map(|r| r.failures).sum();
    metadata["metric"] = json!(metric_name(metric));
    metadata["resamples"] = json!(a.resamples);
    metadata["level"] = json!(a.level);
    metadata["failed_resamples"] = json!(failures);
    Ok(RunOutput {
        files,
        converged: true,
        metadata,
        summary: format!("band over {} ages written to band.csv", ages.len()),
    })
}

pub fn cmd_growth(a: &GrowthArgs) -> Result<RunOutput, CliError> {
    let start = FrustumParams::new(a.kappa, a.alpha, a.alpha, a.radius, a.taper)?;
    let s0 = start.size_squared().sqrt();
    let schedule: Vec<f64> = (1..=a.steps).map(|i| s0 + a.increment * i as f64).collect();
    let curve = growth_curve(a.mode.into(), &start, &schedule, a.steps)?;
    let geodesic = cylinder_geodesic(a.kappa, 0.05, 0.5)?;
    let metric: ShapeDistance = a.metric.into();
    let mut rows = Vec::with_capacity(curve.len() + 1);
    for (step, p) in std::iter::once(&start).chain(&curve).enumerate() {
        let (d, _) = distance_to_geodesic(&frustum_config(p)?.shape(), &geodesic, metric)?;
        rows.push(vec![
            step.to_string(),
            p.size_squared().sqrt().to_string(),
            p.r.to_string(),
            p.alpha.to_string(),
            p.beta.to_string(),
            p.t.to_string(),
            d.to_string(),
        ]);
    }
    let text = csv_text(&["step", "size", "r", "alpha", "beta", "t", "distance"], rows)?;
    Ok(RunOutput {
        files: vec![("growth.csv".into(), text)],
        converged: true,
        metadata: json!({
            "metric": metric_name(metric),
            "height": "ring separation fixed at 1; sizes follow the schedule",
        }),
        summary: format!("{} growth steps written to growth.csv", a.steps),
    })
}

pub fn cmd_dtmean(a: &DtmeanArgs) -> Result<RunOutput, CliError> {
    let tensors = load_tensors(&a.input)?;
    let rho = Rho::from(a.rho);
    let res = mean_tensor(&tensors, rho, &mean_config(rho, &a.solver))?;
    let summary = csv_text(
        &["rho", "n", "m", "objective", "iterations", "converged"],
        [vec![
            rho.name().to_string(),
            tensors.len().to_string(),
            res.tensor.dim().to_string(),
            res.mean.objective.to_string(),
            res.mean.iterations.to_string(),
            res.mean.converged.to_string(),
        ]],
    )?;
    Ok(RunOutput {
        files: vec![
            ("dtmean.csv".into(), tensors_to_string(std::slice::from_ref(res.tensor.entries()))?),
            ("dtmean_summary.csv".into(), summary),
        ],
        converged: res.mean.converged,
        metadata: json!({ "rho": rho.name(), "n": tensors.len() }),
        summary: format!("{} mean of {} tensors written to dtmean.csv", rho.name(), tensors.len()),
    })
}

pub fn cmd_kent(a: &KentArgs) -> Result<RunOutput, CliError> {
    let (top, bottom) = kent_integrals(a.eta)?;
    let population = kent_population_mean(a.eta)?;
    let critical = kent_critical_eta()?;
    let scatter = kent_shape_scatter(a.eta, a.n, a.seed)?;
    let points = csv_text(
        &["kind", "x", "y", "z"],
        scatter
            .points
            .iter()
            .map(|p| ("point", p))
            .chain(std::iter::once(("mean", &scatter.mean_marker)))
            .map(|(kind, p)| vec![kind.to_string(), p[0].to_string(), p[1].to_string(), p[2].to_string()]),
    )?;
    let shape = match population.shape {
        shapestat::perturbation::KentShape::Top => "top",
        shapestat::perturbation::KentShape::Bottom => "bottom",
    };
    let summary = csv_text(
        &["eta", "integral_top", "integral_bottom", "population_mean", "critical_eta", "n", "seed"],
        [vec![
            a.eta.to_string(),
            top.to_string(),
            bottom.to_string(),
            shape.to_string(),
            critical.to_string(),
            a.n.to_string(),
            a.seed.to_string(),
        ]],
    )?;
    Ok(RunOutput {
        files: vec![("kent.csv".into(), points), ("kent_summary.csv".into(), summary)],
        converged: true,
        metadata: json!({ "population_mean": shape, "critical_eta": critical }),
        summary: format!("population mean at eta = {}: {shape} shape (critical eta {critical:.6})", a.eta),
    })
}

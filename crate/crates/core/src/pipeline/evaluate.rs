use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    create_dir, fmt_opt, read_assignments, verify_input, write_csv, write_text, PipelineError,
    Result, RunManifest,
};
use crate::stats::plot::{Chart, Mark, Series};
use crate::stats::{
    alignment_analysis, isotonic_decreasing, percent_lift, read_metric_tables,
    variance_ratio_table, variance_ratios_from_lifts, weighted_slope, ExperimentSummary,
    LiftEstimate, MetricTable, SlopeEstimate, VarianceRatioRow,
};

/// Fixed-beta slice of the ranker grid to read out.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub beta_index: usize,
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub metrics: Vec<PathBuf>,
    pub assignments: PathBuf,
    pub baseline: String,
    /// Metric compared with the baseline in the alignment readout.
    pub surrogate: String,
    pub treatment: String,
    pub control: String,
    pub experiment_id: String,
    /// Earlier experiments as `id,lift_outcome,lift_surrogate,p_outcome,n`.
    pub prior_lifts: Option<PathBuf>,
    pub grid: Option<GridSpec>,
    pub out: PathBuf,
    pub force: bool,
}

impl EvaluateArgs {
    pub fn new(metrics: Vec<PathBuf>, assignments: PathBuf, out: PathBuf) -> Self {
        Self {
            metrics,
            assignments,
            baseline: "booking".into(),
            surrogate: "utility".into(),
            treatment: "treatment".into(),
            control: "control".into(),
            experiment_id: "current".into(),
            prior_lifts: None,
            grid: None,
            out,
            force: false,
        }
    }
}

/// Mean and standard error of one metric in one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub cell: String,
    pub alpha: f64,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMetric {
    pub metric: String,
    pub points: Vec<GridPoint>,
    /// Weighted least-squares slope of the cell means on alpha.
    pub slope: Option<SlopeEstimate>,
    /// Non-increasing fit of the cell means, weighted by inverse variance.
    pub isotonic: Vec<f64>,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn cell_values(table: &MetricTable, assignment: &BTreeMap<String, String>, cell: &str) -> Vec<f64> {
    table
        .values
        .iter()
        .filter(|(u, _)| assignment.get(*u).map(String::as_str) == Some(cell))
        .map(|(_, &v)| v)
        .collect()
}

/// Per-alpha readout at a fixed beta: cell means, slope CI and isotonic fit.
pub fn grid_readout(
    tables: &[MetricTable],
    assignment: &BTreeMap<String, String>,
    spec: &GridSpec,
) -> Result<Vec<GridMetric>> {
    if spec.beta_index >= spec.betas.len() {
        return Err(PipelineError::Config(format!(
            "beta index {} out of range for {} betas",
            spec.beta_index,
            spec.betas.len()
        )));
    }
    let cells: Vec<(String, f64)> = spec
        .alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| (format!("a{a}_b{}", spec.beta_index), alpha))
        .collect();
    let mut out = Vec::new();
    for t in tables {
        let points: Vec<GridPoint> = cells
            .iter()
            .map(|(cell, alpha)| {
                let v = cell_values(t, assignment, cell);
                let (mean, se) = mean_se(&v);
                GridPoint {
                    cell: cell.clone(),
                    alpha: *alpha,
                    n: v.len(),
                    mean,
                    se,
                }
            })
            .collect();
        let x: Vec<f64> = points.iter().map(|p| p.alpha).collect();
        let y: Vec<f64> = points.iter().map(|p| p.mean).collect();
        let se: Vec<f64> = points.iter().map(|p| p.se).collect();
        let w: Vec<f64> = se
            .iter()
            .map(|s| if *s > 0.0 { 1.0 / (s * s) } else { 1.0 })
            .collect();
        out.push(GridMetric {
            metric: t.name.clone(),
            slope: weighted_slope(&x, &y, &se),
            isotonic: isotonic_decreasing(&y, &w),
            points,
        });
    }
    Ok(out)
}

/// Percent lift of the last alpha cell over the first, per metric.
pub fn grid_extreme_lifts(
    tables: &[MetricTable],
    assignment: &BTreeMap<String, String>,
    spec: &GridSpec,
) -> Result<Vec<LiftEstimate>> {
    let b = spec.beta_index;
    let first = format!("a0_b{b}");
    let last = format!("a{}_b{b}", spec.alphas.len().saturating_sub(1));
    tables
        .iter()
        .map(|t| {
            let treat = cell_values(t, assignment, &last);
            let ctrl = cell_values(t, assignment, &first);
            Ok(percent_lift(&t.name, &treat, &ctrl)?)
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct PriorRow {
    id: String,
    lift_outcome: f64,
    lift_surrogate: f64,
    p_outcome: f64,
    n: usize,
}

fn read_prior(path: &Path) -> Result<Vec<ExperimentSummary>> {
    let file = std::fs::File::open(path).map_err(PipelineError::io(path))?;
    let mut rdr = csv::Reader::from_reader(file);
    rdr.deserialize::<PriorRow>()
        .map(|r| {
            let r = r.map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
            Ok(ExperimentSummary {
                id: r.id,
                lift_outcome: r.lift_outcome,
                lift_surrogate: r.lift_surrogate,
                p_outcome: r.p_outcome,
                n: r.n,
            })
        })
        .collect()
}

fn lift_rows(lifts: &[LiftEstimate]) -> Vec<Vec<String>> {
    lifts
        .iter()
        .map(|l| {
            vec![
                l.metric_name.clone(),
                l.lift.to_string(),
                l.variance_of_lift.to_string(),
                l.variance_of_lift.sqrt().to_string(),
                l.ci95.0.to_string(),
                l.ci95.1.to_string(),
                l.p_value.to_string(),
                l.n_t.to_string(),
                l.n_c.to_string(),
                l.mean_t.to_string(),
                l.mean_c.to_string(),
            ]
        })
        .collect()
}

const LIFT_HEADER: [&str; 11] = [
    "metric",
    "lift",
    "variance_of_lift",
    "se",
    "ci_low",
    "ci_high",
    "p_value",
    "n_t",
    "n_c",
    "mean_t",
    "mean_c",
];

fn write_lifts(dir: &Path, lifts: &[LiftEstimate], ratios: &[VarianceRatioRow]) -> Result<()> {
    write_csv(dir, "lifts.csv", &LIFT_HEADER, &lift_rows(lifts))?;
    let rows: Vec<Vec<String>> = ratios
        .iter()
        .map(|r| {
            vec![
                r.metric_name.clone(),
                r.variance_ratio_vs_baseline.to_string(),
            ]
        })
        .collect();
    write_csv(
        dir,
        "variance_ratios.csv",
        &["metric", "variance_ratio_vs_baseline"],
        &rows,
    )?;
    let mut seg_x = Vec::new();
    let mut seg_y = Vec::new();
    for (i, l) in lifts.iter().enumerate() {
        seg_x.extend([i as f64, i as f64, i as f64]);
        seg_y.extend([l.ci95.0, l.ci95.1, f64::NAN]);
    }
    let names: Vec<&str> = lifts.iter().map(|l| l.metric_name.as_str()).collect();
    let chart = Chart::new(
        &format!("Percent lift with 95% CI: {}", names.join(", ")),
        "metric index",
        "lift",
    )
    .with(Series {
        name: String::new(),
        x: seg_x,
        y: seg_y,
        mark: Mark::Line,
    })
    .with(Series {
        name: "lift".into(),
        x: (0..lifts.len()).map(|i| i as f64).collect(),
        y: lifts.iter().map(|l| l.lift).collect(),
        mark: Mark::Points(vec![4.0; lifts.len()]),
    });
    write_text(dir, "lifts.svg", &chart.to_svg())
}

/// Reads metric tables and an assignment map, then writes lift, variance
/// ratio and alignment readouts (or the grid readout).
pub fn evaluate(args: &EvaluateArgs) -> Result<RunManifest> {
    if args.metrics.is_empty() {
        return Err(PipelineError::Config(
            "at least one metrics file is required".into(),
        ));
    }
    let mut manifest = RunManifest::new("evaluate", None);
    let mut inputs: Vec<&PathBuf> = args.metrics.iter().collect();
    inputs.push(&args.assignments);
    inputs.extend(args.prior_lifts.iter());
    for p in inputs {
        verify_input(p, args.force)?;
        manifest.input(p)?;
    }
    let mut tables: Vec<MetricTable> = Vec::new();
    for p in &args.metrics {
        let file = std::fs::File::open(p).map_err(PipelineError::io(p))?;
        for t in read_metric_tables(file)? {
            if tables.iter().any(|o| o.name == t.name) {
                return Err(PipelineError::Data(format!(
                    "metric {:?} appears in more than one file",
                    t.name
                )));
            }
            tables.push(t);
        }
    }
    if !tables.iter().any(|t| t.name == args.baseline) {
        return Err(PipelineError::Config(format!(
            "baseline metric {:?} not found",
            args.baseline
        )));
    }
    let assignment = read_assignments(&args.assignments)?;
    create_dir(&args.out)?;
    manifest.param("baseline", &args.baseline);
    let outputs: Vec<String> = match &args.grid {
        None => evaluate_ab(args, &tables, &assignment)?,
        Some(spec) => {
            manifest.param("beta_index", spec.beta_index);
            evaluate_grid(args, spec, &tables, &assignment)?
        }
    };
    manifest.finish(&args.out, &outputs)
}

fn evaluate_ab(
    args: &EvaluateArgs,
    tables: &[MetricTable],
    assignment: &BTreeMap<String, String>,
) -> Result<Vec<String>> {
    let (lifts, ratios) = variance_ratio_table(
        tables,
        assignment,
        &args.treatment,
        &args.control,
        &args.baseline,
    )?;
    write_lifts(&args.out, &lifts, &ratios)?;
    let mut outputs: Vec<String> = ["lifts.csv", "variance_ratios.csv", "lifts.svg"]
        .map(String::from)
        .into();

    let Some(surrogate) = lifts.iter().find(|l| l.metric_name == args.surrogate) else {
        return Ok(outputs);
    };
    let base = lifts
        .iter()
        .find(|l| l.metric_name == args.baseline)
        .expect("baseline present");
    let current = ExperimentSummary {
        id: args.experiment_id.clone(),
        lift_outcome: base.lift,
        lift_surrogate: surrogate.lift,
        p_outcome: base.p_value,
        n: base.n_t + base.n_c,
    };
    write_csv(
        &args.out,
        "experiment_summary.csv",
        &["id", "lift_outcome", "lift_surrogate", "p_outcome", "n"],
        &[vec![
            current.id.clone(),
            current.lift_outcome.to_string(),
            current.lift_surrogate.to_string(),
            current.p_outcome.to_string(),
            current.n.to_string(),
        ]],
    )?;
    outputs.push("experiment_summary.csv".into());
    let mut experiments = match &args.prior_lifts {
        Some(p) => read_prior(p)?,
        None => Vec::new(),
    };
    experiments.push(current);
    let report = alignment_analysis(&experiments)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.id.clone(),
                r.lift_outcome.to_string(),
                r.lift_surrogate.to_string(),
                r.n.to_string(),
                r.significant.to_string(),
            ]
        })
        .collect();
    write_csv(
        &args.out,
        "alignment.csv",
        &["id", "lift_outcome", "lift_surrogate", "n", "significant"],
        &rows,
    )?;
    write_csv(
        &args.out,
        "alignment_summary.csv",
        &[
            "n_total",
            "n_significant",
            "sign_agreement_rate",
            "pearson_correlation",
        ],
        &[vec![
            report.n_total.to_string(),
            report.n_significant.to_string(),
            fmt_opt(report.sign_agreement_rate),
            fmt_opt(report.pearson_correlation),
        ]],
    )?;
    let pick = |sig: bool| -> (Vec<f64>, Vec<f64>) {
        report
            .rows
            .iter()
            .filter(|r| r.significant == sig)
            .map(|r| (r.lift_outcome, r.lift_surrogate))
            .unzip()
    };
    let (sx, sy) = pick(true);
    let (nx, ny) = pick(false);
    let mut chart = Chart::new(
        "Lift alignment",
        &format!("{} lift", args.baseline),
        &format!("{} lift", args.surrogate),
    )
    .with(Series {
        name: "significant".into(),
        mark: Mark::Points(vec![4.0; sx.len()]),
        x: sx,
        y: sy,
    })
    .with(Series {
        name: "not significant".into(),
        mark: Mark::Points(vec![3.0; nx.len()]),
        x: nx,
        y: ny,
    });
    chart.diagonal = true;
    write_text(&args.out, "alignment.svg", &chart.to_svg())?;
    outputs.extend(["alignment.csv", "alignment_summary.csv", "alignment.svg"].map(String::from));
    Ok(outputs)
}

fn evaluate_grid(
    args: &EvaluateArgs,
    spec: &GridSpec,
    tables: &[MetricTable],
    assignment: &BTreeMap<String, String>,
) -> Result<Vec<String>> {
    let readout = grid_readout(tables, assignment, spec)?;
    let mut cell_rows = Vec::new();
    let mut trend_rows = Vec::new();
    let mut outputs: Vec<String> = vec!["grid_cells.csv".into(), "grid_trend.csv".into()];
    for m in &readout {
        for (p, iso) in m.points.iter().zip(&m.isotonic) {
            cell_rows.push(vec![
                m.metric.clone(),
                p.cell.clone(),
                p.alpha.to_string(),
                spec.betas[spec.beta_index].to_string(),
                p.n.to_string(),
                p.mean.to_string(),
                p.se.to_string(),
                iso.to_string(),
            ]);
        }
        trend_rows.push(match &m.slope {
            Some(s) => vec![
                m.metric.clone(),
                s.slope.to_string(),
                s.se.to_string(),
                s.ci95.0.to_string(),
                s.ci95.1.to_string(),
                s.excludes_zero().to_string(),
            ],
            None => vec![
                m.metric.clone(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "false".into(),
            ],
        });
        let x: Vec<f64> = m.points.iter().map(|p| p.alpha).collect();
        let chart = Chart::new(&format!("{} by alpha", m.metric), "alpha", &m.metric)
            .with(Series {
                name: "95% CI".into(),
                x: x.clone(),
                y: Vec::new(),
                mark: Mark::Band {
                    lower: m.points.iter().map(|p| p.mean - 1.96 * p.se).collect(),
                    upper: m.points.iter().map(|p| p.mean + 1.96 * p.se).collect(),
                },
            })
            .with(Series {
                name: "cell mean".into(),
                x: x.clone(),
                y: m.points.iter().map(|p| p.mean).collect(),
                mark: Mark::Points(vec![4.0; x.len()]),
            })
            .with(Series {
                name: "isotonic fit".into(),
                x,
                y: m.isotonic.clone(),
                mark: Mark::Line,
            });
        let name = format!("grid_{}.svg", m.metric);
        write_text(&args.out, &name, &chart.to_svg())?;
        outputs.push(name);
    }
    write_csv(
        &args.out,
        "grid_cells.csv",
        &[
            "metric", "cell", "alpha", "beta", "n", "mean", "se", "isotonic",
        ],
        &cell_rows,
    )?;
    write_csv(
        &args.out,
        "grid_trend.csv",
        &[
            "metric",
            "slope",
            "se",
            "ci_low",
            "ci_high",
            "excludes_zero",
        ],
        &trend_rows,
    )?;
    let lifts = grid_extreme_lifts(tables, assignment, spec)?;
    let ratios = variance_ratios_from_lifts(&lifts, &args.baseline)?;
    write_lifts(&args.out, &lifts, &ratios)?;
    outputs.extend(["lifts.csv", "variance_ratios.csv", "lifts.svg"].map(String::from));
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_readout_groups_by_alpha_cell() {
        let assignment: BTreeMap<String, String> = [
            ("s1", "a0_b0"),
            ("s2", "a0_b0"),
            ("s3", "a1_b0"),
            ("s4", "a1_b0"),
            ("s5", "a0_b1"),
            ("s6", "default"),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        let values = [
            ("s1", 2.0),
            ("s2", 4.0),
            ("s3", 1.0),
            ("s4", 1.0),
            ("s5", 9.0),
            ("s6", 9.0),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b))
        .collect();
        let spec = GridSpec {
            alphas: vec![0.0, 1.0],
            betas: vec![0.0, 1.0],
            beta_index: 0,
        };
        let r = grid_readout(&[MetricTable::new("m", values)], &assignment, &spec).unwrap();
        let p = &r[0].points;
        assert_eq!((p[0].n, p[0].mean), (2, 3.0));
        assert_eq!((p[1].n, p[1].mean, p[1].se), (2, 1.0, 0.0));
        assert_eq!(r[0].isotonic, vec![3.0, 1.0]);
        assert!(r[0].slope.is_none());
        let bad = GridSpec {
            beta_index: 2,
            ..spec
        };
        assert_eq!(
            grid_readout(&[], &assignment, &bad)
                .unwrap_err()
                .exit_code(),
            2
        );
    }
}

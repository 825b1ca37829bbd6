//! Result persistence and report emission: per-case records (CSV or JSON
//! lines), grouped summary tables, and simple static bar charts.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pq_core::interval::{EstimateWithInterval, Interval, Method};
use pq_core::metrics::{CaseResult, EvalReport, GroupSummary, MetricSummary};

use crate::config::OutputFormat;
use crate::CliError;

pub const RESULTS_CSV_HEADER: &str =
    "case_id,method,test_size,true_prevalence,point,low,high,mass,wall_time_s,seed";

pub fn results_file_name(format: OutputFormat) -> &'static str {
    match format {
        OutputFormat::Csv => "results.csv",
        OutputFormat::Json => "results.jsonl",
    }
}

/// Flat record mirroring one CSV row.
#[derive(Debug, Serialize, Deserialize)]
struct ResultRecord {
    case_id: String,
    method: String,
    test_size: usize,
    true_prevalence: f64,
    point: f64,
    low: f64,
    high: f64,
    mass: f64,
    wall_time_s: f64,
    seed: u64,
}

impl From<&CaseResult> for ResultRecord {
    fn from(r: &CaseResult) -> Self {
        Self {
            case_id: r.case_id.clone(),
            method: r.method.clone(),
            test_size: r.test_size,
            true_prevalence: r.true_prevalence,
            point: r.estimate.point,
            low: r.estimate.interval.low(),
            high: r.estimate.interval.high(),
            mass: r.estimate.interval.mass(),
            wall_time_s: r.wall_time_s,
            seed: r.seed,
        }
    }
}

impl ResultRecord {
    fn into_case_result(self) -> Result<CaseResult, CliError> {
        let interval = Interval::new(self.low, self.high, self.mass)
            .map_err(|e| CliError::Data(format!("bad interval in results file: {e}")))?;
        // series labels are the method name, optionally suffixed "_bins"
        let method_name = self.method.split('_').next().unwrap_or(&self.method);
        let method = method_name
            .parse::<Method>()
            .map_err(|e| CliError::Data(format!("bad method in results file: {e}")))?;
        Ok(CaseResult {
            case_id: self.case_id,
            method: self.method,
            test_size: self.test_size,
            true_prevalence: self.true_prevalence,
            estimate: EstimateWithInterval::from_point(self.point, interval, method),
            wall_time_s: self.wall_time_s,
            seed: self.seed,
        })
    }

    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.6},{}",
            self.case_id,
            self.method,
            self.test_size,
            self.true_prevalence,
            self.point,
            self.low,
            self.high,
            self.mass,
            self.wall_time_s,
            self.seed
        )
    }

    fn from_csv_line(line: &str, row: usize) -> Result<Self, CliError> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 10 {
            return Err(CliError::Data(format!(
                "results row {row}: expected 10 columns, got {}",
                parts.len()
            )));
        }
        let parse_f = |i: usize| -> Result<f64, CliError> {
            parts[i].parse().map_err(|_| {
                CliError::Data(format!("results row {row}: bad number {:?}", parts[i]))
            })
        };
        Ok(Self {
            case_id: parts[0].to_string(),
            method: parts[1].to_string(),
            test_size: parts[2]
                .parse()
                .map_err(|_| CliError::Data(format!("results row {row}: bad size")))?,
            true_prevalence: parse_f(3)?,
            point: parse_f(4)?,
            low: parse_f(5)?,
            high: parse_f(6)?,
            mass: parse_f(7)?,
            wall_time_s: parse_f(8)?,
            seed: parts[9]
                .parse()
                .map_err(|_| CliError::Data(format!("results row {row}: bad seed")))?,
        })
    }
}

/// Rewrite the results file as existing records followed by new ones, in
/// order.
pub fn write_results(
    path: &Path,
    existing: &[CaseResult],
    new: &[CaseResult],
    format: OutputFormat,
) -> Result<(), CliError> {
    let mut out = String::new();
    if format == OutputFormat::Csv {
        out.push_str(RESULTS_CSV_HEADER);
        out.push('\n');
    }
    for r in existing.iter().chain(new) {
        let record = ResultRecord::from(r);
        match format {
            OutputFormat::Csv => out.push_str(&record.to_csv_line()),
            OutputFormat::Json => out.push_str(
                &serde_json::to_string(&record).map_err(|e| CliError::Execution(e.to_string()))?,
            ),
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CliError::Execution(e.to_string()))
}

pub fn load_results(path: &Path) -> Result<Vec<CaseResult>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let json = path.extension().is_some_and(|e| e == "jsonl");
    let mut results = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let row = idx + 1;
        let line = line.map_err(|e| CliError::Data(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        if !json && row == 1 && line == RESULTS_CSV_HEADER {
            continue;
        }
        let record = if json {
            serde_json::from_str::<ResultRecord>(&line)
                .map_err(|e| CliError::Data(format!("results row {row}: {e}")))?
        } else {
            ResultRecord::from_csv_line(&line, row)?
        };
        results.push(record.into_case_result()?);
    }
    Ok(results)
}

pub struct SummaryPaths {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub charts: Vec<PathBuf>,
}

pub const SUMMARY_CSV_HEADER: &str = "method,test_size,n_cases,metric,value,ci95_low,ci95_high";

/// Write the grouped summary table (one row per method, size, and metric)
/// as CSV and JSON, plus optional bar charts of the three metrics.
pub fn write_summary(
    report: &EvalReport,
    out_dir: &Path,
    _format: OutputFormat,
    charts: bool,
) -> Result<SummaryPaths, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Execution(e.to_string()))?;
    let csv_path = out_dir.join("summary.csv");
    let json_path = out_dir.join("summary.json");

    let mut csv = String::from(SUMMARY_CSV_HEADER);
    csv.push('\n');
    for g in &report.groups {
        for (name, m) in [
            ("coverage", &g.coverage),
            ("mean_interval_length", &g.mean_interval_length),
            ("mean_abs_error", &g.mean_abs_error),
        ] {
            csv.push_str(&format!(
                "{},{},{},{name},{},{},{}\n",
                g.method, g.test_size, g.n_cases, m.value, m.ci_low, m.ci_high
            ));
        }
    }
    std::fs::write(&csv_path, csv).map_err(|e| CliError::Execution(e.to_string()))?;

    let json =
        serde_json::to_string_pretty(report).map_err(|e| CliError::Execution(e.to_string()))?;
    std::fs::write(&json_path, json).map_err(|e| CliError::Execution(e.to_string()))?;

    let mut chart_paths = Vec::new();
    if charts {
        type MetricAccessor = fn(&GroupSummary) -> MetricSummary;
        let specs: [(&str, &str, MetricAccessor); 3] = [
            ("precision.svg", "mean interval length", |g| {
                g.mean_interval_length
            }),
            ("coverage.svg", "coverage", |g| g.coverage),
            ("bias.svg", "mean absolute error", |g| g.mean_abs_error),
        ];
        for (file, label, accessor) in specs {
            let path = out_dir.join(file);
            let svg = bar_chart_svg(label, &report.groups, accessor);
            std::fs::write(&path, svg).map_err(|e| CliError::Execution(e.to_string()))?;
            chart_paths.push(path);
        }
    }

    Ok(SummaryPaths {
        csv: csv_path,
        json: json_path,
        charts: chart_paths,
    })
}

const PALETTE: [&str; 10] = [
    "#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb", "#44aa99",
    "#882255", "#999933",
];

/// Grouped bar chart: one cluster per test size, one bar per method series,
/// error bars from the bootstrap CIs.
fn bar_chart_svg(
    metric_label: &str,
    groups: &[GroupSummary],
    accessor: fn(&GroupSummary) -> MetricSummary,
) -> String {
    let mut sizes: Vec<usize> = groups.iter().map(|g| g.test_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut methods: Vec<String> = groups.iter().map(|g| g.method.clone()).collect();
    methods.sort();
    methods.dedup();

    let (width, height) = (840.0, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 70.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let y_max = groups
        .iter()
        .map(|g| accessor(g).ci_high)
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.1;
    let y = |v: f64| top + plot_h * (1.0 - v / y_max);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{metric_label} by test size</text>\n",
        width / 2.0
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{left}\" y1=\"{0}\" x2=\"{}\" y2=\"{0}\" stroke=\"black\"/>\n",
        top + plot_h,
        width - right
    ));
    for tick in 0..=5 {
        let v = y_max * tick as f64 / 5.0;
        let yy = y(v);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{yy}\" x2=\"{left}\" y2=\"{yy}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.3}</text>\n",
            left - 5.0,
            left - 8.0,
            yy + 4.0
        ));
    }

    let cluster_w = plot_w / sizes.len() as f64;
    let bar_w = (cluster_w * 0.8) / methods.len() as f64;
    for (si, &size) in sizes.iter().enumerate() {
        let cluster_x = left + si as f64 * cluster_w + cluster_w * 0.1;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{size}</text>\n",
            cluster_x + cluster_w * 0.4,
            top + plot_h + 18.0
        ));
        for (mi, method) in methods.iter().enumerate() {
            if let Some(g) = groups
                .iter()
                .find(|g| g.test_size == size && &g.method == method)
            {
                let m = accessor(g);
                let x = cluster_x + mi as f64 * bar_w;
                let color = PALETTE[mi % PALETTE.len()];
                let bar_top = y(m.value);
                svg.push_str(&format!(
                    "<rect x=\"{x:.2}\" y=\"{bar_top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\"/>\n",
                    bar_w * 0.9,
                    (top + plot_h - bar_top).max(0.0)
                ));
                let cx = x + bar_w * 0.45;
                svg.push_str(&format!(
                    "<line x1=\"{cx:.2}\" y1=\"{:.2}\" x2=\"{cx:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
                    y(m.ci_high),
                    y(m.ci_low)
                ));
            }
        }
    }

    // legend
    for (mi, method) in methods.iter().enumerate() {
        let lx = left + mi as f64 * 110.0;
        let ly = height - 28.0;
        svg.push_str(&format!(
            "<rect x=\"{lx}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\">{method}</text>\n",
            ly - 10.0,
            PALETTE[mi % PALETTE.len()],
            lx + 16.0,
            ly
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// `report` subcommand body.
pub fn emit_report(
    results_path: &Path,
    out_dir: &Path,
    format: OutputFormat,
    charts: bool,
    bootstrap_iterations: usize,
    seed: u64,
) -> Result<(EvalReport, SummaryPaths), CliError> {
    let results = load_results(results_path)?;
    if results.is_empty() {
        return Err(CliError::Data(format!(
            "no results in {}",
            results_path.display()
        )));
    }
    let report = pq_core::metrics::summarize(&results, bootstrap_iterations, seed)
        .map_err(|e| CliError::Execution(e.to_string()))?;
    let paths = write_summary(&report, out_dir, format, charts)?;
    Ok((report, paths))
}

/// Render one estimate for the `quantify` subcommand.
pub fn format_estimate(est: &EstimateWithInterval, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => format!(
            "method={} point={:.6} low={:.6} high={:.6} mass={}",
            est.method,
            est.point,
            est.interval.low(),
            est.interval.high(),
            est.interval.mass()
        ),
        OutputFormat::Json => serde_json::json!({
            "method": est.method.as_str(),
            "point": est.point,
            "low": est.interval.low(),
            "high": est.interval.high(),
            "mass": est.interval.mass(),
        })
        .to_string(),
    }
}

pub fn print_line(out: &mut impl Write, line: &str) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::Execution(e.to_string()))
}

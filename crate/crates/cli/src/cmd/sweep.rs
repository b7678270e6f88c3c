//! `repcap sweep`: FAR-capacity curves from the statistics cached by a
//! previous `pipeline` run, one curve per (parameterization, selector).

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use repcap_core::{
    capacity, far_to_radius, fraction_to_radius, population_statistics, select_canonical_class,
    CanonicalSelector, CapacityReport, Parameterization,
};

use super::{ParamArg, SelectorArg};
use crate::cmd::pipeline::{resolved_fars, StatisticsFile};
use crate::report::{usage, write_json, write_text, CmdResult, Stage};

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// Directory holding statistics.json from `pipeline`.
    #[arg(long = "out-dir", default_value = "repcap-out")]
    pub out_dir: PathBuf,
    /// Operating FAR(s); repeatable, required.
    #[arg(long = "far", required = true)]
    pub far: Vec<f64>,
    #[arg(long = "population-fraction", default_value_t = 0.99)]
    pub population_fraction: f64,
    #[arg(long = "shannon-pairing")]
    pub shannon_pairing: bool,
    /// Selector(s) to sweep; defaults to all four.
    #[arg(long, value_enum)]
    pub selector: Vec<SelectorArg>,
    /// Parameterization(s) to sweep; defaults to full.
    #[arg(long, value_enum)]
    pub param: Vec<ParamArg>,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    provenance: &'a SweepArgs,
    rows: &'a [CapacityReport],
}

pub fn run(args: SweepArgs) -> CmdResult<()> {
    let stats_path = args.out_dir.join("statistics.json");
    if !stats_path.exists() {
        return Err(usage(
            "sweep",
            format!(
                "no cached statistics at {}; run `repcap pipeline --out-dir {}` first",
                stats_path.display(),
                args.out_dir.display()
            ),
        ));
    }
    let text = std::fs::read_to_string(&stats_path)
        .map_err(|e| usage("sweep", format!("read {}: {e}", stats_path.display())))?;
    let stats: StatisticsFile = serde_json::from_str(&text)
        .map_err(|e| usage("sweep", format!("bad statistics file: {e}")))?;

    let fars = resolved_fars(&args.far)?;
    let selectors: Vec<SelectorArg> = if args.selector.is_empty() {
        vec![
            SelectorArg::Min,
            SelectorArg::Mean,
            SelectorArg::Median,
            SelectorArg::Max,
        ]
    } else {
        args.selector.clone()
    };
    let params: Vec<ParamArg> = if args.param.is_empty() {
        vec![ParamArg::Full]
    } else {
        args.param.clone()
    };

    let mut rows: Vec<CapacityReport> = Vec::new();
    for &param_arg in &params {
        let param: Parameterization = param_arg.into();
        for &sel_arg in &selectors {
            let selector: CanonicalSelector = sel_arg.into();
            let canonical = select_canonical_class(&stats.classes, selector).stage("sweep")?;
            let pop = population_statistics(&stats.classes, &canonical).stage("sweep")?;
            for &q in &fars {
                let frac = if args.shannon_pairing {
                    1.0 - q
                } else {
                    args.population_fraction
                };
                let r_y = fraction_to_radius(frac, stats.proj_dim).stage("sweep")?;
                let r_z = far_to_radius(q, stats.proj_dim).stage("sweep")?;
                let mut report =
                    capacity(&pop, &canonical, r_y, r_z, param, selector).stage("sweep")?;
                report.far = q;
                report.population_fraction = frac;
                rows.push(report);
            }
        }
    }

    let mut csv = String::from(CapacityReport::csv_header());
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    print!("{csv}");
    write_text(&args.out_dir.join("sweep.csv"), &csv, "sweep")?;
    let report = SweepReport {
        provenance: &args,
        rows: &rows,
    };
    write_json(&args.out_dir.join("sweep.json"), &report, "sweep")?;
    Ok(())
}

//! CSV files written by the commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use fptmc_core::calibration::{FittedFirm, TraceEntry};
use fptmc_core::{DensityEstimate, FptSample, RunOutcome, SampleKind};

pub type CsvWriter = csv::Writer<BufWriter<File>>;

pub fn create(path: &Path, header: &[&str]) -> csv::Result<CsvWriter> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    Ok(w)
}

pub fn finish(mut w: CsvWriter) -> std::io::Result<()> {
    w.flush()?;
    w.into_inner().map_err(|e| e.into_error())?.flush()
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_density(w: &mut CsvWriter, firm: &str, de: &DensityEstimate) -> csv::Result<()> {
    for (t, v) in de.grid.iter().zip(&de.values) {
        w.write_record([firm, &num(*t), &num(*v)])?;
    }
    Ok(())
}

pub fn write_rates(w: &mut CsvWriter, firm: &str, grid: &[f64], rates: &[f64]) -> csv::Result<()> {
    for (t, p) in grid.iter().zip(rates) {
        w.write_record([firm, &num(*t), &num(*p)])?;
    }
    Ok(())
}

pub const SAMPLES_HEADER: [&str; 6] = ["firm", "run", "time", "weight", "kind", "crossing_time"];

pub fn write_samples(w: &mut CsvWriter, names: &[String], outcomes: &[RunOutcome]) -> csv::Result<()> {
    for o in outcomes {
        for s in o.samples().iter().flatten() {
            write_sample(w, &names[s.firm], o.run, s)?;
        }
    }
    Ok(())
}

fn write_sample(w: &mut CsvWriter, firm: &str, run: u64, s: &FptSample) -> csv::Result<()> {
    let kind = match s.kind {
        SampleKind::Interior => "interior",
        SampleKind::RightBoundary => "right_boundary",
    };
    w.write_record([firm, &run.to_string(), &num(s.time), &num(s.weight), kind, &num(s.crossing_time)])
}

pub fn write_correlation(
    w: &mut CsvWriter,
    pair: (&str, &str),
    t: f64,
    aggregate: Option<f64>,
    percycle: Option<f64>,
) -> csv::Result<()> {
    w.write_record([pair.0, pair.1, &num(t), &opt(aggregate), &opt(percycle)])
}

pub fn write_bench(w: &mut CsvWriter, engine: &str, per_run: f64, ratio: Option<f64>) -> csv::Result<()> {
    w.write_record([engine, &num(per_run), &opt(ratio)])
}

pub fn write_fitted(w: &mut CsvWriter, firm: &FittedFirm) -> csv::Result<()> {
    let p = &firm.params;
    w.write_record([&firm.rating, &num(p.sigma), &num(p.intensity), &num(p.jump_mean), &num(p.jump_std)])
}

pub const TRACE_HEADER: [&str; 8] = ["evaluation", "rating", "sigma", "lambda", "mu_z", "sigma_z", "objective", "accepted"];

pub fn write_trace(w: &mut CsvWriter, e: &TraceEntry) -> csv::Result<()> {
    let p = &e.params;
    w.write_record([
        e.evaluation.to_string().as_str(),
        &e.rating,
        &num(p.sigma),
        &num(p.intensity),
        &num(p.jump_mean),
        &num(p.jump_std),
        &num(e.objective),
        if e.accepted { "true" } else { "false" },
    ])
}

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use super::episode::{Episode, Guidance, Mode, Simulator};
use super::metrics::EpisodeMetrics;
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::planner::PlannerConfig;

pub const SUITE_CSV_HEADER: &str = "mode,scenario,pck,mse,ticks,mse_ticks";
pub const ALL_COLUMN: &str = "All";

/// PCK and MSE of one mode on one scenario, or pooled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub pck: f64,
    pub mse: f64,
    pub ticks: usize,
    pub mse_ticks: usize,
}

impl Score {
    pub fn of(m: &EpisodeMetrics) -> Self {
        Score { pck: m.mean_pck, mse: m.mean_mse, ticks: m.ticks(), mse_ticks: m.mse_ticks() }
    }

    /// Tick-weighted pooling.
    pub fn pool(scores: &[Score]) -> Self {
        let ticks: usize = scores.iter().map(|s| s.ticks).sum();
        let mse_ticks: usize = scores.iter().map(|s| s.mse_ticks).sum();
        let wmean = |f: fn(&Score) -> (f64, usize), n: usize| if n == 0 { 0.0 } else { scores.iter().map(|s| f(s).0 * f(s).1 as f64).sum::<f64>() / n as f64 };
        Score { pck: wmean(|s| (s.pck, s.ticks), ticks), mse: wmean(|s| (s.mse, s.mse_ticks), mse_ticks), ticks, mse_ticks }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub mode: String,
    /// One entry per scenario, in the report's scenario order.
    pub scores: Vec<Score>,
    pub all: Score,
}

/// Comparison table: one row per camera policy, one column per scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub scenarios: Vec<String>,
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn row(&self, mode: &str) -> Option<&SuiteRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{SUITE_CSV_HEADER}")?;
        for r in &self.rows {
            for (name, s) in self.scenarios.iter().map(String::as_str).zip(&r.scores).chain(std::iter::once((ALL_COLUMN, &r.all))) {
                writeln!(w, "{},{},{},{},{},{}", r.mode, name, s.pck, s.mse, s.ticks, s.mse_ticks)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        if lines.next().transpose()?.as_deref() != Some(SUITE_CSV_HEADER) {
            return Err(Error::format("missing suite header"));
        }
        let mut scenarios: Vec<String> = Vec::new();
        let mut rows: Vec<SuiteRow> = Vec::new();
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::format(format!("expected 6 fields: {line}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::format(format!("bad number {s}")));
            let int = |s: &str| s.parse::<usize>().map_err(|_| Error::format(format!("bad count {s}")));
            let s = Score { pck: num(f[2])?, mse: num(f[3])?, ticks: int(f[4])?, mse_ticks: int(f[5])? };
            if rows.last().is_none_or(|r| r.mode != f[0]) {
                rows.push(SuiteRow { mode: f[0].to_string(), scores: Vec::new(), all: s });
            }
            let row = rows.last_mut().unwrap();
            if f[1] == ALL_COLUMN {
                row.all = s;
            } else {
                if rows.len() == 1 {
                    scenarios.push(f[1].to_string());
                }
                let row = rows.last_mut().unwrap();
                if scenarios.get(row.scores.len()).map(String::as_str) != Some(f[1]) {
                    return Err(Error::format(format!("scenario {} out of order", f[1])));
                }
                row.scores.push(s);
            }
        }
        if rows.iter().any(|r| r.scores.len() != scenarios.len()) {
            return Err(Error::format("ragged suite table"));
        }
        Ok(SuiteReport { scenarios, rows })
    }

    /// Fixed-width text rendering of the table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let cols: Vec<&str> = self.scenarios.iter().map(String::as_str).chain([ALL_COLUMN]).collect();
        let _ = write!(out, "{:<8}", "mode");
        for c in &cols {
            let _ = write!(out, " | {:^19}", c);
        }
        out.push('\n');
        let _ = write!(out, "{:<8}", "");
        for _ in &cols {
            let _ = write!(out, " | {:>7} {:>11}", "PCK", "MSE");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<8}", r.mode);
            for s in r.scores.iter().chain([&r.all]) {
                let _ = write!(out, " | {:>7.3} {:>11.2}", s.pck, s.mse);
            }
            out.push('\n');
        }
        out
    }
}

/// Per-episode summary CSV.
pub fn write_metrics_csv<W: Write>(mut w: W, episodes: &[EpisodeMetrics]) -> Result<()> {
    writeln!(w, "scenario,mode,ticks,mean_pck,mean_mse,occlusion_ticks,fallback_ticks,collisions,min_clearance")?;
    for m in episodes {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            m.scenario,
            m.mode,
            m.ticks(),
            m.mean_pck,
            m.mean_mse,
            m.occlusion_ticks,
            m.fallback_ticks,
            m.collisions,
            m.min_clearance
        )?;
    }
    Ok(())
}

/// Run every mode on every scenario. Episodes run in parallel; results come
/// back in scenario-major, [`Mode::ALL`] order.
pub fn evaluate_suite(scenarios: &[Scenario], guidance: &Guidance, cfg: &PlannerConfig) -> Result<(SuiteReport, Vec<Episode>)> {
    if scenarios.is_empty() {
        return Err(Error::invalid("suite needs at least one scenario"));
    }
    let sims: Vec<Simulator> = scenarios.par_iter().map(Simulator::new).collect::<Result<_>>()?;
    let jobs: Vec<(usize, Mode)> = (0..sims.len()).flat_map(|s| Mode::ALL.map(|m| (s, m))).collect();
    let episodes: Vec<Episode> = jobs.par_iter().map(|&(s, m)| sims[s].run(m, guidance, cfg)).collect::<Result<_>>()?;
    let rows = Mode::ALL
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let scores: Vec<Score> = (0..sims.len()).map(|s| Score::of(&episodes[s * Mode::ALL.len() + mi].metrics)).collect();
            SuiteRow { mode: m.name().to_string(), all: Score::pool(&scores), scores }
        })
        .collect();
    Ok((SuiteReport { scenarios: scenarios.iter().map(|s| s.name.clone()).collect(), rows }, episodes))
}

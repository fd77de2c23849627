//! Tracking and control-activity metrics, instability detection, and
//! simulation-based gain and delay margins.

use crate::actuation::Actuator;
use crate::control_math::StateSpace;
use crate::controllers::Controller;
use crate::error::{Error, Result};
use crate::sim::{run_closed_loop, Scenario, SimConfig, SimLog};
use serde::{Deserialize, Serialize};

pub const DEFAULT_GAIN_CAP: f64 = 10.5;
pub const DEFAULT_DELAY_CAP: f64 = 3.0;
pub const GAIN_TOLERANCE: f64 = 0.05;
/// Extra time the final setpoint is held in margin runs, s.
pub const DEFAULT_MARGIN_HOLD: f64 = 60.0;

/// Coarse sweep spacing in grid steps (0.5 in gain, 0.2 s in delay).
pub const GAIN_COARSE_STEP: usize = 10;
pub const DELAY_COARSE_STEP: usize = 20;

/// Fraction of the final segment inspected by [`detect_instability`].
pub const SETTLE_WINDOW: f64 = 0.25;
/// Error bound, relative to the final step, for a settled loop.
pub const SETTLE_ERROR_FRACTION: f64 = 0.2;
/// Peak-to-peak servo activity, relative to the amplitude limit, that
/// still counts as at rest in the settle window.
pub const SETTLE_ACTIVITY_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub ise: f64,
    pub iace: f64,
    pub iacer: f64,
}

/// Normalized ISE, IACE and IACER of a completed run.
pub fn compute_metrics(log: &SimLog) -> Result<Metrics> {
    if log.diverged || log.len() < 2 {
        return Err(Error::MetricsUnavailable);
    }
    if [&log.e, &log.u_ac].iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::MetricsUnavailable);
    }
    let tf = log.duration();
    let trapz = |f: &dyn Fn(usize) -> f64| -> f64 { (1..log.len()).map(|k| 0.5 * (f(k) + f(k - 1)) * (log.t[k] - log.t[k - 1])).sum() };
    let ise = trapz(&|k| log.e[k] * log.e[k]) / tf;
    let iace = trapz(&|k| log.u_ac[k].abs()) / tf;
    let iacer = log.u_ac.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / tf;
    Ok(Metrics { ise, iace, iacer })
}

/// Flags a run whose loop did not come to rest on the final setpoint.
///
/// Unstable when the run diverged, a sample is non-finite, the error over
/// the last quarter of the final segment reaches 20% of the final step, or
/// the servo output over that window still swings by more than 10% of
/// `u_max`. The last test catches rate-limited limit cycles whose heading
/// ripple is too small for the error test.
pub fn detect_instability(log: &SimLog, scenario: &Scenario, u_max: f64) -> bool {
    if log.diverged || log.is_empty() {
        return true;
    }
    let signals = [&log.y, &log.e, &log.u_ac, &log.u_c];
    if signals.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return true;
    }
    let (start, _, step) = scenario.final_step();
    let end = log.duration();
    let from = end - SETTLE_WINDOW * (end - start);
    let window: Vec<usize> = (0..log.len()).filter(|&k| log.t[k] >= from - 1e-9).collect();
    if window.is_empty() {
        return true;
    }
    let worst = window.iter().map(|&k| log.e[k].abs()).fold(0.0, f64::max);
    if worst > SETTLE_ERROR_FRACTION * step {
        return true;
    }
    let (lo, hi) = window
        .iter()
        .map(|&k| log.u_ac[k])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), u| (lo.min(u), hi.max(u)));
    hi - lo > SETTLE_ACTIVITY_FRACTION * u_max
}

/// Everything needed to reproduce one benchmark run.
#[derive(Debug, Clone)]
pub struct BenchmarkSetup {
    pub plant: StateSpace,
    pub controller: Controller,
    pub actuator: Actuator,
    pub scenario: Scenario,
    pub sim: SimConfig,
    /// Margin runs hold the final setpoint this much longer than the
    /// scenario, so slowly decaying transients are not taken for
    /// sustained oscillation.
    pub margin_hold: f64,
}

impl BenchmarkSetup {
    pub fn new(plant: StateSpace, controller: Controller, actuator: Actuator, scenario: Scenario, sim: SimConfig) -> Self {
        Self {
            plant,
            controller,
            actuator,
            scenario,
            sim,
            margin_hold: DEFAULT_MARGIN_HOLD,
        }
    }

    pub fn run(&self) -> Result<SimLog> {
        run_closed_loop(&self.plant, &self.controller, &self.actuator, &self.scenario, &self.sim)
    }

    /// Scenario used by margin runs.
    pub fn margin_scenario(&self) -> Scenario {
        Scenario {
            segments: self.scenario.segments.clone(),
            tf: self.scenario.tf + self.margin_hold,
        }
    }

    pub fn run_perturbed(&self, perturbation: Perturbation) -> Result<SimLog> {
        let mut sim = self.sim;
        match perturbation {
            Perturbation::Gain(g) => sim.gain_scale = g,
            Perturbation::DelaySamples(n) => sim.injected_delay = n as f64 * sim.ts,
        }
        run_closed_loop(&self.plant, &self.controller, &self.actuator, &self.margin_scenario(), &sim)
    }

    /// True when the perturbed loop stays bounded and settles.
    pub fn is_stable(&self, perturbation: Perturbation) -> Result<bool> {
        let log = self.run_perturbed(perturbation)?;
        Ok(!detect_instability(&log, &self.margin_scenario(), self.actuator.amplitude_limit()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Gain(f64),
    DelaySamples(usize),
}

/// How a batch of independent runs is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

/// Stability verdict for each perturbation, in input order.
pub fn stability_sweep(setup: &BenchmarkSetup, points: &[Perturbation], exec: Execution) -> Result<Vec<bool>> {
    match exec {
        Execution::Sequential => points.iter().map(|p| setup.is_stable(*p)).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            points.par_iter().map(|p| setup.is_stable(*p)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub value: f64,
    pub exceeds_cap: bool,
    /// False when the coarse sweep found a stable point above an unstable
    /// one and the answer came from the full sweep.
    pub monotone: bool,
    pub runs: usize,
}

/// Largest grid index with every index up to it stable, searched over
/// `0..=n` where index 0 is the nominal loop.
fn boundary_search(n: usize, coarse_step: usize, stable_at: &(dyn Fn(&[usize]) -> Result<Vec<bool>> + Sync)) -> Result<(usize, bool, usize)> {
    let mut grid: Vec<usize> = (0..=n).step_by(coarse_step.max(1)).collect();
    if grid.last() != Some(&n) {
        grid.push(n);
    }
    let coarse = stable_at(&grid)?;
    let mut runs = grid.len();
    if !coarse[0] {
        return Err(Error::NominalUnstable);
    }
    let first_bad = coarse.iter().position(|s| !s);
    let monotone = match first_bad {
        Some(i) => coarse[i..].iter().all(|s| !s),
        None => true,
    };
    if !monotone {
        let all: Vec<usize> = (0..=n).collect();
        let verdict = stable_at(&all)?;
        runs += all.len();
        let last_good = verdict.iter().position(|s| !s).map_or(n, |i| i - 1);
        return Ok((last_good, false, runs));
    }
    let Some(i) = first_bad else {
        return Ok((n, true, runs));
    };
    // bisection between the last stable and first unstable coarse points
    let (mut lo, mut hi) = (grid[i - 1], grid[i]);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        runs += 1;
        if stable_at(&[mid])?[0] {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, true, runs))
}

/// Largest loop-gain multiplier in `[1, cap]` keeping the loop stable,
/// resolved to [`GAIN_TOLERANCE`].
pub fn estimate_gain_margin(setup: &BenchmarkSetup, cap: f64, exec: Execution) -> Result<Margin> {
    if !(cap >= 1.0) {
        return Err(Error::Argument(format!("gain cap must be >= 1, got {cap}")));
    }
    let n = ((cap - 1.0) / GAIN_TOLERANCE).round() as usize;
    let gain = |i: usize| if i == n { cap } else { 1.0 + i as f64 * GAIN_TOLERANCE };
    let stable_at = |idx: &[usize]| {
        let points: Vec<Perturbation> = idx.iter().map(|&i| Perturbation::Gain(gain(i))).collect();
        stability_sweep(setup, &points, exec)
    };
    let (i, monotone, runs) = boundary_search(n, GAIN_COARSE_STEP, &stable_at)?;
    Ok(Margin {
        value: gain(i),
        exceeds_cap: i == n,
        monotone,
        runs,
    })
}

/// Largest injected delay in `[0, cap]`, in whole control periods, keeping
/// the loop stable.
pub fn estimate_delay_margin(setup: &BenchmarkSetup, cap: f64, exec: Execution) -> Result<Margin> {
    if !(cap >= 0.0) {
        return Err(Error::Argument(format!("delay cap must be >= 0, got {cap}")));
    }
    let ts = setup.sim.ts;
    let n = (cap / ts + 1e-9).floor() as usize;
    let stable_at = |idx: &[usize]| {
        let points: Vec<Perturbation> = idx.iter().map(|&i| Perturbation::DelaySamples(i)).collect();
        stability_sweep(setup, &points, exec)
    };
    let (i, monotone, runs) = boundary_search(n, DELAY_COARSE_STEP, &stable_at)?;
    Ok(Margin {
        value: i as f64 * ts,
        exceeds_cap: i == n,
        monotone,
        runs,
    })
}

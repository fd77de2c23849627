//! TOML run configuration. Every section is optional and falls back to the
//! benchmark defaults; unknown keys are rejected.

use antiwindup::actuation::{Actuator, ActuatorModel, ActuatorParams};
use antiwindup::analysis::{BenchmarkSetup, DEFAULT_DELAY_CAP, DEFAULT_GAIN_CAP, DEFAULT_MARGIN_HOLD};
use antiwindup::control_math::{Matrix, StateSpace};
use antiwindup::controllers::{AwMode, ClassicPid, Controller, DeficiencyTiming, LqiAw, LqiAwParams, PdAw, PdAwParams, PidGains};
use antiwindup::mpc::{MpcController, MpcParams, PreviewPolicy, QpMethod};
use antiwindup::sim::{DelayPoint, GainPoint, Scenario, SimConfig};
use antiwindup::{Error, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    PdAw,
    LqiAw,
    ClassicPid,
    Mpc,
}

impl ControllerKind {
    pub const BENCHMARK: [ControllerKind; 3] = [ControllerKind::PdAw, ControllerKind::LqiAw, ControllerKind::Mpc];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::PdAw => "pd_aw",
            ControllerKind::LqiAw => "lqi_aw",
            ControllerKind::ClassicPid => "classic_pid",
            ControllerKind::Mpc => "mpc",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pd_aw" => Ok(ControllerKind::PdAw),
            "lqi_aw" => Ok(ControllerKind::LqiAw),
            "classic_pid" => Ok(ControllerKind::ClassicPid),
            "mpc" => Ok(ControllerKind::Mpc),
            other => Err(Error::Config(format!(
                "unknown controller `{other}` (expected pd_aw, lqi_aw, classic_pid or mpc)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    /// `[start_time, setpoint]` pairs.
    pub segments: Vec<(f64, f64)>,
    pub tf: f64,
    /// TOML file with `segments` and `tf`, relative to the config file.
    pub file: Option<PathBuf>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let s = Scenario::default();
        Self {
            segments: s.segments,
            tf: s.tf,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub h: f64,
    pub ts: f64,
    pub gain_point: GainPoint,
    pub delay_point: DelayPoint,
}

impl Default for SimSection {
    fn default() -> Self {
        let c = SimConfig::default();
        Self {
            h: c.h,
            ts: c.ts,
            gain_point: c.gain_point,
            delay_point: c.delay_point,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorSection {
    pub tau: f64,
    pub u_max: f64,
    pub rate_max: f64,
    pub model: ActuatorModel,
}

impl Default for ActuatorSection {
    fn default() -> Self {
        let p = ActuatorParams::default();
        Self {
            tau: p.tau,
            u_max: p.u_max,
            rate_max: p.rate_max,
            model: ActuatorModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdAwSection {
    pub kp: f64,
    pub kd: f64,
    pub kaw: f64,
    pub timing: DeficiencyTiming,
}

impl Default for PdAwSection {
    fn default() -> Self {
        let p = PdAwParams::default();
        Self {
            kp: p.kp,
            kd: p.kd,
            kaw: p.kaw,
            timing: DeficiencyTiming::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqiAwSection {
    /// Diagonal of the state weight on `[e_I, psi, r]`.
    pub q: Vec<f64>,
    pub r: f64,
    pub kaw: f64,
}

impl Default for LqiAwSection {
    fn default() -> Self {
        Self {
            q: vec![1000.0, 50.0, 25.0],
            r: 1.0,
            kaw: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicPidSection {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub saturation_tolerance: f64,
    pub aw: AwMode,
}

impl Default for ClassicPidSection {
    fn default() -> Self {
        let g = PidGains::default();
        Self {
            kp: g.kp,
            ki: g.ki,
            kd: g.kd,
            saturation_tolerance: g.saturation_tolerance,
            aw: AwMode::BackCalculation { kaw: 4.0 },
        }
    }
}

/// MPC settings; `u_max` comes from the actuator and the period from `sim.ts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSection {
    pub ny: usize,
    pub nu: usize,
    pub lambda: f64,
    /// Increment bound per sample; defaults to `rate_max * ts`.
    pub du_max: Option<f64>,
    pub model_actuator_lag: bool,
    pub preview: PreviewPolicy,
    pub solver: QpMethod,
}

impl Default for MpcSection {
    fn default() -> Self {
        let p = MpcParams::default();
        Self {
            ny: p.ny,
            nu: p.nu,
            lambda: p.lambda,
            du_max: None,
            model_actuator_lag: p.model_actuator_lag,
            preview: p.preview,
            solver: p.solver,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginSection {
    pub gain_cap: f64,
    pub delay_cap: f64,
    pub hold: f64,
}

impl Default for MarginSection {
    fn default() -> Self {
        Self {
            gain_cap: DEFAULT_GAIN_CAP,
            delay_cap: DEFAULT_DELAY_CAP,
            hold: DEFAULT_MARGIN_HOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub controllers: Vec<ControllerKind>,
    pub out_dir: PathBuf,
    pub margins: bool,
    pub plots: bool,
    pub scenario: ScenarioSection,
    pub sim: SimSection,
    pub actuator: ActuatorSection,
    pub pd_aw: PdAwSection,
    pub lqi_aw: LqiAwSection,
    pub classic_pid: ClassicPidSection,
    pub mpc: MpcSection,
    pub margin: MarginSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            controllers: ControllerKind::BENCHMARK.to_vec(),
            out_dir: PathBuf::from("out"),
            margins: true,
            plots: true,
            scenario: ScenarioSection::default(),
            sim: SimSection::default(),
            actuator: ActuatorSection::default(),
            pd_aw: PdAwSection::default(),
            lqi_aw: LqiAwSection::default(),
            classic_pid: ClassicPidSection::default(),
            mpc: MpcSection::default(),
            margin: MarginSection::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    segments: Vec<(f64, f64)>,
    tf: f64,
}

/// Parses and validates a config document. `base` resolves a relative
/// scenario file.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<RunConfig> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(file) = cfg.scenario.file.take() {
        let path = match base {
            Some(dir) if file.is_relative() => dir.join(&file),
            _ => file,
        };
        let body = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let sc: ScenarioFile = toml::from_str(&body).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.scenario.segments = sc.segments;
        cfg.scenario.tf = sc.tf;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text, path.parent())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.controllers.is_empty() {
            return Err(Error::Config("no controllers selected".into()));
        }
        self.scenario()?;
        self.sim_config().validate()?;
        self.actuator()?;
        for kind in &self.controllers {
            self.controller(*kind)?;
        }
        if !(self.margin.gain_cap >= 1.0) {
            return Err(Error::Config(format!("margin.gain_cap must be >= 1, got {}", self.margin.gain_cap)));
        }
        if !(self.margin.delay_cap >= 0.0) || !(self.margin.hold >= 0.0) {
            return Err(Error::Config("margin.delay_cap and margin.hold must be >= 0".into()));
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::new(self.scenario.segments.clone(), self.scenario.tf)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            h: self.sim.h,
            ts: self.sim.ts,
            gain_point: self.sim.gain_point,
            delay_point: self.sim.delay_point,
            ..SimConfig::default()
        }
    }

    pub fn actuator(&self) -> Result<Actuator> {
        let a = &self.actuator;
        Actuator::new(
            ActuatorParams {
                tau: a.tau,
                u_max: a.u_max,
                rate_max: a.rate_max,
            },
            a.model,
        )
    }

    pub fn plant(&self) -> StateSpace {
        StateSpace::remus_yaw()
    }

    pub fn controller(&self, kind: ControllerKind) -> Result<Controller> {
        let finite = |name: &str, v: &[f64]| {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} gains must be finite")))
            }
        };
        match kind {
            ControllerKind::PdAw => {
                let s = &self.pd_aw;
                finite("pd_aw", &[s.kp, s.kd, s.kaw])?;
                let params = PdAwParams {
                    kp: s.kp,
                    kd: s.kd,
                    kaw: s.kaw,
                };
                Ok(Controller::PdAw(PdAw::new(params, s.timing)))
            }
            ControllerKind::LqiAw => {
                let s = &self.lqi_aw;
                finite("lqi_aw", &[s.r, s.kaw])?;
                let plant = self.plant();
                if s.q.len() != plant.states() + 1 {
                    return Err(Error::Config(format!("lqi_aw.q needs {} entries, got {}", plant.states() + 1, s.q.len())));
                }
                let q = Matrix::from_diagonal(&DVector::from_vec(s.q.clone()));
                Ok(Controller::LqiAw(LqiAw::new(LqiAwParams::synthesize(&plant, &q, s.r, s.kaw)?)))
            }
            ControllerKind::ClassicPid => {
                let s = &self.classic_pid;
                finite("classic_pid", &[s.kp, s.ki, s.kd])?;
                let gains = PidGains {
                    kp: s.kp,
                    ki: s.ki,
                    kd: s.kd,
                    saturation_tolerance: s.saturation_tolerance,
                };
                Ok(Controller::ClassicPid(ClassicPid::new(gains, s.aw)?))
            }
            ControllerKind::Mpc => {
                let s = &self.mpc;
                let params = MpcParams {
                    ts: self.sim.ts,
                    ny: s.ny,
                    nu: s.nu,
                    lambda: s.lambda,
                    u_max: self.actuator.u_max,
                    du_max: s.du_max.unwrap_or(self.actuator.rate_max * self.sim.ts),
                    model_actuator_lag: s.model_actuator_lag,
                    preview: s.preview,
                    solver: s.solver,
                };
                Ok(Controller::Mpc(Box::new(MpcController::new(&self.plant(), self.actuator.tau, params)?)))
            }
        }
    }

    pub fn setup(&self, kind: ControllerKind) -> Result<BenchmarkSetup> {
        let mut setup = BenchmarkSetup::new(self.plant(), self.controller(kind)?, self.actuator()?, self.scenario()?, self.sim_config());
        setup.margin_hold = self.margin.hold;
        Ok(setup)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("", None).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.pd_aw.kp, 8.0);
        assert_eq!(cfg.pd_aw.kd, 6.0);
        assert_eq!(cfg.lqi_aw.q, vec![1000.0, 50.0, 25.0]);
        assert_eq!(cfg.mpc.lambda, 0.1);
        assert_eq!(cfg.mpc.ny, 120);
        assert_eq!(cfg.mpc.nu, 2);
        assert_eq!(cfg.scenario.tf, 80.0);
        assert_eq!(cfg.actuator.tau, 0.1);
    }

    #[test]
    fn negative_gain_accepted() {
        let cfg = parse_config("[pd_aw]\nkp = -3\n", None).unwrap();
        assert_eq!(cfg.pd_aw.kp, -3.0);
    }

    #[test]
    fn zero_tau_rejected() {
        let err = parse_config("[actuator]\ntau = 0\n", None).unwrap_err();
        assert!(err.to_string().contains("tau"), "{err}");
    }

    #[test]
    fn unknown_key_named() {
        let err = parse_config("foo = 1\n", None).unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
        let err = parse_config("[mpc]\nfoo = 1\n", None).unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
    }

    #[test]
    fn parse_error_has_line() {
        let err = parse_config("margins = true\nplots = = 3\n", None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn inline_scenario_and_controllers() {
        let text = "controllers = [\"mpc\", \"classic_pid\"]\n[scenario]\nsegments = [[0, 0], [2, 30]]\ntf = 10\n[classic_pid.aw]\nkind = \"integral_clipping\"\nlimit = 12\n";
        let cfg = parse_config(text, None).unwrap();
        assert_eq!(cfg.controllers, vec![ControllerKind::Mpc, ControllerKind::ClassicPid]);
        assert_eq!(cfg.scenario().unwrap().setpoint_at(3.0).unwrap(), 30.0);
        assert_eq!(cfg.classic_pid.aw, AwMode::IntegralClipping { limit: 12.0 });
    }

    #[test]
    fn invalid_scenario_rejected() {
        assert!(parse_config("[scenario]\nsegments = [[1, 0]]\n", None).is_err());
        assert!(parse_config("[mpc]\nnu = 200\n", None).is_err());
    }

    #[test]
    fn scenario_file_resolved_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("steps.toml"), "segments = [[0, 0], [1, 45]]\ntf = 20\n").unwrap();
        std::fs::write(dir.path().join("run.toml"), "[scenario]\nfile = \"steps.toml\"\n").unwrap();
        let cfg = load_config(&dir.path().join("run.toml")).unwrap();
        assert_eq!(cfg.scenario.tf, 20.0);
        assert_eq!(cfg.scenario.segments, vec![(0.0, 0.0), (1.0, 45.0)]);
    }

    #[test]
    fn controller_names_round_trip() {
        for k in [ControllerKind::PdAw, ControllerKind::LqiAw, ControllerKind::ClassicPid, ControllerKind::Mpc] {
            assert_eq!(k.name().parse::<ControllerKind>().unwrap(), k);
        }
        assert!("pid".parse::<ControllerKind>().is_err());
    }
}

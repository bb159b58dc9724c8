//! World and system parameters, config file ingestion, and seeded RNG streams.
//!
//! A scenario is loaded from a single TOML file with sections `[scenario]`,
//! `[system]`, `[energy]` and `[experiment]`. Any absent field falls back to
//! the built-in defaults (the reference simulation parameters). Fields that
//! are naturally quoted in dB/dBm may be given either in dB form (`alpha0_db`)
//! or directly in linear SI form (`alpha0`); giving both is rejected. The
//! in-memory representation is strictly linear SI.
//!
//! All randomness in the crate flows through [`new_rng`]: a stream is a pure
//! function of `(seed, label)`, so every experiment is reproducible from the
//! config file and seed alone.

use crate::{Error, Point, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Environment variable consulted by the CLI when `--config` is not given.
pub const CONFIG_ENV_VAR: &str = "ISAC_SIM_CONFIG";

/// Communication/radar system parameters, all linear SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Reference downlink channel power gain at 1 m (linear ratio).
    pub alpha0: f64,
    /// Reference two-way radar channel power gain at 1 m (linear ratio).
    pub beta0: f64,
    /// Receiver noise power spectral density in W/Hz.
    pub noise_psd: f64,
    /// Channel bandwidth in Hz.
    pub bandwidth: f64,
    /// Transmit power in W.
    pub tx_power: f64,
    /// Radar signal processing gain (linear ratio).
    pub proc_gain: f64,
    /// Fixed flight altitude in m.
    pub altitude: f64,
    /// Maximum flying speed in m/s.
    pub vmax: f64,
    /// Flight duration per trajectory segment in s.
    pub t_fly: f64,
    /// Hover duration per sensing stop in s.
    pub t_hover: f64,
    /// Hover cadence: the UAV hovers at every `mu`-th waypoint.
    pub mu: u32,
    /// Cruise speed used for initial straight-line paths in m/s.
    pub v_str: f64,
    /// Range measurement noise scale constant (dimensionless).
    pub noise_scale_a: f64,
    /// Area extent along x in m.
    pub lx: f64,
    /// Area extent along y in m.
    pub ly: f64,
    /// Include the covariance-derivative term of the Fisher information
    /// (the 8/d^4 contribution). Disabling it is an ablation aid only.
    #[serde(default = "default_true")]
    pub crb_covariance_term: bool,
}

fn default_true() -> bool {
    true
}

impl SystemParams {
    /// Noise power sigma0^2 = N0 * B in W.
    pub fn noise_power(&self) -> f64 {
        self.noise_psd * self.bandwidth
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            alpha0: db_to_linear(-50.0),
            beta0: db_to_linear(-47.0),
            noise_psd: dbm_to_watt(-170.0), // per Hz
            bandwidth: 1.0e6,
            tx_power: dbm_to_watt(20.0),
            proc_gain: 0.1 * 1.0e6,
            altitude: 200.0,
            vmax: 30.0,
            t_fly: 1.5,
            t_hover: 1.0,
            mu: 5,
            v_str: 20.0,
            noise_scale_a: 10.0,
            lx: 1500.0,
            ly: 1500.0,
            crb_covariance_term: true,
        }
    }
}

/// Rotary-wing propulsion model parameters and the on-board energy budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Blade profile power in hover, W.
    pub p0: f64,
    /// Induced power in hover, W.
    pub pi: f64,
    /// Rotor blade tip speed, m/s.
    pub u_tip: f64,
    /// Mean rotor induced velocity in forward flight, m/s.
    pub v0: f64,
    /// Fuselage drag ratio.
    pub d0: f64,
    /// Air density, kg/m^3.
    pub rho: f64,
    /// Rotor solidity.
    pub s: f64,
    /// Rotor disc area, m^2.
    pub area_a: f64,
    /// Total on-board energy, J.
    pub e_tot: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            p0: 80.0,
            pi: 88.6,
            u_tip: 120.0,
            v0: 4.03,
            d0: 0.6,
            rho: 1.225,
            s: 0.05,
            area_a: 0.503,
            e_tot: 25.0e3,
        }
    }
}

/// Immutable world description shared by every module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Charging base the UAV departs from, m.
    pub base: Point,
    /// Ground communication user, m.
    pub user: Point,
    /// Ground-truth target location, m. Known to the simulator only; the
    /// planner works from estimates.
    pub target_true: Point,
    pub sys: SystemParams,
    pub energy: EnergyParams,
    /// Master seed; all random streams derive from it. Config files can
    /// carry seeds up to 2^63 - 1 (TOML integers are signed).
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            base: Point::new(100.0, 100.0),
            user: Point::new(1200.0, 300.0),
            target_true: Point::new(400.0, 1200.0),
            sys: SystemParams::default(),
            energy: EnergyParams::default(),
            seed: 0,
        }
    }
}

/// Which flight strategy a mission uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Stage-by-stage optimization with estimate refinement between stages.
    MultiStage,
    /// All waypoints designed at once against the initial estimate.
    OneStage,
    /// Straight flight to the user/estimate midpoint, then hover until the
    /// energy runs out.
    Straight,
    /// Multi-stage protocol with the trade-off weight forced to 0.
    CommOnly,
    /// Multi-stage protocol with the trade-off weight forced to 1.
    SenseOnly,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::MultiStage => "multi-stage",
            Strategy::OneStage => "one-stage",
            Strategy::Straight => "straight",
            Strategy::CommOnly => "comm-only",
            Strategy::SenseOnly => "sense-only",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi-stage" | "multi_stage" => Ok(Strategy::MultiStage),
            "one-stage" | "one_stage" => Ok(Strategy::OneStage),
            "straight" => Ok(Strategy::Straight),
            "comm-only" | "comm_only" => Ok(Strategy::CommOnly),
            "sense-only" | "sense_only" => Ok(Strategy::SenseOnly),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy `{other}` (expected multi-stage, one-stage, straight, comm-only or sense-only)"
            ))),
        }
    }
}

/// How the initial coarse target estimate is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialEstimate {
    /// Center of the area (the default when nothing is configured).
    AreaCenter,
    /// A fixed point.
    Fixed(Point),
    /// Truth plus a fixed offset (simulation-only convenience).
    TruthOffset(Point),
}

impl InitialEstimate {
    pub fn resolve(&self, scenario: &Scenario) -> Point {
        match *self {
            InitialEstimate::AreaCenter => {
                Point::new(0.5 * scenario.sys.lx, 0.5 * scenario.sys.ly)
            }
            InitialEstimate::Fixed(p) => p,
            InitialEstimate::TruthOffset(off) => scenario.target_true + off,
        }
    }
}

/// Experiment-level knobs read from the `[experiment]` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Trade-off weight in [0, 1]; 0 = communication only, 1 = sensing only.
    pub eta: f64,
    /// Waypoints per full stage.
    pub n_stg: u32,
    /// Fixed total waypoint budget; `None` lets the energy budget decide.
    pub n_tot: Option<u32>,
    /// Monte-Carlo repetitions.
    pub runs: u32,
    pub strategy: Strategy,
    pub initial_estimate: InitialEstimate,
    /// Evaluate the MLE with the per-entry measured variance instead of the
    /// candidate-dependent variance.
    pub mle_fixed_variance: bool,
    /// Draw measurements without noise (zero-noise limit of the ranging).
    pub noiseless: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            eta: 0.5,
            n_stg: 25,
            n_tot: None,
            runs: 100,
            strategy: Strategy::MultiStage,
            initial_estimate: InitialEstimate::AreaCenter,
            mle_fixed_variance: false,
            noiseless: false,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// dBm to W.
pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

// ---------------------------------------------------------------------------
// Raw config (serde target) and conversion to validated types
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    scenario: RawScenario,
    #[serde(default)]
    system: RawSystem,
    #[serde(default)]
    energy: RawEnergy,
    #[serde(default)]
    experiment: RawExperiment,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    base: Option<[f64; 2]>,
    user: Option<[f64; 2]>,
    target: Option<[f64; 2]>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    alpha0: Option<f64>,
    alpha0_db: Option<f64>,
    beta0: Option<f64>,
    beta0_db: Option<f64>,
    noise_psd_w_per_hz: Option<f64>,
    noise_psd_dbm_per_hz: Option<f64>,
    bandwidth_hz: Option<f64>,
    tx_power_w: Option<f64>,
    tx_power_dbm: Option<f64>,
    proc_gain: Option<f64>,
    altitude_m: Option<f64>,
    vmax_m_per_s: Option<f64>,
    t_fly_s: Option<f64>,
    t_hover_s: Option<f64>,
    mu: Option<u32>,
    v_str_m_per_s: Option<f64>,
    noise_scale_a: Option<f64>,
    area_m: Option<[f64; 2]>,
    crb_covariance_term: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnergy {
    blade_profile_w: Option<f64>,
    induced_w: Option<f64>,
    tip_speed_m_per_s: Option<f64>,
    rotor_induced_m_per_s: Option<f64>,
    fuselage_drag_ratio: Option<f64>,
    air_density: Option<f64>,
    rotor_solidity: Option<f64>,
    rotor_disc_area_m2: Option<f64>,
    e_tot_j: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    eta: Option<f64>,
    n_stg: Option<u32>,
    n_tot: Option<u32>,
    runs: Option<u32>,
    strategy: Option<String>,
    initial_estimate: Option<[f64; 2]>,
    initial_estimate_offset: Option<[f64; 2]>,
    mle_fixed_variance: Option<bool>,
    noiseless: Option<bool>,
}

/// Pick exactly one of a linear field and its dB-form twin.
fn linear_or_db(
    field: &str,
    linear: Option<f64>,
    db: Option<f64>,
    convert: fn(f64) -> f64,
    default: f64,
) -> Result<f64> {
    match (linear, db) {
        (Some(_), Some(_)) => Err(Error::ConfigInvalid {
            field: field.to_string(),
            invariant: "given in both linear and dB form".to_string(),
        }),
        (Some(v), None) => Ok(v),
        (None, Some(d)) => Ok(convert(d)),
        (None, None) => Ok(default),
    }
}

fn require_positive(field: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::ConfigInvalid {
            field: field.to_string(),
            invariant: format!("must be strictly positive and finite, got {value}"),
        })
    }
}

fn require_in_area(field: &str, p: Point, lx: f64, ly: f64) -> Result<Point> {
    if p.is_finite() && (0.0..=lx).contains(&p.x) && (0.0..=ly).contains(&p.y) {
        Ok(p)
    } else {
        Err(Error::ConfigInvalid {
            field: field.to_string(),
            invariant: format!("must lie inside [0, {lx}] x [0, {ly}], got ({}, {})", p.x, p.y),
        })
    }
}

fn build_scenario(raw: &RawConfig) -> Result<Scenario> {
    let d_sys = SystemParams::default();
    let d_en = EnergyParams::default();
    let d_sc = Scenario::default();

    let sys = SystemParams {
        alpha0: require_positive(
            "system.alpha0",
            linear_or_db("system.alpha0", raw.system.alpha0, raw.system.alpha0_db, db_to_linear, d_sys.alpha0)?,
        )?,
        beta0: require_positive(
            "system.beta0",
            linear_or_db("system.beta0", raw.system.beta0, raw.system.beta0_db, db_to_linear, d_sys.beta0)?,
        )?,
        noise_psd: require_positive(
            "system.noise_psd",
            linear_or_db(
                "system.noise_psd",
                raw.system.noise_psd_w_per_hz,
                raw.system.noise_psd_dbm_per_hz,
                dbm_to_watt,
                d_sys.noise_psd,
            )?,
        )?,
        bandwidth: require_positive("system.bandwidth_hz", raw.system.bandwidth_hz.unwrap_or(d_sys.bandwidth))?,
        tx_power: require_positive(
            "system.tx_power",
            linear_or_db("system.tx_power", raw.system.tx_power_w, raw.system.tx_power_dbm, dbm_to_watt, d_sys.tx_power)?,
        )?,
        proc_gain: 0.0, // filled below once bandwidth is known
        altitude: require_positive("system.altitude_m", raw.system.altitude_m.unwrap_or(d_sys.altitude))?,
        vmax: require_positive("system.vmax_m_per_s", raw.system.vmax_m_per_s.unwrap_or(d_sys.vmax))?,
        t_fly: require_positive("system.t_fly_s", raw.system.t_fly_s.unwrap_or(d_sys.t_fly))?,
        t_hover: require_positive("system.t_hover_s", raw.system.t_hover_s.unwrap_or(d_sys.t_hover))?,
        mu: raw.system.mu.unwrap_or(d_sys.mu),
        v_str: require_positive("system.v_str_m_per_s", raw.system.v_str_m_per_s.unwrap_or(d_sys.v_str))?,
        noise_scale_a: require_positive("system.noise_scale_a", raw.system.noise_scale_a.unwrap_or(d_sys.noise_scale_a))?,
        lx: 0.0,
        ly: 0.0,
        crb_covariance_term: raw.system.crb_covariance_term.unwrap_or(true),
    };
    let area = raw.system.area_m.unwrap_or([d_sys.lx, d_sys.ly]);
    let lx = require_positive("system.area_m[0]", area[0])?;
    let ly = require_positive("system.area_m[1]", area[1])?;
    let proc_gain = match raw.system.proc_gain {
        Some(g) => require_positive("system.proc_gain", g)?,
        None => 0.1 * sys.bandwidth,
    };
    let sys = SystemParams { proc_gain, lx, ly, ..sys };

    if sys.mu < 1 {
        return Err(Error::ConfigInvalid {
            field: "system.mu".to_string(),
            invariant: "must be a positive integer".to_string(),
        });
    }
    if sys.v_str > sys.vmax {
        return Err(Error::ConfigInvalid {
            field: "system.v_str_m_per_s".to_string(),
            invariant: format!("must not exceed vmax = {}", sys.vmax),
        });
    }

    let energy = EnergyParams {
        p0: require_positive("energy.blade_profile_w", raw.energy.blade_profile_w.unwrap_or(d_en.p0))?,
        pi: require_positive("energy.induced_w", raw.energy.induced_w.unwrap_or(d_en.pi))?,
        u_tip: require_positive("energy.tip_speed_m_per_s", raw.energy.tip_speed_m_per_s.unwrap_or(d_en.u_tip))?,
        v0: require_positive("energy.rotor_induced_m_per_s", raw.energy.rotor_induced_m_per_s.unwrap_or(d_en.v0))?,
        d0: require_positive("energy.fuselage_drag_ratio", raw.energy.fuselage_drag_ratio.unwrap_or(d_en.d0))?,
        rho: require_positive("energy.air_density", raw.energy.air_density.unwrap_or(d_en.rho))?,
        s: require_positive("energy.rotor_solidity", raw.energy.rotor_solidity.unwrap_or(d_en.s))?,
        area_a: require_positive("energy.rotor_disc_area_m2", raw.energy.rotor_disc_area_m2.unwrap_or(d_en.area_a))?,
        e_tot: require_positive("energy.e_tot_j", raw.energy.e_tot_j.unwrap_or(d_en.e_tot))?,
    };

    let base = require_in_area("scenario.base", raw.scenario.base.map(Point::from).unwrap_or(d_sc.base), lx, ly)?;
    let user = require_in_area("scenario.user", raw.scenario.user.map(Point::from).unwrap_or(d_sc.user), lx, ly)?;
    let target = require_in_area(
        "scenario.target",
        raw.scenario.target.map(Point::from).unwrap_or(d_sc.target_true),
        lx,
        ly,
    )?;

    Ok(Scenario {
        base,
        user,
        target_true: target,
        sys,
        energy,
        seed: raw.scenario.seed.unwrap_or(0),
    })
}

fn build_experiment(raw: &RawConfig) -> Result<ExperimentConfig> {
    let d = ExperimentConfig::default();
    let eta = raw.experiment.eta.unwrap_or(d.eta);
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::ConfigInvalid {
            field: "experiment.eta".to_string(),
            invariant: format!("must be in [0, 1], got {eta}"),
        });
    }
    let n_stg = raw.experiment.n_stg.unwrap_or(d.n_stg);
    if n_stg == 0 {
        return Err(Error::ConfigInvalid {
            field: "experiment.n_stg".to_string(),
            invariant: "must be at least 1".to_string(),
        });
    }
    let strategy = match &raw.experiment.strategy {
        Some(s) => s.parse()?,
        None => d.strategy,
    };
    let initial_estimate = match (raw.experiment.initial_estimate, raw.experiment.initial_estimate_offset) {
        (Some(_), Some(_)) => {
            return Err(Error::ConfigInvalid {
                field: "experiment.initial_estimate".to_string(),
                invariant: "give either a fixed point or an offset, not both".to_string(),
            })
        }
        (Some(p), None) => InitialEstimate::Fixed(Point::from(p)),
        (None, Some(off)) => InitialEstimate::TruthOffset(Point::from(off)),
        (None, None) => InitialEstimate::AreaCenter,
    };
    Ok(ExperimentConfig {
        eta,
        n_stg,
        n_tot: raw.experiment.n_tot.filter(|&n| n > 0),
        runs: raw.experiment.runs.unwrap_or(d.runs).max(1),
        strategy,
        initial_estimate,
        mle_fixed_variance: raw.experiment.mle_fixed_variance.unwrap_or(false),
        noiseless: raw.experiment.noiseless.unwrap_or(false),
    })
}

fn parse_config(text: &str, origin: &str) -> Result<(Scenario, ExperimentConfig)> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
        path: origin.to_string(),
        detail: e.to_string(),
    })?;
    let scenario = build_scenario(&raw)?;
    let experiment = build_experiment(&raw)?;
    Ok((scenario, experiment))
}

/// Load and validate a scenario from a config file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    load_config(path).map(|(s, _)| s)
}

/// Load the scenario together with the `[experiment]` section.
pub fn load_config(path: impl AsRef<Path>) -> Result<(Scenario, ExperimentConfig)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_config(&text, &path.display().to_string())
}

/// Parse a config from an in-memory string (used by tests and round-trips).
pub fn parse_config_str(text: &str) -> Result<(Scenario, ExperimentConfig)> {
    parse_config(text, "<string>")
}

impl Scenario {
    /// Serialize to the config format with every field in canonical linear SI
    /// form. Reloading the output yields a field-wise equal scenario.
    pub fn to_config_string(&self) -> String {
        #[derive(Serialize)]
        struct Doc {
            scenario: DocScenario,
            system: DocSystem,
            energy: DocEnergy,
        }
        #[derive(Serialize)]
        struct DocScenario {
            base: [f64; 2],
            user: [f64; 2],
            target: [f64; 2],
            seed: u64,
        }
        #[derive(Serialize)]
        struct DocSystem {
            alpha0: f64,
            beta0: f64,
            noise_psd_w_per_hz: f64,
            bandwidth_hz: f64,
            tx_power_w: f64,
            proc_gain: f64,
            altitude_m: f64,
            vmax_m_per_s: f64,
            t_fly_s: f64,
            t_hover_s: f64,
            mu: u32,
            v_str_m_per_s: f64,
            noise_scale_a: f64,
            area_m: [f64; 2],
            crb_covariance_term: bool,
        }
        #[derive(Serialize)]
        struct DocEnergy {
            blade_profile_w: f64,
            induced_w: f64,
            tip_speed_m_per_s: f64,
            rotor_induced_m_per_s: f64,
            fuselage_drag_ratio: f64,
            air_density: f64,
            rotor_solidity: f64,
            rotor_disc_area_m2: f64,
            e_tot_j: f64,
        }

        let doc = Doc {
            scenario: DocScenario {
                base: self.base.into(),
                user: self.user.into(),
                target: self.target_true.into(),
                seed: self.seed,
            },
            system: DocSystem {
                alpha0: self.sys.alpha0,
                beta0: self.sys.beta0,
                noise_psd_w_per_hz: self.sys.noise_psd,
                bandwidth_hz: self.sys.bandwidth,
                tx_power_w: self.sys.tx_power,
                proc_gain: self.sys.proc_gain,
                altitude_m: self.sys.altitude,
                vmax_m_per_s: self.sys.vmax,
                t_fly_s: self.sys.t_fly,
                t_hover_s: self.sys.t_hover,
                mu: self.sys.mu,
                v_str_m_per_s: self.sys.v_str,
                noise_scale_a: self.sys.noise_scale_a,
                area_m: [self.sys.lx, self.sys.ly],
                crb_covariance_term: self.sys.crb_covariance_term,
            },
            energy: DocEnergy {
                blade_profile_w: self.energy.p0,
                induced_w: self.energy.pi,
                tip_speed_m_per_s: self.energy.u_tip,
                rotor_induced_m_per_s: self.energy.v0,
                fuselage_drag_ratio: self.energy.d0,
                air_density: self.energy.rho,
                rotor_solidity: self.energy.s,
                rotor_disc_area_m2: self.energy.area_a,
                e_tot_j: self.energy.e_tot,
            },
        };
        toml::to_string(&doc).expect("scenario serialization cannot fail")
    }
}

// ---------------------------------------------------------------------------
// Deterministic random streams
// ---------------------------------------------------------------------------

fn fnv1a64(data: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in data {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// A deterministic random stream that is a pure function of `(seed, label)`.
///
/// Distinct labels on the same seed give statistically independent streams,
/// so concurrent workers each derive their own stream by label instead of
/// sharing one generator.
pub fn new_rng(seed: u64, stream_label: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(stream_label.as_bytes()));
    rng
}

//! Run configuration: a flat `key = value` text format with `#` comments.
//!
//! | key                | default        | meaning                                       |
//! |--------------------|----------------|-----------------------------------------------|
//! | `kappa`            | 5.0            | diffusion coefficient κ > 0                   |
//! | `gamma`            | 1.0            | metabolic exponent γ ≥ 1                      |
//! | `dt`               | 1e-3           | time step                                     |
//! | `t_end`            | 2.0            | horizon                                       |
//! | `nx`, `ny`         | 65             | nodes per axis                                |
//! | `lx`, `ly`         | 1.0            | side lengths                                  |
//! | `source`           | dipole         | `cx cy amplitude sigma`, repeatable           |
//! | `m0_amplitude`     | 0.5            | initial conductance amplitude                 |
//! | `m0_angle`         | 0.0            | direction of `m0` (radians from the x-axis)   |
//! | `m0_mode_x`, `_y`  | 1              | sine mode numbers of the `m0` envelope        |
//! | `cg_tol`           | 1e-10          | relative residual of every CG solve           |
//! | `record_every`     | 10             | steps between trajectory records              |
//! | `adaptive_dt`      | true           | halve steps that violate the explicit bound   |
//! | `steady_tol`       | 1e-8           | stationary residual target                    |
//! | `steady_max_iters` | 20000          | pseudo-time iteration budget                  |
//!
//! The default source is a Gaussian dipole: `+200` at `(0.25, 0.5)` and
//! `-200` at `(0.75, 0.5)`, both with `sigma = 0.08`.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use crate::error::{BtnError, Result};
use crate::grid::{Grid, ScalarField, VectorField2};

/// Version tag of the default scenario (source and initial data).
pub const SCENARIO_VERSION: &str = "dipole-200-v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTerm {
    pub cx: f64,
    pub cy: f64,
    /// Positive for a source, negative for a sink.
    pub amplitude: f64,
    pub sigma: f64,
}

impl GaussianTerm {
    fn eval(&self, x: f64, y: f64) -> f64 {
        let r2 = (x - self.cx).powi(2) + (y - self.cy).powi(2);
        self.amplitude * (-r2 / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// `S(x, y) = Σ aᵢ exp(−|x − cᵢ|² / (2σᵢ²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    terms: Vec<GaussianTerm>,
}

impl SourceSpec {
    pub fn new(terms: Vec<GaussianTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(BtnError::validation("source", "needs at least one Gaussian term"));
        }
        for t in &terms {
            if !(t.sigma > 0.0 && t.sigma.is_finite()) {
                return Err(BtnError::validation(
                    "source",
                    format!("width must be positive, got {}", t.sigma),
                ));
            }
            if ![t.cx, t.cy, t.amplitude].iter().all(|v| v.is_finite()) {
                return Err(BtnError::validation("source", "non-finite centre or amplitude"));
            }
        }
        Ok(Self { terms })
    }

    pub fn dipole() -> Self {
        Self {
            terms: vec![
                GaussianTerm { cx: 0.25, cy: 0.5, amplitude: 200.0, sigma: 0.08 },
                GaussianTerm { cx: 0.75, cy: 0.5, amplitude: -200.0, sigma: 0.08 },
            ],
        }
    }

    pub fn terms(&self) -> &[GaussianTerm] {
        &self.terms
    }

    pub fn evaluate(&self, grid: Grid) -> Result<ScalarField> {
        ScalarField::from_fn(grid, |x, y| self.terms.iter().map(|t| t.eval(x, y)).sum())
    }
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self::dipole()
    }
}

/// `m0 = A (cos θ, sin θ) sin(kx π x / lx) sin(ky π y / ly)`, zero on the
/// boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCondition {
    pub amplitude: f64,
    pub angle: f64,
    pub mode_x: u32,
    pub mode_y: u32,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self { amplitude: 0.5, angle: 0.0, mode_x: 1, mode_y: 1 }
    }
}

impl InitialCondition {
    pub fn zero() -> Self {
        Self { amplitude: 0.0, ..Self::default() }
    }

    pub fn evaluate(&self, grid: Grid) -> Result<VectorField2> {
        let (lx, ly) = (grid.lx(), grid.ly());
        let (kx, ky) = (self.mode_x as f64, self.mode_y as f64);
        let envelope = |x: f64, y: f64| {
            self.amplitude * (kx * PI * x / lx).sin() * (ky * PI * y / ly).sin()
        };
        let (c, s) = (self.angle.cos(), self.angle.sin());
        VectorField2::new(
            ScalarField::from_fn_dirichlet(grid, |x, y| c * envelope(x, y))?,
            ScalarField::from_fn_dirichlet(grid, |x, y| s * envelope(x, y))?,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub kappa: f64,
    pub gamma: f64,
    pub dt: f64,
    pub t_end: f64,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub source: SourceSpec,
    pub initial: InitialCondition,
    pub cg_tol: f64,
    pub record_every: usize,
    pub adaptive_dt: bool,
    pub steady_tol: f64,
    pub steady_max_iters: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            kappa: 5.0,
            gamma: 1.0,
            dt: 1e-3,
            t_end: 2.0,
            nx: 65,
            ny: 65,
            lx: 1.0,
            ly: 1.0,
            source: SourceSpec::dipole(),
            initial: InitialCondition::default(),
            cg_tol: crate::pressure::DEFAULT_CG_TOL,
            record_every: 10,
            adaptive_dt: true,
            steady_tol: 1e-8,
            steady_max_iters: 20_000,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(BtnError::validation(name, format!("must be positive, got {v}")))
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        positive("kappa", self.kappa)?;
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(BtnError::validation(
                "gamma",
                format!("metabolic exponent must satisfy γ ≥ 1, got {}", self.gamma),
            ));
        }
        positive("dt", self.dt)?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(BtnError::validation("t_end", format!("must be ≥ 0, got {}", self.t_end)));
        }
        self.grid()?;
        positive("cg_tol", self.cg_tol)?;
        positive("steady_tol", self.steady_tol)?;
        if self.record_every == 0 {
            return Err(BtnError::validation("record_every", "must be at least 1"));
        }
        if self.initial.mode_x == 0 || self.initial.mode_y == 0 {
            return Err(BtnError::validation("m0_mode", "mode numbers must be at least 1"));
        }
        if !(self.initial.amplitude.is_finite() && self.initial.angle.is_finite()) {
            return Err(BtnError::validation("m0", "non-finite amplitude or angle"));
        }
        SourceSpec::new(self.source.terms.clone())?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.lx, self.ly)
    }

    /// Number of time steps covering `[0, t_end]`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Serializes to the text format; `parse_config` reads it back exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("kappa", format!("{:?}", self.kappa));
        kv("gamma", format!("{:?}", self.gamma));
        kv("dt", format!("{:?}", self.dt));
        kv("t_end", format!("{:?}", self.t_end));
        kv("nx", self.nx.to_string());
        kv("ny", self.ny.to_string());
        kv("lx", format!("{:?}", self.lx));
        kv("ly", format!("{:?}", self.ly));
        for t in &self.source.terms {
            kv(
                "source",
                format!("{:?} {:?} {:?} {:?}", t.cx, t.cy, t.amplitude, t.sigma),
            );
        }
        kv("m0_amplitude", format!("{:?}", self.initial.amplitude));
        kv("m0_angle", format!("{:?}", self.initial.angle));
        kv("m0_mode_x", self.initial.mode_x.to_string());
        kv("m0_mode_y", self.initial.mode_y.to_string());
        kv("cg_tol", format!("{:?}", self.cg_tol));
        kv("record_every", self.record_every.to_string());
        kv("adaptive_dt", self.adaptive_dt.to_string());
        kv("steady_tol", format!("{:?}", self.steady_tol));
        kv("steady_max_iters", self.steady_max_iters.to_string());
        s
    }
}

impl fmt::Display for SimulationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    let mut cfg = SimulationConfig::default();
    let mut sources = Vec::new();
    let mut seen = std::collections::HashSet::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| BtnError::Parse { line: line_no, message };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if key != "source" && !seen.insert(key.to_string()) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        let float = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| err(format!("`{key}` expects a number, got {v:?}")))
        };
        let int = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| err(format!("`{key}` expects a non-negative integer, got {v:?}")))
        };
        match key {
            "kappa" => cfg.kappa = float(value)?,
            "gamma" => cfg.gamma = float(value)?,
            "dt" => cfg.dt = float(value)?,
            "t_end" => cfg.t_end = float(value)?,
            "nx" => cfg.nx = int(value)?,
            "ny" => cfg.ny = int(value)?,
            "lx" => cfg.lx = float(value)?,
            "ly" => cfg.ly = float(value)?,
            "source" => {
                let nums = value
                    .split_whitespace()
                    .map(float)
                    .collect::<Result<Vec<_>>>()?;
                let [cx, cy, amplitude, sigma] = nums[..] else {
                    return Err(err(format!(
                        "`source` expects `cx cy amplitude sigma`, got {value:?}"
                    )));
                };
                sources.push(GaussianTerm { cx, cy, amplitude, sigma });
            }
            "m0_amplitude" => cfg.initial.amplitude = float(value)?,
            "m0_angle" => cfg.initial.angle = float(value)?,
            "m0_mode_x" => cfg.initial.mode_x = int(value)? as u32,
            "m0_mode_y" => cfg.initial.mode_y = int(value)? as u32,
            "cg_tol" => cfg.cg_tol = float(value)?,
            "record_every" => cfg.record_every = int(value)?,
            "adaptive_dt" => {
                cfg.adaptive_dt = value
                    .parse::<bool>()
                    .map_err(|_| err(format!("`adaptive_dt` expects true/false, got {value:?}")))?
            }
            "steady_tol" => cfg.steady_tol = float(value)?,
            "steady_max_iters" => cfg.steady_max_iters = int(value)?,
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }
    if !sources.is_empty() {
        cfg.source = SourceSpec::new(sources)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = parse_config("kappa = 5.0\n").unwrap();
        assert_eq!(cfg.kappa, 5.0);
        assert_eq!((cfg.nx, cfg.ny), (65, 65));
        assert_eq!(cfg.gamma, 1.0);
        assert_eq!(cfg.source.terms().len(), 2);
        assert_eq!(cfg.source, SourceSpec::dipole());
    }

    #[test]
    fn gamma_below_one_names_hypothesis() {
        let err = parse_config("gamma = 0.5").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gamma") && msg.contains("γ ≥ 1"), "{msg}");
    }

    #[test]
    fn named_validation_errors() {
        for (text, name) in [
            ("kappa = 0", "kappa"),
            ("kappa = -1", "kappa"),
            ("dt = 0", "dt"),
            ("nx = 2", "grid"),
            ("source = 0.5 0.5 1.0 0.0", "source"),
            ("record_every = 0", "record_every"),
        ] {
            match parse_config(text).unwrap_err() {
                BtnError::Validation { name: n, .. } => assert_eq!(n, name, "{text}"),
                other => panic!("{text}: {other}"),
            }
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "# header\nkappa = 1.0\n\nthis is not a pair\n";
        match parse_config(text).unwrap_err() {
            BtnError::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("{other}"),
        }
        match parse_config("kappa = 1\nbogus = 3").unwrap_err() {
            BtnError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("unknown key"));
            }
            other => panic!("{other}"),
        }
        assert!(matches!(parse_config("kappa = abc"), Err(BtnError::Parse { line: 1, .. })));
        assert!(matches!(parse_config("kappa = 1\nkappa = 2"), Err(BtnError::Parse { line: 2, .. })));
        assert!(matches!(parse_config("source = 1 2 3"), Err(BtnError::Parse { .. })));
    }

    #[test]
    fn comments_and_sources() {
        let cfg = parse_config(
            "kappa = 2 # trailing comment\nsource = 0.5 0.5 10 0.1\nsource = 0.2 0.2 -10 0.05\n",
        )
        .unwrap();
        assert_eq!(cfg.source.terms().len(), 2);
        assert_eq!(cfg.source.terms()[1].amplitude, -10.0);
    }

    #[test]
    fn source_evaluation() {
        let g = Grid::unit_square(5).unwrap();
        let spec = SourceSpec::new(vec![GaussianTerm { cx: 0.5, cy: 0.5, amplitude: 3.0, sigma: 0.1 }]).unwrap();
        let s = spec.evaluate(g).unwrap();
        assert_eq!(s.get(2, 2), 3.0);
        assert!((s.get(3, 2) - 3.0 * (-0.0625f64 / 0.02).exp()).abs() < 1e-15);
    }

    #[test]
    fn initial_condition_vanishes_on_boundary() {
        let g = Grid::unit_square(9).unwrap();
        let m = InitialCondition { amplitude: 1.0, angle: 0.3, mode_x: 2, mode_y: 1 }
            .evaluate(g)
            .unwrap();
        assert!(m.is_boundary_zero());
        assert!(m.linf() > 0.5);
        assert_eq!(InitialCondition::zero().evaluate(g).unwrap().linf(), 0.0);
    }

    fn arb_config() -> impl Strategy<Value = SimulationConfig> {
        (
            (1e-3f64..1e3, 1.0f64..4.0, 1e-6f64..1e-1, 0.0f64..10.0),
            (3usize..200, 3usize..200, 0.1f64..10.0, 0.1f64..10.0),
            proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, -500.0f64..500.0, 1e-3f64..1.0), 1..4),
            (-5.0f64..5.0, -3.2f64..3.2, 1u32..5, 1u32..5),
            (1e-14f64..1e-4, 1usize..100, any::<bool>(), 1e-12f64..1e-3, 1usize..100_000),
        )
            .prop_map(|((kappa, gamma, dt, t_end), (nx, ny, lx, ly), src, ic, misc)| SimulationConfig {
                kappa,
                gamma,
                dt,
                t_end,
                nx,
                ny,
                lx,
                ly,
                source: SourceSpec::new(
                    src.into_iter()
                        .map(|(cx, cy, amplitude, sigma)| GaussianTerm { cx, cy, amplitude, sigma })
                        .collect(),
                )
                .unwrap(),
                initial: InitialCondition { amplitude: ic.0, angle: ic.1, mode_x: ic.2, mode_y: ic.3 },
                cg_tol: misc.0,
                record_every: misc.1,
                adaptive_dt: misc.2,
                steady_tol: misc.3,
                steady_max_iters: misc.4,
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(cfg in arb_config()) {
            let back = parse_config(&cfg.to_text()).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}

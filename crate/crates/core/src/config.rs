//! Flat `key = value` configuration files, named profiles and the tolerance
//! table used by the verification suite.
//!
//! Lines starting with `#` are comments. Unknown or repeated keys are
//! rejected. See [`DEFAULT_CONFIG`] for every key and its default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, TimeGrid, Trajectory};
use crate::io::read_trajectory_csv;
use crate::nonlocal::{Kernel, NonlocalOperator};
use crate::optimize::{AdmissibleSet, ContinuationOptions, CostWeights, PgdOptions, Problem};
use crate::physics::{Coupling, PotentialConfig, SmoothPotential};
use crate::state::{InitialData, Model};

/// The default tracking problem.
pub const DEFAULT_CONFIG: &str = "\
# grid
dim = 1
length_x = 1.0
length_y = 1.0
cells_x = 64
cells_y = 64
horizon = 1.0
steps = 200

# model
smooth_potential = concave_quadratic
potential_c = 1.0
coupling = linear
quench_exponent = 1.0
coefficient_floor = 1e-8
cg_tol = 1e-12
cg_max_iter = 5000

# kernel: gaussian | newtonian | top_hat | zero
kernel = gaussian
kernel_amplitude = 1.0
kernel_width = 0.1
kernel_strength = 1.0
kernel_core = 0.05
kernel_radius = 0.1

# initial data and source
rho0 = gaussian_bump:0.3,0.4,0.5,0.1
mu0 = constant:0.5
control = constant:1.0

# cost
beta1 = 1.0
beta2 = 0.1
beta3 = 1.0
rho_target = step:0.8,0.2,0.5
mu_target = constant:1.0

# admissible set
u_max = constant:2.0
budget = 1e6

# optimizer
schedule = 1e-1,1e-2,1e-3,1e-4,1e-5
tol = 1e-8
max_iter = 200
armijo = 1e-4
backtrack = 0.5
max_backtracks = 40
vi_samples = 100

output = out
seed = 42
";

/// Spatial profile, constant in time unless read from a CSV with `t_index`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Constant(f64),
    /// `base + amplitude exp(-|x - c|^2 / (2 width^2))`, with `c = (center, center)` in 2D.
    GaussianBump {
        base: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// `left` for `x < position`, `right` otherwise.
    Step { left: f64, right: f64, position: f64 },
    Csv(PathBuf),
}

impl Profile {
    pub fn parse(key: &str, s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums = || -> Result<Vec<f64>> {
            args.split(',')
                .map(|a| {
                    a.trim().parse::<f64>().map_err(|_| {
                        Error::Config(format!("{key}: invalid number '{}' in profile", a.trim()))
                    })
                })
                .collect()
        };
        let arity = |v: &Vec<f64>, n: usize| {
            if v.len() == n {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{key}: profile '{name}' takes {n} parameters, got {}",
                    v.len()
                )))
            }
        };
        match name.trim() {
            "constant" => {
                let v = nums()?;
                arity(&v, 1)?;
                Ok(Profile::Constant(v[0]))
            }
            "gaussian_bump" => {
                let v = nums()?;
                arity(&v, 4)?;
                if !(v[3] > 0.0) {
                    return Err(Error::Config(format!("{key}: bump width must be positive")));
                }
                Ok(Profile::GaussianBump {
                    base: v[0],
                    amplitude: v[1],
                    center: v[2],
                    width: v[3],
                })
            }
            "step" => {
                let v = nums()?;
                arity(&v, 3)?;
                Ok(Profile::Step {
                    left: v[0],
                    right: v[1],
                    position: v[2],
                })
            }
            "csv" if !args.trim().is_empty() => Ok(Profile::Csv(PathBuf::from(args.trim()))),
            _ => Err(Error::Config(format!("{key}: unknown profile '{s}'"))),
        }
    }

    fn eval(&self, x: [f64; 2], dim: usize) -> f64 {
        match *self {
            Profile::Constant(c) => c,
            Profile::GaussianBump {
                base,
                amplitude,
                center,
                width,
            } => {
                let r2: f64 = x[..dim].iter().map(|&xi| (xi - center).powi(2)).sum();
                base + amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            Profile::Step {
                left,
                right,
                position,
            } => {
                if x[0] < position {
                    left
                } else {
                    right
                }
            }
            Profile::Csv(_) => unreachable!("csv profiles are read, not evaluated"),
        }
    }

    /// `base_dir` resolves relative CSV paths.
    pub fn trajectory(&self, grid: Grid, time: TimeGrid, base_dir: &Path) -> Result<Trajectory> {
        match self {
            Profile::Csv(p) => read_trajectory_csv(&base_dir.join(p), None, grid, time),
            _ => {
                let dim = grid.dim();
                Ok(Trajectory::from_fn(grid, time, |x, _| self.eval(x, dim)))
            }
        }
    }

    pub fn field(&self, grid: Grid, base_dir: &Path) -> Result<Field> {
        match self {
            Profile::Csv(_) => {
                let time = TimeGrid::new(1.0, 1)?;
                let tr = self.trajectory(grid, time, base_dir)?;
                Ok(tr.snapshot(0).clone())
            }
            _ => {
                let dim = grid.dim();
                Ok(Field::from_fn(grid, |x| self.eval(x, dim)))
            }
        }
    }
}

/// Acceptance tolerances in one place.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub fixed_point: f64,
    pub mu_lower: f64,
    pub energy_max: f64,
    pub energy_ratio: (f64, f64),
    pub adjoint_identity: f64,
    pub quadrature: f64,
    pub resolvent_residual: f64,
    pub bisection: f64,
    pub quench_gap: f64,
    pub taylor_slope: (f64, f64),
    pub trivial_optimum: f64,
    pub trivial_iterations: usize,
    pub quench_final: f64,
    /// Allowed spread of `||phi h'(rho)||_L6` across levels, in decades.
    pub xi_decades: f64,
    pub vi: f64,
    pub projection_factor: f64,
    pub concentration_slope: (f64, f64),
    pub stationarity: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    fixed_point: 1e-14,
    mu_lower: 1e-10,
    energy_max: 0.05,
    energy_ratio: (1.6, 2.6),
    adjoint_identity: 1e-12,
    quadrature: 1e-12,
    resolvent_residual: 1e-12,
    bisection: 1e-10,
    quench_gap: 1e-3,
    taylor_slope: (1.8, 2.2),
    trivial_optimum: 1e-8,
    trivial_iterations: 50,
    quench_final: 1e-2,
    xi_decades: 1.0,
    vi: 1e-6,
    projection_factor: 10.0,
    concentration_slope: (0.9, 1.1),
    stationarity: 1e-6,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    Gaussian,
    Newtonian,
    TopHat,
    Zero,
}

/// Parsed configuration, before the assumption checks of [`Config::build`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub dim: usize,
    pub length_x: f64,
    pub length_y: f64,
    pub cells_x: usize,
    pub cells_y: usize,
    pub horizon: f64,
    pub steps: usize,
    pub potential_c: f64,
    pub coupling: Coupling,
    pub quench_exponent: f64,
    pub coefficient_floor: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub kernel: KernelSpec,
    pub kernel_amplitude: f64,
    pub kernel_width: f64,
    pub kernel_strength: f64,
    pub kernel_core: f64,
    pub kernel_radius: f64,
    pub rho0: Profile,
    pub mu0: Profile,
    pub control: Profile,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub rho_target: Profile,
    pub mu_target: Profile,
    pub u_max: Profile,
    pub budget: f64,
    pub schedule: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub vi_samples: usize,
    pub output: PathBuf,
    pub seed: u64,
    /// Directory that relative CSV paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config::parse(DEFAULT_CONFIG).expect("default config parses")
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

/// `key = value` pairs, rejecting duplicates and malformed lines.
fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
        })?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if map.insert(k.clone(), v).is_some() {
            return Err(Error::Config(format!("line {}: key '{k}' repeated", lineno + 1)));
        }
    }
    Ok(map)
}

impl Config {
    /// Parses `text` on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = parse_pairs(DEFAULT_CONFIG)?;
        for (k, v) in parse_pairs(text)? {
            if !pairs.contains_key(&k) {
                return Err(Error::Config(format!("unknown key '{k}'")));
            }
            pairs.insert(k, v);
        }
        let get = |k: &str| pairs[k].as_str();
        let smooth = get("smooth_potential");
        if smooth != "concave_quadratic" {
            return Err(Error::Config(format!(
                "smooth_potential: unknown family '{smooth}'"
            )));
        }
        let coupling = match get("coupling") {
            "linear" => Coupling::Linear,
            "quadratic" => Coupling::Quadratic,
            "zero" => Coupling::Zero,
            other => return Err(Error::Config(format!("coupling: unknown family '{other}'"))),
        };
        let kernel = match get("kernel") {
            "gaussian" => KernelSpec::Gaussian,
            "newtonian" => KernelSpec::Newtonian,
            "top_hat" => KernelSpec::TopHat,
            "zero" => KernelSpec::Zero,
            other => return Err(Error::Config(format!("kernel: unknown variant '{other}'"))),
        };
        let num = |k: &str| parse_num::<f64>(k, get(k));
        let count = |k: &str| parse_num::<usize>(k, get(k));
        let profile = |k: &str| Profile::parse(k, get(k));
        Ok(Config {
            dim: count("dim")?,
            length_x: num("length_x")?,
            length_y: num("length_y")?,
            cells_x: count("cells_x")?,
            cells_y: count("cells_y")?,
            horizon: num("horizon")?,
            steps: count("steps")?,
            potential_c: num("potential_c")?,
            coupling,
            quench_exponent: num("quench_exponent")?,
            coefficient_floor: num("coefficient_floor")?,
            cg_tol: num("cg_tol")?,
            cg_max_iter: count("cg_max_iter")?,
            kernel,
            kernel_amplitude: num("kernel_amplitude")?,
            kernel_width: num("kernel_width")?,
            kernel_strength: num("kernel_strength")?,
            kernel_core: num("kernel_core")?,
            kernel_radius: num("kernel_radius")?,
            rho0: profile("rho0")?,
            mu0: profile("mu0")?,
            control: profile("control")?,
            beta1: num("beta1")?,
            beta2: num("beta2")?,
            beta3: num("beta3")?,
            rho_target: profile("rho_target")?,
            mu_target: profile("mu_target")?,
            u_max: profile("u_max")?,
            budget: num("budget")?,
            schedule: parse_list("schedule", get("schedule"))?,
            tol: num("tol")?,
            max_iter: count("max_iter")?,
            armijo: num("armijo")?,
            backtrack: num("backtrack")?,
            max_backtracks: count("max_backtracks")?,
            vi_samples: count("vi_samples")?,
            output: PathBuf::from(get("output")),
            seed: parse_num("seed", get("seed"))?,
            base_dir: PathBuf::from("."),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Config::parse(&text)?;
        cfg.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Grid> {
        match self.dim {
            1 => Grid::new_1d(self.length_x, self.cells_x),
            2 => Grid::new_2d(self.length_x, self.cells_x, self.length_y, self.cells_y),
            d => Err(Error::Config(format!("dim must be 1 or 2, got {d}"))),
        }
    }

    pub fn time(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.steps)
    }

    pub fn model(&self) -> Result<Model> {
        let potential = PotentialConfig::new(
            SmoothPotential::ConcaveQuadratic { c: self.potential_c },
            self.coupling,
            self.quench_exponent,
        )?;
        if !(self.coefficient_floor > 0.0) {
            return Err(Error::Config("coefficient_floor must be positive".into()));
        }
        let mut model = Model {
            potential,
            coefficient_floor: self.coefficient_floor,
            ..Model::default()
        };
        model.cg.tol = self.cg_tol;
        model.cg.max_iter = self.cg_max_iter;
        Ok(model)
    }

    pub fn kernel(&self) -> Kernel {
        match self.kernel {
            KernelSpec::Gaussian => Kernel::Gaussian {
                amplitude: self.kernel_amplitude,
                width: self.kernel_width,
            },
            KernelSpec::Newtonian => Kernel::Newtonian {
                strength: self.kernel_strength,
                core: self.kernel_core,
            },
            KernelSpec::TopHat => Kernel::TopHat {
                amplitude: self.kernel_amplitude,
                radius: self.kernel_radius,
            },
            KernelSpec::Zero => Kernel::Zero,
        }
    }

    pub fn continuation_options(&self) -> ContinuationOptions {
        ContinuationOptions {
            pgd: PgdOptions {
                tol: self.tol,
                max_iter: self.max_iter,
                armijo: self.armijo,
                backtrack: self.backtrack,
                max_backtracks: self.max_backtracks,
            },
            vi_samples: self.vi_samples,
            seed: self.seed,
        }
    }

    /// Builds every object and runs the (A1)-(A4) constructibility checks.
    pub fn build(&self) -> Result<Setup> {
        let grid = self.grid()?;
        let time = self.time()?;
        let model = self.model()?;
        let op = NonlocalOperator::new(self.kernel(), grid)?;
        let dir = &self.base_dir;
        let init = InitialData::new(self.rho0.field(grid, dir)?, self.mu0.field(grid, dir)?)?;
        let weights = CostWeights::new(
            self.beta1,
            self.beta2,
            self.beta3,
            self.rho_target.trajectory(grid, time, dir)?,
            self.mu_target.trajectory(grid, time, dir)?,
        )?;
        let admissible = AdmissibleSet::new(self.u_max.trajectory(grid, time, dir)?, self.budget)?;
        // U_ad is nonempty iff u = 0 is admissible
        if !admissible.contains(&Trajectory::zeros(grid, time)) {
            return Err(Error::Assumption {
                tag: "A4",
                message: "the admissible set is empty (u = 0 is not admissible)".into(),
            });
        }
        let control = self.control.trajectory(grid, time, dir)?;
        if !control.is_finite() {
            return Err(Error::Config("control must be finite".into()));
        }
        if self.schedule.is_empty()
            || self.schedule.iter().any(|&a| !(a > 0.0 && a <= 1.0))
            || self.schedule.windows(2).any(|w| !(w[1] < w[0]))
        {
            return Err(Error::Config(
                "schedule must be strictly decreasing values in (0, 1]".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0 && self.backtrack > 0.0 && self.backtrack < 1.0)
        {
            return Err(Error::Config("armijo and backtrack must lie in (0, 1)".into()));
        }
        Ok(Setup {
            problem: Problem {
                model,
                op,
                init,
                weights,
                admissible,
            },
            control,
            schedule: self.schedule.clone(),
            options: self.continuation_options(),
        })
    }
}

/// A validated problem ready to simulate or optimize.
#[derive(Clone, Debug)]
pub struct Setup {
    pub problem: Problem,
    /// Source for `simulate`, initial guess for `optimize`.
    pub control: Trajectory,
    pub schedule: Vec<f64>,
    pub options: ContinuationOptions,
}

impl Setup {
    pub fn grid(&self) -> Grid {
        *self.problem.op.grid()
    }

    pub fn time(&self) -> TimeGrid {
        *self.control.time()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rejected(text: &str) -> String {
        Config::parse(text)
            .and_then(|c| c.build().map(|_| ()))
            .unwrap_err()
            .to_string()
    }

    #[test]
    fn default_builds() {
        let setup = Config::default().build().unwrap();
        assert_eq!(setup.grid().len(), 64);
        assert_eq!(setup.time().steps(), 200);
        assert_eq!(setup.schedule.len(), 5);
    }

    #[test]
    fn profiles_parse() {
        assert_eq!(Profile::parse("k", "constant:2").unwrap(), Profile::Constant(2.0));
        assert_eq!(
            Profile::parse("k", "step:1,0,0.25").unwrap(),
            Profile::Step {
                left: 1.0,
                right: 0.0,
                position: 0.25
            }
        );
        assert!(Profile::parse("k", "gaussian_bump:1,2").is_err());
        assert!(Profile::parse("k", "wave:1").is_err());
    }

    #[test]
    fn unknown_and_repeated_keys_rejected() {
        assert!(rejected("colour = red").contains("unknown key"));
        assert!(rejected("beta1 = 1\nbeta1 = 2").contains("repeated"));
    }

    #[test]
    fn assumption_violations_name_the_tag() {
        assert!(rejected("potential_c = -1").contains("(A1)"));
        assert!(rejected("rho0 = constant:1.0").contains("(A2)"));
        assert!(rejected("mu0 = constant:-0.1").contains("(A2)"));
        assert!(rejected("kernel = gaussian\nkernel_width = -1").contains("(A3)"));
        assert!(rejected("beta1 = 0\nbeta2 = 0\nbeta3 = 0").contains("(A4)"));
        assert!(rejected("u_max = constant:-1").contains("(A4)"));
        assert!(rejected("budget = 0").contains("(A4)"));
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = Config::parse("# hi\n\nsteps = 10 # trailing\n").unwrap();
        assert_eq!(cfg.steps, 10);
    }
}

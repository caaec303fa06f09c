//! Failure indicators: analytic benches with exact oracles and an adapter for
//! external simulators.

mod analytic;
mod external;
mod parameterized;

use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use analytic::{chi_square_cdf, Shape};
pub use external::{ExternalSimulator, DEFAULT_TIMEOUT};
pub use parameterized::QuadraticFamily;

use crate::error::{Error, Result, SimulationError};
use crate::exec::{self, Execution, Phase};

/// Default draw count for brute-force oracles.
pub const MC_ORACLE_DRAWS: u64 = 1_000_000;
const MC_ORACLE_SEED: u64 = 0x0bad_5eed;

/// Failure probability under N(0, I). `std_error` is `None` for exact values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub pf: f64,
    pub std_error: Option<f64>,
}

impl Oracle {
    pub fn exact(pf: f64) -> Self {
        Self { pf, std_error: None }
    }

    pub fn is_exact(&self) -> bool {
        self.std_error.is_none()
    }
}

#[derive(Debug, Clone)]
enum Indicator {
    Analytic(Shape),
    External(Arc<ExternalSimulator>),
}

/// An indicator function I(x) over a D-dimensional variation space.
#[derive(Debug, Clone)]
pub struct Testbench {
    name: String,
    dim: usize,
    indicator: Indicator,
    oracle: Option<Oracle>,
}

impl Testbench {
    fn analytic(name: String, dim: usize, shape: Shape) -> Self {
        let oracle = shape.exact_probability().map(Oracle::exact);
        Self {
            name,
            dim,
            indicator: Indicator::Analytic(shape),
            oracle,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn oracle(&self) -> Option<Oracle> {
        self.oracle
    }

    pub fn oracle_pf(&self) -> Option<f64> {
        self.oracle.map(|o| o.pf)
    }

    /// Analytic benches are pure; external simulators must be called serially.
    pub fn concurrency_safe(&self) -> bool {
        matches!(self.indicator, Indicator::Analytic(_))
    }

    pub fn shape(&self) -> Option<&Shape> {
        match &self.indicator {
            Indicator::Analytic(s) => Some(s),
            Indicator::External(_) => None,
        }
    }

    /// I(x): `true` when the design fails at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<bool, SimulationError> {
        if x.len() != self.dim {
            return Err(SimulationError::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        match &self.indicator {
            Indicator::Analytic(shape) => Ok(shape.contains(x)),
            Indicator::External(sim) => sim.evaluate(x),
        }
    }

    /// Replaces a missing oracle with a brute-force Monte Carlo estimate.
    pub fn with_mc_oracle(mut self, draws: u64, exec: Execution) -> Result<Self> {
        if self.oracle.is_none() {
            self.oracle = Some(self.mc_oracle(draws, MC_ORACLE_SEED, exec)?);
        }
        Ok(self)
    }

    /// Plain Monte Carlo estimate of P_f with its binomial standard error.
    pub fn mc_oracle(&self, draws: u64, seed: u64, exec: Execution) -> Result<Oracle> {
        if draws == 0 {
            return Err(Error::contract("oracle needs at least one draw"));
        }
        const CHUNK: u64 = 1 << 14;
        let chunks = draws.div_ceil(CHUNK) as usize;
        let dim = self.dim;
        let counts = exec::map_indexed(exec.restrict(self.concurrency_safe()), chunks, |c| {
            let n = CHUNK.min(draws - c as u64 * CHUNK);
            let mut rng = exec::substream(seed, Phase::Oracle, 0, c as u64);
            let mut x = vec![0.0; dim];
            let mut hits = 0u64;
            for _ in 0..n {
                for v in x.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                if self.evaluate(&x)? {
                    hits += 1;
                }
            }
            Ok::<_, SimulationError>(hits)
        });
        let mut hits = 0u64;
        for c in counts {
            hits += c?;
        }
        let pf = hits as f64 / draws as f64;
        Ok(Oracle {
            pf,
            std_error: Some((pf * (1.0 - pf) / draws as f64).sqrt()),
        })
    }
}

fn check_vec(name: &str, v: &[f64], dim: usize) -> Result<()> {
    Error::check_dim(dim, v.len())?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::contract(format!("{name} has non-finite entries")));
    }
    Ok(())
}

/// Fails iff aᵀx ≥ b; oracle Φ(−b/‖a‖).
pub fn linear_bench(a: Vec<f64>, b: f64) -> Result<Testbench> {
    let dim = a.len();
    if dim == 0 {
        return Err(Error::contract("linear bench needs D >= 1"));
    }
    check_vec("a", &a, dim)?;
    if a.iter().all(|&v| v == 0.0) {
        return Err(Error::contract("linear bench normal `a` is zero"));
    }
    if !b.is_finite() {
        return Err(Error::contract("linear bench offset is not finite"));
    }
    Ok(Testbench::analytic(format!("linear(b={b})"), dim, Shape::Linear { a, b }))
}

/// Fails iff x_axis ≥ threshold in `dim` dimensions.
pub fn axis_bench(dim: usize, axis: usize, threshold: f64) -> Result<Testbench> {
    if axis >= dim {
        return Err(Error::contract(format!("axis {axis} outside dimension {dim}")));
    }
    let mut a = vec![0.0; dim];
    a[axis] = 1.0;
    linear_bench(a, threshold)
}

/// Fails iff ‖x − center‖ ≤ radius. Exact oracle when centered at the origin;
/// otherwise a brute-force Monte Carlo oracle with [`MC_ORACLE_DRAWS`] draws.
pub fn sphere_bench(center: Vec<f64>, radius: f64) -> Result<Testbench> {
    let dim = center.len();
    if dim == 0 {
        return Err(Error::contract("sphere bench needs D >= 1"));
    }
    check_vec("center", &center, dim)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::contract("sphere radius must be positive"));
    }
    Testbench::analytic(format!("sphere(r={radius})"), dim, Shape::Sphere { center, radius })
        .with_mc_oracle(MC_ORACLE_DRAWS, Execution::Parallel)
}

fn combine(children: Vec<Testbench>, union: bool) -> Result<Testbench> {
    let Some(first) = children.first() else {
        return Err(Error::contract("union/intersection needs at least one child"));
    };
    let dim = first.dim;
    let mut shapes = Vec::with_capacity(children.len());
    let mut names = Vec::with_capacity(children.len());
    for c in children {
        Error::check_dim(dim, c.dim)?;
        names.push(c.name.clone());
        match c.indicator {
            Indicator::Analytic(s) => shapes.push(s),
            Indicator::External(_) => {
                return Err(Error::contract("external benches cannot be combined"));
            }
        }
    }
    let (shape, op) = if union {
        (Shape::Union(shapes), "union")
    } else {
        (Shape::Intersection(shapes), "intersection")
    };
    Testbench::analytic(format!("{op}({})", names.join(", ")), dim, shape)
        .with_mc_oracle(MC_ORACLE_DRAWS, Execution::Parallel)
}

/// Fails where any child fails.
pub fn union_bench(children: Vec<Testbench>) -> Result<Testbench> {
    combine(children, true)
}

/// Fails where every child fails.
pub fn intersection_bench(children: Vec<Testbench>) -> Result<Testbench> {
    combine(children, false)
}

/// Always (or never) fails.
pub fn constant_bench(dim: usize, fails: bool) -> Result<Testbench> {
    if dim == 0 {
        return Err(Error::contract("bench needs D >= 1"));
    }
    let name = if fails { "always-fail" } else { "never-fail" };
    Ok(Testbench::analytic(name.into(), dim, Shape::Constant(fails)))
}

/// Launches an external simulator; see the `external` module docs for the protocol.
pub fn external_bench(command: &str, args: &[String], dim: usize, timeout: Duration) -> Result<Testbench> {
    if dim == 0 {
        return Err(Error::contract("bench needs D >= 1"));
    }
    let sim = ExternalSimulator::spawn(command, args, dim, timeout)?;
    Ok(Testbench {
        name: format!("external({command})"),
        dim,
        indicator: Indicator::External(Arc::new(sim)),
        oracle: None,
    })
}

/// Serializable bench description, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub dim: usize,
    pub kind: BenchKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BenchKind {
    Linear {
        a: Vec<f64>,
        b: f64,
    },
    /// Shorthand for a linear bench on one coordinate: x_axis ≥ threshold.
    Axis {
        axis: usize,
        threshold: f64,
        #[serde(default)]
        below: bool,
    },
    Sphere {
        center: Vec<f64>,
        radius: f64,
    },
    Union {
        children: Vec<BenchKind>,
    },
    Intersection {
        children: Vec<BenchKind>,
    },
    Constant {
        fails: bool,
    },
    External {
        command: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: f64,
    },
}

fn default_timeout_secs() -> f64 {
    DEFAULT_TIMEOUT.as_secs_f64()
}

impl BenchSpec {
    pub fn build(&self) -> Result<Testbench> {
        if self.dim == 0 {
            return Err(Error::contract("bench dim must be at least 1"));
        }
        build_kind(&self.kind, self.dim)
    }
}

fn build_kind(kind: &BenchKind, dim: usize) -> Result<Testbench> {
    match kind {
        BenchKind::Linear { a, b } => {
            Error::check_dim(dim, a.len())?;
            linear_bench(a.clone(), *b)
        }
        BenchKind::Axis { axis, threshold, below } => {
            if *below {
                if *axis >= dim {
                    return Err(Error::contract(format!("axis {axis} outside dimension {dim}")));
                }
                let mut a = vec![0.0; dim];
                a[*axis] = -1.0;
                linear_bench(a, -threshold)
            } else {
                axis_bench(dim, *axis, *threshold)
            }
        }
        BenchKind::Sphere { center, radius } => {
            Error::check_dim(dim, center.len())?;
            sphere_bench(center.clone(), *radius)
        }
        BenchKind::Union { children } => {
            union_bench(children.iter().map(|c| build_kind(c, dim)).collect::<Result<_>>()?)
        }
        BenchKind::Intersection { children } => {
            intersection_bench(children.iter().map(|c| build_kind(c, dim)).collect::<Result<_>>()?)
        }
        BenchKind::Constant { fails } => constant_bench(dim, *fails),
        BenchKind::External {
            command,
            args,
            timeout_secs,
        } => {
            if !(*timeout_secs > 0.0) {
                return Err(Error::contract("timeout_secs must be positive"));
            }
            external_bench(command, args, dim, Duration::from_secs_f64(*timeout_secs))
        }
    }
}

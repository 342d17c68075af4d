//! TOML problem files and CSV probe lists.

use std::path::Path;
use std::sync::Arc;

use parametrix_core::problem_model::{CoefficientField, DataFn, FieldKind, ProblemSpec, Table};
use parametrix_core::volterra_solver::SolverConfig;
use serde::Deserialize;

use crate::error::CliError;

/// Top level of a problem file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub horizon: f64,
    pub b1: FieldSpec,
    #[serde(default = "FieldSpec::zero")]
    pub b2: FieldSpec,
    #[serde(default = "FieldSpec::zero")]
    pub c: FieldSpec,
    #[serde(default)]
    pub f: DataSpec,
    #[serde(default)]
    pub u_init: DataSpec,
    #[serde(default)]
    pub u_side: DataSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    /// Probe points `[t, x, y]` used when no probe file is given.
    #[serde(default)]
    pub probes: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    Linear {
        #[serde(default)]
        a: f64,
        #[serde(default)]
        bx: f64,
        #[serde(default)]
        by: f64,
    },
    Tanh {
        offset: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    TanhBump {
        offset: f64,
        delta: f64,
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
    },
    GaussCdf {
        offset: f64,
    },
    /// Row-major values on the `xs` x `ys` grid.
    Table {
        xs: Vec<f64>,
        ys: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Gaussian {
        #[serde(default = "one")]
        amp: f64,
        x0: f64,
        y0: f64,
        sx: f64,
        sy: f64,
    },
    CosY {
        base: f64,
        amp: f64,
        #[serde(default = "one")]
        freq: f64,
        #[serde(default)]
        phase: f64,
    },
    ExpX {
        base: f64,
        amp: f64,
        rate: f64,
    },
    TanhY {
        base: f64,
        amp: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    TimeRamp {
        base: f64,
        amp: f64,
    },
    Sum {
        terms: Vec<DataSpec>,
    },
    Product {
        factors: Vec<DataSpec>,
    },
    Scaled {
        factor: f64,
        of: Box<DataSpec>,
    },
}

/// Optional solver overrides; anything left out keeps the library default.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub grid: Option<GridSpec>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub x_max: Option<f64>,
    pub y_max: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl FieldSpec {
    fn zero() -> Self {
        FieldSpec::Constant { value: 0.0 }
    }

    pub fn to_field(&self, max_order: u32) -> Result<CoefficientField, CliError> {
        let kind = match self.clone() {
            FieldSpec::Constant { value } => FieldKind::Constant { value },
            FieldSpec::Linear { a, bx, by } => FieldKind::Linear { a, bx, by },
            FieldSpec::Tanh {
                offset,
                amplitude,
                scale,
            } => FieldKind::Tanh {
                offset,
                amplitude,
                scale,
            },
            FieldSpec::TanhBump {
                offset,
                delta,
                cx,
                cy,
                rx,
                ry,
            } => FieldKind::TanhBump {
                offset,
                delta,
                cx,
                cy,
                rx,
                ry,
            },
            FieldSpec::GaussCdf { offset } => FieldKind::GaussCdf { offset },
            FieldSpec::Table { xs, ys, values } => FieldKind::Tabulated(Arc::new(
                Table::new(xs, ys, values).map_err(|e| CliError::Parse(e.to_string()))?,
            )),
        };
        Ok(CoefficientField::new(kind, max_order))
    }
}

impl DataSpec {
    pub fn to_data(&self) -> Result<DataFn, CliError> {
        Ok(match self {
            DataSpec::Zero => DataFn::Zero,
            DataSpec::Constant { value } => DataFn::Constant(*value),
            &DataSpec::Gaussian {
                amp,
                x0,
                y0,
                sx,
                sy,
            } => DataFn::Gaussian {
                amp,
                x0,
                y0,
                sx,
                sy,
            },
            &DataSpec::CosY {
                base,
                amp,
                freq,
                phase,
            } => DataFn::CosY {
                base,
                amp,
                freq,
                phase,
            },
            &DataSpec::ExpX { base, amp, rate } => DataFn::ExpX { base, amp, rate },
            &DataSpec::TanhY { base, amp, scale } => DataFn::TanhY { base, amp, scale },
            &DataSpec::TimeRamp { base, amp } => DataFn::TimeRamp { base, amp },
            DataSpec::Sum { terms } => fold(terms, DataFn::Sum)?,
            DataSpec::Product { factors } => fold(factors, DataFn::Product)?,
            DataSpec::Scaled { factor, of } => of.to_data()?.scaled(*factor),
        })
    }
}

fn fold(
    parts: &[DataSpec],
    join: fn(Arc<DataFn>, Arc<DataFn>) -> DataFn,
) -> Result<DataFn, CliError> {
    let mut it = parts.iter();
    let first = it
        .next()
        .ok_or_else(|| CliError::Parse("sum/product needs at least one term".into()))?;
    let mut acc = first.to_data()?;
    for p in it {
        acc = join(Arc::new(acc), Arc::new(p.to_data()?));
    }
    Ok(acc)
}

/// `nt,nx,ny` or `nt,nx,ny,side_nt,side_ny`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub nt: usize,
    pub nx: usize,
    pub ny: usize,
    pub side: Option<(usize, usize)>,
}

impl std::str::FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<usize> = s
            .split([',', 'x'])
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("bad grid '{s}': {e}"))?;
        match parts[..] {
            [nt, nx, ny] => Ok(GridSpec {
                nt,
                nx,
                ny,
                side: None,
            }),
            [nt, nx, ny, snt, sny] => Ok(GridSpec {
                nt,
                nx,
                ny,
                side: Some((snt, sny)),
            }),
            _ => Err(format!("bad grid '{s}': expected 3 or 5 counts")),
        }
    }
}

impl<'de> Deserialize<'de> for GridSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl GridSpec {
    pub fn apply(&self, cfg: &mut SolverConfig) {
        cfg.shape.nt = self.nt;
        cfg.shape.nx = self.nx;
        cfg.shape.ny = self.ny;
        if let Some((snt, sny)) = self.side {
            cfg.shape.side_nt = snt;
            cfg.shape.side_ny = sny;
        }
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let pf: ProblemFile = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        if !(pf.horizon.is_finite() && pf.horizon > 0.0) {
            return Err(CliError::Parse(format!(
                "horizon must be positive, got {}",
                pf.horizon
            )));
        }
        Ok(pf)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_spec(&self) -> Result<ProblemSpec, CliError> {
        Ok(ProblemSpec {
            b1: self.b1.to_field(3)?,
            b2: self.b2.to_field(1)?,
            c: self.c.to_field(0)?,
            f: self.f.to_data()?,
            u_init: self.u_init.to_data()?,
            u_side: self.u_side.to_data()?,
            horizon: self.horizon,
        })
    }

    /// Solver configuration: library defaults, a window sized to reach the
    /// probes, then the file's overrides, then the command line grid.
    pub fn solver_config(
        &self,
        spec: &ProblemSpec,
        probes: &[Probe],
        grid: Option<GridSpec>,
    ) -> SolverConfig {
        let x_probe = probes.iter().map(|p| p.x).fold(1.0, f64::max);
        let y_probe = probes.iter().map(|p| p.y.abs()).fold(1.0, f64::max);
        let mut cfg = SolverConfig::default().with_window(spec, x_probe, y_probe);
        let s = &self.solver;
        if let Some(g) = s.grid {
            g.apply(&mut cfg);
        }
        if let Some(n) = s.max_iterations {
            cfg.max_iterations = n;
        }
        if let Some(t) = s.tolerance {
            cfg.tolerance = t;
        }
        if let Some(v) = s.x_max {
            cfg.shape.x_max = v;
        }
        if let Some(v) = s.y_max {
            cfg.shape.y_max = v;
        }
        if let Some(g) = grid {
            g.apply(&mut cfg);
        }
        cfg
    }

    /// The file's probes, or a small default grid.
    pub fn default_probes(&self) -> Vec<Probe> {
        if !self.probes.is_empty() {
            return self
                .probes
                .iter()
                .map(|&[t, x, y]| Probe { t, x, y })
                .collect();
        }
        let mut out = Vec::new();
        for t in [0.5 * self.horizon, self.horizon] {
            for x in [0.25, 0.5, 1.0] {
                for y in [-0.5, 0.0, 0.5] {
                    out.push(Probe { t, x, y });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
pub struct Probe {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Read a CSV probe file with a `t,x,y` header. Lines starting with `#`
/// are ignored.
pub fn load_probes(path: &Path) -> Result<Vec<Probe>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let p: Probe = rec.map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(CliError::Parse(format!(
            "{}: no probe points",
            path.display()
        )));
    }
    Ok(out)
}

/// Probes must lie in the open domain `(0, T] x (0, inf) x R`.
pub fn check_probes(probes: &[Probe], horizon: f64) -> Result<(), CliError> {
    for p in probes {
        if !(p.t > 0.0 && p.t <= horizon && p.x > 0.0 && p.y.is_finite()) {
            return Err(CliError::Validation(format!(
                "probe (t={}, x={}, y={}) is outside (0, {horizon}] x (0, inf) x R",
                p.t, p.x, p.y
            )));
        }
    }
    Ok(())
}

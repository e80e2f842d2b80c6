//! Run configuration: flat `key = value` lines with dotted sections.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ldbridge::exit::{Backend, Boundary, ExitOptions};
use ldbridge::model::SigmaGrid;
use ldbridge::{DiffusionModel, Point, SolverOptions};
use nalgebra::{DMatrix, DVector};

const KEYS: &[&str] = &[
    "model.kind",
    "model.b",
    "model.mu",
    "model.sigma_vol",
    "model.rho",
    "model.sigma",
    "model.grid",
    "model.complete",
    "model.kappa",
    "model.theta",
    "model.nu",
    "x",
    "y",
    "boundary.kind",
    "boundary.x0",
    "boundary.normal",
    "boundary.offset",
    "boundary.center",
    "boundary.radius",
    "boundary.samples",
    "solver.n",
    "solver.max_iter",
    "solver.grad_tol",
    "solver.multi_start",
    "exit.samples",
    "exit.truncation",
    "exit.backend",
    "freeze.points",
    "t_list",
    "mc.n_paths",
    "mc.steps",
    "mc.seed",
    "mc.eps",
    "mc.max_attempts",
    "mc.correction",
    "output.dir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

/// Boundary as written in the config, kept for drawing.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySpec {
    Vertical { x0: f64 },
    Hyperplane { normal: Vec<f64>, offset: f64 },
    Circle { center: [f64; 2], radius: f64, samples: usize },
}

impl BoundarySpec {
    pub fn build(&self) -> Boundary {
        match self {
            BoundarySpec::Vertical { x0 } => Boundary::vertical(*x0),
            BoundarySpec::Hyperplane { normal, offset } => {
                Boundary::hyperplane(DVector::from_vec(normal.clone()), *offset).expect("validated normal")
            }
            BoundarySpec::Circle {
                center,
                radius,
                samples,
            } => Boundary::circle(*center, *radius, *samples),
        }
    }

    pub fn is_straight(&self) -> bool {
        !matches!(self, BoundarySpec::Circle { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub n_paths: u64,
    pub steps: usize,
    pub seed: u64,
    pub eps: f64,
    pub max_attempts: u64,
    pub correction: bool,
}

#[derive(Clone)]
pub struct RunConfig {
    pub model: DiffusionModel,
    pub x: Option<Point>,
    pub y: Option<Point>,
    pub boundary: Option<BoundarySpec>,
    pub solver: SolverOptions,
    pub exit: ExitOptions,
    pub freeze_points: Vec<Point>,
    pub t_list: Vec<f64>,
    pub mc: McConfig,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn endpoints(&self) -> Result<(&Point, &Point), ConfigError> {
        match (&self.x, &self.y) {
            (Some(x), Some(y)) => Ok((x, y)),
            _ => Err(err(None, "endpoints `x` and `y` are required")),
        }
    }

    pub fn boundary(&self) -> Result<&BoundarySpec, ConfigError> {
        self.boundary
            .as_ref()
            .ok_or_else(|| err(None, "a boundary block (`boundary.kind`) is required"))
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|(l, _)| *l)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| err(Some(line), format!("`{key}`: cannot parse {v:?}"))),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.parse::<f64>(key)?.unwrap_or(default);
        if !v.is_finite() {
            return Err(err(self.line(key), format!("`{key}` must be finite")));
        }
        Ok(v)
    }

    fn require_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.parse::<f64>(key)?
            .filter(|v| v.is_finite())
            .ok_or_else(|| err(self.line(key), format!("`{key}` is required and must be finite")))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        Ok(self.parse::<bool>(key)?.unwrap_or(default))
    }

    fn vector(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.raw(key).map(|(line, v)| parse_list(v, line, key)).transpose()
    }

    /// `;`-separated rows of `,`-separated numbers.
    fn rows(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>, ConfigError> {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        v.split(';')
            .map(|row| parse_list(row, line, key))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

fn parse_list(v: &str, line: usize, key: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(Some(line), format!("`{key}`: {s:?} is not a finite number")))
        })
        .collect()
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(Some(line), format!("expected `key = value`, found {content:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(err(Some(line), format!("unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(err(Some(line), format!("`{key}` has no value")));
        }
        if let Some((first, _)) = map.insert(key.to_string(), (line, value.to_string())) {
            return Err(err(Some(line), format!("`{key}` already set on line {first}")));
        }
    }
    Ok(Entries { map })
}

fn build_model(e: &Entries, base: &Path) -> Result<DiffusionModel, ConfigError> {
    let (kind_line, kind) = e
        .raw("model.kind")
        .ok_or_else(|| err(None, "`model.kind` is required"))?;
    let lib = |r: ldbridge::Result<DiffusionModel>, key: &str| r.map_err(|x| err(e.line(key).or(Some(kind_line)), x.to_string()));
    let model = match kind {
        "hull_white_simple" => DiffusionModel::hull_white_simple(e.f64_or("model.b", 0.0)?, e.f64_or("model.mu", 0.0)?),
        "hull_white" => lib(
            DiffusionModel::hull_white(
                e.f64_or("model.b", 0.0)?,
                e.f64_or("model.mu", 0.0)?,
                e.require_f64("model.sigma_vol")?,
                e.f64_or("model.rho", 0.0)?,
            ),
            "model.rho",
        )?,
        "constant" => {
            let rows = e
                .rows("model.sigma")?
                .ok_or_else(|| err(Some(kind_line), "`model.sigma` is required for a constant model"))?;
            let d = rows.len();
            if rows.iter().any(|r| r.len() != d) {
                return Err(err(e.line("model.sigma"), "`model.sigma` must be square"));
            }
            let flat: Vec<f64> = rows.concat();
            lib(DiffusionModel::constant(DMatrix::from_row_slice(d, d, &flat)), "model.sigma")?
        }
        "custom_grid" => {
            let (line, path) = e
                .raw("model.grid")
                .ok_or_else(|| err(Some(kind_line), "`model.grid` is required for a custom_grid model"))?;
            let grid = SigmaGrid::load(&base.join(path)).map_err(|x| err(Some(line), x.to_string()))?;
            DiffusionModel::from_sigma_grid(grid, e.bool_or("model.complete", true)?)
        }
        "heston" => lib(
            DiffusionModel::heston(
                e.f64_or("model.mu", 0.0)?,
                e.require_f64("model.kappa")?,
                e.require_f64("model.theta")?,
                e.require_f64("model.nu")?,
            ),
            "model.nu",
        )?,
        other => return Err(err(Some(kind_line), format!("unknown model kind `{other}`"))),
    };
    if !model.is_complete() {
        let line = e.line("model.complete").unwrap_or(kind_line);
        return Err(err(Some(line), ldbridge::Error::IncompleteModel.to_string()));
    }
    Ok(model)
}

fn build_boundary(e: &Entries, dim: usize) -> Result<Option<BoundarySpec>, ConfigError> {
    let Some((line, kind)) = e.raw("boundary.kind") else {
        return Ok(None);
    };
    let spec = match kind {
        "vertical" => BoundarySpec::Vertical {
            x0: e.require_f64("boundary.x0")?,
        },
        "hyperplane" => {
            let normal = e
                .vector("boundary.normal")?
                .ok_or_else(|| err(Some(line), "`boundary.normal` is required"))?;
            if normal.len() != dim {
                return Err(err(
                    e.line("boundary.normal"),
                    format!("normal has {} components, model dimension is {dim}", normal.len()),
                ));
            }
            if normal.iter().all(|v| *v == 0.0) {
                return Err(err(e.line("boundary.normal"), "normal must be non-zero"));
            }
            BoundarySpec::Hyperplane {
                normal,
                offset: e.require_f64("boundary.offset")?,
            }
        }
        "circle" => {
            if dim != 2 {
                return Err(err(Some(line), "circle boundaries need a 2-dimensional model"));
            }
            let c = e
                .vector("boundary.center")?
                .filter(|c| c.len() == 2)
                .ok_or_else(|| err(e.line("boundary.center").or(Some(line)), "`boundary.center` needs two numbers"))?;
            let radius = e.require_f64("boundary.radius")?;
            if radius <= 0.0 {
                return Err(err(e.line("boundary.radius"), "radius must be positive"));
            }
            BoundarySpec::Circle {
                center: [c[0], c[1]],
                radius,
                samples: e.parse("boundary.samples")?.unwrap_or(256),
            }
        }
        other => return Err(err(Some(line), format!("unknown boundary kind `{other}`"))),
    };
    Ok(Some(spec))
}

fn point(e: &Entries, key: &str, model: &DiffusionModel) -> Result<Option<Point>, ConfigError> {
    let Some(v) = e.vector(key)? else {
        return Ok(None);
    };
    check_point(&v, e.line(key), key, model).map(Some)
}

fn check_point(v: &[f64], line: Option<usize>, key: &str, model: &DiffusionModel) -> Result<Point, ConfigError> {
    if v.len() != model.dim() {
        return Err(err(
            line,
            format!("`{key}` has {} coordinates, model dimension is {}", v.len(), model.dim()),
        ));
    }
    if !model.contains(v) {
        return Err(err(line, format!("`{key}` = {v:?} is outside the state space")));
    }
    Ok(DVector::from_vec(v.to_vec()))
}

/// Parses a configuration; relative paths resolve against `base`.
pub fn parse(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let e = tokenize(text)?;
    let model = build_model(&e, base)?;
    let x = point(&e, "x", &model)?;
    let y = point(&e, "y", &model)?;
    let boundary = build_boundary(&e, model.dim())?;

    let mut solver = SolverOptions::default();
    if let Some(n) = e.parse::<usize>("solver.n")? {
        if n < 2 {
            return Err(err(e.line("solver.n"), "`solver.n` must be at least 2"));
        }
        solver.segments = n;
    }
    if let Some(m) = e.parse("solver.max_iter")? {
        solver.max_iter = m;
    }
    if let Some(g) = e.parse::<f64>("solver.grad_tol")? {
        if !(g > 0.0) {
            return Err(err(e.line("solver.grad_tol"), "`solver.grad_tol` must be positive"));
        }
        solver.grad_tol = Some(g);
    }
    solver.multi_start = e.bool_or("solver.multi_start", false)?;

    let mut exit = ExitOptions {
        solver: solver.clone(),
        ..ExitOptions::default()
    };
    if let Some(m) = e.parse::<usize>("exit.samples")? {
        if m < 2 {
            return Err(err(e.line("exit.samples"), "`exit.samples` must be at least 2"));
        }
        exit.boundary_samples = m;
    }
    let trunc = e.f64_or("exit.truncation", exit.truncation_factor)?;
    if trunc <= 0.0 {
        return Err(err(e.line("exit.truncation"), "`exit.truncation` must be positive"));
    }
    exit.truncation_factor = trunc;
    exit.backend = match e.raw("exit.backend") {
        None | Some((_, "auto")) => Backend::Auto,
        Some((_, "geodesic")) => Backend::Geodesic,
        Some((line, other)) => return Err(err(Some(line), format!("unknown backend `{other}`"))),
    };

    let freeze_points = match e.rows("freeze.points")? {
        None => Vec::new(),
        Some(rows) => rows
            .iter()
            .map(|r| check_point(r, e.line("freeze.points"), "freeze.points", &model))
            .collect::<Result<_, _>>()?,
    };
    let t_list = e.vector("t_list")?.unwrap_or_default();
    if t_list.iter().any(|t| *t <= 0.0) {
        return Err(err(e.line("t_list"), "horizons must be positive"));
    }

    let mc = McConfig {
        n_paths: e.parse("mc.n_paths")?.unwrap_or(100_000),
        steps: e.parse("mc.steps")?.unwrap_or(50),
        seed: e.parse("mc.seed")?.unwrap_or(1),
        eps: e.f64_or("mc.eps", 0.05)?,
        max_attempts: e.parse("mc.max_attempts")?.unwrap_or(10_000_000),
        correction: e.bool_or("mc.correction", true)?,
    };
    if mc.n_paths == 0 || mc.steps == 0 {
        return Err(err(
            e.line("mc.n_paths").or(e.line("mc.steps")),
            "`mc.n_paths` and `mc.steps` must be positive",
        ));
    }
    if mc.eps <= 0.0 {
        return Err(err(e.line("mc.eps"), "`mc.eps` must be positive"));
    }

    Ok(RunConfig {
        model,
        x,
        y,
        boundary,
        solver,
        exit,
        freeze_points,
        t_list,
        mc,
        output_dir: e.raw("output.dir").map(|(_, v)| base.join(v)),
    })
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err(None, format!("{}: {e}", path.display())))?;
    parse(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str) -> Result<RunConfig, ConfigError> {
        parse(text, Path::new("."))
    }

    #[test]
    fn figure_one_config() {
        let c = p("model.kind = hull_white_simple\nx = 1, 0.2\ny = 2, 0.5\nboundary.kind = vertical\nboundary.x0 = 2.5\nfreeze.points = 2, 0.5\nt_list = 0.05\n").unwrap();
        assert_eq!(c.x.unwrap().as_slice(), &[1.0, 0.2]);
        assert_eq!(c.boundary, Some(BoundarySpec::Vertical { x0: 2.5 }));
        assert_eq!(c.freeze_points.len(), 1);
        assert_eq!(c.t_list, vec![0.05]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = p("model.kind = hull_white_simple\n\nx = 1, oops\n").err().unwrap();
        assert_eq!(e.line, Some(3));
        let e = p("model.kind = hull_white_simple\nfoo = 1\n").err().unwrap();
        assert_eq!(e.line, Some(2));
        let e = p("model.kind = constant\nmodel.sigma = 1,0;0,1\nx = 1\n").err().unwrap();
        assert_eq!(e.line, Some(3));
        let e = p("model.kind = hull_white_simple\nx = 1, 0.2\nx = 1, 0.3\n").err().unwrap();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn incomplete_models_rejected() {
        let e = p("model.kind = heston\nmodel.kappa = 1\nmodel.theta = 0.04\nmodel.nu = 0.3\n")
            .err()
            .unwrap();
        assert_eq!(e.line, Some(1));
        assert!(e.message.contains("finite distance"), "{e}");
    }

    #[test]
    fn hyperplane_dimension_checked() {
        let e = p("model.kind = constant\nmodel.sigma = 1\nboundary.kind = hyperplane\nboundary.normal = 1, 0\nboundary.offset = 0\n")
            .err()
            .unwrap();
        assert_eq!(e.line, Some(4));
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = p("# header\nmodel.kind = constant  # unit\nmodel.sigma = 1, 0; 0, 1\n\nmc.seed = 7\n").unwrap();
        assert_eq!(c.mc.seed, 7);
        assert_eq!(c.model.dim(), 2);
    }
}

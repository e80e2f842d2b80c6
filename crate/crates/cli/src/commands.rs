//! Subcommand implementations. Each returns the files to write and the text
//! to print; nothing touches the filesystem until the whole run has succeeded.

use ldbridge::exit::{self, ComparisonRow, ExitFlag};
use ldbridge::format::sig12;
use ldbridge::hyperbolic::{self, GeodesicArc, HalfPlanePoint};
use ldbridge::model::ModelKind;
use ldbridge::montecarlo::{self, CrossingEstimate, HwSampling, McOptions, McSource, RngSpec};
use ldbridge::{geodesic, DiffusionModel, Point};
use nalgebra::DMatrix;

use crate::config::{BoundarySpec, ConfigError, RunConfig};
use crate::svg::{self, Curve, Marker, Scene, Stroke};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("solver failure: {0}")]
    Solver(#[from] ldbridge::Error),
    #[error("degenerate Monte Carlo estimate: {0}")]
    Degenerate(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Degenerate(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Default)]
pub struct Output {
    pub files: Vec<(String, String)>,
    pub stdout: String,
}

/// Closed-form distance where the model admits one.
fn closed_distance(model: &DiffusionModel, x: &Point, y: &Point) -> ldbridge::Result<Option<f64>> {
    Ok(match model.kind() {
        ModelKind::HullWhite { sigma_vol, rho, .. } => Some(hyperbolic::hw_distance(
            *sigma_vol,
            *rho,
            HalfPlanePoint::from_point(x)?,
            HalfPlanePoint::from_point(y)?,
        )?),
        ModelKind::Constant { .. } => {
            let g = model.inverse_metric(x.as_slice())?;
            let d = y - x;
            Some((d.transpose() * g * d)[(0, 0)].max(0.0).sqrt())
        }
        _ => None,
    })
}

pub fn distance(cfg: &RunConfig) -> Result<Output, CliError> {
    let (x, y) = cfg.endpoints()?;
    let closed = closed_distance(&cfg.model, x, y)?;
    let numeric = geodesic::distance(&cfg.model, x, y, &cfg.solver)?;
    let gap = closed.map(|c| if c == 0.0 { (numeric - c).abs() } else { (numeric - c).abs() / c });
    let opt = |v: Option<f64>| v.map(sig12).unwrap_or_default();
    let csv = format!("closed_form,numeric,relative_gap\n{},{},{}\n", opt(closed), sig12(numeric), opt(gap));
    Ok(Output {
        files: vec![("distance.csv".into(), csv.clone())],
        stdout: csv,
    })
}

pub fn geodesic(cfg: &RunConfig) -> Result<Output, CliError> {
    let (x, y) = cfg.endpoints()?;
    let sol = geodesic::geodesic_between(&cfg.model, x, y, &cfg.solver)?;
    let mut stdout = format!(
        "distance,energy,length,iterations,grad_norm\n{},{},{},{},{}\n",
        sig12(sol.distance),
        sig12(sol.energy),
        sig12(sol.length),
        sol.iterations,
        sig12(sol.grad_norm)
    );
    if sol.multistart_disagreement {
        stdout.push_str("warning: multi-start runs disagree (possible cut locus)\n");
    }
    Ok(Output {
        files: vec![("geodesic.csv".into(), sol.path.to_csv())],
        stdout,
    })
}

fn comparison(cfg: &RunConfig, workers: usize) -> Result<String, CliError> {
    let (x, y) = cfg.endpoints()?;
    let boundary = cfg.boundary()?.build();
    let opts = exit::ExitOptions {
        workers,
        ..cfg.exit.clone()
    };
    let rows = exit::compare_freezing(&cfg.model, x, y, &boundary, &cfg.freeze_points, &cfg.t_list, &opts)?;
    Ok(exit::comparison_csv(&rows))
}

pub fn exit_cmd(cfg: &RunConfig, workers: usize) -> Result<Output, CliError> {
    let csv = comparison(cfg, workers)?;
    let mut files = vec![("exit.csv".to_string(), csv.clone())];
    if cfg.model.dim() == 2 {
        files.push(("exit.svg".into(), figure_from_csv(cfg, &csv)?));
    }
    Ok(Output { files, stdout: csv })
}

pub fn figure(cfg: &RunConfig, workers: usize) -> Result<Output, CliError> {
    if cfg.model.dim() != 2 {
        return Err(ConfigError {
            line: None,
            message: "figures need a 2-dimensional model".into(),
        }
        .into());
    }
    let csv = comparison(cfg, workers)?;
    let svg = figure_from_csv(cfg, &csv)?;
    Ok(Output {
        files: vec![("figure.csv".into(), csv), ("figure.svg".into(), svg)],
        stdout: String::new(),
    })
}

fn xy(p: &Point) -> [f64; 2] {
    [p[0], p[1]]
}

/// True-metric geodesic from `a` to `b` as a polyline, with arc metadata when
/// the model is Hull-White.
fn true_geodesic(cfg: &RunConfig, a: &Point, b: &Point) -> Result<Curve, CliError> {
    let mut data = Vec::new();
    let points: Vec<[f64; 2]> = match cfg.model.kind() {
        ModelKind::HullWhite { sigma_vol, rho, .. } => {
            let (pa, pb) = (HalfPlanePoint::from_point(a)?, HalfPlanePoint::from_point(b)?);
            if pa == pb {
                vec![xy(a)]
            } else {
                let img = hyperbolic::hw_geodesic_image(*sigma_vol, *rho, pa, pb, 96)?;
                match img.arc {
                    GeodesicArc::Circle { center_x, radius, .. } => {
                        data.push(("center-x".into(), center_x));
                        data.push(("radius".into(), radius));
                    }
                    GeodesicArc::Vertical { x, .. } => data.push(("vertical-x".into(), x)),
                }
                img.polyline.points().iter().map(xy).collect()
            }
        }
        ModelKind::Constant { .. } => vec![xy(a), xy(b)],
        _ => {
            let sol = geodesic::geodesic_between(&cfg.model, a, b, &cfg.solver)?;
            sol.path.points().iter().map(xy).collect()
        }
    };
    Ok(Curve {
        points,
        stroke: Stroke::Solid,
        data,
    })
}

/// Builds the figure from the values in an exit CSV, so the table and the
/// picture cannot drift apart.
pub fn figure_from_csv(cfg: &RunConfig, csv: &str) -> Result<String, CliError> {
    let rows: Vec<ComparisonRow> = exit::parse_comparison_csv(csv)?;
    let (x, y) = cfg.endpoints()?;
    let mut scene = Scene::default();
    match cfg.boundary()? {
        BoundarySpec::Vertical { x0 } => scene.vertical_barrier = Some(*x0),
        BoundarySpec::Hyperplane { normal, offset } => scene.line_barrier = Some(([normal[0], normal[1]], *offset)),
        BoundarySpec::Circle { center, radius, .. } => scene.curves.push(Curve {
            points: (0..=128)
                .map(|k| {
                    let th = std::f64::consts::TAU * k as f64 / 128.0;
                    [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
                })
                .collect(),
            stroke: Stroke::Dotted,
            data: vec![],
        }),
    }
    for (label, p) in [("x", x), ("y", y)] {
        scene.markers.push(Marker {
            at: xy(p),
            label: format!("{label} {}", svg::point_label(xy(p))),
            class: "endpoint",
        });
    }
    for row in &rows {
        let r = &row.result;
        let z = r.z_star.clone();
        let frozen = row.label != "true";
        if frozen {
            scene.curves.push(Curve {
                points: vec![xy(x), xy(&z), xy(y)],
                stroke: Stroke::Dashed,
                data: vec![("j".into(), r.j)],
            });
        } else if r.flag == ExitFlag::Regular {
            let mut first = true_geodesic(cfg, x, &z)?;
            first.data.push(("j".into(), r.j));
            scene.curves.push(first);
            scene.curves.push(true_geodesic(cfg, &z, y)?);
        } else {
            scene.curves.push(true_geodesic(cfg, x, y)?);
        }
        scene.markers.push(Marker {
            at: xy(&z),
            label: svg::point_label(xy(&z)),
            class: if frozen { "frozen-crossing" } else { "true-crossing" },
        });
    }
    Ok(svg::render(&scene, "exit minimizers"))
}

pub fn mc(cfg: &RunConfig, workers: usize) -> Result<Output, CliError> {
    let (x, y) = cfg.endpoints()?;
    let spec = cfg.boundary()?;
    if !spec.is_straight() {
        return Err(ConfigError {
            line: None,
            message: "Monte Carlo estimates need a vertical or hyperplane boundary".into(),
        }
        .into());
    }
    if cfg.t_list.is_empty() {
        return Err(ConfigError {
            line: None,
            message: "`t_list` is required for mc".into(),
        }
        .into());
    }
    let boundary = spec.build();
    let cov: DMatrix<f64>;
    let source = match cfg.model.kind() {
        ModelKind::Constant { .. } => {
            cov = cfg.model.diffusion_matrix(x.as_slice())?;
            McSource::Gaussian { cov: &cov }
        }
        ModelKind::HullWhite { .. } => McSource::HullWhite {
            model: &cfg.model,
            sampling: HwSampling {
                eps: cfg.mc.eps,
                max_attempts: cfg.mc.max_attempts,
            },
        },
        _ => {
            return Err(ConfigError {
                line: None,
                message: "mc supports constant and hull_white models".into(),
            }
            .into())
        }
    };
    let opts = McOptions {
        n_paths: cfg.mc.n_paths,
        steps: cfg.mc.steps,
        workers,
        correction: cfg.mc.correction,
    };
    let rng = RngSpec::new(cfg.mc.seed);
    let rows = cfg
        .t_list
        .iter()
        .enumerate()
        .map(|(k, &t)| montecarlo::estimate(x, y, t, source, &boundary, &opts, rng.substream(k as u64)))
        .collect::<ldbridge::Result<Vec<CrossingEstimate>>>()?;
    let usable: Vec<CrossingEstimate> = rows.iter().copied().filter(|r| r.p_hat > 0.0).collect();
    if usable.is_empty() {
        return Err(CliError::Degenerate(format!(
            "no exit observed for any horizon with {} paths",
            cfg.mc.n_paths
        )));
    }
    let extrapolated = montecarlo::extrapolate(&usable).map(|(j, _)| j);
    let analytic = exit::exit_asymptotics(&cfg.model, x, y, &boundary, &cfg.exit).ok().map(|r| r.j);
    let csv = montecarlo::estimates_csv(&rows, cfg.mc.seed, extrapolated, analytic);
    Ok(Output {
        files: vec![("mc.csv".into(), csv.clone())],
        stdout: csv,
    })
}

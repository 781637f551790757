use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use unbiased_surface::envelope::{self, ExtractionConfig, DEFAULT_ISO, DEFAULT_RESOLUTION};
use unbiased_surface::field::{bake_grid, ComposedScene, GridField, ScalarField};
use unbiased_surface::io::{self, SlicePlane, ValueType};
use unbiased_surface::metrics::{self, DEFAULT_SAMPLES};
use unbiased_surface::projection::{self, ExecutionMode, ProjectionConfig, ProjectionTarget};
use unbiased_surface::render::{run_sweep, SweepSpec, DEFAULT_STEP};
use unbiased_surface::scene_spec::SceneSpec;
use unbiased_surface::{Aabb, Error, Vec3};

#[derive(Parser)]
#[command(name = "unbiased", version, about = "Opacity checks and unbiased surface extraction for mixed distance fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare quadrature opacity and weight maxima with the closed forms over a parameter grid.
    TheoremVerify(TheoremArgs),
    /// Sample a scene onto a grid file.
    Bake(BakeArgs),
    /// Extract a mesh from a scene or grid.
    Extract(ExtractArgs),
    /// Chamfer distance and completeness of a reconstruction.
    Eval(EvalArgs),
    /// Write a field slice as PGM, optionally with contour overlays as PPM.
    Slice(SliceArgs),
}

#[derive(Args)]
struct TheoremArgs {
    /// Comma-separated sharpness values.
    #[arg(long, default_value = "20,50,100,200")]
    s_list: String,
    /// Comma-separated surface distances along the normal.
    #[arg(long, default_value = "0.5,1,2")]
    d0_list: String,
    /// Comma-separated local minima.
    #[arg(long, default_value = "-0.2,-0.1,-0.01,0,0.01,0.1,0.2")]
    m_list: String,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    cos_theta: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// CSV report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct FieldSource {
    /// TOML scene file.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Grid file.
    #[arg(long)]
    grid: Option<PathBuf>,
}

#[derive(Args)]
struct BakeArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Samples per axis.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION + 1)]
    samples: usize,
    /// Store values as f32.
    #[arg(long)]
    f32: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExtractMode {
    /// Envelope of |f| then both projection stages.
    Abs,
    /// Same envelope, projected onto f itself (diagnostic).
    Raw,
    /// Marching cubes at iso 0 on f.
    ZeroIso,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    source: FieldSource,
    #[arg(long, default_value_t = DEFAULT_ISO)]
    iso: f64,
    /// Cells per axis.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    res: usize,
    #[arg(long, default_value_t = 500.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda2: f64,
    #[arg(long, default_value_t = 300)]
    epochs1: usize,
    #[arg(long, default_value_t = 100)]
    epochs2: usize,
    #[arg(long, default_value_t = 1e-3)]
    step_size: f64,
    #[arg(long, value_enum, default_value_t = ExtractMode::Abs)]
    mode: ExtractMode,
    #[arg(long)]
    out: PathBuf,
    /// Loss history CSV.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Serial reductions.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth mesh.
    #[arg(long, conflicts_with = "gt_scene", required_unless_present = "gt_scene")]
    gt_mesh: Option<PathBuf>,
    /// Ground-truth scene; its visible analytic surface is sampled.
    #[arg(long)]
    gt_scene: Option<PathBuf>,
    /// Reconstructed mesh.
    #[arg(long)]
    rec: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated completeness thresholds.
    #[arg(long, default_value = "0.001,0.002,0.005,0.01,0.02,0.05")]
    thresholds: String,
    /// Completeness CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    X,
    Y,
    Z,
}

#[derive(Args)]
struct SliceArgs {
    #[command(flatten)]
    source: FieldSource,
    #[arg(long, value_enum, default_value_t = Axis::Z)]
    axis: Axis,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    offset: f64,
    #[arg(long, default_value_t = 512)]
    res: usize,
    /// Slice the absolute field instead of f.
    #[arg(long)]
    abs: bool,
    /// Comma-separated contour levels.
    #[arg(long, default_value = "")]
    iso: String,
    #[arg(long)]
    out: PathBuf,
    /// Contour overlay image.
    #[arg(long)]
    overlay: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn check(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Format { .. } | Error::Parse { .. } => 3,
            Error::Domain(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn parse_list(flag: &str, text: &str) -> Result<Vec<f64>, Failure> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Failure::usage(format!("--{flag}: bad value {t:?}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(values)
}

fn nonempty_list(flag: &str, text: &str) -> Result<Vec<f64>, Failure> {
    let values = parse_list(flag, text)?;
    if values.is_empty() {
        return Err(Failure::usage(format!("--{flag} must list at least one value")));
    }
    Ok(values)
}

enum Field {
    Scene(ComposedScene),
    Grid(GridField),
}

impl Field {
    fn load(source: &FieldSource) -> Result<Self, Failure> {
        match (&source.scene, &source.grid) {
            (Some(p), None) => Ok(Field::Scene(SceneSpec::load(p)?.to_scene()?)),
            (None, Some(p)) => Ok(Field::Grid(io::read_grid(p)?.0)),
            _ => Err(Failure::usage("exactly one of --scene or --grid is required")),
        }
    }

    fn bbox(&self) -> Aabb {
        match self {
            Field::Scene(s) => s.bbox(),
            Field::Grid(g) => g.bbox(),
        }
    }
}

impl ScalarField for Field {
    fn eval(&self, p: &Vec3) -> f64 {
        match self {
            Field::Scene(s) => s.eval(p),
            Field::Grid(g) => g.eval(p),
        }
    }

    fn gradient(&self, p: &Vec3, h: f64) -> Vec3 {
        match self {
            Field::Scene(s) => s.gradient(p, h),
            Field::Grid(g) => g.gradient(p, h),
        }
    }
}

fn theorem_verify(a: TheoremArgs) -> CmdResult {
    let spec = SweepSpec {
        sharpness: nonempty_list("s-list", &a.s_list)?,
        d0: nonempty_list("d0-list", &a.d0_list)?,
        local_min: nonempty_list("m-list", &a.m_list)?,
        cos_theta: a.cos_theta,
        step: a.step,
        tol_alpha: a.tol,
    };
    let results = run_sweep(&spec)?;
    let mut reports = Vec::with_capacity(results.len());
    let mut failures = 0;
    for r in results {
        let r = r?;
        if !r.pass {
            failures += 1;
            println!(
                "FAIL s={} d0={} m={}: |alpha_quad - alpha_closed| = {:.3e}, |t* - t0| = {:.3e}",
                r.sharpness,
                r.d0,
                r.local_min,
                r.alpha_error(),
                r.t_error()
            );
        }
        reports.push(r);
    }
    if let Some(out) = &a.out {
        io::write_sweep_csv(out, &reports)?;
    }
    println!("{} of {} cases passed", reports.len() - failures, reports.len());
    if failures > 0 {
        return Err(Failure::check(format!("{failures} case(s) failed")));
    }
    Ok(())
}

fn bake(a: BakeArgs) -> CmdResult {
    let scene = SceneSpec::load(&a.scene)?.to_scene()?;
    let grid = bake_grid(&scene, scene.bbox(), [a.samples; 3])?;
    let vt = if a.f32 { ValueType::F32 } else { ValueType::F64 };
    io::write_grid(&a.out, &grid, vt)?;
    println!("wrote {} values to {}", grid.values().len(), a.out.display());
    Ok(())
}

fn extract(a: ExtractArgs) -> CmdResult {
    let field = Field::load(&a.source)?;
    if a.mode != ExtractMode::ZeroIso && !(a.iso > 0.0) {
        return Err(Failure::usage(format!(
            "--iso must be > 0 for envelope extraction, got {}",
            a.iso
        )));
    }
    let ecfg = ExtractionConfig::new(a.iso, a.res, field.bbox())?;
    let mesh = match a.mode {
        ExtractMode::ZeroIso => {
            let mesh = envelope::zero_iso_baseline(&field, &ecfg)?;
            if mesh.is_empty() {
                eprintln!("warning: zero-iso extraction produced an empty mesh (the field has no sign change)");
            }
            mesh
        }
        ExtractMode::Abs | ExtractMode::Raw => {
            let pcfg = ProjectionConfig {
                lambda1: a.lambda1,
                lambda2: a.lambda2,
                epochs1: a.epochs1,
                epochs2: a.epochs2,
                step_size: a.step_size,
                target: if a.mode == ExtractMode::Abs {
                    ProjectionTarget::Absolute
                } else {
                    ProjectionTarget::Raw
                },
                mode: if a.serial {
                    ExecutionMode::Serial
                } else {
                    ExecutionMode::Parallel
                },
                ..Default::default()
            };
            let surface = projection::extract_unbiased_surface(&field, &ecfg, &pcfg)?;
            if surface.mesh.is_empty() {
                eprintln!("warning: the envelope is empty at iso {}", a.iso);
            }
            if let Some(p) = &a.loss_csv {
                io::write_loss_csv(p, &surface.stage1, Some(&surface.stage2.report))?;
            }
            println!(
                "stage 1 loss {:.6e} -> {:.6e}, stage 2 loss {:.6e}",
                surface.stage1.initial_loss().total,
                surface.stage1.final_loss.total,
                surface.stage2.report.final_loss.total
            );
            surface.mesh
        }
    };
    io::write_obj(&a.out, &mesh)?;
    println!(
        "wrote {} vertices, {} faces to {}",
        mesh.vertices.len(),
        mesh.faces.len(),
        a.out.display()
    );
    Ok(())
}

fn load_mesh_samples(path: &Path, n: usize, seed: u64) -> Result<Vec<Vec3>, Failure> {
    let mesh = io::read_obj(path)?;
    metrics::sample_surface(&mesh, n, seed)
        .map_err(|e| Failure::check(format!("{}: {e}", path.display())))
}

fn eval(a: EvalArgs) -> CmdResult {
    let thresholds = nonempty_list("thresholds", &a.thresholds)?;
    let gt = match (&a.gt_mesh, &a.gt_scene) {
        (Some(p), _) => load_mesh_samples(p, a.samples, a.seed)?,
        (None, Some(p)) => {
            let scene = SceneSpec::load(p)?.to_scene()?;
            metrics::sample_scene_surface(&scene, a.samples, a.seed)?
        }
        (None, None) => return Err(Failure::usage("one of --gt-mesh or --gt-scene is required")),
    };
    let rec = load_mesh_samples(&a.rec, a.samples, a.seed.wrapping_add(1))?;
    let report = metrics::chamfer(&gt, &rec)?;
    let curve = metrics::completeness_curve(&gt, &rec, &thresholds)?;
    let (g2d, d2g, cd) = report.milli();
    println!("x1e-3   g2d {g2d:.4}   d2g {d2g:.4}   cd {cd:.4}");
    println!("samples gt {} rec {}", report.gt_samples, report.rec_samples);
    // samples are i.i.d., so a prefix is a valid smaller sample
    let (hg, hr) = (gt.len() / 2, rec.len() / 2);
    if hg > 0 && hr > 0 {
        let half = metrics::chamfer(&gt[..hg], &rec[..hr])?;
        println!(
            "convergence: cd {:.4} at half the samples, change {:.2e}",
            half.milli().2,
            (half.cd - report.cd).abs()
        );
    }
    for (t, f) in &curve {
        println!("completeness @ {t}: {f:.6}");
    }
    if let Some(out) = &a.out {
        io::write_completeness_csv(out, &curve)?;
    }
    Ok(())
}

struct Absolute<'a>(&'a Field);

impl ScalarField for Absolute<'_> {
    fn eval(&self, p: &Vec3) -> f64 {
        self.0.eval(p).abs()
    }
}

fn slice(a: SliceArgs) -> CmdResult {
    let field = Field::load(&a.source)?;
    let levels = parse_list("iso", &a.iso)?;
    let plane = SlicePlane {
        axis: a.axis as usize,
        offset: a.offset,
    };
    let bbox = field.bbox();
    let out = if a.abs {
        io::write_slice(&Absolute(&field), &bbox, plane, a.res, &levels, &a.out, a.overlay.as_deref())?
    } else {
        io::write_slice(&field, &bbox, plane, a.res, &levels, &a.out, a.overlay.as_deref())?
    };
    for c in &out.contours {
        println!(
            "level {}: {} closed loop(s), {} open curve(s)",
            c.level, c.closed_loops, c.open_curves
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::TheoremVerify(a) => theorem_verify(a),
        Command::Bake(a) => bake(a),
        Command::Extract(a) => extract(a),
        Command::Eval(a) => eval(a),
        Command::Slice(a) => slice(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

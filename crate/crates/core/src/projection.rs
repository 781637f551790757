//! Two-stage projection of an envelope onto the local minima of the
//! absolute field.
//!
//! Stage 1 minimizes the field over vertices and face centroids plus an
//! area-weighted uniform Laplacian penalty. Stage 2 keeps minimizing the
//! field while penalizing centroid motion tangential to the stage-1 face
//! normals. Connectivity is never changed and no layer separation is done:
//! the result is a double cover.

use rayon::prelude::*;

use crate::envelope::{extract_envelope, ExtractionConfig};
use crate::error::{Error, Result};
use crate::field::{AbsoluteField, ScalarField};
use crate::geom::Vec3;
use crate::mesh::{face_normal_of, Adjacency, TriangleMesh};
use crate::optim::{OptimState, VectorAdamConfig};

/// Which field the vertices are projected onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionTarget {
    /// `|f|`: both zero crossings and non-negative minima attract.
    #[default]
    Absolute,
    /// The raw mixed field. Diagnostic only: opaque surfaces shrink inward.
    Raw,
}

/// How per-element work and loss sums are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    /// Single thread, sequential sums; bit-reproducible losses.
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    /// Stage-1 Laplacian weight.
    pub lambda1: f64,
    /// Stage-2 tangential penalty weight.
    pub lambda2: f64,
    pub epochs1: usize,
    pub epochs2: usize,
    /// Optimizer learning rate.
    pub step_size: f64,
    /// Finite-difference step used by fields without analytic gradients.
    pub grad_h: f64,
    pub target: ProjectionTarget,
    pub mode: ExecutionMode,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            lambda1: 500.0,
            lambda2: 0.5,
            epochs1: 300,
            epochs2: 100,
            step_size: 1e-3,
            grad_h: 1e-4,
            target: ProjectionTarget::Absolute,
            mode: ExecutionMode::Parallel,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Domain(format!("{what} out of range: {v}")));
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad("lambda1", self.lambda1);
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad("lambda2", self.lambda2);
        }
        if self.epochs1 < 1 || self.epochs2 < 1 {
            return Err(Error::Domain("epoch counts must be >= 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size", self.step_size);
        }
        if !(self.grad_h > 0.0 && self.grad_h.is_finite()) {
            return bad("grad_h", self.grad_h);
        }
        Ok(())
    }

    fn adam(&self) -> VectorAdamConfig {
        VectorAdamConfig {
            learning_rate: self.step_size,
            ..VectorAdamConfig::default()
        }
    }
}

/// Objective split into its field term and its regularizer (Laplacian in
/// stage 1, tangential penalty in stage 2).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub field: f64,
    pub regularizer: f64,
    pub total: f64,
}

fn map_indices<T, F>(mode: ExecutionMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecutionMode::Serial => (0..n).map(f).collect(),
        ExecutionMode::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

fn sum(mode: ExecutionMode, values: &[f64]) -> f64 {
    match mode {
        ExecutionMode::Serial => values.iter().sum(),
        ExecutionMode::Parallel => values.par_iter().sum(),
    }
}

/// Per-vertex weight: mean area of incident faces over mean face area.
pub fn adaptive_weights(mesh: &TriangleMesh) -> Result<Vec<f64>> {
    let adj = Adjacency::new(mesh);
    adaptive_weights_with(mesh, &adj)
}

fn adaptive_weights_with(mesh: &TriangleMesh, adj: &Adjacency) -> Result<Vec<f64>> {
    let areas: Vec<f64> = (0..mesh.faces.len()).map(|f| mesh.face_area(f)).collect();
    let mean_area = areas.iter().sum::<f64>() / areas.len().max(1) as f64;
    (0..mesh.vertices.len())
        .map(|v| {
            let faces = adj.faces(v);
            if faces.is_empty() {
                return Err(Error::Topology {
                    vertex: v,
                    reason: "isolated vertex has no incident face".into(),
                });
            }
            if mean_area == 0.0 {
                return Ok(1.0);
            }
            let local = faces.iter().map(|&f| areas[f]).sum::<f64>() / faces.len() as f64;
            Ok(local / mean_area)
        })
        .collect()
}

fn check_valence(adj: &Adjacency) -> Result<()> {
    for v in 0..adj.vertex_count() {
        if adj.neighbors(v).len() < 2 {
            return Err(Error::Topology {
                vertex: v,
                reason: format!("valence {} < 2", adj.neighbors(v).len()),
            });
        }
    }
    Ok(())
}

/// Uniform Laplacian `p_i - mean(p_j for j in N(i))` at every vertex.
pub fn laplacian(mesh: &TriangleMesh, positions: &[Vec3]) -> Result<Vec<Vec3>> {
    let adj = Adjacency::new(mesh);
    check_valence(&adj)?;
    Ok(laplacian_with(&adj, positions, ExecutionMode::Serial))
}

fn laplacian_with(adj: &Adjacency, positions: &[Vec3], mode: ExecutionMode) -> Vec<Vec3> {
    map_indices(mode, positions.len(), |i| {
        let ring = adj.neighbors(i);
        let mean = ring.iter().map(|&j| positions[j]).sum::<Vec3>() / ring.len() as f64;
        positions[i] - mean
    })
}

fn centroid_of(positions: &[Vec3], face: [usize; 3]) -> Vec3 {
    (positions[face[0]] + positions[face[1]] + positions[face[2]]) / 3.0
}

/// Stage-1 objective on a fixed envelope connectivity.
///
/// `sum_{v} f(x_v) + sum_{faces} f(c_f) + lambda1 sum_v w_v |L x_v|^2`, with
/// centroids `c_f` the mean of their face's vertices and `w` fixed from the
/// envelope.
pub struct Stage1Objective<'a> {
    faces: &'a [[usize; 3]],
    adj: Adjacency,
    weights: Vec<f64>,
    lambda1: f64,
    grad_h: f64,
    mode: ExecutionMode,
}

impl<'a> Stage1Objective<'a> {
    pub fn new(envelope: &'a TriangleMesh, cfg: &ProjectionConfig) -> Result<Self> {
        let adj = Adjacency::new(envelope);
        let weights = adaptive_weights_with(envelope, &adj)?;
        check_valence(&adj)?;
        Ok(Self {
            faces: &envelope.faces,
            adj,
            weights,
            lambda1: cfg.lambda1,
            grad_h: cfg.grad_h,
            mode: cfg.mode,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn loss<F: ScalarField + ?Sized>(&self, field: &F, positions: &[Vec3]) -> LossTerms {
        let mode = self.mode;
        let vertex_terms = map_indices(mode, positions.len(), |v| field.eval(&positions[v]));
        let face_terms = map_indices(mode, self.faces.len(), |f| {
            field.eval(&centroid_of(positions, self.faces[f]))
        });
        let lap = laplacian_with(&self.adj, positions, mode);
        let reg_terms = map_indices(mode, positions.len(), |v| self.weights[v] * lap[v].norm_squared());
        let field_sum = sum(mode, &vertex_terms) + sum(mode, &face_terms);
        let regularizer = self.lambda1 * sum(mode, &reg_terms);
        LossTerms {
            field: field_sum,
            regularizer,
            total: field_sum + regularizer,
        }
    }

    /// Gradient of [`Self::loss`] with respect to every vertex position.
    pub fn gradient<F: ScalarField + ?Sized>(&self, field: &F, positions: &[Vec3]) -> Vec<Vec3> {
        let mode = self.mode;
        let h = self.grad_h;
        let face_grads = map_indices(mode, self.faces.len(), |f| {
            field.gradient(&centroid_of(positions, self.faces[f]), h) / 3.0
        });
        let lap = laplacian_with(&self.adj, positions, mode);
        // 2 lambda w_i L_i / |N(i)|, scattered to every neighbor of i
        let scaled: Vec<Vec3> = map_indices(mode, positions.len(), |i| {
            lap[i] * (2.0 * self.lambda1 * self.weights[i])
        });
        map_indices(mode, positions.len(), |v| {
            let mut g = field.gradient(&positions[v], h);
            for &f in self.adj.faces(v) {
                g += face_grads[f];
            }
            g += scaled[v];
            for &i in self.adj.neighbors(v) {
                g -= scaled[i] / self.adj.neighbors(i).len() as f64;
            }
            g
        })
    }
}

/// Stage-2 objective: field term plus `lambda2 sum_f |(c_f - c1_f) x n_f|`
/// with `c1_f` and `n_f` the centroids and unit normals of the stage-1
/// result, held fixed.
pub struct Stage2Objective<'a> {
    faces: &'a [[usize; 3]],
    adj: Adjacency,
    anchors: Vec<Vec3>,
    normals: Vec<Option<Vec3>>,
    lambda2: f64,
    grad_h: f64,
    mode: ExecutionMode,
}

impl<'a> Stage2Objective<'a> {
    pub fn new(envelope: &'a TriangleMesh, stage1_positions: &[Vec3], cfg: &ProjectionConfig) -> Self {
        let faces = &envelope.faces[..];
        Self {
            faces,
            adj: Adjacency::new(envelope),
            anchors: faces.iter().map(|&f| centroid_of(stage1_positions, f)).collect(),
            normals: faces.iter().map(|&f| face_normal_of(stage1_positions, f)).collect(),
            lambda2: cfg.lambda2,
            grad_h: cfg.grad_h,
            mode: cfg.mode,
        }
    }

    /// Faces whose stage-1 normal is undefined; their penalty is dropped.
    pub fn degenerate_faces(&self) -> usize {
        self.normals.iter().filter(|n| n.is_none()).count()
    }

    fn displacement(&self, positions: &[Vec3], f: usize) -> Vec3 {
        centroid_of(positions, self.faces[f]) - self.anchors[f]
    }

    pub fn loss<F: ScalarField + ?Sized>(&self, field: &F, positions: &[Vec3]) -> LossTerms {
        let mode = self.mode;
        let vertex_terms = map_indices(mode, positions.len(), |v| field.eval(&positions[v]));
        let face_terms = map_indices(mode, self.faces.len(), |f| {
            field.eval(&centroid_of(positions, self.faces[f]))
        });
        let tangential = map_indices(mode, self.faces.len(), |f| match self.normals[f] {
            Some(n) => self.displacement(positions, f).cross(&n).norm(),
            None => 0.0,
        });
        let field_sum = sum(mode, &vertex_terms) + sum(mode, &face_terms);
        let regularizer = self.lambda2 * sum(mode, &tangential);
        LossTerms {
            field: field_sum,
            regularizer,
            total: field_sum + regularizer,
        }
    }

    pub fn gradient<F: ScalarField + ?Sized>(&self, field: &F, positions: &[Vec3]) -> Vec<Vec3> {
        let mode = self.mode;
        let h = self.grad_h;
        let face_grads = map_indices(mode, self.faces.len(), |f| {
            let mut g = field.gradient(&centroid_of(positions, self.faces[f]), h);
            if let Some(n) = self.normals[f] {
                let u = self.displacement(positions, f);
                let t = u - n * u.dot(&n);
                let len = t.norm();
                if len > 0.0 {
                    g += t * (self.lambda2 / len);
                }
            }
            g / 3.0
        });
        map_indices(mode, positions.len(), |v| {
            let mut g = field.gradient(&positions[v], h);
            for &f in self.adj.faces(v) {
                g += face_grads[f];
            }
            g
        })
    }

    /// Mean tangential and mean normal centroid displacement magnitudes over
    /// faces with a defined normal.
    pub fn displacement_split(&self, positions: &[Vec3]) -> (f64, f64) {
        let mut tangential = 0.0;
        let mut normal = 0.0;
        let mut count = 0usize;
        for f in 0..self.faces.len() {
            if let Some(n) = self.normals[f] {
                let u = self.displacement(positions, f);
                let along = u.dot(&n);
                normal += along.abs();
                tangential += (u - n * along).norm();
                count += 1;
            }
        }
        let c = count.max(1) as f64;
        (tangential / c, normal / c)
    }
}

/// Loss trajectory of one optimization stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageReport {
    /// Loss at the start of each epoch, before its update.
    pub history: Vec<LossTerms>,
    /// Loss after the last update.
    pub final_loss: LossTerms,
}

impl StageReport {
    pub fn initial_loss(&self) -> LossTerms {
        self.history.first().copied().unwrap_or(self.final_loss)
    }
}

fn divergence(epoch: usize, positions: &[Vec3], gradients: &[Vec3]) -> Error {
    let vertex = positions
        .iter()
        .zip(gradients)
        .position(|(p, g)| !p.iter().chain(g.iter()).all(|c| c.is_finite()))
        .unwrap_or(0);
    Error::Divergence { epoch, vertex }
}

fn run_stage<L, G>(
    positions: Vec<Vec3>,
    epochs: usize,
    adam: &VectorAdamConfig,
    loss: L,
    gradient: G,
) -> Result<(Vec<Vec3>, StageReport)>
where
    L: Fn(&[Vec3]) -> LossTerms,
    G: Fn(&[Vec3]) -> Vec<Vec3>,
{
    let mut state = OptimState::new(positions);
    let mut report = StageReport::default();
    for epoch in 0..epochs {
        let terms = loss(&state.positions);
        let grads = gradient(&state.positions);
        if !terms.total.is_finite() || grads.iter().any(|g| !g.iter().all(|c| c.is_finite())) {
            return Err(divergence(epoch, &state.positions, &grads));
        }
        state.step(adam, &grads, terms.total);
        report.history.push(terms);
    }
    report.final_loss = loss(&state.positions);
    if !report.final_loss.total.is_finite() {
        return Err(divergence(epochs, &state.positions, &[]));
    }
    Ok((state.positions, report))
}

/// Runs stage 1 on `envelope` against `field` (already the projection
/// target, e.g. `|f|`).
pub fn stage1_optimize<F: ScalarField + ?Sized>(
    envelope: &TriangleMesh,
    field: &F,
    cfg: &ProjectionConfig,
) -> Result<(Vec<Vec3>, StageReport)> {
    cfg.validate()?;
    let objective = Stage1Objective::new(envelope, cfg)?;
    run_stage(
        envelope.vertices.clone(),
        cfg.epochs1,
        &cfg.adam(),
        |x| objective.loss(field, x),
        |x| objective.gradient(field, x),
    )
}

/// Stage-2 result with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Outcome {
    pub positions: Vec<Vec3>,
    pub report: StageReport,
    pub degenerate_faces: usize,
    pub mean_tangential: f64,
    pub mean_normal: f64,
}

pub fn stage2_refine<F: ScalarField + ?Sized>(
    envelope: &TriangleMesh,
    stage1_positions: &[Vec3],
    field: &F,
    cfg: &ProjectionConfig,
) -> Result<Stage2Outcome> {
    cfg.validate()?;
    if stage1_positions.len() != envelope.vertices.len() {
        return Err(Error::Data(format!(
            "stage-1 positions ({}) do not match envelope vertices ({})",
            stage1_positions.len(),
            envelope.vertices.len()
        )));
    }
    let objective = Stage2Objective::new(envelope, stage1_positions, cfg);
    let (positions, report) = run_stage(
        stage1_positions.to_vec(),
        cfg.epochs2,
        &cfg.adam(),
        |x| objective.loss(field, x),
        |x| objective.gradient(field, x),
    )?;
    let (mean_tangential, mean_normal) = objective.displacement_split(&positions);
    Ok(Stage2Outcome {
        positions,
        report,
        degenerate_faces: objective.degenerate_faces(),
        mean_tangential,
        mean_normal,
    })
}

/// Envelope plus both optimization stages.
#[derive(Debug, Clone)]
pub struct UnbiasedSurface {
    pub envelope: TriangleMesh,
    pub stage1_positions: Vec<Vec3>,
    pub mesh: TriangleMesh,
    pub stage1: StageReport,
    pub stage2: Stage2Outcome,
}

/// Projects an existing envelope. The field is `f`; `cfg.target` decides
/// whether `|f|` or `f` itself is minimized.
pub fn project_envelope<F: ScalarField>(
    envelope: TriangleMesh,
    field: &F,
    cfg: &ProjectionConfig,
) -> Result<UnbiasedSurface> {
    let abs;
    let target: &dyn ScalarField = match cfg.target {
        ProjectionTarget::Absolute => {
            abs = AbsoluteField(field);
            &abs
        }
        ProjectionTarget::Raw => field,
    };
    if envelope.is_empty() {
        return Ok(UnbiasedSurface {
            stage1_positions: envelope.vertices.clone(),
            mesh: envelope.clone(),
            envelope,
            stage1: StageReport::default(),
            stage2: Stage2Outcome {
                positions: Vec::new(),
                report: StageReport::default(),
                degenerate_faces: 0,
                mean_tangential: 0.0,
                mean_normal: 0.0,
            },
        });
    }
    let (stage1_positions, stage1) = stage1_optimize(&envelope, target, cfg)?;
    let stage2 = stage2_refine(&envelope, &stage1_positions, target, cfg)?;
    let mesh = TriangleMesh {
        vertices: stage2.positions.clone(),
        faces: envelope.faces.clone(),
    };
    Ok(UnbiasedSurface {
        envelope,
        stage1_positions,
        mesh,
        stage1,
        stage2,
    })
}

/// Full pipeline: envelope of `|f|` at `ecfg.iso`, then stage 1 and stage 2.
/// No min-cut or layer separation is applied.
pub fn extract_unbiased_surface<F: ScalarField>(
    field: &F,
    ecfg: &ExtractionConfig,
    pcfg: &ProjectionConfig,
) -> Result<UnbiasedSurface> {
    pcfg.validate()?;
    let envelope = extract_envelope(field, ecfg)?;
    project_envelope(envelope, field, pcfg)
}

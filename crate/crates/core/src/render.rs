//! NeuS density, transmittance and weights along a single ray-plane
//! intersection, and the closed-form opacity they integrate to.
//!
//! The ray meets one front-facing plane at `t_surface`. The distance along
//! the ray falls with slope `|cos_theta|` until its local minimum `m` and
//! rises afterwards. For `m >= 0` the minimum sits at `t_surface`; for
//! `m < 0` the zero crossing sits at `t_surface` and the minimum lies
//! `-m / |cos_theta|` further on. Density is clipped to zero past the minimum
//! (the back-facing side).

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default quadrature step in ray-parameter units.
pub const DEFAULT_STEP: f64 = 1e-4;

/// One ray crossing one plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCaseConfig {
    /// Logistic slope `s` of the density.
    pub sharpness: f64,
    /// Ray parameter of the front surface.
    pub t_surface: f64,
    /// Cosine between ray direction and field gradient in front of the
    /// surface; negative.
    pub cos_theta: f64,
    /// Local minimum of the distance along the ray.
    pub local_min: f64,
    pub t_max: f64,
    pub step: f64,
}

impl RayCaseConfig {
    /// Config with the default `t_max` and step.
    pub fn new(sharpness: f64, t_surface: f64, cos_theta: f64, local_min: f64) -> Result<Self> {
        let t_max = default_t_max(t_surface, cos_theta, local_min);
        let cfg = Self {
            sharpness,
            t_surface,
            cos_theta,
            local_min,
            t_max,
            step: DEFAULT_STEP,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config from the camera-to-plane distance `d0 = t_surface * |cos_theta|`.
    pub fn from_distance(sharpness: f64, d0: f64, cos_theta: f64, local_min: f64) -> Result<Self> {
        if !(cos_theta < 0.0 && cos_theta >= -1.0) {
            return Err(Error::Domain(format!(
                "cos_theta must lie in [-1, 0), got {cos_theta}"
            )));
        }
        Self::new(sharpness, d0 / cos_theta.abs(), cos_theta, local_min)
    }

    pub fn with_step(mut self, step: f64) -> Result<Self> {
        self.step = step;
        self.validate()?;
        Ok(self)
    }

    pub fn with_t_max(mut self, t_max: f64) -> Result<Self> {
        self.t_max = t_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Domain(msg));
        if !(self.sharpness.is_finite() && self.sharpness > 0.0) {
            return fail(format!("sharpness must be > 0, got {}", self.sharpness));
        }
        if !(self.cos_theta >= -1.0 && self.cos_theta < 0.0) {
            return fail(format!("cos_theta must lie in [-1, 0), got {}", self.cos_theta));
        }
        if !(self.t_surface > 0.0 && self.t_surface < self.t_max && self.t_max.is_finite()) {
            return fail(format!(
                "need 0 < t_surface < t_max, got t_surface={}, t_max={}",
                self.t_surface, self.t_max
            ));
        }
        if !self.local_min.is_finite() {
            return fail(format!("local minimum must be finite, got {}", self.local_min));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return fail(format!("step must be > 0, got {}", self.step));
        }
        if self.t_max / self.step > MAX_SAMPLES as f64 {
            return Err(Error::Resource(format!(
                "t_max / step = {:.3e} exceeds {MAX_SAMPLES} samples",
                self.t_max / self.step
            )));
        }
        Ok(())
    }

    /// Whether the step is fine enough for the quadrature tolerances
    /// (`step <= t_max / 1e4`).
    pub fn is_verification_grade(&self) -> bool {
        self.step <= self.t_max / 1e4
    }

    pub fn d0(&self) -> f64 {
        self.t_surface * self.cos_theta.abs()
    }

    /// Ray parameter where the distance reaches its minimum.
    pub fn minimum_location(&self) -> f64 {
        if self.local_min >= 0.0 {
            self.t_surface
        } else {
            self.t_surface - self.local_min / self.cos_theta.abs()
        }
    }

    /// Distance value at ray parameter `t`.
    pub fn distance_at(&self, t: f64) -> f64 {
        let c = self.cos_theta.abs();
        ((t - self.minimum_location()) * c).abs() + self.local_min
    }

    /// Cosine between ray and field gradient at `t`: `-|cos_theta|` up to
    /// the minimum, `+|cos_theta|` past it.
    pub fn cosine_at(&self, t: f64) -> f64 {
        let c = self.cos_theta.abs();
        if t <= self.minimum_location() {
            -c
        } else {
            c
        }
    }

    pub fn sample_count(&self) -> usize {
        (self.t_max / self.step).ceil() as usize
    }

    /// Midpoint of the `i`-th quadrature segment.
    pub fn sample_param(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.step
    }
}

/// One unit past the distance minimum. The density vanishes beyond the
/// minimum, so this covers the whole support of the weights.
pub fn default_t_max(t_surface: f64, cos_theta: f64, local_min: f64) -> f64 {
    t_surface + (-local_min).max(0.0) / cos_theta.abs() + 1.0
}

/// Upper bound on quadrature samples per ray.
pub const MAX_SAMPLES: usize = 50_000_000;

/// Distance values at every sample of `cfg`.
pub fn distance_profile(cfg: &RayCaseConfig) -> Vec<f64> {
    (0..cfg.sample_count())
        .map(|i| cfg.distance_at(cfg.sample_param(i)))
        .collect()
}

/// `max(-s (1 - Phi_s(f)) cos, 0)` with `Phi_s(x) = 1 / (1 + e^{-s x})`.
pub fn density(f_value: f64, cosine: f64, sharpness: f64) -> f64 {
    let one_minus_phi = 1.0 / (1.0 + (sharpness * f_value).exp());
    (-sharpness * one_minus_phi * cosine).max(0.0)
}

/// Sampled ray quantities, aligned by index.
#[derive(Debug, Clone, PartialEq)]
pub struct RayProfile {
    pub ts: Vec<f64>,
    pub f: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Transmittance entering each segment; `transmittance[0] == 1`.
    pub transmittance: Vec<f64>,
    pub weights: Vec<f64>,
    pub step: f64,
    /// Transmittance after the last segment.
    pub terminal_transmittance: f64,
}

impl RayProfile {
    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    /// `sum(w) * step`.
    pub fn weight_integral(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.step
    }
}

/// Midpoint-rule accumulation of density along the ray.
///
/// Segment `i` has density `sigma_i` sampled at its midpoint. The weight is
/// `T_i (1 - exp(-sigma_i step)) / step`, the per-segment form of `T sigma`,
/// so `sum(w) step` telescopes to `1 - T_end` up to rounding.
pub fn render_profile(cfg: &RayCaseConfig) -> RayProfile {
    let n = cfg.sample_count();
    let mut profile = RayProfile {
        ts: Vec::with_capacity(n),
        f: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        transmittance: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        step: cfg.step,
        terminal_transmittance: 1.0,
    };
    let mut optical_depth = 0.0;
    let mut t_in = 1.0;
    for i in 0..n {
        let t = cfg.sample_param(i);
        let f = cfg.distance_at(t);
        let sigma = density(f, cfg.cosine_at(t), cfg.sharpness);
        let segment_alpha = -(-sigma * cfg.step).exp_m1();
        profile.ts.push(t);
        profile.f.push(f);
        profile.sigma.push(sigma);
        profile.transmittance.push(t_in);
        profile.weights.push(t_in * segment_alpha / cfg.step);
        optical_depth += sigma * cfg.step;
        t_in = (-optical_depth).exp();
    }
    profile.terminal_transmittance = t_in;
    profile
}

/// Opacity from quadrature, computed two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOpacity {
    /// `1 - T(t_max)`.
    pub from_transmittance: f64,
    /// `sum(w) * step`.
    pub from_weights: f64,
}

pub fn quadrature_opacity(cfg: &RayCaseConfig) -> QuadratureOpacity {
    let profile = render_profile(cfg);
    QuadratureOpacity {
        from_transmittance: 1.0 - profile.terminal_transmittance,
        from_weights: profile.weight_integral(),
    }
}

/// Closed-form rendered opacity of one plane at distance `d0` whose distance
/// field has local minimum `m`.
///
/// `m >= 0`: `(1 - e^{-s d0}) / (1 + e^{s m})`.
/// `m < 0`: `1 - (1 + e^{-s d0}) / (1 + e^{-s m})`, evaluated as
/// `(1 - e^{-s d0} e^{s m}) / (1 + e^{s m})` to avoid overflow. Both
/// branches reduce to the same floating-point expression at `m = 0`.
pub fn closed_form_opacity(s: f64, d0: f64, m: f64) -> f64 {
    let a = (-s * d0).exp();
    if m >= 0.0 {
        (1.0 - a) / (1.0 + (s * m).exp())
    } else {
        negative_branch(a, s, m)
    }
}

fn negative_branch(a: f64, s: f64, m: f64) -> f64 {
    let q = (s * m).exp();
    (1.0 - a * q) / (q + 1.0)
}

/// Both closed-form branches evaluated at `m` regardless of its sign,
/// `[m >= 0 formula, m < 0 formula]`.
pub fn closed_form_branches(s: f64, d0: f64, m: f64) -> [f64; 2] {
    let a = (-s * d0).exp();
    [(1.0 - a) / (1.0 + (s * m).exp()), negative_branch(a, s, m)]
}

/// Opacity separating the `m >= 0` and `m < 0` regimes.
pub fn watershed_alpha(s: f64, d0: f64) -> f64 {
    (1.0 - (-s * d0).exp()) / 2.0
}

/// Ray parameter of the largest weight; ties go to the smallest `t`.
pub fn weight_argmax(profile: &RayProfile) -> Result<f64> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &w) in profile.weights.iter().enumerate() {
        if w > 0.0 && best.is_none_or(|(_, bw)| w > bw) {
            best = Some((i, w));
        }
    }
    best.map(|(i, _)| profile.ts[i]).ok_or(Error::DegenerateProfile)
}

/// Outcome of checking one ray case against the closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremReport {
    pub sharpness: f64,
    pub d0: f64,
    pub local_min: f64,
    pub step: f64,
    pub alpha_quad: f64,
    pub alpha_closed: f64,
    pub t_star: f64,
    pub t_expected: f64,
    pub pass: bool,
}

impl TheoremReport {
    pub fn alpha_error(&self) -> f64 {
        (self.alpha_quad - self.alpha_closed).abs()
    }

    pub fn t_error(&self) -> f64 {
        (self.t_star - self.t_expected).abs()
    }
}

/// Checks quadrature opacity against the closed form and that the weight
/// maximum sits at `t_surface`: the distance minimum when `m >= 0`, the front
/// zero crossing when `m < 0`.
pub fn verify_theorem_case(cfg: &RayCaseConfig, tol_alpha: f64) -> Result<TheoremReport> {
    cfg.validate()?;
    let profile = render_profile(cfg);
    let t_star = weight_argmax(&profile)?;
    let alpha_quad = 1.0 - profile.terminal_transmittance;
    let alpha_closed = closed_form_opacity(cfg.sharpness, cfg.d0(), cfg.local_min);
    let t_expected = cfg.t_surface;
    let pass = (alpha_quad - alpha_closed).abs() <= tol_alpha
        && (t_star - t_expected).abs() <= 2.0 * cfg.step;
    Ok(TheoremReport {
        sharpness: cfg.sharpness,
        d0: cfg.d0(),
        local_min: cfg.local_min,
        step: cfg.step,
        alpha_quad,
        alpha_closed,
        t_star,
        t_expected,
        pass,
    })
}

/// Grid of ray cases over sharpness, distance and minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub sharpness: Vec<f64>,
    pub d0: Vec<f64>,
    pub local_min: Vec<f64>,
    pub cos_theta: f64,
    pub step: f64,
    pub tol_alpha: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            sharpness: vec![20.0, 50.0, 100.0, 200.0],
            d0: vec![0.5, 1.0, 2.0],
            local_min: vec![-0.2, -0.1, -0.01, 0.0, 0.01, 0.1, 0.2],
            cos_theta: -1.0,
            step: DEFAULT_STEP,
            tol_alpha: 1e-3,
        }
    }
}

impl SweepSpec {
    pub fn configs(&self) -> Result<Vec<RayCaseConfig>> {
        if self.sharpness.is_empty() || self.d0.is_empty() || self.local_min.is_empty() {
            return Err(Error::EmptyInput("sweep lists must be non-empty"));
        }
        let mut out = Vec::new();
        for &s in &self.sharpness {
            for &d0 in &self.d0 {
                for &m in &self.local_min {
                    out.push(RayCaseConfig::from_distance(s, d0, self.cos_theta, m)?.with_step(self.step)?);
                }
            }
        }
        Ok(out)
    }
}

/// Runs every case of the sweep in parallel; results keep sweep order
/// (sharpness outermost, minimum innermost).
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<Result<TheoremReport>>> {
    let configs = spec.configs()?;
    Ok(configs
        .par_iter()
        .map(|cfg| verify_theorem_case(cfg, spec.tol_alpha))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(s: f64, m: f64) -> RayCaseConfig {
        RayCaseConfig::new(s, 1.0, -1.0, m).unwrap()
    }

    #[test]
    fn distance_profile_examples() {
        let c = cfg(10.0, 0.05);
        assert!((c.distance_at(1.0) - 0.05).abs() < 1e-15);
        assert!((c.distance_at(0.9) - 0.15).abs() < 1e-12);

        let c = cfg(10.0, -0.1);
        assert!(c.distance_at(1.0).abs() < 1e-15);
        assert!((c.minimum_location() - 1.1).abs() < 1e-15);
        assert!((c.distance_at(1.1) + 0.1).abs() < 1e-15);

        let c = RayCaseConfig::new(10.0, 1.0, -0.5, 0.0).unwrap();
        assert_eq!(c.distance_at(1.0), 0.0);
        assert!((c.distance_at(0.8) - 0.1).abs() < 1e-15);

        let values = distance_profile(&cfg(10.0, 0.05));
        assert_eq!(values.len(), cfg(10.0, 0.05).sample_count());
    }

    #[test]
    fn density_examples() {
        assert_eq!(density(1e6, -1.0, 10.0), 0.0);
        assert_eq!(density(0.0, -1.0, 10.0), 5.0);
        assert_eq!(density(0.0, 0.3, 10.0), 0.0);
        assert_eq!(density(-0.4, 0.3, 100.0), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(RayCaseConfig::new(0.0, 1.0, -1.0, 0.0).is_err());
        assert!(RayCaseConfig::new(10.0, 1.0, 0.0, 0.0).is_err());
        assert!(RayCaseConfig::new(10.0, 1.0, 0.2, 0.0).is_err());
        assert!(RayCaseConfig::new(10.0, -1.0, -1.0, 0.0).is_err());
        assert!(cfg(10.0, 0.0).with_step(0.0).is_err());
        assert!(cfg(10.0, 0.0).with_t_max(0.5).is_err());
        let c = cfg(10.0, -0.5);
        assert_eq!(c.t_max, 2.5);
        assert!(c.is_verification_grade());
    }

    #[test]
    fn absent_surface_renders_nothing() {
        let c = cfg(10.0, 1000.0);
        let p = render_profile(&c);
        assert!(p.terminal_transmittance >= 1.0 - 1e-9);
        assert!(p.weights.iter().all(|&w| w.abs() < 1e-300));
        assert!(matches!(weight_argmax(&p), Err(Error::DegenerateProfile)));
        assert!(matches!(verify_theorem_case(&c, 1e-3), Err(Error::DegenerateProfile)));
    }

    #[test]
    fn profile_invariants() {
        for m in [-0.2, -0.01, 0.0, 0.05, 0.2] {
            let p = render_profile(&cfg(50.0, m));
            assert_eq!(p.transmittance[0], 1.0);
            assert!(p.transmittance.windows(2).all(|w| w[1] <= w[0]));
            assert!(p.transmittance.iter().all(|&t| t > 0.0 && t <= 1.0));
            assert!(p.sigma.iter().all(|&s| s >= 0.0));
            assert!(p.weights.iter().all(|&w| w >= 0.0));
            assert!((p.weight_integral() - (1.0 - p.terminal_transmittance)).abs() <= 1e-9);
        }
    }

    #[test]
    fn opacity_limits() {
        let c = RayCaseConfig::new(50.0, 1.0, -1.0, -10.0).unwrap();
        assert!(quadrature_opacity(&c).from_transmittance >= 1.0 - 1e-6);

        let c = RayCaseConfig::new(10.0, 1e-6, -1.0, 0.1).unwrap();
        assert!(quadrature_opacity(&c).from_transmittance <= 1e-4);
    }

    #[test]
    fn watershed_values() {
        assert!((watershed_alpha(100.0, 1.0) - 0.5).abs() <= 1e-10);
        assert!((watershed_alpha(1.0, 0.1) - 0.047581).abs() <= 5e-7);
        for (s, d0) in [(10.0, 1.0), (20.0, 0.5), (1.0, 0.1)] {
            assert_eq!(closed_form_opacity(s, d0, 0.0), watershed_alpha(s, d0));
            assert_eq!(negative_branch((-s * d0).exp(), s, 0.0), watershed_alpha(s, d0));
        }
    }

    #[test]
    fn closed_form_saturates_without_nan() {
        assert_eq!(closed_form_opacity(10.0, 1.0, 1e4), 0.0);
        assert_eq!(closed_form_opacity(10.0, 1.0, -1e4), 1.0);
    }

    #[test]
    fn weight_argmax_prefers_smallest_t_on_ties() {
        let p = RayProfile {
            ts: vec![0.1, 0.2, 0.3],
            f: vec![0.0; 3],
            sigma: vec![1.0; 3],
            transmittance: vec![1.0; 3],
            weights: vec![0.5, 0.7, 0.7],
            step: 0.1,
            terminal_transmittance: 0.0,
        };
        assert_eq!(weight_argmax(&p).unwrap(), 0.2);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let spec = SweepSpec {
            local_min: vec![],
            ..SweepSpec::default()
        };
        assert!(spec.configs().is_err());
    }
}

//! Self-organizing convolutional layers: a local plasticity rule plus a
//! competition mechanism and optional gating, with no gradient signal
//! from any objective.

pub mod competition;
pub mod rules;

pub use competition::{
    apply_lateral_inhibition, dog_kernel, hard_wta_mask, homeostatic_gate, homeostatic_threshold,
    presynaptic_weights, similarity_map, soft_wta_activation, LateralKernel, PresynapticMode,
    TemporalHistory,
};
pub use rules::{
    bcm_depthwise_update, bcm_update, cosine_response, dale_project, depthwise_cosine_response,
    grossberg_depthwise_update, grossberg_update, kaiming_uniform_init, normalize_update,
    softhebb_update, softwta_weight_init,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{conv2d_forward, depthwise_forward, ConvGeometry, Tensor4};

/// Local plasticity rule for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearningRule {
    /// Instar rule: weights move toward the patches that activate them.
    Grossberg,
    /// Sliding-threshold rule with per-channel adaptive thresholds.
    Bcm,
    /// Soft-competition rule driven by a per-site softmax.
    SoftHebb,
}

/// Cross-channel competition applied at every spatial site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Competition {
    /// Winner keeps its activation, every other channel is silenced.
    Hard,
    /// Per-site softmax sharing of activation.
    Soft,
    /// No competition; raw responses pass through.
    None,
}

/// Difference-of-Gaussians lateral inhibition parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralConfig {
    pub sigma_e: f32,
    pub sigma_i: f32,
    pub kernel_size: usize,
}

/// Per-layer learning configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct HebbianLayerConfig {
    pub rule: LearningRule,
    pub competition: Competition,
    /// Learning rate; 0 freezes the layer.
    pub eta: f32,
    /// Sliding-threshold decay for the BCM rule.
    pub theta_decay: f32,
    /// Softmax inverse temperature for soft competition.
    pub inv_temp: f32,
    pub lateral: Option<LateralConfig>,
    pub presynaptic: Option<PresynapticMode>,
    /// Temporal gating buffer length, if enabled.
    pub temporal_buffer: Option<usize>,
    /// Homeostatic gating threshold factor, if enabled.
    pub homeostatic_k: Option<f32>,
    /// Constrain all weights to a single sign after each update.
    pub dale: bool,
    /// Use the cosine-similarity response instead of the raw convolution.
    pub cosine: bool,
}

impl Default for HebbianLayerConfig {
    fn default() -> Self {
        Self {
            rule: LearningRule::Grossberg,
            competition: Competition::Hard,
            eta: 0.1,
            theta_decay: 0.5,
            inv_temp: 1.0,
            lateral: None,
            presynaptic: None,
            temporal_buffer: None,
            homeostatic_k: None,
            dale: false,
            cosine: false,
        }
    }
}

impl HebbianLayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta < 0.0 || !self.eta.is_finite() {
            return Err(Error::Parameter(format!("learning rate {} must be finite and >= 0", self.eta)));
        }
        if self.rule == LearningRule::Bcm && !(self.theta_decay > 0.0 && self.theta_decay <= 1.0) {
            return Err(Error::Parameter(format!(
                "threshold decay {} must be in (0, 1]",
                self.theta_decay
            )));
        }
        if self.competition == Competition::Soft && self.inv_temp <= 0.0 {
            return Err(Error::Parameter(format!(
                "inverse temperature {} must be positive",
                self.inv_temp
            )));
        }
        if self.rule == LearningRule::SoftHebb && self.competition != Competition::Soft {
            return Err(Error::Parameter(
                "the soft-competition rule requires soft competition".into(),
            ));
        }
        if self.rule == LearningRule::SoftHebb
            && (self.temporal_buffer.is_some() || self.homeostatic_k.is_some())
        {
            return Err(Error::Capability(
                "update gating is not supported with the soft-competition rule".into(),
            ));
        }
        if let Some(l) = &self.lateral {
            if l.kernel_size % 2 == 0 || !(l.sigma_i > l.sigma_e && l.sigma_e > 0.0) {
                return Err(Error::Parameter(format!(
                    "lateral kernel needs odd size and sigma_i > sigma_e > 0, got {l:?}"
                )));
            }
        }
        if let Some(t) = self.temporal_buffer {
            if t == 0 {
                return Err(Error::Parameter("temporal buffer length must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One self-organizing convolutional layer: a filter bank plus the state
/// its plasticity rule and gates need between steps.
#[derive(Debug, Clone)]
pub struct HebbianConvLayer {
    pub weights: Tensor4<f32>,
    pub geom: ConvGeometry,
    pub config: HebbianLayerConfig,
    /// Depthwise layers hold filters of shape (channels, 1, kh, kw) and
    /// compete over a single candidate per site.
    pub depthwise: bool,
    /// Per-channel sliding thresholds for the BCM rule.
    pub bcm_theta: Vec<f32>,
    /// Most recent normalized update, kept for inspection.
    pub last_delta: Option<Tensor4<f32>>,
    history: Option<TemporalHistory>,
    lateral: Option<LateralKernel>,
}

impl HebbianConvLayer {
    pub fn new<R: Rng>(geom: ConvGeometry, config: HebbianLayerConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let weights = match config.competition {
            Competition::Soft => {
                softwta_weight_init(geom.out_channels, geom.in_channels, geom.kernel_h, geom.kernel_w, rng)
            }
            _ => kaiming_uniform_init(geom.out_channels, geom.in_channels, geom.kernel_h, geom.kernel_w, rng),
        };
        Self::with_weights(weights, geom, config, false)
    }

    pub fn new_depthwise<R: Rng>(
        channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        config: HebbianLayerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if config.rule == LearningRule::SoftHebb || config.homeostatic_k.is_some() {
            return Err(Error::Capability(
                "depthwise layers support only the instar and sliding-threshold rules \
                 and no homeostatic gate"
                    .into(),
            ));
        }
        let geom = ConvGeometry {
            in_channels: channels,
            out_channels: channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
        };
        let weights = kaiming_uniform_init(channels, 1, kernel, kernel, rng);
        Self::with_weights(weights, geom, config, true)
    }

    /// Wrap an existing filter bank (e.g. loaded from a checkpoint).
    pub fn with_weights(
        weights: Tensor4<f32>,
        geom: ConvGeometry,
        config: HebbianLayerConfig,
        depthwise: bool,
    ) -> Result<Self> {
        config.validate()?;
        if depthwise {
            let (oc, one, kh, kw) = weights.shape();
            if oc != geom.out_channels || one != 1 || kh != geom.kernel_h || kw != geom.kernel_w {
                return Err(Error::Dimension(format!(
                    "depthwise filter bank shape {:?} does not match geometry {geom:?}",
                    weights.shape()
                )));
            }
        } else {
            geom.validate_filters(&weights)?;
        }
        let lateral = match &config.lateral {
            Some(l) => Some(dog_kernel(l.sigma_e, l.sigma_i, l.kernel_size)?),
            None => None,
        };
        let history = config
            .temporal_buffer
            .map(|cap| TemporalHistory::new(geom.out_channels, cap));
        let bcm_theta = vec![0.0; geom.out_channels];
        Ok(Self {
            weights,
            geom,
            config,
            depthwise,
            bcm_theta,
            last_delta: None,
            history,
            lateral,
        })
    }

    pub fn temporal_history(&self) -> Option<&TemporalHistory> {
        self.history.as_ref()
    }

    fn response(&self, x: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        let w_eff;
        let w = match self.config.presynaptic {
            Some(mode) => {
                w_eff = presynaptic_weights(&self.weights, mode);
                &w_eff
            }
            None => &self.weights,
        };
        let mut u = if self.depthwise {
            if self.config.cosine {
                rules::depthwise_cosine_response(x, w, self.geom.stride, self.geom.padding)?
            } else {
                depthwise_forward(x, w, self.geom.stride, self.geom.padding)?
            }
        } else if self.config.cosine {
            cosine_response(x, w, &self.geom)?
        } else {
            conv2d_forward(x, w, &self.geom)?
        };
        if let Some(k) = &self.lateral {
            u = apply_lateral_inhibition(&u, k);
        }
        Ok(u)
    }

    fn competitive_output(&self, u: &Tensor4<f32>) -> Tensor4<f32> {
        if self.depthwise {
            // a depthwise site has a single candidate, so competition is a
            // no-op regardless of the configured mechanism
            return u.clone();
        }
        match self.config.competition {
            Competition::Hard => {
                let mask = hard_wta_mask(u);
                let mut y = u.clone();
                for (v, &m) in y.data_mut().iter_mut().zip(mask.data()) {
                    *v *= m;
                }
                y
            }
            Competition::Soft => soft_wta_activation(u, self.config.inv_temp),
            Competition::None => u.clone(),
        }
    }

    /// Pure forward pass; weights and gate state are untouched.
    pub fn forward(&self, x: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        let u = self.response(x)?;
        Ok(self.competitive_output(&u))
    }

    /// One plasticity step: respond, compete, gate, update, and return the
    /// post-competition activity that downstream layers consume.
    pub fn hebbian_step(&mut self, x: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        let u = self.response(x)?;
        let y = self.competitive_output(&u);
        if self.config.eta == 0.0 {
            return Ok(y);
        }

        // gate permissions are decided from the competitive activity
        let channel_permit: Option<Vec<bool>> = match &mut self.history {
            Some(h) => {
                let (n, c, hh, ww) = y.shape();
                let count = (n * hh * ww) as f32;
                let mut summary = vec![0.0f32; c];
                for b in 0..n {
                    for ch in 0..c {
                        for yy in 0..hh {
                            for xx in 0..ww {
                                summary[ch] += y.at(b, ch, yy, xx);
                            }
                        }
                    }
                }
                for s in &mut summary {
                    *s /= count;
                }
                Some(h.gate(&summary))
            }
            None => None,
        };
        let site_permit: Option<Tensor4<f32>> = match self.config.homeostatic_k {
            Some(k) => Some(competition::homeostatic_gate(x, &self.weights, &self.geom, k)?),
            None => None,
        };

        let gate = |t: &Tensor4<f32>| -> Tensor4<f32> {
            let mut g = t.clone();
            let (n, c, hh, ww) = g.shape();
            if let Some(p) = &channel_permit {
                for b in 0..n {
                    for ch in 0..c {
                        if !p[ch] {
                            for yy in 0..hh {
                                for xx in 0..ww {
                                    *g.at_mut(b, ch, yy, xx) = 0.0;
                                }
                            }
                        }
                    }
                }
            }
            if let Some(mask) = &site_permit {
                for (gv, &m) in g.data_mut().iter_mut().zip(mask.data()) {
                    *gv *= m;
                }
            }
            g
        };

        let mut delta = match self.config.rule {
            LearningRule::Grossberg => {
                let act = gate(&y);
                if self.depthwise {
                    grossberg_depthwise_update(x, &act, &self.weights, self.geom.stride, self.geom.padding)?
                } else {
                    grossberg_update(x, &act, &self.weights, &self.geom)?
                }
            }
            LearningRule::Bcm => {
                // the sliding-threshold rule selects winners itself, so it
                // sees the pre-mask response under hard competition and the
                // shared activation under soft competition
                let base = match self.config.competition {
                    Competition::Soft => &y,
                    _ => &u,
                };
                let act = gate(base);
                if self.depthwise {
                    let (d, th) = bcm_depthwise_update(
                        x,
                        &act,
                        self.geom.kernel_h,
                        self.geom.kernel_w,
                        self.geom.stride,
                        self.geom.padding,
                        &self.bcm_theta,
                        self.config.theta_decay,
                    )?;
                    self.bcm_theta = th;
                    d
                } else {
                    let (d, th) = bcm_update(
                        x,
                        &act,
                        &self.weights,
                        &self.bcm_theta,
                        self.config.theta_decay,
                        &self.geom,
                    )?;
                    self.bcm_theta = th;
                    d
                }
            }
            LearningRule::SoftHebb => {
                let (d, _) = softhebb_update(x, &u, &self.weights, &self.geom, self.config.inv_temp)?;
                d
            }
        };

        normalize_update(&mut delta);
        self.weights.add_scaled(&delta, self.config.eta);
        if self.config.dale {
            dale_project(&mut self.weights);
        }
        if !self.weights.all_finite() {
            return Err(Error::Numeric("non-finite weight after plasticity step".into()));
        }
        self.last_delta = Some(delta);
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_t(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor4<f32> {
        Tensor4::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn config_validation_catches_bad_combinations() {
        let mut c = HebbianLayerConfig::default();
        c.eta = -0.1;
        assert!(c.validate().is_err());
        let mut c = HebbianLayerConfig::default();
        c.rule = LearningRule::SoftHebb;
        c.competition = Competition::Hard;
        assert!(c.validate().is_err());
        c.competition = Competition::Soft;
        assert!(c.validate().is_ok());
        c.temporal_buffer = Some(500);
        assert!(matches!(c.validate(), Err(Error::Capability(_))));
        let mut c = HebbianLayerConfig::default();
        c.rule = LearningRule::Bcm;
        c.theta_decay = 0.0;
        assert!(c.validate().is_err());
        let mut c = HebbianLayerConfig::default();
        c.lateral = Some(LateralConfig { sigma_e: 1.4, sigma_i: 1.2, kernel_size: 5 });
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_eta_is_pure_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let geom = ConvGeometry::square(2, 4, 3, 1, 1);
        let cfg = HebbianLayerConfig { eta: 0.0, ..Default::default() };
        let mut layer = HebbianConvLayer::new(geom, cfg, &mut rng).unwrap();
        let w0 = layer.weights.clone();
        let x = rand_t(&mut rng, 2, 2, 6, 6);
        let y_step = layer.hebbian_step(&x).unwrap();
        let y_fwd = layer.forward(&x).unwrap();
        assert_eq!(layer.weights, w0);
        assert_eq!(y_step.data(), y_fwd.data());
    }

    #[test]
    fn hard_competition_output_is_sparse() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let geom = ConvGeometry::square(2, 5, 3, 1, 0);
        let mut layer = HebbianConvLayer::new(geom, HebbianLayerConfig::default(), &mut rng).unwrap();
        let x = rand_t(&mut rng, 1, 2, 6, 6);
        let y = layer.hebbian_step(&x).unwrap();
        let (_, c, h, w) = y.shape();
        for yy in 0..h {
            for xx in 0..w {
                let nz = (0..c).filter(|&ch| y.at(0, ch, yy, xx) != 0.0).count();
                assert!(nz <= 1, "more than one live channel at a site");
            }
        }
    }

    #[test]
    fn update_is_normalized_and_applied() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let geom = ConvGeometry::square(2, 3, 3, 1, 1);
        let cfg = HebbianLayerConfig { eta: 0.05, ..Default::default() };
        let mut layer = HebbianConvLayer::new(geom, cfg, &mut rng).unwrap();
        let w0 = layer.weights.clone();
        let x = rand_t(&mut rng, 2, 2, 5, 5);
        layer.hebbian_step(&x).unwrap();
        let delta = layer.last_delta.as_ref().unwrap();
        assert!((delta.max_abs() - 1.0).abs() < 1e-5);
        // w1 = w0 + eta * delta exactly
        for ((a, b), d) in layer.weights.data().iter().zip(w0.data()).zip(delta.data()) {
            assert!((a - (b + 0.05 * d)).abs() < 1e-6);
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(63);
            let geom = ConvGeometry::square(3, 8, 3, 1, 1);
            let cfg = HebbianLayerConfig {
                lateral: Some(LateralConfig { sigma_e: 1.0, sigma_i: 1.2, kernel_size: 3 }),
                ..Default::default()
            };
            let mut layer = HebbianConvLayer::new(geom, cfg, &mut rng).unwrap();
            for _ in 0..3 {
                let x = rand_t(&mut rng, 2, 3, 8, 8);
                layer.hebbian_step(&x).unwrap();
            }
            layer.weights
        };
        assert_eq!(run().data(), run().data());
    }

    #[test]
    fn dale_keeps_weights_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let geom = ConvGeometry::square(2, 4, 3, 1, 1);
        let cfg = HebbianLayerConfig { dale: true, ..Default::default() };
        let mut layer = HebbianConvLayer::new(geom, cfg, &mut rng).unwrap();
        for _ in 0..4 {
            let x = rand_t(&mut rng, 1, 2, 6, 6);
            layer.hebbian_step(&x).unwrap();
            assert!(layer.weights.data().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn bcm_thresholds_advance() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let geom = ConvGeometry::square(2, 4, 3, 1, 1);
        let cfg = HebbianLayerConfig {
            rule: LearningRule::Bcm,
            theta_decay: 0.35,
            ..Default::default()
        };
        let mut layer = HebbianConvLayer::new(geom, cfg, &mut rng).unwrap();
        assert!(layer.bcm_theta.iter().all(|&t| t == 0.0));
        let x = rand_t(&mut rng, 2, 2, 6, 6);
        layer.hebbian_step(&x).unwrap();
        assert!(layer.bcm_theta.iter().any(|&t| t > 0.0));
    }

    #[test]
    fn temporal_gate_blocks_quiet_channels() {
        let geom = ConvGeometry::square(1, 2, 1, 1, 0);
        let cfg = HebbianLayerConfig {
            temporal_buffer: Some(500),
            competition: Competition::None,
            ..Default::default()
        };
        // positive weights keep every channel's response history positive,
        // so a near-zero input sits below each channel's median
        let w = Tensor4::from_vec(2, 1, 1, 1, vec![0.5, 0.8]).unwrap();
        let mut layer = HebbianConvLayer::with_weights(w, geom, cfg, false).unwrap();
        // strong steps fill the history with high summaries
        let hot = Tensor4::from_vec(1, 1, 2, 2, vec![1.0; 4]).unwrap();
        for _ in 0..5 {
            layer.hebbian_step(&hot).unwrap();
        }
        let w_before = layer.weights.clone();
        // a much weaker input falls below every channel median: no update
        let cold = Tensor4::from_vec(1, 1, 2, 2, vec![1e-6; 4]).unwrap();
        layer.hebbian_step(&cold).unwrap();
        let delta = layer.last_delta.as_ref().unwrap();
        assert!(delta.data().iter().all(|&v| v == 0.0));
        assert_eq!(layer.weights, w_before);
    }

    #[test]
    fn homeostatic_gate_blocks_uniform_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let geom = ConvGeometry::square(1, 1, 1, 1, 0);
        let cfg = HebbianLayerConfig {
            homeostatic_k: Some(2.0),
            competition: Competition::None,
            ..Default::default()
        };
        let mut layer = HebbianConvLayer::new(geom, cfg, &mut rng).unwrap();
        // constant input with a 1x1 filter: all similarities equal, std = 0,
        // and the strict threshold blocks every site
        let x = Tensor4::from_vec(1, 1, 3, 3, vec![0.5; 9]).unwrap();
        layer.hebbian_step(&x).unwrap();
        assert!(layer.last_delta.as_ref().unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn depthwise_layer_updates_each_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(68);
        let mut layer =
            HebbianConvLayer::new_depthwise(3, 3, 1, 1, HebbianLayerConfig::default(), &mut rng).unwrap();
        let x = rand_t(&mut rng, 1, 3, 6, 6);
        let y = layer.hebbian_step(&x).unwrap();
        assert_eq!(y.shape(), (1, 3, 6, 6));
        assert_eq!(layer.weights.shape(), (3, 1, 3, 3));
    }

    #[test]
    fn depthwise_rejects_unsupported_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(69);
        let cfg = HebbianLayerConfig {
            rule: LearningRule::SoftHebb,
            competition: Competition::Soft,
            ..Default::default()
        };
        assert!(matches!(
            HebbianConvLayer::new_depthwise(3, 3, 1, 1, cfg, &mut rng),
            Err(Error::Capability(_))
        ));
        let cfg = HebbianLayerConfig { homeostatic_k: Some(2.0), ..Default::default() };
        assert!(HebbianConvLayer::new_depthwise(3, 3, 1, 1, cfg, &mut rng).is_err());
    }

    #[test]
    fn depthwise_cosine_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let cfg = HebbianLayerConfig { cosine: true, ..Default::default() };
        let layer = HebbianConvLayer::new_depthwise(3, 3, 1, 1, cfg, &mut rng).unwrap();
        let x = rand_t(&mut rng, 1, 3, 6, 6);
        let y = layer.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v.abs() <= 1.0 + 1e-4));
    }

    #[test]
    fn soft_rule_moves_winner_toward_input() {
        // repeated presentation of one pattern: the weight decay shrinks the
        // (large) initial norm, so raw responses may fall, but the best
        // filter's alignment with the pattern must improve
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let geom = ConvGeometry::square(2, 4, 3, 1, 0);
        let cfg = HebbianLayerConfig {
            rule: LearningRule::SoftHebb,
            competition: Competition::Soft,
            inv_temp: 1.0,
            eta: 0.05,
            ..Default::default()
        };
        let mut layer = HebbianConvLayer::new(geom, cfg, &mut rng).unwrap();
        let x = rand_t(&mut rng, 1, 2, 3, 3);
        // 3x3 kernel over a 3x3 input without padding: each filter sees the
        // whole image, so alignment is a cosine over the flattened tensors
        let best_cosine = |w: &Tensor4<f32>| -> f32 {
            let k_len = x.len();
            let xn = x.data().iter().map(|v| v * v).sum::<f32>().sqrt();
            (0..4)
                .map(|f| {
                    let row = &w.data()[f * k_len..(f + 1) * k_len];
                    let dot: f32 = row.iter().zip(x.data()).map(|(a, b)| a * b).sum();
                    let wn = row.iter().map(|v| v * v).sum::<f32>().sqrt();
                    dot / (wn * xn)
                })
                .fold(f32::NEG_INFINITY, f32::max)
        };
        let c0 = best_cosine(&layer.weights);
        for _ in 0..30 {
            layer.hebbian_step(&x).unwrap();
        }
        let c1 = best_cosine(&layer.weights);
        assert!(c1 > c0, "winner alignment decayed: {c0} -> {c1}");
    }

    #[test]
    fn presynaptic_layer_runs_and_learns() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let geom = ConvGeometry::square(3, 4, 3, 1, 1);
        let cfg = HebbianLayerConfig {
            presynaptic: Some(PresynapticMode::Softmax),
            ..Default::default()
        };
        let mut layer = HebbianConvLayer::new(geom, cfg, &mut rng).unwrap();
        let w0 = layer.weights.clone();
        let x = rand_t(&mut rng, 1, 3, 6, 6);
        layer.hebbian_step(&x).unwrap();
        assert_ne!(layer.weights.data(), w0.data());
    }
}

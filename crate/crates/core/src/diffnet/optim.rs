use super::network::Network;
use super::tape::GradientBundle;

/// Plain gradient descent: every parameter moves by `-lr * grad`.
pub fn sgd_step(net: &mut Network, grads: &GradientBundle, lr: f64) {
    debug_assert!(grads.shape_matches(net));
    for (k, layer) in net.layers_mut().iter_mut().enumerate() {
        let (w, b) = layer.params_mut();
        for (p, g) in w.iter_mut().zip(&grads.d_weights[k]) {
            *p -= lr * g;
        }
        for (p, g) in b.iter_mut().zip(&grads.d_bias[k]) {
            *p -= lr * g;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one slot per parameter in the same
/// order as [`GradientBundle::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        Self::with_config(net, AdamConfig::default())
    }

    pub fn with_config(net: &Network, config: AdamConfig) -> Self {
        let n = net.param_count();
        Self {
            config,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Applies one bias-corrected Adam update in place.
    pub fn step(&mut self, net: &mut Network, grads: &GradientBundle, lr: f64) {
        debug_assert!(grads.shape_matches(net));
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        let mut slot = 0;
        for (k, layer) in net.layers_mut().iter_mut().enumerate() {
            let (w, b) = layer.params_mut();
            let pairs = w
                .iter_mut()
                .zip(&grads.d_weights[k])
                .chain(b.iter_mut().zip(&grads.d_bias[k]));
            for (p, &g) in pairs {
                let m = &mut self.m[slot];
                let v = &mut self.v[slot];
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
                slot += 1;
            }
        }
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    mut state: AdamState,
    mut net: Network,
    grads: &GradientBundle,
    lr: f64,
) -> (Network, AdamState) {
    state.step(&mut net, grads, lr);
    (net, state)
}

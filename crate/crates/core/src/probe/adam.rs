use crate::error::{Error, Result};
use crate::probe::{LinearProbe, LossGrad, TrainConfig};

/// First and second moment accumulators for every probe parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m_w: Vec<f64>,
    pub v_w: Vec<f64>,
    pub m_b: Vec<f64>,
    pub v_b: Vec<f64>,
    /// Number of completed steps.
    pub t: u64,
}

impl AdamState {
    pub fn new(probe: &LinearProbe) -> Self {
        AdamState {
            m_w: vec![0.0; probe.weights.len()],
            v_w: vec![0.0; probe.weights.len()],
            m_b: vec![0.0; probe.bias.len()],
            v_b: vec![0.0; probe.bias.len()],
            t: 0,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    cfg: &TrainConfig,
    correction1: f64,
    correction2: f64,
    decay: bool,
) {
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / correction1;
        let v_hat = v[i] / correction2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        if decay {
            params[i] -= cfg.learning_rate * cfg.weight_decay * params[i];
        }
    }
}

/// One Adam step with bias correction, then decoupled weight decay
/// `θ ← θ − lr·wd·θ` on the weights (the bias is not decayed).
pub fn adam_step(probe: &mut LinearProbe, grads: &LossGrad, state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    if grads.grad_w.len() != probe.weights.len()
        || grads.grad_b.len() != probe.bias.len()
        || state.m_w.len() != probe.weights.len()
        || state.m_b.len() != probe.bias.len()
    {
        return Err(Error::invalid(
            "gradient or optimizer state shape does not match the probe",
        ));
    }
    if grads.grad_w.iter().chain(&grads.grad_b).any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: "in gradients".into(),
        });
    }
    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - config.beta1.powf(t);
    let c2 = 1.0 - config.beta2.powf(t);
    update(
        &mut probe.weights,
        &grads.grad_w,
        &mut state.m_w,
        &mut state.v_w,
        config,
        c1,
        c2,
        true,
    );
    update(
        &mut probe.bias,
        &grads.grad_b,
        &mut state.m_b,
        &mut state.v_b,
        config,
        c1,
        c2,
        false,
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::LabelSpace;

    fn probe(w: Vec<f64>, b: Vec<f64>) -> LinearProbe {
        let space = LabelSpace::new("t", vec!["a".into(), "b".into()]).unwrap();
        let d = w.len() / 2;
        LinearProbe::from_parts(space, d, w, b).unwrap()
    }

    fn grads(w: Vec<f64>, b: Vec<f64>) -> LossGrad {
        LossGrad {
            loss: 0.0,
            grad_w: w,
            grad_b: b,
            correct: 0,
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = probe(vec![0.5, 0.5], vec![0.5, 0.5]);
        let mut s = AdamState::new(&p);
        let cfg = TrainConfig::default();
        adam_step(&mut p, &grads(vec![1.0, 0.0], vec![1.0, 0.0]), &mut s, &cfg).unwrap();
        let lr = cfg.learning_rate;
        let step = lr / (1.0 + cfg.epsilon);
        assert!((p.bias[0] - (0.5 - step)).abs() < 1e-15);
        let decayed = (0.5 - step) * (1.0 - lr * cfg.weight_decay);
        assert!((p.weights[0] - decayed).abs() < 1e-15);
        assert!((0.5 - p.weights[0] - 1e-4).abs() < 1e-7);
        // A zero gradient leaves the bias alone; the weight only decays.
        assert_eq!(p.bias[1], 0.5);
        assert_eq!(p.weights[1], 0.5 * (1.0 - lr * cfg.weight_decay));
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_without_decay_is_fixed_point() {
        let mut p = probe(vec![0.3, -0.2], vec![0.1, 0.7]);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        for _ in 0..5 {
            adam_step(&mut p, &grads(vec![0.0; 2], vec![0.0; 2]), &mut s, &cfg).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn rejects_non_finite_and_misshaped() {
        let mut p = probe(vec![0.0; 2], vec![0.0; 2]);
        let mut s = AdamState::new(&p);
        let cfg = TrainConfig::default();
        assert!(adam_step(&mut p, &grads(vec![f64::NAN, 0.0], vec![0.0; 2]), &mut s, &cfg).is_err());
        assert!(adam_step(&mut p, &grads(vec![0.0; 3], vec![0.0; 2]), &mut s, &cfg).is_err());
        assert_eq!(s.t, 0);
    }
}

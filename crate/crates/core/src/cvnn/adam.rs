use num_complex::Complex;

use super::params::{Gradients, ParamKind, ParamStore};
use crate::complex::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning-rate factor applied at every epoch boundary.
    pub gamma: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            gamma: 0.995,
        }
    }
}

/// Adam moments over real components, laid out like the parameter store.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    config: AdamConfig,
    step: u64,
    lr: f64,
    m: Vec<Vec<Complex<f64>>>,
    v: Vec<Vec<Complex<f64>>>,
}

impl OptimizerState {
    pub fn new<T: Real>(params: &ParamStore<T>, config: AdamConfig) -> Result<Self> {
        if !(config.lr > 0.0) || !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(Error::InvalidArgument(format!("invalid Adam settings {config:?}")));
        }
        let zeros: Vec<Vec<Complex<f64>>> = params.iter().map(|(_, p)| vec![Complex::default(); p.values.len()]).collect();
        Ok(Self {
            config,
            step: 0,
            lr: config.lr,
            m: zeros.clone(),
            v: zeros,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// Multiplies the learning rate by `gamma`.
    pub fn end_epoch(&mut self) {
        self.lr *= self.config.gamma;
    }
}

/// One bias-corrected Adam update. Each real component has its own moments.
pub fn adam_step<T: Real>(params: &mut ParamStore<T>, grads: &Gradients<T>, state: &mut OptimizerState) -> Result<()> {
    let layout_ok = grads.tensors().len() == state.m.len()
        && params.iter().zip(grads.tensors()).all(|((_, p), g)| p.values.len() == g.len());
    if !layout_ok {
        return Err(Error::shape("gradients laid out like the parameters", "a different layout"));
    }
    if let Some((t, index)) = grads.first_non_finite() {
        let param = params.iter().nth(t).map(|(_, p)| p.name.clone()).unwrap_or_default();
        return Err(Error::NonFiniteGradient { param, index });
    }
    let c = state.config;
    state.step += 1;
    let bc1 = 1.0 - c.beta1.powi(state.step as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step as i32);
    let lr = state.lr;
    let upd = |m: &mut f64, v: &mut f64, g: f64| -> f64 {
        *m = c.beta1 * *m + (1.0 - c.beta1) * g;
        *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
        lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps)
    };
    let kinds: Vec<ParamKind> = params.iter().map(|(_, p)| p.kind).collect();
    for (i, p) in params.params_mut().iter_mut().enumerate() {
        let g = &grads.tensors()[i];
        for (j, z) in p.values.iter_mut().enumerate() {
            let (m, v) = (&mut state.m[i][j], &mut state.v[i][j]);
            let dre = upd(&mut m.re, &mut v.re, g[j].re.f64());
            z.re = T::of(z.re.f64() - dre);
            if kinds[i] == ParamKind::Complex {
                let dim = upd(&mut m.im, &mut v.im, g[j].im.f64());
                z.im = T::of(z.im.f64() - dim);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("x", vec![1], ParamKind::Real, vec![Complex::new(v, 0.0)]);
        s
    }

    fn grad(store: &ParamStore<f64>, g: f64) -> Gradients<f64> {
        let mut gr = Gradients::zeros_like(store);
        gr.get_mut(store.find("x").unwrap())[0] = Complex::new(g, 0.0);
        gr
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = scalar(0.7);
        let mut st = OptimizerState::new(&s, AdamConfig::default()).unwrap();
        let g = grad(&s, 0.0);
        for _ in 0..3 {
            adam_step(&mut s, &g, &mut st).unwrap();
        }
        assert_eq!(s.component(0), 0.7);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02] {
            let mut s = scalar(1.0);
            let mut st = OptimizerState::new(&s, AdamConfig::default()).unwrap();
            let gr = grad(&s, g);
            adam_step(&mut s, &gr, &mut st).unwrap();
            // m_hat = g and v_hat = g^2 after bias correction
            let expect = 1.0 - 1e-4 * g / (g.abs() + 1e-8);
            assert!((s.component(0) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn lr_decays_per_epoch_only() {
        let mut s = scalar(1.0);
        let mut st = OptimizerState::new(&s, AdamConfig::default()).unwrap();
        for _ in 0..5 {
            let gr = grad(&s, 1.0);
            adam_step(&mut s, &gr, &mut st).unwrap();
        }
        assert_eq!(st.lr(), 1e-4);
        st.end_epoch();
        st.end_epoch();
        assert!((st.lr() - 1e-4 * 0.995 * 0.995).abs() < 1e-18);
    }

    #[test]
    fn rejects_non_finite() {
        let mut s = scalar(1.0);
        let mut st = OptimizerState::new(&s, AdamConfig::default()).unwrap();
        let gr = grad(&s, f64::NAN);
        let err = adam_step(&mut s, &gr, &mut st).unwrap_err();
        assert!(matches!(&err, Error::NonFiniteGradient { param, index: 0 } if param == "x"));
        assert_eq!(s.component(0), 1.0);
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn real_parameters_keep_zero_imaginary_part() {
        let mut s = scalar(1.0);
        let mut st = OptimizerState::new(&s, AdamConfig::default()).unwrap();
        let mut g = grad(&s, 1.0);
        g.get_mut(s.find("x").unwrap())[0].im = 5.0;
        adam_step(&mut s, &g, &mut st).unwrap();
        assert_eq!(s.values(s.find("x").unwrap())[0].im, 0.0);
    }
}

//! Implicit trajectory network: a small MLP mapping normalized time to joint
//! angles, with sinusoidal time encoding and limit-respecting output
//! squashing.
//!
//! The output layer passes through a per-DOF logistic map onto
//! `[min, max]`, so every evaluation satisfies the joint limits by
//! construction: zero weights put every DOF at the midpoint of its range.

use serde::{Deserialize, Serialize};

use crate::ad::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::Tanh
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    /// Output dimension; must equal the model DOF count.
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    /// Number of sinusoidal frequency pairs prepended to raw time.
    pub fourier_pairs: usize,
}

impl MlpSpec {
    pub fn new(hidden: Vec<usize>, output_dim: usize, fourier_pairs: usize) -> Self {
        MlpSpec {
            hidden,
            output_dim,
            activation: Activation::Tanh,
            fourier_pairs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_dim == 0 {
            return Err(Error::Config("MLP output_dim must be positive".into()));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config("MLP hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Input feature count: raw t plus sin/cos pairs.
    pub fn input_dim(&self) -> usize {
        1 + 2 * self.fourier_pairs
    }

    /// Layer shapes as (fan_in, fan_out) pairs, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim()];
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Total parameter count (row-major weights then biases, per layer).
    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(i, o)| i * o + o)
            .sum()
    }
}

/// Sinusoidal time features: `[t, sin(2 pi f_i t), cos(2 pi f_i t), ...]`
/// with geometrically spaced frequencies `f_i = 0.5 * 2^i` cycles over the
/// normalized span.
pub fn encode_time(t: f64, pairs: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(1 + 2 * pairs);
    v.push(t);
    let tau = std::f64::consts::TAU;
    for i in 0..pairs {
        let f = 0.5 * (1u64 << i) as f64;
        v.push((tau * f * t).sin());
        v.push((tau * f * t).cos());
    }
    v
}

/// Seeded parameter initialization: Xavier-uniform hidden layers, zero output
/// layer (so the initial trajectory sits at the limit midpoints).
pub fn init_params(spec: &MlpSpec, rng: &mut impl rand::Rng) -> Vec<f64> {
    let shapes = spec.layer_shapes();
    let mut params = Vec::with_capacity(spec.param_count());
    for (li, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let last = li == shapes.len() - 1;
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            params.push(if last { 0.0 } else { rng.gen_range(-bound..bound) });
        }
        for _ in 0..fan_out {
            params.push(0.0);
        }
    }
    params
}

fn sigmoid<S: Real>(x: S) -> S {
    ((-x).exp() + 1.0).rdiv(1.0)
}

/// Evaluate the network at normalized time `t` in `[0, 1]`.
///
/// `limits` provides the per-DOF `(min, max)` squashing targets; its length
/// must equal `output_dim`. Times outside `[0, 1]` are clamped (with a
/// warning) rather than rejected.
pub fn mlp_eval<S: Real>(
    spec: &MlpSpec,
    phi: &[S],
    limits: &[(f64, f64)],
    t: f64,
) -> Result<Vec<S>> {
    if limits.len() != spec.output_dim {
        return Err(Error::DimensionMismatch {
            context: "mlp limits",
            expected: spec.output_dim,
            got: limits.len(),
        });
    }
    if phi.len() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            context: "mlp params",
            expected: spec.param_count(),
            got: phi.len(),
        });
    }
    let t = if (0.0..=1.0).contains(&t) {
        t
    } else {
        log::warn!("mlp_eval: time {t} outside [0,1], clamping");
        t.clamp(0.0, 1.0)
    };

    let features = encode_time(t, spec.fourier_pairs);
    let shapes = spec.layer_shapes();
    let mut offset = 0usize;

    // First layer consumes plain-f64 features.
    let (fan_in, fan_out) = shapes[0];
    let mut h: Vec<S> = Vec::with_capacity(fan_out);
    for o in 0..fan_out {
        let w = &phi[offset + o * fan_in..offset + (o + 1) * fan_in];
        h.push(S::dot_mixed(w, &features) + phi[offset + fan_in * fan_out + o] * 1.0);
    }
    offset += fan_in * fan_out + fan_out;
    if shapes.len() > 1 {
        h = h.into_iter().map(|x| activate(spec.activation, x)).collect();
    }

    for (li, &(fan_in, fan_out)) in shapes.iter().enumerate().skip(1) {
        let mut next: Vec<S> = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let w = &phi[offset + o * fan_in..offset + (o + 1) * fan_in];
            next.push(S::dot(w, &h) + phi[offset + fan_in * fan_out + o] * 1.0);
        }
        offset += fan_in * fan_out + fan_out;
        let last = li == shapes.len() - 1;
        h = if last {
            next
        } else {
            next.into_iter().map(|x| activate(spec.activation, x)).collect()
        };
    }

    Ok(h
        .into_iter()
        .zip(limits)
        .map(|(y, &(lo, hi))| sigmoid(y) * (hi - lo) + lo)
        .collect())
}

fn activate<S: Real>(kind: Activation, x: S) -> S {
    match kind {
        Activation::Tanh => x.tanh(),
        Activation::Softplus => (x.exp() + 1.0).ln(),
    }
}

/// Offset of the output layer's parameters in the flat block.
pub fn output_layer_offset(spec: &MlpSpec) -> usize {
    let shapes = spec.layer_shapes();
    shapes[..shapes.len() - 1]
        .iter()
        .map(|(i, o)| i * o + o)
        .sum()
}

/// Pre-output representation at time `t` (plain path): the activations fed
/// into the output layer. Used to seed the output layer by ridge regression
/// against target angles.
pub fn hidden_features(spec: &MlpSpec, phi: &[f64], t: f64) -> Vec<f64> {
    let t = t.clamp(0.0, 1.0);
    let mut h = encode_time(t, spec.fourier_pairs);
    let shapes = spec.layer_shapes();
    let mut offset = 0usize;
    for &(fan_in, fan_out) in &shapes[..shapes.len() - 1] {
        let mut next = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let w = &phi[offset + o * fan_in..offset + (o + 1) * fan_in];
            let pre = f64::dot_mixed(w, &h) + phi[offset + fan_in * fan_out + o];
            next.push(activate(spec.activation, pre));
        }
        offset += fan_in * fan_out + fan_out;
        h = next;
    }
    h
}

/// Inverse of the output squashing: the pre-activation that maps to `theta`
/// under the `(lo, hi)` logistic, clamped away from the asymptotes.
pub fn squash_inverse(theta: f64, lo: f64, hi: f64) -> f64 {
    let p = ((theta - lo) / (hi - lo)).clamp(1e-3, 1.0 - 1e-3);
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng as _, SeedableRng as _};

    fn spec() -> MlpSpec {
        MlpSpec::new(vec![16, 16], 4, 4)
    }

    fn limits() -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0), (0.0, 2.0), (-0.5, 0.5), (-3.0, 1.0)]
    }

    #[test]
    fn zero_params_give_limit_midpoints() {
        let s = spec();
        let phi = vec![0.0; s.param_count()];
        for t in [0.0, 0.3, 1.0] {
            let out = mlp_eval(&s, &phi, &limits(), t).unwrap();
            let mid: Vec<f64> = limits().iter().map(|(lo, hi)| (lo + hi) / 2.0).collect();
            for (o, m) in out.iter().zip(&mid) {
                assert!((o - m).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn output_dim_mismatch_is_an_error() {
        let s = spec();
        let phi = vec![0.0; s.param_count()];
        let wrong = vec![(-1.0, 1.0); 3];
        assert!(mlp_eval(&s, &phi, &wrong, 0.5).is_err());
    }

    #[test]
    fn param_count_matches_layout() {
        let s = MlpSpec::new(vec![8], 3, 2);
        // input 5 -> 8 -> 3: 5*8+8 + 8*3+3 = 48 + 27
        assert_eq!(s.input_dim(), 5);
        assert_eq!(s.param_count(), 75);
        let mut rng = StdRng::seed_from_u64(1);
        assert_eq!(init_params(&s, &mut rng).len(), 75);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        /// Output continuity: nearby times give nearby angles for random
        /// parameter draws.
        #[test]
        fn output_is_continuous(seed in 0u64..u64::MAX, t in 0.0f64..0.999) {
            let s = spec();
            let mut rng = StdRng::seed_from_u64(seed);
            let mut phi = init_params(&s, &mut rng);
            for p in phi.iter_mut() {
                *p += rng.gen_range(-0.5..0.5);
            }
            let a = mlp_eval(&s, &phi, &limits(), t).unwrap();
            let b = mlp_eval(&s, &phi, &limits(), t + 1e-6).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-3);
            }
        }

        /// Limits hold for arbitrary parameters (hard property of the
        /// squashing map).
        #[test]
        fn limits_always_respected(seed in 0u64..u64::MAX, t in 0.0f64..=1.0) {
            let s = spec();
            let mut rng = StdRng::seed_from_u64(seed);
            let mut phi = init_params(&s, &mut rng);
            for p in phi.iter_mut() {
                *p += rng.gen_range(-20.0..20.0);
            }
            let out = mlp_eval(&s, &phi, &limits(), t).unwrap();
            for (v, (lo, hi)) in out.iter().zip(limits()) {
                prop_assert!(*v >= lo && *v <= hi);
            }
        }
    }

    #[test]
    fn eval_gradient_matches_finite_differences() {
        use crate::ad::value_and_grad;
        let s = MlpSpec::new(vec![6], 2, 2);
        let lims = vec![(-1.0, 1.0), (0.0, 2.0)];
        let mut rng = StdRng::seed_from_u64(5);
        let mut phi = init_params(&s, &mut rng);
        for p in phi.iter_mut() {
            *p += rng.gen_range(-0.3..0.3);
        }
        let f = |x: &[f64]| {
            let out = mlp_eval(&s, x, &lims, 0.37).unwrap();
            out[0] * 0.8 - out[1] * 0.4
        };
        let (_, g) = value_and_grad(&phi, |x| {
            let out = mlp_eval(&s, x, &lims, 0.37).unwrap();
            out[0] * 0.8 - out[1] * 0.4
        })
        .unwrap();
        for i in 0..phi.len() {
            let h = 1e-6;
            let mut xp = phi.clone();
            xp[i] += h;
            let mut xm = phi.clone();
            xm[i] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            let err = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6);
            assert!(err < 1e-5, "param {i}: ad {} fd {}", g[i], fd);
        }
    }
}

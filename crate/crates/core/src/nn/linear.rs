//! Fully connected layer with cached inputs for the backward pass.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::{dot, Tensor};

/// Weight is stored `[n_out, n_in]`: row `o` holds the fan-in of output `o`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearLayer {
    pub weight: Tensor,
    pub bias: Option<Vec<f64>>,
    #[serde(skip)]
    cached_input: Option<Tensor>,
}

/// Gradients for one layer, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weight: Tensor,
    pub bias: Option<Vec<f64>>,
}

impl LinearLayer {
    /// Uniform init on `[-1/sqrt(n_in), 1/sqrt(n_in)]`.
    pub fn init(n_in: usize, n_out: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let data: Vec<f64> = (0..n_out * n_in)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        LinearLayer {
            weight: Tensor::new(vec![n_out, n_in], data).expect("init shape is consistent"),
            bias: bias.then(|| {
                (0..n_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect()
            }),
            cached_input: None,
        }
    }

    pub fn n_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn n_out(&self) -> usize {
        self.weight.rows()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape().len() != 2 || input.cols() != self.n_in() {
            return Err(Error::shape(
                "LinearLayer forward",
                format!("[B, {}]", self.n_in()),
                format!("{:?}", input.shape()),
            ));
        }
        Ok(())
    }

    /// `y = x W^T + b`, remembering `x` for [`LinearLayer::backward`].
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let out = self.forward_inference(input)?;
        self.cached_input = Some(input.clone());
        Ok(out)
    }

    /// Forward without touching the cache; usable through `&self`.
    pub fn forward_inference(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let batch = input.rows();
        let n_out = self.n_out();
        let mut out = Tensor::zeros(vec![batch, n_out]);
        for b in 0..batch {
            let x = input.row(b);
            let row = out.row_mut(b);
            for o in 0..n_out {
                let mut acc = dot(self.weight.row(o), x);
                if let Some(bias) = &self.bias {
                    acc += bias[o];
                }
                row[o] = acc;
            }
        }
        Ok(out)
    }

    /// Consumes the cached input and returns `(parameter grads, input grad)`.
    ///
    /// Pure chain rule: `dW = g^T x`, `db = sum_b g`, `dx = g W`. No batch
    /// normalisation of any kind happens here; if the loss is a mean over the
    /// batch that factor must already be inside `grad_out`.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<(LayerGrads, Tensor)> {
        let input = self.cached_input.take().ok_or_else(|| {
            Error::State("LinearLayer::backward called without a cached forward".into())
        })?;
        let (n_out, n_in) = (self.n_out(), self.n_in());
        if grad_out.shape() != [input.rows(), n_out] {
            return Err(Error::shape(
                "LinearLayer backward",
                format!("[{}, {n_out}]", input.rows()),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let mut d_weight = Tensor::zeros(vec![n_out, n_in]);
        let mut d_bias = self.bias.as_ref().map(|_| vec![0.0; n_out]);
        let mut d_input = Tensor::zeros(vec![input.rows(), n_in]);
        for b in 0..input.rows() {
            let g = grad_out.row(b);
            let x = input.row(b);
            for o in 0..n_out {
                let go = g[o];
                let w_row = d_weight.row_mut(o);
                for i in 0..n_in {
                    w_row[i] += go * x[i];
                }
                if let Some(db) = &mut d_bias {
                    db[o] += go;
                }
            }
            let dx = d_input.row_mut(b);
            for o in 0..n_out {
                let go = g[o];
                let w_row = self.weight.row(o);
                for i in 0..n_in {
                    dx[i] += go * w_row[i];
                }
            }
        }
        Ok((
            LayerGrads {
                weight: d_weight,
                bias: d_bias,
            },
            d_input,
        ))
    }

    pub fn has_cached_input(&self) -> bool {
        self.cached_input.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cached_input = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn layer(weight_rows: Vec<Vec<f64>>, bias: Option<Vec<f64>>) -> LinearLayer {
        LinearLayer {
            weight: Tensor::from_rows(weight_rows).unwrap(),
            bias,
            cached_input: None,
        }
    }

    #[test]
    fn forward_matches_hand_computation() {
        let mut l = layer(
            vec![vec![1.0, 2.0], vec![-1.0, 0.5]],
            Some(vec![0.25, -0.25]),
        );
        let x = Tensor::from_rows(vec![vec![3.0, 4.0]]).unwrap();
        let y = l.forward(&x).unwrap();
        assert_eq!(y.row(0), &[3.0 + 8.0 + 0.25, -3.0 + 2.0 - 0.25]);
    }

    #[test]
    fn backward_single_sample_is_outer_product() {
        let mut l = layer(vec![vec![1.0, -2.0], vec![0.5, 1.5]], Some(vec![0.0, 0.0]));
        let x = Tensor::from_rows(vec![vec![2.0, -1.0]]).unwrap();
        l.forward(&x).unwrap();
        let g = Tensor::from_rows(vec![vec![3.0, -4.0]]).unwrap();
        let (grads, dx) = l.backward(&g).unwrap();
        // dW[o][i] = g[o] * x[i]
        assert_eq!(grads.weight.row(0), &[6.0, -3.0]);
        assert_eq!(grads.weight.row(1), &[-8.0, 4.0]);
        assert_eq!(grads.bias.as_deref(), Some(&[3.0, -4.0][..]));
        // dx[i] = sum_o g[o] * W[o][i]
        assert_eq!(dx.row(0), &[3.0 * 1.0 - 4.0 * 0.5, 3.0 * -2.0 - 4.0 * 1.5]);
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let mut l = layer(vec![vec![1.0]], None);
        let g = Tensor::from_rows(vec![vec![1.0]]).unwrap();
        assert!(matches!(l.backward(&g), Err(Error::State(_))));
    }

    #[test]
    fn backward_consumes_the_cache() {
        let mut l = layer(vec![vec![1.0]], None);
        let x = Tensor::from_rows(vec![vec![2.0]]).unwrap();
        l.forward(&x).unwrap();
        let g = Tensor::from_rows(vec![vec![1.0]]).unwrap();
        l.backward(&g).unwrap();
        assert!(l.backward(&g).is_err());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = seeded(7, "init-test");
        let l = LinearLayer::init(16, 8, true, &mut rng);
        let bound = 1.0 / 4.0;
        assert!(l.weight.data().iter().all(|w| w.abs() <= bound));
        assert!(l.bias.unwrap().iter().all(|b| b.abs() <= bound));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let mut l = layer(vec![vec![1.0, 2.0]], None);
        let x = Tensor::from_rows(vec![vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(l.forward(&x).is_err());
    }
}

//! Fully connected network drift trained on the trajectory likelihood.
//!
//! Inputs are shifted and scaled to roughly `[-1, 1]` using the training
//! domain; the shift and scale are part of the model and are persisted with it.
//! Weights are one flat vector, layer by layer: `W` (`out × in`, row-major) then `b`.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::check_dims;
use super::optim::{OptimizerConfig, Stepper};
use crate::basis::build_domain;
use crate::dynamics::{CovarianceModel, Drift, Ensemble};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightInit {
    /// Xavier-uniform weights, zero biases.
    #[default]
    ScaledUniform,
    Zero,
}

/// Network shape and training schedule; everything `fit_mlp` needs besides the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub output_bias: bool,
    pub init: WeightInit,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            output_bias: true,
            init: WeightInit::ScaledUniform,
            epochs: 200,
            batch_size: 1024,
        }
    }
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: usize,
    pub steps: usize,
    /// Full-data loss after each epoch.
    pub loss_history: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpDrift {
    widths: Vec<usize>,
    activation: Activation,
    output_bias: bool,
    input_center: Vec<f64>,
    input_scale: Vec<f64>,
    weights: Vec<f64>,
    report: Option<TrainingReport>,
}

struct LayerShape {
    rows: usize,
    cols: usize,
    w_offset: usize,
    b_offset: Option<usize>,
}

fn layer_shapes(widths: &[usize], output_bias: bool) -> (Vec<LayerShape>, usize) {
    let mut shapes = Vec::with_capacity(widths.len() - 1);
    let mut offset = 0;
    for (li, w) in widths.windows(2).enumerate() {
        let (cols, rows) = (w[0], w[1]);
        let w_offset = offset;
        offset += rows * cols;
        let last = li + 2 == widths.len();
        let b_offset = if !last || output_bias {
            let b = offset;
            offset += rows;
            Some(b)
        } else {
            None
        };
        shapes.push(LayerShape {
            rows,
            cols,
            w_offset,
            b_offset,
        });
    }
    (shapes, offset)
}

/// Number of parameters for layer widths `[d, h_1, …, d]`.
pub fn parameter_count(widths: &[usize], output_bias: bool) -> usize {
    layer_shapes(widths, output_bias).1
}

impl MlpDrift {
    pub fn new(
        widths: Vec<usize>,
        activation: Activation,
        output_bias: bool,
        input_center: Vec<f64>,
        input_scale: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(
                "network needs input and output layers of positive width",
            ));
        }
        let d = widths[0];
        if widths[widths.len() - 1] != d {
            return Err(Error::invalid(
                "network output width must equal input width",
            ));
        }
        if input_center.len() != d || input_scale.len() != d {
            return Err(Error::invalid(
                "input normalization must have one entry per dimension",
            ));
        }
        if input_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("input scales must be positive"));
        }
        let expected = parameter_count(&widths, output_bias);
        if weights.len() != expected {
            return Err(Error::invalid(format!(
                "network has {expected} parameters, found {}",
                weights.len()
            )));
        }
        if weights.iter().chain(&input_center).any(|w| !w.is_finite()) {
            return Err(Error::invalid("network weights must be finite"));
        }
        Ok(Self {
            widths,
            activation,
            output_bias,
            input_center,
            input_scale,
            weights,
            report: None,
        })
    }

    /// Fresh network for `spec`, normalized to the box `[lo, hi]`.
    pub fn initialize(spec: &MlpSpec, lo: &[f64], hi: &[f64], seed: u64) -> Result<Self> {
        spec.validate()?;
        let d = lo.len();
        let mut widths = vec![d];
        widths.extend_from_slice(&spec.hidden);
        widths.push(d);
        let center = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let scale = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| if b > a { 0.5 * (b - a) } else { 1.0 })
            .collect();
        let (shapes, count) = layer_shapes(&widths, spec.output_bias);
        let mut weights = vec![0.0; count];
        if spec.init == WeightInit::ScaledUniform {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for s in &shapes {
                let bound = (6.0 / (s.rows + s.cols) as f64).sqrt();
                for w in &mut weights[s.w_offset..s.w_offset + s.rows * s.cols] {
                    *w = rng.random_range(-bound..bound);
                }
            }
        }
        Self::new(
            widths,
            spec.activation,
            spec.output_bias,
            center,
            scale,
            weights,
        )
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_bias(&self) -> bool {
        self.output_bias
    }

    pub fn input_center(&self) -> &[f64] {
        &self.input_center
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn with_report(mut self, report: TrainingReport) -> Self {
        self.report = Some(report);
        self
    }

    pub fn report(&self) -> Option<&TrainingReport> {
        self.report.as_ref()
    }

    fn shapes(&self) -> Vec<LayerShape> {
        layer_shapes(&self.widths, self.output_bias).0
    }

    fn normalized_batch(
        &self,
        rows: impl ExactSizeIterator<Item = impl AsRef<[f64]>>,
    ) -> Array2<f64> {
        let d = self.widths[0];
        let mut x = Array2::zeros((rows.len(), d));
        for (mut row, src) in x.rows_mut().into_iter().zip(rows) {
            for k in 0..d {
                row[k] = (src.as_ref()[k] - self.input_center[k]) / self.input_scale[k];
            }
        }
        x
    }

    /// Layer outputs for a normalized input batch; the last entry is the network output.
    fn forward(&self, input: Array2<f64>) -> Vec<Array2<f64>> {
        let shapes = self.shapes();
        let mut acts = Vec::with_capacity(shapes.len() + 1);
        acts.push(input);
        for (li, s) in shapes.iter().enumerate() {
            let w = ArrayView2::from_shape(
                (s.rows, s.cols),
                &self.weights[s.w_offset..s.w_offset + s.rows * s.cols],
            )
            .expect("layer shape");
            let mut z = acts[li].dot(&w.t());
            if let Some(b) = s.b_offset {
                let bias = ndarray::ArrayView1::from(&self.weights[b..b + s.rows]);
                z += &bias;
            }
            if li + 1 < shapes.len() {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            acts.push(z);
        }
        acts
    }

    /// Backpropagates `dL/d(output)` and accumulates into `grad`.
    fn backward(&self, acts: &[Array2<f64>], upstream: Array2<f64>, grad: &mut [f64]) {
        let shapes = self.shapes();
        let mut delta = upstream;
        for li in (0..shapes.len()).rev() {
            let s = &shapes[li];
            if li + 1 < shapes.len() {
                let act = self.activation;
                ndarray::Zip::from(&mut delta)
                    .and(&acts[li + 1])
                    .for_each(|dl, &a| *dl *= act.derivative_from_output(a));
            }
            let dw = delta.t().dot(&acts[li]);
            for (g, v) in grad[s.w_offset..s.w_offset + s.rows * s.cols]
                .iter_mut()
                .zip(dw.iter())
            {
                *g += v;
            }
            if let Some(b) = s.b_offset {
                let db = delta.sum_axis(Axis(0));
                for (g, v) in grad[b..b + s.rows].iter_mut().zip(db.iter()) {
                    *g += v;
                }
            }
            if li > 0 {
                let w = ArrayView2::from_shape(
                    (s.rows, s.cols),
                    &self.weights[s.w_offset..s.w_offset + s.rows * s.cols],
                )
                .expect("layer shape");
                delta = delta.dot(&w);
            }
        }
    }
}

impl Drift for MlpDrift {
    fn dim(&self) -> usize {
        self.widths[0]
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let shapes = self.shapes();
        let d = self.widths[0];
        let mut a: Vec<f64> = (0..d)
            .map(|k| (x[k] - self.input_center[k]) / self.input_scale[k])
            .collect();
        for (li, s) in shapes.iter().enumerate() {
            let mut z = vec![0.0; s.rows];
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &self.weights[s.w_offset + r * s.cols..s.w_offset + (r + 1) * s.cols];
                *zr = row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>()
                    + s.b_offset.map_or(0.0, |b| self.weights[b + r]);
                if li + 1 < shapes.len() {
                    *zr = self.activation.apply(*zr);
                }
            }
            a = z;
        }
        out.copy_from_slice(&a);
    }
}

/// Per-pair training data: state, increment, step, and `1/σ_k²(x)`.
struct Pairs {
    dim: usize,
    x: Vec<f64>,
    dx: Vec<f64>,
    dt: Vec<f64>,
    inv_var: Vec<f64>,
}

impl Pairs {
    fn collect(ens: &Ensemble, cov: &CovarianceModel) -> Result<Self> {
        let d = ens.dim();
        let steps = ens.grid().steps();
        let total = ens.len() * steps;
        let mut p = Pairs {
            dim: d,
            x: Vec::with_capacity(total * d),
            dx: Vec::with_capacity(total * d),
            dt: Vec::with_capacity(total),
            inv_var: vec![0.0; total * d],
        };
        let mut row = 0;
        for tr in ens.trajectories() {
            let s = tr.states();
            for l in 0..steps {
                let x = &s[l * d..(l + 1) * d];
                p.x.extend_from_slice(x);
                p.dx.extend((0..d).map(|k| s[(l + 1) * d + k] - x[k]));
                p.dt.push(ens.grid().dt(l));
                cov.inverse_variances_at(x, &mut p.inv_var[row * d..(row + 1) * d])?;
                row += 1;
            }
        }
        Ok(p)
    }

    fn len(&self) -> usize {
        self.dt.len()
    }

    fn state(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// Loss contribution of the listed pairs times `scale`, with `dL/df` per row.
    fn loss_and_upstream(
        &self,
        rows: &[usize],
        out: &Array2<f64>,
        scale: f64,
    ) -> (f64, Array2<f64>) {
        let d = self.dim;
        let mut up = Array2::zeros(out.raw_dim());
        let mut loss = 0.0;
        for (b, &i) in rows.iter().enumerate() {
            let dt = self.dt[i];
            for k in 0..d {
                let f = out[[b, k]];
                let w = self.inv_var[i * d + k];
                let dx = self.dx[i * d + k];
                loss += w * (0.5 * f * f * dt - f * dx);
                up[[b, k]] = scale * w * (f * dt - dx);
            }
        }
        (loss * scale, up)
    }
}

fn check_diagonal(cov: &CovarianceModel) -> Result<()> {
    if cov.is_diagonal() {
        Ok(())
    } else {
        Err(Error::invalid(
            "network fitting supports scalar or diagonal covariance",
        ))
    }
}

/// Full-data loss and its gradient with respect to every network weight.
pub fn mlp_loss_and_gradient(
    net: &MlpDrift,
    ens: &Ensemble,
    cov: &CovarianceModel,
) -> Result<(f64, Vec<f64>)> {
    check_dims(net.dim(), ens, cov)?;
    check_diagonal(cov)?;
    let pairs = Pairs::collect(ens, cov)?;
    Ok(full_loss_and_gradient(net, &pairs, ens, true))
}

fn full_loss_and_gradient(
    net: &MlpDrift,
    pairs: &Pairs,
    ens: &Ensemble,
    with_grad: bool,
) -> (f64, Vec<f64>) {
    const BLOCK: usize = 4096;
    let scale = 1.0 / (ens.grid().t_end() * ens.len() as f64);
    let mut grad = vec![0.0; if with_grad { net.weights.len() } else { 0 }];
    let mut loss = 0.0;
    let all: Vec<usize> = (0..pairs.len()).collect();
    for rows in all.chunks(BLOCK) {
        let input = net.normalized_batch(rows.iter().map(|&i| pairs.state(i)));
        let acts = net.forward(input);
        let (l, up) = pairs.loss_and_upstream(rows, &acts[acts.len() - 1], scale);
        loss += l;
        if with_grad {
            net.backward(&acts, up, &mut grad);
        }
    }
    (loss, grad)
}

/// Trains a network drift with mini-batch GD or Adam over shuffled `(m, l)` pairs.
///
/// Each batch loss is rescaled to an unbiased estimate of the full-data loss.
/// Deterministic for a fixed `opt.seed`.
pub fn fit_mlp(
    ens: &Ensemble,
    cov: &CovarianceModel,
    spec: &MlpSpec,
    opt: &OptimizerConfig,
) -> Result<MlpDrift> {
    check_dims(ens.dim(), ens, cov)?;
    check_diagonal(cov)?;
    opt.validate()?;
    let domain = build_domain(ens, 0.0)?;
    let mut net = MlpDrift::initialize(spec, domain.lo(), domain.hi(), opt.seed)?;
    train(&mut net, ens, cov, spec, opt)?;
    Ok(net)
}

/// Continues training an existing network in place.
pub fn train(
    net: &mut MlpDrift,
    ens: &Ensemble,
    cov: &CovarianceModel,
    spec: &MlpSpec,
    opt: &OptimizerConfig,
) -> Result<()> {
    check_dims(net.dim(), ens, cov)?;
    check_diagonal(cov)?;
    spec.validate()?;
    opt.validate()?;
    let pairs = Pairs::collect(ens, cov)?;
    let total = pairs.len();
    let batch = spec.batch_size.min(total);
    let full_scale = 1.0 / (ens.grid().t_end() * ens.len() as f64);
    let batch_scale = full_scale * total as f64 / batch as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..total).collect();
    let mut stepper = Stepper::new(opt, net.weights.len());
    let mut grad = vec![0.0; net.weights.len()];
    let mut history = Vec::with_capacity(spec.epochs);
    let mut prev = full_loss_and_gradient(net, &pairs, ens, false).0;
    let mut steps = 0;
    let mut converged = false;

    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(batch) {
            if rows.len() < batch {
                // ragged tail would bias the rescaled estimate
                break;
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            let input = net.normalized_batch(rows.iter().map(|&i| pairs.state(i)));
            let acts = net.forward(input);
            let (_, up) = pairs.loss_and_upstream(rows, &acts[acts.len() - 1], batch_scale);
            net.backward(&acts, up, &mut grad);
            stepper.step(&mut net.weights, &grad);
            steps += 1;
        }
        let loss = full_loss_and_gradient(net, &pairs, ens, false).0;
        if !loss.is_finite() || net.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged {
                iteration: epoch + 1,
                loss,
            });
        }
        history.push(loss);
        let decrease = prev - loss;
        prev = loss;
        if decrease >= 0.0 && decrease < opt.tolerance {
            converged = true;
            break;
        }
    }
    net.report = Some(TrainingReport {
        epochs: history.len(),
        steps,
        loss_history: history,
        converged,
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TimeGrid;
    use crate::estimator::empirical_loss;

    fn toy_data() -> Ensemble {
        let grid = TimeGrid::uniform(1.0, 0.1).unwrap();
        let a: Vec<Vec<f64>> = grid.times().iter().map(|t| vec![1.0 + t.sin()]).collect();
        let b: Vec<Vec<f64>> = grid
            .times()
            .iter()
            .map(|t| vec![3.0 - 0.7 * t * t])
            .collect();
        Ensemble::from_states(grid, &[a, b]).unwrap()
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(
            parameter_count(&[1, 64, 64, 1], true),
            64 + 64 + 64 * 64 + 64 + 64 + 1
        );
        assert_eq!(parameter_count(&[1, 1, 1], false), 3);
    }

    #[test]
    fn batch_forward_matches_pointwise_eval() {
        let spec = MlpSpec {
            hidden: vec![5, 4],
            ..Default::default()
        };
        let net = MlpDrift::initialize(&spec, &[0.0, -1.0], &[2.0, 3.0], 9).unwrap();
        let pts = [vec![0.3, 0.1], vec![1.9, -0.5], vec![1.0, 2.5]];
        let acts = net.forward(net.normalized_batch(pts.iter()));
        let out = &acts[acts.len() - 1];
        for (r, p) in pts.iter().enumerate() {
            let v = net.eval(p);
            for k in 0..2 {
                assert!((out[[r, k]] - v[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn full_loss_matches_empirical_loss() {
        let ens = toy_data();
        let cov = CovarianceModel::scalar(1, 0.6).unwrap();
        let spec = MlpSpec {
            hidden: vec![3],
            ..Default::default()
        };
        let net = MlpDrift::initialize(&spec, &[0.0], &[4.0], 1).unwrap();
        let (loss, _) = mlp_loss_and_gradient(&net, &ens, &cov).unwrap();
        let direct = empirical_loss(&net, &ens, &cov).unwrap();
        assert!((loss - direct).abs() < 1e-13 * direct.abs().max(1.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ens = toy_data();
        let cov = CovarianceModel::scalar(1, 0.6).unwrap();
        let spec = MlpSpec {
            hidden: vec![3, 2],
            ..Default::default()
        };
        let net = MlpDrift::initialize(&spec, &[0.0], &[4.0], 5).unwrap();
        let (_, grad) = mlp_loss_and_gradient(&net, &ens, &cov).unwrap();
        let h = 1e-6;
        for i in 0..net.weights().len() {
            let mut plus = net.clone();
            plus.weights_mut()[i] += h;
            let mut minus = net.clone();
            minus.weights_mut()[i] -= h;
            let fd = (empirical_loss(&plus, &ens, &cov).unwrap()
                - empirical_loss(&minus, &ens, &cov).unwrap())
                / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-6 * grad[i].abs().max(1e-2),
                "weight {i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn zero_init_on_still_data_stays_put() {
        let grid = TimeGrid::uniform(1.0, 0.1).unwrap();
        let ens = Ensemble::from_states(grid, &[vec![vec![1.0]; 11], vec![vec![2.0]; 11]]).unwrap();
        let cov = CovarianceModel::scalar(1, 0.6).unwrap();
        let spec = MlpSpec {
            hidden: vec![4],
            init: WeightInit::Zero,
            epochs: 3,
            batch_size: 4,
            ..Default::default()
        };
        let net = fit_mlp(&ens, &cov, &spec, &OptimizerConfig::default()).unwrap();
        assert!(net.weights().iter().all(|w| w.abs() < 1e-12));
        assert_eq!(empirical_loss(&net, &ens, &cov).unwrap(), 0.0);
    }

    #[test]
    fn rejects_full_covariance() {
        let ens = toy_data();
        let grid = ens.grid().clone();
        let two = Ensemble::from_states(
            grid,
            &[(0..11).map(|i| vec![i as f64, 1.0 - i as f64]).collect()],
        )
        .unwrap();
        let cov = CovarianceModel::full(2, vec![1.0, 0.1, 0.1, 1.0]).unwrap();
        assert!(fit_mlp(&two, &cov, &MlpSpec::default(), &OptimizerConfig::default()).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let ens = toy_data();
        let cov = CovarianceModel::scalar(1, 0.6).unwrap();
        let spec = MlpSpec {
            hidden: vec![4],
            epochs: 5,
            batch_size: 4,
            ..Default::default()
        };
        let opt = OptimizerConfig {
            seed: 3,
            step_size: 1e-2,
            ..Default::default()
        };
        let a = fit_mlp(&ens, &cov, &spec, &opt).unwrap();
        let b = fit_mlp(&ens, &cov, &spec, &opt).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.report().unwrap().epochs, 5);
    }
}

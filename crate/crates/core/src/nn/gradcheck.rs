//! Central finite-difference verification of tape gradients.

use crate::error::{Error, Result};

use super::graph::{Graph, Var};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Half-width of the central difference.
    pub epsilon: f64,
    /// Maximum allowed relative error.
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator, so gradients that are
    /// zero up to round-off compare on an absolute scale.
    pub floor: f64,
    /// Check at most this many entries per block (evenly strided).
    pub max_entries_per_block: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-6,
            tolerance: 1e-6,
            floor: 1e-6,
            max_entries_per_block: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub block: usize,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Flat index of the entry with the largest relative error.
    pub worst_entry: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn failures(&self) -> impl Iterator<Item = &BlockReport> {
        self.blocks.iter().filter(|b| b.max_rel_error >= self.tolerance)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares tape gradients of the scalar built by `network` against central
/// finite differences, for every block in `params`.
///
/// `network` receives the graph and one [`Var`] per parameter block and
/// must return the scalar loss node. It must be pure: the same parameters
/// always give the same loss.
pub fn grad_check<F>(network: F, params: &[Tensor<f64>], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        let loss = network(&mut g, &vars)?;
        Ok(g.value(loss).data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = network(&mut g, &vars)?;
    if g.value(loss).len() != 1 {
        return Err(Error::dim("grad_check loss", g.value(loss).shape(), &[1]));
    }
    let grads = g.backward(loss);

    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut blocks = Vec::with_capacity(params.len());
    for (bi, var) in vars.iter().enumerate() {
        let len = params[bi].len();
        let zeros = vec![0.0; len];
        let analytic = grads.get(*var).unwrap_or(&zeros);
        let stride = match opts.max_entries_per_block {
            Some(k) if k > 0 && len > k => len.div_ceil(k),
            _ => 1,
        };
        let mut report = BlockReport {
            block: bi,
            checked: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_entry: 0,
        };
        for i in (0..len).step_by(stride) {
            let orig = work[bi].data()[i];
            work[bi].data_mut()[i] = orig + opts.epsilon;
            let plus = eval(&work)?;
            work[bi].data_mut()[i] = orig - opts.epsilon;
            let minus = eval(&work)?;
            work[bi].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.epsilon);
            let rel = relative_error(analytic[i], numeric, opts.floor);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max((analytic[i] - numeric).abs());
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst_entry = i;
            }
        }
        blocks.push(report);
    }
    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{glorot_uniform, rng_from_seed, GumbelNoise};
    use rand::Rng as _;

    fn random(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
        let mut rng = rng_from_seed(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_layer_matches_finite_differences() {
        let x = random(vec![5, 4], 1);
        let target = random(vec![5, 3], 2);
        let params = vec![random(vec![4, 3], 3), random(vec![3], 4)];
        let report = grad_check(
            |g, p| {
                let xv = g.param(x.clone());
                let y = g.linear(xv, p[0], p[1])?;
                let t = g.constant(target.clone());
                g.mse_loss(y, t)
            },
            &params,
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.max_rel_error() < 1e-6);
    }

    #[test]
    fn linear_input_gradient_matches_finite_differences() {
        let w = random(vec![4, 3], 5);
        let b = random(vec![3], 6);
        let report = grad_check(
            |g, p| {
                let wv = g.constant(w.clone());
                let bv = g.constant(b.clone());
                let y = g.linear(p[0], wv, bv)?;
                let z = g.constant(Tensor::zeros(vec![2, 3]));
                g.mse_loss(y, z)
            },
            &[random(vec![2, 4], 7)],
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error() < 1e-6, "{report:?}");
    }

    #[test]
    fn two_layer_relu_net_matches_finite_differences() {
        let mut rng = rng_from_seed(8);
        let x = random(vec![6, 5], 9);
        let target = random(vec![6, 2], 10);
        let params = vec![
            glorot_uniform(5, 7, &mut rng),
            random(vec![7], 11),
            glorot_uniform(7, 2, &mut rng),
            random(vec![2], 12),
        ];
        let report = grad_check(
            |g, p| {
                let xv = g.constant(x.clone());
                let h = g.linear(xv, p[0], p[1])?;
                let h = g.relu(h);
                let y = g.linear(h, p[2], p[3])?;
                let y = g.sigmoid(y);
                let t = g.constant(target.clone());
                g.mse_loss(y, t)
            },
            &params,
            GradCheckOptions {
                tolerance: 1e-5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn relu_masking_matches_finite_differences() {
        // entries kept away from the kink at zero
        let mut input = random(vec![3, 4], 13);
        for v in input.data_mut() {
            if v.abs() < 0.1 {
                *v += 0.2;
            }
        }
        let target = random(vec![3, 4], 14);
        let report = grad_check(
            |g, p| {
                let y = g.relu(p[0]);
                let t = g.constant(target.clone());
                g.mse_loss(y, t)
            },
            &[input],
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error() < 1e-6, "{report:?}");
    }

    #[test]
    fn gumbel_softmax_matches_finite_differences() {
        let noise = GumbelNoise::from_seed(vec![4, 3], 15);
        let target = random(vec![4, 3], 16);
        for tau in [1.0, 0.5] {
            let report = grad_check(
                |g, p| {
                    let y = g.gumbel_softmax(p[0], &noise, tau)?;
                    let t = g.constant(target.clone());
                    g.mse_loss(y, t)
                },
                &[random(vec![4, 3], 17)],
                GradCheckOptions {
                    tolerance: 1e-5,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(report.passed(), "tau {tau}: {report:?}");
        }
    }

    #[test]
    fn attention_readout_matches_finite_differences() {
        let objects = random(vec![2, 3, 4], 18);
        let target = random(vec![4, 4], 19);
        let report = grad_check(
            |g, p| {
                let att = g.softmax(p[0])?;
                let y = g.weighted_rows(att, p[1], 2)?;
                let t = g.constant(target.clone());
                g.mse_loss(y, t)
            },
            &[random(vec![4, 3], 20), objects],
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error() < 1e-6, "{report:?}");
    }

    #[test]
    fn interleave_column_reshape_route_gradients() {
        let target = random(vec![2, 2], 21);
        let report = grad_check(
            |g, p| {
                let s = g.interleave_rows(&[p[0], p[1]])?;
                let c = g.column(s, 1)?;
                let r = g.reshape(c, vec![2, 2])?;
                let t = g.constant(target.clone());
                g.mse_loss(r, t)
            },
            &[random(vec![2, 3], 22), random(vec![2, 3], 23)],
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error() < 1e-6, "{report:?}");
    }

    #[test]
    fn a_wrong_gradient_is_reported() {
        // one_hot_max carries no gradient, so the check must flag it
        let report = grad_check(
            |g, p| {
                let s = g.softmax(p[0])?;
                let h = g.one_hot_max(s);
                let y = g.weighted_rows(h, p[1], 1)?;
                let z = g.constant(Tensor::zeros(vec![1, 1]));
                g.mse_loss(y, z)
            },
            &[Tensor::new(vec![1, 2], vec![0.0, 1e-7]).unwrap(), random(vec![1, 2, 1], 24)],
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures().next().unwrap().block, 0);
    }
}

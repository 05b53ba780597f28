use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::nn::{glorot_uniform, rng_from_seed, Graph, GumbelNoise, Tensor, Var};
use crate::scalar::Scalar;

use super::config::FosaeConfig;
use super::state::{AttentionAssignment, PropositionalState};

/// Parameter tensors per network: first-layer weights and bias, second-layer
/// weights and bias.
const TENSORS_PER_NET: usize = 4;

/// How the categorical layers turn logits into (near) one-hot vectors.
#[derive(Debug, Clone, Copy)]
pub enum Sampling<'a, T> {
    /// Training-time Gumbel-Softmax relaxation. `attention` noise is shaped
    /// `[B·U·A, N]`, `predicates` noise `[B·U·P, 2]`.
    Gumbel {
        attention: &'a GumbelNoise<T>,
        predicates: &'a GumbelNoise<T>,
        tau: T,
    },
    /// Deterministic inference: plain argmax of the logits, no noise.
    Argmax,
}

/// Graph nodes of one forward pass over a batch of `B` observations.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// One node per parameter block, in checkpoint order.
    pub params: Vec<Var>,
    /// `[B, N, F]`
    pub input: Var,
    /// `[B·U·A, N]` attention rows, ordered batch, unit, argument.
    pub attention: Var,
    /// `[B·U·A, F]` extracted argument vectors.
    pub arguments: Var,
    /// `[B·U·P, 2]` predicate categorical outputs; column 0 means true.
    pub predicates: Var,
    /// `[B, U·P]` truth values fed to the decoder, index `u·P + p`.
    pub bottleneck: Var,
    /// `[B, N·F]`
    pub reconstruction: Var,
    /// Scalar mean squared reconstruction error.
    pub loss: Var,
}

/// Output of a single-observation [`FosaeModel::forward`].
#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub reconstruction: Tensor<T>,
    pub state: PropositionalState,
    pub attention: AttentionAssignment,
    pub loss: T,
}

/// Weights of every attention, predicate and decoder network.
///
/// Parameters live in one flat list in checkpoint order: the `U·A`
/// attention networks unit-major then argument-major, then the `P`
/// predicate networks, then the decoder. Each network contributes
/// `[w1, b1, w2, b2]` with weights stored `[in, out]`.
#[derive(Debug)]
pub struct FosaeModel<T> {
    config: FosaeConfig,
    params: Vec<Tensor<T>>,
    attention_evals: AtomicU64,
    predicate_evals: AtomicU64,
}

impl<T: Scalar> Clone for FosaeModel<T> {
    fn clone(&self) -> Self {
        FosaeModel {
            config: self.config.clone(),
            params: self.params.clone(),
            attention_evals: AtomicU64::new(0),
            predicate_evals: AtomicU64::new(0),
        }
    }
}

/// Shapes of every parameter block, in checkpoint order.
pub fn parameter_shapes(cfg: &FosaeConfig) -> Vec<Vec<usize>> {
    let (n, f) = (cfg.num_objects, cfg.num_features);
    let mut shapes = Vec::new();
    let mut net = |i: usize, h: usize, o: usize| {
        shapes.extend([vec![i, h], vec![h], vec![h, o], vec![o]]);
    };
    for _ in 0..cfg.num_units * cfg.arity {
        net(n * f, cfg.attention_hidden, n);
    }
    for _ in 0..cfg.num_predicates {
        net(cfg.arity * f, cfg.pn_hidden, 2);
    }
    net(cfg.num_propositions(), cfg.decoder_hidden, n * f);
    shapes
}

/// Human-readable name of every parameter block, in checkpoint order.
pub fn parameter_names(cfg: &FosaeConfig) -> Vec<String> {
    let parts = ["w1", "b1", "w2", "b2"];
    let mut names = Vec::new();
    for u in 0..cfg.num_units {
        for a in 0..cfg.arity {
            names.extend(parts.iter().map(|p| format!("attention[{u}][{a}].{p}")));
        }
    }
    for p in 0..cfg.num_predicates {
        names.extend(parts.iter().map(|s| format!("predicate[{p}].{s}")));
    }
    names.extend(parts.iter().map(|p| format!("decoder.{p}")));
    names
}

/// Closed-form trainable parameter count.
pub fn closed_form_parameter_count(cfg: &FosaeConfig) -> usize {
    let (n, f, u, a, p) = (
        cfg.num_objects,
        cfg.num_features,
        cfg.num_units,
        cfg.arity,
        cfg.num_predicates,
    );
    let (ha, hp, hd) = (cfg.attention_hidden, cfg.pn_hidden, cfg.decoder_hidden);
    u * a * ((n * f + 1) * ha + (ha + 1) * n)
        + p * ((a * f + 1) * hp + (hp + 1) * 2)
        + (u * p + 1) * hd
        + (hd + 1) * n * f
}

impl<T: Scalar> FosaeModel<T> {
    /// Glorot-uniform weights, zero biases, drawn from `config.seed`.
    pub fn new(config: FosaeConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(config.seed);
        let params = parameter_shapes(&config)
            .into_iter()
            .map(|shape| match shape.as_slice() {
                [i, o] => glorot_uniform(*i, *o, &mut rng),
                _ => Tensor::zeros(shape),
            })
            .collect();
        Ok(Self::assemble(config, params))
    }

    /// Builds a model from explicit parameter blocks in checkpoint order.
    pub fn from_params(config: FosaeConfig, params: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let shapes = parameter_shapes(&config);
        if shapes.len() != params.len() {
            return Err(Error::dim("from_params", &[shapes.len()], &[params.len()]));
        }
        for (shape, p) in shapes.iter().zip(&params) {
            if p.shape() != shape.as_slice() {
                return Err(Error::dim("from_params", shape, p.shape()));
            }
        }
        Ok(Self::assemble(config, params))
    }

    fn assemble(config: FosaeConfig, params: Vec<Tensor<T>>) -> Self {
        FosaeModel {
            config,
            params,
            attention_evals: AtomicU64::new(0),
            predicate_evals: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &FosaeConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    /// Same weights at another precision.
    pub fn cast<U: Scalar>(&self) -> FosaeModel<U> {
        FosaeModel::assemble(self.config.clone(), self.params.iter().map(Tensor::cast).collect())
    }

    /// Exact number of scalar weights and biases.
    pub fn count_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Attention networks evaluated so far (one per unit, argument and observation).
    pub fn attention_evaluations(&self) -> u64 {
        self.attention_evals.load(Ordering::Relaxed)
    }

    /// Predicate networks evaluated so far (one per unit, predicate and observation).
    pub fn predicate_evaluations(&self) -> u64 {
        self.predicate_evals.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.attention_evals.store(0, Ordering::Relaxed);
        self.predicate_evals.store(0, Ordering::Relaxed);
    }

    pub fn attention_block(&self, unit: usize, arg: usize) -> usize {
        (unit * self.config.arity + arg) * TENSORS_PER_NET
    }

    pub fn predicate_block(&self, pred: usize) -> usize {
        (self.config.num_units * self.config.arity + pred) * TENSORS_PER_NET
    }

    pub fn decoder_block(&self) -> usize {
        (self.config.num_units * self.config.arity + self.config.num_predicates) * TENSORS_PER_NET
    }

    /// Reshapes a `[N, F]`, `[B, N, F]` or `[B, N·F]` input to `[B, N, F]`.
    pub fn batch_view(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, f) = (self.config.num_objects, self.config.num_features);
        let ok = match x.shape() {
            [rows, cols] => (*rows == n && *cols == f) || *cols == n * f,
            [_, rows, cols] => *rows == n && *cols == f,
            _ => false,
        };
        if !ok || x.is_empty() || !x.len().is_multiple_of(n * f) {
            return Err(Error::dim("object set", x.shape(), &[n, f]));
        }
        x.clone().reshape(vec![x.len() / (n * f), n, f])
    }

    fn two_layer(&self, g: &mut Graph<T>, p: &[Var], block: usize, x: Var) -> Result<Var> {
        let h = g.linear(x, p[block], p[block + 1])?;
        let h = g.relu(h);
        g.linear(h, p[block + 2], p[block + 3])
    }

    fn categorical(&self, g: &mut Graph<T>, logits: Var, noise: Option<(&GumbelNoise<T>, T)>) -> Result<Var> {
        match noise {
            Some((noise, tau)) => g.gumbel_softmax(logits, noise, tau),
            None => Ok(g.one_hot_max(logits)),
        }
    }

    /// Attention stage: `U·A` independent networks over the flattened
    /// object matrix, each ending in a categorical choice of one object.
    /// Returns `(attention [B·U·A, N], arguments [B·U·A, F])`.
    pub fn attend_vars(&self, g: &mut Graph<T>, p: &[Var], input: Var, sampling: Sampling<'_, T>) -> Result<(Var, Var)> {
        let cfg = &self.config;
        let batch = g.value(input).shape()[0];
        let flat = g.reshape(input, vec![batch, cfg.object_width()])?;
        let mut logits = Vec::with_capacity(cfg.num_units * cfg.arity);
        for u in 0..cfg.num_units {
            for a in 0..cfg.arity {
                logits.push(self.two_layer(g, p, self.attention_block(u, a), flat)?);
            }
        }
        self.attention_evals
            .fetch_add((batch * cfg.num_units * cfg.arity) as u64, Ordering::Relaxed);
        let logits = g.interleave_rows(&logits)?;
        let noise = match sampling {
            Sampling::Gumbel { attention, tau, .. } => Some((attention, tau)),
            Sampling::Argmax => None,
        };
        let att = self.categorical(g, logits, noise)?;
        let args = g.weighted_rows(att, input, cfg.num_units * cfg.arity)?;
        Ok((att, args))
    }

    /// Predicate stage: the same `P` networks applied to the argument list
    /// of every unit. `arguments` is `[B·U·A, F]`; returns the categorical
    /// outputs `[B·U·P, 2]`.
    pub fn predicates_vars(&self, g: &mut Graph<T>, p: &[Var], arguments: Var, sampling: Sampling<'_, T>) -> Result<Var> {
        let cfg = &self.config;
        let per_unit = cfg.arity * cfg.num_features;
        let args = g.value(arguments);
        if args.cols() != cfg.num_features || !args.rows().is_multiple_of(cfg.num_units * cfg.arity) {
            return Err(Error::dim(
                "predicate arguments",
                args.shape(),
                &[cfg.num_units * cfg.arity, cfg.num_features],
            ));
        }
        let unit_rows = args.rows() / cfg.arity;
        let lists = g.reshape(arguments, vec![unit_rows, per_unit])?;
        let mut logits = Vec::with_capacity(cfg.num_predicates);
        for pred in 0..cfg.num_predicates {
            logits.push(self.two_layer(g, p, self.predicate_block(pred), lists)?);
        }
        self.predicate_evals
            .fetch_add((unit_rows * cfg.num_predicates) as u64, Ordering::Relaxed);
        let logits = g.interleave_rows(&logits)?;
        let noise = match sampling {
            Sampling::Gumbel { predicates, tau, .. } => Some((predicates, tau)),
            Sampling::Argmax => None,
        };
        self.categorical(g, logits, noise)
    }

    /// Decoder: `[B, U·P]` truth values to a `[B, N·F]` reconstruction in (0,1).
    pub fn decode_vars(&self, g: &mut Graph<T>, p: &[Var], bottleneck: Var) -> Result<Var> {
        let width = g.value(bottleneck).cols();
        if width != self.config.num_propositions() {
            return Err(Error::dim(
                "decode",
                g.value(bottleneck).shape(),
                &[self.config.num_propositions()],
            ));
        }
        let out = self.two_layer(g, p, self.decoder_block(), bottleneck)?;
        Ok(g.sigmoid(out))
    }

    /// Registers every parameter block on `g`.
    pub fn param_vars(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.params.iter().map(|t| g.param(t.clone())).collect()
    }

    /// Builds the whole autoencoder graph for a batch `x` (`[B, N, F]` or a
    /// single `[N, F]` observation).
    pub fn build(&self, g: &mut Graph<T>, x: &Tensor<T>, sampling: Sampling<'_, T>) -> Result<ForwardVars> {
        let params = self.param_vars(g);
        self.build_with(g, &params, x, sampling)
    }

    /// [`Self::build`] over parameter nodes the caller already registered.
    pub fn build_with(&self, g: &mut Graph<T>, params: &[Var], x: &Tensor<T>, sampling: Sampling<'_, T>) -> Result<ForwardVars> {
        let cfg = &self.config;
        let batch_x = self.batch_view(x)?;
        let batch = batch_x.shape()[0];
        if let Sampling::Gumbel { attention, predicates, .. } = sampling {
            let att_len = batch * cfg.num_units * cfg.arity * cfg.num_objects;
            let pn_len = batch * cfg.num_propositions() * 2;
            if attention.values().len() != att_len {
                return Err(Error::dim("attention noise", attention.shape(), &[att_len]));
            }
            if predicates.values().len() != pn_len {
                return Err(Error::dim("predicate noise", predicates.shape(), &[pn_len]));
            }
        }
        let input = g.constant(batch_x);
        let (attention, arguments) = self.attend_vars(g, params, input, sampling)?;
        let predicates = self.predicates_vars(g, params, arguments, sampling)?;
        let truth = g.column(predicates, 0)?;
        let bottleneck = g.reshape(truth, vec![batch, cfg.num_propositions()])?;
        let reconstruction = self.decode_vars(g, params, bottleneck)?;
        let target = g.reshape(input, vec![batch, cfg.object_width()])?;
        let loss = g.mse_loss(reconstruction, target)?;
        Ok(ForwardVars {
            params: params.to_vec(),
            input,
            attention,
            arguments,
            predicates,
            bottleneck,
            reconstruction,
            loss,
        })
    }

    /// Noise buffers shaped for a batch of `batch` observations.
    pub fn sample_noise(&self, batch: usize, rng: &mut crate::nn::Rng) -> (GumbelNoise<T>, GumbelNoise<T>) {
        let cfg = &self.config;
        (
            GumbelNoise::sample(vec![batch * cfg.num_units * cfg.arity, cfg.num_objects], rng),
            GumbelNoise::sample(vec![batch * cfg.num_propositions(), 2], rng),
        )
    }

    /// Extracts the hard attention indices and propositional states of every
    /// observation from an evaluated graph.
    fn read_out(&self, g: &Graph<T>, vars: &ForwardVars) -> (Vec<PropositionalState>, Vec<AttentionAssignment>) {
        let cfg = &self.config;
        let att = g.value(vars.attention).argmax_rows();
        let truth = g.value(vars.predicates).argmax_rows();
        let ua = cfg.num_units * cfg.arity;
        let up = cfg.num_propositions();
        let batch = att.len() / ua;
        let states = (0..batch)
            .map(|b| PropositionalState::new(truth[b * up..(b + 1) * up].iter().map(|&c| c == 0).collect()))
            .collect();
        let assignments = (0..batch)
            .map(|b| AttentionAssignment::new(cfg.num_units, cfg.arity, att[b * ua..(b + 1) * ua].to_vec()))
            .collect();
        (states, assignments)
    }

    /// Attention stage for a single observation `x` (`[N, F]`).
    /// Returns `(arguments [U, A, F], attention [U, A, N])`.
    pub fn attend(&self, x: &Tensor<T>, sampling: Sampling<'_, T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let cfg = &self.config;
        let batch_x = self.batch_view(x)?;
        if batch_x.shape()[0] != 1 {
            return Err(Error::dim("attend", x.shape(), &[cfg.num_objects, cfg.num_features]));
        }
        let mut g = Graph::new();
        let params = self.param_vars(&mut g);
        let input = g.constant(batch_x);
        let (att, args) = self.attend_vars(&mut g, &params, input, sampling)?;
        let (u, a) = (cfg.num_units, cfg.arity);
        Ok((
            g.value(args).clone().reshape(vec![u, a, cfg.num_features])?,
            g.value(att).clone().reshape(vec![u, a, cfg.num_objects])?,
        ))
    }

    /// Predicate stage for one observation's argument lists `[U, A, F]`.
    /// Returns the categorical outputs `[U, P, 2]` and the state they denote.
    pub fn evaluate_predicates(&self, args: &Tensor<T>, sampling: Sampling<'_, T>) -> Result<(Tensor<T>, PropositionalState)> {
        let cfg = &self.config;
        let expected = [cfg.num_units, cfg.arity, cfg.num_features];
        if args.shape() != expected {
            return Err(Error::dim("evaluate_predicates", args.shape(), &expected));
        }
        let mut g = Graph::new();
        let params = self.param_vars(&mut g);
        let rows = g.constant(args.clone().reshape(vec![cfg.num_units * cfg.arity, cfg.num_features])?);
        let out = self.predicates_vars(&mut g, &params, rows, sampling)?;
        let value = g.value(out);
        let state = PropositionalState::new((0..value.rows()).map(|r| value.get(r, 0) >= value.get(r, 1)).collect());
        Ok((value.clone().reshape(vec![cfg.num_units, cfg.num_predicates, 2])?, state))
    }

    /// Truth of predicate `pred` on an explicit argument list of `A` object rows.
    pub fn predicate_truth(&self, pred: usize, arguments: &[&[T]]) -> Result<bool> {
        let cfg = &self.config;
        if pred >= cfg.num_predicates {
            return Err(Error::Validation(format!("predicate {pred} out of range")));
        }
        if arguments.len() != cfg.arity || arguments.iter().any(|a| a.len() != cfg.num_features) {
            return Err(Error::dim("predicate_truth", &[arguments.len()], &[cfg.arity, cfg.num_features]));
        }
        let data: Vec<T> = arguments.iter().flat_map(|a| a.iter().copied()).collect();
        let mut g = Graph::new();
        let params = self.param_vars(&mut g);
        let x = g.constant(Tensor::new(vec![1, data.len()], data)?);
        let logits = self.two_layer(&mut g, &params, self.predicate_block(pred), x)?;
        let l = g.value(logits);
        Ok(crate::nn::argmax(l.data()) == 0)
    }

    /// Decodes truth values (`[U·P]` or `[B, U·P]`, entries in [0,1]) into
    /// object matrices `[N, F]` / `[B, N, F]`.
    pub fn decode(&self, state: &Tensor<T>) -> Result<Tensor<T>> {
        let cfg = &self.config;
        let up = cfg.num_propositions();
        if state.cols() != up {
            return Err(Error::dim("decode", state.shape(), &[up]));
        }
        let batch = state.rows();
        let mut g = Graph::new();
        let params = self.param_vars(&mut g);
        let z = g.constant(state.clone().reshape(vec![batch, up])?);
        let out = self.decode_vars(&mut g, &params, z)?;
        let shape = if state.shape().len() == 1 {
            vec![cfg.num_objects, cfg.num_features]
        } else {
            vec![batch, cfg.num_objects, cfg.num_features]
        };
        g.value(out).clone().reshape(shape)
    }

    /// Decodes propositional states.
    pub fn decode_states(&self, states: &[PropositionalState]) -> Result<Tensor<T>> {
        let up = self.config.num_propositions();
        let mut data = Vec::with_capacity(states.len() * up);
        for s in states {
            if s.len() != up {
                return Err(Error::dim("decode_states", &[s.len()], &[up]));
            }
            data.extend(s.bits().iter().map(|&b| if b { T::one() } else { T::zero() }));
        }
        self.decode(&Tensor::new(vec![states.len(), up], data)?)
    }

    /// Full autoencoder pass on one observation.
    pub fn forward(&self, x: &Tensor<T>, sampling: Sampling<'_, T>) -> Result<ForwardOutput<T>> {
        let mut g = Graph::new();
        let vars = self.build(&mut g, x, sampling)?;
        let (mut states, mut assignments) = self.read_out(&g, &vars);
        if states.len() != 1 {
            return Err(Error::dim("forward", x.shape(), &[self.config.num_objects, self.config.num_features]));
        }
        let cfg = &self.config;
        Ok(ForwardOutput {
            reconstruction: g
                .value(vars.reconstruction)
                .clone()
                .reshape(vec![cfg.num_objects, cfg.num_features])?,
            state: states.remove(0),
            attention: assignments.remove(0),
            loss: g.value(vars.loss).data()[0],
        })
    }

    /// Deterministic encoding of one observation.
    pub fn encode(&self, x: &Tensor<T>) -> Result<PropositionalState> {
        let mut out = self.encode_batch(x)?;
        if out.len() != 1 {
            return Err(Error::dim("encode", x.shape(), &[self.config.num_objects, self.config.num_features]));
        }
        Ok(out.remove(0).0)
    }

    /// Deterministic encoding of a batch `[B, N, F]`, with the hard
    /// attention choices behind every state.
    pub fn encode_batch(&self, x: &Tensor<T>) -> Result<Vec<(PropositionalState, AttentionAssignment)>> {
        let mut g = Graph::new();
        let params = self.param_vars(&mut g);
        let cfg = &self.config;
        let batch_x = self.batch_view(x)?;
        let input = g.constant(batch_x);
        let (attention, arguments) = self.attend_vars(&mut g, &params, input, Sampling::Argmax)?;
        let predicates = self.predicates_vars(&mut g, &params, arguments, Sampling::Argmax)?;
        let ua = cfg.num_units * cfg.arity;
        let up = cfg.num_propositions();
        let att = g.value(attention).argmax_rows();
        let truth = g.value(predicates).argmax_rows();
        Ok((0..att.len() / ua)
            .map(|b| {
                (
                    PropositionalState::new(truth[b * up..(b + 1) * up].iter().map(|&c| c == 0).collect()),
                    AttentionAssignment::new(cfg.num_units, cfg.arity, att[b * ua..(b + 1) * ua].to_vec()),
                )
            })
            .collect())
    }

    /// Encodes then decodes a batch deterministically; returns the
    /// reconstruction `[B, N, F]`.
    pub fn reconstruct(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = self.build(&mut g, x, Sampling::Argmax)?;
        let batch = g.value(vars.input).shape()[0];
        g.value(vars.reconstruction)
            .clone()
            .reshape(vec![batch, self.config.num_objects, self.config.num_features])
    }
}

//! Positive and negative argument examples for each learned predicate.
//!
//! Examples come from the hard (argmax) attention of the encoder, so every
//! argument is exactly one object row of the observation.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fosae::FosaeModel;
use crate::nn::Tensor;
use crate::puzzle::{self, ObjectAttributes};
use crate::scalar::Scalar;

/// Observations per encoding batch.
const CHUNK: usize = 500;

/// One argument list seen by a predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgumentTuple {
    /// Index into the scanned observations.
    pub observation: usize,
    pub unit: usize,
    /// Object index chosen for each argument slot.
    pub objects: Vec<usize>,
    pub attributes: Vec<ObjectAttributes>,
    pub truth: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateExamples {
    pub predicate: usize,
    pub positive: Vec<ArgumentTuple>,
    pub negative: Vec<ArgumentTuple>,
}

fn check_features<T: Scalar>(model: &FosaeModel<T>) -> Result<()> {
    let cfg = model.config();
    if cfg.num_features != puzzle::FEATURES {
        return Err(Error::Validation(format!(
            "attribute decoding needs {} features per object, the model has {}",
            puzzle::FEATURES,
            cfg.num_features
        )));
    }
    Ok(())
}

/// Scans `observations` (each `N·F` values) in order and keeps, for every
/// predicate, the first `max_k` distinct argument tuples per truth value.
/// Tuples are distinct by decoded attributes.
pub fn collect_all<T: Scalar>(model: &FosaeModel<T>, observations: &[&[f32]], max_k: usize) -> Result<Vec<PredicateExamples>> {
    check_features(model)?;
    let cfg = model.config();
    let (n, f, p_count) = (cfg.num_objects, cfg.num_features, cfg.num_predicates);
    let mut out: Vec<PredicateExamples> = (0..p_count)
        .map(|p| PredicateExamples {
            predicate: p,
            positive: Vec::new(),
            negative: Vec::new(),
        })
        .collect();
    let mut seen: Vec<[HashSet<Vec<ObjectAttributes>>; 2]> = (0..p_count).map(|_| Default::default()).collect();
    let full = |out: &[PredicateExamples]| out.iter().all(|e| e.positive.len() >= max_k && e.negative.len() >= max_k);
    for (c, chunk) in observations.chunks(CHUNK).enumerate() {
        if full(&out) {
            break;
        }
        let data: Vec<T> = chunk
            .iter()
            .flat_map(|o| o.iter().map(|&v| T::from_f64_lossy(v as f64)))
            .collect();
        let x = Tensor::new(vec![chunk.len(), n, f], data)?;
        for (b, (state, att)) in model.encode_batch(&x)?.into_iter().enumerate() {
            let obs = chunk[b];
            for u in 0..cfg.num_units {
                let objects = att.unit(u).to_vec();
                let attributes: Vec<ObjectAttributes> = objects
                    .iter()
                    .map(|&o| puzzle::decode_attributes(&obs[o * f..(o + 1) * f]))
                    .collect();
                for (p, ex) in out.iter_mut().enumerate() {
                    let truth = state.get(u * p_count + p);
                    let bucket = if truth { &mut ex.positive } else { &mut ex.negative };
                    if bucket.len() < max_k && seen[p][truth as usize].insert(attributes.clone()) {
                        bucket.push(ArgumentTuple {
                            observation: c * CHUNK + b,
                            unit: u,
                            objects: objects.clone(),
                            attributes: attributes.clone(),
                            truth,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Examples of a single predicate.
pub fn collect_examples<T: Scalar>(model: &FosaeModel<T>, observations: &[&[f32]], predicate: usize, max_k: usize) -> Result<PredicateExamples> {
    if predicate >= model.config().num_predicates {
        return Err(Error::Validation(format!(
            "predicate {predicate} out of range (model has {})",
            model.config().num_predicates
        )));
    }
    Ok(collect_all(model, observations, max_k)?.swap_remove(predicate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Consistency {
    pub checked: usize,
    pub consistent: usize,
}

impl Consistency {
    pub fn rate(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.consistent as f64 / self.checked as f64
        }
    }
}

/// Re-evaluates every listed tuple's predicate on the raw object rows.
pub fn check_consistency<T: Scalar>(model: &FosaeModel<T>, observations: &[&[f32]], examples: &[PredicateExamples]) -> Result<Consistency> {
    let f = model.config().num_features;
    let mut c = Consistency {
        checked: 0,
        consistent: 0,
    };
    for ex in examples {
        for t in ex.positive.iter().chain(&ex.negative) {
            let obs = observations
                .get(t.observation)
                .ok_or_else(|| Error::Validation(format!("observation {} out of range", t.observation)))?;
            let rows: Vec<Vec<T>> = t
                .objects
                .iter()
                .map(|&o| obs[o * f..(o + 1) * f].iter().map(|&v| T::from_f64_lossy(v as f64)).collect())
                .collect();
            let refs: Vec<&[T]> = rows.iter().map(Vec::as_slice).collect();
            let attrs_match = t
                .objects
                .iter()
                .zip(&t.attributes)
                .all(|(&o, a)| puzzle::decode_attributes(&obs[o * f..(o + 1) * f]) == *a);
            c.checked += 1;
            if attrs_match && model.predicate_truth(ex.predicate, &refs)? == t.truth {
                c.consistent += 1;
            }
        }
    }
    Ok(c)
}

fn render_tuple(t: &ArgumentTuple) -> String {
    let args: Vec<String> = t
        .attributes
        .iter()
        .enumerate()
        .map(|(i, a)| format!("arg{}={a}", i + 1))
        .collect();
    format!("{} -> {}", args.join(" "), t.truth)
}

/// CSV with one row per example: `predicate,bucket,rank,observation,unit,example`.
/// An empty bucket gets a single `(none)` row.
pub fn render_report(examples: &[PredicateExamples]) -> String {
    let mut out = String::from("predicate,bucket,rank,observation,unit,example\n");
    let mut sorted: Vec<&PredicateExamples> = examples.iter().collect();
    sorted.sort_by_key(|e| e.predicate);
    for ex in sorted {
        for (bucket, tuples) in [("positive", &ex.positive), ("negative", &ex.negative)] {
            if tuples.is_empty() {
                let _ = writeln!(out, "{},{bucket},,,,(none)", ex.predicate);
            }
            for (rank, t) in tuples.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{bucket},{rank},{},{},\"{}\"",
                    ex.predicate,
                    t.observation,
                    t.unit,
                    render_tuple(t)
                );
            }
        }
    }
    out
}

//! Training losses on the tape.
//!
//! `L = L_c + w·L_ms` where `L_c` is the batch-mean cross entropy (summed over
//! the verb and noun heads in multitask mode) and `L_ms` is the per-pixel
//! cross entropy of the motion maps summed over pixels and averaged over the
//! `B·N` sample frames.

use egoms_tensor::{Real, Tape, Tensor, Var};

use crate::error::{CoreError, Result};
use crate::model::{Logits, MsFinal};

/// Batch-mean cross entropy of class `labels` under `logits`.
pub fn loss_classification<T: Real>(tape: &mut Tape<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    Ok(tape.cross_entropy(logits, labels)?)
}

/// Classification loss for either head layout. Multitask labels are split
/// as `label = verb·nouns + noun`.
pub fn loss_logits<T: Real>(tape: &mut Tape<T>, logits: Logits, labels: &[usize]) -> Result<Var> {
    match logits {
        Logits::Classes(v) => loss_classification(tape, v, labels),
        Logits::VerbNoun { verb, noun } => {
            let nouns = tape.shape(noun)[1];
            let verbs: Vec<usize> = labels.iter().map(|l| l / nouns).collect();
            let objects: Vec<usize> = labels.iter().map(|l| l % nouns).collect();
            let lv = loss_classification(tape, verb, &verbs)?;
            let ln = loss_classification(tape, noun, &objects)?;
            Ok(tape.add(lv, ln)?)
        }
    }
}

/// MS loss of probabilities `[B, N, s²]` against target maps of the same
/// shape, normalized by `B·N`. The sigmoid head uses per-pixel binary cross
/// entropy, the softmax head the soft-target negative log likelihood.
pub fn loss_ms<T: Real>(tape: &mut Tape<T>, probs: Var, maps: &Tensor<T>, last: MsFinal) -> Result<Var> {
    let shape = tape.shape(probs).to_vec();
    if shape.len() != 3 || maps.shape() != shape.as_slice() {
        return Err(CoreError::Tensor(egoms_tensor::TensorError::ShapeMismatch {
            op: "loss_ms",
            detail: format!("probs {shape:?} vs maps {:?}", maps.shape()),
        }));
    }
    let norm = T::of((shape[0] * shape[1]) as f64);
    Ok(match last {
        MsFinal::Softmax => tape.soft_nll(probs, maps, norm)?,
        MsFinal::Sigmoid => tape.binary_ce(probs, maps, norm)?,
    })
}

/// `L_c + ms_weight·L_ms`; without an MS term the result is `L_c` itself.
pub fn loss_combined<T: Real>(tape: &mut Tape<T>, loss_c: Var, loss_ms: Option<Var>, ms_weight: f64) -> Result<Var> {
    match loss_ms {
        None => Ok(loss_c),
        Some(ms) => {
            let weighted = tape.scale(ms, T::of(ms_weight))?;
            Ok(tape.add(loss_c, weighted)?)
        }
    }
}

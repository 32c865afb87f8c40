use std::sync::{Arc, Mutex, MutexGuard};

use super::ops::{vjp, Op};
use super::{Result, Tensor, TensorError};

#[derive(Clone)]
struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    passes: Vec<bool>,
}

/// Append-only record of operations. Cloning yields another handle to the
/// same tape.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Arc<Mutex<TapeInner>>,
}

#[derive(Clone)]
pub(crate) struct NodeRef {
    tape: Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, TapeInner> {
        self.inner.lock().expect("tape mutex poisoned")
    }

    fn same(&self, other: &Tape) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    /// Registers `value` as a differentiable input.
    pub fn leaf(&self, value: &Tensor) -> Tensor {
        let value = value.detach();
        let mut inner = self.lock();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value: value.clone(),
            requires_grad: true,
        });
        value.with_node(NodeRef {
            tape: self.clone(),
            id,
        })
    }

    pub fn len(&self) -> usize {
        self.lock().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One flag per backward pass run so far: whether it recorded its outputs.
    pub fn backward_passes(&self) -> Vec<bool> {
        self.lock().passes.clone()
    }

    /// Gradients of the scalar `output` with respect to each tensor in `wrt`.
    ///
    /// With `create_graph` the adjoint computations are themselves recorded,
    /// so the returned tensors can feed another backward pass. Tensors in
    /// `wrt` that do not influence `output` receive zeros.
    pub fn backward(output: &Tensor, wrt: &[Tensor], create_graph: bool) -> Result<Vec<Tensor>> {
        if output.numel() != 1 {
            return Err(TensorError::NotScalar(output.shape().to_vec()));
        }
        let out_ref = output.node().ok_or(TensorError::NotOnTape)?;
        let tape = out_ref.tape.clone();
        let mut wrt_ids = Vec::with_capacity(wrt.len());
        for w in wrt {
            let r = w.node().ok_or(TensorError::NotOnTape)?;
            if !r.tape.same(&tape) {
                return Err(TensorError::NotOnTape);
            }
            wrt_ids.push(r.id);
        }

        let out_id = out_ref.id;
        let nodes: Vec<Node> = {
            let mut inner = tape.lock();
            inner.passes.push(create_graph);
            inner.nodes[..=out_id].to_vec()
        };

        let lo = wrt_ids.iter().copied().min().unwrap_or(out_id).min(out_id);
        // reaches[i - lo]: node i depends on some wrt node
        let mut reaches = vec![false; out_id + 1 - lo];
        for id in lo..=out_id {
            let hit = wrt_ids.contains(&id)
                || nodes[id]
                    .inputs
                    .iter()
                    .any(|&i| i >= lo && reaches[i - lo]);
            reaches[id - lo] = hit;
        }

        let attach = |id: usize| -> Tensor {
            let node = &nodes[id];
            if create_graph && node.requires_grad {
                node.value.clone().with_node(NodeRef {
                    tape: tape.clone(),
                    id,
                })
            } else {
                node.value.clone()
            }
        };

        let mut adj: Vec<Option<Tensor>> = vec![None; out_id + 1 - lo];
        if reaches[out_id - lo] {
            adj[out_id - lo] = Some(Tensor::ones(output.shape(), output.dtype()));
        }

        for id in (lo..=out_id).rev() {
            let Some(grad) = adj[id - lo].take() else {
                continue;
            };
            let node = &nodes[id];
            let needed: Vec<bool> = node
                .inputs
                .iter()
                .map(|&i| i >= lo && reaches[i - lo] && nodes[i].requires_grad)
                .collect();
            if needed.iter().any(|&n| n) {
                let inputs: Vec<Tensor> = node.inputs.iter().map(|&i| attach(i)).collect();
                let out = attach(id);
                let grads = vjp(&node.op, &inputs, &out, &grad, &needed)?;
                for ((&i, g), &need) in node.inputs.iter().zip(grads).zip(&needed) {
                    let (true, Some(g)) = (need, g) else { continue };
                    let slot = &mut adj[i - lo];
                    *slot = Some(match slot.take() {
                        Some(acc) => acc.add(&g)?,
                        None => g,
                    });
                }
            }
            // keep adjoints of requested tensors for the result
            if wrt_ids.contains(&id) {
                adj[id - lo] = Some(grad);
            }
        }

        Ok(wrt_ids
            .iter()
            .zip(wrt)
            .map(|(&id, w)| {
                adj[id - lo]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(w.shape(), w.dtype()))
            })
            .collect())
    }
}

/// Records `op` applied to `inputs` producing `value`. If no input is
/// recorded the value is returned detached.
pub(crate) fn record(op: Op, inputs: &[&Tensor], value: Tensor) -> Result<Tensor> {
    let Some(tape) = inputs.iter().find_map(|t| t.node().map(|n| n.tape.clone())) else {
        return Ok(value);
    };
    for t in inputs {
        if let Some(n) = t.node() {
            if !n.tape.same(&tape) {
                return Err(TensorError::TapeMismatch);
            }
        }
    }
    let mut inner = tape.lock();
    let mut ids = Vec::with_capacity(inputs.len());
    for t in inputs {
        match t.node() {
            Some(n) => ids.push(n.id),
            None => {
                ids.push(inner.nodes.len());
                inner.nodes.push(Node {
                    op: Op::Leaf,
                    inputs: Vec::new(),
                    value: t.detach(),
                    requires_grad: false,
                });
            }
        }
    }
    let id = inner.nodes.len();
    inner.nodes.push(Node {
        op,
        inputs: ids,
        value: value.clone(),
        requires_grad: true,
    });
    drop(inner);
    Ok(value.with_node(NodeRef { tape, id }))
}

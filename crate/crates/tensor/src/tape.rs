use crate::tensor::{Shape, Tensor};
use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

/// Backward rule for one recorded operation.
///
/// Receives the gradient flowing into the op's output and, per parent,
/// whether that parent needs a gradient. Returns one entry per parent.
pub type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Rc<Tensor>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Append-only record of a computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.len()).finish()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{} {}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A leaf that never receives gradients.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(Rc::new(value), false)
    }

    /// A leaf whose gradient is collected by [`Tape::backward`].
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(Rc::new(value), true)
    }

    pub fn leaf(&self, value: Rc<Tensor>, requires_grad: bool) -> Var<'_> {
        self.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
        })
    }

    /// Record a custom operation. `backward` is dropped when no parent
    /// requires a gradient.
    pub fn op<'t>(&'t self, value: Tensor, parents: &[Var<'t>], backward: BackwardFn) -> Var<'t> {
        let ids: Vec<usize> = parents
            .iter()
            .map(|p| {
                assert!(std::ptr::eq(p.tape, self), "variable from a different tape");
                p.id
            })
            .collect();
        let requires_grad = {
            let nodes = self.nodes.borrow();
            ids.iter().any(|&i| nodes[i].requires_grad)
        };
        self.push(Node {
            value: Rc::new(value),
            parents: ids,
            backward: requires_grad.then_some(backward),
            requires_grad,
        })
    }

    /// Reverse-mode sweep from `root`, seeded with ones.
    pub fn backward(&self, root: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        if !nodes[root.id].requires_grad {
            return Gradients { grads };
        }
        grads[root.id] = Some(Tensor::ones(nodes[root.id].value.shape()));
        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let needs: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let parent_grads = backward(&g, &needs);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for ((&p, pg), &need) in node.parents.iter().zip(parent_grads).zip(&needs) {
                let Some(pg) = pg else { continue };
                if !need {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[p].value.shape(), "gradient shape for node {p}");
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Gradients { grads }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> Shape {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Copy out the value as a scalar; panics unless the tensor has one element.
    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.len(), 1, "item() on tensor of shape {}", v.shape());
        v.data()[0]
    }

    /// Same value with gradient flow cut.
    pub fn detach(&self) -> Var<'t> {
        self.tape.leaf(self.value(), false)
    }
}

/// Gradients of leaf parameters after a backward sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `var` does not influence the root or never required grad.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, or zeros of its shape.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_accumulates_over_fanout() {
        let tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        // y = x*x + x
        let y = x.mul(x).add(x);
        let g = tape.backward(y);
        assert_eq!(g.get(x).unwrap().data(), &[7.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::scalar(2.0));
        let b = tape.param(Tensor::scalar(5.0));
        let y = a.mul(b);
        let g = tape.backward(y);
        assert!(g.get(a).is_none());
        assert_eq!(g.get(b).unwrap().data(), &[2.0]);
    }
}

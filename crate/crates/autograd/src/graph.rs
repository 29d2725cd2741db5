//! The tape: every op appends a node holding its value and a closure that maps
//! the output gradient to gradients of its parents. Nodes are appended in
//! evaluation order, so walking the tape backwards is a valid topological
//! order for reverse mode.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use crate::param::{Param, ParamId};
use crate::{Float, Tensor};

/// Maps the output gradient to one optional gradient per parent. The second
/// argument tells which parents actually need a gradient.
pub type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Float> {
    value: Arc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

pub struct Graph<T: Float> {
    nodes: RefCell<Vec<Node<T>>>,
    params: RefCell<HashMap<ParamId, usize>>,
    grad_enabled: bool,
}

/// Handle to a value recorded on a [`Graph`].
pub struct Var<'g, T: Float> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T: Float> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Float> Copy for Var<'_, T> {}

impl<T: Float> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{}, {:?})", self.id, self.shape())
    }
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(HashMap::new()),
            grad_enabled: true,
        }
    }

    /// A graph that records values only; ops keep no backward closures.
    pub fn no_grad() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(Node {
            value: Arc::new(value),
            parents: Vec::new(),
            backward: None,
            requires_grad: false,
        })
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn input(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(Node {
            value: Arc::new(value),
            parents: Vec::new(),
            backward: None,
            requires_grad: self.grad_enabled,
        })
    }

    /// Records a parameter. Using the same parameter twice yields the same
    /// node, so its gradient accumulates across uses.
    pub fn param(&self, p: &Param<T>) -> Var<'_, T> {
        if let Some(&id) = self.params.borrow().get(&p.id()) {
            return Var { graph: self, id };
        }
        let v = self.push(Node {
            value: p.shared_value(),
            parents: Vec::new(),
            backward: None,
            requires_grad: self.grad_enabled && p.trainable(),
        });
        self.params.borrow_mut().insert(p.id(), v.id);
        v
    }

    /// Records the result of an op. `backward` is dropped when no parent
    /// needs a gradient.
    pub fn op<'g, F>(&'g self, value: Tensor<T>, parents: &[Var<'g, T>], backward: F) -> Var<'g, T>
    where
        F: Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>> + 'static,
    {
        let parent_ids: Vec<usize> = parents
            .iter()
            .map(|p| {
                assert!(std::ptr::eq(p.graph, self), "var from another graph");
                p.id
            })
            .collect();
        let requires_grad = self.grad_enabled && {
            let nodes = self.nodes.borrow();
            parent_ids.iter().any(|&i| nodes[i].requires_grad)
        };
        let backward: Option<BackwardFn<T>> = if requires_grad {
            Some(Box::new(backward))
        } else {
            None
        };
        self.push(Node {
            value: Arc::new(value),
            parents: if requires_grad { parent_ids } else { Vec::new() },
            backward,
            requires_grad,
        })
    }

    fn value(&self, id: usize) -> Arc<Tensor<T>> {
        self.nodes.borrow()[id].value.clone()
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse-mode sweep from `output`, seeded with ones. Returns gradients of
    /// every leaf that requires one. Backward closures are consumed, so a graph
    /// supports a single sweep.
    pub fn backward(&self, output: Var<'_, T>) -> Gradients<T> {
        let mut nodes = self.nodes.borrow_mut();
        let n = output.id + 1;
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        let mut leaves = HashMap::new();
        if nodes[output.id].requires_grad {
            grads[output.id] = Some(Tensor::ones(nodes[output.id].value.shape()));
        }
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let (backward, parents, leaf_requires) = {
                let node = &mut nodes[i];
                (node.backward.take(), std::mem::take(&mut node.parents), node.requires_grad)
            };
            match backward {
                Some(bw) => {
                    let needs: Vec<bool> = parents.iter().map(|&p| nodes[p].requires_grad).collect();
                    let pg = bw(&g, &needs);
                    assert_eq!(pg.len(), parents.len(), "backward arity mismatch at node {i}");
                    for ((&p, gp), &need) in parents.iter().zip(pg).zip(&needs) {
                        let (Some(gp), true) = (gp, need) else { continue };
                        assert_eq!(
                            gp.shape(),
                            nodes[p].value.shape(),
                            "gradient shape mismatch flowing into node {p}"
                        );
                        match &mut grads[p] {
                            Some(acc) => acc.add_assign(&gp),
                            slot @ None => *slot = Some(gp),
                        }
                    }
                }
                None => {
                    if leaf_requires {
                        leaves.insert(i, g);
                    }
                }
            }
        }
        Gradients {
            leaves,
            params: self.params.borrow().clone(),
        }
    }
}

impl<'g, T: Float> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Arc<Tensor<T>> {
        self.graph.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires_grad(self.id)
    }

    /// Copies the value out as a constant on the same graph.
    pub fn detach(&self) -> Var<'g, T> {
        self.graph.constant((*self.value()).clone())
    }
}

/// Gradients of the leaves of one backward sweep.
pub struct Gradients<T: Float> {
    leaves: HashMap<usize, Tensor<T>>,
    params: HashMap<ParamId, usize>,
}

impl<T: Float> Gradients<T> {
    pub fn wrt(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.leaves.get(&v.id)
    }

    pub fn param(&self, p: &Param<T>) -> Option<&Tensor<T>> {
        self.params.get(&p.id()).and_then(|id| self.leaves.get(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_param_accumulates() {
        let p = Param::new(Tensor::<f64>::from_vec(&[2], vec![1.0, 2.0]));
        let g = Graph::new();
        let a = g.param(&p);
        let b = g.param(&p);
        assert_eq!(a.id(), b.id());
        let y = a.mul(b).sum_all();
        let grads = g.backward(y);
        assert_eq!(grads.param(&p).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn no_grad_graph_records_no_backward() {
        let g = Graph::<f32>::no_grad();
        let x = g.input(Tensor::ones(&[3]));
        let y = x.exp().sum_all();
        assert!(!y.requires_grad());
        let grads = g.backward(y);
        assert!(grads.wrt(x).is_none());
    }

    #[test]
    fn frozen_param_gets_no_gradient() {
        let mut p = Param::new(Tensor::<f64>::ones(&[2]));
        p.set_trainable(false);
        let g = Graph::new();
        let x = g.input(Tensor::ones(&[2]));
        let y = g.param(&p).mul(x).sum_all();
        let grads = g.backward(y);
        assert!(grads.param(&p).is_none());
        assert_eq!(grads.wrt(x).unwrap().data(), &[1.0, 1.0]);
    }
}

//! Reverse-mode automatic differentiation with differentiable backward passes.
//!
//! Every operation records its inputs and a backward closure that expresses
//! the vector-Jacobian product *in terms of graph operations*. Gradients are
//! therefore themselves graph nodes and can be differentiated again — the R1
//! penalty relies on this for its exact double backward.
//!
//! Node ids increase monotonically with creation order, so a sweep in
//! descending id order is a valid reverse-topological traversal of any
//! subgraph.

pub mod kernels;
pub mod ops;

use crate::scalar::Scalar;
use crate::Tensor;
use std::cell::{Cell, Ref, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

thread_local! {
    static NEXT_ID: Cell<u64> = Cell::new(0);
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Backward closure: maps the output gradient to one gradient per parent
/// (`None` where an input is structurally gradient-free).
type BackFn<S> = Box<dyn Fn(&Var<S>) -> Vec<Option<Var<S>>>>;

pub(crate) struct Node<S: Scalar> {
    id: u64,
    value: RefCell<Tensor<S>>,
    tracked: bool,
    parents: Vec<Var<S>>,
    back: Option<BackFn<S>>,
}

/// Handle to a node in the computation graph. Cheap to clone.
pub struct Var<S: Scalar>(pub(crate) Rc<Node<S>>);

impl<S: Scalar> Clone for Var<S> {
    fn clone(&self) -> Self {
        Var(Rc::clone(&self.0))
    }
}

impl<S: Scalar> Var<S> {
    /// Trainable leaf: backward collects a gradient for it.
    pub fn leaf(value: Tensor<S>) -> Self {
        Var(Rc::new(Node {
            id: next_id(),
            value: RefCell::new(value),
            tracked: true,
            parents: Vec::new(),
            back: None,
        }))
    }

    /// Constant: gradients never flow into it.
    pub fn constant(value: Tensor<S>) -> Self {
        Var(Rc::new(Node {
            id: next_id(),
            value: RefCell::new(value),
            tracked: false,
            parents: Vec::new(),
            back: None,
        }))
    }

    /// 0-d constant.
    pub fn scalar(v: S) -> Self {
        Var::constant(ndarray::arr0(v).into_dyn())
    }

    /// Result of an op. Untracked when no parent is tracked, in which case
    /// the closure and parent list are dropped — constants stay cheap.
    pub(crate) fn from_op(value: Tensor<S>, parents: Vec<Var<S>>, back: BackFn<S>) -> Self {
        let tracked = parents.iter().any(|p| p.0.tracked);
        if !tracked {
            return Var::constant(value);
        }
        Var(Rc::new(Node {
            id: next_id(),
            value: RefCell::new(value),
            tracked: true,
            parents,
            back: Some(back),
        }))
    }

    /// Same value, cut loose from the graph.
    pub fn detach(&self) -> Self {
        Var::constant(self.value().clone())
    }

    pub fn value(&self) -> Ref<'_, Tensor<S>> {
        self.0.value.borrow()
    }

    pub fn value_clone(&self) -> Tensor<S> {
        self.0.value.borrow().clone()
    }

    /// Replace the stored value. Only leaves and constants may be mutated
    /// (optimizer updates, EMA); op outputs are immutable by construction.
    pub fn set_value(&self, value: Tensor<S>) {
        debug_assert!(self.0.back.is_none(), "set_value on a non-leaf node");
        *self.0.value.borrow_mut() = value;
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.value.borrow().shape().to_vec()
    }

    pub fn len(&self) -> usize {
        self.0.value.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn tracked(&self) -> bool {
        self.0.tracked
    }

    /// Extract the single element of a 0-d/1-element tensor.
    pub fn scalar_value(&self) -> S {
        let v = self.value();
        assert_eq!(v.len(), 1, "scalar_value on tensor of {} elements", v.len());
        *v.iter().next().expect("non-empty")
    }
}

/// Gradient table produced by [`backward`]; keyed by node identity.
pub struct Gradients<S: Scalar> {
    map: HashMap<u64, Var<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn empty() -> Self {
        Gradients { map: HashMap::new() }
    }

    /// Gradient of the root w.r.t. `v`, if any flowed there.
    pub fn get(&self, v: &Var<S>) -> Option<&Var<S>> {
        self.map.get(&v.id())
    }

    pub fn value_of(&self, v: &Var<S>) -> Option<Tensor<S>> {
        self.get(v).map(|g| g.value_clone())
    }

    pub fn contains(&self, v: &Var<S>) -> bool {
        self.map.contains_key(&v.id())
    }
}

/// Differentiate a scalar root with respect to everything reachable.
///
/// The returned gradients are graph nodes; summing a function of them and
/// calling `backward` again yields exact second derivatives.
pub fn backward<S: Scalar>(root: &Var<S>) -> Gradients<S> {
    assert_eq!(root.len(), 1, "backward expects a scalar root");
    if !root.0.tracked {
        return Gradients::empty();
    }

    // Reachable tracked subgraph.
    let mut nodes: HashMap<u64, Var<S>> = HashMap::new();
    let mut stack = vec![root.clone()];
    while let Some(n) = stack.pop() {
        if nodes.insert(n.id(), n.clone()).is_none() {
            for p in &n.0.parents {
                if p.0.tracked {
                    stack.push(p.clone());
                }
            }
        }
    }

    let mut order: Vec<u64> = nodes.keys().copied().collect();
    order.sort_unstable_by(|a, b| b.cmp(a));

    let seed = Var::constant(Tensor::ones(root.value().raw_dim()));
    let mut grads: HashMap<u64, Var<S>> = HashMap::new();
    grads.insert(root.id(), seed);

    for id in order {
        let node = &nodes[&id];
        let Some(g) = grads.get(&id).cloned() else {
            continue;
        };
        let Some(back) = &node.0.back else {
            continue;
        };
        let pgrads = back(&g);
        debug_assert_eq!(pgrads.len(), node.0.parents.len(), "VJP arity mismatch");
        for (parent, pg) in node.0.parents.iter().zip(pgrads) {
            let (true, Some(pg)) = (parent.0.tracked, pg) else {
                continue;
            };
            debug_assert_eq!(
                pg.shape(),
                parent.shape(),
                "VJP shape mismatch flowing into node {}",
                parent.id()
            );
            match grads.remove(&parent.id()) {
                Some(acc) => {
                    grads.insert(parent.id(), acc.add(&pg));
                }
                None => {
                    grads.insert(parent.id(), pg);
                }
            }
        }
    }

    Gradients { map: grads }
}

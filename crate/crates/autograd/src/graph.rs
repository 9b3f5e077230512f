//! Computation graph: variables, recorded functions and reverse-mode sweeps.
//!
//! Every differentiable operation produces a [`Var`] that remembers its inputs
//! and a [`Function`] describing how to map an output gradient to input
//! gradients. Backward rules are themselves written with `Var` operations, so
//! a sweep run with `create_graph = true` records a differentiable graph of the
//! gradients (needed for gradient penalties).

use crate::tensor::Tensor;
use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Whether newly created operations are recorded on this thread.
pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Restores the previous recording mode on drop.
pub struct GradModeGuard {
    prev: bool,
}

impl Drop for GradModeGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.prev));
    }
}

pub fn set_grad_enabled(enabled: bool) -> GradModeGuard {
    let prev = GRAD_ENABLED.with(|g| g.replace(enabled));
    GradModeGuard { prev }
}

/// Disable recording until the guard is dropped.
pub fn no_grad() -> GradModeGuard {
    set_grad_enabled(false)
}

/// Backward rule of a recorded operation.
pub trait Function {
    fn name(&self) -> &'static str;

    /// Gradients for each input given the gradient of the output. Entries for
    /// inputs that do not require gradients may be `None`.
    fn backward(&self, grad: &Var, inputs: &[Var], output: &Var) -> Vec<Option<Var>>;

    /// `false` for fused kernels whose backward is computed numerically in one
    /// shot; such operations cannot sit on a double-backward path.
    fn supports_higher_order(&self) -> bool {
        true
    }
}

struct Node {
    id: u64,
    value: Tensor,
    requires_grad: bool,
    inputs: Vec<Var>,
    function: Option<Box<dyn Function>>,
}

/// A node in the computation graph. Cloning is cheap (reference counted).
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.0.function.as_ref().map(|fun| fun.name()).unwrap_or("leaf");
        write!(f, "Var#{}({op}, {:?})", self.0.id, self.0.value)
    }
}

impl Var {
    /// A leaf that does not take part in differentiation.
    pub fn constant(value: Tensor) -> Var {
        Self::leaf(value, false)
    }

    /// A leaf; with `requires_grad` it collects gradients in a sweep.
    pub fn leaf(value: Tensor, requires_grad: bool) -> Var {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            inputs: Vec::new(),
            function: None,
        }))
    }

    pub fn param(value: Tensor) -> Var {
        Self::leaf(value, true)
    }

    pub fn scalar(value: f64) -> Var {
        Self::constant(Tensor::scalar(value))
    }

    /// Record the result of an operation. If recording is off, or no input
    /// requires gradients, the result is a constant.
    pub fn from_op(value: Tensor, inputs: Vec<Var>, function: Box<dyn Function>) -> Var {
        let requires_grad = is_grad_enabled() && inputs.iter().any(|v| v.requires_grad());
        if !requires_grad {
            return Var::constant(value);
        }
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            inputs,
            function: Some(function),
        }))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.function.is_none()
    }

    /// A constant copy of the value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    pub fn item(&self) -> f64 {
        self.0.value.item()
    }
}

/// Gradients produced by a sweep, keyed by variable identity.
#[derive(Default)]
pub struct Gradients {
    map: HashMap<u64, Var>,
}

impl Gradients {
    pub fn get(&self, var: &Var) -> Option<&Tensor> {
        self.map.get(&var.id()).map(|v| v.value())
    }

    pub fn get_var(&self, var: &Var) -> Option<&Var> {
        self.map.get(&var.id())
    }

    /// Gradient for `var`, or zeros of its shape when it did not influence the root.
    pub fn get_or_zeros(&self, var: &Var) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn topo_order(root: &Var) -> Vec<Var> {
    let mut order = Vec::new();
    let mut visited = std::collections::HashSet::new();
    let mut stack: Vec<(Var, bool)> = vec![(root.clone(), false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            order.push(v);
            continue;
        }
        if !visited.insert(v.id()) {
            continue;
        }
        stack.push((v.clone(), true));
        for inp in &v.0.inputs {
            if inp.requires_grad() && !visited.contains(&inp.id()) {
                stack.push((inp.clone(), false));
            }
        }
    }
    order
}

/// Reverse-mode sweep from a scalar `root`, returning gradients for every
/// leaf that requires them.
pub fn backward(root: &Var) -> Gradients {
    sweep(root, None, false)
}

/// Gradients of a scalar `root` with respect to `wrt`. With `create_graph`
/// the returned gradients are themselves differentiable.
pub fn grad(root: &Var, wrt: &[Var], create_graph: bool) -> Vec<Option<Var>> {
    let g = sweep(root, Some(wrt), create_graph);
    wrt.iter().map(|w| g.map.get(&w.id()).cloned()).collect()
}

fn sweep(root: &Var, wrt: Option<&[Var]>, create_graph: bool) -> Gradients {
    assert_eq!(
        root.value().len(),
        1,
        "backward requires a scalar root, got shape {:?}",
        root.shape()
    );
    let mut result = Gradients::default();
    if !root.requires_grad() {
        return result;
    }
    let _mode = set_grad_enabled(create_graph);
    let wanted: Option<std::collections::HashSet<u64>> =
        wrt.map(|w| w.iter().map(|v| v.id()).collect());
    let order = topo_order(root);
    let mut grads: HashMap<u64, Var> = HashMap::new();
    grads.insert(root.id(), Var::constant(Tensor::ones(root.shape())));
    for node in order.iter().rev() {
        let Some(g) = grads.remove(&node.id()) else {
            continue;
        };
        let keep = match &wanted {
            Some(set) => set.contains(&node.id()),
            None => node.is_leaf(),
        };
        if let Some(function) = &node.0.function {
            if create_graph && !function.supports_higher_order() {
                panic!(
                    "operation `{}` does not support differentiating its gradient",
                    function.name()
                );
            }
            let input_grads = function.backward(&g, &node.0.inputs, node);
            debug_assert_eq!(input_grads.len(), node.0.inputs.len());
            for (inp, ig) in node.0.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !inp.requires_grad() {
                    continue;
                }
                debug_assert_eq!(
                    ig.shape(),
                    inp.shape(),
                    "gradient shape mismatch in `{}`",
                    function.name()
                );
                let acc = match grads.remove(&inp.id()) {
                    Some(prev) => prev.add(&ig),
                    None => ig,
                };
                grads.insert(inp.id(), acc);
            }
        }
        if keep {
            result.map.insert(node.id(), g);
        }
    }
    result
}

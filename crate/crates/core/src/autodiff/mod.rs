//! Dense float64 tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable, reference-counted graph node. Every
//! operation allocates a fresh output that remembers its parents and a
//! closure mapping the output gradient to parent gradients. Calling
//! [`Tensor::backward`] on a scalar walks the graph in reverse topological
//! order, visiting each node once and accumulating gradients additively.
//!
//! Graphs are single-threaded (`Rc`). Data-parallel training builds one graph
//! per shard from a shared [`ParamStore`] and sums the resulting
//! [`Gradients`] explicitly.

mod checkpoint;
pub mod gradcheck;
mod linalg;
mod nn;
mod ops;
mod optim;
mod params;
mod shape_ops;

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use nn::{GELU_COEFF, LAYER_NORM_EPS};
pub use optim::{Adam, AdamConfig, CosineSchedule, Sgd};
pub use params::{BoundParams, Gradients, ParamId, ParamStore, Parameter};

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("computation graph contains a cycle")]
    GraphCycle,
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl TensorError {
    pub fn kind(&self) -> &'static str {
        match self {
            TensorError::ShapeMismatch(_) => "ShapeMismatch",
            TensorError::NonScalarLoss(_) => "NonScalarLoss",
            TensorError::GraphCycle => "GraphCycle",
            TensorError::DuplicateParameter(_) => "DuplicateParameter",
            TensorError::UnknownParameter(_) => "UnknownParameter",
            TensorError::Checkpoint(_) => "CheckpointError",
            TensorError::Io(_) => "IoFailure",
        }
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;

type GradFn = Box<dyn Fn(&[f64]) -> Vec<Option<Vec<f64>>>>;

struct Backward {
    parents: Vec<Tensor>,
    /// Maps the output gradient to one optional gradient per parent.
    apply: GradFn,
}

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    backward: Option<Backward>,
}

#[derive(Clone)]
pub struct Tensor(Rc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("data", &self.0.data)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn from_parts(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, backward: Option<Backward>) -> Tensor {
        debug_assert_eq!(data.len(), numel(&shape));
        Tensor(Rc::new(Node {
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            backward,
        }))
    }

    /// Constant tensor (no gradient).
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if data.len() != numel(shape) {
            return Err(TensorError::ShapeMismatch(format!(
                "{} values for shape {shape:?}",
                data.len()
            )));
        }
        Ok(Tensor::from_parts(data, shape.to_vec(), false, None))
    }

    /// Leaf tensor that collects gradients.
    pub fn leaf(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let t = Tensor::new(data, shape)?;
        Ok(Tensor::from_parts(t.data().to_vec(), shape.to_vec(), true, None))
    }

    pub fn scalar(x: f64) -> Tensor {
        Tensor::from_parts(vec![x], vec![], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::from_parts(vec![0.0; numel(shape)], shape.to_vec(), false, None)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        Tensor::from_parts(vec![value; numel(shape)], shape.to_vec(), false, None)
    }

    /// Output of an operation. A backward record is kept only when some
    /// parent needs a gradient.
    pub(crate) fn from_op(data: Vec<f64>, shape: Vec<usize>, parents: Vec<Tensor>, apply: GradFn) -> Tensor {
        let requires_grad = parents.iter().any(Tensor::requires_grad);
        let backward = requires_grad.then(|| Backward { parents, apply });
        Tensor::from_parts(data, shape, requires_grad, backward)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    /// Same values, cut off from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::from_parts(self.0.data.clone(), self.0.shape.clone(), false, None)
    }

    fn id(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    fn accumulate(&self, g: Vec<f64>) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            None => *slot = Some(g),
        }
    }

    /// Nodes reachable from `self` that need gradients, parents before children.
    fn topo_order(&self) -> Result<Vec<Tensor>> {
        // 1 = on the DFS stack, 2 = finished
        let mut state: HashMap<usize, u8> = HashMap::new();
        let mut order = Vec::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        state.insert(self.id(), 1);
        while let Some((node, child)) = stack.pop() {
            let parents = node.0.backward.as_ref().map(|b| b.parents.as_slice()).unwrap_or(&[]);
            if child < parents.len() {
                let parent = parents[child].clone();
                stack.push((node, child + 1));
                if !parent.requires_grad() {
                    continue;
                }
                match state.get(&parent.id()) {
                    Some(1) => return Err(TensorError::GraphCycle),
                    Some(_) => {}
                    None => {
                        state.insert(parent.id(), 1);
                        stack.push((parent, 0));
                    }
                }
            } else {
                state.insert(node.id(), 2);
                order.push(node);
            }
        }
        Ok(order)
    }

    /// Populate gradients of every reachable tensor that requires them.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order()?;
        self.accumulate(vec![1.0]);
        for node in order.iter().rev() {
            let Some(bw) = node.0.backward.as_ref() else { continue };
            let Some(g) = node.grad() else { continue };
            let grads = (bw.apply)(&g);
            for (parent, pg) in bw.parents.iter().zip(grads) {
                if let Some(pg) = pg {
                    if parent.requires_grad() {
                        parent.accumulate(pg);
                    }
                }
            }
        }
        Ok(())
    }
}

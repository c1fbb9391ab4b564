//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tensor`] is a reference-counted node. Operations that consume at least
//! one gradient-requiring tensor record a backward rule and their parents;
//! [`Tensor::backward`] walks the recorded graph in reverse topological order
//! and accumulates into the `grad` buffers of leaf tensors.
//!
//! The operator set is closed (see [`ops`] and [`nn`]) and every operator is
//! covered by finite-difference checks in [`gradcheck`]. Element type is
//! generic so the same kernels can be checked in `f64`; networks use `f32`.

pub mod gradcheck;
pub mod nn;
pub mod ops;

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::iter::Sum;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("batch norm in training mode needs at least 2 samples, got {0}")]
    DegenerateBatch(usize),
    #[error("non-finite value {0}")]
    NonFinite(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Scalar types a tensor can hold.
pub trait Element:
    num_traits::Float + ndarray::LinalgScalar + Default + Sum + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Checkpoint dtype tag.
    const DTYPE_TAG: u8;
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Element for f32 {
    const DTYPE_TAG: u8 = 0;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    const DTYPE_TAG: u8 = 1;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Backward rule of a recorded operation.
pub trait BackwardFn<T: Element> {
    fn name(&self) -> &'static str;

    /// Returns one gradient per parent (`None` when the parent does not
    /// require one). `output` is the forward result.
    fn backward(&self, grad_out: &[T], parents: &[Tensor<T>], output: &[T]) -> Result<Vec<Option<Vec<T>>>>;
}

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording any graph.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let out = f();
    GRAD_ENABLED.with(|g| g.set(prev));
    out
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

struct Node<T: Element> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
    parents: Vec<Tensor<T>>,
    op: Option<Box<dyn BackwardFn<T>>>,
}

pub struct Tensor<T: Element = f32>(Rc<Node<T>>);

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self(Rc::clone(&self.0))
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.0.op.as_ref().map(|o| o.name()))
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Tensor<T> {
    fn build(shape: Vec<usize>, data: Vec<T>, requires_grad: bool, parents: Vec<Tensor<T>>, op: Option<Box<dyn BackwardFn<T>>>) -> Self {
        Self(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            parents,
            op,
        }))
    }

    /// Constant leaf.
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::Shape(format!(
                "shape {shape:?} needs {} values, got {}",
                numel(shape),
                data.len()
            )));
        }
        Ok(Self::build(shape.to_vec(), data, false, Vec::new(), None))
    }

    /// Trainable leaf: gradients accumulate into it.
    pub fn param(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let t = Self::new(shape, data)?;
        Ok(Self::build(t.0.shape.clone(), t.to_vec(), true, Vec::new(), None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::build(shape.to_vec(), vec![T::zero(); numel(shape)], false, Vec::new(), None)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::build(shape.to_vec(), vec![value; numel(shape)], false, Vec::new(), None)
    }

    pub fn scalar(value: T) -> Self {
        Self::build(Vec::new(), vec![value], false, Vec::new(), None)
    }

    /// Result of an operation. The graph is recorded only when some parent
    /// requires a gradient and recording is enabled.
    pub fn from_op(shape: Vec<usize>, data: Vec<T>, parents: Vec<Tensor<T>>, op: impl BackwardFn<T> + 'static) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        let record = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if record {
            Self::build(shape, data, true, parents, Some(Box::new(op)))
        } else {
            Self::build(shape, data, false, Vec::new(), None)
        }
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.op.is_none()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.0.op.as_ref().map(|o| o.name())
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.0.data.borrow()
    }

    /// Mutable access to the values, for optimizers and running statistics.
    /// Mutating a tensor that an unfinished graph still depends on produces
    /// wrong gradients.
    pub fn data_mut(&self) -> RefMut<'_, Vec<T>> {
        self.0.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.borrow().clone()
    }

    pub fn item(&self) -> T {
        self.0.data.borrow()[0]
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Constant copy cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.to_vec(), false, Vec::new(), None)
    }

    /// Backpropagates from this scalar into every reachable leaf that
    /// requires a gradient. Leaf gradients accumulate across calls.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(TensorError::Contract("backward root is not connected to any trainable tensor".into()));
        }
        let order = self.topo_order();
        let mut grads: HashMap<u64, Vec<T>> = HashMap::new();
        grads.insert(self.id(), vec![T::one()]);
        for node in order.iter().rev() {
            let Some(g) = grads.remove(&node.id()) else { continue };
            match &node.0.op {
                None => {
                    let mut slot = node.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a = *a + *b),
                        None => *slot = Some(g),
                    }
                }
                Some(op) => {
                    let out = node.0.data.borrow();
                    let parent_grads = op.backward(&g, &node.0.parents, &out)?;
                    for (p, pg) in node.0.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), p.numel(), "{} gradient size", op.name());
                        match grads.get_mut(&p.id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a = *a + *b),
                            None => {
                                grads.insert(p.id(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over gradient-requiring nodes (parents before children).
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.id()) {
                continue;
            }
            stack.push((node.clone(), true));
            for p in &node.0.parents {
                if p.requires_grad() && !visited.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }
}

/// A named tensor owned by a model.
#[derive(Debug, Clone)]
pub struct Parameter<T: Element = f32> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub trainable: bool,
}

impl<T: Element> Parameter<T> {
    pub fn trainable(name: impl Into<String>, tensor: Tensor<T>) -> Self {
        Self {
            name: name.into(),
            tensor,
            trainable: true,
        }
    }

    pub fn buffer(name: impl Into<String>, tensor: Tensor<T>) -> Self {
        Self {
            name: name.into(),
            tensor,
            trainable: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::ops;
    use super::*;

    #[test]
    fn sum_of_scaled_input() {
        let x = Tensor::<f64>::param(&[2, 3], vec![1.0; 6]).unwrap();
        let root = ops::sum(&ops::scale(&x, 2.0));
        root.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0; 6]);
    }

    #[test]
    fn square_gradient_and_accumulation() {
        let x = Tensor::<f64>::param(&[1], vec![3.0]).unwrap();
        let root = ops::sum(&ops::mul(&x, &x).unwrap());
        root.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0]);
        root.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![12.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn non_scalar_root_rejected() {
        let x = Tensor::<f32>::param(&[2], vec![1.0, 2.0]).unwrap();
        let y = ops::scale(&x, 3.0);
        assert!(matches!(y.backward(), Err(TensorError::Contract(_))));
        let c = Tensor::<f32>::scalar(1.0);
        assert!(matches!(c.backward(), Err(TensorError::Contract(_))));
    }

    #[test]
    fn no_grad_records_nothing() {
        let x = Tensor::<f32>::param(&[2], vec![1.0, 2.0]).unwrap();
        let y = no_grad(|| ops::scale(&x, 3.0));
        assert!(!y.requires_grad());
        assert!(y.is_leaf());
        assert!(grad_enabled());
    }

    #[test]
    fn shared_subexpression_gets_summed_gradient() {
        // f = sum(x*x + x) → 2x + 1
        let x = Tensor::<f64>::param(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let sq = ops::mul(&x, &x).unwrap();
        let f = ops::sum(&ops::add(&sq, &x).unwrap());
        f.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![3.0, -3.0, 2.0]);
    }

    #[test]
    fn shape_validation() {
        assert!(Tensor::<f32>::new(&[2, 2], vec![0.0; 3]).is_err());
        let s = Tensor::<f32>::scalar(4.0);
        assert_eq!(s.numel(), 1);
        assert_eq!(s.item(), 4.0);
    }
}

//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node. Values are computed
//! eagerly; [`Graph::backward`] walks the tape in reverse creation order.
//! Graphs are cheap, single-threaded and meant to be dropped after one
//! training step or one inference step.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::float::Float;
use crate::kernels;
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Vec<Var>),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Upsample {
        x: Var,
        factor: usize,
    },
    Squash {
        x: Var,
        group: usize,
        eps: T,
    },
    Route {
        words: Var,
        selection: Arc<Tensor<T>>,
        k: usize,
    },
    SumAll(Var),
    MeanAll(Var),
    Mse(Var, Var),
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<T: Float> {
    nodes: RefCell<Vec<Node<T>>>,
    params: RefCell<BTreeMap<String, Var>>,
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: BTreeMap<String, Var>,
}

impl<T: Float> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients of every parameter registered through [`Graph::param`],
    /// by name. Parameters that did not influence the loss get zeros.
    pub fn params(&mut self, store: &ParamStore<T>) -> BTreeMap<String, Tensor<T>> {
        let mut out = BTreeMap::new();
        for (name, v) in &self.params {
            let g = self.grads[v.0].take().unwrap_or_else(|| {
                Tensor::zeros(
                    store
                        .get(name)
                        .map(|t| t.shape().to_vec())
                        .unwrap_or_default(),
                )
            });
            out.insert(name.clone(), g);
        }
        out
    }
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Arc::new(value),
            op,
            needs_grad,
        });
        Var(nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// A leaf that takes no gradient.
    pub fn constant(&self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn constant_arc(&self, t: Arc<Tensor<T>>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(nodes.len() - 1)
    }

    /// A leaf that takes gradient but is not a named parameter.
    pub fn variable(&self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Registers (once per graph) the named parameter from `store`.
    ///
    /// # Panics
    /// If `name` is not in `store`.
    pub fn param(&self, store: &ParamStore<T>, name: &str) -> Var {
        if let Some(&v) = self.params.borrow().get(name) {
            return v;
        }
        let t = store
            .get_arc(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        let v = {
            let mut nodes = self.nodes.borrow_mut();
            nodes.push(Node {
                value: t,
                op: Op::Leaf,
                needs_grad: true,
            });
            Var(nodes.len() - 1)
        };
        self.params.borrow_mut().insert(name.to_string(), v);
        v
    }

    /// Same value, cut from the tape.
    pub fn detach(&self, v: Var) -> Var {
        self.constant_arc(self.value(v))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(&self.value(b), |x, y| x + y);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(&self.value(b), |x, y| x - y);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(&self.value(b), |x, y| x * y);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn scale(&self, a: Var, s: T) -> Var {
        let v = self.value(a).scale(s);
        let ng = self.needs(a);
        self.push(v, Op::Scale(a, s), ng)
    }

    /// Elementwise sum of equally shaped inputs, accumulated in order.
    pub fn sum(&self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "sum of zero tensors");
        let mut acc = (*self.value(xs[0])).clone();
        for &x in &xs[1..] {
            acc.add_assign(&self.value(x));
        }
        let ng = xs.iter().any(|&x| self.needs(x));
        self.push(acc, Op::Sum(xs.to_vec()), ng)
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let v = self.value(a).map(kernels::sigmoid);
        let ng = self.needs(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.tanh());
        let ng = self.needs(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn relu(&self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(T::zero()));
        let ng = self.needs(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn conv2d(&self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let bias = b.map(|b| self.value(b));
        let v = kernels::conv2d(&self.value(x), &self.value(w), bias.as_deref(), stride, pad);
        let ng = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(
            v,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            },
            ng,
        )
    }

    pub fn concat(&self, xs: &[Var], axis: usize) -> Var {
        let vals: Vec<_> = xs.iter().map(|&x| self.value(x)).collect();
        let refs: Vec<&Tensor<T>> = vals.iter().map(|a| a.as_ref()).collect();
        let v = Tensor::concat(&refs, axis);
        let ng = xs.iter().any(|&x| self.needs(x));
        self.push(
            v,
            Op::Concat {
                inputs: xs.to_vec(),
                axis,
            },
            ng,
        )
    }

    pub fn narrow(&self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let v = self.value(x).narrow(axis, start, len);
        let ng = self.needs(x);
        self.push(v, Op::Narrow { x, axis, start }, ng)
    }

    /// Splits `x` along `axis` into `parts` equal chunks.
    pub fn chunk(&self, x: Var, parts: usize, axis: usize) -> Vec<Var> {
        let dim = self.shape(x)[axis];
        assert!(
            dim.is_multiple_of(parts),
            "chunk: {dim} not divisible by {parts}"
        );
        let len = dim / parts;
        (0..parts)
            .map(|i| self.narrow(x, axis, i * len, len))
            .collect()
    }

    pub fn upsample_nearest(&self, x: Var, factor: usize) -> Var {
        let v = kernels::upsample_nearest(&self.value(x), factor);
        let ng = self.needs(x);
        self.push(v, Op::Upsample { x, factor }, ng)
    }

    pub fn squash(&self, x: Var, group: usize, eps: T) -> Var {
        let v = kernels::squash(&self.value(x), group, eps);
        let ng = self.needs(x);
        self.push(v, Op::Squash { x, group, eps }, ng)
    }

    /// See [`kernels::route`]. The selection is treated as a constant.
    pub fn route(&self, words: Var, selection: Arc<Tensor<T>>, k: usize) -> Var {
        let v = kernels::route(&self.value(words), &selection, k);
        let ng = self.needs(words);
        self.push(
            v,
            Op::Route {
                words,
                selection,
                k,
            },
            ng,
        )
    }

    pub fn sum_all(&self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        let ng = self.needs(x);
        self.push(v, Op::SumAll(x), ng)
    }

    pub fn mean_all(&self, x: Var) -> Var {
        let t = self.value(x);
        let n = T::from_usize(t.numel().max(1)).expect("count fits");
        let v = Tensor::scalar(t.sum() / n);
        let ng = self.needs(x);
        self.push(v, Op::MeanAll(x), ng)
    }

    /// Mean squared difference over all elements.
    pub fn mse(&self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mse shape mismatch");
        let n = T::from_usize(ta.numel().max(1)).expect("count fits");
        let s: T = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        let ng = self.needs(a) || self.needs(b);
        self.push(Tensor::scalar(s / n), Op::Mse(a, b), ng)
    }

    /// Reverse-mode differentiation of the scalar `root`.
    ///
    /// # Panics
    /// If `root` is not a single-element tensor.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[root.0].value.numel(),
            1,
            "backward root must be scalar"
        );
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(nodes[root.0].value.shape().to_vec(), T::one()));

        let accum = |grads: &mut Vec<Option<Tensor<T>>>, v: Var, g: Tensor<T>| {
            if !nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };

        for idx in (0..=root.0).rev() {
            let node = &nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let out = &node.value;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(gout);
                    continue;
                }
                Op::Add(a, b) => {
                    accum(&mut grads, *b, gout.clone());
                    accum(&mut grads, *a, gout);
                }
                Op::Sub(a, b) => {
                    accum(&mut grads, *b, gout.map(|x| -x));
                    accum(&mut grads, *a, gout);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    if nodes[a.0].needs_grad {
                        accum(&mut grads, *a, gout.zip_map(vb, |g, y| g * y));
                    }
                    if nodes[b.0].needs_grad {
                        accum(&mut grads, *b, gout.zip_map(va, |g, x| g * x));
                    }
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    accum(&mut grads, *a, gout.map(|g| g * s));
                }
                Op::Sum(xs) => {
                    for &x in xs {
                        accum(&mut grads, x, gout.clone());
                    }
                }
                Op::Sigmoid(a) => {
                    let one = T::one();
                    accum(&mut grads, *a, gout.zip_map(out, |g, y| g * y * (one - y)));
                }
                Op::Tanh(a) => {
                    let one = T::one();
                    accum(&mut grads, *a, gout.zip_map(out, |g, y| g * (one - y * y)));
                }
                Op::Relu(a) => {
                    let zero = T::zero();
                    accum(
                        &mut grads,
                        *a,
                        gout.zip_map(out, |g, y| if y > zero { g } else { zero }),
                    );
                }
                Op::Conv2d {
                    x,
                    w,
                    b,
                    stride,
                    pad,
                } => {
                    let need = (
                        nodes[x.0].needs_grad,
                        nodes[w.0].needs_grad,
                        b.is_some_and(|b| nodes[b.0].needs_grad),
                    );
                    let (dx, dw, db) = kernels::conv2d_backward(
                        &nodes[x.0].value,
                        &nodes[w.0].value,
                        &gout,
                        *stride,
                        *pad,
                        need,
                    );
                    if let Some(dx) = dx {
                        accum(&mut grads, *x, dx);
                    }
                    if let Some(dw) = dw {
                        accum(&mut grads, *w, dw);
                    }
                    if let (Some(b), Some(db)) = (b, db) {
                        accum(&mut grads, *b, db);
                    }
                }
                Op::Concat { inputs, axis } => {
                    let mut start = 0;
                    for &x in inputs {
                        let len = nodes[x.0].value.shape()[*axis];
                        if nodes[x.0].needs_grad {
                            accum(&mut grads, x, gout.narrow(*axis, start, len));
                        }
                        start += len;
                    }
                }
                Op::Narrow { x, axis, start } => {
                    let full = nodes[x.0].value.shape().to_vec();
                    let len = gout.shape()[*axis];
                    let mut parts = Vec::new();
                    let before = {
                        let mut s = full.clone();
                        s[*axis] = *start;
                        Tensor::zeros(s)
                    };
                    let after = {
                        let mut s = full.clone();
                        s[*axis] = full[*axis] - start - len;
                        Tensor::zeros(s)
                    };
                    if *start > 0 {
                        parts.push(&before);
                    }
                    parts.push(&gout);
                    if full[*axis] > start + len {
                        parts.push(&after);
                    }
                    accum(&mut grads, *x, Tensor::concat(&parts, *axis));
                }
                Op::Upsample { x, factor } => {
                    accum(
                        &mut grads,
                        *x,
                        kernels::upsample_nearest_backward(&gout, *factor),
                    );
                }
                Op::Squash { x, group, eps } => {
                    let dx = kernels::squash_backward(&nodes[x.0].value, &gout, *group, *eps);
                    accum(&mut grads, *x, dx);
                }
                Op::Route {
                    words,
                    selection,
                    k,
                } => {
                    let dw =
                        kernels::route_backward(nodes[words.0].value.shape(), selection, &gout, *k);
                    accum(&mut grads, *words, dw);
                }
                Op::SumAll(x) => {
                    let g = gout.data()[0];
                    accum(
                        &mut grads,
                        *x,
                        Tensor::full(nodes[x.0].value.shape().to_vec(), g),
                    );
                }
                Op::MeanAll(x) => {
                    let t = &nodes[x.0].value;
                    let n = T::from_usize(t.numel().max(1)).expect("count fits");
                    let g = gout.data()[0] / n;
                    accum(&mut grads, *x, Tensor::full(t.shape().to_vec(), g));
                }
                Op::Mse(a, b) => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let n = T::from_usize(va.numel().max(1)).expect("count fits");
                    let two = T::from_f64_lossy(2.0);
                    let c = gout.data()[0] * two / n;
                    let da = va.zip_map(vb, |x, y| (x - y) * c);
                    if nodes[b.0].needs_grad {
                        accum(&mut grads, *b, da.map(|x| -x));
                    }
                    accum(&mut grads, *a, da);
                }
            }
        }
        Gradients {
            grads,
            params: self.params.borrow().clone(),
        }
    }
}

//! Differentiable elementwise, reduction and shape operations.

use crate::graph::{Function, Var};
use crate::tensor::Tensor;

macro_rules! function {
    ($ty:ident, $name:literal, |$self_:ident, $g:ident, $inputs:ident, $out:ident| $body:expr) => {
        impl Function for $ty {
            fn name(&self) -> &'static str {
                $name
            }
            #[allow(unused_variables)]
            fn backward(&$self_, $g: &Var, $inputs: &[Var], $out: &Var) -> Vec<Option<Var>> {
                $body
            }
        }
    };
}

fn want(v: &Var) -> bool {
    v.requires_grad()
}

struct Add;
function!(Add, "add", |self, g, x, out| vec![
    want(&x[0]).then(|| g.sum_to(x[0].shape())),
    want(&x[1]).then(|| g.sum_to(x[1].shape())),
]);

struct Sub;
function!(Sub, "sub", |self, g, x, out| vec![
    want(&x[0]).then(|| g.sum_to(x[0].shape())),
    want(&x[1]).then(|| g.neg().sum_to(x[1].shape())),
]);

struct Mul;
function!(Mul, "mul", |self, g, x, out| vec![
    want(&x[0]).then(|| g.mul(&x[1]).sum_to(x[0].shape())),
    want(&x[1]).then(|| g.mul(&x[0]).sum_to(x[1].shape())),
]);

struct Div;
function!(Div, "div", |self, g, x, out| vec![
    want(&x[0]).then(|| g.div(&x[1]).sum_to(x[0].shape())),
    want(&x[1]).then(|| {
        g.mul(out).div(&x[1]).neg().sum_to(x[1].shape())
    }),
]);

struct Scale(f64);
function!(Scale, "scale", |self, g, x, out| vec![Some(g.scale(self.0))]);

struct Shift;
function!(Shift, "shift", |self, g, x, out| vec![Some(g.clone())]);

struct Exp;
function!(Exp, "exp", |self, g, x, out| vec![Some(g.mul(out))]);

struct Log;
function!(Log, "log", |self, g, x, out| vec![Some(g.div(&x[0]))]);

struct Powf(f64);
function!(Powf, "powf", |self, g, x, out| vec![Some(
    g.mul(&x[0].powf(self.0 - 1.0)).scale(self.0)
)]);

struct Sigmoid;
function!(Sigmoid, "sigmoid", |self, g, x, out| {
    // s' = s (1 - s)
    vec![Some(g.mul(&out.mul(&out.neg().shift(1.0))))]
});

struct Softplus;
function!(Softplus, "softplus", |self, g, x, out| vec![Some(
    g.mul(&x[0].sigmoid())
)]);

/// Piecewise-linear activations: the local slope is constant almost
/// everywhere, so the backward is a product with a fixed mask.
struct PiecewiseLinear {
    name: &'static str,
    slopes: Tensor,
}
impl Function for PiecewiseLinear {
    fn name(&self) -> &'static str {
        self.name
    }
    fn backward(&self, g: &Var, _x: &[Var], _out: &Var) -> Vec<Option<Var>> {
        vec![Some(g.mul(&Var::constant(self.slopes.clone())))]
    }
}

struct SumAll;
function!(SumAll, "sum", |self, g, x, out| vec![Some(
    g.reshape(&[]).broadcast_to(x[0].shape())
)]);

struct SumTo;
function!(SumTo, "sum_to", |self, g, x, out| vec![Some(
    g.broadcast_to(x[0].shape())
)]);

struct BroadcastTo;
function!(BroadcastTo, "broadcast_to", |self, g, x, out| vec![Some(
    g.sum_to(x[0].shape())
)]);

struct Reshape;
function!(Reshape, "reshape", |self, g, x, out| vec![Some(
    g.reshape(x[0].shape())
)]);

struct Permute(Vec<usize>);
function!(Permute, "permute", |self, g, x, out| {
    let mut inv = vec![0; self.0.len()];
    for (k, &p) in self.0.iter().enumerate() {
        inv[p] = k;
    }
    vec![Some(g.permute(&inv))]
});

struct Narrow {
    axis: usize,
    start: usize,
}
function!(Narrow, "narrow", |self, g, x, out| vec![Some(g.embed(
    self.axis,
    self.start,
    x[0].shape()[self.axis]
))]);

struct Embed {
    axis: usize,
    start: usize,
    len: usize,
}
function!(Embed, "embed", |self, g, x, out| vec![Some(g.narrow(
    self.axis, self.start, self.len
))]);

struct Concat {
    axis: usize,
}
function!(Concat, "concat", |self, g, x, out| {
    let mut start = 0;
    x.iter()
        .map(|inp| {
            let len = inp.shape()[self.axis];
            let piece = want(inp).then(|| g.narrow(self.axis, start, len));
            start += len;
            piece
        })
        .collect()
});

impl Var {
    pub fn add(&self, other: &Var) -> Var {
        let v = self.value().zip_map(other.value(), |a, b| a + b);
        Var::from_op(v, vec![self.clone(), other.clone()], Box::new(Add))
    }

    pub fn sub(&self, other: &Var) -> Var {
        let v = self.value().zip_map(other.value(), |a, b| a - b);
        Var::from_op(v, vec![self.clone(), other.clone()], Box::new(Sub))
    }

    pub fn mul(&self, other: &Var) -> Var {
        let v = self.value().zip_map(other.value(), |a, b| a * b);
        Var::from_op(v, vec![self.clone(), other.clone()], Box::new(Mul))
    }

    pub fn div(&self, other: &Var) -> Var {
        let v = self.value().zip_map(other.value(), |a, b| a / b);
        Var::from_op(v, vec![self.clone(), other.clone()], Box::new(Div))
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    /// Multiply by a constant.
    pub fn scale(&self, c: f64) -> Var {
        let v = self.value().map(|a| a * c);
        Var::from_op(v, vec![self.clone()], Box::new(Scale(c)))
    }

    /// Add a constant.
    pub fn shift(&self, c: f64) -> Var {
        let v = self.value().map(|a| a + c);
        Var::from_op(v, vec![self.clone()], Box::new(Shift))
    }

    pub fn exp(&self) -> Var {
        let v = self.value().map(f64::exp);
        Var::from_op(v, vec![self.clone()], Box::new(Exp))
    }

    pub fn ln(&self) -> Var {
        let v = self.value().map(f64::ln);
        Var::from_op(v, vec![self.clone()], Box::new(Log))
    }

    pub fn powf(&self, p: f64) -> Var {
        let v = self.value().map(|a| a.powf(p));
        Var::from_op(v, vec![self.clone()], Box::new(Powf(p)))
    }

    pub fn square(&self) -> Var {
        self.mul(self)
    }

    pub fn sigmoid(&self) -> Var {
        let v = self.value().map(sigmoid);
        Var::from_op(v, vec![self.clone()], Box::new(Sigmoid))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&self) -> Var {
        let v = self.value().map(softplus);
        Var::from_op(v, vec![self.clone()], Box::new(Softplus))
    }

    pub fn leaky_relu(&self, negative_slope: f64) -> Var {
        let x = self.value();
        let v = x.map(|a| if a > 0.0 { a } else { a * negative_slope });
        let slopes = x.map(|a| if a > 0.0 { 1.0 } else { negative_slope });
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(PiecewiseLinear {
                name: "leaky_relu",
                slopes,
            }),
        )
    }

    pub fn abs(&self) -> Var {
        let x = self.value();
        let v = x.map(f64::abs);
        let slopes = x.map(|a| if a > 0.0 { 1.0 } else if a < 0.0 { -1.0 } else { 0.0 });
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(PiecewiseLinear { name: "abs", slopes }),
        )
    }

    /// Sum of all entries (rank-0 result).
    pub fn sum(&self) -> Var {
        let v = Tensor::scalar(self.value().sum());
        Var::from_op(v, vec![self.clone()], Box::new(SumAll))
    }

    pub fn mean(&self) -> Var {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Reduce broadcast axes so the result has `shape`.
    pub fn sum_to(&self, shape: &[usize]) -> Var {
        if self.shape() == shape {
            return self.clone();
        }
        let v = self.value().sum_to(shape);
        Var::from_op(v, vec![self.clone()], Box::new(SumTo))
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Var {
        if self.shape() == shape {
            return self.clone();
        }
        let v = self.value().broadcast_to(shape);
        Var::from_op(v, vec![self.clone()], Box::new(BroadcastTo))
    }

    pub fn reshape(&self, shape: &[usize]) -> Var {
        if self.shape() == shape {
            return self.clone();
        }
        let v = self.value().reshape(shape);
        Var::from_op(v, vec![self.clone()], Box::new(Reshape))
    }

    pub fn permute(&self, perm: &[usize]) -> Var {
        let v = self.value().permute(perm);
        Var::from_op(v, vec![self.clone()], Box::new(Permute(perm.to_vec())))
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var {
        let v = self.value().narrow(axis, start, len);
        Var::from_op(v, vec![self.clone()], Box::new(Narrow { axis, start }))
    }

    /// Zero-pad along `axis` so this tensor sits at `start` of an extent `full`.
    pub fn embed(&self, axis: usize, start: usize, full: usize) -> Var {
        let len = self.shape()[axis];
        let v = self.value().embed(axis, start, full);
        Var::from_op(v, vec![self.clone()], Box::new(Embed { axis, start, len }))
    }

    pub fn concat(parts: &[Var], axis: usize) -> Var {
        let values: Vec<&Tensor> = parts.iter().map(|p| p.value()).collect();
        let v = Tensor::concat(&values, axis);
        Var::from_op(v, parts.to_vec(), Box::new(Concat { axis }))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

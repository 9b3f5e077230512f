use proptest::prelude::*;
use rand::SeedableRng;
use rand::rngs::StdRng;
use tripatch_autograd::gradcheck::{numerical_gradient, relative_error};
use tripatch_autograd::{backward, grad, Tensor, Var};

fn check_unary(name: &str, x: Tensor, f: impl Fn(&Var) -> Var) {
    let v = Var::param(x.clone());
    let g = backward(&f(&v).sum());
    let analytic = g.get_or_zeros(&v);
    let numeric = numerical_gradient(&x, 1e-6, |t| f(&Var::constant(t.clone())).value().sum());
    let err = relative_error(&analytic, &numeric, 1e-8);
    assert!(err < 1e-6, "{name}: relative error {err}");
}

#[test]
fn elementwise_gradients_match_finite_differences() {
    let mut rng = StdRng::seed_from_u64(1);
    let x = Tensor::uniform(&[3, 4], 0.2, 2.0, &mut rng);
    let y = Var::constant(Tensor::uniform(&[4], -1.0, 1.0, &mut rng));
    check_unary("exp", x.clone(), |v| v.exp());
    check_unary("ln", x.clone(), |v| v.ln());
    check_unary("powf", x.clone(), |v| v.powf(-0.5));
    check_unary("sigmoid", x.clone(), |v| v.sigmoid().scale(3.0));
    check_unary("softplus", x.clone(), |v| v.softplus());
    check_unary("mul-broadcast", x.clone(), |v| v.mul(&y).square());
    check_unary("div-broadcast", x.clone(), |v| y.div(v));
    check_unary("sub", x.clone(), |v| y.sub(v).square());
    check_unary("leaky", x.map(|a| a - 1.1), |v| v.leaky_relu(0.2).square());
    check_unary("permute", x.clone(), |v| {
        v.permute(&[1, 0]).mul(&Var::constant(Tensor::from_fn(&[4, 3], |i| i as f64)))
    });
    check_unary("narrow-concat", x.clone(), |v| {
        let a = v.narrow(1, 0, 1).scale(2.0);
        let b = v.narrow(1, 1, 3).square();
        Var::concat(&[b, a], 1).square()
    });
    check_unary("matmul", x.clone(), |v| {
        let w = Var::constant(Tensor::from_fn(&[4, 2], |i| i as f64 * 0.3 - 1.0));
        v.matmul(&w).square()
    });
    check_unary("matmul-t", x.clone(), |v| {
        let w = Var::constant(Tensor::from_fn(&[2, 3], |i| i as f64 * 0.3 - 1.0));
        v.matmul_t(&w, true, true).square()
    });
}

#[test]
fn image_op_gradients_match_finite_differences() {
    let mut rng = StdRng::seed_from_u64(2);
    let x = Tensor::uniform(&[2, 4, 4, 3], -1.0, 1.0, &mut rng);
    let w = Var::constant(Tensor::uniform(&[27, 2], -1.0, 1.0, &mut rng));
    check_unary("conv3", x.clone(), |v| v.conv2d(&w, 3).square());
    check_unary("pool", x.clone(), |v| v.avg_pool2().square());
    check_unary("upsample", x.clone(), |v| v.upsample2().narrow(1, 1, 5).square());
    check_unary("broadcast", x.narrow(1, 0, 1), |v| {
        v.broadcast_to(&[2, 4, 4, 3]).mul(&Var::constant(x.clone()))
    });
}

#[test]
fn second_order_gradient_penalty_matches_finite_differences() {
    // penalty(w) = |d/dx f(x; w)|^2 with f(x; w) = sum(leaky(conv(x, w))^2);
    // its gradient in w needs a differentiable backward.
    let mut rng = StdRng::seed_from_u64(3);
    let x = Tensor::uniform(&[1, 4, 4, 2], -1.0, 1.0, &mut rng);
    let w0 = Tensor::uniform(&[18, 3], -0.5, 0.5, &mut rng);
    let penalty = |w: &Var| {
        let xv = Var::param(x.clone());
        let out = xv.conv2d(w, 3).leaky_relu(0.2).square().avg_pool2().sum();
        let g = grad(&out, &[xv], true)[0].clone().unwrap();
        g.square().sum()
    };
    let w = Var::param(w0.clone());
    let analytic = backward(&penalty(&w)).get_or_zeros(&w);
    let numeric = numerical_gradient(&w0, 1e-6, |t| penalty(&Var::param(t.clone())).item());
    let err = relative_error(&analytic, &numeric, 1e-8);
    assert!(err < 1e-5, "second-order relative error {err}");
}

proptest! {
    #[test]
    fn sum_to_is_adjoint_of_broadcast(rows in 1usize..5, cols in 1usize..5, seed in 0u64..1000) {
        // <broadcast(a), b> == <a, sum_to(b)>
        let mut rng = StdRng::seed_from_u64(seed);
        let a = Tensor::uniform(&[rows, 1], -1.0, 1.0, &mut rng);
        let b = Tensor::uniform(&[rows, cols], -1.0, 1.0, &mut rng);
        let lhs: f64 = a.broadcast_to(&[rows, cols]).data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.data().iter().zip(b.sum_to(&[rows, 1]).data()).map(|(x, y)| x * y).sum();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col(h in 1usize..5, w in 1usize..5, seed in 0u64..1000) {
        let mut rng = StdRng::seed_from_u64(seed);
        let x = Tensor::uniform(&[1, h, w, 2], -1.0, 1.0, &mut rng);
        let cols = Var::constant(x.clone()).im2col(3);
        let y = Tensor::uniform(cols.shape(), -1.0, 1.0, &mut rng);
        let geo = tripatch_autograd::ConvGeometry { batch: 1, height: h, width: w, channels: 2, kernel: 3 };
        let folded = Var::constant(y.clone()).col2im(geo);
        let lhs: f64 = cols.value().data().iter().zip(y.data()).map(|(p, q)| p * q).sum();
        let rhs: f64 = x.data().iter().zip(folded.value().data()).map(|(p, q)| p * q).sum();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }
}

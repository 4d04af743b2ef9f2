//! Reverse-mode differentiation over dense rank-2 tensors.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s. Two reverse
//! sweeps are available:
//!
//! * [`Tape::backward`] computes numeric gradients of a scalar root. It does not
//!   mutate the tape, so repeated sweeps from the same root return identical
//!   gradients.
//! * [`Tape::grad`] records the gradient computation itself as tape nodes. The
//!   returned vars can be fed into further computation and differentiated
//!   again, which is what unrolled inner-loop training needs.
//!
//! Gradient accumulation always walks node ids in reverse creation order, so
//! results are bit-reproducible for identical inputs.

mod ops;
mod tape;

pub use ops::Op;
pub use tape::{Gradients, Tape, Var};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use crate::testutil::{central_diff, rel_err};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
        let m = random(rng, n, n);
        m.zip_map(&m.transpose(), |a, b| 0.5 * (a + b))
    }

    /// Compare analytic and finite-difference gradients of a scalar function of
    /// one input, and also check the recorded (graph) gradient agrees.
    fn check_unary(x0: &Tensor, f: impl for<'t> Fn(Var<'t>) -> Var<'t>, tol: f64) {
        let tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let y = f(x);
        let g = tape.backward(y).unwrap().wrt(x);
        let fd = central_diff(x0, 1e-5, |t| {
            let tape = Tape::new();
            f(tape.leaf(t.clone())).item()
        });
        assert!(rel_err(&g, &fd) < tol, "rel err {} ", rel_err(&g, &fd));
        let gg = tape.grad(y, &[x]).unwrap()[0].value();
        assert!(gg.max_abs_diff(&g) < 1e-12);
    }

    #[test]
    fn sigmoid_at_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = x.sigmoid();
        assert_eq!(y.item(), 0.5);
        assert_eq!(tape.backward(y).unwrap().wrt(x).item(), 0.25);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(1, 2, vec![-800.0, 800.0]).unwrap());
        let y = x.sigmoid().value();
        assert_eq!(y.data(), &[0.0, 1.0]);
        assert!(y.is_finite());
    }

    #[test]
    fn relu_at_negative_one() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(-1.0));
        let y = x.relu();
        assert_eq!(y.item(), 0.0);
        assert_eq!(tape.backward(y).unwrap().wrt(x).item(), 0.0);
    }

    #[test]
    fn sigmoid_derivative_at_two_matches_fd() {
        check_unary(&Tensor::scalar(2.0), |x| x.sigmoid().sum(), 1e-6);
    }

    #[test]
    fn log_of_non_positive_is_domain_error() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(1, 2, vec![1.0, 0.0]).unwrap());
        assert!(matches!(
            x.ln(),
            Err(crate::DsbdError::Domain { op: "log", .. })
        ));
    }

    #[test]
    fn matmul_sum_gradient_is_broadcast_row_sums_of_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a0 = random(&mut rng, 4, 4);
        let b0 = random(&mut rng, 4, 4);
        let tape = Tape::new();
        let a = tape.leaf(a0.clone());
        let b = tape.constant(b0.clone());
        let y = a.matmul(b).unwrap().sum();
        let g = tape.backward(y).unwrap().wrt(a);
        // d/dA_ik sum_ij (AB)_ij = sum_j B_kj
        let rs = b0.row_sums();
        let expected = Tensor::from_fn(4, 4, |_, k| rs.get(k, 0));
        assert!(g.max_abs_diff(&expected) < 1e-12);
        let fd = central_diff(&a0, 1e-5, |t| t.matmul(&b0).sum());
        assert!(rel_err(&g, &fd) < 1e-6);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(2, 3));
        let b = tape.leaf(Tensor::zeros(2, 3));
        assert!(matches!(
            a.matmul(b),
            Err(crate::DsbdError::Dimension { .. })
        ));
    }

    #[test]
    fn trace_pow3_of_triangle_is_six() {
        let tri = Tensor::from_rows(&[
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ])
        .unwrap();
        // brute-force closed 3-walks
        let mut walks = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    walks += tri.get(i, j) * tri.get(j, k) * tri.get(k, i);
                }
            }
        }
        assert_eq!(walks, 6.0);
        let tape = Tape::new();
        assert_eq!(tape.leaf(tri).trace_pow3().unwrap().item(), walks);
        assert_eq!(tape.leaf(Tensor::zeros(4, 4)).trace_pow3().unwrap().item(), 0.0);
        assert!(tape.leaf(Tensor::zeros(2, 3)).trace_pow3().is_err());
    }

    #[test]
    fn trace_pow3_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a0 = random_sym(&mut rng, 5);
        check_unary(&a0, |a| a.trace_pow3().unwrap(), 1e-5);
    }

    #[test]
    fn every_op_matches_fd_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let r = rng.random_range(1..5);
            let c = rng.random_range(1..5);
            let x0 = random(&mut rng, r, c);
            let w0 = random(&mut rng, c, 3);
            let pos0 = x0.map(|v| v.abs() + 0.5);
            let row0 = random(&mut rng, 1, c);
            let col0 = random(&mut rng, r, 1);
            let sq0 = random(&mut rng, 3, 3);
            let w = w0.clone();
            check_unary(&x0, move |x| {
                let wv = x.tape().constant(w.clone());
                x.matmul(wv).unwrap().square().sum()
            }, 1e-4);
            check_unary(&x0, |x| x.t().square().sum(), 1e-4);
            check_unary(&x0, |x| x.mul(x).unwrap().add(x).unwrap().sub(x.scale(3.0)).unwrap().sum(), 1e-4);
            check_unary(&x0, |x| x.sigmoid().sum(), 1e-4);
            check_unary(&x0, |x| x.relu().square().sum(), 1e-4);
            check_unary(&x0, |x| x.exp().sum(), 1e-4);
            check_unary(&x0, |x| x.add_scalar(0.3).square().mean(), 1e-4);
            check_unary(&pos0, |x| x.ln().unwrap().sum(), 1e-4);
            check_unary(&pos0, |x| x.sqrt().sum(), 1e-4);
            check_unary(&pos0, |x| x.powf(-0.5).sum(), 1e-4);
            check_unary(&x0, |x| x.row_sums().square().sum(), 1e-4);
            check_unary(&x0, |x| x.col_sums().square().sum(), 1e-4);
            check_unary(&row0, |x| x.expand(4, c).unwrap().square().sum(), 1e-4);
            check_unary(&col0, |x| x.expand(r, 3).unwrap().sigmoid().sum(), 1e-4);
            check_unary(&Tensor::scalar(0.7), |x| x.expand(2, 2).unwrap().exp().sum(), 1e-4);
            check_unary(&col0, |x| {
                let m = x.tape().constant(Tensor::ones(r, 2));
                m.scale_rows(x).unwrap().square().sum()
            }, 1e-4);
            check_unary(&sq0, |x| x.trace_pow3().unwrap(), 1e-4);
        }
    }

    #[test]
    fn second_order_through_recorded_gradient() {
        // f(x) = sum(sigmoid(W x)^2); check d/dx of |grad_W f|^2 against FD.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w0 = random(&mut rng, 3, 3);
        let x0 = random(&mut rng, 3, 2);
        fn h<'t>(x: Var<'t>, w: Var<'t>) -> Var<'t> {
            w.matmul(x).unwrap().sigmoid().square().sum()
        }
        let outer = |tape: &Tape, x0: &Tensor| -> (f64, Tensor) {
            let x = tape.leaf(x0.clone());
            let w = tape.leaf(w0.clone());
            let f = h(x, w);
            let gw = tape.grad(f, &[w]).unwrap()[0];
            let obj = gw.square().sum();
            let gx = tape.backward(obj).unwrap().wrt(x);
            (obj.item(), gx)
        };
        let (_, g) = outer(&Tape::new(), &x0);
        let fd = central_diff(&x0, 1e-5, |t| outer(&Tape::new(), t).0);
        assert!(rel_err(&g, &fd) < 1e-6, "{}", rel_err(&g, &fd));
    }

    #[test]
    fn constant_root_has_zero_gradients() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::ones(2, 2));
        let c = tape.scalar(4.0);
        let g = tape.backward(c).unwrap();
        assert_eq!(g.wrt(x), Tensor::zeros(2, 2));
    }

    #[test]
    fn sum_of_leaf_has_unit_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::full(2, 3, 0.4));
        let g = tape.backward(x.sum()).unwrap();
        assert_eq!(g.wrt(x), Tensor::ones(2, 3));
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::ones(2, 2));
        assert!(matches!(
            tape.backward(x.sigmoid()),
            Err(crate::DsbdError::Contract(_))
        ));
    }

    #[test]
    fn repeated_backward_is_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tape = Tape::new();
        let x = tape.leaf(random(&mut rng, 3, 3));
        let y = x.matmul(x).unwrap().sigmoid().sum();
        let g1 = tape.backward(y).unwrap().wrt(x);
        let g2 = tape.backward(y).unwrap().wrt(x);
        assert_eq!(g1.data(), g2.data());
    }

    #[test]
    fn seeded_backward_matches_weighted_sum() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(1, 3, vec![0.1, -0.2, 0.3]).unwrap());
        let y = x.sigmoid();
        let seed = Tensor::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let g = tape.backward_seeded(&[(y, seed.clone())]).unwrap().wrt(x);
        let w = tape.constant(seed);
        let g2 = tape.backward(y.mul(w).unwrap().sum()).unwrap().wrt(x);
        assert!(g.max_abs_diff(&g2) < 1e-15);
    }

    #[test]
    fn foreign_var_is_rejected() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let x = t2.leaf(Tensor::scalar(1.0));
        assert!(t1.backward(x).is_err());
    }
}

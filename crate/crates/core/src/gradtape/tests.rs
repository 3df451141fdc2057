use super::*;
use crate::numerics::RngStream;

fn row(v: &[f64]) -> DenseMatrix {
    DenseMatrix::row_vector(v).unwrap()
}

#[test]
fn identity_graph_reproduces_input() {
    let mut t = Tape::new();
    let x = t.leaf("x", row(&[1.0, -2.0]));
    t.forward(&[("x", row(&[3.0, 4.0]))]).unwrap();
    assert_eq!(t.value(x), &row(&[3.0, 4.0]));
}

#[test]
fn sum_of_squares_value_and_gradient() {
    let mut t = Tape::new();
    let x = t.leaf("x", row(&[1.0, 2.0]));
    let sq = t.square(x).unwrap();
    let y = t.sum(sq).unwrap();
    assert_eq!(t.scalar(y), 5.0);
    assert_eq!(t.backward(y, &[x]).unwrap()[0], row(&[2.0, 4.0]));
}

#[test]
fn leaky_relu_value_and_left_limit() {
    let mut t = Tape::new();
    let x = t.leaf("x", row(&[-1.0, 3.0]));
    let a = t.leaky_relu(x, 0.2).unwrap();
    assert_eq!(t.value(a), &row(&[-0.2, 3.0]));

    let mut t = Tape::new();
    let x = t.leaf("x", row(&[-1.0, 0.0, 3.0]));
    let a = t.leaky_relu(x, 0.2).unwrap();
    let y = t.sum(a).unwrap();
    assert_eq!(t.backward(y, &[x]).unwrap()[0], row(&[0.2, 0.2, 1.0]));
}

#[test]
fn sum_gradient_is_ones_and_second_derivative_zero() {
    let mut t = Tape::new();
    let x = t.leaf("x", row(&[0.5, -1.5, 2.0]));
    let y = t.sum(x).unwrap();
    let grads = t.leaf_gradients(y).unwrap();
    assert_eq!(grads, alloc::vec![("x".into(), row(&[1.0; 3]))]);

    let (mut g, ids) = t.grad_as_tape(y, &[x]).unwrap();
    assert_eq!(g.value(ids[0]), &row(&[1.0; 3]));
    let s = g.sum(ids[0]).unwrap();
    assert_eq!(g.backward(s, &[x]).unwrap()[0], row(&[0.0; 3]));
}

#[test]
fn second_derivative_of_square_is_two() {
    let mut t = Tape::new();
    let x = t.leaf("x", row(&[1.0, -3.0, 0.25]));
    let sq = t.square(x).unwrap();
    let y = t.sum(sq).unwrap();
    let (mut g, ids) = t.grad_as_tape(y, &[x]).unwrap();
    assert_eq!(g.value(ids[0]), &row(&[2.0, -6.0, 0.5]));
    let s = g.sum(ids[0]).unwrap();
    assert_eq!(g.backward(s, &[x]).unwrap()[0], row(&[2.0; 3]));
}

#[test]
fn non_scalar_output_is_rejected() {
    let mut t = Tape::new();
    let x = t.leaf("x", row(&[1.0, 2.0]));
    assert!(matches!(t.backward(x, &[x]), Err(Error::NodeShape { .. })));
    assert!(matches!(t.grad_nodes(x, &[x]), Err(Error::NodeShape { .. })));
}

#[test]
fn shape_errors_name_the_node() {
    let mut t = Tape::new();
    let a = t.leaf("a", DenseMatrix::zeros(2, 3));
    let b = t.leaf("b", DenseMatrix::zeros(2, 3));
    assert!(matches!(t.matmul(a, b), Err(Error::NodeShape { node: 2, .. })));
    assert!(t.forward(&[("a", DenseMatrix::zeros(3, 3))]).is_err());
}

#[test]
fn replay_is_bit_identical() {
    let mut rng = RngStream::new(5);
    let mut t = Tape::new();
    let w = t.leaf("w", rng.gaussian_matrix(4, 3));
    let x = t.leaf("x", rng.gaussian_matrix(3, 6));
    let h = t.matmul(w, x).unwrap();
    let a = t.tanh(h).unwrap();
    let y = t.mean(a).unwrap();
    let g1 = t.backward(y, &[w, x]).unwrap();
    let v1 = t.scalar(y);
    t.recompute_from(0).unwrap();
    assert_eq!(t.scalar(y).to_bits(), v1.to_bits());
    assert_eq!(t.backward(y, &[w, x]).unwrap(), g1);
}

#[test]
fn linear_tape_passes_fd_check_exactly() {
    // Dyadic entries and step keep every evaluation exact.
    let mut t = Tape::new();
    let a = t.constant(DenseMatrix::from_fn(3, 4, |i, j| (i as f64 - 2.0 * j as f64) / 4.0));
    let x = t.leaf("x", DenseMatrix::from_fn(4, 2, |i, j| (3.0 * i as f64 + j as f64) / 8.0));
    let ax = t.matmul(a, x).unwrap();
    let s = t.affine(ax, 2.5, 1.0).unwrap();
    let y = t.sum(s).unwrap();
    let rep = finite_diff_check(&t, y, &[x], libm::ldexp(1.0, -14)).unwrap();
    assert!(rep.max_rel_error <= 1e-10, "{rep:?}");
    assert_eq!(rep.checked, 8);
}

#[test]
fn fd_step_precondition() {
    let mut t = Tape::new();
    let x = t.leaf("x", row(&[1.0]));
    let y = t.sum(x).unwrap();
    assert!(matches!(finite_diff_check(&t, y, &[x], 1e-3), Err(Error::Precondition(_))));
    assert!(matches!(finite_diff_check(&t, y, &[x], 1e-9), Err(Error::Precondition(_))));
}

#[test]
fn interpolation_matches_hand_values() {
    let mut t = Tape::new();
    // Two rows, l = 2: knots at 0, 0.5, 1.
    let f = t.leaf("f", DenseMatrix::from_rows(&[&[0.0, 0.2, 1.0], &[0.0, 0.5, 1.0]]).unwrap());
    let x = t.leaf("x", DenseMatrix::from_rows(&[&[0.25, 0.5, 0.75], &[0.1, 1.0, 0.0]]).unwrap());
    let y = t.linear_interp(f, x).unwrap();
    let want = [0.1, 0.2, 0.6, 0.1, 1.0, 0.0];
    for (a, b) in t.value(y).as_slice().iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    let p = t.constant(DenseMatrix::from_rows(&[&[0.1, 0.2, 0.6], &[0.1, 1.0, 0.0]]).unwrap());
    let inv = t.inverse_interp(f, p).unwrap();
    let want = [0.25, 0.5, 0.75, 0.1, 1.0, 0.0];
    for (a, b) in t.value(inv).as_slice().iter().zip(want) {
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
    }
}

#[test]
fn inverse_interp_flat_segment_takes_left_edge() {
    let mut t = Tape::new();
    let f = t.constant(row(&[0.0, 0.5, 0.5, 1.0]));
    let p = t.constant(row(&[0.5, 0.0]));
    let inv = t.inverse_interp(f, p).unwrap();
    let v = t.value(inv).as_slice();
    assert!((v[0] - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(v[1], 0.0);
}

/// Value at least `gap` away from every multiple of `1/knots` inside [0,1].
fn off_knot(rng: &mut RngStream, knots: usize, gap: f64) -> f64 {
    loop {
        let v = rng.uniform01();
        let s = v * knots as f64;
        if (s - libm::round(s)).abs() / knots as f64 >= gap {
            return v;
        }
    }
}

fn away_from_zero(rng: &mut RngStream, rows: usize, cols: usize) -> DenseMatrix {
    rng.gaussian_matrix(rows, cols)
        .map(|v| if v.abs() < 1e-3 { v.signum() * 1e-3 + v } else { v })
}

fn filled_with(rows: usize, cols: usize, mut f: impl FnMut() -> f64) -> DenseMatrix {
    DenseMatrix::new(rows, cols, (0..rows * cols).map(|_| f()).collect()).unwrap()
}

type Builder = fn(&mut Tape, &mut RngStream) -> (NodeId, alloc::vec::Vec<NodeId>);

fn weighted_sum(t: &mut Tape, rng: &mut RngStream, out: NodeId) -> NodeId {
    let (r, c) = t.value(out).shape();
    let w = t.constant(rng.gaussian_matrix(r, c));
    let p = t.mul(out, w).unwrap();
    t.sum(p).unwrap()
}

fn unary(op: Op, rows: usize, cols: usize) -> impl Fn(&mut Tape, &mut RngStream) -> (NodeId, alloc::vec::Vec<NodeId>) {
    move |t, rng| {
        let x = t.leaf("x", away_from_zero(rng, rows, cols));
        let y = t.push(op.clone(), &[x]).unwrap();
        (weighted_sum(t, rng, y), alloc::vec![x])
    }
}

type Build = dyn Fn(&mut Tape, &mut RngStream) -> (NodeId, alloc::vec::Vec<NodeId>);

fn run_op_property(name: &str, build: &Build) {
    let mut rng = RngStream::new(0xF1D0);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let mut t = Tape::new();
        let (y, wrt) = build(&mut t, &mut rng);
        let rep = finite_diff_check(&t, y, &wrt, 1e-6).unwrap();
        worst = worst.max(rep.max_rel_error);
    }
    assert!(worst <= 1e-4, "{name}: {worst}");
}

#[test]
fn every_op_kind_passes_fd_check() {
    let unaries: &[(&str, Op, usize, usize)] = &[
        ("transpose", Op::Transpose, 2, 3),
        ("affine", Op::Affine { scale: -1.5, shift: 0.3 }, 2, 3),
        ("leaky-relu", Op::LeakyRelu { slope: 0.2 }, 3, 3),
        ("elu", Op::Elu, 3, 3),
        ("elu-deriv", Op::EluDeriv, 3, 3),
        ("tanh", Op::Tanh, 2, 3),
        ("exp", Op::Exp, 2, 3),
        ("square", Op::Square, 2, 3),
        ("sum", Op::Sum, 2, 3),
        ("mean", Op::Mean, 2, 3),
        ("col-sums", Op::ColSums, 3, 2),
        ("row-sums", Op::RowSums, 3, 2),
        ("broadcast-row", Op::RepeatRows { rows: 3 }, 1, 2),
        ("broadcast-col", Op::RepeatCols { cols: 3 }, 2, 1),
        ("broadcast-scalar", Op::BroadcastScalar { rows: 2, cols: 2 }, 1, 1),
        ("reshape", Op::Reshape { rows: 3, cols: 2 }, 2, 3),
        ("l2-norm-rows", Op::RowNorms, 2, 3),
        ("min-reduce", Op::RowMin, 2, 4),
        ("max-reduce", Op::RowMax, 2, 4),
        ("softmax", Op::SoftmaxRows, 2, 4),
        ("slice", Op::SliceCols { start: 1, len: 2 }, 2, 4),
        ("pad", Op::PadCols { start: 1, total: 5 }, 2, 3),
        ("step", Op::Step, 2, 3),
        ("arg-mask", Op::RowArgMask { max: true }, 2, 3),
    ];
    for (name, op, r, c) in unaries {
        run_op_property(name, &unary(op.clone(), *r, *c));
    }

    let binaries: &[(&str, Builder)] = &[
        ("matmul", |t, rng| {
            let a = t.leaf("a", rng.gaussian_matrix(2, 3));
            let b = t.leaf("b", rng.gaussian_matrix(3, 2));
            let y = t.matmul(a, b).unwrap();
            (weighted_sum(t, rng, y), alloc::vec![a, b])
        }),
        ("add", |t, rng| {
            let a = t.leaf("a", rng.gaussian_matrix(2, 3));
            let b = t.leaf("b", rng.gaussian_matrix(2, 3));
            let y = t.add(a, b).unwrap();
            (weighted_sum(t, rng, y), alloc::vec![a, b])
        }),
        ("sub", |t, rng| {
            let a = t.leaf("a", rng.gaussian_matrix(2, 3));
            let b = t.leaf("b", rng.gaussian_matrix(2, 3));
            let y = t.sub(a, b).unwrap();
            (weighted_sum(t, rng, y), alloc::vec![a, b])
        }),
        ("mul", |t, rng| {
            let a = t.leaf("a", rng.gaussian_matrix(2, 3));
            let b = t.leaf("b", rng.gaussian_matrix(2, 3));
            let y = t.mul(a, b).unwrap();
            (weighted_sum(t, rng, y), alloc::vec![a, b])
        }),
        ("div", |t, rng| {
            let a = t.leaf("a", rng.gaussian_matrix(2, 3));
            let d = rng.uniform_matrix(2, 3).map(|v| 0.5 + v);
            let b = t.leaf("b", d);
            let y = t.div(a, b).unwrap();
            (weighted_sum(t, rng, y), alloc::vec![a, b])
        }),
        ("sqrt", |t, rng| {
            let x = t.leaf("x", rng.uniform_matrix(2, 3).map(|v| 0.1 + v));
            let y = t.sqrt(x).unwrap();
            (weighted_sum(t, rng, y), alloc::vec![x])
        }),
        ("concat", |t, rng| {
            let a = t.leaf("a", rng.gaussian_matrix(2, 1));
            let b = t.leaf("b", rng.gaussian_matrix(2, 3));
            let y = t.concat_cols(&[a, b]).unwrap();
            (weighted_sum(t, rng, y), alloc::vec![a, b])
        }),
        ("gather", |t, rng| {
            let table = t.leaf("t", rng.gaussian_matrix(2, 4));
            let idx = filled_with(2, 5, || rng.below(4) as f64);
            let idx = t.constant(idx);
            let y = t.gather_rows(table, idx).unwrap();
            (weighted_sum(t, rng, y), alloc::vec![table])
        }),
        ("scatter", |t, rng| {
            let src = t.leaf("s", rng.gaussian_matrix(2, 5));
            let idx = filled_with(2, 5, || rng.below(3) as f64);
            let idx = t.constant(idx);
            let y = t.scatter_rows(src, idx, 3).unwrap();
            (weighted_sum(t, rng, y), alloc::vec![src])
        }),
        ("linear-interp", |t, rng| {
            let table = t.leaf("t", rng.gaussian_matrix(2, 5));
            let xs = filled_with(2, 6, || off_knot(rng, 4, 1e-3));
            let x = t.leaf("x", xs);
            let y = t.linear_interp(table, x).unwrap();
            (weighted_sum(t, rng, y), alloc::vec![table, x])
        }),
        ("inverse-interp", |t, rng| {
            // Strictly increasing rows from 0 to 1.
            let mut f = DenseMatrix::zeros(2, 5);
            for i in 0..2 {
                let steps: alloc::vec::Vec<f64> = (0..4).map(|_| 0.2 + rng.uniform01()).collect();
                let total: f64 = steps.iter().sum();
                let mut acc = 0.0;
                for (k, s) in steps.iter().enumerate() {
                    acc += s / total;
                    f[(i, k + 1)] = acc;
                }
            }
            let table = t.leaf("t", f);
            let p = t.leaf("p", filled_with(2, 6, || 0.01 + 0.98 * rng.uniform01()));
            let y = t.inverse_interp(table, p).unwrap();
            (weighted_sum(t, rng, y), alloc::vec![table, p])
        }),
    ];
    for (name, build) in binaries {
        run_op_property(name, build);
    }
}

fn hvp_case(seed: u64) {
    let mut rng = RngStream::new(seed);
    let mut t = Tape::new();
    let a = t.constant(rng.gaussian_matrix(3, 4));
    let x = t.leaf("x", rng.gaussian_matrix(4, 2));
    let h = t.matmul(a, x).unwrap();
    let th = t.tanh(h).unwrap();
    let sm = t.softmax_rows(th).unwrap();
    let e = t.elu(h).unwrap();
    let n = t.row_norms(e).unwrap();
    let s1 = weighted_sum(&mut t, &mut rng, sm);
    let s2 = t.sum(n).unwrap();
    let y = t.add(s1, s2).unwrap();

    let v = rng.gaussian_matrix(4, 2);
    let mut g = t.clone();
    let gx = g.grad_nodes(y, &[x]).unwrap()[0];
    let vc = g.constant(v.clone());
    let dot = g.mul(gx, vc).unwrap();
    let s = g.sum(dot).unwrap();
    let hv = g.backward(s, &[x]).unwrap().remove(0);

    let eps = 1e-5;
    let grad_at = |delta: f64| {
        let mut probe = t.clone();
        let x0 = probe.value(x).clone();
        probe.set_leaf(x, x0.zip_map(&v, |a, b| a + delta * b).unwrap()).unwrap();
        probe.recompute_from(0).unwrap();
        probe.backward(y, &[x]).unwrap().remove(0)
    };
    let fd = grad_at(eps).sub(&grad_at(-eps)).unwrap().scale(0.5 / eps);
    let rel = hv.sub(&fd).unwrap().frobenius_norm() / (fd.frobenius_norm() + 1e-8);
    assert!(rel <= 1e-3, "seed {seed}: {rel}");
}

#[test]
fn hessian_vector_products_match_differences() {
    for seed in 0..20 {
        hvp_case(seed);
    }
}

#[test]
fn gradient_penalty_through_leaky_chain() {
    let mut rng = RngStream::new(9);
    let mut t = Tape::new();
    let w = t.leaf("w", rng.gaussian_matrix(3, 2));
    let b = t.leaf("b", rng.gaussian_matrix(3, 1));
    let x = t.leaf("x", rng.gaussian_matrix(2, 4));
    let wx = t.matmul(w, x).unwrap();
    let pre = t.add_col(wx, b).unwrap();
    let act = t.leaky_relu(pre, 0.2).unwrap();
    let y = weighted_sum(&mut t, &mut rng, act);
    let gx = t.grad_nodes(y, &[x]).unwrap()[0];

    // d²y/dx² vanishes away from the kinks.
    let sx = t.sum(gx).unwrap();
    assert_eq!(t.backward(sx, &[x]).unwrap()[0].max_abs(), 0.0);

    let sq = t.square(gx).unwrap();
    let pen = t.sum(sq).unwrap();
    let gw = t.backward(pen, &[w]).unwrap().remove(0);
    assert!(gw.max_abs() > 1e-3);
    let rep = finite_diff_check(&t, pen, &[w, b], 1e-6).unwrap();
    assert!(rep.max_rel_error <= 1e-5, "{rep:?}");
    assert!(rep.checked > 0);
}

#[test]
fn stop_gradient_blocks_flow() {
    let mut t = Tape::new();
    let x = t.leaf("x", row(&[1.0, 2.0]));
    let s = t.stop_gradient(x).unwrap();
    let p = t.mul(s, x).unwrap();
    let y = t.sum(p).unwrap();
    assert_eq!(t.backward(y, &[x]).unwrap()[0], row(&[1.0, 2.0]));
}

#[test]
fn gradients_wrt_intermediate_nodes() {
    let mut t = Tape::new();
    let x = t.leaf("x", row(&[1.0, 2.0]));
    let h = t.scale(x, 3.0).unwrap();
    let sq = t.square(h).unwrap();
    let y = t.sum(sq).unwrap();
    assert_eq!(t.backward(y, &[h]).unwrap()[0], row(&[6.0, 12.0]));
    let gh = t.grad_nodes(y, &[h]).unwrap()[0];
    assert_eq!(t.value(gh), &row(&[6.0, 12.0]));
}

//! Measured checks shared by the integration tests and the acceptance suite.
//! Each returns the worst error it saw so callers can assert or report.

use dsbd_core::autodiff::Tape;
use dsbd_core::basis::{init_basis, BasisSet, PrototypeGraph};
use dsbd_core::distill::{
    evaluate_outer, geo_loss, geo_loss_var, spec_loss, spec_loss_var, DistillConfig, DistillContext,
};
use dsbd_core::gnn::{cross_entropy, forward, infer_graph, init_params, ArchConfig, GinParams, Mode, ModelConfig};
use dsbd_core::graphdata::{generate_spurious_motif, DenseGraph};
use dsbd_core::structstats::{
    dirichlet_energy, dirichlet_energy_var, graph_moments, moments, moments_var, MomentVector, MomentWeights,
};
use dsbd_core::Tensor;
use rand::Rng;

use super::*;

pub fn random_basis(seed: u64, k: usize, n: usize, d: usize) -> BasisSet {
    let mut r = rng(seed);
    BasisSet {
        num_classes: 2,
        feature_dim: d,
        prototypes: (0..k)
            .map(|i| PrototypeGraph {
                label: i % 2,
                adj_logits: random_tensor(&mut r, n, n).scale(2.0),
                feat_params: random_tensor(&mut r, n, d),
            })
            .collect(),
        config: DistillConfig {
            k,
            n_syn: Some(n),
            ..DistillConfig::default()
        },
    }
}

fn ce_gin(params: &GinParams, a: &Tensor, x: &Tensor, label: usize) -> (f64, Vec<Tensor>) {
    let tape = Tape::new();
    let p = params.attach(&tape, true);
    let (av, xv) = (tape.leaf(a.clone()), tape.leaf(x.clone()));
    let out = forward(&p, av, xv, Mode::Eval).unwrap();
    let loss = cross_entropy(out.logits, label).unwrap();
    let g = tape.backward(loss).unwrap();
    let mut grads: Vec<Tensor> = p.vars.iter().map(|v| g.wrt(*v)).collect();
    grads.push(g.wrt(av));
    grads.push(g.wrt(xv));
    (loss.item(), grads)
}

/// Cross-entropy through GIN on a random instance: worst relative error over
/// every parameter group, the features and the (symmetric) adjacency.
pub fn gin_ce_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(2..=6);
    let d = r.random_range(1..=4);
    let cfg = ModelConfig {
        hidden: 5,
        ..ModelConfig::new(d, 3)
    };
    // random biases keep pre-activations off the ReLU kink at exactly 0
    let mut params = init_params(&cfg, seed);
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v += r.random_range(-0.3..0.3);
        }
    }
    let a = random_adjacency(&mut r, n, 0.6, true);
    let x = random_tensor(&mut r, n, d);
    let label = r.random_range(0..3);
    let (_, grads) = ce_gin(&params, &a, &x, label);
    let flat: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    let mut worst = 0.0f64;
    for (gi, t) in flat.iter().enumerate() {
        let fd = central_diff(t, 1e-5, |v| {
            let mut f = flat.clone();
            f[gi] = v.clone();
            let p = GinParams::from_flat(f, 0.0).unwrap();
            ce_gin(&p, &a, &x, label).0
        });
        worst = worst.max(rel_err(&grads[gi], &fd));
    }
    let np = flat.len();
    let fd_x = central_diff(&x, 1e-5, |v| ce_gin(&params, &a, v, label).0);
    worst = worst.max(rel_err(&grads[np + 1], &fd_x));
    // adjacency entries perturbed symmetrically, as a graph would be
    let mut fd_a = Tensor::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let f = |h: f64| {
                let mut b = a.clone();
                b.set(i, j, a.get(i, j) + h);
                b.set(j, i, a.get(j, i) + h);
                ce_gin(&params, &b, &x, label).0
            };
            fd_a.set(i, j, (f(1e-5) - f(-1e-5)) / 2e-5);
        }
    }
    let ga = &grads[np];
    let sym = Tensor::from_fn(n, n, |i, j| if i < j { ga.get(i, j) + ga.get(j, i) } else { 0.0 });
    worst.max(rel_err(&sym, &fd_a))
}

fn basis_grad_error(basis: &BasisSet, grads: &[Tensor], f: impl Fn(&BasisSet) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for (t, g) in grads.iter().enumerate() {
        let x0 = basis.tensors()[t].clone();
        let fd = central_diff(&x0, 1e-5, |v| {
            let mut b = basis.clone();
            *b.tensors_mut()[t] = v.clone();
            f(&b)
        });
        worst = worst.max(rel_err(g, &fd));
    }
    worst
}

pub fn geo_grad_error(seed: u64) -> f64 {
    let mut r = rng(100 + seed);
    let n = r.random_range(3..=6);
    let basis = random_basis(seed, 2, n, 2);
    let targets: Vec<MomentVector> = (0..3)
        .map(|_| {
            let m = r.random_range(3..=6);
            graph_moments(&random_graph(&mut r, m, 2, false)).unwrap()
        })
        .collect();
    let gamma = MomentWeights { gamma: [0.5, 1.0, 3.0, 2.0] };
    let tape = Tape::new();
    let rs: Vec<_> = basis.prototypes.iter().map(|p| p.realize_on(&tape, true).unwrap()).collect();
    let pm: Vec<_> = rs.iter().map(|r| moments_var(r.adjacency).unwrap().as_array()).collect();
    let loss = geo_loss_var(&tape, &pm, &targets, &gamma).unwrap();
    let g = tape.backward(loss).unwrap();
    let grads: Vec<Tensor> = rs.iter().flat_map(|r| [g.wrt(r.adj_logits), g.wrt(r.feat_params)]).collect();
    basis_grad_error(&basis, &grads, |b| geo_loss(b, &targets, &gamma).unwrap())
}

pub fn spec_grad_error(seed: u64) -> f64 {
    let n = 3 + (seed as usize % 4);
    let basis = random_basis(seed, 3, n, 1 + seed as usize % 4);
    let target = 0.3 + seed as f64 * 0.2;
    let tape = Tape::new();
    let rs: Vec<_> = basis.prototypes.iter().map(|p| p.realize_on(&tape, true).unwrap()).collect();
    let es: Vec<_> = rs.iter().map(|r| dirichlet_energy_var(r.adjacency, r.features).unwrap()).collect();
    let loss = spec_loss_var(&es, target).unwrap();
    let g = tape.backward(loss).unwrap();
    let grads: Vec<Tensor> = rs.iter().flat_map(|r| [g.wrt(r.adj_logits), g.wrt(r.feat_params)]).collect();
    basis_grad_error(&basis, &grads, |b| spec_loss(b, target).unwrap())
}

/// Meta-gradient of the semantic loss through 1..=3 unrolled inner steps.
pub fn meta_grad_error(seed: u64) -> f64 {
    let source = generate_spurious_motif(9, 0.9, 3).unwrap();
    let target = generate_spurious_motif(9, 1.0 / 3.0, 4).unwrap();
    let cfg = DistillConfig {
        k: 3,
        n_syn: Some(4 + seed as usize % 3),
        arch: ArchConfig {
            layers: 2,
            hidden: 3,
            dropout: 0.0,
            eps_gin: 0.0,
        },
        t_inner: 1 + seed as usize % 3,
        lr_inner: 0.3,
        lambda1: 0.0,
        lambda2: 0.0,
        batch_source: 3,
        batch_target: 3,
        seed,
        ..DistillConfig::default()
    };
    let ctx = DistillContext::new(&source, &target, &cfg).unwrap();
    let basis = init_basis(&source, &cfg).unwrap();
    let ev = evaluate_outer(&ctx, &basis, 0).unwrap();
    basis_grad_error(&basis, &ev.grads, |b| evaluate_outer(&ctx, b, 0).unwrap().l_sem)
}

/// Worst deviation of moments, energy and eval-mode GIN logits over
/// `perms` random relabelings of one random graph.
pub fn permutation_deviation(seed: u64, perms: usize) -> f64 {
    let mut r = rng(500 + seed);
    let n = r.random_range(2..=12);
    let weighted = seed % 2 == 1;
    let a = random_adjacency(&mut r, n, 0.4, weighted);
    let x = random_tensor(&mut r, n, 3);
    let params = init_params(&ModelConfig::new(3, 3), seed);
    let m0 = moments(&a).unwrap().to_array();
    let e0 = dirichlet_energy(&a, &x).unwrap();
    let l0 = infer_graph(&params, &DenseGraph::new(a.clone(), x.clone(), None).unwrap()).unwrap().0;
    let mut worst = 0.0f64;
    for _ in 0..perms {
        let p = random_permutation(&mut r, n);
        let (pa, px) = (permute_sym(&a, &p), permute_rows(&x, &p));
        let m = moments(&pa).unwrap().to_array();
        worst = m0.iter().zip(m).fold(worst, |w, (u, v)| w.max((u - v).abs()));
        worst = worst.max((dirichlet_energy(&pa, &px).unwrap() - e0).abs());
        let l = infer_graph(&params, &DenseGraph::new(pa, px, None).unwrap()).unwrap().0;
        worst = l0.iter().zip(&l).fold(worst, |w, (u, v)| w.max((u - v).abs()));
    }
    worst
}

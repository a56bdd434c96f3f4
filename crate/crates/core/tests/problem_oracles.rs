use std::collections::VecDeque;

use nalgebra::DVector;
use qprox::central::exact_reference;
use qprox::problem::{generate_instance, generate_regular_graph, Graph, InstanceSpec, ProblemInstance, Regularizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(nodes: usize, degree: usize, m: usize, rows: usize, reg: Regularizer, seed: u64) -> ProblemInstance {
    generate_instance(&InstanceSpec { nodes, degree, block_dim: m, rows, regularizer: reg, seed }).unwrap()
}

fn full_scale() -> ProblemInstance {
    instance(40, 8, 10, 80, Regularizer::ElasticNet { lambda1: 0.1, lambda2: 10.0 }, 1)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = xp[k];
            xp[k] = orig + h;
            let up = f(&xp);
            xp[k] = orig - h;
            let down = f(&xp);
            xp[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let reg = Regularizer::ElasticNet { lambda1: 0.1, lambda2: 0.1 };
    for case in 0..100u64 {
        let inst = instance(6, 2 + 2 * (case as usize % 2), 1 + case as usize % 3, 5, reg, case);
        let x = uniform(&mut rng, inst.dim());
        let i = case as usize % inst.node_count();
        let xn = inst.gather(&x, i).unwrap();
        let fd = central_difference(|z| inst.local_loss(i, z).unwrap(), &xn);
        assert!(rel_err(&fd, &inst.local_gradient(i, &xn).unwrap()) <= 1e-5, "local case {case}");
        let fd = central_difference(|z| inst.smooth_objective(z).unwrap(), &x);
        assert!(rel_err(&fd, &inst.full_gradient(&x).unwrap()) <= 1e-5, "full case {case}");
    }
}

#[test]
fn gradient_vanishes_at_generator() {
    let inst = instance(6, 2, 2, 5, Regularizer::L1 { lambda: 0.0 }, 9);
    let g = inst.full_gradient(inst.generator()).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-12));
    assert!(inst.objective(inst.generator()).unwrap().abs() < 1e-24);
}

#[test]
fn gradient_is_affine() {
    let inst = instance(6, 2, 2, 5, Regularizer::L1 { lambda: 0.1 }, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..inst.node_count() {
        let d = inst.nbhd_dim(i);
        let delta = uniform(&mut rng, d);
        let shift = |base: &[f64]| {
            let moved: Vec<f64> = base.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let g1 = inst.local_gradient(i, &moved).unwrap();
            let g0 = inst.local_gradient(i, base).unwrap();
            g1.iter().zip(&g0).map(|(a, b)| a - b).collect::<Vec<_>>()
        };
        let a = shift(&uniform(&mut rng, d));
        let b = shift(&uniform(&mut rng, d));
        let exact = inst.gradient_difference(i, &delta).unwrap();
        for k in 0..d {
            assert!((a[k] - b[k]).abs() <= 1e-12 * (1.0 + a[k].abs()));
            assert!((a[k] - exact[k]).abs() <= 1e-12 * (1.0 + a[k].abs()));
        }
    }
}

#[test]
fn selectors_round_trip_everywhere() {
    let inst = instance(6, 3, 2, 4, Regularizer::L1 { lambda: 0.1 }, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = uniform(&mut rng, inst.dim());
    for j in 0..inst.node_count() {
        let stack = inst.gather(&x, j).unwrap();
        for i in 0..inst.node_count() {
            let r = inst.scatter_block(&stack, j, i);
            if inst.graph().contains(j, i) {
                assert_eq!(r.unwrap(), &x[inst.block_range(i)]);
            } else {
                assert!(r.is_err());
            }
        }
        // the lift of the stack restricted to 𝒩(j) is x itself
        let lifted = inst.lift(j, &stack).unwrap();
        for i in 0..inst.node_count() {
            let expect: Vec<f64> =
                if inst.graph().contains(j, i) { x[inst.block_range(i)].to_vec() } else { vec![0.0; 2] };
            assert_eq!(&lifted[inst.block_range(i)], &expect[..]);
        }
    }
}

fn bfs_connected(g: &Graph) -> bool {
    let n = g.node_count();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &v in g.neighborhood(u) {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[test]
fn regular_graphs_are_simple_regular_and_connected() {
    for (n, d) in [(40, 8), (6, 2), (2, 1), (10, 3), (7, 4)] {
        for seed in 0..5 {
            let g = generate_regular_graph(n, d, seed).unwrap();
            assert!(bfs_connected(&g));
            for i in 0..n {
                let nb = g.neighborhood(i);
                assert_eq!(nb.len(), d + 1);
                assert!(nb.contains(&i));
                assert!(nb.windows(2).all(|w| w[0] < w[1]));
                for &j in nb {
                    assert!(g.neighborhood(j).contains(&i));
                }
            }
            assert_eq!(g.max_degree(), d + 1);
        }
    }
}

#[test]
fn lipschitz_constants_match_power_iteration() {
    let inst = full_scale();
    let report = inst.smoothness();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..inst.node_count() {
        let h = inst.matrix(i);
        let mut v = DVector::from_vec(uniform(&mut rng, h.ncols()));
        let mut lambda = 0.0;
        for _ in 0..3000 {
            let w = h.tr_mul(&(h * &v)) * 2.0;
            lambda = v.dot(&w) / v.dot(&v);
            v = &w / w.norm();
        }
        assert!((lambda - report.lipschitz[i]).abs() <= 1e-8 * report.lipschitz[i], "node {i}");
    }
    assert_eq!(report.l_bar, report.lipschitz.iter().copied().fold(0.0, f64::max));
    assert_eq!(report.mu, 10.0);
}

#[test]
fn reference_agrees_with_tighter_longer_run() {
    let inst = full_scale();
    let x = exact_reference(&inst, None, 1e-11, 100_000).unwrap();
    let y = exact_reference(&inst, None, 1e-13, 1_000_000).unwrap();
    let d: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    assert!(d <= 1e-8, "{d}");
}

/// `(1/2)‖y − v‖² + ηR(y)`, with `R` written out independently of the library.
pub fn prox_objective(reg: &Regularizer, y: &[f64], v: &[f64], eta: f64) -> f64 {
    let quad: f64 = y.iter().zip(v).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    let l1: f64 = y.iter().map(|a| a.abs()).sum();
    let l2: f64 = y.iter().map(|a| a * a).sum();
    let r = match *reg {
        Regularizer::L1 { lambda } => lambda * l1,
        Regularizer::SquaredL2 { lambda } => 0.5 * lambda * l2,
        Regularizer::ElasticNet { lambda1, lambda2 } => lambda1 * l1 + 0.5 * lambda2 * l2,
        Regularizer::GroupLassoPerNode { lambda } => lambda * l2.sqrt(),
    };
    quad + eta * r
}

#[test]
fn prox_beats_perturbed_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let regs = [
        Regularizer::L1 { lambda: 0.7 },
        Regularizer::SquaredL2 { lambda: 1.3 },
        Regularizer::ElasticNet { lambda1: 0.4, lambda2: 0.9 },
        Regularizer::GroupLassoPerNode { lambda: 0.8 },
    ];
    for case in 0..40 {
        let reg = regs[case % 4];
        let d = 1 + case % 4;
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let eta = rng.random_range(0.05..2.0);
        let y = reg.prox_block(&v, eta);
        let best = prox_objective(&reg, &y, &v, eta);
        let r = 1e-3 / (d as f64).sqrt();
        let mut cand = y.clone();
        for _ in 0..20_000 {
            for (c, yk) in cand.iter_mut().zip(&y) {
                *c = yk + rng.random_range(-r..r);
            }
            assert!(prox_objective(&reg, &cand, &v, eta) - best >= -1e-12);
        }
    }
}

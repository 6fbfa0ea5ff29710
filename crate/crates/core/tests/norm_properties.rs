mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use projcons::analysis;
use projcons::graphs::{self, Digraph};
use projcons::linalg::{self, BlockMatrix};

fn product(ps: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = ps[0].nrows();
    ps.iter().rev().fold(DMatrix::identity(n, n), |acc, p| acc * p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_projectors_are_orthogonal_projectors(seed: u64, n in 1usize..7, rows in 1usize..7) {
        let mut r = common::rng(seed);
        let a = common::uniform(&mut r, rows, n);
        let p = linalg::kernel_projector(&a).unwrap();
        prop_assert!((&p * &p - &p).abs().max() <= 1e-10);
        prop_assert!((&p - p.transpose()).abs().max() <= 1e-12);
        prop_assert!((&a * &p).abs().max() <= 1e-10);
        let trace: f64 = p.trace();
        prop_assert!((trace - (n - linalg::rank(&a)) as f64).abs() <= 1e-9);
    }

    #[test]
    fn projector_products_never_expand(seed: u64, n in 1usize..7, k in 1usize..6) {
        let mut r = common::rng(seed);
        let fam = common::family(&mut r, k, n);
        prop_assert!(linalg::spectral_norm(&product(&fam)) <= 1.0 + 1e-12);
    }

    #[test]
    fn product_contracts_iff_images_meet_in_zero(seed: u64, n in 2usize..7, k in 1usize..6, share: bool) {
        let mut r = common::rng(seed);
        let fam = if share {
            let v = common::uniform_vec(&mut r, n);
            common::sharing_family(&mut r, k, n, &v)
        } else {
            common::family(&mut r, k, n)
        };
        let trivial = linalg::subspace_intersection(&fam).unwrap().dim() == 0;
        let norm = linalg::spectral_norm(&product(&fam));
        prop_assert_eq!(norm < 1.0 - 1e-12, trivial, "norm {} trivial {}", norm, trivial);
    }

    #[test]
    fn mixed_norm_axioms(seed: u64, m in 1usize..5, n in 1usize..4, c in -3.0f64..3.0) {
        let mut r = common::rng(seed);
        let a = common::block(&mut r, m, n);
        let b = common::block(&mut r, m, n);
        let na = linalg::mixed_norm(&a);
        prop_assert!(na > 0.0);
        prop_assert_eq!(linalg::mixed_norm(&BlockMatrix::zeros(m, n)), 0.0);
        prop_assert!((linalg::mixed_norm(&a.scale(c)) - c.abs() * na).abs() <= 1e-12 * (1.0 + na));
        let sum = linalg::mixed_norm(&a.add(&b).unwrap());
        prop_assert!(sum <= na + linalg::mixed_norm(&b) + 1e-12);
    }

    #[test]
    fn quotient_intertwines(seed: u64, n in 2usize..6, m in 1usize..4) {
        let mut r = common::rng(seed);
        let v = common::uniform_vec(&mut r, n);
        let fam = common::sharing_family(&mut r, m, n, &v);
        match linalg::quotient_projectors(&fam) {
            Ok(quo) => {
                for (p, pb) in fam.iter().zip(&quo.reduced) {
                    prop_assert!((&quo.q * p - pb * &quo.q).abs().max() <= 1e-10);
                    prop_assert!((pb * pb - pb).abs().max() <= 1e-10);
                }
                prop_assert_eq!(linalg::subspace_intersection(&quo.reduced).unwrap().dim(), 0);
            }
            Err(projcons::Error::DegenerateQuotient) => {
                prop_assert!(fam.iter().all(|p| (p - DMatrix::identity(n, n)).abs().max() <= 1e-9));
            }
            Err(e) => prop_assert!(false, "unexpected {}", e),
        }
    }

    #[test]
    fn sandwich_products_obey_nominal_bound(seed: u64, m in 1usize..5, n in 1usize..4, len in 1usize..6) {
        let mut r = common::rng(seed);
        let fam = common::family(&mut r, m, n);
        let seq: Vec<_> = (0..len)
            .map(|_| {
                let g = common::graph(&mut r, m, 0.5);
                common::stochastic_on(&mut r, &g)
            })
            .collect();
        let prod = analysis::transition_product(&fam, &seq).unwrap();
        let nominal = analysis::nominal_bound(&seq).unwrap();
        let norms = prod.block_norms();
        for i in 0..m {
            for j in 0..m {
                prop_assert!(norms[(i, j)] <= nominal[(i, j)] + 1e-9);
            }
        }
        prop_assert!(linalg::mixed_norm(&prod) <= 1.0 + 1e-9);
    }

    #[test]
    fn nonzero_blocks_need_routes(seed: u64, m in 2usize..5, n in 1usize..4, len in 1usize..5) {
        let mut r = common::rng(seed);
        let fam = common::family(&mut r, m, n);
        let gs: Vec<Digraph> = (0..len).map(|_| common::graph(&mut r, m, 0.3)).collect();
        let prod = analysis::transition_product(&fam, &analysis::flocking_sequence(&gs).unwrap()).unwrap();
        let reach = graphs::compose_sequence(&gs).unwrap();
        let norms = prod.block_norms();
        for i in 0..m {
            for j in 0..m {
                if norms[(i, j)] > 1e-12 {
                    prop_assert!(reach.has_arc(j, i));
                }
            }
        }
    }
}

#[test]
fn mixed_norm_is_submultiplicative() {
    let mut r = common::rng(7);
    for k in 0..500 {
        let m = 1 + k % 4;
        let n = 1 + (k / 4) % 3;
        let a = common::block(&mut r, m, n);
        let b = common::block(&mut r, m, n);
        let lhs = linalg::mixed_norm(&a.mul(&b).unwrap());
        let rhs = linalg::mixed_norm(&a) * linalg::mixed_norm(&b);
        assert!(lhs <= rhs + 1e-9, "pair {k}: {lhs} > {rhs}");
    }
}

#[test]
fn qualifying_products_contract() {
    let mut r = common::rng(11);
    for k in 0..100 {
        let m = 2 + k % 3;
        let n = 2 + (k / 3) % 3;
        let l = 1 + k % 2;
        let fam = common::trivial_family(&mut r, m, n);
        let mut gs = Vec::new();
        for _ in 0..(m - 1) * (m - 1) {
            // each window of l graphs composes to a strongly connected graph
            let window: Vec<Digraph> = loop {
                let w: Vec<_> = (0..l).map(|_| common::graph(&mut r, m, 0.35)).collect();
                if graphs::compose_sequence(&w).unwrap().is_strongly_connected() {
                    break w;
                }
            };
            gs.extend(window);
        }
        let rep = analysis::contraction_check(&fam, &gs, l).unwrap();
        assert!(rep.is_contraction, "instance {k}: mixed norm {}", rep.mixed_norm);
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    assert!(analysis::block_complete(&gs, i, j).unwrap());
                }
            }
        }
    }
}

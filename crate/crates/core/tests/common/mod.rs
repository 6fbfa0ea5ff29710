#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use projcons::graphs::Digraph;
use projcons::linalg::{self, BlockMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.gen_range(-1.0..=1.0))
}

pub fn uniform_vec(r: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.gen_range(-1.0..=1.0))
}

/// Projector onto the kernel of a random `rows x n` matrix.
pub fn kernel_projector(r: &mut ChaCha8Rng, n: usize, rows: usize) -> DMatrix<f64> {
    linalg::kernel_projector(&uniform(r, rows, n)).unwrap()
}

/// `m` projectors of random kernel dimension in `0..n`.
pub fn family(r: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<DMatrix<f64>> {
    (0..m)
        .map(|_| {
            let rows = r.gen_range(1..=n);
            kernel_projector(r, n, rows)
        })
        .collect()
}

/// A family whose images jointly meet only in zero.
pub fn trivial_family(r: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<DMatrix<f64>> {
    loop {
        let f = family(r, m, n);
        if linalg::subspace_intersection(&f).unwrap().dim() == 0 {
            return f;
        }
    }
}

/// Projectors onto random subspaces that all contain `shared`.
pub fn sharing_family(r: &mut ChaCha8Rng, m: usize, n: usize, shared: &DVector<f64>) -> Vec<DMatrix<f64>> {
    (0..m)
        .map(|_| {
            let extra = r.gen_range(0..n - 1);
            let mut cols = uniform(r, n, extra + 1);
            cols.set_column(0, shared);
            let rank = linalg::rank(&cols);
            let q = cols.svd(true, false).u.unwrap();
            let basis = q.columns(0, rank).into_owned();
            linalg::symmetrize(&(&basis * basis.transpose()))
        })
        .collect()
}

pub fn graph(r: &mut ChaCha8Rng, m: usize, p: f64) -> Digraph {
    let mut g = Digraph::self_loops(m).unwrap();
    for i in 0..m {
        for j in 0..m {
            if i != j && r.gen_bool(p) {
                g.add_arc(j, i).unwrap();
            }
        }
    }
    g
}

pub fn strongly_connected(r: &mut ChaCha8Rng, m: usize) -> Digraph {
    loop {
        let g = graph(r, m, 0.4);
        if g.is_strongly_connected() {
            return g;
        }
    }
}

/// Row-stochastic with positive weights exactly on the arcs of `g`.
pub fn stochastic_on(r: &mut ChaCha8Rng, g: &Digraph) -> DMatrix<f64> {
    let m = g.m();
    let mut s = DMatrix::zeros(m, m);
    for i in 0..m {
        let mut total = 0.0;
        for j in g.in_neighbors(i) {
            let w = r.gen_range(0.1..1.0);
            s[(i, j)] = w;
            total += w;
        }
        for j in 0..m {
            s[(i, j)] /= total;
        }
    }
    s
}

pub fn block(r: &mut ChaCha8Rng, m: usize, n: usize) -> BlockMatrix {
    BlockMatrix::from_dense(m, n, uniform(r, m * n, m * n)).unwrap()
}

use std::sync::Arc;

use proptest::prelude::*;
use slicekit::linalg::{Matrix, Rng};
use slicekit::structured::{
    init_family, nonzero_count, uniform_blocks, BlockSizes, InitPolicy, SparseMask, StructureKind, StructureSpec,
    StructuredMatrix,
};

fn all_specs() -> Vec<StructureSpec> {
    vec![
        StructureSpec::Dense,
        StructureSpec::Diagonal,
        StructureSpec::Dplr { rank: 3 },
        uniform_blocks(4),
        StructureSpec::BlockDiagonal(BlockSizes::DiagonalDense(5)),
        StructureSpec::Sparse { epsilon: 0.4 },
        StructureSpec::WalshHadamard,
    ]
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
    num / den
}

#[test]
fn apply_matches_materialized_multiply() {
    let mut rng = Rng::new(1);
    for spec in all_specs() {
        for trial in 0..100 {
            let d_h = [8, 16, 32, 64][trial % 4];
            let fam = init_family(&spec, d_h, 1, InitPolicy::Diagnostics, &mut rng).unwrap();
            let m = fam.member(0);
            let dense = m.materialize();
            let v = rng.normal_vec(d_h, 1.0);
            assert!(rel(&m.apply(&v).unwrap(), &dense.matvec(&v).unwrap()) <= 1e-12, "{spec}");
            assert!(
                rel(&m.apply_transpose(&v).unwrap(), &dense.matvec_transpose(&v).unwrap()) <= 1e-12,
                "{spec}"
            );
        }
    }
}

#[test]
fn block_diagonal_four_four_vs_dense() {
    let mut rng = Rng::new(2);
    let fam = init_family(
        &StructureSpec::BlockDiagonal(BlockSizes::Explicit(vec![4, 4])),
        8,
        1,
        InitPolicy::Training,
        &mut rng,
    )
    .unwrap();
    let v = rng.normal_vec(8, 1.0);
    let m = fam.member(0);
    assert!(rel(&m.apply(&v).unwrap(), &m.materialize().matvec(&v).unwrap()) <= 1e-13);
}

#[test]
fn nonzero_count_matches_materialized_support() {
    let mut rng = Rng::new(3);
    for spec in all_specs() {
        let fam = init_family(&spec, 16, 1, InitPolicy::Diagnostics, &mut rng).unwrap();
        let m = fam.member(0);
        let nnz = m.materialize().data().iter().filter(|x| **x != 0.0).count();
        match m.kind() {
            StructureKind::WalshHadamard { .. } => assert_eq!(m.nonzero_count(), 16),
            StructureKind::Dplr { .. } => assert_eq!(nnz, 256),
            _ => assert_eq!(m.nonzero_count(), nnz, "{spec}"),
        }
    }
}

#[test]
fn budget_table() {
    for (d, r, want) in [(171, 1, 513), (102, 2, 510), (57, 4, 513), (30, 8, 510)] {
        assert_eq!(nonzero_count(&StructureKind::Dplr { rank: r }, d, 1), want);
    }
    for (d, b) in [(256, 2), (128, 4), (64, 8), (32, 16)] {
        let kind = StructureKind::BlockDiagonal { sizes: BlockSizes::Uniform(b).resolve(d).unwrap() };
        assert_eq!(nonzero_count(&kind, d, 1), 512);
    }
}

#[test]
fn diagnostics_dense_variance() {
    let fam = init_family(&StructureSpec::Dense, 256, 1, InitPolicy::Diagnostics, &mut Rng::new(4)).unwrap();
    let p = fam.params(0);
    let var = p.iter().map(|x| x * x).sum::<f64>() / p.len() as f64;
    assert!((var * 256.0 - 1.0).abs() < 0.2);
}

#[test]
fn degenerate_layouts() {
    let mask = Arc::new(SparseMask::full(6));
    let sp = StructuredMatrix::new(StructureKind::Sparse { mask }, 6, (0..36).map(|x| x as f64).collect::<Vec<_>>())
        .unwrap();
    let dense = StructuredMatrix::new(StructureKind::Dense, 6, (0..36).map(|x| x as f64).collect::<Vec<_>>()).unwrap();
    assert_eq!(sp.materialize(), dense.materialize());

    let bd = StructuredMatrix::new(StructureKind::BlockDiagonal { sizes: vec![6] }, 6, dense.params().to_vec()).unwrap();
    assert_eq!(bd.materialize(), dense.materialize());
}

#[test]
fn walsh_hadamard_training_diagonal_is_bounded() {
    let mut fam = init_family(&StructureSpec::WalshHadamard, 8, 1, InitPolicy::Training, &mut Rng::new(6)).unwrap();
    fam.params_mut(0).iter_mut().for_each(|x| *x *= 1e3);
    let m = fam.member(0).materialize();
    let s = (8f64).sqrt();
    assert!(m.data().iter().all(|x| x.abs() * s <= 1.0));
}

#[test]
fn mismatched_vector_rejected() {
    let m = StructuredMatrix::zeros(StructureKind::Diagonal, 4).unwrap();
    assert!(m.apply(&[1.0; 3]).is_err());
    assert!(init_family(&StructureSpec::WalshHadamard, 12, 1, InitPolicy::Training, &mut Rng::new(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// `∂(aᵀ A h)/∂θ` against central differences of the materialized form.
    #[test]
    fn param_grad_matches_finite_differences(seed in 0u64..5000, k in 0usize..7) {
        let spec = all_specs()[k].clone();
        let mut rng = Rng::new(seed);
        let fam = init_family(&spec, 8, 1, InitPolicy::Training, &mut rng).unwrap();
        let m = fam.member(0).to_owned();
        let a = rng.normal_vec(8, 1.0);
        let h = rng.normal_vec(8, 1.0);
        let mut g = vec![0.0; m.param_count()];
        m.param_grad_add(&a, &h, 1.0, &mut g);
        let f = |p: &[f64]| {
            let mm = StructuredMatrix::new(m.kind().clone(), 8, p.to_vec()).unwrap();
            let y = mm.apply(&h).unwrap();
            y.iter().zip(&a).map(|(x, z)| x * z).sum::<f64>()
        };
        for i in 0..g.len() {
            let mut p = m.params().to_vec();
            let eps = 1e-6;
            p[i] += eps;
            let up = f(&p);
            p[i] -= 2.0 * eps;
            let dn = f(&p);
            let fd = (up - dn) / (2.0 * eps);
            prop_assert!((fd - g[i]).abs() <= 1e-7 * (1.0 + fd.abs()), "{} param {}: {} vs {}", spec, i, fd, g[i]);
        }
    }

    #[test]
    fn sparse_grad_vanishes_off_mask(seed in 0u64..1000) {
        let mut rng = Rng::new(seed);
        let fam = init_family(&StructureSpec::Sparse { epsilon: 0.5 }, 8, 1, InitPolicy::Training, &mut rng).unwrap();
        let m = fam.member(0);
        let a = rng.normal_vec(8, 1.0);
        let h = rng.normal_vec(8, 1.0);
        let mut g = vec![0.0; m.param_count()];
        m.param_grad_add(&a, &h, 1.0, &mut g);
        // Dense gradient a hᵀ restricted to the mask equals the structured gradient.
        let StructureKind::Sparse { mask } = m.kind() else { unreachable!() };
        let dense = Matrix::from_fn(8, 8, |r, c| a[r] * h[c]);
        for (gi, &(r, c)) in g.iter().zip(mask.entries()) {
            prop_assert!((gi - dense.get(r as usize, c as usize)).abs() < 1e-15);
        }
        prop_assert_eq!(g.len(), mask.len());
    }
}

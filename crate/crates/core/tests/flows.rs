use proptest::prelude::*;
use slicekit::flows::{
    build_flow, scan_affine, scan_affine_sequential, scan_elements, scan_parallel, scan_sequential, FlowElement,
    FlowMap, FlowOrder, ScanStats,
};
use slicekit::linalg::{expm, Matrix, Rng};
use slicekit::structured::{init_family, uniform_blocks, ChannelFamily, InitPolicy, StructureSpec};

fn all_specs() -> Vec<StructureSpec> {
    vec![
        StructureSpec::Dense,
        StructureSpec::Diagonal,
        StructureSpec::Dplr { rank: 2 },
        uniform_blocks(4),
        StructureSpec::Sparse { epsilon: 0.5 },
        StructureSpec::WalshHadamard,
    ]
}

fn increments(rng: &mut Rng, n: usize, d_omega: usize, scale: f64) -> Matrix {
    Matrix::from_fn(n, d_omega, |_, c| if c == 0 { scale } else { scale * rng.normal() })
}

/// Independent oracle: materialize every `A^i`, sum densely, multiply.
fn dense_oracle(family: &ChannelFamily, incs: &Matrix, h0: &[f64]) -> Vec<Vec<f64>> {
    let d = family.d_h();
    let mats: Vec<Matrix> = (0..family.d_omega()).map(|i| family.member(i).materialize()).collect();
    let mut states = vec![h0.to_vec()];
    for j in 0..incs.rows() {
        let mut m = Matrix::identity(d);
        for (i, a) in mats.iter().enumerate() {
            m = m.add(&a.scale(incs.get(j, i))).unwrap();
        }
        let h = states.last().unwrap();
        let next: Vec<f64> = (0..d)
            .map(|r| (0..d).map(|c| m.get(r, c) * h[c]).sum())
            .collect();
        states.push(next);
    }
    states
}

fn max_rel(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let num: f64 = x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            let den: f64 = y.iter().map(|q| q * q).sum::<f64>().sqrt().max(1e-300);
            num / den
        })
        .fold(0.0, f64::max)
}

#[test]
fn empty_sequence_returns_initial_state() {
    let fam = init_family(&StructureSpec::Dense, 4, 2, InitPolicy::Training, &mut Rng::new(0)).unwrap();
    let h0 = vec![1.0, 2.0, 3.0, 4.0];
    let incs = Matrix::zeros(0, 2);
    assert_eq!(scan_sequential(&fam, &incs, &h0, FlowOrder::First).unwrap(), vec![h0.clone()]);
    let stats = ScanStats::new();
    assert_eq!(scan_parallel(&fam, &incs, &h0, FlowOrder::First, &stats).unwrap(), vec![h0]);
}

#[test]
fn zero_increment_gives_identity_flow() {
    for spec in all_specs() {
        let fam = init_family(&spec, 8, 3, InitPolicy::Training, &mut Rng::new(1)).unwrap();
        let f = build_flow(&fam, &[0.0; 3], FlowOrder::First).unwrap();
        assert_eq!(f.to_dense(), Matrix::identity(8), "{spec}");
    }
}

#[test]
fn diagonal_flow_stays_diagonal_and_grows_geometrically() {
    let fam = init_family(&StructureSpec::Diagonal, 3, 1, InitPolicy::Training, &mut Rng::new(2)).unwrap();
    let a = fam.params(0).to_vec();
    let f = build_flow(&fam, &[0.3], FlowOrder::First).unwrap();
    match f.map() {
        FlowMap::Diagonal(d) => {
            for (x, ai) in d.iter().zip(&a) {
                assert_eq!(*x, 1.0 + 0.3 * ai);
            }
        }
        other => panic!("expected diagonal flow, got {other:?}"),
    }
    let n = 9;
    let incs = Matrix::from_fn(n, 1, |_, _| 0.3);
    let h0 = [1.0, -2.0, 0.5];
    let states = scan_sequential(&fam, &incs, &h0, FlowOrder::First).unwrap();
    for k in 0..3 {
        let want = (1.0 + 0.3 * a[k]).powi(n as i32) * h0[k];
        assert!((states[n][k] - want).abs() <= 1e-14 * want.abs().max(1.0));
    }
}

#[test]
fn sequential_matches_dense_oracle() {
    for (s, spec) in all_specs().into_iter().enumerate() {
        let mut rng = Rng::new(100 + s as u64);
        let fam = init_family(&spec, 8, 3, InitPolicy::Training, &mut rng).unwrap();
        let incs = increments(&mut rng, 8, 3, 0.5);
        let h0 = rng.normal_vec(8, 1.0);
        let got = scan_sequential(&fam, &incs, &h0, FlowOrder::First).unwrap();
        let want = dense_oracle(&fam, &incs, &h0);
        assert!(max_rel(&got, &want) <= 1e-13, "{spec}: {}", max_rel(&got, &want));
    }
}

#[test]
fn parallel_matches_sequential_on_all_kinds() {
    for spec in all_specs() {
        for seed in 0..20u64 {
            let mut rng = Rng::new(seed);
            let n = 1 + rng.below(64);
            let fam = init_family(&spec, 16, 3, InitPolicy::Training, &mut rng).unwrap();
            let incs = increments(&mut rng, n, 3, 0.3);
            let h0 = rng.normal_vec(16, 1.0);
            let seq = scan_sequential(&fam, &incs, &h0, FlowOrder::First).unwrap();
            let stats = ScanStats::new();
            let par = scan_parallel(&fam, &incs, &h0, FlowOrder::First, &stats).unwrap();
            assert!(max_rel(&par, &seq) <= 1e-10, "{spec} n={n}");
            let up = stats.snapshot().up_sweep_rounds;
            assert_eq!(up, (n as f64).log2().ceil() as u64, "n = {n}");
        }
    }
}

#[test]
fn single_step_parallel_is_bitwise_sequential_for_closed_kinds() {
    for spec in [StructureSpec::Diagonal, uniform_blocks(4)] {
        let mut rng = Rng::new(5);
        let fam = init_family(&spec, 8, 2, InitPolicy::Training, &mut rng).unwrap();
        let incs = increments(&mut rng, 1, 2, 1.0);
        let h0 = rng.normal_vec(8, 1.0);
        let seq = scan_sequential(&fam, &incs, &h0, FlowOrder::First).unwrap();
        let par = scan_parallel(&fam, &incs, &h0, FlowOrder::First, &ScanStats::new()).unwrap();
        assert_eq!(seq, par);
    }
}

#[test]
fn closure_counters() {
    for spec in all_specs() {
        let mut rng = Rng::new(8);
        let fam = init_family(&spec, 16, 2, InitPolicy::Training, &mut rng).unwrap();
        let incs = increments(&mut rng, 33, 2, 0.2);
        let stats = ScanStats::new();
        scan_parallel(&fam, &incs, &[1.0; 16], FlowOrder::First, &stats).unwrap();
        let counts = stats.snapshot();
        assert!(counts.combines > 0);
        let closed = matches!(spec, StructureSpec::Diagonal | StructureSpec::BlockDiagonal(_));
        if closed {
            assert_eq!(counts.dense_materializations, 0, "{spec}");
        } else {
            assert!(counts.dense_materializations >= 1, "{spec}");
        }
    }
}

#[test]
fn first_order_error_is_quadratic_in_step() {
    let mut rng = Rng::new(11);
    let fam = init_family(&StructureSpec::Dense, 6, 1, InitPolicy::Diagnostics, &mut rng).unwrap();
    let a = fam.member(0).materialize();
    let err = |h: f64| {
        let first = build_flow(&fam, &[h], FlowOrder::First).unwrap().to_dense();
        let exact = expm(&a.scale(h)).unwrap();
        first.sub(&exact).unwrap().norm_frobenius()
    };
    let (e1, e2) = (err(0.1), err(0.05));
    let ratio = e1 / e2;
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    let bound = |h: f64| {
        let n = a.norm_frobenius();
        h * h * n * n * (h * n).exp() / 2.0
    };
    assert!(e1 <= bound(0.1) && e2 <= bound(0.05));
}

#[test]
fn compose_identity_and_dplr_product() {
    let mut rng = Rng::new(12);
    let fam = init_family(&StructureSpec::Dplr { rank: 2 }, 8, 2, InitPolicy::Training, &mut rng).unwrap();
    let f = build_flow(&fam, &[1.0, 0.4], FlowOrder::First).unwrap();
    let g = build_flow(&fam, &[1.0, -0.7], FlowOrder::First).unwrap();
    let stats = ScanStats::new();
    assert_eq!(FlowElement::identity(8).compose(&f, &stats).unwrap(), f);
    assert_eq!(f.compose(&FlowElement::identity(8), &stats).unwrap(), f);
    let fg = f.compose(&g, &stats).unwrap();
    assert!(fg.map().is_dense());
    let (fd, gd) = (f.to_dense(), g.to_dense());
    let oracle = Matrix::from_fn(8, 8, |r, c| (0..8).map(|k| fd.get(r, k) * gd.get(k, c)).sum());
    assert!(fg.to_dense().sub(&oracle).unwrap().max_abs() <= 1e-12);
}

#[test]
fn block_partition_mismatch_downgrades_to_dense() {
    let mut rng = Rng::new(13);
    let f1 = init_family(&uniform_blocks(2), 4, 1, InitPolicy::Training, &mut rng).unwrap();
    let f2 = init_family(&uniform_blocks(4), 4, 1, InitPolicy::Training, &mut rng).unwrap();
    let a = build_flow(&f1, &[1.0], FlowOrder::First).unwrap();
    let b = build_flow(&f2, &[1.0], FlowOrder::First).unwrap();
    let stats = ScanStats::new();
    let ab = a.compose(&b, &stats).unwrap();
    assert!(ab.map().is_dense());
    let oracle = slicekit::linalg::matmul(&a.to_dense(), &b.to_dense()).unwrap();
    assert!(ab.to_dense().sub(&oracle).unwrap().max_abs() <= 1e-14);
}

#[test]
fn affine_scan_matches_naive_loop() {
    let mut rng = Rng::new(14);
    let d = 6;
    let cols = 3;
    let n = 37;
    let fam = init_family(&StructureSpec::Dense, d, 2, InitPolicy::Training, &mut rng).unwrap();
    let b = Matrix::from_fn(d, cols, |_, _| rng.normal());
    let incs = increments(&mut rng, n, 2, 0.2);
    let xi = Matrix::from_fn(n, cols, |_, _| rng.normal());
    let elements: Vec<FlowElement> = (0..n)
        .map(|j| {
            let bias = Matrix::from_fn(d, cols, |r, k| b.get(r, k) * xi.get(j, k));
            build_flow(&fam, incs.row(j), FlowOrder::First).unwrap().with_bias(bias).unwrap()
        })
        .collect();
    let h0 = Matrix::from_fn(d, cols, |_, _| rng.normal());

    // naive per-column loop
    let mats: Vec<Matrix> = (0..2).map(|i| fam.member(i).materialize()).collect();
    let mut naive = vec![h0.clone()];
    for j in 0..n {
        let prev = naive.last().unwrap().clone();
        let next = Matrix::from_fn(d, cols, |r, k| {
            let mut s = prev.get(r, k);
            for (i, a) in mats.iter().enumerate() {
                s += incs.get(j, i) * (0..d).map(|c| a.get(r, c) * prev.get(c, k)).sum::<f64>();
            }
            s + b.get(r, k) * xi.get(j, k)
        });
        naive.push(next);
    }
    let par = scan_affine(elements.clone(), &h0, &ScanStats::new()).unwrap();
    let seq = scan_affine_sequential(&elements, &h0).unwrap();
    for ((p, s), o) in par.iter().zip(&seq).zip(&naive) {
        let scale = o.max_abs().max(1.0);
        assert!(p.sub(o).unwrap().max_abs() / scale <= 1e-11);
        assert!(s.sub(o).unwrap().max_abs() / scale <= 1e-11);
    }
}

#[test]
fn scan_is_deterministic_across_thread_counts() {
    let mut rng = Rng::new(15);
    let fam = init_family(&StructureSpec::Dense, 8, 2, InitPolicy::Training, &mut rng).unwrap();
    let incs = increments(&mut rng, 100, 2, 0.2);
    let h0 = rng.normal_vec(8, 1.0);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| scan_parallel(&fam, &incs, &h0, FlowOrder::First, &ScanStats::new()).unwrap())
    };
    assert_eq!(run(1), run(3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn composition_is_associative(seed in 0u64..10_000, kind in 0usize..6) {
        let spec = all_specs()[kind].clone();
        let mut rng = Rng::new(seed);
        let fam = init_family(&spec, 8, 2, InitPolicy::Training, &mut rng).unwrap();
        let fl: Vec<FlowElement> = (0..3)
            .map(|_| build_flow(&fam, &[1.0, rng.normal()], FlowOrder::First).unwrap())
            .collect();
        let st = ScanStats::new();
        let left = fl[0].compose(&fl[1], &st).unwrap().compose(&fl[2], &st).unwrap().to_dense();
        let right = fl[0].compose(&fl[1].compose(&fl[2], &st).unwrap(), &st).unwrap().to_dense();
        let rel = left.sub(&right).unwrap().max_abs() / left.max_abs();
        prop_assert!(rel <= 1e-12, "rel {}", rel);
    }

    #[test]
    fn prefix_scan_matches_left_fold(n in 1usize..40, seed in 0u64..1000) {
        let mut rng = Rng::new(seed);
        let fam = init_family(&uniform_blocks(2), 4, 2, InitPolicy::Training, &mut rng).unwrap();
        let flows: Vec<FlowElement> = (0..n)
            .map(|_| build_flow(&fam, &[0.5, rng.normal()], FlowOrder::First).unwrap())
            .collect();
        let st = ScanStats::new();
        let pre = scan_elements(flows.clone(), &st).unwrap();
        let mut acc = FlowElement::identity(4);
        for (f, p) in flows.iter().zip(&pre) {
            acc = f.compose(&acc, &st).unwrap();
            let rel = acc.to_dense().sub(&p.to_dense()).unwrap().max_abs() / acc.to_dense().max_abs();
            prop_assert!(rel <= 1e-13);
        }
    }
}

use std::collections::HashMap;

use slicekit::flows::{scan_parallel, scan_sequential, FlowOrder, ScanStats};
use slicekit::linalg::{matmul, Matrix, Rng};
use slicekit::logsig::{
    chen_product, hybrid_solve, lift_vector_fields, log_signature, logode_flow, lyndon_words, path_signature,
    segment_signature, witt_dimension, HallBasis, TensorPoly,
};
use slicekit::structured::{
    init_family, uniform_blocks, ChannelFamily, InitPolicy, StructureKind, StructureSpec, StructuredMatrix,
};

// ---------- brute-force oracle: tensors as word -> coefficient maps ----------

type Poly = HashMap<Vec<usize>, f64>;

fn p_add(a: &Poly, b: &Poly, s: f64) -> Poly {
    let mut out = a.clone();
    for (w, c) in b {
        *out.entry(w.clone()).or_insert(0.0) += s * c;
    }
    out
}

fn p_mul(a: &Poly, b: &Poly, depth: usize) -> Poly {
    let mut out = Poly::new();
    for (u, x) in a {
        for (v, y) in b {
            if u.len() + v.len() <= depth {
                let mut w = u.clone();
                w.extend(v);
                *out.entry(w).or_insert(0.0) += x * y;
            }
        }
    }
    out
}

fn p_unit() -> Poly {
    HashMap::from([(vec![], 1.0)])
}

fn p_letters(inc: &[f64]) -> Poly {
    inc.iter().enumerate().map(|(i, &x)| (vec![i], x)).collect()
}

fn p_exp(x: &Poly, depth: usize) -> Poly {
    let mut out = p_unit();
    let mut term = p_unit();
    for k in 1..=depth {
        term = p_mul(&term, x, depth);
        term.values_mut().for_each(|c| *c /= k as f64);
        out = p_add(&out, &term, 1.0);
    }
    out
}

fn p_log(x: &Poly, depth: usize) -> Poly {
    let mut y = x.clone();
    y.remove(&vec![]);
    let mut out = Poly::new();
    let mut power = p_unit();
    for k in 1..=depth {
        power = p_mul(&power, &y, depth);
        let s = if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
        out = p_add(&out, &power, s);
    }
    out
}

fn p_bracket(a: &Poly, b: &Poly, depth: usize) -> Poly {
    p_add(&p_mul(a, b, depth), &p_mul(b, a, depth), -1.0)
}

fn brute_lyndon(d: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for len in 1..=n {
        for code in 0..d.pow(len as u32) {
            let w: Vec<usize> = (0..len).rev().map(|k| (code / d.pow(k as u32)) % d).collect();
            // strictly smaller than every nontrivial rotation
            if (1..len).all(|r| {
                let rot: Vec<usize> = w[r..].iter().chain(&w[..r]).copied().collect();
                w < rot
            }) {
                out.push(w);
            }
        }
    }
    out
}

fn brute_expansion(w: &[usize], depth: usize) -> Poly {
    if w.len() == 1 {
        return HashMap::from([(w.to_vec(), 1.0)]);
    }
    let lyn = brute_lyndon(8, w.len());
    let split = (1..w.len()).find(|&i| lyn.contains(&w[i..].to_vec())).unwrap();
    p_bracket(&brute_expansion(&w[..split], depth), &brute_expansion(&w[split..], depth), depth)
}

fn brute_log_sig(incs: &[Vec<f64>], depth: usize) -> Poly {
    let mut sig = p_unit();
    for inc in incs {
        sig = p_mul(&sig, &p_exp(&p_letters(inc), depth), depth);
    }
    p_log(&sig, depth)
}

fn max_diff(a: &Poly, b: &Poly) -> f64 {
    let mut m: f64 = 0.0;
    for w in a.keys().chain(b.keys()) {
        let x = a.get(w).copied().unwrap_or(0.0);
        let y = b.get(w).copied().unwrap_or(0.0);
        m = m.max((x - y).abs());
    }
    m
}

fn increments_matrix(incs: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(incs).unwrap()
}

// ---------------------------------- tests ----------------------------------

#[test]
fn witt_matches_enumeration() {
    for d in 1..=4 {
        for n in 1..=4 {
            assert_eq!(witt_dimension(d, n), brute_lyndon(d, n).len());
            let mut ours = lyndon_words(d, n);
            ours.sort();
            let mut brute = brute_lyndon(d, n);
            brute.sort();
            assert_eq!(ours, brute);
        }
    }
    assert_eq!(HallBasis::new(2, 2).unwrap().len(), 3);
    assert_eq!(HallBasis::new(2, 3).unwrap().len(), 5);
    assert_eq!(HallBasis::new(3, 2).unwrap().len(), 6);
}

#[test]
fn chen_examples() {
    let unit = TensorPoly::unit(2, 3);
    let s = segment_signature(&[0.3, -1.2], 3);
    assert_eq!(chen_product(&unit, &s).unwrap(), s);

    let (p, q) = (0.7, -0.4);
    let pq = chen_product(&segment_signature(&[p], 3), &segment_signature(&[q], 3)).unwrap();
    assert!((pq.coeff(&[0]) - (p + q)).abs() < 1e-15);
    assert!((pq.coeff(&[0, 0]) - (p + q).powi(2) / 2.0).abs() < 1e-15);

    let two = path_signature(&[&[1.0, 0.0], &[0.0, 1.0]], 2, 2).unwrap();
    assert_eq!(two.coeff(&[0, 1]), 1.0);
    assert_eq!(two.coeff(&[1, 0]), 0.0);
}

#[test]
fn segment_signature_examples() {
    assert_eq!(segment_signature(&[0.0, 0.0], 3), TensorPoly::unit(2, 3));
    let h = 0.6;
    let s = segment_signature(&[h], 3);
    let levels: Vec<f64> = (0..=3).map(|m| s.level(m)[0]).collect();
    let want = [1.0, h, h * h / 2.0, h * h * h / 6.0];
    for (a, b) in levels.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(segment_signature(&[1.0, 2.0], 2).coeff(&[0, 1]), 1.0);
}

#[test]
fn log_exp_roundtrip_on_group_like_elements() {
    let mut rng = Rng::new(1);
    for depth in 1..=4 {
        for _ in 0..10 {
            let incs: Vec<Vec<f64>> = (0..5).map(|_| rng.normal_vec(3, 0.7)).collect();
            let rows: Vec<&[f64]> = incs.iter().map(|v| v.as_slice()).collect();
            let sig = path_signature(&rows, 3, depth).unwrap();
            let back = sig.log().unwrap().exp().unwrap();
            for m in 0..=depth {
                for (a, b) in sig.level(m).iter().zip(back.level(m)) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn log_signature_matches_brute_force_oracle() {
    let mut rng = Rng::new(2);
    for depth in 1..=3 {
        let basis = HallBasis::new(2, depth).unwrap();
        for _ in 0..50 {
            let n = 1 + rng.below(6);
            let incs: Vec<Vec<f64>> = (0..n).map(|_| rng.normal_vec(2, 1.0)).collect();
            let ours = log_signature(&increments_matrix(&incs), &basis).unwrap();
            // rebuild the Lie polynomial from our coordinates with oracle expansions
            let mut rebuilt = Poly::new();
            for (el, &lam) in basis.elements().iter().zip(&ours.coeffs) {
                rebuilt = p_add(&rebuilt, &brute_expansion(&el.word, depth), lam);
            }
            let brute = brute_log_sig(&incs, depth);
            assert!(max_diff(&rebuilt, &brute) <= 1e-10);
        }
    }
}

#[test]
fn single_segment_has_only_level_one() {
    let basis = HallBasis::new(2, 3).unwrap();
    let ls = log_signature(&increments_matrix(&[vec![0.4, -1.3]]), &basis).unwrap();
    assert!((ls.coeffs[0] - 0.4).abs() < 1e-15 && (ls.coeffs[1] + 1.3).abs() < 1e-15);
    assert!(ls.coeffs[2..].iter().all(|c| c.abs() < 1e-15));
}

#[test]
fn two_segment_bracket_coefficient_is_half() {
    let basis = HallBasis::new(2, 2).unwrap();
    let fwd = log_signature(&increments_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]), &basis).unwrap();
    assert_eq!(fwd.coeffs, vec![1.0, 1.0, 0.5]);
    let rev = log_signature(&increments_matrix(&[vec![0.0, 1.0], vec![1.0, 0.0]]), &basis).unwrap();
    assert_eq!(rev.coeffs, vec![1.0, 1.0, -0.5]);
}

#[test]
fn depth_three_bch() {
    // log(e^a e^b) = a + b + [a,b]/2 + ([a,[a,b]] + [b,[b,a]])/12
    let mut rng = Rng::new(3);
    for _ in 0..20 {
        let a = p_letters(&rng.normal_vec(2, 1.0));
        let b = p_letters(&rng.normal_vec(2, 1.0));
        let ab = p_bracket(&a, &b, 3);
        let ba = p_bracket(&b, &a, 3);
        let mut bch = p_add(&a, &b, 1.0);
        bch = p_add(&bch, &ab, 0.5);
        bch = p_add(&bch, &p_bracket(&a, &ab, 3), 1.0 / 12.0);
        bch = p_add(&bch, &p_bracket(&b, &ba, 3), 1.0 / 12.0);

        let incs = [
            (0..2).map(|i| a[&vec![i]]).collect::<Vec<_>>(),
            (0..2).map(|i| b[&vec![i]]).collect::<Vec<_>>(),
        ];
        let basis = HallBasis::new(2, 3).unwrap();
        let ours = log_signature(&increments_matrix(&incs), &basis).unwrap();
        let tensor = basis.to_tensor(&ours.coeffs).unwrap();
        let mut as_poly = Poly::new();
        for w in brute_lyndon(2, 3).into_iter().chain([vec![1, 0], vec![1, 1, 0], vec![1, 0, 0], vec![0, 1, 0], vec![1, 0, 1], vec![0, 0, 0], vec![1, 1, 1]]) {
            as_poly.insert(w.clone(), tensor.coeff(&w));
        }
        assert!(max_diff(&as_poly, &bch) <= 1e-12);
    }
}

#[test]
fn lifted_brackets() {
    let a1 = StructuredMatrix::new(StructureKind::Dense, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    let a2 = StructuredMatrix::new(StructureKind::Dense, 2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
    let fam = ChannelFamily::from_members(vec![a1, a2]).unwrap();
    let basis = HallBasis::new(2, 2).unwrap();
    let lifted = lift_vector_fields(&fam, &basis).unwrap();
    assert_eq!(lifted[2].materialize().data(), &[1.0, 0.0, 0.0, -1.0]);

    let diag = init_family(&StructureSpec::Diagonal, 5, 3, InitPolicy::Diagnostics, &mut Rng::new(4)).unwrap();
    let basis3 = HallBasis::new(3, 3).unwrap();
    for m in &lift_vector_fields(&diag, &basis3).unwrap()[3..] {
        assert!(m.params().iter().all(|x| *x == 0.0));
    }

    let mut rng = Rng::new(5);
    let dense = init_family(&StructureSpec::Dense, 3, 2, InitPolicy::Diagnostics, &mut rng).unwrap();
    let lifted = lift_vector_fields(&dense, &basis).unwrap();
    let (x, y) = (dense.member(0).materialize(), dense.member(1).materialize());
    let oracle = matmul(&x, &y).unwrap().sub(&matmul(&y, &x).unwrap()).unwrap();
    assert_eq!(lifted[2].materialize(), oracle);
}

#[test]
fn jacobi_identity() {
    let mut rng = Rng::new(6);
    let fam = init_family(&StructureSpec::Dense, 6, 3, InitPolicy::Diagnostics, &mut rng).unwrap();
    let m: Vec<Matrix> = (0..3).map(|i| fam.member(i).materialize()).collect();
    let br = |a: &Matrix, b: &Matrix| matmul(a, b).unwrap().sub(&matmul(b, a).unwrap()).unwrap();
    let j = br(&br(&m[0], &m[1]), &m[2])
        .add(&br(&br(&m[1], &m[2]), &m[0]))
        .unwrap()
        .add(&br(&br(&m[2], &m[0]), &m[1]))
        .unwrap();
    assert!(j.max_abs() <= 1e-12);
}

#[test]
fn depth_one_single_step_windows_reduce_to_exponential_scan() {
    let mut rng = Rng::new(7);
    for spec in [StructureSpec::Dense, StructureSpec::Diagonal, uniform_blocks(2), StructureSpec::Dplr { rank: 1 }] {
        let fam = init_family(&spec, 4, 2, InitPolicy::Training, &mut rng).unwrap();
        let incs = Matrix::from_fn(17, 2, |_, _| rng.normal() * 0.3);
        let h0 = rng.normal_vec(4, 1.0);
        let hyb = hybrid_solve(&fam, &incs, 1, 1, &h0, &ScanStats::new()).unwrap();
        let par = scan_parallel(&fam, &incs, &h0, FlowOrder::Exponential, &ScanStats::new()).unwrap();
        for (a, b) in hyb.iter().zip(&par) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()), "{spec}");
            }
        }
    }
}

#[test]
fn diagonal_hybrid_equals_closed_form() {
    let mut rng = Rng::new(8);
    let fam = init_family(&StructureSpec::Diagonal, 4, 3, InitPolicy::Diagnostics, &mut rng).unwrap();
    let incs = Matrix::from_fn(20, 3, |_, _| rng.normal() * 0.2);
    let h0 = rng.normal_vec(4, 1.0);
    for depth in 1..=3 {
        let hyb = hybrid_solve(&fam, &incs, 4, depth, &h0, &ScanStats::new()).unwrap();
        for (w, state) in hyb.iter().enumerate() {
            for k in 0..4 {
                let mut expo = 0.0;
                for j in 0..(4 * w).min(20) {
                    for i in 0..3 {
                        expo += incs.get(j, i) * fam.params(i)[k];
                    }
                }
                let want = h0[k] * f64::exp(expo);
                assert!((state[k] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }
}

#[test]
fn depth_two_windows_beat_depth_one() {
    let mut rng = Rng::new(9);
    let fam = init_family(&StructureSpec::Dense, 4, 2, InitPolicy::Diagnostics, &mut rng).unwrap();
    let n = 4096;
    let incs = Matrix::from_fn(n, 2, |j, c| {
        let t = j as f64 / n as f64;
        let dt = 1.0 / n as f64;
        if c == 0 { dt } else { (2.0 * std::f64::consts::PI * 3.0 * t).cos() * dt * 4.0 }
    });
    let h0 = rng.normal_vec(4, 1.0);
    let reference = scan_sequential(&fam, &incs, &h0, FlowOrder::Exponential).unwrap();
    let err = |depth| {
        let states = hybrid_solve(&fam, &incs, 4, depth, &h0, &ScanStats::new()).unwrap();
        states
            .iter()
            .enumerate()
            .map(|(w, s)| {
                let r = &reference[(4 * w).min(n)];
                s.iter().zip(r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    assert!(err(2) <= err(1));
}

#[test]
fn logode_flow_with_zero_signature_is_identity() {
    let fam = init_family(&StructureSpec::Dense, 3, 2, InitPolicy::Training, &mut Rng::new(10)).unwrap();
    let basis = HallBasis::new(2, 2).unwrap();
    let lifted = lift_vector_fields(&fam, &basis).unwrap();
    let f = logode_flow(&basis, &lifted, &slicekit::logsig::LogSignature { coeffs: vec![0.0; 3] }).unwrap();
    assert_eq!(f.to_dense(), Matrix::identity(3));
}

#[test]
fn depth_above_cap_rejected() {
    let fam = init_family(&StructureSpec::Dense, 3, 2, InitPolicy::Training, &mut Rng::new(11)).unwrap();
    let incs = Matrix::zeros(4, 2);
    assert!(hybrid_solve(&fam, &incs, 2, 4, &[1.0; 3], &ScanStats::new()).is_err());
    assert!(hybrid_solve(&fam, &incs, 0, 1, &[1.0; 3], &ScanStats::new()).is_err());
}

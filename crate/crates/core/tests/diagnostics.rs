use slicekit::diagnostics::{
    bent_path, closure_profile, format_word, gram, gram_sweep, log_blocks, logode_order_probe, parse_word,
    scan_equivalence, write_gram_csv, write_order_csv, GramProbeConfig, GramRow,
};
use slicekit::linalg::Rng;
use slicekit::structured::{init_family, InitPolicy, StructureSpec};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn row<'a>(rows: &'a [GramRow], kind: &str, d_h: usize, i: &[usize], j: &[usize]) -> &'a GramRow {
    rows.iter()
        .find(|r| r.kind == kind && r.d_h == d_h && r.i == i && r.j == j)
        .unwrap()
}

#[test]
fn empty_words_give_squared_norm() {
    let d = 1024;
    let mut rng = Rng::new(3);
    let fam = init_family(&StructureSpec::Dense, d, 2, InitPolicy::Diagnostics, &mut rng).unwrap();
    let h0 = rng.normal_vec(d, 1.0);
    let g = gram(&[], &[], &fam, &h0).unwrap();
    let norm2: f64 = h0.iter().map(|x| x * x).sum::<f64>() / d as f64;
    assert!((g - norm2).abs() < 1e-12);
    assert!((g - 1.0).abs() <= 5.0 / (d as f64).sqrt());
}

#[test]
fn gram_matches_explicit_products() {
    let d = 6;
    let mut rng = Rng::new(8);
    let fam = init_family(&StructureSpec::Dense, d, 2, InitPolicy::Diagnostics, &mut rng).unwrap();
    let h0 = rng.normal_vec(d, 1.0);
    let (a, b) = (fam.member(0).materialize(), fam.member(1).materialize());
    let mv = |m: &slicekit::linalg::Matrix, v: &[f64]| -> Vec<f64> {
        (0..d).map(|r| (0..d).map(|c| m.get(r, c) * v[c]).sum()).collect()
    };
    // A_(1,2) h = A_1 A_2 h, A_(2,1,1) h = A_2 A_1 A_1 h
    let x = mv(&a, &mv(&b, &h0));
    let y = mv(&b, &mv(&a, &mv(&a, &h0)));
    let expect: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>() / d as f64;
    let got = gram(&[0, 1], &[1, 0, 0], &fam, &h0).unwrap();
    assert!((got - expect).abs() < 1e-12 * expect.abs().max(1.0));
    assert!(gram(&[2], &[0], &fam, &h0).is_err());
}

#[test]
fn dense_cross_gram_is_small() {
    let d = 256;
    let devs: Vec<f64> = (0..200)
        .map(|t| {
            let mut rng = Rng::new(100 + t);
            let fam = init_family(&StructureSpec::Dense, d, 2, InitPolicy::Diagnostics, &mut rng).unwrap();
            let h0 = rng.normal_vec(d, 1.0);
            gram(&[0], &[1], &fam, &h0).unwrap().abs()
        })
        .collect();
    assert!(median(devs) <= 3.0 / (d as f64).sqrt());
}

#[test]
fn diagonal_reordered_words_stay_correlated() {
    let mut rng = Rng::new(5);
    let fam = init_family(&StructureSpec::Diagonal, 1024, 2, InitPolicy::Diagnostics, &mut rng).unwrap();
    let h0 = rng.normal_vec(1024, 1.0);
    let same = gram(&[0, 1], &[0, 1], &fam, &h0).unwrap();
    let swapped = gram(&[0, 1], &[1, 0], &fam, &h0).unwrap();
    assert!((same - swapped).abs() < 1e-12);
}

#[test]
fn gram_sweep_rates() {
    let cfg = GramProbeConfig {
        specs: vec![
            StructureSpec::Dense,
            StructureSpec::Diagonal,
            StructureSpec::Sparse { epsilon: 0.5 },
            StructureSpec::WalshHadamard,
        ],
        dims: vec![64, 256, 1024],
        trials: 200,
        seed: 11,
        ..Default::default()
    };
    let rows = gram_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 4 * 3 * cfg.pairs.len());

    let off = (vec![0], vec![1]);
    let dense = |d| row(&rows, "dense", d, &off.0, &off.1).median_dev;
    assert!(dense(256) / dense(1024) >= 1.4, "{} {}", dense(256), dense(1024));
    assert!(dense(64) / dense(256) >= 1.4);

    let diag = row(&rows, "diagonal", 1024, &[0, 1], &[1, 0]);
    assert!(diag.mean_gram >= 0.8, "{}", diag.mean_gram);

    for (i, j) in &cfg.pairs {
        let dense = row(&rows, "dense", 1024, i, j).median_dev;
        let sparse = row(&rows, "sparse:0.5", 1024, i, j).median_dev;
        assert!(sparse <= 2.0 * dense && dense <= 2.0 * sparse, "{i:?} {j:?}: {sparse} vs {dense}");
    }
    let wh = |d| row(&rows, "wh", d, &[0], &[1]).median_dev;
    assert!(wh(1024) < wh(64));
}

#[test]
fn gram_sweep_is_deterministic() {
    let cfg = GramProbeConfig {
        specs: vec![log_blocks(64)],
        dims: vec![64],
        trials: 20,
        ..Default::default()
    };
    assert_eq!(gram_sweep(&cfg).unwrap(), gram_sweep(&cfg).unwrap());
}

#[test]
fn gram_csv_schema() {
    let cfg = GramProbeConfig {
        dims: vec![16],
        trials: 5,
        ..Default::default()
    };
    let rows = gram_sweep(&cfg).unwrap();
    let mut buf = Vec::new();
    write_gram_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "kind,d_h,I,J,trials,median_dev,q25_dev,q75_dev,mean_gram"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&first[..5], &["dense", "16", "-", "-", "5"]);
    assert_eq!(text.lines().count(), rows.len() + 1);
}

#[test]
fn word_format_round_trip() {
    for w in [vec![], vec![0], vec![1, 0, 0]] {
        assert_eq!(parse_word(&format_word(&w)).unwrap(), w);
    }
    assert_eq!(format_word(&[0, 1]), "12");
    assert!(parse_word("102").is_err());
}

#[test]
fn log_blocks_cover_dimension() {
    let StructureSpec::BlockDiagonal(sizes) = log_blocks(1000) else { panic!() };
    let s = sizes.resolve(1000).unwrap();
    assert_eq!(s.iter().sum::<usize>(), 1000);
    assert_eq!(s[0], 10);
}

fn order_setup(spec: &StructureSpec) -> (slicekit::structured::ChannelFamily, slicekit::linalg::Matrix, Vec<f64>) {
    let mut rng = Rng::new(21);
    let fam = init_family(spec, 4, 2, InitPolicy::Diagnostics, &mut rng).unwrap();
    let h0 = rng.normal_vec(4, 1.0);
    (fam, bent_path(12, 0.1, 1.0), h0)
}

#[test]
fn logode_order_slopes() {
    let (fam, path, h0) = order_setup(&StructureSpec::Dense);
    let windows = [8, 16, 32, 64, 128, 256];
    let table = logode_order_probe(&fam, &path, &h0, &[1, 2], &windows).unwrap();
    let (s1, s2) = (table.slope(1).unwrap(), table.slope(2).unwrap());
    assert!((0.7..=1.3).contains(&s1), "depth 1 slope {s1}");
    assert!((1.7..=2.3).contains(&s2), "depth 2 slope {s2}");
    for w in [16, 32, 64, 128, 256] {
        let ratio = table.error(2, w).unwrap() / table.error(2, w / 2).unwrap();
        assert!(ratio >= 3.4, "window {w}: {ratio}");
    }
    let mut buf = Vec::new();
    write_order_csv(&mut buf, &table).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("depth,window,error\n"));
    assert_eq!(text.lines().count(), 1 + 2 * windows.len());
}

#[test]
fn diagonal_depths_agree() {
    let (fam, path, h0) = order_setup(&StructureSpec::Diagonal);
    let table = logode_order_probe(&fam, &path, &h0, &[1, 2], &[8, 64]).unwrap();
    for w in [8, 64] {
        let (e1, e2) = (table.error(1, w).unwrap(), table.error(2, w).unwrap());
        assert!((e1 - e2).abs() <= 1e-12, "{e1} {e2}");
    }
}

#[test]
fn equivalence_and_closure_probes() {
    for spec in ["dense", "diagonal", "dplr:2", "bd:4", "sparse:0.5", "wh"] {
        let spec: StructureSpec = spec.parse().unwrap();
        let row = scan_equivalence(&spec, 16, 200, 3, 4).unwrap();
        assert!(row.max_rel_err <= 1e-10, "{spec}: {}", row.max_rel_err);
        let counts = closure_profile(&spec, 16, 64, 3, 4).unwrap();
        let closed = matches!(spec, StructureSpec::Diagonal | StructureSpec::BlockDiagonal(_));
        assert_eq!(counts.dense_materializations == 0, closed, "{spec}");
        assert!(counts.combines > 0);
    }
}

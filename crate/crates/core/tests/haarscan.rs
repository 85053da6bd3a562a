use std::fs;

use nlt_core::haarscan::*;
use nlt_core::qcore::*;
use nlt_core::states::w_state;
use proptest::prelude::*;

fn quick(d: usize, m: usize, guesses: usize) -> ScanConfig {
    let mut cfg = ScanConfig::new(d, m, 11).unwrap();
    cfg.guesses = guesses;
    cfg.batch = 3;
    cfg
}

#[test]
fn w_state_pairs_are_not_flagged() {
    let cfg = ScanConfig::new(2, 2, 0).unwrap();
    let r = classify_sample(&w_state(3).unwrap(), &cfg, 1).unwrap();
    assert_eq!(r.classification, Classification::None);
    for p in &r.pairs {
        assert!(!p.nonlocal);
        // tau_3 is below 2 for traceless observables; the local value 2 wins
        assert!((p.value - 2.0).abs() < 1e-9, "{}: {}", p.pair, p.value);
    }
}

#[test]
fn product_state_is_none() {
    for d in [2, 3] {
        let ket = Ket::basis(Layout::uniform(d, 3), 0).unwrap();
        let r = classify_sample(&ket, &quick(d, 2, 8), 3).unwrap();
        assert_eq!(r.classification, Classification::None);
        assert!(r.pairs.iter().all(|p| p.value <= p.bound + 1e-9));
    }
    let bad = Ket::basis(Layout::uniform(2, 3), 0).unwrap();
    assert!(classify_sample(&bad, &quick(3, 2, 8), 0).is_err());
}

#[test]
fn qutrit_regression_sample_is_all() {
    let cfg = ScanConfig::new(3, 2, 7).unwrap();
    let r = sample_record(&cfg, 8).unwrap();
    assert_eq!(r.index, 8);
    assert_eq!(r.seed, derive_seed(7, 8));
    assert_eq!(r.classification, Classification::All, "{:?}", r.pairs);
}

#[test]
fn resume_is_bitwise_identical() {
    let cfg = quick(2, 2, 6);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_scan(&ScanConfig { samples: 5, ..cfg.clone() }, a.path()).unwrap();
    assert_eq!(first.computed, 5);
    let resumed = run_scan(&ScanConfig { samples: 11, ..cfg.clone() }, a.path()).unwrap();
    assert_eq!(resumed.computed, 6);
    let fresh = run_scan(&ScanConfig { samples: 11, ..cfg.clone() }, b.path()).unwrap();
    assert_eq!(fs::read(&resumed.records).unwrap(), fs::read(&fresh.records).unwrap());
    assert_eq!(fs::read(&resumed.summary_path).unwrap(), fs::read(&fresh.summary_path).unwrap());
    assert_eq!(resumed.summary, fresh.summary);
    // nothing left to do
    assert_eq!(run_scan(&ScanConfig { samples: 11, ..cfg.clone() }, b.path()).unwrap().computed, 0);
    let recs = read_records(&fresh.records).unwrap();
    assert_eq!(recs.len(), 11);
    assert_eq!(recs[4], sample_record(&cfg, 4).unwrap());
}

#[test]
fn torn_last_line_is_dropped() {
    let cfg = ScanConfig { samples: 4, ..quick(2, 2, 4) };
    let dir = tempfile::tempdir().unwrap();
    let out = run_scan(&cfg, dir.path()).unwrap();
    let full = fs::read_to_string(&out.records).unwrap();
    let lines: Vec<&str> = full.lines().collect();
    let torn = format!("{}\n{}\n{}", lines[0], lines[1], &lines[2][..lines[2].len() / 2]);
    fs::write(&out.records, &torn).unwrap();
    assert_eq!(read_records(&out.records).unwrap().len(), 2);
    let again = run_scan(&cfg, dir.path()).unwrap();
    assert_eq!(again.computed, 2);
    assert_eq!(fs::read_to_string(&again.records).unwrap(), full);

    let broken = format!("{}\nnot json\n{}\n", lines[0], lines[1]);
    fs::write(&out.records, broken).unwrap();
    assert!(read_records(&out.records).is_err());
}

#[test]
fn mismatched_config_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    run_scan(&ScanConfig { samples: 2, ..quick(2, 2, 4) }, dir.path()).unwrap();
    let other = ScanConfig { samples: 2, base_seed: 12, ..quick(2, 2, 4) };
    assert!(run_scan(&other, dir.path()).is_err());
}

#[test]
fn more_settings_never_lose_a_flag() {
    let two = quick(2, 2, 8);
    let three = quick(2, 3, 12);
    for i in 0..16 {
        let a = sample_record(&two, i).unwrap();
        let b = sample_record(&three, i).unwrap();
        for (p, q) in a.pairs.iter().zip(&b.pairs) {
            assert!(!p.nonlocal || q.nonlocal, "sample {i} pair {}", p.pair);
            assert!(q.value - q.bound >= p.value - p.bound - 1e-12);
        }
    }
}

#[test]
fn header_only_summary_when_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(SUMMARY_FILE);
    write_summary(&path, None).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), format!("{SUMMARY_HEADER}\n"));
    let s = summarize(3, 2, 256, &[]);
    assert_eq!(s.samples, 0);
    assert_eq!(s.counts(), [0; 4]);
}

#[test]
fn configs_are_validated() {
    assert!(ScanConfig::new(6, 2, 0).is_err());
    assert!(ScanConfig::new(1, 2, 0).is_err());
    assert!(ScanConfig::new(3, 4, 0).is_err());
    let mut cfg = ScanConfig::new(2, 2, 0).unwrap();
    cfg.inequalities = vec!["i3322".into()];
    assert!(cfg.validate().is_err());
    cfg.inequalities = vec![];
    assert!(cfg.validate().is_err());
    assert_eq!(default_samples(3), 2000);
    assert_eq!(default_samples(4), 500);
    assert_eq!(default_samples(5), 100);
    let json = serde_json::to_string(&ScanConfig::new(3, 3, 9).unwrap()).unwrap();
    assert!(json.contains("\"M\":3"));
}

fn record(index: u64, c: Classification) -> ScanRecord {
    let flags = match c {
        Classification::None => 0,
        Classification::One => 1,
        Classification::Two => 2,
        Classification::All => 3,
    };
    let pairs = ["AB", "BC", "AC"]
        .iter()
        .enumerate()
        .map(|(i, p)| PairResult { pair: p.to_string(), functional: "chsh".into(), value: 2.0, bound: 2.0, nonlocal: i < flags })
        .collect();
    ScanRecord { index, seed: index, pairs, classification: c }
}

proptest! {
    #[test]
    fn counts_sum_to_samples(classes in prop::collection::vec(0usize..4, 0..200)) {
        let all = [Classification::None, Classification::One, Classification::Two, Classification::All];
        let recs: Vec<ScanRecord> = classes.iter().enumerate().map(|(i, &k)| record(i as u64, all[k])).collect();
        let s = summarize(2, 2, 36, &recs);
        prop_assert_eq!(s.counts().iter().sum::<usize>(), recs.len());
        for (k, c) in s.counts().iter().enumerate() {
            prop_assert_eq!(*c, classes.iter().filter(|&&x| x == k).count());
        }
        for r in &recs {
            let n = r.pairs.iter().filter(|p| p.nonlocal).count();
            prop_assert_eq!(Classification::from_count(n), r.classification);
        }
    }
}

use cryptofactor::econometrics::{vif, PanelFrame, VIF_THRESHOLD};
use proptest::prelude::*;

fn frame(cols: &[(&str, Vec<f64>)]) -> PanelFrame {
    let n = cols[0].1.len();
    let mut f = PanelFrame::new((0..n).map(|i| format!("c{}", i % 7)).collect(), (0..n).map(|i| format!("m{}", i / 7)).collect());
    for (name, v) in cols {
        f.insert(name, v.clone());
    }
    f
}

fn noise(seed: u64, n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i as f64 + 1.0) * (seed as f64 * 0.618 + 1.3)).sin() + 0.3 * ((i * i) as f64 * 0.01 + seed as f64).cos()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn adding_a_regressor_never_lowers_vif(seed in 0u64..1000, mix in -2.0f64..2.0) {
        let a = noise(seed, 80);
        let b: Vec<f64> = noise(seed + 1, 80).iter().zip(&a).map(|(x, y)| x + 0.5 * y).collect();
        let c: Vec<f64> = noise(seed + 2, 80).iter().zip(&a).map(|(x, y)| x + mix * y).collect();
        let f = frame(&[("a", a), ("b", b), ("c", c)]);
        let two = vif(&f, &["a", "b"], VIF_THRESHOLD).unwrap();
        let three = vif(&f, &["a", "b", "c"], VIF_THRESHOLD).unwrap();
        for name in ["a", "b"] {
            prop_assert!(three.get(name).unwrap().vif >= two.get(name).unwrap().vif * (1.0 - 1e-12));
        }
    }

    #[test]
    fn affine_rescaling_leaves_vif(seed in 0u64..1000, scale in 0.01f64..100.0, shift in -50.0f64..50.0) {
        let a = noise(seed, 60);
        let b: Vec<f64> = noise(seed + 3, 60).iter().zip(&a).map(|(x, y)| x - 0.7 * y).collect();
        let scaled: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
        let base = vif(&frame(&[("a", a), ("b", b.clone())]), &["a", "b"], VIF_THRESHOLD).unwrap();
        let moved = vif(&frame(&[("a", scaled), ("b", b)]), &["a", "b"], VIF_THRESHOLD).unwrap();
        for (x, y) in base.entries.iter().zip(&moved.entries) {
            prop_assert!((x.vif - y.vif).abs() <= 1e-9 * x.vif);
        }
    }
}

#[test]
fn flag_follows_threshold() {
    let a = noise(1, 100);
    // rho close to 0.96 puts the pair just above 10
    let b: Vec<f64> = noise(2, 100).iter().zip(&a).map(|(x, y)| 0.2 * x + y).collect();
    let f = frame(&[("a", a), ("b", b)]);
    let r = vif(&f, &["a", "b"], VIF_THRESHOLD).unwrap();
    for e in &r.entries {
        assert_eq!(e.flagged, e.vif > 10.0, "{e:?}");
    }
    let strict = vif(&f, &["a", "b"], 1.5).unwrap();
    assert!(strict.entries.iter().all(|e| e.flagged));
}

#[test]
fn exact_combination_is_infinite() {
    let a = noise(5, 50);
    let b = noise(6, 50);
    let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - y + 1.0).collect();
    let r = vif(&frame(&[("a", a), ("b", b), ("c", c)]), &["a", "b", "c"], VIF_THRESHOLD).unwrap();
    assert!(r.entries.iter().all(|e| e.vif.is_infinite() && e.flagged));
}

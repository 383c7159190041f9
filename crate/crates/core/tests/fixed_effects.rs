use cryptofactor::econometrics::{two_way_fe, FeFit, FeSpec, PanelFrame, SeType};
use cryptofactor::synth::{fe_panel, oracle_fe, FePanelConfig};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

fn assert_same(a: &FeFit, b: &FeFit) {
    assert_eq!(a.n_rows, b.n_rows);
    assert_eq!(a.dof, b.dof);
    assert_eq!(a.absorbed, b.absorbed);
    assert_eq!(a.dropped_singletons, b.dropped_singletons);
    assert!(close(a.within_r2, b.within_r2, 1e-8), "{} {}", a.within_r2, b.within_r2);
    for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
        assert_eq!(x.name, y.name);
        assert!(close(x.beta, y.beta, 1e-8), "{}: {} vs {}", x.name, x.beta, y.beta);
        assert!(close(x.se, y.se, 1e-7), "{} se: {} vs {}", x.name, x.se, y.se);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn within_estimator_matches_dummies(
        seed in 0u64..10_000,
        coins in 3usize..12,
        months in 3usize..12,
        drop in 0.0f64..0.4,
        cluster in any::<bool>(),
        effects in 0usize..3,
    ) {
        let panel = fe_panel(&FePanelConfig { seed, n_coins: coins, n_months: months, drop_fraction: drop, ..FePanelConfig::default() });
        let (fe_coin, fe_month) = [(true, true), (true, false), (false, true)][effects];
        let se = if cluster { SeType::ClusterByCoin } else { SeType::Homoskedastic };
        let spec = FeSpec::new("ivol", &["d_investor_base", "x1", "category"]).with_se(se).with_effects(fe_coin, fe_month);
        match (two_way_fe(&panel, &spec), oracle_fe(&panel, &spec)) {
            (Ok(a), Ok(b)) => assert_same(&a, &b),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "paths disagree: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn estimates_ignore_labels_and_row_order(seed in 0u64..10_000, rotate in 1usize..200) {
        let panel = fe_panel(&FePanelConfig { seed, n_coins: 8, n_months: 10, ..FePanelConfig::default() });
        let n = panel.len();
        let order: Vec<usize> = (0..n).map(|i| (i * 7 + rotate) % n).collect();
        let mut entity: Vec<String> = order.iter().map(|&i| format!("z{}", panel.entity()[i])).collect();
        entity.iter_mut().for_each(|e| *e = e.chars().rev().collect());
        let period: Vec<String> = order.iter().map(|&i| format!("p-{}", panel.period()[i])).collect();
        let mut shuffled = PanelFrame::new(entity, period);
        for name in ["ivol", "d_investor_base", "x1", "x2"] {
            let col = panel.column(name).unwrap();
            shuffled.insert(name, order.iter().map(|&i| col[i]).collect());
        }
        let spec = FeSpec::new("ivol", &["d_investor_base", "x1", "x2"]).with_se(SeType::ClusterByCoin);
        let a = two_way_fe(&panel, &spec).unwrap();
        let b = two_way_fe(&shuffled, &spec).unwrap();
        assert_same(&a, &b);
    }
}

#[test]
fn singleton_coin_dropped_by_both_paths() {
    let mut panel = fe_panel(&FePanelConfig {
        n_coins: 5,
        n_months: 6,
        ..FePanelConfig::default()
    });
    let mut entity = panel.entity().to_vec();
    let mut period = panel.period().to_vec();
    entity.push("lonely".into());
    period.push(period[0].clone());
    let mut extended = PanelFrame::new(entity, period);
    for name in ["ivol", "d_investor_base", "x1", "x2", "category"] {
        let mut col = panel.column(name).unwrap().to_vec();
        col.push(0.25);
        extended.insert(name, col);
    }
    panel = extended;
    let spec = FeSpec::new("ivol", &["d_investor_base", "x1"]);
    let a = two_way_fe(&panel, &spec).unwrap();
    let b = oracle_fe(&panel, &spec).unwrap();
    assert_eq!(a.dropped_singletons, 1);
    assert_eq!(a.n_coins, 5);
    assert_same(&a, &b);
}

#[test]
fn within_estimate_is_unbiased_when_effects_correlate() {
    // the investor-base regressor loads on the coin effect
    let spec_fe = FeSpec::new("ivol", &["d_investor_base"]).with_se(SeType::Homoskedastic);
    let mut fe_err = 0.0;
    let n = 40;
    for seed in 0..n {
        let panel = fe_panel(&FePanelConfig {
            seed,
            gammas: vec![],
            coin_effect_sd: 3.0,
            ..FePanelConfig::default()
        });
        fe_err += two_way_fe(&panel, &spec_fe).unwrap().coefficients[0].beta - 0.5;
    }
    assert!((fe_err / n as f64).abs() < 0.01);
}

#[test]
fn disconnected_blocks_agree_with_dummies() {
    // coins 0..4 only trade in months 0..5, coins 4..8 only in months 5..10
    let panel = fe_panel(&FePanelConfig {
        n_coins: 8,
        n_months: 10,
        ..FePanelConfig::default()
    });
    let keep: Vec<usize> = (0..panel.len())
        .filter(|&i| {
            let coin: usize = panel.entity()[i][4..].parse().unwrap();
            let month: usize = panel.period()[i][1..].parse().unwrap();
            (coin < 4) == (month < 5)
        })
        .collect();
    let mut split = PanelFrame::new(keep.iter().map(|&i| panel.entity()[i].clone()).collect(), keep.iter().map(|&i| panel.period()[i].clone()).collect());
    for name in ["ivol", "d_investor_base", "x1"] {
        let col = panel.column(name).unwrap();
        split.insert(name, keep.iter().map(|&i| col[i]).collect());
    }
    for se in [SeType::Homoskedastic, SeType::ClusterByCoin] {
        let spec = FeSpec::new("ivol", &["d_investor_base", "x1"]).with_se(se);
        let a = two_way_fe(&split, &spec).unwrap();
        let b = oracle_fe(&split, &spec).unwrap();
        assert_eq!(a.dof, 40 - 8 - 10 + 2 - 2);
        assert_same(&a, &b);
    }
}

use cryptofactor::factors::{build_factors, FactorConfig};
use cryptofactor::ingest::{build_universe, compute_returns, load_followers, load_meta, load_prices, load_riskfree};
use cryptofactor::riskmodel::{ivol_panel, RiskConfig, RiskModel};
use cryptofactor::synth::{generate, LoadingLaw, PanelTruth, SynthConfig};

#[test]
fn generated_files_round_trip_and_loadings_recover() {
    let cfg = SynthConfig {
        n_coins: 25,
        n_days: 400,
        seed: 99,
        stablecoin_fraction: 0.0,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    data.write(dir.path()).unwrap();

    let prices = load_prices(&dir.path().join("prices.csv")).unwrap();
    let meta = load_meta(&dir.path().join("meta.csv")).unwrap();
    let followers = load_followers(&dir.path().join("followers.csv")).unwrap();
    let rf = load_riskfree(&dir.path().join("riskfree.csv")).unwrap();
    // shortest round-trip formatting reproduces every value exactly
    let reread: Vec<_> = prices.coins().flat_map(|(_, d)| d.iter().cloned()).collect();
    assert_eq!(reread, data.prices);
    assert_eq!(meta.len(), cfg.n_coins);
    assert_eq!(followers.coins().count(), cfg.n_coins);

    let (start, end) = prices.span().unwrap();
    let rf = rf.forward_fill(start, end).unwrap();
    let (returns, _) = compute_returns(&prices, &rf, 7);
    let (fits, skips) = ivol_panel(&returns, &data.factors, None, RiskModel::ThreeFactor, &RiskConfig::default());
    // 400 days end four days into February; only that stub month is skipped
    assert!(skips.iter().all(|s| s.key.contains("@2020-02/")), "{skips:?}");
    assert_eq!(skips.len(), cfg.n_coins);

    let truth: std::collections::BTreeMap<_, _> = data.truth.coins.iter().map(|c| (c.coin_id.clone(), c)).collect();
    let (mut inside, mut total) = (0, 0);
    for f in &fits {
        let t = truth[&f.coin_id];
        let estimates = [f.betas.mrkt, f.betas.smb.unwrap(), f.betas.wml.unwrap()];
        for ((est, true_value), se) in estimates.iter().zip([t.beta, t.smb, t.wml]).zip(&f.standard_errors[1..]) {
            total += 1;
            inside += ((est - true_value).abs() <= 3.0 * se) as usize;
        }
    }
    let share = inside as f64 / total as f64;
    assert!(share >= 0.95, "only {:.1}% of loadings within 3 se", 100.0 * share);
}

#[test]
fn market_only_loadings_are_recovered_exactly() {
    let cfg = SynthConfig {
        n_coins: 20,
        n_days: 200,
        factor_vols: [0.03, 0.0, 0.0],
        loadings: LoadingLaw {
            alpha_sd: 0.0,
            beta_mean: 1.0,
            beta_sd: 0.0,
            smb_mean: 0.0,
            smb_sd: 0.0,
            wml_mean: 0.0,
            wml_sd: 0.0,
        },
        idio_sigma: (0.0, 0.0),
        sigma_floor: 0.0,
        stablecoin_fraction: 0.0,
        panel_truth: PanelTruth {
            b1: 0.0,
            ..PanelTruth::default()
        },
        ..SynthConfig::default()
    };
    let data = generate(&cfg).unwrap();
    let prices = cryptofactor::ingest::PriceTable::from_rows(data.prices).unwrap();
    let meta = cryptofactor::ingest::MetaTable::from_rows(data.meta).unwrap();
    let (start, end) = prices.span().unwrap();
    let rf = cryptofactor::ingest::RateSeries::from_points(data.riskfree).forward_fill(start, end).unwrap();
    let (returns, _) = compute_returns(&prices, &rf, 7);
    let (universe, _) = build_universe(&prices, &meta, 1.0);
    // factors built from the data themselves, not the generating series
    let build = build_factors(&returns, &prices, &universe, &rf, &FactorConfig::default());
    let (fits, _) = ivol_panel(&returns, &build.table, None, RiskModel::Capm, &RiskConfig::default());
    assert!(fits.len() >= 100);
    for f in &fits {
        assert!((f.betas.mrkt - 1.0).abs() < 1e-6, "{} {} beta {}", f.coin_id, f.month, f.betas.mrkt);
        assert!(f.ivol < 1e-9);
    }
}

#[test]
fn three_factor_never_fits_worse_than_capm() {
    let data = generate(&SynthConfig {
        n_coins: 15,
        n_days: 200,
        ..SynthConfig::default()
    })
    .unwrap();
    let prices = cryptofactor::ingest::PriceTable::from_rows(data.prices).unwrap();
    let (start, end) = prices.span().unwrap();
    let rf = cryptofactor::ingest::RateSeries::from_points(data.riskfree).forward_fill(start, end).unwrap();
    let (returns, _) = compute_returns(&prices, &rf, 7);
    let cfg = RiskConfig::default();
    let (capm, _) = ivol_panel(&returns, &data.factors, None, RiskModel::Capm, &cfg);
    let (three, _) = ivol_panel(&returns, &data.factors, None, RiskModel::ThreeFactor, &cfg);
    assert_eq!(capm.len(), three.len());
    for (a, b) in capm.iter().zip(&three) {
        assert_eq!((&a.coin_id, a.month), (&b.coin_id, b.month));
        assert!(b.rss <= a.rss);
        assert!(b.ivol <= a.ivol);
    }
}

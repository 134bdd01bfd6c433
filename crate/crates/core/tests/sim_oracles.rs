//! Statistical checks of the synthetic city against textbook tests.

use hexfleet_core::sim::{poisson_arrivals, CityConfig};

/// Chi-square critical value for 99 degrees of freedom at the 0.01 level.
const CHI2_99_AT_001: f64 = 134.642;

#[test]
fn demand_without_hotspots_is_uniform() {
    let mut cfg = CityConfig::two_hotspot(1, 0);
    cfg.hotspots.clear();
    cfg.background_weight = 1.0;
    // Rate chosen so about 10^4 orders arrive.
    let pts = poisson_arrivals(&cfg, 1.0, 10_000, 3);
    assert!((9_000..11_000).contains(&pts.len()), "{} orders", pts.len());
    let (sw, ne) = (cfg.bbox.south_west, cfg.bbox.north_east);
    let mut bins = [0usize; 100];
    for p in &pts {
        let i = (((p.lat() - sw.lat()) / (ne.lat() - sw.lat())) * 10.0).floor().min(9.0) as usize;
        let j = (((p.lon() - sw.lon()) / (ne.lon() - sw.lon())) * 10.0).floor().min(9.0) as usize;
        bins[i * 10 + j] += 1;
    }
    let expected = pts.len() as f64 / 100.0;
    let chi2: f64 = bins.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < CHI2_99_AT_001, "chi-square {chi2}");
}

#[test]
fn arrival_counts_follow_the_rate() {
    let cfg = CityConfig::two_hotspot(1, 0);
    // Poisson total over 10^4 one-second slots at rate 0.5: mean and
    // variance 5000, so 5 standard deviations is about 354.
    let n = poisson_arrivals(&cfg, 0.5, 10_000, 4).len() as f64;
    assert!((n - 5000.0).abs() < 354.0, "{n}");
}

//! Monte Carlo and reference-table oracles for the influence tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use trendcause::influence::{
    build_influence_tensor, f_survival, granger_test, unit_to_global, GrangerConfig, GLOBAL_ID,
};
use trendcause::ingest::apply_split;
use trendcause::synth::{generate, PlantedEdge, SynthConfig};
use trendcause::{Axis, TrajectorySet};

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

#[test]
fn f_tail_matches_reference_table() {
    // Upper tail of F(d1, d2) from an independent implementation.
    let table = [
        (0.5, 1.0, 10.0, 0.49564750438311955),
        (1.0, 1.0, 50.0, 0.3221256451002433),
        (3.84, 1.0, 183.0, 0.05156225757156295),
        (4.0, 1.0, 30.0, 0.05462504496298307),
        (7.5, 1.0, 100.0, 0.007305752615798493),
        (12.0, 1.0, 183.0, 0.0006625722368098819),
        (25.0, 1.0, 183.0, 1.3362948104198982e-06),
        (2.5, 3.0, 40.0, 0.07325435201794978),
        (0.01, 1.0, 5.0, 0.9242301411546615),
        (40.0, 1.0, 175.0, 2.052611496002523e-09),
    ];
    for (f, d1, d2, want) in table {
        let got = f_survival(f, d1, d2).unwrap();
        assert!((got - want).abs() <= 1e-10, "F({d1},{d2}) at {f}: {got} vs {want}");
    }
}

#[test]
fn independent_white_noise_rarely_yields_an_edge() {
    let cfg = GrangerConfig::default();
    let mut quiet = 0;
    for seed in 0..1000 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = noise(&mut rng, 200);
        let source = noise(&mut rng, 200);
        if granger_test(&target, &source, &cfg).unwrap().is_none() {
            quiet += 1;
        }
    }
    assert!(quiet >= 930, "no edge in only {quiet}/1000");
}

#[test]
fn planted_lag_three_is_recovered() {
    let cfg = GrangerConfig::default();
    let mut hits = 0;
    for seed in 0..1000 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let source = noise(&mut rng, 200);
        let eps = noise(&mut rng, 200);
        let target: Vec<f64> = (0..200)
            .map(|t| if t >= 3 { 0.9 * source[t - 3] } else { 0.0 } + 0.05 * eps[t])
            .collect();
        if granger_test(&target, &source, &cfg).unwrap().is_some_and(|h| h.lag == 3) {
            hits += 1;
        }
    }
    assert!(hits >= 950, "lag 3 found in only {hits}/1000");
}

#[test]
fn one_planted_edge_in_a_full_tensor() {
    for seed in 0..10 {
        let cfg = SynthConfig {
            planted_edges: vec![PlantedEdge {
                axis: Axis::Unit,
                src: "U4".into(),
                dst: "U9".into(),
                context: "S2".into(),
                lag: 2,
                coefficient: 0.9,
            }],
            seed,
            ..Default::default()
        };
        let ts = generate(&cfg).unwrap().set;
        let t = build_influence_tensor(&ts, Axis::Unit, &GrangerConfig::default()).unwrap();
        let (s, d, c) = (t.entity_index("U4").unwrap(), t.entity_index("U9").unwrap(), 1);
        assert_eq!(t.lag(s, d, c), 2, "seed {seed}");
        let pairs: usize = 20 * 19 * 5;
        let spurious = t.nonzero() - 1;
        assert!(spurious <= pairs.div_ceil(20), "seed {seed}: {spurious} spurious edges");
    }
}

#[test]
fn tensor_degenerate_cases() {
    let ts = TrajectorySet::new(vec!["S1".into()], vec!["only".into()], 0, vec![(0..50).map(|t| (t as f64).sin()).collect()]).unwrap();
    assert_eq!(build_influence_tensor(&ts, Axis::Unit, &GrangerConfig::default()).unwrap().nonzero(), 0);
    assert!(unit_to_global(&ts, "S1", &GrangerConfig::default()).is_err());
}

#[test]
fn style_axis_equals_unit_axis_on_the_swapped_set() {
    let cfg = SynthConfig { units: 4, styles: 3, length: 150, seed: 2, ..Default::default() }.with_random_edges(0.9);
    let ts = generate(&cfg).unwrap().set;
    let g = GrangerConfig::default();
    let style = build_influence_tensor(&ts, Axis::Style, &g).unwrap();
    let swapped = build_influence_tensor(&ts.transposed(), Axis::Unit, &g).unwrap();
    assert_eq!(style.entities(), swapped.entities());
    assert_eq!(style.contexts(), swapped.contexts());
    assert_eq!(style.edges(), swapped.edges());
}

#[test]
fn lagged_unit_drives_the_global_trend() {
    // Global trend is the cross-unit mean, so a second unit compensates to
    // make the mean a noisy lag-2 copy of unit A.
    let mut found = 0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let a = noise(&mut rng, 200);
        let e = noise(&mut rng, 200);
        let b: Vec<f64> = (0..200)
            .map(|t| if t >= 2 { 2.0 * a[t - 2] } else { 0.0 } - a[t] + 0.05 * e[t])
            .collect();
        let flat = vec![0.5; 200];
        // Mean over four units: (a + b + 2 * 0.5) / 4, a scaled lag-2 copy of a.
        let ts = TrajectorySet::new(
            vec!["S1".into()],
            vec!["A".into(), "B".into(), "C".into(), "D".into()],
            0,
            vec![a, b, flat.clone(), flat],
        )
        .unwrap();
        let edges = unit_to_global(&ts, "S1", &GrangerConfig::default()).unwrap();
        if edges.iter().any(|e| e.src == "A" && e.dst == GLOBAL_ID && e.lag == 2) {
            found += 1;
        }
        assert!(edges.iter().all(|e| e.src != "C" && e.src != "D"));
    }
    assert!(found >= 48, "A found in {found}/50");
}

#[test]
fn identical_units_give_no_global_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = noise(&mut rng, 120);
    let ts = TrajectorySet::new(vec!["S1".into()], vec!["A".into(), "B".into(), "C".into()], 0, vec![a.clone(), a.clone(), a]).unwrap();
    assert!(unit_to_global(&ts, "S1", &GrangerConfig::default()).unwrap().is_empty());
}

#[test]
fn tensor_ignores_the_test_window() {
    let cfg = SynthConfig { units: 5, styles: 2, length: 160, seed: 4, ..Default::default() }.with_random_edges(0.9);
    let ts = apply_split(&generate(&cfg).unwrap().set, 4, 26, 8).unwrap();
    let g = GrangerConfig::default();
    let before = build_influence_tensor(&ts, Axis::Unit, &g).unwrap();
    let mut values: Vec<Vec<f64>> = ts.all_series().to_vec();
    for (i, v) in values.iter_mut().enumerate() {
        for x in &mut v[134..] {
            *x = 10.0 + i as f64;
        }
    }
    let mut shifted = TrajectorySet::new(ts.styles().to_vec(), ts.units().to_vec(), ts.start(), values).unwrap();
    shifted = apply_split(&shifted, 4, 26, 8).unwrap();
    assert_eq!(build_influence_tensor(&shifted, Axis::Unit, &g).unwrap(), before);
}

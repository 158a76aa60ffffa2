// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use agewise::aging::{AgingConditions, AgingPhysics};
use agewise::cfst::{cfst_measure, CfstConfig, CfstMeasurement};
use agewise::detector::*;
use agewise::fabsim::{age_chip, fabricate, sample_fab_model, FabConfig};
use agewise::library::Layer;
use agewise::netlist::{
    generate_netlist, parse_netlist, simulate_activity, ActivityProfile, GenSpec, NetActivity, Netlist,
};
use agewise::sta::{ArcKind, Inst, TimingGraph, TimingPath};
use agewise::CellLibrary;
use agewise_mlkit::StackHyper;
use common::{fixture, gate_model, CYCLES, FIVE};

// ---------------------------------------------------------------- features

fn dp_cells(g: &TimingGraph, p: &TimingPath) -> Vec<String> {
    p.dp.iter()
        .filter_map(|&a| match g.arcs[a as usize].kind {
            ArcKind::Cell(i @ Inst::Gate(_)) => Some(g.inst_name(i).to_string()),
            _ => None,
        })
        .collect()
}

fn col(name: &str) -> usize {
    FEATURE_NAMES.iter().position(|n| *n == name).unwrap()
}

#[test]
fn feature_vector_has_38_entries_with_distinct_names() {
    assert_eq!(NUM_FEATURES, 38);
    let mut names = FEATURE_NAMES.to_vec();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), 38);
    assert_eq!(dataset_header().split(',').count(), 40);
}

#[test]
fn four_x1_cells_in_the_data_path() {
    let (nl, g) = fixture(FIVE);
    let fa = g.ff("fa").unwrap();
    let p = g
        .k_longest_paths("fa", 10)
        .unwrap()
        .into_iter()
        .find(|p| dp_cells(&g, p) == ["g1", "g2", "g4", "g5"])
        .expect("path through g1 g2 g4 g5");
    assert_eq!(p.endpoint, fa);
    let f = extract_features(&g, &p).unwrap();
    assert_eq!(f.len(), 38);
    assert_eq!(f[col("dp_cells")], 4.0);
    assert_eq!(f[col("dp_x1")], 4.0);
    for d in ["dp_x0", "dp_x2", "dp_x4", "dp_x8", "dp_x16"] {
        assert_eq!(f[col(d)], 0.0, "{d}");
    }
    // both clock paths are cbr x8 then cb1 x4
    assert_eq!(f[col("lp_cells")], 2.0);
    assert_eq!((f[col("lp_x8")], f[col("lp_x4")]), (1.0, 1.0));
    assert_eq!((f[col("cp_x8")], f[col("cp_x4")]), (1.0, 1.0));

    // delay features copy the path exactly
    let delays = g.delays();
    let sum = |arcs: &[u32]| arcs.iter().map(|&a| delays[a as usize]).sum::<f64>();
    assert_eq!(f[col("lp_delay_ps")], sum(&p.lp));
    assert_eq!(f[col("dp_delay_ps")], sum(&p.dp));
    assert_eq!(f[col("cp_delay_ps")], sum(&p.cp));
    assert_eq!(f[col("sta_delay_ps")], p.delay);
    assert_eq!(f[col("setup_ps")], 25.0);

    // DP wire lengths against the route records of the nets it crosses
    let launch_q = &nl.flip_flops[p.launch].q;
    let mut dp_nets = vec![launch_q.as_str()];
    for gid in ["g1", "g2", "g4", "g5"] {
        dp_nets.push(&nl.gates.iter().find(|x| x.id == gid).unwrap().output);
    }
    let mut by_layer = [0.0; 5];
    for r in nl.routes.iter().filter(|r| dp_nets.contains(&r.net.as_str())) {
        for s in &r.segments {
            by_layer[s.layer.index()] += s.length_um;
        }
    }
    let got: f64 = ["dp_m1_um", "dp_m2_um", "dp_m3_um", "dp_m4_um", "dp_m5_um"].iter().map(|c| f[col(c)]).sum();
    assert!((got - by_layer.iter().sum::<f64>()).abs() < 1e-9);
    assert_eq!(f[col("dp_m5_um")], by_layer[Layer::M5.index()]);
    assert_eq!(f[col("dp_m5_um")], 40.0);
}

#[test]
fn fanout_counts_every_cell_on_the_path() {
    let (_, g) = fixture(FIVE);
    for p in g.enumerate_paths(10) {
        let f = extract_features(&g, &p).unwrap();
        let want: usize = p
            .arcs()
            .filter_map(|a| match g.arcs[a as usize].kind {
                ArcKind::Cell(i) => Some(g.conn.fanout(g.conn.index[g.inst_output(i)])),
                _ => None,
            })
            .sum();
        assert_eq!(f[col("fanout_total")], want as f64);
        let counts: f64 = (0..NUM_FEATURES).filter(|&i| i != col("setup_ps")).map(|i| f[i]).sum();
        assert!(counts.is_finite() && f.iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn dataset_csv_round_trips() {
    let (_, g) = fixture(FIVE);
    let paths = g.enumerate_paths(10);
    let feats = extract_all(&g, &paths).unwrap();
    let rows: Vec<Sample> = paths
        .iter()
        .zip(&feats)
        .map(|(p, f)| Sample { path_id: p.id, features: *f, label_ps: p.delay / 7.0 - 3.0 })
        .collect();
    let text = dataset_to_csv(&rows);
    assert_eq!(dataset_from_csv(&text).unwrap(), rows);
    assert!(dataset_from_csv("x,y\n").is_err());
}

// --------------------------------------------------------------------- ADP

/// One flip-flop per chain, feeding itself through `len` x1 inverters.
fn chain_design(lens: &[usize]) -> String {
    let mut s = String::from("period 1000\nclkbuf cb0 drive=x4\nroute cb0 M2:20\n");
    for (i, &len) in lens.iter().enumerate() {
        let _ = writeln!(s, "ff f{i} d=c{i}_{len} q=q{i} clkpath=cb0");
        let _ = writeln!(s, "route q{i} M1:5");
        for k in 1..=len {
            let src = if k == 1 { format!("q{i}") } else { format!("c{i}_{}", k - 1) };
            let _ = writeln!(s, "gate g{i}_{k} INV x1 in={src} out=c{i}_{k}");
            let _ = writeln!(s, "route c{i}_{k} M1:5");
        }
    }
    s
}

/// Chain activity: `fast[i]` chains toggle every other cycle, the rest sit
/// almost always at 1 and never toggle.
fn chain_activity(nl: &Netlist, fast: impl Fn(usize) -> bool) -> ActivityProfile {
    let mut nets = BTreeMap::new();
    nets.insert("cb0".to_string(), NetActivity { dc: 0.5, tc: CYCLES });
    for (i, ff) in nl.flip_flops.iter().enumerate() {
        let a = if fast(i) { NetActivity { dc: 0.5, tc: CYCLES / 2 } } else { NetActivity { dc: 0.95, tc: 0 } };
        nets.insert(ff.q.clone(), a);
        for gate in nl.gates.iter().filter(|x| x.id.starts_with(&format!("g{i}_"))) {
            nets.insert(gate.output.clone(), a);
        }
    }
    ActivityProfile { cycles: CYCLES, nets }
}

#[test]
fn planted_populations_land_in_their_sets() {
    // 60 fast and 60 slow chains of 8..12 inverters, plus one short chain
    // tuned to 240 ps
    let mut lens: Vec<usize> = (0..120).map(|i| 8 + i % 5).collect();
    lens.push(5);
    let mut text = chain_design(&lens);
    text = text.replace("route q120 M1:5", "route q120 M3:100");
    for k in 1..=5 {
        text = text.replace(&format!("route c120_{k} M1:5"), &format!("route c120_{k} M3:60"));
    }
    let nl = parse_netlist(&text).unwrap();
    let g = TimingGraph::elaborate(&nl, &CellLibrary::default()).unwrap();
    let paths = g.enumerate_paths(10);
    assert_eq!(paths.len(), 121);
    let short = paths.iter().find(|p| p.endpoint == 120).unwrap();
    assert!((short.delay - 240.0).abs() < 1e-9, "{}", short.delay);

    let act = chain_activity(&nl, |i| i < 60);
    let adp = identify_adp(&g, &paths, gate_model(), &act, &CfstConfig::default(), &DetectorConfig::default()).unwrap();
    assert_eq!(adp.unmeasurable, vec![short.id]);
    let ep = |id: usize| paths.iter().find(|p| p.id == id).unwrap().endpoint;
    let mut map: Vec<usize> = adp.map.iter().map(|&id| ep(id)).collect();
    let mut lap: Vec<usize> = adp.lap.iter().map(|&id| ep(id)).collect();
    map.sort();
    lap.sort();
    assert_eq!(map, (0..60).collect::<Vec<_>>());
    assert_eq!(lap, (60..120).collect::<Vec<_>>());
    assert!(adp.dropped.is_empty());
    assert_eq!((adp.f_max_ghz, adp.period_ps), (4.0, 1000.0));
    assert!(adp.fit.means[1] > adp.fit.means[0]);
}

#[test]
fn identical_paths_have_no_age_structure() {
    let nl = parse_netlist(&chain_design(&[10; 120])).unwrap();
    let g = TimingGraph::elaborate(&nl, &CellLibrary::default()).unwrap();
    let paths = g.enumerate_paths(10);
    let act = chain_activity(&nl, |_| true);
    let err = identify_adp(&g, &paths, gate_model(), &act, &CfstConfig::default(), &DetectorConfig::default())
        .unwrap_err();
    assert!(matches!(err, DetectError::SingleMode), "{err}");
    assert_eq!(err.stage(), "adp");
    assert!(err.to_string().contains("no age-distinguishing structure"));
}

#[test]
fn too_few_measurable_paths_abort() {
    let nl = parse_netlist(&chain_design(&[10; 99])).unwrap();
    let g = TimingGraph::elaborate(&nl, &CellLibrary::default()).unwrap();
    let paths = g.enumerate_paths(10);
    let act = chain_activity(&nl, |i| i % 2 == 0);
    let err = identify_adp(&g, &paths, gate_model(), &act, &CfstConfig::default(), &DetectorConfig::default())
        .unwrap_err();
    assert!(matches!(err, DetectError::TooFewCandidates { need: 100, got: 99 }));
}

// -------------------------------------------------------------- generated world

struct World {
    nl: Netlist,
    g: TimingGraph,
    paths: Vec<TimingPath>,
    feats: Vec<FeatureVector>,
    adp: AdpSets,
}

fn world() -> &'static World {
    static W: OnceLock<World> = OnceLock::new();
    W.get_or_init(|| {
        let lib = CellLibrary::default();
        let nl = generate_netlist(&GenSpec::default(), &lib).unwrap();
        let g = TimingGraph::elaborate(&nl, &lib).unwrap();
        let paths = g.enumerate_paths(10);
        let feats = extract_all(&g, &paths).unwrap();
        let reference = simulate_activity(&nl, CYCLES, 77).unwrap();
        let adp =
            identify_adp(&g, &paths, gate_model(), &reference, &CfstConfig::default(), &DetectorConfig::default())
                .unwrap();
        World { nl, g, paths, feats, adp }
    })
}

#[test]
fn generated_design_has_both_sets() {
    let w = world();
    assert!(w.adp.map.len() >= 100 && w.adp.lap.len() >= 100, "{} {}", w.adp.map.len(), w.adp.lap.len());
    assert!(w.adp.map.iter().all(|id| !w.adp.lap.contains(id)));
    let cfg = CfstConfig::default();
    for id in w.adp.map.iter().chain(&w.adp.lap) {
        assert!(cfg.measurable(w.paths[*id].delay));
    }
}

#[test]
fn zero_labels_give_sta_and_quantization_only_added_delay() {
    let w = world();
    let table = PathTable::new(&w.paths, &w.feats);
    let exact = CfstMeasurement {
        step_ps: 10.0,
        f_max_ghz: 4.0,
        measured: w.paths.iter().map(|p| (p.id, p.delay)).collect(),
        unmeasurable: Vec::new(),
    };
    let gtm = build_gtm(&table, &exact, &w.adp, 1, &StackHyper::default()).unwrap();
    for (p, f) in w.paths.iter().zip(&w.feats) {
        assert!((gtm.predict(p.delay, f) - p.delay).abs() <= 1e-6, "path {}", p.id);
    }

    // an ideal fresh chip then only shows the tester's rounding
    let fab = sample_fab_model(&FabConfig::ideal(), 1).unwrap();
    let chip = fabricate(&w.g, &fab, "ideal", 1).unwrap();
    let meas = cfst_measure(&w.g, &chip, &w.paths, &CfstConfig::default()).unwrap();
    let ids: Vec<usize> = meas.measured.keys().copied().collect();
    let ad = added_delays(&table, &meas, &gtm, &ids).unwrap();
    assert!(ad.values().all(|&v| (-1e-6..10.0).contains(&v)));

    // shifting STA and CFST together leaves AD alone
    let shifted: Vec<TimingPath> = w.paths.iter().map(|p| TimingPath { delay: p.delay + 37.5, ..p.clone() }).collect();
    let shifted_table = PathTable::new(&shifted, &w.feats);
    let mut moved = meas.clone();
    moved.measured.values_mut().for_each(|v| *v += 37.5);
    let ad2 = added_delays(&shifted_table, &moved, &gtm, &ids).unwrap();
    for id in ids {
        assert!((ad[&id] - ad2[&id]).abs() < 1e-9);
    }
}

#[test]
fn gtm_absorbs_drift() {
    let w = world();
    let table = PathTable::new(&w.paths, &w.feats);
    let cfg = FabConfig { sigma_r: 0.0, sigma_s: 0.0, ..FabConfig::default() };
    let fab = sample_fab_model(&cfg, 3).unwrap();
    let chip = fabricate(&w.g, &fab, "drift", 1).unwrap();
    let meas = cfst_measure(&w.g, &chip, &w.paths, &CfstConfig::default()).unwrap();
    let gtm = build_gtm(&table, &meas, &w.adp, 1, &StackHyper::default()).unwrap();
    let within = gtm
        .test
        .iter()
        .filter(|&&id| (meas.measured[&id] - gtm.predict(w.paths[id].delay, &w.feats[id])).abs() <= 10.0)
        .count();
    assert!(within as f64 >= 0.95 * gtm.test.len() as f64, "{within} of {}", gtm.test.len());
    assert_eq!(gtm.diagnostics.n_test, gtm.test.len());
    assert!(!gtm.diagnostics.members.is_empty());
}

#[test]
fn too_small_map_is_rejected() {
    let w = world();
    let table = PathTable::new(&w.paths, &w.feats);
    let mut adp = w.adp.clone();
    adp.map.truncate(49);
    let err = build_gtm(&table, &CfstMeasurement::default(), &adp, 1, &StackHyper::default()).unwrap_err();
    assert!(matches!(err, DetectError::TooFewMap { need: 50, got: 49 }));
    assert_eq!(err.stage(), "gtm");
}

#[test]
fn detection_verdicts_and_reports() {
    let w = world();
    let table = PathTable::new(&w.paths, &w.feats);
    let cc = CfstConfig::default();
    let cfg = DetectorConfig::default();
    let fab = sample_fab_model(&FabConfig::default(), 5).unwrap();
    let fresh = fabricate(&w.g, &fab, "fresh", 21).unwrap();
    let meas = cfst_measure(&w.g, &fresh, &w.paths, &cc).unwrap();
    let r = run_detection("fresh", &table, &w.adp, &meas, &cfg).unwrap();
    assert_eq!(r.verdict, Verdict::New, "MS {}", r.ms_ps);
    assert_eq!(r.ms_ps, r.mean_ad_map - r.mean_ad_lap);
    assert_eq!(r.m, w.adp.lap.len());
    let again = run_detection("fresh", &table, &w.adp, &meas, &cfg).unwrap();
    assert_eq!(again.to_json(), r.to_json());

    let json = r.to_json();
    assert!(json.contains("\"verdict\": \"new\""));
    assert_eq!(DetectionReport::from_json(&json).unwrap(), r);
    let hist = histogram_from_csv(&r.histogram_csv()).unwrap();
    assert_eq!(hist, r.added_delays);
    assert_eq!(hist.len(), r.n + r.m);
    assert_eq!(hist.iter().filter(|a| a.group == "MAP").count(), r.n);

    let used = simulate_activity(&w.nl, CYCLES, 901).unwrap();
    let aged = age_chip(&w.g, &fresh, &used, Some(901), &AgingConditions::months(12.0), &AgingPhysics::default())
        .unwrap();
    let meas = cfst_measure(&w.g, &aged, &w.paths, &cc).unwrap();
    let r = run_detection("aged", &table, &w.adp, &meas, &cfg).unwrap();
    assert_eq!(r.verdict, Verdict::Aged, "MS {}", r.ms_ps);

    let mut partial = meas.clone();
    partial.measured.remove(&w.adp.lap[0]);
    let err = run_detection("aged", &table, &w.adp, &partial, &cfg).unwrap_err();
    let failed = FailedDetection::new("aged", &err);
    assert!(!failed.valid);
    assert_eq!(failed.stage, "added_delay");
    assert!(failed.cause.contains(&w.adp.lap[0].to_string()));
}

// ------------------------------------------------------- splits and arithmetic

#[test]
fn map_split_is_seeded_and_covers_every_path() {
    let ids: Vec<usize> = (100..200).collect();
    let (tr, va, te) = split_map(&ids, 4);
    assert_eq!((tr.len(), va.len(), te.len()), (60, 20, 20));
    assert_eq!(split_map(&ids, 4), (tr.clone(), va.clone(), te.clone()));
    assert_ne!(split_map(&ids, 5).0, tr);
    let mut all: Vec<usize> = tr.into_iter().chain(va).chain(te).collect();
    all.sort();
    assert_eq!(all, ids);
}

#[test]
fn added_delay_is_measurement_minus_model() {
    let (_, g) = fixture(FIVE);
    let paths = g.enumerate_paths(10);
    let feats = extract_all(&g, &paths).unwrap();
    let table = PathTable::new(&paths, &feats);
    // GTM trained on constant labels predicts STA + constant
    let map: Vec<usize> = (0..60).collect();
    let mut many = Vec::new();
    let mut many_feats = Vec::new();
    for &id in &map {
        let mut p = paths[id % paths.len()].clone();
        p.id = id;
        p.delay = 262.5 - 1.0;
        many.push(p);
        many_feats.push(feats[id % paths.len()]);
    }
    let table_many = PathTable::new(&many, &many_feats);
    let cfst = CfstMeasurement {
        step_ps: 10.0,
        f_max_ghz: 4.0,
        measured: map.iter().map(|&id| (id, 262.5)).collect(),
        unmeasurable: Vec::new(),
    };
    let adp = AdpSets {
        map: map.clone(),
        lap: Vec::new(),
        dropped: Vec::new(),
        unmeasurable: Vec::new(),
        fit: agewise_mlkit::BimodalFit {
            weights: [0.5; 2],
            means: [0.0, 1.0],
            std_devs: [1.0; 2],
            log_likelihood: 0.0,
            iterations: 0,
        },
        f_max_ghz: 4.0,
        period_ps: 1000.0,
    };
    let gtm = build_gtm(&table_many, &cfst, &adp, 1, &StackHyper::default()).unwrap();
    let mut at = cfst.clone();
    at.measured.insert(0, 270.0);
    let ad = added_delays(&table_many, &at, &gtm, &[0]).unwrap();
    assert!((ad[&0] - 7.5).abs() < 1e-6, "{}", ad[&0]);
    assert!(matches!(added_delays(&table, &at, &gtm, &[999]), Err(DetectError::UnknownPath(999))));
    assert!(matches!(added_delays(&table_many, &CfstMeasurement::default(), &gtm, &[0]), Err(DetectError::MissingMeasurement(0))));
}

#[test]
fn mean_shift_examples() {
    let ad: BTreeMap<usize, f64> = [(1, 0.10), (2, 0.14), (3, -12.0), (4, -12.54)].into_iter().collect();
    let (m, l, ms) = mean_shift(&ad, &[1, 2], &[3, 4]).unwrap();
    assert!((m - 0.12).abs() < 1e-12 && (l + 12.27).abs() < 1e-12);
    assert!((ms - 12.39).abs() < 1e-12);
    let (_, _, rev) = mean_shift(&ad, &[2, 1], &[4, 3]).unwrap();
    assert_eq!(rev, ms);
    let flat: BTreeMap<usize, f64> = (0..10).map(|i| (i, 3.25)).collect();
    assert_eq!(mean_shift(&flat, &[0, 1, 2], &[5, 6, 7, 8]).unwrap().2, 0.0);
    assert!(matches!(mean_shift(&ad, &[], &[3]), Err(DetectError::EmptyGroup("MAP"))));
    assert!(matches!(mean_shift(&ad, &[1], &[]), Err(DetectError::EmptyGroup("LAP"))));
}

#[test]
fn classify_examples() {
    assert_eq!(classify(9.9, 10.0).unwrap(), Verdict::New);
    assert_eq!(classify(10.0, 10.0).unwrap(), Verdict::Aged);
    assert_eq!(classify(39.47, 10.0).unwrap(), Verdict::Aged);
    assert!(classify(5.0, 0.0).is_err());
    let mut last = Verdict::New;
    for k in -100..100 {
        let v = classify(k as f64 * 0.25, 10.0).unwrap();
        assert!(!(last == Verdict::Aged && v == Verdict::New));
        last = v;
    }
    assert_eq!(Verdict::Aged.to_string(), "aged");
}

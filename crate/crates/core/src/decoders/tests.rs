use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::channel::NoiseConfig;
use crate::constellation::PamConstellation;
use crate::harness::{draw_instance, metric_split_errors, Instance};
use crate::stbc::generator_matrix;
use crate::structured_qr::{gram_schmidt_qr, qr_r23, QrFactors};
use crate::{Mat4, Vec4};

fn instance(order: usize, snr_db: f64, seed: u64, trial: u64) -> (QamConstellation, Instance) {
    let c = QamConstellation::new(order).unwrap();
    let inst = draw_instance(
        &c,
        &generator_matrix(),
        &NoiseConfig::new(snr_db).unwrap(),
        seed,
        trial,
    )
    .unwrap();
    (c, inst)
}

fn truth(c: &QamConstellation, inst: &Instance) -> LevelIndices {
    let s = inst.symbols.realized();
    std::array::from_fn(|k| c.pam().index_of(s[k], 1e-9).unwrap() as u8)
}

fn opts() -> DecodeOptions {
    DecodeOptions::default()
}

#[test]
fn noiseless_recovery_m4() {
    for trial in 0..5 {
        let (c, inst) = instance(4, f64::INFINITY, 3, trial);
        for kind in DecoderKind::ALL {
            let r = kind.decode(&inst.y, &inst.h_eq, &c, &opts()).unwrap();
            assert_eq!(r.indices, truth(&c, &inst), "{kind}");
            assert!(r.metric < 1e-20, "{kind}: {}", r.metric);
            assert!(r.nodes.total_nodes >= 1 && r.nodes.delay_nodes <= r.nodes.total_nodes);
        }
    }
}

#[test]
fn noiseless_recovery_m16_and_m64() {
    for order in [16, 64] {
        let (c, inst) = instance(order, f64::INFINITY, 4, 0);
        for kind in [DecoderKind::Sphere, DecoderKind::Simplified] {
            let r = kind.decode(&inst.y, &inst.h_eq, &c, &opts()).unwrap();
            assert_eq!(r.indices, truth(&c, &inst), "{kind} M={order}");
            assert_eq!(r.s_hat, inst.symbols);
        }
    }
}

#[test]
fn bruteforce_checks_every_candidate() {
    let (c, inst) = instance(4, 10.0, 5, 0);
    let r = ml_bruteforce(&inst.y, &inst.h_eq, &c, &opts()).unwrap();
    assert_eq!(r.nodes.total_nodes, 65536);
    assert_eq!(r.nodes.delay_nodes, 65536);
}

#[test]
fn bruteforce_refuses_large_m() {
    let (c, inst) = instance(16, 10.0, 5, 0);
    assert!(ml_bruteforce(&inst.y, &inst.h_eq, &c, &opts()).is_err());
}

#[test]
fn non_finite_inputs_are_rejected() {
    let (c, mut inst) = instance(4, 10.0, 5, 0);
    inst.y[3] = f64::NAN;
    for kind in DecoderKind::ALL {
        assert!(
            kind.decode(&inst.y, &inst.h_eq, &c, &opts()).is_err(),
            "{kind}"
        );
    }
}

#[test]
fn decoder_names_round_trip() {
    for kind in DecoderKind::ALL {
        assert_eq!(kind.name().parse::<DecoderKind>().unwrap(), kind);
    }
    assert!("nope".parse::<DecoderKind>().is_err());
}

#[test]
fn all_decoders_agree_with_bruteforce() {
    for (i, snr) in [0.0, 5.0, 10.0, 20.0, 30.0].into_iter().enumerate() {
        for trial in 0..12 {
            let (c, inst) = instance(4, snr, 100 + i as u64, trial);
            let oracle = ml_bruteforce(&inst.y, &inst.h_eq, &c, &opts()).unwrap();
            for kind in [DecoderKind::Sphere, DecoderKind::Simplified] {
                let r = kind.decode(&inst.y, &inst.h_eq, &c, &opts()).unwrap();
                assert_eq!(r.indices, oracle.indices, "{kind} snr={snr} trial={trial}");
                assert!((r.metric - oracle.metric).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn bruteforce_metric_is_a_lower_bound() {
    let (c, inst) = instance(4, 0.0, 8, 1);
    let oracle = ml_bruteforce(&inst.y, &inst.h_eq, &c, &opts()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let idx: LevelIndices = std::array::from_fn(|_| rng.random_range(0..2u8));
        assert!(ml_metric(&inst.y, &inst.h_eq, &c, &idx) >= oracle.metric - TIE_TOL);
    }
}

#[test]
fn simplified_matches_sphere_at_m16() {
    for trial in 0..6 {
        let (c, inst) = instance(16, 15.0, 21, trial);
        let sd = sphere_decode_se(&inst.y, &inst.h_eq, &c, &opts()).unwrap();
        let simp = simplified_ml_decode(&inst.y, &inst.h_eq, &c, &opts()).unwrap();
        assert_eq!(simp.indices, sd.indices);
        assert!((simp.metric - sd.metric).abs() < 1e-9);
    }
}

#[test]
fn early_termination_only_changes_node_counts() {
    let debug = DecodeOptions {
        early_termination: false,
        ..opts()
    };
    let (mut with, mut without) = (0, 0);
    for trial in 0..40 {
        let (c, inst) = instance(4, [0.0, 10.0, 20.0][trial as usize % 3], 31, trial);
        for kind in [DecoderKind::Sphere, DecoderKind::Simplified] {
            let a = kind.decode(&inst.y, &inst.h_eq, &c, &opts()).unwrap();
            let b = kind.decode(&inst.y, &inst.h_eq, &c, &debug).unwrap();
            assert_eq!(a.indices, b.indices, "{kind} trial {trial}");
            assert!(a.nodes.total_nodes <= b.nodes.total_nodes);
            with += a.nodes.total_nodes;
            without += b.nodes.total_nodes;
        }
    }
    assert!(with < without);
}

#[test]
fn node_counts_respect_bounds() {
    for trial in 0..20 {
        let (c, inst) = instance(4, 0.0, 41, trial);
        let m = c.order() as u64;
        let side = c.pam().len() as u64;
        let simp = simplified_ml_decode(&inst.y, &inst.h_eq, &c, &opts()).unwrap();
        let n = simp.nodes;
        assert!(n.total_nodes <= m * m + m.pow(4) * (1 + 4 * side));
        assert_eq!(
            n.total_nodes,
            n.overhead_nodes + n.branch_nodes.iter().sum::<u64>()
        );
        assert!(n.delay_nodes <= n.total_nodes);
        // every branch evaluates at least one level per visited (b, d)
        assert!(n.delay_nodes >= n.overhead_nodes - m * m);
        let sd = sphere_decode_se(&inst.y, &inst.h_eq, &c, &opts()).unwrap();
        assert!(sd.nodes.total_nodes <= m.pow(8));
    }
}

#[test]
fn grouped_received_partitions_z() {
    let (_, inst) = instance(4, 5.0, 51, 0);
    let qr = gram_schmidt_qr(&inst.h_eq).unwrap();
    let z = GroupedReceived::new(&qr, &inst.y);
    for k in 0..16 {
        assert_eq!(z.part(k / 4)[k % 4], z.z[k]);
    }
    assert!((z.z.norm() - inst.y.norm()).abs() < 1e-9 * inst.y.norm());
}

#[test]
fn traced_incumbent_is_the_final_metric() {
    let (c, inst) = instance(4, 5.0, 61, 2);
    let qr = gram_schmidt_qr(&inst.h_eq).unwrap();
    let ef = qr_r23(&qr.r23());
    let z = GroupedReceived::new(&qr, &inst.y);
    let mut trace = SimplifiedTrace::default();
    let (idx, nodes, _) =
        simplified_ml_decode_factored(&z, &qr, &ef, &c, &opts(), Some(&mut trace));
    let last = trace.visits.iter().rev().find(|v| v.updated).unwrap();
    let metric = ml_metric(&inst.y, &inst.h_eq, &c, &idx);
    assert!((last.tau - metric).abs() < 1e-9 * metric.max(1.0));
    assert_eq!(trace.sorted_d.len(), 16);
    assert!(trace.sorted_d.windows(2).all(|w| w[0].1 <= w[1].1));
    assert_eq!(nodes.overhead_nodes, 16 + trace.visits.len() as u64);
}

#[test]
fn metric_split_and_rotation_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for trial in 0..100 {
        let (c, inst) = instance(4, 10.0, 71, trial);
        let qr = gram_schmidt_qr(&inst.h_eq).unwrap();
        let idx: LevelIndices = std::array::from_fn(|_| rng.random_range(0..2u8));
        let s = realized_levels(&c, &idx);
        let (split, rotation) = metric_split_errors(&qr, &inst.y, &s);
        assert!(split < 1e-9 && rotation < 1e-9, "{split} {rotation}");
    }
}

fn exhaustive_pair(layers: &[PairLayer], pam: &PamConstellation) -> ((u8, u8), f64) {
    let mut best = [u8::MAX; 2];
    let mut best_metric = f64::INFINITY;
    for k1 in 0..pam.len() {
        for k2 in 0..pam.len() {
            let (x1, x2) = (pam.level(k1), pam.level(k2));
            let metric: f64 = layers
                .iter()
                .map(|l| {
                    (l.top - l.diag_top * x1 - l.cross * x2).powi(2)
                        + (l.bottom - l.diag_bottom * x2).powi(2)
                })
                .sum();
            let cand = [k1 as u8, k2 as u8];
            if improves(metric, &cand, best_metric, &best) {
                best = cand;
                best_metric = metric;
            }
        }
    }
    ((best[0], best[1]), best_metric)
}

fn layer_strategy() -> impl Strategy<Value = PairLayer> {
    (
        -3.0f64..3.0,
        -3.0f64..3.0,
        0.1f64..3.0,
        -2.0f64..2.0,
        0.1f64..3.0,
    )
        .prop_map(|(top, bottom, diag_top, cross, diag_bottom)| PairLayer {
            top,
            bottom,
            diag_top,
            cross,
            diag_bottom,
        })
}

proptest! {
    #[test]
    fn pair_search_is_exhaustive_minimum(
        layers in prop::collection::vec(layer_strategy(), 1..=2),
        order in prop::sample::select(vec![4usize, 16, 64]),
    ) {
        let c = QamConstellation::new(order).unwrap();
        let found = conditional_pam_search(&layers, c.pam(), f64::INFINITY).unwrap();
        let (best, metric) = exhaustive_pair(&layers, c.pam());
        prop_assert_eq!(found.best, Some(best));
        prop_assert!((found.metric - metric).abs() < 1e-9);
        prop_assert_eq!(found.nodes, c.pam().len() as u64);
    }

    #[test]
    fn pair_search_budget_is_sound(
        layers in prop::collection::vec(layer_strategy(), 1..=2),
        budget in 0.0f64..4.0,
    ) {
        let c = QamConstellation::new(16).unwrap();
        let found = conditional_pam_search(&layers, c.pam(), budget).unwrap();
        let (best, metric) = exhaustive_pair(&layers, c.pam());
        if metric <= budget {
            prop_assert_eq!(found.best, Some(best));
        }
        if found.best.is_some() {
            prop_assert!(found.metric >= metric - 1e-12);
        }
        prop_assert!(found.nodes >= 1 && found.nodes <= 4);
    }
}

#[test]
fn pair_search_diagonal_exact_image() {
    let c = QamConstellation::new(16).unwrap();
    let pam = c.pam();
    let (x1, x2) = (pam.level(1), pam.level(3));
    let layer = PairLayer {
        top: 0.7 * x1,
        bottom: 1.3 * x2,
        diag_top: 0.7,
        cross: 0.0,
        diag_bottom: 1.3,
    };
    let full = conditional_pam_search(&[layer], pam, f64::INFINITY).unwrap();
    assert_eq!(full.best, Some((1, 3)));
    assert!(full.metric < 1e-24);
    // a budget that admits only the zero-forcing level: the first S-E candidate
    // completes the pair and the second one triggers the break
    let tight = conditional_pam_search(&[layer], pam, 1e-6).unwrap();
    assert_eq!(tight.best, Some((1, 3)));
    assert_eq!(tight.nodes, 2);
}

#[test]
fn pair_search_rejects_bad_input() {
    let c = QamConstellation::new(4).unwrap();
    let good = PairLayer {
        top: 0.0,
        bottom: 0.0,
        diag_top: 1.0,
        cross: 0.0,
        diag_bottom: 1.0,
    };
    assert!(conditional_pam_search(&[], c.pam(), 1.0).is_err());
    assert!(conditional_pam_search(
        &[PairLayer {
            top: f64::NAN,
            ..good
        }],
        c.pam(),
        1.0
    )
    .is_err());
    assert!(conditional_pam_search(
        &[PairLayer {
            diag_top: 0.0,
            ..good
        }],
        c.pam(),
        1.0
    )
    .is_err());
    assert!(conditional_pam_search(&[good], c.pam(), f64::NAN).is_err());
}

fn all_groups(c: &QamConstellation) -> Vec<([u8; 4], Vec4)> {
    let side = c.pam().len();
    (0..side.pow(4))
        .map(|n| {
            let idx = [
                n / side.pow(3),
                (n / side.pow(2)) % side,
                (n / side) % side,
                n % side,
            ];
            (
                idx.map(|k| k as u8),
                Vec4::from_fn(|k, _| c.pam().level(idx[k])),
            )
        })
        .collect()
}

fn split_search(m: &[(&Mat4, &Vec4)], c: &QamConstellation) -> ([u8; 4], f64) {
    let mut out = [0u8; 4];
    let mut total = 0.0;
    for parity in 0..2 {
        let layers: Vec<PairLayer> = m
            .iter()
            .map(|(b, v)| PairLayer::from_block(b, v, parity))
            .collect();
        let r = conditional_pam_search(&layers, c.pam(), f64::INFINITY).unwrap();
        let (first, second) = r.best.unwrap();
        out[parity] = first;
        out[parity + 2] = second;
        total += r.metric;
    }
    (out, total)
}

fn group_minimum(m: &[(&Mat4, &Vec4)], c: &QamConstellation) -> ([u8; 4], f64) {
    let mut best = [u8::MAX; 4];
    let mut best_metric = f64::INFINITY;
    for (idx, g) in all_groups(c) {
        let metric: f64 = m.iter().map(|(b, v)| (*v - *b * g).norm_squared()).sum();
        if improves(metric, &idx, best_metric, &best) {
            best = idx;
            best_metric = metric;
        }
    }
    (best, best_metric)
}

#[test]
fn real_imag_split_matches_group_search() {
    for order in [4, 16] {
        for trial in 0..8 {
            let (c, inst) = instance(order, 5.0, 81, trial);
            let qr = gram_schmidt_qr(&inst.h_eq).unwrap();
            let ef = qr_r23(&qr.r23());
            let z = GroupedReceived::new(&qr, &inst.y);
            let groups = all_groups(&c);
            let b = &groups[(trial as usize * 7) % groups.len()].1;
            let d = &groups[(trial as usize * 3) % groups.len()].1;
            let cond = z.condition(&qr, &ef, b, d);
            let r11 = qr.block(0, 0);
            let r33 = qr.block(2, 2);

            // a group: R11 alone
            let a_blocks = [(&r11, &cond.v12)];
            let (split, split_metric) = split_search(&a_blocks, &c);
            let (full, full_metric) = group_minimum(&a_blocks, &c);
            assert_eq!(split, full, "a group M={order} trial={trial}");
            assert!((split_metric - full_metric).abs() < 1e-9);

            // c group: joint R33 / F metric, which equals the unrotated one
            let c_blocks = [(&r33, &cond.v56), (&ef.f, &cond.u34)];
            let (split, split_metric) = split_search(&c_blocks, &c);
            let r23 = qr.block(1, 2);
            let (full, full_metric) = group_minimum(&[(&r33, &cond.v56), (&r23, &cond.v34)], &c);
            assert_eq!(split, full, "c group M={order} trial={trial}");
            assert!((split_metric - full_metric).abs() < 1e-9);
        }
    }
}

fn bruteforce_on_r(qr: &QrFactors, z: &Vec16, c: &QamConstellation) -> LevelIndices {
    let mut best = [u8::MAX; 16];
    let mut best_metric = f64::INFINITY;
    let side = c.pam().len();
    for n in 0..side.pow(16) {
        let idx: LevelIndices = std::array::from_fn(|k| ((n >> (15 - k)) & 1) as u8);
        let s = realized_levels(c, &idx);
        let metric = (z - qr.r * s).norm_squared();
        if improves(metric, &idx, best_metric, &best) {
            best = idx;
            best_metric = metric;
        }
    }
    best
}

#[test]
fn rank_deficient_r23_falls_back_to_joint_search() {
    let (c, inst) = instance(4, 5.0, 91, 0);
    let mut qr = gram_schmidt_qr(&inst.h_eq).unwrap();
    for row in 4..8 {
        qr.r[(row, 8)] = 0.0;
    }
    let ef = qr_r23(&qr.r23());
    assert!(ef.rank_deficient);
    let z = GroupedReceived::new(&qr, &inst.y);
    let (idx, nodes, fallback) = simplified_ml_decode_factored(&z, &qr, &ef, &c, &opts(), None);
    assert!(fallback);
    assert_eq!(nodes.branch_nodes[3], 0);
    assert_eq!(idx, bruteforce_on_r(&qr, &z.z, &c));
}

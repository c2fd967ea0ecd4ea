use std::sync::Arc;

use cvtransfer::gaussian::{
    covariance, make_epr_covariance, make_registry, mean, variance, BasisMode, BasisState, EprIndex, ModeExpr, ModeId,
    Quadrature, Registry, ALGEBRA_TOL,
};
use cvtransfer::metrics::{clone_bound, fidelity_bound_transfer, protocol_channel_snr};
use cvtransfer::optics::{apply_balanced_split, apply_beamsplitter, apply_loss, Circuit, Element};
use cvtransfer::protocol::{build_transfer, ids, GainPolicy, ProtocolParams};
use nalgebra::Matrix4;
use proptest::prelude::*;

fn id(s: &str) -> ModeId {
    ModeId::from(s)
}

/// The transfer circuit assembled by hand from `modes`, whichever order and
/// EPR labelling they use. Returns (state, out1, out2).
fn hand_built(modes: Vec<BasisMode>, reflectivity: f64, gain: f64) -> (BasisState, ModeExpr, ModeExpr) {
    let (reg, state) = make_registry(modes).unwrap();
    let mut c = Circuit::new(&reg).unwrap();
    c.apply(Element::BeamSplitter {
        a: id(ids::INPUT),
        b: id(ids::INPUT_VACUUM),
        reflectivity,
    })
    .unwrap();
    c.apply(Element::BellFeedforward {
        transmitted: id(ids::INPUT),
        reflected: id(ids::INPUT_VACUUM),
        epr_half: id(ids::EPR_ALICE),
        gain,
    })
    .unwrap();
    c.apply(Element::BeamSplitter {
        a: id(ids::INPUT),
        b: id(ids::EPR_BOB),
        reflectivity,
    })
    .unwrap();
    let out1 = c.wire(&id(ids::INPUT)).unwrap().clone();
    let out2 = c.wire(&id(ids::EPR_BOB)).unwrap().clone();
    (state, out1, out2)
}

fn base_modes(r: f64, alice: EprIndex, bob: EprIndex) -> Vec<BasisMode> {
    vec![
        BasisMode::coherent(ids::INPUT, 0.7, -0.2),
        BasisMode::vacuum(ids::INPUT_VACUUM),
        BasisMode::epr_half(ids::EPR_ALICE, ids::EPR_PAIR, alice, r),
        BasisMode::epr_half(ids::EPR_BOB, ids::EPR_PAIR, bob, r),
    ]
}

fn all_variances(state: &BasisState, exprs: &[&ModeExpr]) -> Vec<f64> {
    exprs
        .iter()
        .flat_map(|e| [Quadrature::X, Quadrature::Y].map(|q| variance(e, state, q).unwrap()))
        .collect()
}

fn gain_for(rf: f64) -> f64 {
    (2.0 * rf / (1.0 - rf)).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn variance_invariant_under_registry_permutation(
        rf in 0.01f64..0.99,
        r in 0.0f64..2.0,
        perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let modes = base_modes(r, EprIndex::First, EprIndex::Second);
        let permuted: Vec<BasisMode> = perm.iter().map(|&k| modes[k].clone()).collect();
        let (s1, a1, b1) = hand_built(modes, rf, gain_for(rf));
        let (s2, a2, b2) = hand_built(permuted, rf, gain_for(rf));
        let v1 = all_variances(&s1, &[&a1, &b1]);
        let v2 = all_variances(&s2, &[&a2, &b2]);
        for (x, y) in v1.iter().zip(&v2) {
            prop_assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        let c1 = covariance(&a1, &s1).unwrap();
        let c2 = covariance(&a2, &s2).unwrap();
        prop_assert!((c1 - c2).amax() < 1e-12);
    }

    #[test]
    fn epr_relabelling_leaves_variances_unchanged(rf in 0.01f64..0.99, r in 0.0f64..2.0) {
        let (s1, a1, b1) = hand_built(base_modes(r, EprIndex::First, EprIndex::Second), rf, gain_for(rf));
        let (s2, a2, b2) = hand_built(base_modes(r, EprIndex::Second, EprIndex::First), rf, gain_for(rf));
        let v1 = all_variances(&s1, &[&a1, &b1]);
        let v2 = all_variances(&s2, &[&a2, &b2]);
        for (x, y) in v1.iter().zip(&v2) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        let built = build_transfer(&ProtocolParams::new(rf, r)).unwrap();
        let v3 = all_variances(&built.state, &[&built.out1, &built.out2]);
        for (x, y) in v1.iter().zip(&v3) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn uncertainty_relation_on_outputs(
        rf in 0.0f64..0.99,
        r in 0.0f64..2.5,
        eta in 0.05f64..=1.0,
        g in 0.0f64..6.0,
    ) {
        let p = ProtocolParams::new(rf, r).with_eta(eta).with_gain(GainPolicy::Manual(g));
        let out = build_transfer(&p).unwrap();
        for e in [&out.channel, &out.out1, &out.out2] {
            prop_assert!(e.is_physical(ALGEBRA_TOL));
            let vx = variance(e, &out.state, Quadrature::X).unwrap();
            let vy = variance(e, &out.state, Quadrature::Y).unwrap();
            prop_assert!(vx >= 0.0 && vy >= 0.0);
            prop_assert!(vx * vy >= 1.0 - 1e-9, "{vx} * {vy}");
        }
    }

    #[test]
    fn epr_covariance_is_pure(r in 0.0f64..=3.0) {
        let (_, state) = make_registry(vec![
            BasisMode::epr_half("a", "p", EprIndex::First, r),
            BasisMode::epr_half("b", "p", EprIndex::Second, r),
        ]).unwrap();
        for nu in state.symplectic_eigenvalues() {
            prop_assert!((nu - 1.0).abs() < 1e-9, "{nu}");
        }
        let v: Matrix4<f64> = make_epr_covariance(r).unwrap();
        prop_assert!((v - v.transpose()).amax() == 0.0);
    }

    #[test]
    fn beamsplitter_preserves_flux_form(rf in 0.0f64..=1.0, r in 0.0f64..2.0) {
        let (reg, _) = make_registry(base_modes(r, EprIndex::First, EprIndex::Second)).unwrap();
        let a = ModeExpr::identity(&reg, &id(ids::INPUT)).unwrap();
        let b = ModeExpr::identity(&reg, &id(ids::EPR_ALICE)).unwrap();
        let (t, o) = apply_beamsplitter(&a, &b, rf).unwrap();
        let gram = |e: &ModeExpr| e.coeffs().transpose() * e.coeffs();
        let before = gram(&a) + gram(&b);
        let after = gram(&t) + gram(&o);
        prop_assert!((before - after).amax() < 1e-12);
    }

    #[test]
    fn cancellation_gain_removes_input_vacuum(rf in 0.0f64..0.999, r in 0.0f64..2.0) {
        let out = build_transfer(&ProtocolParams::new(rf, r)).unwrap();
        let block = out.channel.block_on(&id(ids::INPUT_VACUUM)).unwrap();
        prop_assert!(block.amax() < 1e-12, "{block}");
    }

    #[test]
    fn loss_keeps_commutators(eta in 0.0f64..=1.0, rf in 0.0f64..0.99) {
        let (reg, _) = make_registry(vec![
            BasisMode::coherent("a", 0.0, 0.0),
            BasisMode::vacuum("v"),
            BasisMode::vacuum("c"),
        ]).unwrap();
        let a = ModeExpr::identity(&reg, &id("a")).unwrap();
        let v = ModeExpr::identity(&reg, &id("v")).unwrap();
        let c = ModeExpr::identity(&reg, &id("c")).unwrap();
        let (t, o) = apply_beamsplitter(&a, &v, rf).unwrap();
        let lossy = apply_loss(&t, eta, &c).unwrap();
        prop_assert!(cvtransfer::gaussian::check_commutators(&[&lossy, &o]).is_ok());
    }

    #[test]
    fn unity_gain_with_and_without_loss(
        rf in 0.01f64..0.99,
        r in 0.0f64..2.0,
        eta in 0.05f64..=1.0,
        x in -5.0f64..5.0,
        y in -5.0f64..5.0,
    ) {
        let cases = [
            ProtocolParams::new(rf, r).with_mean(x, y),
            ProtocolParams::new(rf, r).with_eta(eta).with_gain(GainPolicy::LossCompensated).with_mean(x, y),
        ];
        for p in cases {
            let out = build_transfer(&p).unwrap();
            prop_assert!(out.unity_gain);
            let (a, c) = out.out1.ladder_coefficients(&id(ids::INPUT)).unwrap();
            prop_assert!((a - 1.0).abs() < 1e-12 && c.abs() < 1e-12);
            let (mx, my) = mean(&out.out1, &out.state).unwrap();
            prop_assert!((mx - x).abs() < 1e-12 && (my - y).abs() < 1e-12);
        }
    }

    #[test]
    fn out1_variance_closed_form(rf in 0.0f64..0.99, r in 0.0f64..2.0) {
        let out = build_transfer(&ProtocolParams::new(rf, r)).unwrap();
        let want = 1.0 + 2.0 * rf * (-2.0 * r).exp();
        for q in [Quadrature::X, Quadrature::Y] {
            prop_assert!((variance(&out.out1, &out.state, q).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn squeezing_beats_boundary(rf in 0.01f64..0.99, r in 0.01f64..2.0) {
        let out = build_transfer(&ProtocolParams::new(rf, r)).unwrap();
        prop_assert!(out.fidelity_out1().unwrap().fidelity > fidelity_bound_transfer(rf).unwrap());
        let half = build_transfer(&ProtocolParams::new(0.5, r)).unwrap();
        let (f1, f2) = (half.fidelity_out1().unwrap().fidelity, half.fidelity_out2().unwrap().fidelity);
        prop_assert!(f1 > 2.0 / 3.0 && 2.0 / 3.0 > f2);
    }

    #[test]
    fn fidelity_monotone(r in 0.0f64..2.0, rf in 0.01f64..0.98, dr in 0.001f64..0.01) {
        let f = |rf: f64, r: f64| build_transfer(&ProtocolParams::new(rf, r)).unwrap().fidelity_out1().unwrap().fidelity;
        prop_assert!(f(rf + dr, r) < f(rf, r));
        prop_assert!(f(rf, r + dr) > f(rf, r));
    }

    #[test]
    fn snr_non_increasing_in_reflectivity(r in 0.0f64..2.0, rf in 0.0f64..0.98, dr in 0.001f64..0.01) {
        let s = |rf: f64| protocol_channel_snr(&ProtocolParams::new(rf, r), (1.0, 1.0)).unwrap().snr_x;
        prop_assert!(s(rf + dr) <= s(rf) + 1e-12);
        prop_assert!((s(0.0) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn balanced_split_commutes_up_to_eight() {
    for m in 2..=8usize {
        let mut modes = vec![BasisMode::coherent("in", 0.0, 0.0)];
        modes.extend((1..m).map(|k| BasisMode::vacuum(&format!("v{k}"))));
        let (reg, _): (Arc<Registry>, _) = make_registry(modes).unwrap();
        let input = ModeExpr::identity(&reg, &id("in")).unwrap();
        let ancillas: Vec<ModeExpr> = (1..m - 1)
            .map(|k| ModeExpr::identity(&reg, &id(&format!("v{k}"))).unwrap())
            .collect();
        let outs = apply_balanced_split(&input, &ancillas).unwrap();
        assert_eq!(outs.len(), m - 1);
        let refs: Vec<&ModeExpr> = outs.iter().collect();
        assert!(cvtransfer::gaussian::check_commutators(&refs).is_ok(), "M={m}");
    }
}

#[test]
fn boundary_ranges() {
    for k in 0..=100 {
        let b = fidelity_bound_transfer(k as f64 / 100.0).unwrap();
        assert!((0.5..=1.0).contains(&b));
    }
    for m in 2..=50 {
        assert!((0.5..=2.0 / 3.0 + 1e-15).contains(&clone_bound(m)));
    }
}

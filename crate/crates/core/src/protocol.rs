//! The transfer circuit: input beamsplitter, Bell measurement with feedforward
//! onto the transmitted part, an optional lossy link, Bob's beamsplitter and
//! an optional balanced splitter that turns Bob's second port into clones.

use crate::error::{Error, Result};
use crate::gaussian::{
    check_commutators, make_registry, BasisMode, BasisState, CommutatorReport, EprIndex, ModeExpr, ModeId,
};
use crate::metrics::{fidelity_coherent, FidelityReport};
use crate::optics::{cancellation_gain, loss_compensated_gain, Circuit, Element};

/// Basis mode ids used by [`build_transfer`].
pub mod ids {
    pub const INPUT: &str = "a_in";
    pub const INPUT_VACUUM: &str = "v1";
    pub const EPR_ALICE: &str = "b_epr1";
    pub const EPR_BOB: &str = "b_epr2";
    pub const LOSS_VACUUM: &str = "v_c";
    pub const EPR_PAIR: &str = "epr";

    /// Vacuum ancilla `k` (1-based) of the balanced splitter.
    pub fn ancilla(k: usize) -> String {
        format!("v_b{k}")
    }
}

/// Tolerance for the cloning condition `R = (M-1)/M` and unity-gain checks.
pub const SCALAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainPolicy {
    /// `sqrt(2R/(1-R))`: cancels the input-beamsplitter vacuum.
    Cancellation,
    /// Restores the `1/sqrt(1-R)` input coefficient after loss `eta`.
    LossCompensated,
    Manual(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    /// Reflectivity of Alice's (and Bob's) beamsplitter; the destroyed fraction.
    pub reflectivity: f64,
    /// Squeezing factor of the shared EPR pair.
    pub squeezing: f64,
    /// Amplitude transmission of the link.
    pub eta: f64,
    pub gain_policy: GainPolicy,
    /// `Some(M)` builds the 1 -> M cloner; requires `R = (M-1)/M`.
    pub clones: Option<u32>,
    pub input_mean: (f64, f64),
}

impl ProtocolParams {
    pub fn new(reflectivity: f64, squeezing: f64) -> Self {
        ProtocolParams {
            reflectivity,
            squeezing,
            eta: 1.0,
            gain_policy: GainPolicy::Cancellation,
            clones: None,
            input_mean: (0.0, 0.0),
        }
    }

    /// Parameters of the 1 -> M cloner at `R = (M-1)/M`.
    pub fn cloner(m: u32, squeezing: f64) -> Self {
        let mf = m as f64;
        ProtocolParams {
            clones: Some(m),
            ..ProtocolParams::new((mf - 1.0) / mf, squeezing)
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_gain(mut self, policy: GainPolicy) -> Self {
        self.gain_policy = policy;
        self
    }

    pub fn with_mean(mut self, x: f64, y: f64) -> Self {
        self.input_mean = (x, y);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.reflectivity;
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::OutOfRange {
                name: "R",
                value: r,
                expected: "0 <= R <= 1",
            });
        }
        if !(self.squeezing.is_finite() && self.squeezing >= 0.0) {
            return Err(Error::NegativeSqueezing(self.squeezing));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::OutOfRange {
                name: "eta",
                value: self.eta,
                expected: "0 < eta <= 1",
            });
        }
        if !(self.input_mean.0.is_finite() && self.input_mean.1.is_finite()) {
            return Err(Error::OutOfRange {
                name: "mean",
                value: f64::NAN,
                expected: "finite input mean",
            });
        }
        if let Some(m) = self.clones {
            if m < 2 {
                return Err(Error::OutOfRange {
                    name: "M",
                    value: m as f64,
                    expected: "M >= 2",
                });
            }
            let expected = (m as f64 - 1.0) / m as f64;
            if (r - expected).abs() > SCALAR_TOL {
                return Err(Error::CloningReflectivity { m, expected, got: r });
            }
        }
        self.gain().map(|_| ())
    }

    /// The feedforward gain selected by the policy.
    pub fn gain(&self) -> Result<f64> {
        match self.gain_policy {
            GainPolicy::Cancellation => cancellation_gain(self.reflectivity),
            GainPolicy::LossCompensated => loss_compensated_gain(self.reflectivity, self.eta),
            GainPolicy::Manual(g) if g.is_finite() && g >= 0.0 => Ok(g),
            GainPolicy::Manual(g) => Err(Error::OutOfRange {
                name: "g",
                value: g,
                expected: "finite, g >= 0",
            }),
        }
    }

    /// Classical boundary of the outputs: `1/(R+1)`, or `M/(2M-1)` for the cloner.
    pub fn boundary(&self) -> f64 {
        match self.clones {
            Some(m) => m as f64 / (2.0 * m as f64 - 1.0),
            None => 1.0 / (self.reflectivity + 1.0),
        }
    }

    pub(crate) fn descriptors(&self) -> Vec<BasisMode> {
        let (mx, my) = self.input_mean;
        let mut modes = vec![
            BasisMode::coherent(ids::INPUT, mx, my),
            BasisMode::vacuum(ids::INPUT_VACUUM),
            BasisMode::epr_half(ids::EPR_ALICE, ids::EPR_PAIR, EprIndex::First, self.squeezing),
            BasisMode::epr_half(ids::EPR_BOB, ids::EPR_PAIR, EprIndex::Second, self.squeezing),
        ];
        if self.eta < 1.0 {
            modes.push(BasisMode::vacuum(ids::LOSS_VACUUM));
        }
        if let Some(m) = self.clones {
            modes.extend((1..m as usize - 1).map(|k| BasisMode::vacuum(&ids::ancilla(k))));
        }
        modes
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOutputs {
    pub params: ProtocolParams,
    pub state: BasisState,
    /// The displaced beam as it arrives at Bob (after loss).
    pub channel: ModeExpr,
    pub out1: ModeExpr,
    pub out2: ModeExpr,
    /// The `M - 1` clones split from `out2` in cloning mode.
    pub clones: Option<Vec<ModeExpr>>,
    pub g_used: f64,
    /// Whether out1 carries the input with unit amplitude.
    pub unity_gain: bool,
    pub circuit: Circuit,
}

impl ProtocolOutputs {
    pub fn fidelity_out1(&self) -> Result<FidelityReport> {
        self.fidelity_of(&self.out1)
    }

    pub fn fidelity_out2(&self) -> Result<FidelityReport> {
        self.fidelity_of(&self.out2)
    }

    pub fn clone_fidelities(&self) -> Result<Vec<FidelityReport>> {
        match &self.clones {
            Some(clones) => clones.iter().map(|c| self.fidelity_of(c)).collect(),
            None => Ok(Vec::new()),
        }
    }

    fn fidelity_of(&self, e: &ModeExpr) -> Result<FidelityReport> {
        Ok(fidelity_coherent(e, &self.state, self.params.input_mean)?.with_boundary(self.params.boundary()))
    }

    /// Modes that leave Bob's station together: out1 plus either the clones
    /// or out2.
    pub fn final_outputs(&self) -> Vec<&ModeExpr> {
        let mut v = vec![&self.out1];
        match &self.clones {
            Some(c) => v.extend(c.iter()),
            None => v.push(&self.out2),
        }
        v
    }

    /// Commutator check of the channel on its own and of the final outputs
    /// as one set.
    pub fn check_commutators(&self) -> CommutatorReport {
        let mut report = check_commutators(&[&self.channel]);
        let rest = check_commutators(&self.final_outputs());
        report.checked += rest.checked;
        report.violations.extend(rest.violations);
        report
    }
}

/// Build the complete transfer (or cloning) circuit.
pub fn build_transfer(params: &ProtocolParams) -> Result<ProtocolOutputs> {
    params.validate()?;
    let g = params.gain()?;
    let (registry, state) = make_registry(params.descriptors())?;
    let input = ModeId::from(ids::INPUT);
    let vac = ModeId::from(ids::INPUT_VACUUM);
    let epr1 = ModeId::from(ids::EPR_ALICE);
    let epr2 = ModeId::from(ids::EPR_BOB);

    let mut circuit = Circuit::new(&registry)?;
    circuit.apply(Element::BeamSplitter {
        a: input.clone(),
        b: vac.clone(),
        reflectivity: params.reflectivity,
    })?;
    circuit.apply(Element::BellFeedforward {
        transmitted: input.clone(),
        reflected: vac,
        epr_half: epr1,
        gain: g,
    })?;
    if params.eta < 1.0 {
        circuit.apply(Element::Loss {
            mode: input.clone(),
            eta: params.eta,
            fresh_vacuum: ids::LOSS_VACUUM.into(),
        })?;
    }
    let channel = circuit.wire(&input)?.clone();

    circuit.apply(Element::BeamSplitter {
        a: input.clone(),
        b: epr2.clone(),
        reflectivity: params.reflectivity,
    })?;
    let out1 = circuit.wire(&input)?.clone();
    let out2 = circuit.wire(&epr2)?.clone();

    let clones = match params.clones {
        Some(m) => {
            let ancillas: Vec<ModeId> = (1..m as usize - 1).map(|k| ids::ancilla(k).as_str().into()).collect();
            circuit.apply(Element::BalancedSplit {
                input: epr2.clone(),
                ancillas: ancillas.clone(),
            })?;
            let mut v = vec![circuit.wire(&epr2)?.clone()];
            for id in &ancillas {
                v.push(circuit.wire(id)?.clone());
            }
            Some(v)
        }
        None => None,
    };

    let block = out1.block_on(&input)?;
    let unity_gain = (block[(0, 0)] - 1.0).abs() <= SCALAR_TOL
        && (block[(1, 1)] - 1.0).abs() <= SCALAR_TOL
        && block[(0, 1)].abs() <= SCALAR_TOL
        && block[(1, 0)].abs() <= SCALAR_TOL;

    Ok(ProtocolOutputs {
        params: params.clone(),
        state,
        channel,
        out1,
        out2,
        clones,
        g_used: g,
        unity_gain,
        circuit,
    })
}

/// out1 fidelity along a grid of reflectivities approaching the pure
/// teleportation point `R = 1`.
pub fn teleport_limit_outputs(squeezing: f64, grid: &[f64]) -> Result<Vec<FidelityReport>> {
    grid.iter()
        .map(|&r| {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::OutOfRange {
                    name: "R",
                    value: r,
                    expected: "0 <= R < 1 in the teleportation sweep",
                });
            }
            build_transfer(&ProtocolParams::new(r, squeezing))?.fidelity_out1()
        })
        .collect()
}

/// Closed-form limit of out1 fidelity as `R -> 1`: `1/(1 + e^{-2r})`.
pub fn teleport_limit_fidelity(squeezing: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * squeezing).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{mean, variance, Quadrature};

    fn ladder(e: &ModeExpr, id: &str) -> (f64, f64) {
        e.ladder_coefficients(&id.into()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn direct_transmission_at_zero_reflectivity() {
        let out = build_transfer(&ProtocolParams::new(0.0, 0.7)).unwrap();
        let id = ModeExpr::identity(out.state.registry(), &ids::INPUT.into()).unwrap();
        assert!((out.out1.coeffs() - id.coeffs()).amax() < 1e-15);
        assert!((out.channel.coeffs() - id.coeffs()).amax() < 1e-15);
        assert_eq!(out.g_used, 0.0);
    }

    #[test]
    fn lossless_outputs_match_closed_forms() {
        for &rf in &[0.1, 0.3, 0.5, 0.8] {
            let out = build_transfer(&ProtocolParams::new(rf, 0.4)).unwrap();
            let sr = rf.sqrt();
            let q = 1.0 - rf;
            // channel: a_in/sqrt(1-R) - sqrt(R/(1-R)) b1^dagger
            assert!(close(ladder(&out.channel, ids::INPUT).0, 1.0 / q.sqrt()));
            assert!(close(ladder(&out.channel, ids::EPR_ALICE).1, -(rf / q).sqrt()));
            assert!(out.channel.block_on(&ids::INPUT_VACUUM.into()).unwrap().amax() < 1e-12);
            // out1 = a_in + sqrt(R)(b2 - b1^dagger)
            assert!(close(ladder(&out.out1, ids::INPUT).0, 1.0));
            assert!(close(ladder(&out.out1, ids::EPR_BOB).0, sr));
            assert!(close(ladder(&out.out1, ids::EPR_ALICE).1, -sr));
            assert!(close(ladder(&out.out1, ids::EPR_ALICE).0, 0.0));
            // out2 = sqrt(R/(1-R)) a_in - R/sqrt(1-R) b1^dagger - sqrt(1-R) b2
            assert!(close(ladder(&out.out2, ids::INPUT).0, (rf / q).sqrt()));
            assert!(close(ladder(&out.out2, ids::EPR_ALICE).1, -rf / q.sqrt()));
            assert!(close(ladder(&out.out2, ids::EPR_BOB).0, -q.sqrt()));
            assert!(out.unity_gain);
            assert!(out.check_commutators().is_ok());
        }
    }

    #[test]
    fn half_reflectivity_without_squeezing() {
        let out = build_transfer(&ProtocolParams::new(0.5, 0.0)).unwrap();
        assert!(close(variance(&out.out1, &out.state, Quadrature::X).unwrap(), 2.0));
        assert!(close(out.fidelity_out1().unwrap().fidelity, 2.0 / 3.0));
        assert!(close(out.fidelity_out2().unwrap().fidelity, 2.0 / 3.0));
    }

    #[test]
    fn lossy_out1_matches_expansion() {
        let (rf, eta) = (0.5_f64, 0.9_f64);
        let p = ProtocolParams::new(rf, 0.3)
            .with_eta(eta)
            .with_gain(GainPolicy::LossCompensated);
        let out = build_transfer(&p).unwrap();
        let sr = rf.sqrt();
        assert!(close(ladder(&out.out1, ids::INPUT).0, 1.0));
        assert!(close(
            ladder(&out.out1, ids::EPR_ALICE).1,
            -sr - (1.0 - eta) * (1.0 - rf) / sr
        ));
        assert!(close(
            ladder(&out.out1, ids::INPUT_VACUUM).0,
            -(1.0 - eta) * (1.0 - rf).sqrt() / sr
        ));
        assert!(close(
            ladder(&out.out1, ids::LOSS_VACUUM).0,
            ((1.0 - eta * eta) * (1.0 - rf)).sqrt()
        ));
        assert!(close(ladder(&out.out1, ids::EPR_BOB).0, sr));
        assert!(out.unity_gain);
    }

    #[test]
    fn uncompensated_loss_is_flagged() {
        let p = ProtocolParams::new(0.5, 0.3).with_eta(0.8).with_mean(2.0, 1.0);
        let out = build_transfer(&p).unwrap();
        assert!(!out.unity_gain);
        let f = out.fidelity_out1().unwrap();
        assert!(f.extended_formula);
        assert!(f.fidelity > 0.0 && f.fidelity < 1.0);
    }

    #[test]
    fn unity_gain_mean() {
        let p = ProtocolParams::new(0.6, 0.2).with_mean(1.5, -0.5);
        let out = build_transfer(&p).unwrap();
        let (x, y) = mean(&out.out1, &out.state).unwrap();
        assert!(close(x, 1.5) && close(y, -0.5));
    }

    #[test]
    fn parameter_errors() {
        assert_eq!(
            build_transfer(&ProtocolParams::new(1.0, 0.3)).unwrap_err(),
            Error::SingularGain
        );
        assert!(build_transfer(&ProtocolParams::new(1.2, 0.3)).is_err());
        assert!(build_transfer(&ProtocolParams::new(0.5, -0.3)).is_err());
        assert!(build_transfer(&ProtocolParams::new(0.5, 0.3).with_eta(0.0)).is_err());
        let p = ProtocolParams::new(0.0, 0.3).with_gain(GainPolicy::LossCompensated);
        assert!(build_transfer(&p).is_err());
        let p = ProtocolParams {
            clones: Some(3),
            ..ProtocolParams::new(0.5, 0.0)
        };
        assert!(matches!(
            build_transfer(&p),
            Err(Error::CloningReflectivity { m: 3, .. })
        ));
        let p = ProtocolParams::new(0.5, 0.0).with_gain(GainPolicy::Manual(-1.0));
        assert!(build_transfer(&p).is_err());
        // Manual gain admits the R = 1 endpoint
        let p = ProtocolParams::new(1.0, 0.0).with_gain(GainPolicy::Manual(1.0));
        assert!(build_transfer(&p).is_ok());
    }

    #[test]
    fn cloner_outputs() {
        for m in 2..=8u32 {
            let out = build_transfer(&ProtocolParams::cloner(m, 0.5)).unwrap();
            let clones = out.clones.as_ref().unwrap();
            assert_eq!(clones.len(), m as usize - 1);
            let mf = m as f64;
            for c in clones {
                assert!(close(ladder(c, ids::INPUT).0, 1.0));
                assert!(close(
                    ladder(c, ids::EPR_ALICE).1,
                    -(mf - 1.0) / (mf * (mf - 1.0)).sqrt()
                ));
                assert!(close(ladder(c, ids::EPR_BOB).0, -1.0 / (mf * (mf - 1.0)).sqrt()));
            }
            if m > 2 {
                assert!(close(
                    ladder(&clones[0], &ids::ancilla(1)).0,
                    ((mf - 2.0) / (mf - 1.0)).sqrt()
                ));
            }
            assert!(out.check_commutators().is_ok());
        }
    }

    #[test]
    fn teleport_sweep() {
        let grid = [0.5, 0.9, 0.99, 0.999, 0.999_999];
        let r = 2f64.ln() / 2.0;
        let reports = teleport_limit_outputs(r, &grid).unwrap();
        for w in reports.windows(2) {
            assert!(w[1].fidelity < w[0].fidelity);
        }
        let last = reports.last().unwrap().fidelity;
        assert!((last - 2.0 / 3.0).abs() < 1e-6);
        assert!((teleport_limit_fidelity(r) - 2.0 / 3.0).abs() < 1e-12);
        assert!((teleport_limit_fidelity(0.0) - 0.5).abs() < 1e-15);
        let f = teleport_limit_outputs(0.0, &[0.9]).unwrap()[0].fidelity;
        assert!((f - 1.0 / 1.9).abs() < 1e-12);
        assert!(teleport_limit_outputs(0.0, &[1.0]).is_err());
    }
}

//! Circuit elements acting on [`ModeExpr`] linear forms.
//!
//! Beamsplitter convention (the only one used anywhere in the crate):
//!
//! ```text
//! out_t = sqrt(1-R) a + sqrt(R) b
//! out_r = sqrt(R) a - sqrt(1-R) b
//! ```
//!
//! Loss uses an amplitude transmission `eta`: `eta e + sqrt(1-eta^2) v`.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gaussian::{ModeExpr, ModeId, ModeKind, Registry};

fn check_reflectivity(reflectivity: f64) -> Result<()> {
    if (0.0..=1.0).contains(&reflectivity) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "R",
            value: reflectivity,
            expected: "0 <= R <= 1",
        })
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "eta",
            value: eta,
            expected: "0 < eta <= 1",
        })
    }
}

pub fn apply_beamsplitter(a: &ModeExpr, b: &ModeExpr, reflectivity: f64) -> Result<(ModeExpr, ModeExpr)> {
    check_reflectivity(reflectivity)?;
    let t = (1.0 - reflectivity).sqrt();
    let r = reflectivity.sqrt();
    let out_t = ModeExpr::combine(t, a, r, b)?;
    let out_r = ModeExpr::combine(r, a, -t, b)?;
    Ok((out_t, out_r))
}

/// Bell measurement of `reflected` against `epr1` followed by displacement
/// of `transmitted` by the scaled photocurrents:
/// `transmitted + (g/sqrt2) (reflected - epr1^dagger)`.
pub fn apply_bell_feedforward(
    transmitted: &ModeExpr,
    reflected: &ModeExpr,
    epr1: &ModeExpr,
    gain: f64,
) -> Result<ModeExpr> {
    if !(gain.is_finite() && gain >= 0.0) {
        return Err(Error::OutOfRange {
            name: "g",
            value: gain,
            expected: "finite, g >= 0",
        });
    }
    let photocurrent = ModeExpr::combine(1.0, reflected, -1.0, &epr1.dagger())?;
    ModeExpr::combine(1.0, transmitted, gain / SQRT_2, &photocurrent)
}

/// Feedforward gain that removes the input-beamsplitter vacuum from the
/// displaced beam: `sqrt(2R/(1-R))`.
pub fn cancellation_gain(reflectivity: f64) -> Result<f64> {
    if reflectivity == 1.0 {
        return Err(Error::SingularGain);
    }
    if !(0.0..1.0).contains(&reflectivity) {
        return Err(Error::OutOfRange {
            name: "R",
            value: reflectivity,
            expected: "0 <= R < 1",
        });
    }
    Ok((2.0 * reflectivity / (1.0 - reflectivity)).sqrt())
}

/// Gain that keeps the input coefficient of the lossy channel at `1/sqrt(1-R)`:
/// `sqrt2 (1 - eta(1-R)) / (eta sqrt(R(1-R)))`.
pub fn loss_compensated_gain(reflectivity: f64, eta: f64) -> Result<f64> {
    if !(reflectivity > 0.0 && reflectivity < 1.0) {
        return Err(Error::OutOfRange {
            name: "R",
            value: reflectivity,
            expected: "0 < R < 1 for loss compensation",
        });
    }
    check_eta(eta)?;
    let q = 1.0 - reflectivity;
    Ok(SQRT_2 * (1.0 - eta * q) / (eta * (reflectivity * q).sqrt()))
}

/// Basis index of `e` if it is exactly the identity expression of a vacuum mode.
fn vacuum_identity_index(e: &ModeExpr) -> Option<usize> {
    let reg = e.registry();
    let (k, mode) = reg
        .modes()
        .iter()
        .enumerate()
        .find(|(k, _)| e.coeffs()[(0, 2 * k)] != 0.0)?;
    if mode.kind != ModeKind::Vacuum || e.displacement() != [0.0, 0.0] {
        return None;
    }
    let identity = ModeExpr::identity(reg, &mode.id).ok()?;
    (identity.coeffs() == e.coeffs()).then_some(k)
}

fn fresh_vacuum(e: &ModeExpr, users: &[&ModeExpr]) -> Result<usize> {
    let describe = || {
        e.registry()
            .modes()
            .iter()
            .enumerate()
            .find(|(k, _)| e.touches(*k))
            .map(|(_, m)| m.id.to_string())
            .unwrap_or_else(|| "<zero>".to_owned())
    };
    let k = vacuum_identity_index(e).ok_or_else(|| Error::ConsumedMode(describe()))?;
    if users.iter().any(|u| u.touches(k)) {
        return Err(Error::ConsumedMode(describe()));
    }
    Ok(k)
}

pub fn apply_loss(e: &ModeExpr, eta: f64, fresh: &ModeExpr) -> Result<ModeExpr> {
    check_eta(eta)?;
    if !e.same_registry(fresh) {
        return Err(Error::RegistryMismatch);
    }
    fresh_vacuum(fresh, &[e])?;
    ModeExpr::combine(eta, e, (1.0 - eta * eta).sqrt(), fresh)
}

/// Split `input` into `ancillas.len() + 1` modes, each carrying `input` with
/// amplitude `1/sqrt(M-1)` where `M - 2 = ancillas.len()`.
///
/// Realized as a cascade of beamsplitters; clone `k` is the transmitted port
/// of stage `k` with reflectivity `(M-k-1)/(M-k)`, the last clone is the final
/// reflected port. The first clone is
/// `input/sqrt(M-1) + sqrt((M-2)/(M-1)) v_1`.
pub fn apply_balanced_split(input: &ModeExpr, ancillas: &[ModeExpr]) -> Result<Vec<ModeExpr>> {
    let mut seen = Vec::with_capacity(ancillas.len());
    for anc in ancillas {
        if !anc.same_registry(input) {
            return Err(Error::RegistryMismatch);
        }
        let k = fresh_vacuum(anc, &[input])?;
        if seen.contains(&k) {
            return Err(Error::ConsumedMode(input.registry().modes()[k].id.to_string()));
        }
        seen.push(k);
    }
    let m = ancillas.len() + 2;
    let mut outputs = Vec::with_capacity(m - 1);
    let mut remaining = input.clone();
    for (k, anc) in ancillas.iter().enumerate() {
        let stage = (k + 1) as f64;
        let mf = m as f64;
        let reflectivity = (mf - stage - 1.0) / (mf - stage);
        let (clone, rest) = apply_beamsplitter(&remaining, anc, reflectivity)?;
        outputs.push(clone);
        remaining = rest;
    }
    outputs.push(remaining);
    Ok(outputs)
}

/// A circuit element; mode references name the wire that started as that
/// basis mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    /// Wire `a` receives the transmitted port, wire `b` the reflected one.
    BeamSplitter { a: ModeId, b: ModeId, reflectivity: f64 },
    /// Consumes `reflected` and `epr_half`; the result replaces `transmitted`.
    BellFeedforward {
        transmitted: ModeId,
        reflected: ModeId,
        epr_half: ModeId,
        gain: f64,
    },
    Loss {
        mode: ModeId,
        eta: f64,
        fresh_vacuum: ModeId,
    },
    /// `input` receives the first clone, `ancillas[k]` the clone `k + 2`.
    BalancedSplit { input: ModeId, ancillas: Vec<ModeId> },
}

impl Element {
    pub fn validate(&self) -> Result<()> {
        match self {
            Element::BeamSplitter { reflectivity, .. } => check_reflectivity(*reflectivity),
            Element::BellFeedforward { gain, .. } if !gain.is_finite() => Err(Error::OutOfRange {
                name: "g",
                value: *gain,
                expected: "finite",
            }),
            Element::BellFeedforward { .. } => Ok(()),
            Element::Loss { eta, .. } => check_eta(*eta),
            Element::BalancedSplit { .. } => Ok(()),
        }
    }
}

/// Wires of a circuit built over one registry; each element rewrites wires in
/// place and measured or absorbed wires are marked consumed.
#[derive(Debug, Clone)]
pub struct Circuit {
    registry: Arc<Registry>,
    wires: Vec<Option<ModeExpr>>,
    elements: Vec<Element>,
}

impl Circuit {
    pub fn new(registry: &Arc<Registry>) -> Result<Self> {
        let wires = registry
            .modes()
            .iter()
            .map(|m| ModeExpr::identity(registry, &m.id).map(Some))
            .collect::<Result<Vec<_>>>()?;
        Ok(Circuit {
            registry: Arc::clone(registry),
            wires,
            elements: Vec::new(),
        })
    }

    pub fn wire(&self, id: &ModeId) -> Result<&ModeExpr> {
        let k = self.registry.index_of(id)?;
        self.wires[k]
            .as_ref()
            .ok_or_else(|| Error::ConsumedMode(id.to_string()))
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    fn set(&mut self, id: &ModeId, e: Option<ModeExpr>) -> Result<()> {
        let k = self.registry.index_of(id)?;
        self.wires[k] = e;
        Ok(())
    }

    pub fn apply(&mut self, element: Element) -> Result<()> {
        element.validate()?;
        match &element {
            Element::BeamSplitter { a, b, reflectivity } => {
                let (t, r) = apply_beamsplitter(self.wire(a)?, self.wire(b)?, *reflectivity)?;
                self.set(a, Some(t))?;
                self.set(b, Some(r))?;
            }
            Element::BellFeedforward {
                transmitted,
                reflected,
                epr_half,
                gain,
            } => {
                let out = apply_bell_feedforward(
                    self.wire(transmitted)?,
                    self.wire(reflected)?,
                    self.wire(epr_half)?,
                    *gain,
                )?;
                self.set(transmitted, Some(out))?;
                self.set(reflected, None)?;
                self.set(epr_half, None)?;
            }
            Element::Loss {
                mode,
                eta,
                fresh_vacuum,
            } => {
                let out = apply_loss(self.wire(mode)?, *eta, self.wire(fresh_vacuum)?)?;
                self.set(mode, Some(out))?;
                self.set(fresh_vacuum, None)?;
            }
            Element::BalancedSplit { input, ancillas } => {
                let anc = ancillas
                    .iter()
                    .map(|id| self.wire(id).cloned())
                    .collect::<Result<Vec<_>>>()?;
                let mut clones = apply_balanced_split(self.wire(input)?, &anc)?.into_iter();
                self.set(input, clones.next())?;
                for id in ancillas {
                    self.set(id, clones.next())?;
                }
            }
        }
        self.elements.push(element);
        Ok(())
    }
}

//! Fidelity against coherent inputs, classical boundaries, cloning fidelities
//! and the signal-to-noise ratio an eavesdropper obtains from the channel.

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::gaussian::{covariance, mean, BasisMode, BasisState, ModeExpr, ALGEBRA_TOL};
use crate::optics::apply_beamsplitter;
use crate::protocol::{build_transfer, ProtocolParams, SCALAR_TOL};

/// Best fidelity for coherent inputs without entanglement.
pub const CLASSICAL_LIMIT: f64 = 0.5;
/// Fidelity above which the output is the best remaining copy.
pub const NO_CLONING_LIMIT: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub fidelity: f64,
    pub vx: f64,
    pub vy: f64,
    /// Amplitude of the input X (Y) quadrature in the output X (Y).
    pub gain_x: f64,
    pub gain_y: f64,
    pub boundary_classical: f64,
    pub beats_classical: bool,
    pub beats_no_cloning: bool,
    pub beats_boundary: bool,
    /// Set when gain is not unity and the mean-mismatch factor was applied.
    pub extended_formula: bool,
}

impl FidelityReport {
    pub fn with_boundary(mut self, boundary: f64) -> Self {
        self.boundary_classical = boundary;
        self.beats_boundary = self.fidelity > boundary;
        self
    }
}

/// Overlap of a coherent state with a Gaussian state whose quadrature
/// covariance is `cov` and whose mean is offset by `delta` from the coherent
/// amplitude. Reduces to `2/sqrt((1+VX)(1+VY))` for uncorrelated quadratures
/// and zero offset.
pub fn gaussian_fidelity(cov: &Matrix2<f64>, delta: (f64, f64)) -> f64 {
    let s = cov + Matrix2::identity();
    let det = s.determinant();
    let inv = Matrix2::new(s[(1, 1)], -s[(0, 1)], -s[(1, 0)], s[(0, 0)]) / det;
    let d = nalgebra::Vector2::new(delta.0, delta.1);
    let quad = (d.transpose() * inv * d)[(0, 0)];
    2.0 / det.sqrt() * (-0.5 * quad).exp()
}

/// Fidelity of the output `expr` with the coherent input of mean `input_mean`.
pub fn fidelity_coherent(expr: &ModeExpr, state: &BasisState, input_mean: (f64, f64)) -> Result<FidelityReport> {
    if !expr.is_physical(ALGEBRA_TOL) {
        return Err(Error::Unphysical("[X, Y] != 2i".to_owned()));
    }
    let cov = covariance(expr, state)?;
    let (mx, my) = mean(expr, state)?;
    let (gain_x, gain_y) = match state.registry().input_mode() {
        Some(m) => {
            let b = expr.block_on(&m.id)?;
            (b[(0, 0)], b[(1, 1)])
        }
        None => (0.0, 0.0),
    };
    let unity = (gain_x - 1.0).abs() <= SCALAR_TOL && (gain_y - 1.0).abs() <= SCALAR_TOL;
    let fidelity = gaussian_fidelity(&cov, (mx - input_mean.0, my - input_mean.1));
    Ok(FidelityReport {
        fidelity,
        vx: cov[(0, 0)],
        vy: cov[(1, 1)],
        gain_x,
        gain_y,
        boundary_classical: CLASSICAL_LIMIT,
        beats_classical: fidelity > CLASSICAL_LIMIT,
        beats_no_cloning: fidelity > NO_CLONING_LIMIT,
        beats_boundary: fidelity > CLASSICAL_LIMIT,
        extended_formula: !unity,
    })
}

/// Classical/quantum boundary of the transfer: `1/(R+1)`.
pub fn fidelity_bound_transfer(reflectivity: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&reflectivity) {
        return Err(Error::OutOfRange {
            name: "R",
            value: reflectivity,
            expected: "0 <= R <= 1",
        });
    }
    Ok(1.0 / (reflectivity + 1.0))
}

/// Symmetric 1 -> M cloning bound `M/(2M-1)`.
pub fn clone_bound(m: u32) -> f64 {
    m as f64 / (2.0 * m as f64 - 1.0)
}

/// out1 of the cloner: `M/(M + (M-1)e^{-2r})`.
pub fn clone_out1_closed(m: u32, squeezing: f64) -> f64 {
    let mf = m as f64;
    mf / (mf + (mf - 1.0) * (-2.0 * squeezing).exp())
}

/// Each of the `M-1` clones split from Bob's second port.
///
/// A clone is `a_in - sqrt((M-1)/M) b1^dagger - b2/sqrt(M(M-1)) + ancillas`
/// with ancilla weight `(M-2)/(M-1)`, so its added noise is
/// `A = ((M-1)^2+1)/(M(M-1)) cosh2r + (2/M) sinh2r + (M-2)/(M-1)` and the
/// fidelity `2/(2+A)`. At `r = 0` this is `M/(2M-1)`; at `M = 2` it is
/// `2/(2+e^{2r})`.
pub fn clone_copy_closed(m: u32, squeezing: f64) -> f64 {
    let mf = m as f64;
    let (c, s) = ((2.0 * squeezing).cosh(), (2.0 * squeezing).sinh());
    let added = ((mf - 1.0).powi(2) + 1.0) / (mf * (mf - 1.0)) * c + 2.0 / mf * s + (mf - 2.0) / (mf - 1.0);
    2.0 / (2.0 + added)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloneFidelities {
    pub m: u32,
    pub out1_closed: f64,
    pub clone_closed: f64,
    pub out1_circuit: f64,
    pub clones_circuit: Vec<f64>,
}

impl CloneFidelities {
    /// Largest |circuit - closed form| over out1 and all clones.
    pub fn max_deviation(&self) -> f64 {
        self.clones_circuit
            .iter()
            .map(|f| (f - self.clone_closed).abs())
            .fold((self.out1_circuit - self.out1_closed).abs(), f64::max)
    }

    pub fn agrees(&self) -> bool {
        self.max_deviation() <= SCALAR_TOL
    }
}

/// Closed-form and circuit-built fidelities of the 1 -> M cloner.
pub fn clone_fidelities(m: u32, squeezing: f64) -> Result<CloneFidelities> {
    let out = build_transfer(&ProtocolParams::cloner(m, squeezing))?;
    let out1_circuit = out.fidelity_out1()?.fidelity;
    let clones_circuit = out.clone_fidelities()?.into_iter().map(|f| f.fidelity).collect();
    Ok(CloneFidelities {
        m,
        out1_closed: clone_out1_closed(m, squeezing),
        clone_closed: clone_copy_closed(m, squeezing),
        out1_circuit,
        clones_circuit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrReport {
    pub snr_x: f64,
    pub snr_y: f64,
    pub signal_variance: (f64, f64),
    /// Amplitude of the input quadrature in the measured photocurrent.
    pub signal_coefficient: (f64, f64),
    /// Measured-port noise divided by the squared signal coefficient.
    pub noise_referred_to_input: (f64, f64),
    /// The closed expression `V/[cosh2r + (1 - cosh2r)/(1-R)]`, when the
    /// report was produced for a known `(R, r)`.
    pub printed_formula: Option<(f64, f64)>,
}

impl SnrReport {
    /// Relative disagreement between first-principles and printed values.
    pub fn printed_divergence(&self) -> Option<f64> {
        self.printed_formula.map(|(px, py)| {
            let dx = ((self.snr_x - px) / self.snr_x).abs();
            let dy = ((self.snr_y - py) / self.snr_y).abs();
            dx.max(dy)
        })
    }
}

const MEASUREMENT_VACUUM: &str = "v_meas";

/// SNR of simultaneous X/Y measurement of `channel` (50% split against a fresh
/// vacuum) for an input with quadrature signal variances `input_variance`.
/// The input quadrature is the signal; every other term is noise.
pub fn channel_snr(channel: &ModeExpr, state: &BasisState, input_variance: (f64, f64)) -> Result<SnrReport> {
    if !std::sync::Arc::ptr_eq(channel.registry(), state.registry()) {
        return Err(Error::RegistryMismatch);
    }
    if !(input_variance.0 >= 0.0 && input_variance.1 >= 0.0) {
        return Err(Error::OutOfRange {
            name: "vin",
            value: input_variance.0.min(input_variance.1),
            expected: "non-negative input variance",
        });
    }
    let input = state
        .registry()
        .input_mode()
        .ok_or_else(|| Error::UnknownMode("coherent input".to_owned()))?
        .id
        .clone();
    let ext = state.extended(vec![BasisMode::vacuum(MEASUREMENT_VACUUM)])?;
    let reg = ext.registry();
    let ch = channel.embed(reg)?;
    let vm = ModeExpr::identity(reg, &MEASUREMENT_VACUUM.into())?;
    let (port_x, port_y) = apply_beamsplitter(&ch, &vm, 0.5)?;
    let k = reg.index_of(&input)?;

    let measure = |port: &ModeExpr, row: usize, v_in: f64| {
        let mut noise_row = port.coeffs().row(row).clone_owned();
        let kappa = noise_row[2 * k + row];
        noise_row[2 * k] = 0.0;
        noise_row[2 * k + 1] = 0.0;
        let noise = (&noise_row * ext.covariance() * noise_row.transpose())[(0, 0)];
        let referred = noise / (kappa * kappa);
        (v_in / referred, kappa, referred)
    };
    let (snr_x, kx, nx) = measure(&port_x, 0, input_variance.0);
    let (snr_y, ky, ny) = measure(&port_y, 1, input_variance.1);
    Ok(SnrReport {
        snr_x,
        snr_y,
        signal_variance: input_variance,
        signal_coefficient: (kx, ky),
        noise_referred_to_input: (nx, ny),
        printed_formula: None,
    })
}

/// `V/[cosh2r + (1 - cosh2r)/(1-R)]` evaluated as written.
pub fn snr_printed_formula(reflectivity: f64, squeezing: f64, v_in: f64) -> f64 {
    let c = (2.0 * squeezing).cosh();
    v_in / (c + (1.0 - c) / (1.0 - reflectivity))
}

/// First-principles channel SNR for a protocol, with the printed
/// expression alongside.
pub fn protocol_channel_snr(params: &ProtocolParams, input_variance: (f64, f64)) -> Result<SnrReport> {
    let out = build_transfer(params)?;
    let mut report = channel_snr(&out.channel, &out.state, input_variance)?;
    report.printed_formula = Some((
        snr_printed_formula(params.reflectivity, params.squeezing, input_variance.0),
        snr_printed_formula(params.reflectivity, params.squeezing, input_variance.1),
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{make_registry, BasisMode};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn identity_channel_has_unit_fidelity() {
        let (reg, st) = make_registry(vec![BasisMode::coherent("in", 1.0, 2.0)]).unwrap();
        let e = ModeExpr::identity(&reg, &"in".into()).unwrap();
        let f = fidelity_coherent(&e, &st, (1.0, 2.0)).unwrap();
        assert!(close(f.fidelity, 1.0));
        assert!(!f.extended_formula);
        assert!(f.beats_no_cloning);
    }

    #[test]
    fn unphysical_rejected() {
        let (reg, st) = make_registry(vec![BasisMode::coherent("in", 0.0, 0.0)]).unwrap();
        let e = ModeExpr::identity(&reg, &"in".into()).unwrap().scaled(2.0);
        assert!(matches!(
            fidelity_coherent(&e, &st, (0.0, 0.0)),
            Err(Error::Unphysical(_))
        ));
    }

    #[test]
    fn mean_mismatch_factor() {
        // Diagonal covariance: reduces to the Eq. (4)-style product with the
        // exponential mismatch factor.
        let cov = Matrix2::new(1.5, 0.0, 0.0, 2.0);
        let f = gaussian_fidelity(&cov, (0.4, -0.3));
        let expected = 2.0 / (2.5f64 * 3.0).sqrt() * (-(0.16f64 / 5.0) - 0.09 / 6.0).exp();
        assert!(close(f, expected));
    }

    #[test]
    fn coherent_overlap_matches_direct_formula() {
        // Two coherent states |a>, |b>: |<a|b>|^2 = exp(-|a-b|^2); in X,Y
        // (vacuum variance 1) alpha = (X+iY)/2.
        let cov = Matrix2::identity();
        let (dx, dy) = (0.8, -1.2);
        let direct = (-(dx * dx + dy * dy) / 4.0f64).exp();
        assert!(close(gaussian_fidelity(&cov, (dx, dy)), direct));
    }

    #[test]
    fn boundaries() {
        assert_eq!(fidelity_bound_transfer(0.0).unwrap(), 1.0);
        assert_eq!(fidelity_bound_transfer(1.0).unwrap(), 0.5);
        assert!(close(fidelity_bound_transfer(0.5).unwrap(), 2.0 / 3.0));
        assert!(fidelity_bound_transfer(1.1).is_err());
        for m in 2..50 {
            let b = clone_bound(m);
            assert!((0.5..=2.0 / 3.0 + 1e-15).contains(&b));
        }
    }

    #[test]
    fn clone_closed_forms() {
        let m2 = clone_fidelities(2, 0.0).unwrap();
        assert!(close(m2.out1_closed, 2.0 / 3.0) && close(m2.clone_closed, 2.0 / 3.0));
        assert!(m2.agrees());
        let r = 0.4_f64;
        let m2 = clone_fidelities(2, r).unwrap();
        assert!(close(m2.out1_closed, 2.0 / (2.0 + (-2.0 * r).exp())));
        assert!(close(m2.clone_closed, 2.0 / (2.0 + (2.0 * r).exp())));
        assert!(m2.agrees());
        assert!(close(clone_fidelities(5, 0.0).unwrap().clone_closed, 5.0 / 9.0));
        assert!(close(clone_fidelities(4, 0.0).unwrap().clone_closed, 4.0 / 7.0));
        assert!(close(clone_out1_closed(3, 0.5), 3.0 / (3.0 + 2.0 * (-1.0f64).exp())));
    }

    #[test]
    fn clone_grid_agrees() {
        for m in 2..=8 {
            for &r in &[0.0, 0.1, 2f64.ln() / 2.0, 1.0] {
                let c = clone_fidelities(m, r).unwrap();
                assert!(c.agrees(), "M={m} r={r} dev={}", c.max_deviation());
                assert_eq!(c.clones_circuit.len(), m as usize - 1);
            }
        }
    }

    fn snr_oracle(rf: f64, r: f64, v: f64) -> f64 {
        // measured X = (X_ch + X_m)/sqrt2, X_ch = X_in/sqrt(1-R) - sqrt(R/(1-R)) X_b1
        // noise/kappa^2 = (1-R)(R cosh2r/(1-R) + 1) = R cosh 2r + 1 - R
        v / (rf * (2.0 * r).cosh() + 1.0 - rf)
    }

    #[test]
    fn snr_first_principles() {
        for &rf in &[0.0, 0.2, 0.5, 0.7, 0.9] {
            for &r in &[0.0, 0.5, 1.0] {
                let rep = protocol_channel_snr(&ProtocolParams::new(rf, r), (2.0, 3.0)).unwrap();
                assert!(close(rep.snr_x, snr_oracle(rf, r, 2.0)), "R={rf} r={r}");
                assert!(close(rep.snr_y, snr_oracle(rf, r, 3.0)));
                assert!(close(rep.signal_coefficient.0, 1.0 / (2.0 * (1.0 - rf)).sqrt()));
                if r == 0.0 {
                    let (px, py) = rep.printed_formula.unwrap();
                    assert!(close(px, 2.0) && close(py, 3.0));
                    assert!(rep.printed_divergence().unwrap() < 1e-12);
                }
            }
        }
        let rep = protocol_channel_snr(&ProtocolParams::new(0.0, 0.0), (4.0, 4.0)).unwrap();
        assert!(close(rep.snr_x, 4.0) && close(rep.snr_y, 4.0));
    }

    #[test]
    fn snr_decreases_with_reflectivity() {
        let mut last = f64::INFINITY;
        for k in 0..20 {
            let rf = k as f64 / 20.0;
            let rep = protocol_channel_snr(&ProtocolParams::new(rf, 1.0), (1.0, 1.0)).unwrap();
            assert!(rep.snr_x < last);
            last = rep.snr_x;
        }
        // the printed expression goes negative here
        let rep = protocol_channel_snr(&ProtocolParams::new(0.5, 1.0), (1.0, 1.0)).unwrap();
        assert!(rep.printed_formula.unwrap().0 < 0.0);
        assert!(rep.snr_x > 0.0);
    }

    #[test]
    fn snr_registry_mismatch() {
        let a = build_transfer(&ProtocolParams::new(0.3, 0.1)).unwrap();
        let b = build_transfer(&ProtocolParams::new(0.3, 0.1)).unwrap();
        assert_eq!(
            channel_snr(&a.channel, &b.state, (1.0, 1.0)),
            Err(Error::RegistryMismatch)
        );
    }
}

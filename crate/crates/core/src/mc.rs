//! Shot-level Monte-Carlo oracle.
//!
//! Basis quadratures are drawn from the Gaussian state and pushed through the
//! circuit numerically, shot by shot: the input beamsplitter, the two homodyne
//! photocurrents of the Bell measurement, the scaled displacement, loss and
//! Bob's beamsplitter. Every step is linear in the quadratures and the state
//! is Gaussian, so classical sampling reproduces all first and second moments
//! of the outputs exactly; nothing here uses the linear-form engine.
//!
//! Shots are split into chunks of `chunk` shots. Chunk `k` draws from a
//! ChaCha8 stream seeded with `seed` and stream number `k`, and chunk sums
//! are merged in chunk order, so a run is bit-identical for a given
//! `(seed, chunk)` regardless of thread count. Changing `chunk` changes which
//! stream produces which shot: results stay statistically compatible but are
//! not identical.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{make_registry, BasisState, ModeId};
use crate::metrics::gaussian_fidelity;
use crate::protocol::{ids, ProtocolParams};

pub const DEFAULT_CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MCConfig {
    pub shots: u64,
    pub seed: u64,
    pub chunk: u64,
}

impl MCConfig {
    pub fn new(shots: u64, seed: u64) -> Self {
        MCConfig {
            shots,
            seed,
            chunk: DEFAULT_CHUNK,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(Error::OutOfRange {
                name: "shots",
                value: 0.0,
                expected: "shots >= 1",
            });
        }
        if self.chunk == 0 {
            return Err(Error::OutOfRange {
                name: "chunk",
                value: 0.0,
                expected: "chunk >= 1",
            });
        }
        Ok(())
    }

    fn chunks(&self) -> impl ParallelIterator<Item = (u64, u64)> + '_ {
        let n = self.shots.div_ceil(self.chunk);
        (0..n)
            .into_par_iter()
            .map(move |k| (k, self.chunk.min(self.shots - k * self.chunk)))
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws basis-quadrature vectors from `N(mean, cov)` through a symmetric
/// square root of the covariance.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: Vec<f64>,
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(state: &BasisState) -> Result<Self> {
        let cov = state.covariance();
        let eig = SymmetricEigen::new(cov.clone());
        let scale = eig.eigenvalues.amax().max(1.0);
        let min = eig.eigenvalues.min();
        if min < -1e-9 * scale {
            return Err(Error::NotPositiveSemidefinite(min));
        }
        // clip tiny negative eigenvalues of pure-state covariances
        let root = eig.eigenvalues.map(|l| l.max(-1e-12).max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&root);
        Ok(GaussianSampler {
            mean: state.mean_vector().iter().copied().collect(),
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample_into<R: rand::Rng + ?Sized>(&self, rng: &mut R, normals: &mut [f64], out: &mut [f64]) {
        for z in normals.iter_mut() {
            *z = StandardNormal.sample(rng);
        }
        let d = self.mean.len();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let mut acc = self.mean[i];
            for (j, z) in normals.iter().enumerate() {
                acc += self.factor[(i, j)] * z;
            }
            *o = acc;
        }
    }
}

/// `n` samples of the basis quadratures (order `X_1, Y_1, ...`), from stream 0.
pub fn sample_basis(state: &BasisState, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let sampler = GaussianSampler::new(state)?;
    let mut rng = stream_rng(seed, 0);
    let d = sampler.dim();
    let mut z = vec![0.0; d];
    Ok((0..n)
        .map(|_| {
            let mut v = vec![0.0; d];
            sampler.sample_into(&mut rng, &mut z, &mut v);
            v
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Field {
    x: f64,
    y: f64,
}

impl Field {
    fn lin(ca: f64, a: Field, cb: f64, b: Field) -> Field {
        Field {
            x: ca * a.x + cb * b.x,
            y: ca * a.y + cb * b.y,
        }
    }
}

fn beamsplit(a: Field, b: Field, reflectivity: f64) -> (Field, Field) {
    let t = (1.0 - reflectivity).sqrt();
    let r = reflectivity.sqrt();
    (Field::lin(t, a, r, b), Field::lin(r, a, -t, b))
}

/// Raw power sums of one quadrature pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: f64,
    sx: [f64; 4],
    sy: [f64; 4],
    sxy: f64,
}

impl Moments {
    fn push(&mut self, f: Field) {
        self.n += 1.0;
        let (mut px, mut py) = (1.0, 1.0);
        for k in 0..4 {
            px *= f.x;
            py *= f.y;
            self.sx[k] += px;
            self.sy[k] += py;
        }
        self.sxy += f.x * f.y;
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        for k in 0..4 {
            self.sx[k] += o.sx[k];
            self.sy[k] += o.sy[k];
        }
        self.sxy += o.sxy;
    }

    /// (mean, variance, fourth central moment); variance uses n - 1.
    fn central(&self, s: &[f64; 4]) -> (f64, f64, f64) {
        let n = self.n;
        let m = s[0] / n;
        let e2 = s[1] / n;
        let e3 = s[2] / n;
        let e4 = s[3] / n;
        let var_biased = e2 - m * m;
        let mu4 = e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4);
        let var = if n > 1.0 { var_biased * n / (n - 1.0) } else { 0.0 };
        (m, var, mu4)
    }

    fn estimate(&self, input_mean: (f64, f64)) -> MCEstimate {
        let n = self.n;
        let (mx, vx, m4x) = self.central(&self.sx);
        let (my, vy, m4y) = self.central(&self.sy);
        let cxy = if n > 1.0 {
            (self.sxy / n - mx * my) * n / (n - 1.0)
        } else {
            0.0
        };
        let se_var = |v: f64, m4: f64| ((m4 - v * v).max(0.0) / n).sqrt();
        let stderr_var_x = se_var(vx, m4x);
        let stderr_var_y = se_var(vy, m4y);
        let stderr_mean_x = (vx / n).sqrt();
        let stderr_mean_y = (vy / n).sqrt();

        let fid = |vx: f64, vy: f64, mx: f64, my: f64| {
            gaussian_fidelity(&Matrix2::new(vx, cxy, cxy, vy), (mx - input_mean.0, my - input_mean.1))
        };
        let f = fid(vx, vy, mx, my);
        // delta method over the four estimated moments
        let h = 1e-6;
        let partial = |dvx: f64, dvy: f64, dmx: f64, dmy: f64| {
            (fid(vx + dvx, vy + dvy, mx + dmx, my + dmy) - fid(vx - dvx, vy - dvy, mx - dmx, my - dmy)) / (2.0 * h)
        };
        let stderr_fidelity = ((partial(h, 0.0, 0.0, 0.0) * stderr_var_x).powi(2)
            + (partial(0.0, h, 0.0, 0.0) * stderr_var_y).powi(2)
            + (partial(0.0, 0.0, h, 0.0) * stderr_mean_x).powi(2)
            + (partial(0.0, 0.0, 0.0, h) * stderr_mean_y).powi(2))
        .sqrt();

        MCEstimate {
            mean_x: mx,
            mean_y: my,
            var_x: vx,
            var_y: vy,
            cov_xy: cxy,
            stderr_mean_x,
            stderr_mean_y,
            stderr_var_x,
            stderr_var_y,
            fidelity_estimate: f,
            stderr_fidelity,
            shots: n as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov_xy: f64,
    pub stderr_mean_x: f64,
    pub stderr_mean_y: f64,
    pub stderr_var_x: f64,
    pub stderr_var_y: f64,
    /// Sample moments plugged into the coherent-state fidelity.
    pub fidelity_estimate: f64,
    pub stderr_fidelity: f64,
    pub shots: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolEstimates {
    pub channel: MCEstimate,
    pub out1: MCEstimate,
    pub out2: MCEstimate,
    pub clones: Vec<MCEstimate>,
}

/// Positions of the protocol's basis modes in the sampled vector.
struct Layout {
    input: usize,
    vac: usize,
    epr1: usize,
    epr2: usize,
    loss: Option<usize>,
    ancillas: Vec<usize>,
}

fn layout(params: &ProtocolParams) -> Result<(BasisState, Layout)> {
    let (reg, state) = make_registry(params.descriptors())?;
    let at = |id: &str| reg.index_of(&ModeId::from(id));
    let layout = Layout {
        input: at(ids::INPUT)?,
        vac: at(ids::INPUT_VACUUM)?,
        epr1: at(ids::EPR_ALICE)?,
        epr2: at(ids::EPR_BOB)?,
        loss: if params.eta < 1.0 {
            Some(at(ids::LOSS_VACUUM)?)
        } else {
            None
        },
        ancillas: match params.clones {
            Some(m) => (1..m as usize - 1)
                .map(|k| at(&ids::ancilla(k)))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        },
    };
    Ok((state, layout))
}

struct ShotOutputs {
    input: Field,
    channel: Field,
    out1: Field,
    out2: Field,
}

/// One shot through the circuit. `q` holds the sampled basis quadratures.
fn run_shot(params: &ProtocolParams, g: f64, lay: &Layout, q: &[f64], clones: &mut Vec<Field>) -> ShotOutputs {
    let field = |k: usize| Field {
        x: q[2 * k],
        y: q[2 * k + 1],
    };
    let input = field(lay.input);
    let rf = params.reflectivity;

    let (transmitted, reflected) = beamsplit(input, field(lay.vac), rf);

    // Bell measurement: mix with EPR half 1 on a 50/50 splitter, homodyne X on
    // the difference port and Y on the sum port.
    let (sum_port, diff_port) = beamsplit(reflected, field(lay.epr1), 0.5);
    let photo_x = diff_port.x;
    let photo_y = sum_port.y;

    let displaced = Field {
        x: transmitted.x + g * photo_x,
        y: transmitted.y + g * photo_y,
    };
    let channel = match lay.loss {
        Some(k) => Field::lin(params.eta, displaced, (1.0 - params.eta * params.eta).sqrt(), field(k)),
        None => displaced,
    };

    let (out1, out2) = beamsplit(channel, field(lay.epr2), rf);

    clones.clear();
    if params.clones.is_some() {
        let m = lay.ancillas.len() + 2;
        let mut rest = out2;
        for (stage, &k) in lay.ancillas.iter().enumerate() {
            let left = (m - stage - 1) as f64;
            let (clone, next) = beamsplit(rest, field(k), (left - 1.0) / left);
            clones.push(clone);
            rest = next;
        }
        clones.push(rest);
    }

    ShotOutputs {
        input,
        channel,
        out1,
        out2,
    }
}

#[derive(Clone, Default)]
struct ProtocolSums {
    channel: Moments,
    out1: Moments,
    out2: Moments,
    clones: Vec<Moments>,
}

impl ProtocolSums {
    fn merge(mut self, o: ProtocolSums) -> ProtocolSums {
        self.channel.merge(&o.channel);
        self.out1.merge(&o.out1);
        self.out2.merge(&o.out2);
        if self.clones.len() < o.clones.len() {
            self.clones.resize(o.clones.len(), Moments::default());
        }
        for (a, b) in self.clones.iter_mut().zip(&o.clones) {
            a.merge(b);
        }
        self
    }
}

/// Monte-Carlo moments of every protocol output.
pub fn simulate_protocol_shots(params: &ProtocolParams, cfg: &MCConfig) -> Result<ProtocolEstimates> {
    params.validate()?;
    cfg.validate()?;
    let g = params.gain()?;
    let (state, lay) = layout(params)?;
    let sampler = GaussianSampler::new(&state)?;
    let d = sampler.dim();

    let parts: Vec<ProtocolSums> = cfg
        .chunks()
        .map(|(k, n)| {
            let mut rng = stream_rng(cfg.seed, k);
            let (mut z, mut q) = (vec![0.0; d], vec![0.0; d]);
            let mut clones = Vec::new();
            let mut sums = ProtocolSums::default();
            for _ in 0..n {
                sampler.sample_into(&mut rng, &mut z, &mut q);
                let shot = run_shot(params, g, &lay, &q, &mut clones);
                sums.channel.push(shot.channel);
                sums.out1.push(shot.out1);
                sums.out2.push(shot.out2);
                if sums.clones.len() < clones.len() {
                    sums.clones.resize(clones.len(), Moments::default());
                }
                for (m, c) in sums.clones.iter_mut().zip(&clones) {
                    m.push(*c);
                }
            }
            sums
        })
        .collect();
    let total = parts.into_iter().fold(ProtocolSums::default(), ProtocolSums::merge);

    let mean = params.input_mean;
    Ok(ProtocolEstimates {
        channel: total.channel.estimate(mean),
        out1: total.out1.estimate(mean),
        out2: total.out2.estimate(mean),
        clones: total.clones.iter().map(|m| m.estimate(mean)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrEstimate {
    pub snr_x: f64,
    pub snr_y: f64,
    pub stderr_x: f64,
    pub stderr_y: f64,
    /// Fitted amplitude of the input quadrature in each photocurrent.
    pub signal_coefficient: (f64, f64),
    pub noise_referred_to_input: (f64, f64),
    pub shots: u64,
}

/// Sums for regressing a photocurrent on the input quadrature.
#[derive(Debug, Clone, Copy, Default)]
struct Regression {
    n: f64,
    s: f64,
    ss: f64,
    m: f64,
    mm: f64,
    ms: f64,
}

impl Regression {
    fn push(&mut self, signal: f64, measured: f64) {
        self.n += 1.0;
        self.s += signal;
        self.ss += signal * signal;
        self.m += measured;
        self.mm += measured * measured;
        self.ms += measured * signal;
    }

    fn merge(mut self, o: Regression) -> Regression {
        self.n += o.n;
        self.s += o.s;
        self.ss += o.ss;
        self.m += o.m;
        self.mm += o.mm;
        self.ms += o.ms;
        self
    }

    /// (snr, stderr, kappa, referred noise) for nominal signal variance `v_in`.
    fn snr(&self, v_in: f64) -> (f64, f64, f64, f64) {
        let n = self.n;
        let var_s = self.ss / n - (self.s / n).powi(2);
        let var_m = self.mm / n - (self.m / n).powi(2);
        let cov = self.ms / n - (self.s / n) * (self.m / n);
        let kappa = cov / var_s;
        let residual = var_m - cov * cov / var_s;
        let referred = residual / (kappa * kappa);
        let snr = v_in / referred;
        let rel = (2.0 / n + 4.0 * referred / (n * var_s)).sqrt();
        (snr, snr * rel, kappa, referred)
    }
}

/// Empirical SNR of an eavesdropper splitting the channel on a 50%
/// beamsplitter and measuring X and Y on the two ports. The input quadratures
/// are modulated to variances `input_variance` and serve as the signal.
pub fn estimate_channel_snr(
    params: &ProtocolParams,
    cfg: &MCConfig,
    input_variance: (f64, f64),
) -> Result<SnrEstimate> {
    params.validate()?;
    cfg.validate()?;
    if !(input_variance.0 > 0.0 && input_variance.1 > 0.0) {
        return Err(Error::OutOfRange {
            name: "vin",
            value: input_variance.0.min(input_variance.1),
            expected: "positive input variance",
        });
    }
    let g = params.gain()?;
    let (state, lay) = layout(params)?;
    let sampler = GaussianSampler::new(&state)?;
    let d = sampler.dim();
    let (mx, my) = params.input_mean;
    let (sx, sy) = (input_variance.0.sqrt(), input_variance.1.sqrt());

    let parts: Vec<(Regression, Regression)> = cfg
        .chunks()
        .map(|(k, n)| {
            let mut rng = stream_rng(cfg.seed, k);
            let (mut z, mut q) = (vec![0.0; d], vec![0.0; d]);
            let mut clones = Vec::new();
            let (mut rx, mut ry) = (Regression::default(), Regression::default());
            for _ in 0..n {
                sampler.sample_into(&mut rng, &mut z, &mut q);
                // the input block is an identity covariance; rescale it
                q[2 * lay.input] = mx + sx * (q[2 * lay.input] - mx);
                q[2 * lay.input + 1] = my + sy * (q[2 * lay.input + 1] - my);
                let shot = run_shot(params, g, &lay, &q, &mut clones);
                let probe = Field {
                    x: StandardNormal.sample(&mut rng),
                    y: StandardNormal.sample(&mut rng),
                };
                let (port_x, port_y) = beamsplit(shot.channel, probe, 0.5);
                rx.push(shot.input.x, port_x.x);
                ry.push(shot.input.y, port_y.y);
            }
            (rx, ry)
        })
        .collect();
    let (rx, ry) = parts
        .into_iter()
        .fold((Regression::default(), Regression::default()), |(ax, ay), (bx, by)| {
            (ax.merge(bx), ay.merge(by))
        });
    let (snr_x, stderr_x, kx, nx) = rx.snr(input_variance.0);
    let (snr_y, stderr_y, ky, ny) = ry.snr(input_variance.1);
    Ok(SnrEstimate {
        snr_x,
        snr_y,
        stderr_x,
        stderr_y,
        signal_coefficient: (kx, ky),
        noise_referred_to_input: (nx, ny),
        shots: cfg.shots,
    })
}

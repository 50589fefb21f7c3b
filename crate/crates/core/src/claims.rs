//! Claim arrivals and claim sizes.
//!
//! Arrivals form a Cox process with intensity `λ(t, Y_{t-})` of exponential
//! type, `λ(t, e_j) = λ0 exp(k1 t + j k2)`. Claim sizes follow an exponential
//! law truncated to `[0, zmax]`, with its rate calibrated so that the mean
//! equals a configured target.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::Exp1;

use crate::regime::RegimePath;
use crate::roots::bisect;
use crate::{Error, Result};

const TILT_LIMIT: f64 = 700.0;
/// Moments `E[Z^n]` kept for the small-tilt series of the excess MGF.
const SERIES_MOMENTS: usize = 12;

/// Which tilted claim-size integral to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiltedMoment {
    /// `∫ (e^{cz} - 1) F(dz)`
    ExcessMgf,
    /// `∫ z e^{cz} F(dz)`
    First,
    /// `∫ z² e^{cz} F(dz)`
    Second,
}

impl TiltedMoment {
    pub fn power(self) -> u32 {
        match self {
            TiltedMoment::ExcessMgf => 0,
            TiltedMoment::First => 1,
            TiltedMoment::Second => 2,
        }
    }
}

/// Intensity parameters and the claim-size law.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimModel {
    lambda0: f64,
    k1: f64,
    k2: f64,
    zmax: f64,
    mean: f64,
    rate: f64,
    /// `1 - e^{-rate * zmax}`
    mass: f64,
    raw_moments: [f64; SERIES_MOMENTS + 1],
}

impl ClaimModel {
    pub fn new(lambda0: f64, k1: f64, k2: f64, zmax: f64, mean: f64) -> Result<Self> {
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::domain("claims.lambda0", format!("must be positive, got {lambda0}")));
        }
        if !(k1 >= 0.0 && k1.is_finite()) {
            return Err(Error::domain("claims.k1", format!("must be non-negative, got {k1}")));
        }
        if !(k2 >= 0.0 && k2.is_finite()) {
            return Err(Error::domain("claims.k2", format!("must be non-negative, got {k2}")));
        }
        if !(zmax > 0.0 && zmax.is_finite()) {
            return Err(Error::domain("claims.zmax", format!("must be positive, got {zmax}")));
        }
        if !(mean > 0.0 && mean < 0.5 * zmax) {
            return Err(Error::domain(
                "claims.mean",
                format!("must lie in (0, zmax/2) = (0, {}), got {mean}", 0.5 * zmax),
            ));
        }
        let rate = calibrate_rate(zmax, mean)?;
        let mass = -(-rate * zmax).exp_m1();
        let x = rate * zmax;
        let table = e_table(x, SERIES_MOMENTS);
        let mut raw_moments = [0.0; SERIES_MOMENTS + 1];
        for (n, m) in raw_moments.iter_mut().enumerate() {
            *m = rate / mass * zmax.powi(n as i32 + 1) * table[n];
        }
        Ok(Self { lambda0, k1, k2, zmax, mean, rate, mass, raw_moments })
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    pub fn zmax(&self) -> f64 {
        self.zmax
    }

    /// Target mean claim size the rate was calibrated to.
    pub fn target_mean(&self) -> f64 {
        self.mean
    }

    /// Rate of the truncated exponential.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `λ(t, e_j) = λ0 exp(k1 t + j k2)` for the 0-based state index `state`.
    pub fn intensity(&self, t: f64, state: usize) -> f64 {
        self.lambda0 * (self.k1 * t + (state + 1) as f64 * self.k2).exp()
    }

    /// `dλ/dt`.
    pub fn intensity_time_derivative(&self, t: f64, state: usize) -> f64 {
        self.k1 * self.intensity(t, state)
    }

    /// Upper bound of the intensity over `[t0, t1]` and the given regimes.
    /// The intensity is monotone in time, so the endpoints suffice.
    pub fn intensity_bound(&self, t0: f64, t1: f64, states: impl IntoIterator<Item = usize>) -> f64 {
        states
            .into_iter()
            .flat_map(|j| [self.intensity(t0, j), self.intensity(t1, j)])
            .fold(0.0, f64::max)
    }

    /// Density of the claim-size law.
    pub fn density(&self, z: f64) -> f64 {
        if !(0.0..=self.zmax).contains(&z) {
            return 0.0;
        }
        self.rate * (-self.rate * z).exp() / self.mass
    }

    /// `E[Z^n]` for `n <= 12`.
    pub fn raw_moment(&self, n: usize) -> f64 {
        self.raw_moments[n]
    }

    pub fn mean(&self) -> f64 {
        self.raw_moments[1]
    }

    pub fn second_moment(&self) -> f64 {
        self.raw_moments[2]
    }

    /// Tilted moment `∫ z^p e^{cz} F(dz)` (or the excess MGF), in closed form.
    pub fn claim_moment(&self, kind: TiltedMoment, tilt: f64) -> Result<f64> {
        let reach = tilt * self.zmax;
        if reach > TILT_LIMIT || tilt.is_nan() {
            return Err(Error::TiltOverflow(reach));
        }
        Ok(self.tilted(kind, tilt))
    }

    /// Unchecked variant of [`claim_moment`](Self::claim_moment) for callers
    /// whose tilt is bounded by construction.
    pub(crate) fn tilted(&self, kind: TiltedMoment, tilt: f64) -> f64 {
        let m = self.zmax;
        let scale = self.rate / self.mass;
        let x = (self.rate - tilt) * m;
        match kind {
            TiltedMoment::First => scale * m * m * e_small(1, x),
            TiltedMoment::Second => scale * m * m * m * e_small(2, x),
            TiltedMoment::ExcessMgf => {
                let d = tilt * m;
                if d.abs() < 0.05 {
                    let mut term = 1.0;
                    let mut acc = 0.0;
                    for n in 1..=SERIES_MOMENTS {
                        term *= tilt / n as f64;
                        acc += term * self.raw_moments[n];
                    }
                    acc
                } else {
                    scale * m * e_small(0, x) - 1.0
                }
            }
        }
    }

    /// Draws one claim size by inversion.
    pub fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let z = -(-u * self.mass).ln_1p() / self.rate;
        z.clamp(0.0, self.zmax)
    }
}

/// Mean of the exponential law with rate `r` truncated to `[0, m]`.
fn truncated_mean(r: f64, m: f64) -> f64 {
    let x = r * m;
    if x.abs() < 1e-6 {
        // expansion of 1/r - m/(e^{rm}-1) around r = 0
        return m * (0.5 - x / 12.0);
    }
    1.0 / r - m / x.exp_m1()
}

fn calibrate_rate(zmax: f64, mean: f64) -> Result<f64> {
    // mean is decreasing in the rate: zmax/2 at 0, about 1/r for large r
    let hi = 4.0 / mean;
    let out = bisect(|r| truncated_mean(r, zmax) - mean, 0.0, hi, 1e-15 * hi, 400)
        .ok_or_else(|| Error::domain("claims.mean", "could not calibrate the truncated exponential rate"))?;
    Ok(out.root)
}

/// `E_n(x) = ∫_0^1 u^n e^{-xu} du` for `n <= 2`.
fn e_small(n: u32, x: f64) -> f64 {
    if x.abs() < 1.0 {
        return e_series(n as usize, x);
    }
    let ex = (-x).exp();
    let e0 = -(-x).exp_m1() / x;
    if n == 0 {
        return e0;
    }
    let e1 = (e0 - ex) / x;
    if n == 1 {
        return e1;
    }
    (2.0 * e1 - ex) / x
}

fn e_series(n: usize, x: f64) -> f64 {
    let mut term = 1.0;
    let mut acc = 1.0 / (n + 1) as f64;
    for k in 1..40 {
        term *= -x / k as f64;
        acc += term / (k + n + 1) as f64;
        if term.abs() < 1e-18 {
            break;
        }
    }
    acc
}

/// `E_0..=E_nmax` at `x >= 0`, by series for small `x` and downward
/// recursion otherwise.
fn e_table(x: f64, nmax: usize) -> Vec<f64> {
    if x < 1.0 {
        return (0..=nmax).map(|n| e_series(n, x)).collect();
    }
    let top = nmax + 2 * x.ceil() as usize + 60;
    let ex = (-x).exp();
    let mut e = ex / (top + 1) as f64;
    let mut out = vec![0.0; nmax + 1];
    for n in (1..=top).rev() {
        // E_{n-1} = (x E_n + e^{-x}) / n
        e = (x * e + ex) / n as f64;
        if n - 1 <= nmax {
            out[n - 1] = e;
        }
    }
    out
}

/// Arrival times and sizes of the claims on one path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClaimPath {
    pub arrival_times: Vec<f64>,
    pub sizes: Vec<f64>,
}

impl ClaimPath {
    pub fn new(arrival_times: Vec<f64>, sizes: Vec<f64>) -> Result<Self> {
        if arrival_times.len() != sizes.len() {
            return Err(Error::domain("claim path", "times and sizes differ in length"));
        }
        if !arrival_times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::domain("claim path", "arrival times must be strictly increasing"));
        }
        Ok(Self { arrival_times, sizes })
    }

    pub fn len(&self) -> usize {
        self.arrival_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrival_times.is_empty()
    }

    /// Aggregate claims `C_t`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let n = self.arrival_times.partition_point(|&s| s <= t);
        self.sizes[..n].iter().sum()
    }

    /// CSV with header `time,size`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,size\n");
        for (t, z) in self.arrival_times.iter().zip(&self.sizes) {
            let _ = writeln!(out, "{t},{z}");
        }
        out
    }
}

/// Simulates claims on `(t0, horizon]` by thinning a homogeneous Poisson
/// stream at the maximal intensity.
pub fn simulate_claims<R: Rng + ?Sized>(
    model: &ClaimModel,
    regime: &RegimePath,
    t0: f64,
    horizon: f64,
    rng: &mut R,
) -> ClaimPath {
    let bound = model.intensity_bound(t0, horizon, regime.states().iter().copied());
    let mut path = ClaimPath::default();
    let mut t = t0;
    loop {
        t += rng.sample::<f64, _>(Exp1) / bound;
        if t > horizon {
            break;
        }
        let state = regime
            .state_before(t)
            .expect("candidate arrival lies inside the regime horizon");
        let lambda = model.intensity(t, state);
        debug_assert!(lambda <= bound * (1.0 + 1e-12), "intensity {lambda} above bound {bound}");
        if rng.random::<f64>() * bound < lambda {
            path.arrival_times.push(t);
            path.sizes.push(model.sample_size(rng));
        }
    }
    path
}

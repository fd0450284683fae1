//! Problem data for the normalized allocation problem: SNR matrix, rate
//! demands, allocations and constraint accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents above this overflow `exp` in double precision.
pub(crate) const MAX_EXPONENT: f64 = 700.0;

/// Numerical tolerances shared across the crate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Linear constraints (spectrum sum, per-BS budgets).
    pub eq: f64,
    /// Relative tolerance on the nonlinear rate equalities.
    pub rate: f64,
    /// Smallest bandwidth ratio a served UE may hold.
    pub y_min: f64,
    /// Entries of X below this magnitude count as zero.
    pub zero: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eq: 1e-9,
            rate: 1e-7,
            y_min: 1e-9,
            zero: 1e-8,
        }
    }
}

/// Physical description of a cooperative downlink system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalProblem {
    pub num_bs: usize,
    pub num_ue: usize,
    /// Per-BS transmit power budget in watts.
    pub p0: f64,
    /// Shared bandwidth in hertz.
    pub b0: f64,
    /// Noise power spectral density in W/Hz.
    pub n0: f64,
    /// `channel_gain[i][j]` is |H_ij|^2; zero means UE j is out of coverage of BS i.
    pub channel_gain: Vec<Vec<f64>>,
    /// Required throughput of each UE in bit/s.
    pub rate_demand: Vec<f64>,
}

impl PhysicalProblem {
    fn validate(&self) -> Result<()> {
        if self.num_bs == 0 || self.num_ue == 0 {
            return Err(Error::InvalidInput("need at least one BS and one UE".into()));
        }
        for (name, v) in [("p0", self.p0), ("b0", self.b0), ("n0", self.n0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        check_shape(&self.channel_gain, self.num_bs, self.num_ue, "channel_gain")?;
        if self.rate_demand.len() != self.num_ue {
            return Err(Error::Dimension(format!(
                "rate_demand has {} entries, expected {}",
                self.rate_demand.len(),
                self.num_ue
            )));
        }
        if self.channel_gain.iter().flatten().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::InvalidInput("channel gains must be finite and >= 0".into()));
        }
        if self.rate_demand.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidInput("rate demands must be positive".into()));
        }
        Ok(())
    }
}

fn check_shape(m: &[Vec<f64>], rows: usize, cols: usize, name: &str) -> Result<()> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension(format!("{name} must be {rows}x{cols}")));
    }
    Ok(())
}

/// Normalized problem: `gamma[i][j]` is the SNR UE j would see from BS i at
/// full power over the full band, `rate[j]` the demand in bit/s/Hz.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Instance {
    gamma: Vec<Vec<f64>>,
    rate: Vec<f64>,
}

impl Instance {
    pub fn new(gamma: Vec<Vec<f64>>, rate: Vec<f64>) -> Result<Self> {
        let m = gamma.len();
        let n = rate.len();
        if m == 0 || n == 0 {
            return Err(Error::InvalidInput("need at least one BS and one UE".into()));
        }
        check_shape(&gamma, m, n, "gamma")?;
        if gamma.iter().flatten().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::InvalidInput("gamma entries must be finite and >= 0".into()));
        }
        if rate.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidInput("rates must be positive and finite".into()));
        }
        for j in 0..n {
            if gamma.iter().all(|row| row[j] <= 0.0) {
                return Err(Error::UncoverableUe { ue: j });
            }
        }
        Ok(Self { gamma, rate })
    }

    pub fn num_bs(&self) -> usize {
        self.gamma.len()
    }

    pub fn num_ue(&self) -> usize {
        self.rate.len()
    }

    pub fn gamma(&self, bs: usize, ue: usize) -> f64 {
        self.gamma[bs][ue]
    }

    pub fn gamma_matrix(&self) -> &[Vec<f64>] {
        &self.gamma
    }

    pub fn rate(&self, ue: usize) -> f64 {
        self.rate[ue]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rate
    }

    /// Same channel, demands multiplied by `factor`.
    pub fn with_scaled_rates(&self, factor: f64) -> Result<Self> {
        Self::new(self.gamma.clone(), self.rate.iter().map(|r| r * factor).collect())
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            gamma: Vec<Vec<f64>>,
            rate: Vec<f64>,
        }
        let raw = Raw::deserialize(d)?;
        Instance::new(raw.gamma, raw.rate).map_err(serde::de::Error::custom)
    }
}

/// gamma_ij = p0 |H_ij|^2 / (n0 b0), R'_j = R_j / b0.
pub fn normalize(p: &PhysicalProblem) -> Result<Instance> {
    p.validate()?;
    let scale = p.p0 / (p.n0 * p.b0);
    let gamma = p
        .channel_gain
        .iter()
        .map(|row| row.iter().map(|g| g * scale).collect())
        .collect();
    let rate = p.rate_demand.iter().map(|r| r / p.b0).collect();
    Instance::new(gamma, rate)
}

/// Power and bandwidth ratios for every BS-UE link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// `x[i][j]`: fraction of BS i's budget spent on UE j.
    pub x: Vec<Vec<f64>>,
    /// `y[j]`: fraction of the band given to UE j.
    pub y: Vec<f64>,
    /// Total power ratio, the sum of all `x` entries.
    pub z: f64,
    pub feasible: bool,
}

impl Allocation {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>, feasible: bool) -> Self {
        let z = total_power(&x);
        Self { x, y, z, feasible }
    }

    /// Placeholder for "no allocation meets every constraint".
    pub fn infeasible(num_bs: usize, num_ue: usize) -> Self {
        Self {
            x: vec![vec![0.0; num_ue]; num_bs],
            y: vec![0.0; num_ue],
            z: f64::INFINITY,
            feasible: false,
        }
    }

    pub fn num_bs(&self) -> usize {
        self.x.len()
    }

    pub fn num_ue(&self) -> usize {
        self.y.len()
    }

    pub fn bs_power(&self, bs: usize) -> f64 {
        self.x[bs].iter().sum()
    }

    /// BSs with a non-zero share of UE `ue`.
    pub fn serving(&self, ue: usize, zero: f64) -> Vec<usize> {
        (0..self.num_bs()).filter(|&i| self.x[i][ue].abs() >= zero).collect()
    }

    pub fn count_zeros(&self, zero: f64) -> usize {
        self.x.iter().flatten().filter(|v| v.abs() < zero).count()
    }

    pub fn multi_bs_ues(&self, zero: f64) -> Vec<usize> {
        (0..self.num_ue()).filter(|&j| self.serving(j, zero).len() >= 2).collect()
    }

    /// Checks every constraint of the normalized problem at tolerance `tol`.
    pub fn satisfies_constraints(&self, inst: &Instance, tol: &Tolerances) -> bool {
        let Ok(ev) = evaluate(inst, self) else {
            return false;
        };
        if self.x.iter().flatten().any(|v| *v < -tol.eq) {
            return false;
        }
        if self.y.iter().any(|v| *v < tol.y_min) {
            return false;
        }
        if ev.spectrum_residual.abs() > tol.eq {
            return false;
        }
        if ev.power_slacks.iter().any(|s| *s < -tol.eq) {
            return false;
        }
        (0..inst.num_ue()).all(|j| {
            let target = received_power(inst.rate(j), self.y[j]);
            ev.rate_residuals[j].abs() <= tol.rate * target.max(f64::MIN_POSITIVE)
        })
    }
}

pub(crate) fn total_power(x: &[Vec<f64>]) -> f64 {
    x.iter().flatten().sum()
}

/// Constraint residuals of an allocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// sum_i gamma_ij x_ij - (2^{R'_j/y_j} - 1) y_j.
    pub rate_residuals: Vec<f64>,
    /// 1 - sum_j x_ij.
    pub power_slacks: Vec<f64>,
    /// sum_j y_j - 1.
    pub spectrum_residual: f64,
    pub z: f64,
}

pub fn evaluate(inst: &Instance, alloc: &Allocation) -> Result<Evaluation> {
    let (m, n) = (inst.num_bs(), inst.num_ue());
    if alloc.y.len() != n || alloc.x.len() != m || alloc.x.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!(
            "allocation is {}x{}, instance is {m}x{n}",
            alloc.x.len(),
            alloc.y.len()
        )));
    }
    let rate_residuals = (0..n)
        .map(|j| {
            let received: f64 = (0..m).map(|i| inst.gamma(i, j) * alloc.x[i][j]).sum();
            let needed = if alloc.y[j] > 0.0 {
                received_power(inst.rate(j), alloc.y[j])
            } else {
                f64::INFINITY
            };
            received - needed
        })
        .collect();
    let power_slacks = alloc.x.iter().map(|row| 1.0 - row.iter().sum::<f64>()).collect();
    Ok(Evaluation {
        rate_residuals,
        power_slacks,
        spectrum_residual: alloc.y.iter().sum::<f64>() - 1.0,
        z: total_power(&alloc.x),
    })
}

/// Received SNR-power a UE needs on bandwidth ratio `y` to carry `rate`:
/// (2^{rate/y} - 1) y. Overflow maps to +inf.
pub fn received_power(rate: f64, y: f64) -> f64 {
    let t = rate * std::f64::consts::LN_2 / y;
    if t > MAX_EXPONENT {
        return f64::INFINITY;
    }
    t.exp_m1() * y
}

/// d/dy of [`received_power`]: 2^{r/y}(1 - r ln2 / y) - 1, always negative.
pub fn received_power_slope(rate: f64, y: f64) -> f64 {
    let t = rate * std::f64::consts::LN_2 / y;
    if t > MAX_EXPONENT {
        return f64::NEG_INFINITY;
    }
    -marginal_gap(t)
}

/// h(t) = 1 + (t - 1) e^t, so that f'(y) = -h(r ln2 / y). Increasing on t > 0
/// with h(0) = 0.
pub(crate) fn marginal_gap(t: f64) -> f64 {
    if t < 1e-3 {
        // series: sum_{k>=2} (k-1) t^k / k!
        let t2 = t * t;
        t2 * (0.5 + t * (1.0 / 3.0 + t * (1.0 / 8.0 + t * (1.0 / 30.0))))
    } else {
        1.0 + (t - 1.0) * t.exp()
    }
}

/// Power ratio BS-alone service costs: x = (2^{r/y} - 1) y / gamma.
pub fn required_power(rate: f64, y: f64, gamma: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("bandwidth ratio must be positive, got {y}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    if !(rate > 0.0) {
        return Err(Error::Domain(format!("rate must be positive, got {rate}")));
    }
    Ok(received_power(rate, y) / gamma)
}

/// Analytic derivative of [`required_power`] with respect to `y`.
pub fn required_power_slope(rate: f64, y: f64, gamma: f64) -> Result<f64> {
    required_power(rate, y, gamma)?;
    Ok(received_power_slope(rate, y) / gamma)
}

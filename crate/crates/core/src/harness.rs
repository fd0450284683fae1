//! Monte-Carlo simulation of the cooperative cell-edge scenario, the
//! equal-bandwidth and equal-power baselines, and result tables.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jspa;
use crate::model::{normalize, received_power, Allocation, Instance, PhysicalProblem};
use crate::oracle::min_power_at;

/// Geometry, radio constants and Monte-Carlo settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub num_bs: usize,
    pub num_ue: usize,
    /// Radius of the circle the BSs sit on, in meters.
    pub cell_radius_m: f64,
    /// UEs fall uniformly in the disk of radius `cell_radius_m - inner_radius_m`.
    pub inner_radius_m: f64,
    pub pathloss_a_db: f64,
    pub pathloss_b: f64,
    pub noise_dbm_hz: f64,
    pub p0_watts: f64,
    pub b0_hz: f64,
    pub snapshots: usize,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            num_bs: 2,
            num_ue: 20,
            cell_radius_m: 1000.0,
            inner_radius_m: 600.0,
            pathloss_a_db: 128.1,
            pathloss_b: 37.6,
            noise_dbm_hz: -174.0,
            p0_watts: 1.0,
            b0_hz: 1e7,
            snapshots: 1000,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.num_bs == 0 || self.num_ue == 0 {
            return bad(format!("need at least one BS and one UE, got {}x{}", self.num_bs, self.num_ue));
        }
        if !(self.inner_radius_m > 0.0 && self.inner_radius_m < self.cell_radius_m) {
            return bad(format!(
                "inner radius {} must lie in (0, {})",
                self.inner_radius_m, self.cell_radius_m
            ));
        }
        if !(self.p0_watts > 0.0 && self.b0_hz > 0.0) {
            return bad("P0 and B0 must be positive".into());
        }
        if self.snapshots == 0 {
            return bad("need at least one snapshot".into());
        }
        Ok(())
    }

    /// Path loss in dB at `d_m` meters.
    pub fn pathloss_db(&self, d_m: f64) -> f64 {
        self.pathloss_a_db + self.pathloss_b * (d_m / 1000.0).log10()
    }

    /// Noise power spectral density in W/Hz.
    pub fn noise_w_hz(&self) -> f64 {
        10f64.powf((self.noise_dbm_hz - 30.0) / 10.0)
    }

    pub fn bs_positions(&self) -> Vec<(f64, f64)> {
        (0..self.num_bs)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / self.num_bs as f64;
                (self.cell_radius_m * a.cos(), self.cell_radius_m * a.sin())
            })
            .collect()
    }
}

/// One channel realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub positions: Vec<(f64, f64)>,
    /// `|H_ij|^2`, path loss times fading.
    pub gains: Vec<Vec<f64>>,
    /// Normalized instance carrying the base demand as rates.
    pub instance: Instance,
    /// `R'^0_j`: normalized rate under equal spectrum and power.
    pub demand_base: Vec<f64>,
}

/// Draws a snapshot: UE positions, then one fading value per link.
pub fn generate_snapshot(sc: &Scenario, rng: &mut impl Rng) -> Result<Snapshot> {
    sc.validate()?;
    let zone = sc.cell_radius_m - sc.inner_radius_m;
    let positions: Vec<(f64, f64)> = (0..sc.num_ue)
        .map(|_| {
            let r = zone * rng.gen::<f64>().sqrt();
            let a = 2.0 * PI * rng.gen::<f64>();
            (r * a.cos(), r * a.sin())
        })
        .collect();
    let bss = sc.bs_positions();
    let gains: Vec<Vec<f64>> = bss
        .iter()
        .map(|b| {
            positions
                .iter()
                .map(|u| {
                    let d = (b.0 - u.0).hypot(b.1 - u.1);
                    let fading: f64 = Exp1.sample(rng);
                    10f64.powf(-sc.pathloss_db(d) / 10.0) * fading
                })
                .collect()
        })
        .collect();
    let gamma_scale = sc.p0_watts / (sc.noise_w_hz() * sc.b0_hz);
    let gamma: Vec<Vec<f64>> = gains.iter().map(|r| r.iter().map(|g| g * gamma_scale).collect()).collect();
    let demand_base = esp_rates(&gamma);
    let physical = PhysicalProblem {
        num_bs: sc.num_bs,
        num_ue: sc.num_ue,
        p0: sc.p0_watts,
        b0: sc.b0_hz,
        n0: sc.noise_w_hz(),
        channel_gain: gains.clone(),
        rate_demand: demand_base.iter().map(|r| r * sc.b0_hz).collect(),
    };
    let instance = normalize(&physical)?;
    Ok(Snapshot {
        positions,
        gains,
        instance,
        demand_base,
    })
}

fn esp_rates(gamma: &[Vec<f64>]) -> Vec<f64> {
    let n = gamma.first().map_or(0, Vec::len);
    (0..n)
        .map(|j| {
            let snr: f64 = gamma.iter().map(|r| r[j]).sum();
            snr.ln_1p() / std::f64::consts::LN_2 / n as f64
        })
        .collect()
}

/// Normalized rate each UE gets when every BS spreads its power equally over
/// the UEs and each UE holds `1/N` of the band.
pub fn esp_reference(snap: &Snapshot) -> Vec<f64> {
    esp_rates(snap.instance.gamma_matrix())
}

/// Minimum power with every UE held at `1/N` of the band.
pub fn jmpc_baseline(inst: &Instance) -> Allocation {
    let n = inst.num_ue();
    min_power_at(inst, &vec![1.0 / n as f64; n]).unwrap_or_else(|| Allocation::infeasible(inst.num_bs(), n))
}

/// Equal bandwidth with every BS sending the same power to a UE, scaled
/// down until the UE's rate is exactly met.
pub fn esp_allocation(inst: &Instance) -> Allocation {
    let (m, n) = (inst.num_bs(), inst.num_ue());
    let y = 1.0 / n as f64;
    let mut x = vec![vec![0.0; n]; m];
    let mut feasible = true;
    for j in 0..n {
        let snr: f64 = (0..m).map(|i| inst.gamma(i, j)).sum();
        let share = received_power(inst.rate(j), y) / snr;
        feasible &= share * n as f64 <= 1.0 + 1e-12;
        for row in x.iter_mut() {
            row[j] = share;
        }
    }
    feasible &= x.iter().all(|r| r.iter().sum::<f64>() <= 1.0 + 1e-9);
    if !feasible {
        return Allocation::infeasible(m, n);
    }
    Allocation::new(x, vec![y; n], true)
}

/// Algorithms compared by the simulation, in output order.
pub const ALGORITHMS: [&str; 3] = ["jspa", "jmpc", "esp"];

/// Per-snapshot outcome at one demand scale; `None` marks a loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub epsilon: f64,
    pub snapshot: usize,
    /// Z per algorithm, in [`ALGORITHMS`] order.
    pub z: [Option<f64>; 3],
}

/// One line of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub epsilon: f64,
    pub algo: String,
    /// Mean Z over feasible snapshots; NaN when there are none.
    pub mean_z: f64,
    /// Normal-approximation 95% half-width of `mean_z`.
    pub ci95: f64,
    pub loss_rate: f64,
    pub n_snapshots: usize,
    pub n_feasible: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub scenario: Scenario,
    pub rows: Vec<SummaryRow>,
    pub records: Vec<SnapshotRecord>,
}

impl McSummary {
    pub fn row(&self, epsilon: f64, algo: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.epsilon == epsilon && r.algo == algo)
    }
}

/// RNG for snapshot `index`: one seed, one stream per snapshot.
pub fn snapshot_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn solve_all(inst: &Instance) -> [Option<f64>; 3] {
    let jspa = match jspa::optimize(inst) {
        Ok(a) if a.feasible => Some(a.z),
        Ok(_) => None,
        Err(e) => {
            log::warn!("jspa failed, counted as loss: {e}");
            None
        }
    };
    let jmpc = Some(jmpc_baseline(inst)).filter(|a| a.feasible).map(|a| a.z);
    let esp = Some(esp_allocation(inst)).filter(|a| a.feasible).map(|a| a.z);
    [jspa, jmpc, esp]
}

/// Runs every algorithm on `sc.snapshots` snapshots at each demand scale.
/// Snapshots are shared across scales and algorithms. Work is spread over
/// the rayon pool; results do not depend on the thread count.
pub fn run_monte_carlo(sc: &Scenario, eps_list: &[f64]) -> Result<McSummary> {
    sc.validate()?;
    if eps_list.is_empty() {
        return Err(Error::InvalidInput("empty epsilon list".into()));
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {e}")));
    }
    let per_snapshot: Vec<Vec<SnapshotRecord>> = (0..sc.snapshots)
        .into_par_iter()
        .map(|k| {
            let snap = generate_snapshot(sc, &mut snapshot_rng(sc.seed, k))?;
            eps_list
                .iter()
                .map(|&eps| {
                    let inst = snap.instance.with_scaled_rates(eps)?;
                    Ok(SnapshotRecord {
                        epsilon: eps,
                        snapshot: k,
                        z: solve_all(&inst),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(eps_list.len() * ALGORITHMS.len());
    for (e, &eps) in eps_list.iter().enumerate() {
        for (a, algo) in ALGORITHMS.iter().enumerate() {
            let zs: Vec<f64> = per_snapshot.iter().filter_map(|recs| recs[e].z[a]).collect();
            rows.push(summarize(eps, algo, &zs, sc.snapshots));
        }
    }
    let records = per_snapshot.into_iter().flatten().collect();
    Ok(McSummary {
        scenario: sc.clone(),
        rows,
        records,
    })
}

fn summarize(epsilon: f64, algo: &str, zs: &[f64], total: usize) -> SummaryRow {
    let n = zs.len();
    let mean = if n == 0 { f64::NAN } else { zs.iter().sum::<f64>() / n as f64 };
    let ci95 = if n < 2 {
        0.0
    } else {
        let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * var.sqrt() / (n as f64).sqrt()
    };
    SummaryRow {
        epsilon,
        algo: algo.to_string(),
        mean_z: mean,
        ci95,
        loss_rate: (total - n) as f64 / total as f64,
        n_snapshots: total,
        n_feasible: n,
    }
}

/// Output table format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidInput(format!("unknown format {other:?}"))),
        }
    }
}

/// Rounds to 9 significant digits.
pub fn round9(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

pub const CSV_HEADER: &str = "epsilon,algo,mean_z,ci95,loss_rate,n_snapshots,n_feasible";

pub fn to_csv(summary: &McSummary) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &summary.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            round9(r.epsilon),
            r.algo,
            round9(r.mean_z),
            round9(r.ci95),
            round9(r.loss_rate),
            r.n_snapshots,
            r.n_feasible
        );
    }
    out
}

#[derive(Serialize)]
struct JsonRow<'a> {
    epsilon: f64,
    algo: &'a str,
    mean_z: Option<f64>,
    ci95: Option<f64>,
    loss_rate: f64,
    n_snapshots: usize,
    n_feasible: usize,
}

pub fn to_json(summary: &McSummary) -> String {
    let finite = |v: f64| v.is_finite().then(|| round9(v));
    let rows: Vec<JsonRow> = summary
        .rows
        .iter()
        .map(|r| JsonRow {
            epsilon: round9(r.epsilon),
            algo: &r.algo,
            mean_z: finite(r.mean_z),
            ci95: finite(r.ci95),
            loss_rate: round9(r.loss_rate),
            n_snapshots: r.n_snapshots,
            n_feasible: r.n_feasible,
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("rows serialize");
    s.push('\n');
    s
}

/// Writes the summary table to `path`.
pub fn emit(summary: &McSummary, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => to_csv(summary),
        Format::Json => to_json(summary),
    };
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

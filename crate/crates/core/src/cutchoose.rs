//! Monte-Carlo harness for cut-and-choose certification of untrusted boxes.
//!
//! A client orders `n` boxes claimed to equal a target device, tests
//! `k = ⌊(n−1)/2⌋` of them chosen at random against the target correlation,
//! and — if none fails — draws one final sample from a random untested box.
//! The adversary supplies the boxes and may react at handover, but cannot
//! touch the Alice half of a box the client already holds; the harness
//! enforces that as a hard error rather than a statistic.
//!
//! The simulation measures what such certification can and cannot give:
//! statistical tests only pin down correlations, so a box rebuilt behind a
//! local change passes every test yet sits far from the target realization
//! ([`IdenticalTamper`]), and a single forged box is either caught in testing
//! or consumed with probability 1/(n−k), visibly biasing the output
//! ([`FinalBoxSwap`]). Reports carry Wilson intervals so those effects can be
//! separated from Monte-Carlo noise.

use rand::Rng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{
    CorrError, Correlation, DeviceSpec, IsometryPair, check_closeness, compute_correlation,
};
use crate::linalg::{C64, CMatrix, CVector, LinalgError};
use crate::random::{sample_discrete, stream_rng};

/// Two-sided 95% normal quantile used for every Wilson interval.
pub const WILSON_Z: f64 = 1.959963984540054;

/// Max tolerated drift of the Alice half of a box between creation and
/// handover; more is a locality violation, not a statistical event.
pub const LOCALITY_TOL: f64 = 1e-9;

/// Max-abs deviation below which a supplied box counts as a target replica.
const REPLICA_TOL: f64 = 1e-9;

/// Calibration RNG streams live far away from per-trial streams.
const CALIBRATION_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Corr(#[from] CorrError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid simulation config: {0}")]
    BadConfig(String),
    #[error("adversary `{name}` broke the interface: {detail}")]
    BadAdversary { name: String, detail: String },
    #[error(
        "locality violation at trial {trial}, box {box_index}: \
         Alice-side deviation {deviation:e} exceeds {tol:e}"
    )]
    Locality { trial: usize, box_index: usize, deviation: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, SimError>;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Parameters of one simulation campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Boxes per trial (n ≥ 2); ⌊(n−1)/2⌋ of them get tested.
    pub n_boxes: usize,
    /// Samples drawn per input pair when testing one box.
    pub shots_per_input: usize,
    /// Independent trials in the campaign.
    pub trials: usize,
    /// Input pair (x*, y*) used for the final certified sample.
    pub final_inputs: (usize, usize),
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { n_boxes: 8, shots_per_input: 400, trials: 2000, final_inputs: (0, 0) }
    }
}

impl SimConfig {
    /// Number of boxes opened for testing: ⌊(n−1)/2⌋.
    pub fn k_tested(&self) -> usize {
        (self.n_boxes - 1) / 2
    }

    fn validate(&self, target: &DeviceSpec) -> Result<()> {
        if self.n_boxes < 2 || self.n_boxes > 1024 {
            return Err(SimError::BadConfig(format!(
                "n_boxes must be in [2, 1024], got {}",
                self.n_boxes
            )));
        }
        if self.shots_per_input == 0 || self.shots_per_input > 10_000_000 {
            return Err(SimError::BadConfig(format!(
                "shots_per_input must be in [1, 1e7], got {}",
                self.shots_per_input
            )));
        }
        if self.trials == 0 || self.trials > 1_000_000 {
            return Err(SimError::BadConfig(format!(
                "trials must be in [1, 1e6], got {}",
                self.trials
            )));
        }
        let (x, y) = self.final_inputs;
        if x >= target.nx() || y >= target.ny() {
            return Err(SimError::BadConfig(format!(
                "final inputs ({x}, {y}) out of range for a {}×{}-input target",
                target.nx(),
                target.ny()
            )));
        }
        Ok(())
    }
}

/// How the acceptance threshold τ is calibrated on honest boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Honest test-phase rehearsals to run.
    pub runs: usize,
    /// Quantile of the rehearsal maxima taken as τ (honest trials abort with
    /// probability about 1 − quantile).
    pub quantile: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { runs: 400, quantile: 0.98 }
    }
}

// ---------------------------------------------------------------------------
// Adversaries
// ---------------------------------------------------------------------------

/// A box supplier. Implementations must be deterministic functions of the
/// RNG handed to them — the harness owns all seeding.
pub trait Adversary: Sync {
    fn name(&self) -> &str;

    /// Produces the `n` boxes for one trial. Every box must match the
    /// target's input/outcome counts (internal dimensions are free).
    fn create_devices(&self, rng: &mut ChaCha8Rng, n: usize, target: &DeviceSpec)
    -> Vec<DeviceSpec>;

    /// Called once the certified box is picked, with the tested indices now
    /// public. May return a replacement for the certified box — the harness
    /// then checks the Alice half did not change.
    fn on_handover(
        &self,
        rng: &mut ChaCha8Rng,
        certified: &DeviceSpec,
        certified_index: usize,
        tested: &[usize],
    ) -> Option<DeviceSpec> {
        let _ = (rng, certified, certified_index, tested);
        None
    }
}

/// Supplies exactly what was ordered.
pub struct HonestAdversary;

impl Adversary for HonestAdversary {
    fn name(&self) -> &str {
        "honest"
    }

    fn create_devices(
        &self,
        _rng: &mut ChaCha8Rng,
        n: usize,
        target: &DeviceSpec,
    ) -> Vec<DeviceSpec> {
        vec![target.clone(); n]
    }
}

/// Plants one forged box (state pinned to |e₀⟩⊗|e₀⟩, target measurements) at
/// a random position. The forgery fails testing outright, so each trial ends
/// in either an abort or — with probability 1/(n−k) among survivors — a
/// certified box that always outputs (0, 0).
pub struct FinalBoxSwap;

/// A target-shaped box whose state is the first basis vector: against
/// computational measurements it deterministically answers (0, 0).
fn pinned_box(target: &DeviceSpec) -> DeviceSpec {
    DeviceSpec::new(
        target.dim_a(),
        target.dim_b(),
        CVector::basis(target.dim_a() * target.dim_b(), 0),
        target.alice_meas().to_vec(),
        target.bob_meas().to_vec(),
    )
    .expect("target measurement families stay valid on a basis state")
}

impl Adversary for FinalBoxSwap {
    fn name(&self) -> &str {
        "final-box-swap"
    }

    fn create_devices(
        &self,
        rng: &mut ChaCha8Rng,
        n: usize,
        target: &DeviceSpec,
    ) -> Vec<DeviceSpec> {
        let mut boxes = vec![target.clone(); n];
        let forged = rng.gen_range(0..n);
        boxes[forged] = pinned_box(target);
        boxes
    }
}

/// Rebuilds every box behind a discrete-Fourier rotation of the Alice side
/// (state and measurements together), leaving the correlation — and hence
/// every statistical test — exactly as the target's, while the realization
/// sits a fixed trace distance away under the identity isometry.
pub struct IdenticalTamper;

fn dft_unitary(d: usize) -> CMatrix {
    let scale = 1.0 / (d as f64).sqrt();
    CMatrix::from_fn(d, d, |j, k| {
        let phase = 2.0 * std::f64::consts::PI * (j * k) as f64 / d as f64;
        C64::new(phase.cos() * scale, phase.sin() * scale)
    })
}

fn rotate_alice_side(target: &DeviceSpec) -> DeviceSpec {
    let u = dft_unitary(target.dim_a());
    let lifted = u.tensor(&CMatrix::identity(target.dim_b())).expect("small");
    let state = lifted.apply(target.state()).expect("shape");
    let alice = target
        .alice_meas()
        .iter()
        .map(|family| {
            family
                .iter()
                .map(|m| u.matmul(m).expect("shape").matmul(&u.dagger()).expect("shape"))
                .collect()
        })
        .collect();
    DeviceSpec::new(target.dim_a(), target.dim_b(), state, alice, target.bob_meas().to_vec())
        .expect("a unitary rotation preserves validity")
}

impl Adversary for IdenticalTamper {
    fn name(&self) -> &str {
        "identical-tamper"
    }

    fn create_devices(
        &self,
        _rng: &mut ChaCha8Rng,
        n: usize,
        target: &DeviceSpec,
    ) -> Vec<DeviceSpec> {
        vec![rotate_alice_side(target); n]
    }
}

/// Tries to swap the certified box for a forged one *after* learning which
/// boxes were tested. That changes the Alice half the client already holds,
/// so the harness must refuse the run.
pub struct LocalityViolator;

impl Adversary for LocalityViolator {
    fn name(&self) -> &str {
        "handover-violator"
    }

    fn create_devices(
        &self,
        _rng: &mut ChaCha8Rng,
        n: usize,
        target: &DeviceSpec,
    ) -> Vec<DeviceSpec> {
        vec![target.clone(); n]
    }

    fn on_handover(
        &self,
        _rng: &mut ChaCha8Rng,
        certified: &DeviceSpec,
        _certified_index: usize,
        _tested: &[usize],
    ) -> Option<DeviceSpec> {
        Some(pinned_box(certified))
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Wilson score interval for a binomial proportion at 95% confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilsonInterval {
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub successes: usize,
    pub samples: usize,
}

impl WilsonInterval {
    /// Whether `p` lies outside the interval.
    pub fn excludes(&self, p: f64) -> bool {
        p < self.lo || p > self.hi
    }

    /// Whether this interval sits entirely above `other`.
    pub fn lies_above(&self, other: &WilsonInterval) -> bool {
        self.lo > other.hi
    }
}

/// Wilson score interval for `successes` out of `samples` (samples ≥ 1).
pub fn wilson(successes: usize, samples: usize) -> WilsonInterval {
    debug_assert!(samples > 0 && successes <= samples);
    let n = samples as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    WilsonInterval {
        p_hat: p,
        lo: (center - half).max(0.0),
        hi: (center + half).min(1.0),
        successes,
        samples,
    }
}

/// One trial's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub aborted: bool,
    /// First tested box whose statistic exceeded τ.
    pub failed_box: Option<usize>,
    /// Largest test statistic seen across the tested boxes.
    pub max_stat: f64,
    pub certified: Option<usize>,
    /// Whether the certified box (as created) deviates from the target.
    pub certified_tampered: bool,
    /// Final sample (a, b) from the certified box, when not aborted.
    pub outcome: Option<(usize, usize)>,
    /// Identity-isometry closeness of the as-created certified box to the
    /// target (skipped when local dimensions differ).
    pub delta_hat: Option<f64>,
}

/// Campaign-level summary. `agreement` counts a = b and `alice_zero` counts
/// a = 0, both among completed (non-aborted) trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub adversary: String,
    pub n_boxes: usize,
    pub k_tested: usize,
    pub shots_per_input: usize,
    pub trials: usize,
    pub seed: u64,
    pub tau: f64,
    pub aborts: usize,
    pub completed: usize,
    pub abort_rate: WilsonInterval,
    pub agreement: Option<WilsonInterval>,
    pub alice_zero: Option<WilsonInterval>,
    /// Completed trials whose certified box was not a target replica.
    pub tampered_certified: usize,
    /// Worst identity-isometry closeness among certified boxes.
    pub delta_hat_max: Option<f64>,
    pub records: Vec<TrialRecord>,
}

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

/// The ideal correlated-coin target: an EPR pair measured in the
/// computational basis on both sides, one input each — outcomes agree and
/// each side is an unbiased bit.
pub fn coin_device() -> DeviceSpec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut state = CVector::zeros(4);
    state.data_mut()[0] = C64::new(s, 0.0);
    state.data_mut()[3] = C64::new(s, 0.0);
    let proj = |i: usize, d: usize| {
        let e = CVector::basis(d, i);
        e.outer(&e)
    };
    DeviceSpec::new(2, 2, state, vec![vec![proj(0, 2), proj(1, 2)]], vec![vec![
        proj(0, 2),
        proj(1, 2),
    ]])
    .expect("the coin device is valid")
}

/// Tests one box: draws `shots` samples per input pair from `box_corr` and
/// returns the largest absolute deviation of the empirical table from the
/// target correlation.
fn empirical_stat(
    rng: &mut ChaCha8Rng,
    box_corr: &Correlation,
    target_corr: &Correlation,
    shots: usize,
) -> f64 {
    let (nx, ny) = (target_corr.nx(), target_corr.ny());
    let (na, nb) = (target_corr.na(), target_corr.nb());
    let mut worst = 0.0f64;
    for x in 0..nx {
        for y in 0..ny {
            let probs: Vec<f64> =
                (0..na * nb).map(|k| box_corr.p(x, y, k / nb, k % nb)).collect();
            let mut counts = vec![0usize; na * nb];
            for _ in 0..shots {
                counts[sample_discrete(rng, &probs)] += 1;
            }
            for (k, &c) in counts.iter().enumerate() {
                let dev = (c as f64 / shots as f64 - target_corr.p(x, y, k / nb, k % nb)).abs();
                worst = worst.max(dev);
            }
        }
    }
    worst
}

/// Calibrates the acceptance threshold τ as a quantile of the test-phase
/// maximum statistic over honest boxes. With `k_tested` = 0 no test ever
/// runs and τ is +∞.
pub fn calibrate_tau(
    target: &DeviceSpec,
    cfg: &SimConfig,
    cal: &CalibrationConfig,
    seed: u64,
) -> Result<f64> {
    cfg.validate(target)?;
    if !(cal.quantile > 0.0 && cal.quantile < 1.0) {
        return Err(SimError::BadConfig(format!(
            "calibration quantile must be in (0, 1), got {}",
            cal.quantile
        )));
    }
    if cal.runs == 0 || cal.runs > 1_000_000 {
        return Err(SimError::BadConfig(format!(
            "calibration runs must be in [1, 1e6], got {}",
            cal.runs
        )));
    }
    let k = cfg.k_tested();
    if k == 0 {
        return Ok(f64::INFINITY);
    }
    let corr = compute_correlation(target)?;
    let mut maxima: Vec<f64> = (0..cal.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = stream_rng(seed, CALIBRATION_STREAM_BASE + run as u64);
            let mut worst = 0.0f64;
            for _ in 0..k {
                worst = worst.max(empirical_stat(&mut rng, &corr, &corr, cfg.shots_per_input));
            }
            worst
        })
        .collect();
    maxima.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    let idx = ((cal.quantile * cal.runs as f64).ceil() as usize).clamp(1, cal.runs) - 1;
    Ok(maxima[idx])
}

fn is_target_replica(spec: &DeviceSpec, target: &DeviceSpec) -> bool {
    if spec.dim_a() != target.dim_a() || spec.dim_b() != target.dim_b() {
        return false;
    }
    let state_dev = spec
        .state()
        .data()
        .iter()
        .zip(target.state().data())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    if state_dev > REPLICA_TOL {
        return false;
    }
    for (ours, theirs) in [
        (spec.alice_meas(), target.alice_meas()),
        (spec.bob_meas(), target.bob_meas()),
    ] {
        for (fam_a, fam_b) in ours.iter().zip(theirs) {
            for (m_a, m_b) in fam_a.iter().zip(fam_b) {
                if m_a.sub(m_b).map(|d| d.max_abs()).unwrap_or(f64::INFINITY) > REPLICA_TOL {
                    return false;
                }
            }
        }
    }
    true
}

/// Largest Alice-side deviation between a box as created and as handed over.
fn alice_side_deviation(before: &DeviceSpec, after: &DeviceSpec) -> f64 {
    if before.dim_a() != after.dim_a() || before.nx() != after.nx() {
        return f64::INFINITY;
    }
    let (ra, rb) = match (before.alice_reduced(), after.alice_reduced()) {
        (Ok(ra), Ok(rb)) => (ra, rb),
        _ => return f64::INFINITY,
    };
    let mut dev = ra.sub(&rb).map(|d| d.max_abs()).unwrap_or(f64::INFINITY);
    for (fam_a, fam_b) in before.alice_meas().iter().zip(after.alice_meas()) {
        if fam_a.len() != fam_b.len() {
            return f64::INFINITY;
        }
        for (m_a, m_b) in fam_a.iter().zip(fam_b) {
            dev = dev.max(m_a.sub(m_b).map(|d| d.max_abs()).unwrap_or(f64::INFINITY));
        }
    }
    dev
}

fn shape_matches(spec: &DeviceSpec, target: &DeviceSpec) -> bool {
    spec.nx() == target.nx()
        && spec.ny() == target.ny()
        && spec.na() == target.na()
        && spec.nb() == target.nb()
}

fn run_trial(
    trial: usize,
    target: &DeviceSpec,
    target_corr: &Correlation,
    adversary: &dyn Adversary,
    cfg: &SimConfig,
    tau: f64,
    seed: u64,
) -> Result<TrialRecord> {
    let n = cfg.n_boxes;
    let k = cfg.k_tested();
    let mut rng = stream_rng(seed, trial as u64);

    let boxes = adversary.create_devices(&mut rng, n, target);
    if boxes.len() != n {
        return Err(SimError::BadAdversary {
            name: adversary.name().into(),
            detail: format!("returned {} boxes, expected {n}", boxes.len()),
        });
    }
    for (i, b) in boxes.iter().enumerate() {
        if !shape_matches(b, target) {
            return Err(SimError::BadAdversary {
                name: adversary.name().into(),
                detail: format!("box {i} does not match the target's input/outcome counts"),
            });
        }
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let (chosen, rest) = indices.partial_shuffle(&mut rng, k);
    let mut tested: Vec<usize> = chosen.to_vec();
    tested.sort_unstable();
    let mut untested: Vec<usize> = rest.to_vec();
    untested.sort_unstable();

    let mut max_stat = 0.0f64;
    let mut failed_box = None;
    for &i in &tested {
        let corr = compute_correlation(&boxes[i])?;
        let stat = empirical_stat(&mut rng, &corr, target_corr, cfg.shots_per_input);
        max_stat = max_stat.max(stat);
        if stat > tau && failed_box.is_none() {
            failed_box = Some(i);
        }
    }
    if failed_box.is_some() {
        return Ok(TrialRecord {
            trial,
            aborted: true,
            failed_box,
            max_stat,
            certified: None,
            certified_tampered: false,
            outcome: None,
            delta_hat: None,
        });
    }

    let certified = untested[rng.gen_range(0..untested.len())];
    let created = &boxes[certified];
    let handed = match adversary.on_handover(&mut rng, created, certified, &tested) {
        None => created.clone(),
        Some(replacement) => {
            let deviation = alice_side_deviation(created, &replacement);
            if deviation > LOCALITY_TOL {
                return Err(SimError::Locality {
                    trial,
                    box_index: certified,
                    deviation,
                    tol: LOCALITY_TOL,
                });
            }
            if !shape_matches(&replacement, target) {
                return Err(SimError::BadAdversary {
                    name: adversary.name().into(),
                    detail: format!("handover replaced box {certified} with a wrong-shape box"),
                });
            }
            replacement
        }
    };

    let (x, y) = cfg.final_inputs;
    let corr = compute_correlation(&handed)?;
    let probs: Vec<f64> = (0..target.na() * target.nb())
        .map(|kk| corr.p(x, y, kk / target.nb(), kk % target.nb()))
        .collect();
    let draw = sample_discrete(&mut rng, &probs);
    let outcome = (draw / target.nb(), draw % target.nb());

    let delta_hat = if created.dim_a() == target.dim_a() && created.dim_b() == target.dim_b() {
        let iso = IsometryPair::identity(target.dim_a(), target.dim_b());
        Some(check_closeness(created, target, &iso, 0.0)?.max_distance)
    } else {
        None
    };

    Ok(TrialRecord {
        trial,
        aborted: false,
        failed_box: None,
        max_stat,
        certified: Some(certified),
        certified_tampered: !is_target_replica(created, target),
        outcome: Some(outcome),
        delta_hat,
    })
}

/// Runs a full campaign: calibrates τ on honest boxes, then plays `trials`
/// independent rounds against the adversary. Each trial consumes its own RNG
/// stream, so reports are reproducible regardless of thread count.
pub fn run_simulation(
    target: &DeviceSpec,
    adversary: &dyn Adversary,
    cfg: &SimConfig,
    cal: &CalibrationConfig,
    seed: u64,
) -> Result<SimReport> {
    cfg.validate(target)?;
    let tau = calibrate_tau(target, cfg, cal, seed)?;
    let target_corr = compute_correlation(target)?;

    let records: Vec<TrialRecord> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(t, target, &target_corr, adversary, cfg, tau, seed))
        .collect::<Result<_>>()?;

    let aborts = records.iter().filter(|r| r.aborted).count();
    let completed = cfg.trials - aborts;
    let agree = records.iter().filter(|r| matches!(r.outcome, Some((a, b)) if a == b)).count();
    let zeros = records.iter().filter(|r| matches!(r.outcome, Some((a, _)) if a == 0)).count();
    let tampered_certified =
        records.iter().filter(|r| !r.aborted && r.certified_tampered).count();
    let delta_hat_max =
        records.iter().filter_map(|r| r.delta_hat).fold(None, |acc: Option<f64>, d| {
            Some(acc.map_or(d, |m| m.max(d)))
        });

    Ok(SimReport {
        adversary: adversary.name().into(),
        n_boxes: cfg.n_boxes,
        k_tested: cfg.k_tested(),
        shots_per_input: cfg.shots_per_input,
        trials: cfg.trials,
        seed,
        tau,
        aborts,
        completed,
        abort_rate: wilson(aborts, cfg.trials),
        agreement: (completed > 0).then(|| wilson(agree, completed)),
        alice_zero: (completed > 0).then(|| wilson(zeros, completed)),
        tampered_certified,
        delta_hat_max,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(trials: usize) -> SimConfig {
        SimConfig { n_boxes: 8, shots_per_input: 400, trials, final_inputs: (0, 0) }
    }

    #[test]
    fn wilson_interval_matches_hand_values() {
        let w = wilson(0, 10);
        assert!(w.lo.abs() <= 1e-12);
        assert!((w.hi - 0.27753).abs() <= 5e-4, "hi = {}", w.hi);
        let sym = wilson(50, 100);
        assert!((sym.p_hat - 0.5).abs() <= 1e-12);
        // At p̂ = ½ the Wilson center is exactly ½, so the interval is symmetric.
        assert!((sym.lo + sym.hi - 1.0).abs() <= 1e-12);
        assert!(sym.excludes(0.3) && !sym.excludes(0.5));
        assert!(wilson(99, 100).hi <= 1.0);
    }

    #[test]
    fn calibration_is_deterministic_and_sane() {
        let target = coin_device();
        let cfg = small_cfg(10);
        let cal = CalibrationConfig::default();
        let t1 = calibrate_tau(&target, &cfg, &cal, 7).unwrap();
        let t2 = calibrate_tau(&target, &cfg, &cal, 7).unwrap();
        assert_eq!(t1.to_bits(), t2.to_bits());
        // Binomial(400, ½) deviations: τ should be a few standard errors
        // (σ = 0.025) but nowhere near the forged box's 0.5.
        assert!(t1 > 0.02 && t1 < 0.15, "τ = {t1}");
    }

    #[test]
    fn honest_runs_rarely_abort_and_always_agree() {
        let target = coin_device();
        let report = run_simulation(
            &target,
            &HonestAdversary,
            &small_cfg(300),
            &CalibrationConfig::default(),
            11,
        )
        .unwrap();
        assert!(report.abort_rate.p_hat <= 0.08, "abort rate {}", report.abort_rate.p_hat);
        let agreement = report.agreement.expect("some trials completed");
        assert_eq!(agreement.successes, agreement.samples, "the coin never disagrees");
        // A 95% interval misses the truth on ~5% of seeds, so bound the
        // point estimate instead: 0.1 ≈ 3.5σ at 300 trials.
        let zero = report.alice_zero.expect("completed");
        assert!((zero.p_hat - 0.5).abs() <= 0.1, "honest bias estimate {:?}", zero);
        assert_eq!(report.tampered_certified, 0);
        assert!(report.delta_hat_max.unwrap_or(1.0) <= 1e-9);
    }

    #[test]
    fn forged_box_is_either_caught_or_biases_the_coin() {
        let target = coin_device();
        let report = run_simulation(
            &target,
            &FinalBoxSwap,
            &small_cfg(1200),
            &CalibrationConfig::default(),
            13,
        )
        .unwrap();
        // The forgery is tested (and certainly fails) with probability
        // k/n = 3/8, so aborts are far above the honest ~2%.
        assert!(report.abort_rate.lo > 0.2, "abort CI {:?}", report.abort_rate);
        // Among survivors the forgery is certified with probability
        // 1/(n−k) = 1/5, pushing p(a = 0) from ½ to ≈ 0.6.
        let zero = report.alice_zero.expect("completed trials exist");
        assert!(zero.excludes(0.5) && zero.lo > 0.5, "bias CI {zero:?}");
        assert!(report.tampered_certified > 0);
        // The forged box sits at identity-isometry distance ¼ from the coin.
        let dh = report.delta_hat_max.expect("certified boxes were compared");
        assert!((dh - 0.25).abs() <= 1e-9, "δ̂ = {dh}");
    }

    #[test]
    fn rotated_replicas_pass_every_test_yet_sit_far_from_the_target() {
        let target = coin_device();
        let report = run_simulation(
            &target,
            &IdenticalTamper,
            &small_cfg(300),
            &CalibrationConfig::default(),
            17,
        )
        .unwrap();
        // Correlations are untouched, so statistics look honest...
        assert!(report.abort_rate.p_hat <= 0.08, "abort rate {}", report.abort_rate.p_hat);
        let agreement = report.agreement.expect("completed");
        assert_eq!(agreement.successes, agreement.samples);
        assert_eq!(report.tampered_certified, report.completed);
        // ...while every certified box is √2/4 away under the identity.
        let dh = report.delta_hat_max.expect("certified boxes were compared");
        assert!((dh - std::f64::consts::SQRT_2 / 4.0).abs() <= 1e-9, "δ̂ = {dh}");
    }

    #[test]
    fn handover_tampering_is_a_hard_error() {
        let target = coin_device();
        let err = run_simulation(
            &target,
            &LocalityViolator,
            &small_cfg(20),
            &CalibrationConfig::default(),
            19,
        )
        .unwrap_err();
        assert!(matches!(err, SimError::Locality { .. }), "got {err}");
    }

    #[test]
    fn reports_are_bit_identical_across_runs() {
        let target = coin_device();
        let cfg = small_cfg(60);
        let cal = CalibrationConfig::default();
        let a = run_simulation(&target, &FinalBoxSwap, &cfg, &cal, 23).unwrap();
        let b = run_simulation(&target, &FinalBoxSwap, &cfg, &cal, 23).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn misbehaving_suppliers_are_rejected() {
        struct ShortSupply;
        impl Adversary for ShortSupply {
            fn name(&self) -> &str {
                "short-supply"
            }
            fn create_devices(
                &self,
                _rng: &mut ChaCha8Rng,
                n: usize,
                target: &DeviceSpec,
            ) -> Vec<DeviceSpec> {
                vec![target.clone(); n - 1]
            }
        }
        let target = coin_device();
        let err = run_simulation(
            &target,
            &ShortSupply,
            &small_cfg(5),
            &CalibrationConfig::default(),
            29,
        )
        .unwrap_err();
        assert!(matches!(err, SimError::BadAdversary { .. }), "got {err}");

        let bad = SimConfig { final_inputs: (3, 0), ..small_cfg(5) };
        assert!(matches!(
            run_simulation(&target, &HonestAdversary, &bad, &CalibrationConfig::default(), 31),
            Err(SimError::BadConfig(_))
        ));
    }
}

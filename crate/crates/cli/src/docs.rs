//! JSON document schema shared by every subcommand.
//!
//! Every input document is a single JSON object carrying a `version` field
//! (currently 1) and a `kind` tag naming the payload; the payload fields sit
//! beside the envelope fields in the same object. Complex scalars are
//! two-element `[re, im]` arrays and matrices are row-major nested arrays.
//! Documents are converted into core types through the core constructors, so
//! no analysis ever runs on a payload the owning module would reject.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use qsample_core::cheat::CheatError;
use qsample_core::correlation::{
    Correlation, CorrError, DeviceSpec, IsometryPair, JointDist, MultipartyDist,
};
use qsample_core::cutchoose::{
    Adversary, CalibrationConfig, FinalBoxSwap, HonestAdversary, IdenticalTamper,
    LocalityViolator, SimConfig, SimError, coin_device,
};
use qsample_core::linalg::{C64, CMatrix, CVector};
use qsample_core::protocol::{Move, Party, Protocol, ProtocolError};

/// Schema version accepted on input and stamped on every report.
pub const SCHEMA_VERSION: u32 = 1;

/// Top-level failure classes, mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed, or invalid input: exit code 1.
    #[error("{0}")]
    Input(String),
    /// Analysis started but could not finish (solver failure, numerical
    /// certificate violation, output I/O): exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<CorrError> for CliError {
    fn from(e: CorrError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<CheatError> for CliError {
    fn from(e: CheatError) -> Self {
        match e {
            CheatError::BadOutcome { .. }
            | CheatError::TooManyOutcomes { .. }
            | CheatError::Protocol(_) => CliError::Input(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Corr(_) | SimError::BadConfig(_) | SimError::BadAdversary { .. } => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Envelope
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct Envelope {
    version: u32,
    kind: String,
}

fn read_value(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{} is not valid JSON: {e}", path.display())))
}

/// Checks the envelope and returns the document kind.
fn envelope(value: &serde_json::Value, path: &Path) -> Result<String> {
    let env: Envelope = serde_json::from_value(value.clone()).map_err(|e| {
        CliError::Input(format!("{}: missing or malformed version/kind: {e}", path.display()))
    })?;
    if env.version != SCHEMA_VERSION {
        return Err(CliError::Input(format!(
            "{}: unsupported schema version {} (this build reads version {SCHEMA_VERSION})",
            path.display(),
            env.version
        )));
    }
    Ok(env.kind)
}

fn expect_kind(value: &serde_json::Value, path: &Path, wanted: &str) -> Result<()> {
    let kind = envelope(value, path)?;
    if kind != wanted {
        return Err(CliError::Input(format!(
            "{}: document kind is `{kind}`, expected `{wanted}`",
            path.display()
        )));
    }
    Ok(())
}

fn payload<T: serde::de::DeserializeOwned>(value: serde_json::Value, path: &Path) -> Result<T> {
    serde_json::from_value(value)
        .map_err(|e| CliError::Input(format!("{}: malformed payload: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Payload schemas and conversions
// ---------------------------------------------------------------------------

/// A complex scalar on the wire.
type Cx = [f64; 2];

fn cvector(doc: &[Cx]) -> CVector {
    CVector::from_vec(doc.iter().map(|p| C64::new(p[0], p[1])).collect())
}

fn cmatrix(doc: &[Vec<Cx>]) -> Result<CMatrix> {
    let rows = doc
        .iter()
        .map(|row| row.iter().map(|p| C64::new(p[0], p[1])).collect())
        .collect();
    CMatrix::from_rows(rows).map_err(|e| CliError::Input(e.to_string()))
}

fn families(doc: &[Vec<Vec<Vec<Cx>>>]) -> Result<Vec<Vec<CMatrix>>> {
    doc.iter()
        .map(|family| family.iter().map(|m| cmatrix(m)).collect())
        .collect()
}

/// Parses a party name (case-insensitive).
pub fn party(name: &str) -> Result<Party> {
    match name.to_ascii_lowercase().as_str() {
        "alice" => Ok(Party::Alice),
        "bob" => Ok(Party::Bob),
        other => Err(CliError::Input(format!("unknown party `{other}`, expected alice or bob"))),
    }
}

#[derive(Debug, Deserialize)]
struct DeviceDoc {
    dim_a: usize,
    dim_b: usize,
    /// Joint state on A ⊗ B, dimension dim_a·dim_b.
    state: Vec<Cx>,
    /// \[input\]\[outcome\] projector matrices on A.
    alice_meas: Vec<Vec<Vec<Vec<Cx>>>>,
    /// \[input\]\[outcome\] projector matrices on B.
    bob_meas: Vec<Vec<Vec<Vec<Cx>>>>,
}

fn device_from_doc(doc: DeviceDoc) -> Result<DeviceSpec> {
    Ok(DeviceSpec::new(
        doc.dim_a,
        doc.dim_b,
        cvector(&doc.state),
        families(&doc.alice_meas)?,
        families(&doc.bob_meas)?,
    )?)
}

/// Loads a `device_spec` document.
pub fn load_device(path: &Path) -> Result<DeviceSpec> {
    let value = read_value(path)?;
    expect_kind(&value, path, "device_spec")?;
    device_from_doc(payload(value, path)?)
}

#[derive(Debug, Deserialize)]
struct MoveDoc {
    party: String,
    unitary: Vec<Vec<Cx>>,
}

#[derive(Debug, Deserialize)]
struct ProtocolDoc {
    dim_a: usize,
    dim_m: usize,
    dim_b: usize,
    first: String,
    moves: Vec<MoveDoc>,
    /// \[outcome\] projector matrices on Alice's final space.
    final_alice: Vec<Vec<Vec<Cx>>>,
    final_bob: Vec<Vec<Vec<Cx>>>,
    #[serde(default)]
    alice_abort: Option<usize>,
    #[serde(default)]
    bob_abort: Option<usize>,
}

/// Loads a `protocol` document.
pub fn load_protocol(path: &Path) -> Result<Protocol> {
    let value = read_value(path)?;
    expect_kind(&value, path, "protocol")?;
    let doc: ProtocolDoc = payload(value, path)?;
    let moves = doc
        .moves
        .iter()
        .map(|m| Ok(Move { party: party(&m.party)?, unitary: cmatrix(&m.unitary)? }))
        .collect::<Result<Vec<_>>>()?;
    let final_alice =
        doc.final_alice.iter().map(|m| cmatrix(m)).collect::<Result<Vec<_>>>()?;
    let final_bob = doc.final_bob.iter().map(|m| cmatrix(m)).collect::<Result<Vec<_>>>()?;
    Ok(Protocol::new(
        doc.dim_a,
        doc.dim_m,
        doc.dim_b,
        party(&doc.first)?,
        moves,
        final_alice,
        final_bob,
        doc.alice_abort,
        doc.bob_abort,
    )?)
}

#[derive(Debug, Deserialize)]
struct DistributionDoc {
    /// Per-party outcome counts; present for multiparty distributions.
    #[serde(default)]
    sizes: Option<Vec<usize>>,
    #[serde(default)]
    nx: Option<usize>,
    #[serde(default)]
    ny: Option<usize>,
    #[serde(default)]
    na: Option<usize>,
    #[serde(default)]
    nb: Option<usize>,
    /// Row-major probabilities.
    table: Vec<f64>,
}

fn load_distribution_doc(path: &Path) -> Result<DistributionDoc> {
    let value = read_value(path)?;
    expect_kind(&value, path, "distribution")?;
    payload(value, path)
}

fn bipartite_shape(doc: &DistributionDoc, path: &Path) -> Result<(usize, usize, usize, usize)> {
    if let Some(sizes) = &doc.sizes {
        if sizes.len() == 2 {
            return Ok((1, 1, sizes[0], sizes[1]));
        }
        return Err(CliError::Input(format!(
            "{}: distribution has {} parties; use the multiparty command",
            path.display(),
            sizes.len()
        )));
    }
    match (doc.na, doc.nb) {
        (Some(na), Some(nb)) => Ok((doc.nx.unwrap_or(1), doc.ny.unwrap_or(1), na, nb)),
        _ => Err(CliError::Input(format!(
            "{}: distribution needs either `sizes` or `na`/`nb`",
            path.display()
        ))),
    }
}

/// Loads a single-setting bipartite `distribution` document as a joint
/// distribution (the shape `bias-floor` needs).
pub fn load_joint(path: &Path) -> Result<JointDist> {
    let doc = load_distribution_doc(path)?;
    let (nx, ny, na, nb) = bipartite_shape(&doc, path)?;
    if nx != 1 || ny != 1 {
        return Err(CliError::Input(format!(
            "{}: bias-floor needs a single-setting distribution, got {nx}x{ny} settings",
            path.display()
        )));
    }
    Ok(JointDist::new(na, nb, doc.table)?)
}

/// Loads a `distribution` document as a multiparty distribution; `na`/`nb`
/// documents coerce to two parties.
pub fn load_multiparty(path: &Path) -> Result<MultipartyDist> {
    let doc = load_distribution_doc(path)?;
    let sizes = match (&doc.sizes, doc.na, doc.nb) {
        (Some(sizes), _, _) => sizes.clone(),
        (None, Some(na), Some(nb)) => vec![na, nb],
        _ => {
            return Err(CliError::Input(format!(
                "{}: distribution needs either `sizes` or `na`/`nb`",
                path.display()
            )));
        }
    };
    Ok(MultipartyDist::new(sizes, doc.table)?)
}

/// Input accepted by `check-product`: a device spec (whose correlation is
/// computed first) or a bipartite distribution.
pub fn load_product_input(path: &Path) -> Result<Correlation> {
    let value = read_value(path)?;
    match envelope(&value, path)?.as_str() {
        "device_spec" => {
            let spec = device_from_doc(payload(value, path)?)?;
            Ok(qsample_core::correlation::compute_correlation(&spec)?)
        }
        "distribution" => {
            let doc: DistributionDoc = payload(value, path)?;
            let (nx, ny, na, nb) = bipartite_shape(&doc, path)?;
            Ok(Correlation::new(nx, ny, na, nb, doc.table)?)
        }
        other => Err(CliError::Input(format!(
            "{}: document kind is `{other}`, expected `device_spec` or `distribution`",
            path.display()
        ))),
    }
}

#[derive(Debug, Deserialize)]
struct IsometryDoc {
    /// Φ_A as a (target_dim_a·junk_a) × dim_a matrix.
    v_a: Vec<Vec<Cx>>,
    v_b: Vec<Vec<Cx>>,
    /// Reference junk state on junk_a·junk_b.
    junk: Vec<Cx>,
}

/// Loads an `isometry_pair` document; target dimensions come from the target
/// device the candidate is compared against.
pub fn load_isometry(
    path: &Path,
    target_dim_a: usize,
    target_dim_b: usize,
) -> Result<IsometryPair> {
    let value = read_value(path)?;
    expect_kind(&value, path, "isometry_pair")?;
    let doc: IsometryDoc = payload(value, path)?;
    Ok(IsometryPair::new(
        cmatrix(&doc.v_a)?,
        cmatrix(&doc.v_b)?,
        cvector(&doc.junk),
        target_dim_a,
        target_dim_b,
    )?)
}

// ---------------------------------------------------------------------------
// Simulation configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TargetDoc {
    /// A named built-in target; only `"coin"` is recognized.
    Named(String),
    /// An inline device payload (same fields as a `device_spec` document).
    Inline(DeviceDoc),
}

#[derive(Debug, Deserialize)]
struct CalibrationDoc {
    #[serde(default = "default_cal_runs")]
    runs: usize,
    #[serde(default = "default_cal_quantile")]
    quantile: f64,
}

fn default_cal_runs() -> usize {
    CalibrationConfig::default().runs
}

fn default_cal_quantile() -> f64 {
    CalibrationConfig::default().quantile
}

#[derive(Debug, Deserialize)]
struct SimDoc {
    #[serde(default = "default_n_boxes")]
    n_boxes: usize,
    #[serde(default = "default_shots")]
    shots_per_input: usize,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default = "default_final_inputs")]
    final_inputs: [usize; 2],
    #[serde(default)]
    calibration: Option<CalibrationDoc>,
    /// `"coin"` or an inline device payload; defaults to the coin device.
    #[serde(default)]
    target: Option<TargetDoc>,
    #[serde(default)]
    adversary: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
}

fn default_n_boxes() -> usize {
    SimConfig::default().n_boxes
}

fn default_shots() -> usize {
    SimConfig::default().shots_per_input
}

fn default_trials() -> usize {
    SimConfig::default().trials
}

fn default_final_inputs() -> [usize; 2] {
    let (x, y) = SimConfig::default().final_inputs;
    [x, y]
}

/// A fully resolved simulation campaign.
pub struct SimPlan {
    pub target: DeviceSpec,
    pub cfg: SimConfig,
    pub cal: CalibrationConfig,
    pub adversary: Box<dyn Adversary>,
    pub seed: u64,
}

/// Instantiates a named adversary.
pub fn adversary_by_name(name: &str) -> Result<Box<dyn Adversary>> {
    match name {
        "honest" => Ok(Box::new(HonestAdversary)),
        "final-box-swap" => Ok(Box::new(FinalBoxSwap)),
        "identical-tamper" => Ok(Box::new(IdenticalTamper)),
        "handover-violator" => Ok(Box::new(LocalityViolator)),
        other => Err(CliError::Input(format!(
            "unknown adversary `{other}`; expected one of honest, final-box-swap, \
             identical-tamper, handover-violator"
        ))),
    }
}

/// Loads a `sim_config` document and resolves the command-line overrides.
/// A seed must come from `--seed` or the document; there is no silent default.
pub fn load_sim_plan(
    path: &Path,
    adversary_flag: Option<&str>,
    seed_flag: Option<u64>,
) -> Result<SimPlan> {
    let value = read_value(path)?;
    expect_kind(&value, path, "sim_config")?;
    let doc: SimDoc = payload(value, path)?;

    let target = match doc.target {
        None => coin_device(),
        Some(TargetDoc::Named(name)) if name == "coin" => coin_device(),
        Some(TargetDoc::Named(name)) => {
            return Err(CliError::Input(format!(
                "{}: unknown target `{name}`; use \"coin\" or an inline device payload",
                path.display()
            )));
        }
        Some(TargetDoc::Inline(dev)) => device_from_doc(dev)?,
    };

    let cfg = SimConfig {
        n_boxes: doc.n_boxes,
        shots_per_input: doc.shots_per_input,
        trials: doc.trials,
        final_inputs: (doc.final_inputs[0], doc.final_inputs[1]),
    };
    let cal = match doc.calibration {
        None => CalibrationConfig::default(),
        Some(c) => CalibrationConfig { runs: c.runs, quantile: c.quantile },
    };

    let name = adversary_flag
        .map(str::to_owned)
        .or(doc.adversary)
        .unwrap_or_else(|| "honest".into());
    let seed = seed_flag.or(doc.seed).ok_or_else(|| {
        CliError::Input("simulate needs a seed: pass --seed or set `seed` in the document".into())
    })?;

    Ok(SimPlan { target, cfg, cal, adversary: adversary_by_name(&name)?, seed })
}

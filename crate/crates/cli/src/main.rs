//! `qsample` — audits two-party sampling devices and protocols from JSON
//! documents: correlations, product tests, bias floors, cheating bounds,
//! δ-security audits, and cut-and-choose simulation campaigns.
//!
//! Exit codes: 0 success, 1 document/usage problem, 2 analysis failure
//! (solver or I/O), 3 audit failed. Set `QSAMPLE_THREADS` to cap the worker
//! pool; parallelism lives inside the core library.

mod docs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qsample_core::cheat;
use qsample_core::correlation;
use qsample_core::cutchoose;
use qsample_core::protocol::Party;

use docs::Result;
use output::Format;

#[derive(Parser)]
#[command(name = "qsample", version, about = "Audit toolkit for two-party sampling devices")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args)]
struct GlobalArgs {
    /// RNG seed (required by `simulate` unless the document sets one).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Tolerance for product tests.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Write the report to a file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Report encoding (json is the canonical machine format).
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the correlation table and marginals of a device spec.
    Correlation {
        /// `device_spec` document.
        spec: PathBuf,
    },
    /// Test whether a correlation is a product of its marginals.
    CheckProduct {
        /// `device_spec` or `distribution` document.
        input: PathBuf,
    },
    /// Compute the bias floor of a joint distribution.
    BiasFloor {
        /// Single-setting `distribution` document.
        dist: PathBuf,
    },
    /// Compare a candidate device to a target through a fixed isometry pair.
    Closeness {
        /// Candidate `device_spec` document.
        candidate: PathBuf,
        /// Target `device_spec` document.
        target: PathBuf,
        /// `isometry_pair` document.
        iso: PathBuf,
        /// Allowed trace distance per setting/outcome tuple.
        #[arg(long)]
        delta: f64,
    },
    /// Compute optimal forcing probabilities for a dishonest party.
    Cheat {
        /// `protocol` document.
        protocol: PathBuf,
        /// Cheating party (`alice` or `bob`); both when omitted.
        #[arg(long)]
        party: Option<String>,
        /// Honest outcome to force; the whole profile when omitted.
        #[arg(long, requires = "party")]
        outcome: Option<usize>,
    },
    /// Verify the product bound p*_A(b)·p*_B(a) ≥ p(a,b) on a protocol.
    KitaevCheck {
        /// `protocol` document.
        protocol: PathBuf,
    },
    /// Audit δ-security: no forcing probability may exceed honest + δ.
    Audit {
        /// `protocol` document.
        protocol: PathBuf,
        /// Allowed marginal excess.
        #[arg(long)]
        delta: f64,
    },
    /// Search all bipartitions of a multiparty distribution for a non-product
    /// split.
    Multiparty {
        /// `distribution` document with `sizes`.
        dist: PathBuf,
    },
    /// Run a cut-and-choose certification campaign against an adversary.
    Simulate {
        /// `sim_config` document.
        config: PathBuf,
        /// Adversary name (overrides the document): honest, final-box-swap,
        /// identical-tamper, handover-violator.
        #[arg(long)]
        adversary: Option<String>,
        /// Also write per-trial records as CSV to this path.
        #[arg(long, value_name = "PATH")]
        trial_csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code =
                if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                    0
                } else {
                    1
                };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Applies the `QSAMPLE_THREADS` override before any parallel work starts.
fn init_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var("QSAMPLE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("QSAMPLE_THREADS must be a positive integer, got `{raw}`"))?;
    if n == 0 {
        return Err("QSAMPLE_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("cannot configure the thread pool: {e}"))
}

fn run(cli: Cli) -> Result<u8> {
    let g = cli.global;
    let fmt = g.format;
    let out = g.out.as_deref();
    let tol = g.tol.unwrap_or(correlation::DEFAULT_PRODUCT_TOL);

    match cli.cmd {
        Cmd::Correlation { spec } => {
            let device = docs::load_device(&spec)?;
            let corr = correlation::compute_correlation(&device)?;
            output::emit(&output::render_correlation(&corr, fmt)?, out)?;
            Ok(0)
        }
        Cmd::CheckProduct { input } => {
            let corr = docs::load_product_input(&input)?;
            let verdict = correlation::is_product(&corr, tol);
            let payload = output::ProductPayload {
                product: verdict.is_product(),
                tol,
                witness: verdict.witness(),
            };
            output::emit(&output::render_product(&payload, fmt)?, out)?;
            Ok(0)
        }
        Cmd::BiasFloor { dist } => {
            let joint = docs::load_joint(&dist)?;
            let report = correlation::bias_floor(&joint);
            output::emit(&output::render_bias_floor(&report, fmt)?, out)?;
            Ok(0)
        }
        Cmd::Closeness { candidate, target, iso, delta } => {
            let cand = docs::load_device(&candidate)?;
            let tgt = docs::load_device(&target)?;
            let iso = docs::load_isometry(&iso, tgt.dim_a(), tgt.dim_b())?;
            let report = correlation::check_closeness(&cand, &tgt, &iso, delta)?;
            output::emit(&output::render_closeness(&report, fmt)?, out)?;
            Ok(0)
        }
        Cmd::Cheat { protocol, party, outcome } => {
            let p = docs::load_protocol(&protocol)?;
            let reports = match (party.as_deref(), outcome) {
                (Some(name), Some(o)) => {
                    vec![cheat::forcing_probability(&p, docs::party(name)?, o)?]
                }
                (Some(name), None) => cheat::forcing_profile(&p, docs::party(name)?)?,
                (None, _) => {
                    let mut all = cheat::forcing_profile(&p, Party::Alice)?;
                    all.extend(cheat::forcing_profile(&p, Party::Bob)?);
                    all
                }
            };
            let payload = output::CheatPayload { reports };
            output::emit(&output::render_cheat(&payload, fmt)?, out)?;
            Ok(0)
        }
        Cmd::KitaevCheck { protocol } => {
            let p = docs::load_protocol(&protocol)?;
            let report = cheat::kitaev_check(&p)?;
            output::emit(&output::render_kitaev(&report, fmt)?, out)?;
            Ok(0)
        }
        Cmd::Audit { protocol, delta } => {
            let p = docs::load_protocol(&protocol)?;
            let report = cheat::delta_security_audit(&p, delta)?;
            output::emit(&output::render_audit(&report, fmt)?, out)?;
            Ok(if report.passed { 0 } else { 3 })
        }
        Cmd::Multiparty { dist } => {
            let multi = docs::load_multiparty(&dist)?;
            let witness = correlation::multiparty_nonproduct(&multi, tol)?;
            let payload =
                output::MultipartyPayload { product: witness.is_none(), tol, witness };
            output::emit(&output::render_multiparty(&payload, fmt)?, out)?;
            Ok(0)
        }
        Cmd::Simulate { config, adversary, trial_csv } => {
            let plan = docs::load_sim_plan(&config, adversary.as_deref(), g.seed)?;
            let report = cutchoose::run_simulation(
                &plan.target,
                plan.adversary.as_ref(),
                &plan.cfg,
                &plan.cal,
                plan.seed,
            )?;
            if let Some(path) = trial_csv {
                output::emit(&output::trial_csv(&report.records), Some(&path))?;
            }
            output::emit(&output::render_sim(&report, fmt)?, out)?;
            Ok(0)
        }
    }
}

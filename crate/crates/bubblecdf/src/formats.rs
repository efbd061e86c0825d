//! Versioned JSON files for databases and network weights, plus CSV writers.
//!
//! Every JSON file is an envelope `{format, version, header, body}`. Headers
//! carry the arm hash so a database or model built for one arm is never
//! silently used with another.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bubblecdf_core::arm::ArmModel;
use bubblecdf_core::neural::{Dense, LossRecord, MlpArch, MlpModel};
use bubblecdf_core::oracle::{ContactDb, GridSpec, SelfCollisionDb};

pub const FORMAT_VERSION: u32 = 1;
pub const CONTACT_DB_FORMAT: &str = "bubblecdf.contact_db";
pub const SC_DB_FORMAT: &str = "bubblecdf.selfcollision_db";
pub const WEIGHTS_FORMAT: &str = "bubblecdf.mlp_weights";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<H, B> {
    pub format: String,
    pub version: u32,
    pub header: H,
    pub body: B,
}

/// SHA-256 of the arm's canonical JSON encoding, hex encoded.
pub fn arm_hash(arm: &ArmModel) -> String {
    let bytes = serde_json::to_vec(arm).expect("arm serializes");
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactDbHeader {
    pub arm_hash: String,
    pub grid: GridSpec,
    pub dof: usize,
    pub cfg_res: usize,
    /// Entry cap per grid point (`S`).
    pub max_entries: usize,
    pub contact_tol: f64,
    pub reach: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactDbBody {
    pub offsets: Vec<usize>,
    pub configs: Vec<f64>,
    pub links: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScDbHeader {
    pub arm_hash: String,
    pub dof: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub overlap_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScDbBody {
    pub configs: Vec<f64>,
    pub range_lo: Vec<u8>,
    pub range_hi: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Env,
    Sc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsHeader {
    pub arm_hash: String,
    pub kind: ModelKind,
    pub arch: MlpArch,
    pub n_params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsBody {
    pub layers: Vec<Dense>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(f);
    serde_json::to_writer(&mut w, value)?;
    w.flush()?;
    Ok(())
}

fn read_envelope<H: DeserializeOwned, B: DeserializeOwned>(path: &Path, format: &str) -> Result<Envelope<H, B>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let env: Envelope<H, B> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if env.format != format {
        bail!("{}: expected format {format}, found {}", path.display(), env.format);
    }
    if env.version != FORMAT_VERSION {
        bail!("{}: unsupported version {} (expected {FORMAT_VERSION})", path.display(), env.version);
    }
    Ok(env)
}

fn check_arm(path: &Path, found: &str, arm: &ArmModel) -> Result<()> {
    let want = arm_hash(arm);
    if found != want {
        bail!("{}: built for arm {found}, configured arm is {want}", path.display());
    }
    Ok(())
}

pub fn contact_db_envelope(db: &ContactDb, arm: &ArmModel) -> Envelope<ContactDbHeader, ContactDbBody> {
    Envelope {
        format: CONTACT_DB_FORMAT.into(),
        version: FORMAT_VERSION,
        header: ContactDbHeader {
            arm_hash: arm_hash(arm),
            grid: db.grid,
            dof: db.dof,
            cfg_res: db.cfg_res,
            max_entries: db.max_entries,
            contact_tol: db.contact_tol,
            reach: db.reach,
        },
        body: ContactDbBody { offsets: db.offsets.clone(), configs: db.configs.clone(), links: db.links.clone() },
    }
}

pub fn save_contact_db(path: &Path, db: &ContactDb, arm: &ArmModel) -> Result<()> {
    write_json(path, &contact_db_envelope(db, arm))
}

pub fn load_contact_db(path: &Path, arm: &ArmModel) -> Result<ContactDb> {
    let env: Envelope<ContactDbHeader, ContactDbBody> = read_envelope(path, CONTACT_DB_FORMAT)?;
    check_arm(path, &env.header.arm_hash, arm)?;
    let h = env.header;
    let b = env.body;
    if b.offsets.len() != h.grid.n_points() + 1
        || b.offsets.last() != Some(&b.links.len())
        || b.configs.len() != b.links.len() * h.dof
    {
        bail!("{}: inconsistent array lengths", path.display());
    }
    Ok(ContactDb {
        grid: h.grid,
        dof: h.dof,
        cfg_res: h.cfg_res,
        max_entries: h.max_entries,
        contact_tol: h.contact_tol,
        reach: h.reach,
        offsets: b.offsets,
        configs: b.configs,
        links: b.links,
    })
}

pub fn save_sc_db(path: &Path, db: &SelfCollisionDb, arm: &ArmModel) -> Result<()> {
    let env = Envelope {
        format: SC_DB_FORMAT.to_string(),
        version: FORMAT_VERSION,
        header: ScDbHeader {
            arm_hash: arm_hash(arm),
            dof: db.dof,
            n_samples: db.n_samples,
            seed: db.seed,
            overlap_tol: db.overlap_tol,
        },
        body: ScDbBody { configs: db.configs.clone(), range_lo: db.range_lo.clone(), range_hi: db.range_hi.clone() },
    };
    write_json(path, &env)
}

pub fn load_sc_db(path: &Path, arm: &ArmModel) -> Result<SelfCollisionDb> {
    let env: Envelope<ScDbHeader, ScDbBody> = read_envelope(path, SC_DB_FORMAT)?;
    check_arm(path, &env.header.arm_hash, arm)?;
    let (h, b) = (env.header, env.body);
    if b.range_lo.len() != b.range_hi.len() || b.configs.len() != b.range_lo.len() * h.dof {
        bail!("{}: inconsistent array lengths", path.display());
    }
    Ok(SelfCollisionDb {
        dof: h.dof,
        n_samples: h.n_samples,
        seed: h.seed,
        overlap_tol: h.overlap_tol,
        configs: b.configs,
        range_lo: b.range_lo,
        range_hi: b.range_hi,
    })
}

pub fn save_weights(path: &Path, model: &MlpModel, kind: ModelKind, arm: &ArmModel) -> Result<()> {
    let env = Envelope {
        format: WEIGHTS_FORMAT.to_string(),
        version: FORMAT_VERSION,
        header: WeightsHeader { arm_hash: arm_hash(arm), kind, arch: model.arch.clone(), n_params: model.n_params() },
        body: WeightsBody { layers: model.layers.clone() },
    };
    write_json(path, &env)
}

pub fn load_weights(path: &Path, kind: ModelKind, arm: &ArmModel) -> Result<MlpModel> {
    let env: Envelope<WeightsHeader, WeightsBody> = read_envelope(path, WEIGHTS_FORMAT)?;
    check_arm(path, &env.header.arm_hash, arm)?;
    if env.header.kind != kind {
        bail!("{}: holds a {:?} model, expected {kind:?}", path.display(), env.header.kind);
    }
    let model = MlpModel { arch: env.header.arch, layers: env.body.layers };
    model.validate().with_context(|| format!("{}: invalid weights", path.display()))?;
    Ok(model)
}

/// Serializes any value as pretty JSON (plans, plot data, configs).
pub fn save_pretty_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn write_loss_curve(path: &Path, curve: &[LossRecord]) -> Result<()> {
    write_csv(path, curve)
}

/// Writes serializable rows with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

//! Database construction, training runs and barrier-model loading.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use bubblecdf_core::arm::ArmModel;
use bubblecdf_core::barrier::{CdfModel, NeuralCdf, OracleCdf};
use bubblecdf_core::neural::{self, HeldOutSet, LossRecord, MlpModel, TrainConfig};
use bubblecdf_core::oracle::{self, ConfigLattice, ContactDb, ContactDbParams, SelfCollisionDb};

use crate::config::RunConfig;
use crate::formats::{self, ModelKind};

/// Parallel version of [`oracle::build_contact_db`]; the per-point routine is
/// shared, so both produce identical databases.
pub fn build_contact_db(arm: &ArmModel, params: &ContactDbParams) -> Result<ContactDb> {
    arm.validate()?;
    params.validate()?;
    let lattice = ConfigLattice::new(arm, params.cfg_res);
    let grid = params.grid();
    let per_point: Vec<_> = (0..grid.n_points())
        .into_par_iter()
        .map(|i| oracle::contacts_at_point(arm, &lattice, grid.point(i), params))
        .collect();
    Ok(ContactDb::from_entries(arm, params, per_point)?)
}

/// Builds both databases and writes them to the configured paths.
pub fn gen_data(cfg: &RunConfig) -> Result<(ContactDb, SelfCollisionDb)> {
    let t = Instant::now();
    let db = build_contact_db(&cfg.arm, &cfg.contact_db)?;
    log::info!("contact database: {} entries in {:.1?}", db.n_entries(), t.elapsed());
    let sc = oracle::build_selfcollision_db(&cfg.arm, cfg.sc_db.n_samples, cfg.sc_db.overlap_tol, cfg.sc_db.seed)?;
    log::info!("self-collision database: {} entries", sc.len());
    formats::save_contact_db(&cfg.paths.contact_db, &db, &cfg.arm)?;
    formats::save_sc_db(&cfg.paths.sc_db, &sc, &cfg.arm)?;
    Ok((db, sc))
}

/// Whether a stored database matches the requested parameters.
pub fn built_with(db: &ContactDb, p: &ContactDbParams) -> bool {
    db.grid == p.grid() && db.cfg_res == p.cfg_res && db.max_entries == p.max_entries && db.contact_tol == p.contact_tol
}

pub fn load_or_build_dbs(cfg: &RunConfig) -> Result<(ContactDb, SelfCollisionDb)> {
    if cfg.paths.contact_db.exists() && cfg.paths.sc_db.exists() {
        let db = formats::load_contact_db(&cfg.paths.contact_db, &cfg.arm)?;
        let sc = formats::load_sc_db(&cfg.paths.sc_db, &cfg.arm)?;
        if built_with(&db, &cfg.contact_db)
            && (sc.n_samples, sc.seed, sc.overlap_tol) == (cfg.sc_db.n_samples, cfg.sc_db.seed, cfg.sc_db.overlap_tol)
        {
            return Ok((db, sc));
        }
        log::info!("stored databases were built with other parameters; rebuilding");
    }
    gen_data(cfg)
}

/// Held-out metrics of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub kind: ModelKind,
    pub iterations: usize,
    pub held_out_mae: f64,
    pub eikonal_stat: f64,
    pub train_seconds: f64,
    pub weights: PathBuf,
}

pub struct TrainOutcome {
    pub model: MlpModel,
    pub curve: Vec<LossRecord>,
    pub summary: TrainSummary,
}

/// Size of the held-out set used for the reported metrics.
pub const HELD_OUT: usize = 5000;

pub fn train(cfg: &RunConfig, kind: ModelKind, db: &ContactDb, sc: &SelfCollisionDb) -> Result<TrainOutcome> {
    let t = Instant::now();
    let (trained, set, q_offset, tc, path) = match kind {
        ModelKind::Env => {
            let tc = &cfg.train_env;
            let m = neural::train_env_cdf(db, &cfg.arm, tc)?;
            let set = HeldOutSet::env(db, &cfg.arm, HELD_OUT, held_out_seed(tc))?;
            (m, set, 2, tc, &cfg.paths.env_weights)
        }
        ModelKind::Sc => {
            let tc = &cfg.train_sc;
            let m = neural::train_scdf(sc, &cfg.arm, tc)?;
            let set = HeldOutSet::sc(sc, &cfg.arm, HELD_OUT, held_out_seed(tc))?;
            (m, set, 0, tc, &cfg.paths.sc_weights)
        }
    };
    let secs = t.elapsed().as_secs_f64();
    let mae = match kind {
        ModelKind::Env => neural::eval_env_mae(&trained.model, &set)?,
        ModelKind::Sc => neural::eval_sc_mae(&trained.model, &set)?,
    };
    let eik = neural::eikonal_stat_env(&trained.model, &set, q_offset)?;
    formats::save_weights(path, &trained.model, kind, &cfg.arm)?;
    Ok(TrainOutcome {
        summary: TrainSummary {
            kind,
            iterations: tc.iterations,
            held_out_mae: mae,
            eikonal_stat: eik,
            train_seconds: secs,
            weights: path.clone(),
        },
        model: trained.model,
        curve: trained.curve,
    })
}

/// Held-out pairs come from a stream disjoint from the training seeds.
fn held_out_seed(tc: &TrainConfig) -> u64 {
    bubblecdf_core::rng::derive_seed(tc.seed, 0x484f_4c44)
}

/// The oracle database, reusing the training database when the parameters
/// agree.
pub fn load_or_build_oracle_db(cfg: &RunConfig) -> Result<ContactDb> {
    if cfg.oracle_db == cfg.contact_db {
        return Ok(load_or_build_dbs(cfg)?.0);
    }
    let path = &cfg.paths.oracle_db;
    if path.exists() {
        let db = formats::load_contact_db(path, &cfg.arm)?;
        if built_with(&db, &cfg.oracle_db) {
            return Ok(db);
        }
        log::info!("{} was built with other parameters; rebuilding", path.display());
    }
    let t = Instant::now();
    let db = build_contact_db(&cfg.arm, &cfg.oracle_db)?;
    log::info!("oracle database: {} entries in {:.1?}", db.n_entries(), t.elapsed());
    formats::save_contact_db(path, &db, &cfg.arm)?;
    Ok(db)
}

/// The barrier used by planners and controllers.
pub enum Models {
    Oracle(Box<OracleCdf>),
    Neural(Box<NeuralCdf>),
}

impl Models {
    pub fn as_dyn(&self) -> &dyn CdfModel {
        match self {
            Models::Oracle(m) => m.as_ref(),
            Models::Neural(m) => m.as_ref(),
        }
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self, Models::Oracle(_))
    }
}

/// Loads the oracle (building missing databases) or the trained networks.
pub fn load_models(cfg: &RunConfig) -> Result<Models> {
    if cfg.oracle {
        let db = load_or_build_oracle_db(cfg)?;
        let sc = load_or_build_dbs(cfg)?.1;
        return Ok(Models::Oracle(Box::new(OracleCdf::new(db, sc, &cfg.arm)?)));
    }
    let env = load(&cfg.paths.env_weights, ModelKind::Env, &cfg.arm)?;
    let sc = load(&cfg.paths.sc_weights, ModelKind::Sc, &cfg.arm)?;
    Ok(Models::Neural(Box::new(NeuralCdf::new(env, sc, &cfg.arm)?)))
}

fn load(path: &Path, kind: ModelKind, arm: &ArmModel) -> Result<MlpModel> {
    formats::load_weights(path, kind, arm)
        .with_context(|| format!("loading {kind:?} weights (train first, or pass --oracle)"))
}

//! The JSON system description read by the batch driver.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "matrix": { "d": 2, "A": [[1, 1], [1, 0]] },
//!   "potential": { "window": [0, 1], "table": { "00": 0.1, "01": -0.2, "10": 0.3 } },
//!   "roof": { "window": [0, 0], "table": { "0": 1.0, "1": 2.0 } },
//!   "flow_potential": { "window": [0, 0], "table": { "0": [0.0, 1.0], "1": [1.0] } },
//!   "observables": [
//!     { "id": "x0", "window": [0, 0], "table": { "0": 1.0, "1": 0.0 } },
//!     { "id": "c01", "cylinder": { "word": "01", "start": 0 } }
//!   ],
//!   "marginals": [
//!     { "kind": "equilibrium" },
//!     { "kind": "point", "cycle": "01" },
//!     { "kind": "uniform", "depth": 3 },
//!     { "kind": "random", "depth": 3 },
//!     { "kind": "rarest", "depth": 4 },
//!     { "kind": "chain", "head": { "0": 0.5, "1": 0.5 }, "kernels": [[[0.5, 0.5], [1.0, 0.0]]] }
//!   ]
//! }
//! ```
//!
//! Symbols are `0..d`, written as digits (or `.`-separated numbers for
//! `d > 10`). A window `[p, q]` reads coordinates `-p..=q`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leafwise::{ChainPast, EquilibriumPast, PastMarginal, PointPast};
use crate::potential::{FiniteRangePotential, PotentialSpec};
use crate::sft::{parse_digits, PeriodicPoint, TransitionMatrix};
use crate::suspension::{FlowPotential, FlowPotentialSpec, RoofFunction};
use crate::transfer::GibbsMeasure;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub d: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<i64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderSpec {
    pub word: String,
    #[serde(default)]
    pub start: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    Cylinder {
        id: String,
        cylinder: CylinderSpec,
    },
    Table {
        id: String,
        #[serde(flatten)]
        potential: PotentialSpec,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MarginalSpec {
    Equilibrium,
    /// All mass on the periodic point with this cycle, read from coordinate 0.
    Point {
        cycle: String,
    },
    Uniform {
        depth: usize,
    },
    Random {
        depth: usize,
    },
    Rarest {
        depth: usize,
    },
    Chain {
        #[serde(default)]
        label: Option<String>,
        head: BTreeMap<String, f64>,
        #[serde(default)]
        kernels: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirkhoffSpec {
    pub horizon: f64,
    pub orbits: usize,
}

/// The file as written.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema: u32,
    pub matrix: MatrixSpec,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub roof: Option<PotentialSpec>,
    #[serde(default)]
    pub flow_potential: Option<FlowPotentialSpec>,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    #[serde(default)]
    pub marginals: Vec<MarginalSpec>,
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub base_points: Option<usize>,
    #[serde(default)]
    pub birkhoff: Option<BirkhoffSpec>,
}

/// A validated configuration.
#[derive(Clone, Debug)]
pub struct Config {
    pub file: ConfigFile,
    pub system: Arc<TransitionMatrix>,
    pub potential: FiniteRangePotential,
    pub roof: Option<RoofFunction>,
    pub flow_potential: Option<FlowPotential>,
    pub observables: Vec<(String, FiniteRangePotential)>,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text)?;
        Config::from_file(file)
    }

    pub fn from_file(file: ConfigFile) -> Result<Self> {
        if file.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema
            )));
        }
        if file.matrix.a.len() != file.matrix.d {
            return Err(Error::NotSquare { row: 0, len: file.matrix.a.len(), expected: file.matrix.d });
        }
        let system = Arc::new(TransitionMatrix::from_rows(&file.matrix.a)?);
        let potential = match &file.potential {
            Some(p) => FiniteRangePotential::from_spec(&system, p)?,
            None => FiniteRangePotential::zero(&system),
        };
        let roof =
            file.roof.as_ref().map(|r| RoofFunction::new(FiniteRangePotential::from_spec(&system, r)?)).transpose()?;
        let flow_potential = file.flow_potential.as_ref().map(|f| FlowPotential::from_spec(&system, f)).transpose()?;
        if flow_potential.is_some() && roof.is_none() {
            return Err(Error::Config("flow_potential needs a roof".into()));
        }
        let mut observables = Vec::new();
        for o in &file.observables {
            let (id, h) = match o {
                ObservableSpec::Table { id, potential } => (id, FiniteRangePotential::from_spec(&system, potential)?),
                ObservableSpec::Cylinder { id, cylinder } => {
                    let w = parse_digits(&cylinder.word)?;
                    check_symbols(&system, &w)?;
                    (id, FiniteRangePotential::indicator(&system, &w, cylinder.start)?)
                }
            };
            if observables.iter().any(|(other, _)| other == id) {
                return Err(Error::Config(format!("duplicate observable id {id:?}")));
            }
            observables.push((id.clone(), h));
        }
        let cfg = Config { file, system, potential, roof, flow_potential, observables };
        cfg.check_marginal_specs()?;
        Ok(cfg)
    }

    fn check_marginal_specs(&self) -> Result<()> {
        for m in &self.file.marginals {
            match m {
                MarginalSpec::Point { cycle } => {
                    let c = parse_digits(cycle)?;
                    check_symbols(&self.system, &c)?;
                    PeriodicPoint::periodic(&self.system, &c)?;
                }
                MarginalSpec::Uniform { depth } | MarginalSpec::Random { depth } | MarginalSpec::Rarest { depth } => {
                    if *depth == 0 {
                        return Err(Error::InvalidMarginal("depth must be positive".into()));
                    }
                }
                MarginalSpec::Chain { head, kernels, label } => {
                    self.chain(head, kernels, label)?;
                }
                MarginalSpec::Equilibrium => {}
            }
        }
        Ok(())
    }

    fn chain(
        &self,
        head: &BTreeMap<String, f64>,
        kernels: &[Vec<Vec<f64>>],
        label: &Option<String>,
    ) -> Result<ChainPast> {
        let mut law = Vec::new();
        for (k, &p) in head {
            let w = parse_digits(k)?;
            check_symbols(&self.system, &w)?;
            law.push((w, p));
        }
        ChainPast::new(label.clone().unwrap_or_else(|| "chain".into()), &self.system, law, kernels.to_vec())
    }

    /// Past marginals in file order. Random laws draw from `rng`.
    pub fn marginals<R: Rng + ?Sized>(
        &self,
        gibbs: &Arc<GibbsMeasure>,
        rng: &mut R,
    ) -> Result<Vec<Arc<dyn PastMarginal>>> {
        let sys = &self.system;
        let mut out: Vec<Arc<dyn PastMarginal>> = Vec::new();
        for (i, m) in self.file.marginals.iter().enumerate() {
            let p: Arc<dyn PastMarginal> = match m {
                MarginalSpec::Equilibrium => Arc::new(EquilibriumPast::new(Arc::clone(gibbs))),
                MarginalSpec::Point { cycle } => {
                    Arc::new(PointPast::new(PeriodicPoint::periodic(sys, &parse_digits(cycle)?)?))
                }
                MarginalSpec::Uniform { depth } => Arc::new(ChainPast::uniform(sys, *depth)?),
                MarginalSpec::Random { depth } => {
                    Arc::new(ChainPast::random(sys, *depth, rng, format!("random #{i} depth {depth}"))?)
                }
                MarginalSpec::Rarest { depth } => Arc::new(ChainPast::rarest(gibbs, *depth)?),
                MarginalSpec::Chain { head, kernels, label } => Arc::new(self.chain(head, kernels, label)?),
            };
            out.push(p);
        }
        Ok(out)
    }

    pub fn depth(&self) -> usize {
        self.file.depth.unwrap_or(5)
    }

    pub fn n_max(&self) -> usize {
        self.file.n_max.unwrap_or(30)
    }

    pub fn base_points(&self) -> usize {
        self.file.base_points.unwrap_or(50)
    }
}

/// Independent generator number `stream` derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_symbols(sys: &TransitionMatrix, w: &[u8]) -> Result<()> {
    if let Some(&s) = w.iter().find(|&&s| s as usize >= sys.d()) {
        return Err(Error::SymbolOutOfRange { symbol: s as usize, d: sys.d() });
    }
    sys.check_word(w)
}

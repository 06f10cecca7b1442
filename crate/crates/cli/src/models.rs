//! Model identifiers and their parameter overrides.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sustaineval_core::ensembles::{
    AdaBoostM1, AdaBoostParams, EnsembleParams, ForestParams, OzaBagging, OzaBoosting, RandomForest,
};
use sustaineval_core::neural::{Mlp, MlpParams};
use sustaineval_core::trees::{CartModel, CartParams, HoeffdingParams, HoeffdingTree};
use sustaineval_core::{MajorityBaseline, Model, ModelError, Paradigm, Schema};

use crate::config::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    Cart,
    RandomForest,
    AdaboostM1,
    MlpBatch,
    HoeffdingTree,
    OzaBagging,
    OzaBoosting,
    MlpStreaming,
    MajorityBaseline,
}

impl ModelId {
    pub const ALL: [ModelId; 9] = [
        ModelId::Cart,
        ModelId::RandomForest,
        ModelId::AdaboostM1,
        ModelId::MlpBatch,
        ModelId::HoeffdingTree,
        ModelId::OzaBagging,
        ModelId::OzaBoosting,
        ModelId::MlpStreaming,
        ModelId::MajorityBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Cart => "cart",
            ModelId::RandomForest => "random_forest",
            ModelId::AdaboostM1 => "adaboost_m1",
            ModelId::MlpBatch => "mlp_batch",
            ModelId::HoeffdingTree => "hoeffding_tree",
            ModelId::OzaBagging => "oza_bagging",
            ModelId::OzaBoosting => "oza_boosting",
            ModelId::MlpStreaming => "mlp_streaming",
            ModelId::MajorityBaseline => "majority_baseline",
        }
    }

    pub fn paradigm(self) -> Paradigm {
        match self {
            ModelId::Cart | ModelId::RandomForest | ModelId::AdaboostM1 | ModelId::MlpBatch => Paradigm::Batch,
            ModelId::HoeffdingTree | ModelId::OzaBagging | ModelId::OzaBoosting | ModelId::MlpStreaming => {
                Paradigm::Streaming
            }
            ModelId::MajorityBaseline => Paradigm::Both,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Online bagging and boosting share this parameter shape.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OzaParams {
    #[serde(flatten)]
    pub ensemble: EnsembleParams,
    pub base: HoeffdingParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Cart(CartParams),
    RandomForest(ForestParams),
    AdaboostM1(AdaBoostParams),
    Mlp { params: MlpParams, streaming: bool },
    HoeffdingTree(HoeffdingParams),
    OzaBagging(OzaParams),
    OzaBoosting(OzaParams),
    MajorityBaseline,
}

impl ModelParams {
    pub fn build(&self, schema: Schema) -> Result<Box<dyn Model<f64>>, ModelError> {
        Ok(match self {
            ModelParams::Cart(p) => Box::new(CartModel::new(schema, p.clone())?),
            ModelParams::RandomForest(p) => Box::new(RandomForest::new(schema, p.clone())?),
            ModelParams::AdaboostM1(p) => Box::new(AdaBoostM1::new(schema, p.clone())?),
            ModelParams::Mlp { params, streaming: false } => Box::new(Mlp::batch(schema, params.clone())?),
            ModelParams::Mlp { params, streaming: true } => Box::new(Mlp::streaming(schema, params.clone())?),
            ModelParams::HoeffdingTree(p) => Box::new(HoeffdingTree::new(schema, p.clone())?),
            ModelParams::OzaBagging(p) => Box::new(OzaBagging::new(schema, p.ensemble.clone(), p.base.clone())?),
            ModelParams::OzaBoosting(p) => Box::new(OzaBoosting::new(schema, p.ensemble.clone(), p.base.clone())?),
            ModelParams::MajorityBaseline => Box::new(MajorityBaseline::new(schema)),
        })
    }

    fn to_table(&self) -> Result<toml::Table, String> {
        let value = match self {
            ModelParams::Cart(p) => toml::Value::try_from(p),
            ModelParams::RandomForest(p) => toml::Value::try_from(p),
            ModelParams::AdaboostM1(p) => toml::Value::try_from(p),
            ModelParams::Mlp { params, .. } => toml::Value::try_from(params),
            ModelParams::HoeffdingTree(p) => toml::Value::try_from(p),
            ModelParams::OzaBagging(p) | ModelParams::OzaBoosting(p) => toml::Value::try_from(p),
            ModelParams::MajorityBaseline => Ok(toml::Value::Table(toml::Table::new())),
        }
        .map_err(|e| e.to_string())?;
        match value {
            toml::Value::Table(mut t) => {
                t.remove("seed");
                Ok(t)
            }
            _ => Err("parameters must serialize to a table".into()),
        }
    }
}

/// A model id plus optional overrides. The model seed always comes from
/// the experiment's top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: ModelId,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
}

fn first_unknown_key(given: &toml::Table, known: &toml::Table, prefix: &str) -> Option<String> {
    for (key, value) in given {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (value, known.get(key)) {
            (_, None) => return Some(path),
            (toml::Value::Table(inner), Some(toml::Value::Table(k))) => {
                if let Some(found) = first_unknown_key(inner, k, &path) {
                    return Some(found);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse<T: DeserializeOwned>(params: &toml::Table) -> Result<T, ConfigError> {
    toml::Value::Table(params.clone())
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::field("model.params", e.message().to_string()))
}

impl ModelSpec {
    pub fn new(id: ModelId) -> Self {
        Self {
            id,
            params: toml::Table::new(),
        }
    }

    /// Typed parameters with `seed` applied.
    pub fn typed(&self, seed: u64) -> Result<ModelParams, ConfigError> {
        if self.params.contains_key("seed") {
            return Err(ConfigError::field(
                "model.params.seed",
                "the model seed is taken from the top-level `seed`",
            ));
        }
        let p = &self.params;
        let typed = match self.id {
            ModelId::Cart => ModelParams::Cart(CartParams { seed, ..parse(p)? }),
            ModelId::RandomForest => {
                let mut f: ForestParams = parse(p)?;
                f.ensemble.seed = seed;
                ModelParams::RandomForest(f)
            }
            ModelId::AdaboostM1 => {
                let mut a: AdaBoostParams = parse(p)?;
                a.ensemble.seed = seed;
                ModelParams::AdaboostM1(a)
            }
            ModelId::MlpBatch | ModelId::MlpStreaming => ModelParams::Mlp {
                params: MlpParams { seed, ..parse(p)? },
                streaming: self.id == ModelId::MlpStreaming,
            },
            ModelId::HoeffdingTree => ModelParams::HoeffdingTree(parse(p)?),
            ModelId::OzaBagging | ModelId::OzaBoosting => {
                let mut o: OzaParams = parse(p)?;
                o.ensemble.seed = seed;
                if self.id == ModelId::OzaBagging {
                    ModelParams::OzaBagging(o)
                } else {
                    ModelParams::OzaBoosting(o)
                }
            }
            ModelId::MajorityBaseline => ModelParams::MajorityBaseline,
        };
        let known = typed.to_table().map_err(|e| ConfigError::field("model.params", e))?;
        if let Some(key) = first_unknown_key(&self.params, &known, "") {
            return Err(ConfigError::field(
                format!("model.params.{key}"),
                format!("unknown parameter for `{}`", self.id),
            ));
        }
        Ok(typed)
    }

    /// Validates the overrides and returns the spec with every default filled.
    pub fn resolved(&self, seed: u64) -> Result<ModelSpec, ConfigError> {
        let typed = self.typed(seed)?;
        let probe = Schema::new(1, 2).expect("valid schema");
        typed
            .build(probe)
            .map_err(|e| ConfigError::field("model.params", e.to_string()))?;
        Ok(ModelSpec {
            id: self.id,
            params: typed.to_table().map_err(|e| ConfigError::field("model.params", e))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(src: &str) -> toml::Table {
        src.parse().unwrap()
    }

    #[test]
    fn every_model_builds_with_defaults() {
        let schema = Schema::new(4, 3).unwrap();
        for id in ModelId::ALL {
            let spec = ModelSpec::new(id).resolved(3).unwrap();
            let model = spec.typed(3).unwrap().build(schema.clone()).unwrap();
            assert_eq!(model.id(), id.as_str());
            assert_eq!(model.paradigm(), id.paradigm());
            assert!(!spec.params.contains_key("seed"));
        }
    }

    #[test]
    fn overrides_apply() {
        let spec = ModelSpec {
            id: ModelId::RandomForest,
            params: table("size = 3\nmax_depth = 4"),
        };
        match spec.typed(9).unwrap() {
            ModelParams::RandomForest(p) => {
                assert_eq!((p.ensemble.size, p.ensemble.seed, p.max_depth), (3, 9, Some(4)));
            }
            other => panic!("{other:?}"),
        }
        let spec = ModelSpec {
            id: ModelId::OzaBoosting,
            params: table("size = 4\n[base]\ngrace_period = 50"),
        };
        let resolved = spec.resolved(1).unwrap();
        assert_eq!(resolved.params["size"].as_integer(), Some(4));
        assert_eq!(resolved.params["base"]["grace_period"].as_integer(), Some(50));
        assert_eq!(resolved.resolved(1).unwrap(), resolved);
    }

    #[test]
    fn bad_overrides_name_the_key() {
        let spec = ModelSpec {
            id: ModelId::Cart,
            params: table("max_dept = 3"),
        };
        assert_eq!(spec.typed(1).unwrap_err().field.as_deref(), Some("model.params.max_dept"));

        let spec = ModelSpec {
            id: ModelId::OzaBagging,
            params: table("[base]\ngrace = 1"),
        };
        assert_eq!(spec.typed(1).unwrap_err().field.as_deref(), Some("model.params.base.grace"));

        let spec = ModelSpec {
            id: ModelId::MlpBatch,
            params: table("seed = 4"),
        };
        assert_eq!(spec.typed(1).unwrap_err().field.as_deref(), Some("model.params.seed"));

        let spec = ModelSpec {
            id: ModelId::HoeffdingTree,
            params: table("delta = 2.0"),
        };
        assert_eq!(spec.resolved(1).unwrap_err().field.as_deref(), Some("model.params"));
    }
}

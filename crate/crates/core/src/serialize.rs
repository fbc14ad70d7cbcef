//! Versioned JSON documents for trained models. Floats are written in
//! shortest round-trip form and parsed exactly, so a save/load cycle is
//! bit-identical.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{SparseAeLayer, StackedSparseRegressor};
use crate::dbn::{Dbn, Rbm};
use crate::error::{Error, Result};
use crate::numerics::Scalar;
use crate::transfer::EnsembleModel;

pub const FORMAT_VERSION: u32 = 1;

/// Types that can be stored as a model document.
pub trait ModelKind: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

impl<T: Scalar> ModelKind for StackedSparseRegressor<T> {
    const KIND: &'static str = "stacked_sparse_regressor";
}

impl<T: Scalar> ModelKind for Dbn<T> {
    const KIND: &'static str = "dbn";
}

impl ModelKind for EnsembleModel {
    const KIND: &'static str = "ensemble";
}

impl<T: Scalar> ModelKind for SparseAeLayer<T> {
    const KIND: &'static str = "sparse_ae_layer";
}

impl<T: Scalar> ModelKind for Rbm<T> {
    const KIND: &'static str = "rbm";
}

#[derive(Serialize, Deserialize)]
struct Document<M> {
    format_version: u32,
    kind: String,
    scalar: String,
    #[serde(default)]
    hyperparameters: serde_json::Value,
    model: M,
}

fn scalar_name<M>() -> String {
    let full = std::any::type_name::<M>();
    if full.contains("f32") { "f32" } else { "f64" }.to_string()
}

/// `hyperparameters` is stored verbatim next to the parameters.
pub fn to_json<M: ModelKind>(model: &M, hyperparameters: serde_json::Value) -> Result<String> {
    let doc = Document {
        format_version: FORMAT_VERSION,
        kind: M::KIND.to_string(),
        scalar: scalar_name::<M>(),
        hyperparameters,
        model,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn from_json<M: ModelKind>(text: &str) -> Result<M> {
    let doc: Document<serde_json::Value> = serde_json::from_str(text)?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch(format!(
            "document version {}, expected {FORMAT_VERSION}",
            doc.format_version
        )));
    }
    if doc.kind != M::KIND {
        return Err(Error::VersionMismatch(format!(
            "document holds a {}, expected a {}",
            doc.kind,
            M::KIND
        )));
    }
    Ok(serde_json::from_value(doc.model)?)
}

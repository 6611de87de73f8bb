//! Weight file: `{version, input_dim, num_classes, layers: [{kind, in_dim, out_dim, ...}]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeedForwardNet, LayerSpec, NnError};
use crate::persist::{self, PersistError};
use crate::FORMAT_VERSION;

#[derive(Serialize, Deserialize)]
struct WeightFile {
    version: u32,
    input_dim: usize,
    num_classes: usize,
    layers: Vec<LayerSpec>,
}

impl FeedForwardNet {
    pub fn to_json(&self) -> String {
        persist::to_json(&WeightFile {
            version: FORMAT_VERSION,
            input_dim: self.input_dim(),
            num_classes: self.num_classes(),
            layers: self.layers.clone(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let file: WeightFile = persist::from_versioned_json(text)?;
        let net = FeedForwardNet::new(file.layers).map_err(|e| match e {
            NnError::Persist(p) => p,
            other => PersistError::invalid("layers", other.to_string()),
        })?;
        if net.input_dim() != file.input_dim {
            return Err(PersistError::invalid(
                "input_dim",
                format!("{} does not match first layer ({})", file.input_dim, net.input_dim()),
            )
            .into());
        }
        if net.num_classes() != file.num_classes {
            return Err(PersistError::invalid(
                "num_classes",
                format!("{} does not match last layer ({})", file.num_classes, net.num_classes()),
            )
            .into());
        }
        Ok(net)
    }

    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        Ok(persist::write_file(path.as_ref(), &self.to_json())?)
    }

    pub fn load_weights(path: impl AsRef<Path>) -> Result<Self, NnError> {
        Self::from_json(&persist::read_file(path.as_ref())?)
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::NetBuilder;

    #[test]
    fn round_trip_is_bitwise() {
        let net = FeedForwardNet::new(
            NetBuilder::with_seed(3, 11)
                .affine(5)
                .prelu()
                .dropout(0.9)
                .affine(4)
                .leaky_relu(0.01)
                .affine(3)
                .layers(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        net.save_weights(&path).unwrap();
        let back = FeedForwardNet::load_weights(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            let a = net.forward(&x).unwrap();
            let b = back.forward(&x).unwrap();
            assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn mismatched_dims_rejected() {
        let net = FeedForwardNet::new(NetBuilder::new(2).affine(2).layers()).unwrap();
        let text = net.to_json().replace("\"input_dim\": 2", "\"input_dim\": 3");
        let err = FeedForwardNet::from_json(&text).unwrap_err();
        assert!(
            matches!(err, NnError::Persist(PersistError::Invalid { ref field, .. }) if field == "layers" || field == "input_dim"),
            "{err}"
        );
    }

    #[test]
    fn version_mismatch_rejected() {
        let net = FeedForwardNet::new(NetBuilder::new(2).affine(2).layers()).unwrap();
        let text = net.to_json().replace("\"version\": 1", "\"version\": 7");
        assert!(matches!(
            FeedForwardNet::from_json(&text),
            Err(NnError::Persist(PersistError::UnsupportedVersion { found: 7, .. }))
        ));
    }

    #[test]
    fn malformed_file_reports_position() {
        let err = FeedForwardNet::from_json("{\"version\": 1, \"layers\": [}").unwrap_err();
        assert!(matches!(err, NnError::Persist(PersistError::Parse { line: 1, .. })), "{err}");
    }
}

//! Parameter storage, the ESWT container format and deterministic
//! Kaiming-normal initialization.

mod eswt;
mod store;

pub use eswt::{decode_eswt, encode_eswt, load_eswt, save_eswt, MAGIC, VERSION};
pub use store::{WeightArray, WeightStore};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::netdef::{param_specs, NetworkSpec, ParamInit};

/// Fresh weights for `spec`: conv weights ~ Normal(0, sqrt(2 / fan_in)),
/// biases and norm shifts 0, norm scales 1.
///
/// Draws come from one ChaCha8 stream seeded with `seed`, consumed in
/// canonical parameter order, so a seed always yields the same store.
pub fn kaiming_init(spec: &NetworkSpec, seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new();
    for p in param_specs(spec) {
        let n = p.len();
        let data = match p.init {
            ParamInit::Kaiming { fan_in } => {
                let normal = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt())
                    .expect("positive std");
                (0..n).map(|_| normal.sample(&mut rng)).collect()
            }
            ParamInit::Zeros => vec![0.0; n],
            ParamInit::Ones => vec![1.0; n],
        };
        store
            .insert(p.name, WeightArray { dims: p.dims, data })
            .expect("parameter names are unique");
    }
    store
}

/// Check that `store` holds every parameter of `spec` with the right dims.
pub fn check_complete(spec: &NetworkSpec, store: &WeightStore) -> Result<()> {
    for p in param_specs(spec) {
        store.expect(&p.name, &p.dims)?;
    }
    Ok(())
}

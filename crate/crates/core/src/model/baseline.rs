use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::layers::{init_linear, linear};
use crate::model::params::{Binding, ParameterStore};
use crate::tensor::{Graph, Var};
use crate::Scalar;

/// A single affine map from the `L` lookback values to `T` forecasts, shared
/// across channels.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearBaseline<T> {
    pub lookback_len: usize,
    pub horizon_len: usize,
    pub params: ParameterStore<T>,
}

impl<T: Scalar> LinearBaseline<T> {
    pub fn new(lookback_len: usize, horizon_len: usize, seed: u64) -> Result<Self> {
        if lookback_len == 0 || horizon_len == 0 {
            return Err(Error::Config(
                "linear baseline needs positive L and T".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        init_linear(&mut params, "linear", lookback_len, horizon_len, &mut rng)?;
        Ok(LinearBaseline {
            lookback_len,
            horizon_len,
            params,
        })
    }

    /// `window[1 × L] → [1 × T]`.
    pub fn forward(&self, g: &mut Graph<T>, b: &Binding, window: Var) -> Result<Var> {
        if g.shape(window) != [1, self.lookback_len] {
            return Err(Error::dim(
                "linear_baseline",
                format!(
                    "expected [1, {}], got {:?}",
                    self.lookback_len,
                    g.shape(window)
                ),
            ));
        }
        linear(g, b, "linear", window)
    }
}

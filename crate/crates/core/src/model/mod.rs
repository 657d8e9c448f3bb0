//! Intent classifier, integrated-gradients attribution and attribution-prior training.

mod attribution;
mod io;
mod loss;
mod params;
mod train;
mod vocab;

pub use attribution::{
    class_averaged_attribution, explain, integrated_gradients, integrated_gradients_all,
    path_integrated_gradients, token_attribution, AttributionMap, ClassAttributions,
};
pub use io::{load_model, model_to_string, save_model, MODEL_FORMAT_VERSION};
pub use loss::{
    accumulate_gradient, cross_entropy, joint_loss, prior_loss, sample_prior, Example, Gradients,
    SampleLoss,
};
pub use params::{argmax, softmax, ClassifierParams, DEFAULT_DIM};
pub use train::{train, train_with_observer, Adam, EpochLosses, TrainConfig};
pub use vocab::{Vocabulary, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN};

/// Small random models for tests and checks outside this module.
pub mod testutil {
    use std::collections::BTreeMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::{ClassifierParams, Vocabulary, PAD_TOKEN, UNK_TOKEN};

    /// A model with `classes` labels, embedding width `dim` and `vocab_size`
    /// ids (PAD and UNK included); entries uniform in ±1, PAD row zero.
    pub fn random_model(
        classes: usize,
        dim: usize,
        vocab_size: usize,
        seed: u64,
    ) -> ClassifierParams {
        assert!(vocab_size >= 2 && classes >= 2);
        let mut map = BTreeMap::new();
        map.insert(0, PAD_TOKEN.to_string());
        map.insert(1, UNK_TOKEN.to_string());
        for id in 2..vocab_size {
            map.insert(id, format!("w{id}"));
        }
        let labels: Vec<String> = (0..classes).map(|j| format!("c{j}")).collect();
        let vocabulary = Vocabulary::from_parts(map, labels).expect("valid vocabulary");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ClassifierParams::zeros(vocabulary, dim);
        for x in p
            .embeddings
            .iter_mut()
            .skip(dim)
            .chain(p.weights.iter_mut())
            .chain(p.bias.iter_mut())
        {
            *x = rng.random_range(-1.0..1.0);
        }
        p
    }
}

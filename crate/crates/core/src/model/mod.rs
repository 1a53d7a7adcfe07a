//! Networks, the Gaussian-mixture latent head and model persistence.

mod archive;
mod autoencoder;
mod classifier;
mod gm;
mod network;

pub use archive::{Archive, ClassifierArchive, ModelArchive, FORMAT_VERSION, MAGIC};
pub use autoencoder::{AdversarialClassifier, AeBound, AutoencoderSpec, Decoder, DisentangledAutoencoder};
pub use classifier::{pretrain_classifier, ClassifierConfig, FrozenClassifier};
pub use gm::{log_gauss_diag, GaussianMixtureHead, GmVars, LOG_PRIOR};
pub use network::{
    bind, collect_grads, Activation, Bound, LayerSpec, Mlp, NetworkSpec, Parameterized, LEAKY_SLOPE,
};

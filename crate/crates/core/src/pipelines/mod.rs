//! End-to-end procedures built on the core modules.

mod dataset;
mod naive;
mod phantom;
mod phasegen;
mod recon;

pub use dataset::{mix_datasets, write_phantom_dataset, Manifest, ManifestEntry, MixSpec, Role, MANIFEST_FILE};
pub use naive::{naive_phase, normalize_magnitude};
pub use phantom::{generate_phantom, PhantomRecord, MIN_PHANTOM_SIZE};
pub use phasegen::{
    load_phasegen, sample_phase, sample_phases, save_phasegen, train_phasegen, train_phasegen_with, training_input, LossRow, LossTrace, Preset,
    TrainConfig, TOY_MAX_SIZE, TOY_MAX_TIMESTEPS,
};
pub use recon::{prepare_recon_samples, train_recon, ReconConfig, ReconNet, ReconOutput, ReconSample};

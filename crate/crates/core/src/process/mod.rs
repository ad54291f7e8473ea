//! Update laws, eigenvalues, transition kernels and the single-step sampler.

pub mod kernel;
mod law;
mod sample;
mod spectrum;

pub(crate) use kernel::spectral_row;
pub use kernel::{
    checks, kernel_bruteforce, kernel_bruteforce_exact, kernel_hamming, kernel_hamming_direct, kernel_hamming_t,
    kernel_rw_representation, kernel_spectral, kernel_spectral_exact, lump_to_hamming, rw_representation_with_sign,
    transition_row, KernelDense, KernelHamming, RationalKernel, RwBudget, RwKernelRow, RW_SIGN,
};
pub use law::{
    coord_bit, pick_probabilities, random_explicit_law, size_distribution, subsets_of_size, vertex_bits,
    vertex_index, z_distribution, ProcessSpec, UpdateLaw, MAX_BRUTEFORCE_N, MAX_DENSE_N, MAX_EXPLICIT_N,
};
pub use sample::{step_sample, StepSampler};
pub use spectrum::{eigenvalues_general, eigenvalues_hamming, subset_spectrum, subset_spectrum_from_z, HammingSpectrum};

#[cfg(test)]
mod tests;

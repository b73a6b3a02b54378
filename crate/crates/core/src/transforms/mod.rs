//! Fourier and continuous wavelet transforms.

mod cwt;
mod fft;
mod stft;
mod wavelet;

pub use cwt::{admissibility_constant, cwt, geometric_scales, icwt, Scalogram};
pub use fft::{
    dft_naive, fft, fft_complex, ifft, ifft_real, next_pow2, power_spectrum, power_spectrum_padded,
    Spectrum,
};
pub use stft::{stft, Window};
pub use wavelet::{
    natural_length, wavelet_registry, wavelet_samples, MexicanHat, Morlet, WaveletBasis,
};

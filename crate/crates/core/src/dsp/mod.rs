//! Representation layer: WAV I/O, STFT, magnitude compression, Mel filterbanks.

pub mod compress;
pub mod mel;
pub mod stft;
pub mod wav;

pub use compress::{
    compress, decompress, from_channels, to_channels, CompressedSpec, CompressionParams,
};
pub use mel::{apply_mel, apply_mel_adjoint, build_mel_filterbank, MelFilterbank};
pub use stft::{istft, stft, ComplexSpectrogram, Stft, StftConfig, WindowKind};
pub use wav::{load_wav, load_wav_with, save_wav, Downmix, WavEncoding, Waveform};

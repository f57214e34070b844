"""Drum sound synthesis toolkit: differentiable timbre descriptors with
gradient-based control, a toy style-based waveform GAN, per-class envelope
post-processing, balanced dataset sampling, and a Fréchet-distance
evaluation suite."""

from .dsp import AudioClip, ComplexSpectrum, MelConfig, analytic_signal, dft, idft, mel_log_energies
from .descriptors import (
    DescriptorConfig,
    DescriptorVector,
    brightness,
    depth,
    describe,
    descriptor_loss,
    match_descriptors,
    warmth,
)
from .envelope import DrumClass, EnvelopeTable, apply_envelope, extract_class_envelope
from .sampler import DatasetManifest, ManifestEntry, Sampler, class_histogram, sample
from .evaluation import (
    ControlEvalRecord,
    GaussianStats,
    MaeReport,
    OrderingReport,
    RegressionReport,
    control_eval_protocol,
    fad_from_audio,
    fad_from_embeddings,
    fit_gaussian,
    frechet_distance,
    linear_fit_r2,
    mae_quantile,
    ordering_accuracy,
)
from .wavio import read_wav, write_wav
from .synthdata import synth_dataset

__version__ = "0.1.0"

"""Evaluation suite: Fréchet distance over audio embeddings, ordering
accuracy (E1-E3), quantile-region MAE (F1-F3), least-squares linearity
(R² and slope), and the descriptor-control evaluation protocol.

The built-in embedding is the per-clip concatenation of the mean and
standard deviation of mel-band log energies over frames (64-dim with the
32-band default); external embedding matrices can be supplied as F32M
files for pipelines with their own embedding model.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import AudioClip, MelConfig, mel_log_energies
from .descriptors import DESCRIPTOR_NAMES, DescriptorConfig, describe
from .wavio import read_wav

EMBEDDING_MAGIC = b"F32M"

LEVELS = (0.2, 0.5, 0.8)


# ---------------------------------------------------------------------------
# Gaussian statistics and the Fréchet distance


@dataclass(frozen=True)
class GaussianStats:
    """Mean vector and symmetric PSD covariance of an embedding set."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        if self.mean.ndim != 1 or self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("mean must be (d,) and cov (d, d)")
        if not np.allclose(self.cov, self.cov.T, atol=1e-10):
            raise ValueError("covariance must be symmetric")

    @property
    def dim(self) -> int:
        return self.mean.size


def fit_gaussian(embeddings: np.ndarray) -> GaussianStats:
    """Sample mean and unbiased sample covariance, symmetrized."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise ValueError("embedding matrix must be 2-D (items x dim)")
    rows, cols = emb.shape
    if rows <= cols:
        raise ValueError(f"need more items than dimensions for a covariance fit ({rows} <= {cols})")
    mean = emb.mean(axis=0)
    centered = emb - mean
    cov = centered.T @ centered / (rows - 1)
    cov = 0.5 * (cov + cov.T)
    return GaussianStats(mean=mean, cov=cov)


def _sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition; negative
    eigenvalues from finite-sample noise are clamped to zero."""
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (matrix + matrix.T))
    eigenvalues = np.maximum(eigenvalues, 0.0)
    return (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    root_a = _sqrtm_psd(a.cov)
    inner = _sqrtm_psd(root_a @ b.cov @ root_a)
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.trace(inner))
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# Embeddings


def clip_embedding(clip: AudioClip, mel: MelConfig = MelConfig()) -> np.ndarray:
    """Concatenated mean and std of mel-band log energies over frames."""
    frames = mel_log_energies(clip, mel)
    return np.concatenate([frames.mean(axis=0), frames.std(axis=0)])


def embed_clips(clips, mel: MelConfig = MelConfig()) -> np.ndarray:
    clips = list(clips)
    if not clips:
        raise ValueError("need at least one clip to embed")
    return np.stack([clip_embedding(c, mel) for c in clips])


def embed_directory(directory, mel: MelConfig = MelConfig()) -> np.ndarray:
    paths = sorted(Path(directory).glob("*.wav"))
    if not paths:
        raise ValueError(f"no .wav files in {directory}")
    return np.stack([clip_embedding(read_wav(p), mel) for p in paths])


def write_embeddings(matrix: np.ndarray, path):
    """F32M file: magic, u32 rows, u32 cols, row-major f32 little-endian."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError("embedding matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.astype("<f4").tobytes())


def read_embeddings(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != EMBEDDING_MAGIC:
        raise ValueError(f"{path}: not an F32M embedding file")
    rows, cols = struct.unpack_from("<II", data, 4)
    need = 12 + 4 * rows * cols
    if len(data) < need:
        raise ValueError(f"{path}: truncated embedding data")
    return np.frombuffer(data[12:need], dtype="<f4").astype(np.float64).reshape(rows, cols)


def fad_from_embeddings(emb_a: np.ndarray, emb_b: np.ndarray) -> float:
    if emb_a.shape[1] != emb_b.shape[1]:
        raise ValueError(f"embedding dimension mismatch: {emb_a.shape[1]} vs {emb_b.shape[1]}")
    return frechet_distance(fit_gaussian(emb_a), fit_gaussian(emb_b))


def fad_from_audio(dir_a, dir_b, mel: MelConfig = MelConfig()) -> float:
    """Fréchet audio distance between two directories of WAV clips using
    the internal mel-statistics embedding."""
    return fad_from_embeddings(embed_directory(dir_a, mel), embed_directory(dir_b, mel))


# ---------------------------------------------------------------------------
# Control-coherence metrics


@dataclass(frozen=True)
class ControlEvalRecord:
    """One generated sound's target vs measured descriptor value."""

    target: float
    measured: float
    descriptor: str
    drum_class: str
    mode: str
    level: float | None = None  # min/max level (0.2/0.5/0.8) when applicable

    def __post_init__(self):
        if not (np.isfinite(self.target) and np.isfinite(self.measured)):
            raise ValueError("record values must be finite")


@dataclass(frozen=True)
class OrderingReport:
    """E1 (0.2 vs 0.8), E2 (0.2 vs 0.5), E3 (0.5 vs 0.8); measured ties
    count as failures; a missing level leaves the criterion absent."""

    e1: float | None
    e2: float | None
    e3: float | None


@dataclass(frozen=True)
class MaeReport:
    """Mean absolute error over targets within the dataset's 20-50th (F1),
    50-80th (F2), and 20-80th (F3) descriptor quantiles."""

    f1: float | None
    f2: float | None
    f3: float | None
    quantiles: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))


@dataclass(frozen=True)
class RegressionReport:
    slope: float
    intercept: float
    r2: float


def _pair_accuracy(low_records, high_records) -> float | None:
    if not low_records or not high_records:
        return None
    hits = 0
    total = 0
    for lo in low_records:
        for hi in high_records:
            total += 1
            if hi.measured > lo.measured:  # ties fail
                hits += 1
    return hits / total


def ordering_accuracy(records) -> OrderingReport:
    """Fraction of cross pairs whose measured ordering matches the target
    ordering, per level pair."""
    by_level = {level: [r for r in records if r.level == level] for level in LEVELS}
    return OrderingReport(
        e1=_pair_accuracy(by_level[0.2], by_level[0.8]),
        e2=_pair_accuracy(by_level[0.2], by_level[0.5]),
        e3=_pair_accuracy(by_level[0.5], by_level[0.8]),
    )


def descriptor_quantiles(dataset_values) -> tuple[float, float, float]:
    """Linear-interpolation empirical 20/50/80th quantiles."""
    values = np.asarray(list(dataset_values), dtype=np.float64)
    if values.size == 0:
        raise ValueError("dataset descriptor values must be non-empty")
    q20, q50, q80 = np.quantile(values, [0.2, 0.5, 0.8])
    return float(q20), float(q50), float(q80)


def _region_mae(records, lo: float, hi: float) -> float | None:
    errs = [abs(r.measured - r.target) for r in records if lo <= r.target <= hi]
    if not errs:
        return None
    return float(np.mean(errs))


def mae_quantile(records, dataset_values) -> MaeReport:
    q20, q50, q80 = descriptor_quantiles(dataset_values)
    return MaeReport(
        f1=_region_mae(records, q20, q50),
        f2=_region_mae(records, q50, q80),
        f3=_region_mae(records, q20, q80),
        quantiles=(q20, q50, q80),
    )


def linear_fit_r2(records, dataset_values) -> RegressionReport:
    """Least-squares fit of measured on target, restricted to targets within
    the dataset's 20-80th quantiles; R² = 1 - SS_res/SS_tot of the measured
    values. Constant measured values with varying targets give R² = 0;
    degenerate (zero-variance) targets are an error."""
    q20, _, q80 = descriptor_quantiles(dataset_values)
    selected = [r for r in records if q20 <= r.target <= q80]
    if len(selected) < 3:
        raise ValueError(f"need at least 3 records inside [q20, q80] (got {len(selected)})")
    targets = np.array([r.target for r in selected])
    measured = np.array([r.measured for r in selected])
    target_var = np.sum((targets - targets.mean()) ** 2)
    if target_var == 0:
        raise ValueError("zero target variance inside [q20, q80]")
    slope = float(np.sum((targets - targets.mean()) * (measured - measured.mean())) / target_var)
    intercept = float(measured.mean() - slope * targets.mean())
    ss_tot = float(np.sum((measured - measured.mean()) ** 2))
    if ss_tot == 0:
        return RegressionReport(slope=slope, intercept=intercept, r2=0.0)
    residuals = measured - (slope * targets + intercept)
    r2 = 1.0 - float(np.sum(residuals**2)) / ss_tot
    return RegressionReport(slope=slope, intercept=intercept, r2=r2)


# ---------------------------------------------------------------------------
# Control evaluation protocol

MODES = ("single", "combined", "combined_dataset")


def level_targets(dataset_values, levels=LEVELS) -> dict[float, float]:
    """Map min/max-normalized levels to descriptor values of the dataset."""
    values = np.asarray(list(dataset_values), dtype=np.float64)
    if values.size == 0:
        raise ValueError("dataset descriptor values must be non-empty")
    lo, hi = float(values.min()), float(values.max())
    return {level: lo + level * (hi - lo) for level in levels}


def control_eval_protocol(generate_fn, dataset_vectors, descriptor: str, mode: str,
                          n_per_level: int, seed: int, drum_class: str,
                          measure_fn=None, cfg: DescriptorConfig = DescriptorConfig(),
                          levels=LEVELS):
    """Run the descriptor-control evaluation and produce all reports.

    ``generate_fn(targets: dict, drum_class: str, rng) -> AudioClip``
    produces one sound conditioned on the given descriptor targets.
    ``dataset_vectors`` is the list of DescriptorVector values of the
    training items for the evaluated class; it supplies the min/max level
    scale, the quantile regions, and the auxiliary-descriptor draws.

    Modes: ``single`` conditions only on the evaluated descriptor
    (auxiliaries fixed at the dataset mean when the generator expects
    them), ``combined`` draws auxiliaries from dataset items and overwrites
    the evaluated descriptor with the level value, ``combined_dataset``
    takes every descriptor from a dataset item (the evaluated one included,
    so targets span the dataset rather than the three levels).

    Returns (records, OrderingReport, MaeReport, RegressionReport | None).
    """
    if mode not in MODES:
        raise ValueError(f"unknown evaluation mode {mode!r} (expected one of {MODES})")
    if descriptor not in DESCRIPTOR_NAMES:
        raise ValueError(f"unknown descriptor {descriptor!r}")
    dataset_vectors = list(dataset_vectors)
    if not dataset_vectors:
        raise ValueError("dataset descriptor vectors must be non-empty")
    if measure_fn is None:
        measure_fn = lambda clip: describe(clip, cfg).get(descriptor)

    rng = np.random.default_rng(seed)
    values = [v.get(descriptor) for v in dataset_vectors]
    means = {name: float(np.mean([v.get(name) for v in dataset_vectors])) for name in DESCRIPTOR_NAMES}
    targets_by_level = level_targets(values, levels)

    records = []
    for level in levels:
        for _ in range(n_per_level):
            item = dataset_vectors[rng.integers(len(dataset_vectors))]
            if mode == "single":
                targets = dict(means)
                targets[descriptor] = targets_by_level[level]
                level_tag = level
            elif mode == "combined":
                targets = {name: item.get(name) for name in DESCRIPTOR_NAMES}
                targets[descriptor] = targets_by_level[level]
                level_tag = level
            else:  # combined_dataset
                targets = {name: item.get(name) for name in DESCRIPTOR_NAMES}
                level_tag = None
            clip = generate_fn(targets, drum_class, rng)
            records.append(
                ControlEvalRecord(
                    target=targets[descriptor],
                    measured=float(measure_fn(clip)),
                    descriptor=descriptor,
                    drum_class=drum_class,
                    mode=mode,
                    level=level_tag,
                )
            )

    ordering = ordering_accuracy(records)
    mae = mae_quantile(records, values)
    try:
        regression = linear_fit_r2(records, values)
    except ValueError:
        regression = None
    return records, ordering, mae, regression


def report_summary(ordering: OrderingReport, mae: MaeReport,
                   regression: RegressionReport | None) -> dict:
    """JSON-ready summary: {e1,e2,e3,f1,f2,f3,r2,slope} with null absences."""
    return {
        "e1": ordering.e1,
        "e2": ordering.e2,
        "e3": ordering.e3,
        "f1": mae.f1,
        "f2": mae.f2,
        "f3": mae.f3,
        "r2": None if regression is None else regression.r2,
        "slope": None if regression is None else regression.slope,
    }


def write_summary_json(path, ordering, mae, regression):
    Path(path).write_text(json.dumps(report_summary(ordering, mae, regression), indent=2) + "\n")


def write_scatter_csv(path, records):
    """One row per record: descriptor,target,measured,class,mode."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["descriptor", "target", "measured", "class", "mode"])
        for r in records:
            writer.writerow([r.descriptor, repr(r.target), repr(r.measured), r.drum_class, r.mode])

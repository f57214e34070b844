"""Dataset sampling: natural-proportion draws and equal-proportion
(class-balanced) draws over a class-partitioned manifest.

Both modes sample with replacement; balanced mode first picks a class
uniformly over the classes present, then an entry uniformly within it,
which equalizes expected class frequencies regardless of class sizes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .envelope import DrumClass


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    drum_class: DrumClass


class DatasetManifest:
    """Ordered entry list plus a per-class index.

    Entry paths are resolved relative to ``base_dir`` (the manifest file's
    directory when loaded from disk) unless absolute.
    """

    def __init__(self, entries, base_dir="."):
        self.entries = list(entries)
        self.base_dir = Path(base_dir)
        if not self.entries:
            raise ValueError("manifest must contain at least one entry")
        self.by_class: dict[DrumClass, list[int]] = {}
        for i, entry in enumerate(self.entries):
            self.by_class.setdefault(entry.drum_class, []).append(i)

    def resolve(self, entry: ManifestEntry) -> Path:
        path = Path(entry.path)
        return path if path.is_absolute() else self.base_dir / path

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def classes(self) -> list[DrumClass]:
        return sorted(self.by_class, key=lambda c: c.value)

    def class_counts(self) -> dict[DrumClass, int]:
        return {c: len(self.by_class[c]) for c in self.classes}

    def save(self, path):
        with open(path, "w") as fh:
            for entry in self.entries:
                fh.write(json.dumps({"path": entry.path, "class": entry.drum_class.value}) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        entries = []
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                entries.append(ManifestEntry(obj["path"], DrumClass.from_name(obj["class"])))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"manifest line {lineno}: {exc}") from exc
        return cls(entries, base_dir=Path(path).parent)


class Sampler:
    """Owns its RNG; one instance per thread."""

    def __init__(self, manifest: DatasetManifest, mode: str = "natural", seed: int = 0):
        if mode not in ("natural", "balanced"):
            raise ValueError(f"unknown sampling mode {mode!r}")
        self.manifest = manifest
        self.mode = mode
        self.rng = np.random.default_rng(seed)

    def sample(self) -> ManifestEntry:
        if self.mode == "natural":
            return self.manifest.entries[self.rng.integers(len(self.manifest))]
        classes = self.manifest.classes
        drum_class = classes[self.rng.integers(len(classes))]
        pool = self.manifest.by_class[drum_class]
        return self.manifest.entries[pool[self.rng.integers(len(pool))]]

    def draw(self, n: int) -> list[ManifestEntry]:
        return [self.sample() for _ in range(n)]


def sample(manifest: DatasetManifest, mode: str, rng: np.random.Generator) -> ManifestEntry:
    """Single draw using a caller-owned generator."""
    if mode == "natural":
        return manifest.entries[rng.integers(len(manifest))]
    if mode == "balanced":
        classes = manifest.classes
        drum_class = classes[rng.integers(len(classes))]
        pool = manifest.by_class[drum_class]
        return manifest.entries[pool[rng.integers(len(pool))]]
    raise ValueError(f"unknown sampling mode {mode!r}")


def class_histogram(draws, classes=None) -> tuple[dict[DrumClass, int], float]:
    """Per-class counts of a draw log plus the chi-square statistic against
    the uniform-over-classes null.

    ``classes`` fixes the class universe (zero-count classes still enter
    the statistic); it defaults to the classes present in the log.
    """
    draws = list(draws)
    if not draws:
        raise ValueError("need at least one draw")
    counts: dict[DrumClass, int] = {} if classes is None else {c: 0 for c in classes}
    for entry in draws:
        drum_class = entry.drum_class if isinstance(entry, ManifestEntry) else entry
        if drum_class not in counts:
            if classes is not None:
                raise ValueError(f"draw of unexpected class {drum_class}")
            counts[drum_class] = 0
        counts[drum_class] += 1
    expected = len(draws) / len(counts)
    chi_square = sum((c - expected) ** 2 / expected for c in counts.values())
    return counts, float(chi_square)

import numpy as np
import pytest

from drumsynth.dsp import AudioClip, MelConfig
from drumsynth.descriptors import DescriptorVector
from drumsynth.evaluation import (
    ControlEvalRecord,
    GaussianStats,
    control_eval_protocol,
    descriptor_quantiles,
    embed_clips,
    fad_from_audio,
    fad_from_embeddings,
    fit_gaussian,
    frechet_distance,
    level_targets,
    linear_fit_r2,
    mae_quantile,
    ordering_accuracy,
    read_embeddings,
    report_summary,
    write_embeddings,
    write_scatter_csv,
)
from drumsynth.wavio import write_wav

SR = 16000


def record(target, measured, level=None, descriptor="brightness", mode="single"):
    return ControlEvalRecord(
        target=target, measured=measured, descriptor=descriptor,
        drum_class="snare", mode=mode, level=level,
    )


class TestFitGaussian:
    def test_identical_rows_zero_covariance(self):
        emb = np.tile([1.0, 2.0, 3.0], (8, 1))
        stats = fit_gaussian(emb)
        assert np.allclose(stats.mean, [1.0, 2.0, 3.0])
        assert np.allclose(stats.cov, 0.0)

    def test_hand_example_2d(self):
        emb = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
        stats = fit_gaussian(emb)
        assert np.allclose(stats.mean, [1.0, 1.0])
        assert np.allclose(stats.cov, np.diag([4.0 / 3.0, 4.0 / 3.0]))

    def test_monte_carlo_consistency(self):
        rng = np.random.default_rng(0)
        mean = np.array([1.0, -2.0, 0.5])
        chol = np.array([[1.0, 0.0, 0.0], [0.5, 0.8, 0.0], [-0.2, 0.1, 0.6]])
        cov = chol @ chol.T
        samples = rng.standard_normal((100_000, 3)) @ chol.T + mean
        stats = fit_gaussian(samples)
        assert np.max(np.abs(stats.mean - mean)) < 0.02 * np.max(np.abs(mean))
        assert np.max(np.abs(stats.cov - cov)) < 0.02 * np.max(np.abs(cov))

    def test_underdetermined_fit_rejected(self):
        with pytest.raises(ValueError):
            fit_gaussian(np.zeros((4, 4)))


class TestFrechetDistance:
    def test_identity_zero(self):
        rng = np.random.default_rng(1)
        emb = rng.standard_normal((40, 6))
        stats = fit_gaussian(emb)
        assert frechet_distance(stats, stats) < 1e-8

    def test_mean_shift_closed_form(self):
        eye = np.eye(2)
        a = GaussianStats(np.zeros(2), eye)
        b = GaussianStats(np.array([3.0, 4.0]), eye)
        assert frechet_distance(a, b) == pytest.approx(25.0, abs=1e-10)

    def test_commuting_diagonal_closed_form(self):
        a = GaussianStats(np.zeros(2), np.diag([1.0, 4.0]))
        b = GaussianStats(np.zeros(2), np.diag([9.0, 16.0]))
        assert frechet_distance(a, b) == pytest.approx(8.0, abs=1e-8)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            x = rng.standard_normal((30, 5))
            y = rng.standard_normal((30, 5)) * 2.0 + 1.0
            a, b = fit_gaussian(x), fit_gaussian(y)
            assert abs(frechet_distance(a, b) - frechet_distance(b, a)) < 1e-8

    def test_orthogonal_rotation_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((60, 8))
        y = rng.standard_normal((60, 8)) * 1.5 - 0.3
        q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
        base = frechet_distance(fit_gaussian(x), fit_gaussian(y))
        rotated = frechet_distance(fit_gaussian(x @ q), fit_gaussian(y @ q))
        assert abs(base - rotated) < 1e-6

    def test_dimension_mismatch_rejected(self):
        a = GaussianStats(np.zeros(2), np.eye(2))
        b = GaussianStats(np.zeros(3), np.eye(3))
        with pytest.raises(ValueError):
            frechet_distance(a, b)

    def test_negative_eigenvalue_noise_clamped(self):
        # nearly singular covariance with a tiny negative eigenvalue from noise
        cov = np.array([[1.0, 1.0], [1.0, 1.0 - 1e-14]])
        a = GaussianStats(np.zeros(2), 0.5 * (cov + cov.T))
        value = frechet_distance(a, a)
        assert np.isfinite(value) and value < 1e-8


def make_clip_dir(path, clips):
    path.mkdir(parents=True, exist_ok=True)
    for i, clip in enumerate(clips):
        write_wav(clip, path / f"clip_{i:04d}.wav")


class TestFadFromAudio:
    MEL = MelConfig(n_bands=6, frame_len=256, hop=128)

    def _noise_clips(self, seed, n=16, gain=1.0, length=2048):
        rng = np.random.default_rng(seed)
        return [AudioClip(gain * 0.3 * rng.standard_normal(length), SR) for _ in range(n)]

    def test_same_directory_zero(self, tmp_path):
        make_clip_dir(tmp_path / "a", self._noise_clips(0))
        assert fad_from_audio(tmp_path / "a", tmp_path / "a", self.MEL) < 1e-8

    def test_mild_gain_closer_than_different_signal(self, tmp_path):
        clips = self._noise_clips(1)
        gained = [AudioClip(0.9 * c.samples, SR) for c in clips]
        rng = np.random.default_rng(2)
        tones = [
            AudioClip(0.4 * np.sin(2 * np.pi * rng.uniform(500, 3000) * np.arange(2048) / SR), SR)
            for _ in range(16)
        ]
        make_clip_dir(tmp_path / "a", clips)
        make_clip_dir(tmp_path / "b", gained)
        make_clip_dir(tmp_path / "c", tones)
        near = fad_from_audio(tmp_path / "a", tmp_path / "b", self.MEL)
        far = fad_from_audio(tmp_path / "a", tmp_path / "c", self.MEL)
        assert 0.0 < near < far

    def test_perturbed_copy_gives_small_positive_distance(self, tmp_path):
        clips = self._noise_clips(3)
        rng = np.random.default_rng(4)
        perturbed = [AudioClip(c.samples + 0.01 * rng.standard_normal(len(c)), SR) for c in clips]
        make_clip_dir(tmp_path / "a", clips)
        make_clip_dir(tmp_path / "b", perturbed)
        value = fad_from_audio(tmp_path / "a", tmp_path / "b", self.MEL)
        reference = fad_from_audio(tmp_path / "a", tmp_path / "a", self.MEL)
        assert reference < 1e-8 < value < 5.0

    def test_embedding_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            fad_from_embeddings(np.zeros((10, 4)), np.zeros((10, 5)))

    def test_internal_embedding_is_mean_and_std_of_mel_frames(self):
        rng = np.random.default_rng(5)
        clip = AudioClip(rng.standard_normal(2048), SR)
        emb = embed_clips([clip], self.MEL)
        assert emb.shape == (1, 2 * self.MEL.n_bands)


class TestEmbeddingFile:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        matrix = rng.standard_normal((7, 5)).astype(np.float32).astype(np.float64)
        path = tmp_path / "emb.f32m"
        write_embeddings(matrix, path)
        assert np.array_equal(read_embeddings(path), matrix)

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "emb.f32m"
        write_embeddings(np.ones((4, 3)), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError):
            read_embeddings(path)


def naive_ordering(records):
    out = {}
    pairs = {"e1": (0.2, 0.8), "e2": (0.2, 0.5), "e3": (0.5, 0.8)}
    for key, (lo_level, hi_level) in pairs.items():
        lows = [r for r in records if r.level == lo_level]
        highs = [r for r in records if r.level == hi_level]
        if not lows or not highs:
            out[key] = None
            continue
        wins = total = 0
        for lo in lows:
            for hi in highs:
                total += 1
                if hi.measured > lo.measured:
                    wins += 1
        out[key] = wins / total
    return out


def naive_mae(records, values):
    qs = np.quantile(np.asarray(values, dtype=float), [0.2, 0.5, 0.8])
    out = {}
    for key, (lo, hi) in {"f1": (qs[0], qs[1]), "f2": (qs[1], qs[2]), "f3": (qs[0], qs[2])}.items():
        errs = [abs(r.measured - r.target) for r in records if lo <= r.target <= hi]
        out[key] = None if not errs else sum(errs) / len(errs)
    return out


def naive_r2(records, values):
    qs = np.quantile(np.asarray(values, dtype=float), [0.2, 0.8])
    sel = [(r.target, r.measured) for r in records if qs[0] <= r.target <= qs[1]]
    t = np.array([s[0] for s in sel])
    m = np.array([s[1] for s in sel])
    slope = np.sum((t - t.mean()) * (m - m.mean())) / np.sum((t - t.mean()) ** 2)
    intercept = m.mean() - slope * t.mean()
    ss_res = np.sum((m - slope * t - intercept) ** 2)
    ss_tot = np.sum((m - m.mean()) ** 2)
    return 1.0 - ss_res / ss_tot, slope


def random_records(rng, n=30):
    levels = [0.2, 0.5, 0.8]
    records = []
    for _ in range(n):
        level = levels[rng.integers(3)]
        target = 10.0 + 80.0 * level + rng.normal(0, 2)
        measured = target + rng.normal(0, rng.uniform(0.5, 12.0))
        records.append(record(target, measured, level=level))
    return records


class TestOrderingAccuracy:
    def test_perfect_control(self):
        records = [record(20.0, 20.0, 0.2), record(50.0, 50.0, 0.5), record(80.0, 80.0, 0.8)]
        report = ordering_accuracy(records)
        assert (report.e1, report.e2, report.e3) == (1.0, 1.0, 1.0)

    def test_constant_measured_fails_all_by_tie_rule(self):
        records = [record(20.0, 42.0, 0.2), record(50.0, 42.0, 0.5), record(80.0, 42.0, 0.8)]
        report = ordering_accuracy(records)
        assert (report.e1, report.e2, report.e3) == (0.0, 0.0, 0.0)

    def test_missing_level_reported_absent(self):
        records = [record(20.0, 10.0, 0.2), record(80.0, 90.0, 0.8)]
        report = ordering_accuracy(records)
        assert report.e1 == 1.0
        assert report.e2 is None and report.e3 is None

    def test_matches_naive_recomputation(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            records = random_records(rng)
            report = ordering_accuracy(records)
            want = naive_ordering(records)
            assert report.e1 == want["e1"]
            assert report.e2 == want["e2"]
            assert report.e3 == want["e3"]


class TestMaeQuantile:
    def test_zero_errors(self):
        values = np.linspace(0, 100, 21)
        records = [record(v, v) for v in values]
        report = mae_quantile(records, values)
        assert (report.f1, report.f2, report.f3) == (0.0, 0.0, 0.0)

    def test_constructed_region_means(self):
        values = list(range(0, 101))  # q20=20, q50=50, q80=80
        records = [record(30.0, 31.0), record(40.0, 42.0), record(60.0, 63.0)]
        report = mae_quantile(records, values)
        assert report.f1 == pytest.approx(1.5)   # targets 30, 40
        assert report.f2 == pytest.approx(3.0)   # target 60
        assert report.f3 == pytest.approx(2.0)   # all three

    def test_empty_region_absent(self):
        values = list(range(0, 101))
        records = [record(95.0, 96.0)]
        report = mae_quantile(records, values)
        assert report.f1 is None and report.f2 is None and report.f3 is None

    def test_matches_naive_recomputation(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            records = random_records(rng)
            values = rng.uniform(0, 100, 40)
            report = mae_quantile(records, values)
            want = naive_mae(records, values)
            for key in ("f1", "f2", "f3"):
                got = getattr(report, key)
                if want[key] is None:
                    assert got is None
                else:
                    assert got == pytest.approx(want[key], abs=1e-12)

    def test_quantiles_ordered_and_median_duplication_stable(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            values = rng.uniform(0, 100, 25)
            q20, q50, q80 = descriptor_quantiles(values)
            assert q20 <= q50 <= q80
            doubled = np.concatenate([values, [np.quantile(values, 0.5)] * 5])
            assert descriptor_quantiles(doubled)[1] == pytest.approx(q50)


class TestLinearFitR2:
    def test_exact_line(self):
        values = np.linspace(0, 100, 50)
        records = [record(v, 2.0 * v + 1.0) for v in np.linspace(25, 75, 10)]
        report = linear_fit_r2(records, values)
        assert report.r2 == pytest.approx(1.0)
        assert report.slope == pytest.approx(2.0)
        assert report.intercept == pytest.approx(1.0)

    def test_constant_measured_gives_zero_r2(self):
        values = np.linspace(0, 100, 50)
        records = [record(v, 42.0) for v in np.linspace(25, 75, 10)]
        report = linear_fit_r2(records, values)
        assert report.r2 == 0.0

    def test_degenerate_targets_rejected(self):
        values = np.linspace(0, 100, 50)
        records = [record(50.0, m) for m in (1.0, 2.0, 3.0)]
        with pytest.raises(ValueError):
            linear_fit_r2(records, values)

    def test_too_few_records_rejected(self):
        values = np.linspace(0, 100, 50)
        with pytest.raises(ValueError):
            linear_fit_r2([record(30.0, 1.0), record(60.0, 2.0)], values)

    def test_hand_dataset_matches_closed_form(self):
        values = np.linspace(-1, 4, 30)  # q20/q80 leave all four targets inside
        records = [record(0.0, 0.1), record(1.0, 0.9), record(2.0, 2.2), record(3.0, 2.8)]
        report = linear_fit_r2(records, values)
        want_r2, want_slope = naive_r2(records, values)
        assert report.r2 == pytest.approx(want_r2, abs=1e-12)
        assert report.slope == pytest.approx(want_slope, abs=1e-12)

    def test_matches_naive_recomputation(self):
        rng = np.random.default_rng(10)
        checked = 0
        for _ in range(100):
            records = random_records(rng, n=40)
            values = rng.uniform(0, 100, 50)
            try:
                report = linear_fit_r2(records, values)
            except ValueError:
                continue
            want_r2, want_slope = naive_r2(records, values)
            assert report.r2 == pytest.approx(want_r2, abs=1e-9)
            assert report.slope == pytest.approx(want_slope, abs=1e-9)
            checked += 1
        assert checked > 80


class EchoOracle:
    """Perfect controller: emits a carrier clip and a measure function that
    reads back the requested target exactly."""

    def __init__(self, descriptor):
        self.descriptor = descriptor

    def generate(self, targets, drum_class, rng):
        value = targets[self.descriptor]
        samples = np.full(64, 1e-3)
        samples[0] = value  # carry the target in-band
        return AudioClip(samples, SR)

    def measure(self, clip):
        return float(clip.samples[0])


class TestControlEvalProtocol:
    def _vectors(self, rng, n=40):
        return [
            DescriptorVector(*np.clip(rng.normal([45, 55, 50], 12), 1, 99)) for _ in range(n)
        ]

    def test_perfect_oracle_mode_single(self):
        oracle = EchoOracle("brightness")
        vectors = self._vectors(np.random.default_rng(11))
        records, ordering, mae, regression = control_eval_protocol(
            oracle.generate, vectors, "brightness", "single", 10, seed=1,
            drum_class="snare", measure_fn=oracle.measure,
        )
        assert len(records) == 30
        assert (ordering.e1, ordering.e2, ordering.e3) == (1.0, 1.0, 1.0)
        for value in (mae.f1, mae.f2, mae.f3):
            assert value is None or value == pytest.approx(0.0, abs=1e-12)
        assert regression is None or regression.r2 == pytest.approx(1.0)

    def test_perfect_oracle_mode_combined_identical_reports(self):
        oracle = EchoOracle("brightness")
        vectors = self._vectors(np.random.default_rng(12))
        _, ordering, mae, regression = control_eval_protocol(
            oracle.generate, vectors, "brightness", "combined", 10, seed=1,
            drum_class="snare", measure_fn=oracle.measure,
        )
        assert (ordering.e1, ordering.e2, ordering.e3) == (1.0, 1.0, 1.0)
        for value in (mae.f1, mae.f2, mae.f3):
            assert value is None or value == pytest.approx(0.0, abs=1e-12)

    def test_combined_dataset_mode_spans_dataset_targets(self):
        oracle = EchoOracle("warmth")
        vectors = self._vectors(np.random.default_rng(13))
        records, _, mae, regression = control_eval_protocol(
            oracle.generate, vectors, "warmth", "combined_dataset", 20, seed=2,
            drum_class="snare", measure_fn=oracle.measure,
        )
        assert len(records) == 60
        assert all(r.level is None for r in records)
        dataset_values = {v.warmth for v in vectors}
        assert all(r.target in dataset_values for r in records)
        assert regression is not None and regression.r2 == pytest.approx(1.0)

    def test_record_accounting_and_csv(self, tmp_path):
        oracle = EchoOracle("brightness")
        vectors = self._vectors(np.random.default_rng(14))
        records, ordering, mae, regression = control_eval_protocol(
            oracle.generate, vectors, "brightness", "single", 50, seed=3,
            drum_class="snare", measure_fn=oracle.measure,
        )
        assert len(records) == 150
        csv_path = tmp_path / "scatter.csv"
        write_scatter_csv(csv_path, records)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "descriptor,target,measured,class,mode"
        assert len(lines) == 151

    def test_unknown_mode_rejected(self):
        oracle = EchoOracle("brightness")
        with pytest.raises(ValueError):
            control_eval_protocol(
                oracle.generate, self._vectors(np.random.default_rng(15)),
                "brightness", "freestyle", 5, seed=1, drum_class="snare",
            )

    def test_level_targets_min_max_scale(self):
        targets = level_targets([10.0, 20.0, 60.0])
        assert targets[0.2] == pytest.approx(20.0)
        assert targets[0.5] == pytest.approx(35.0)
        assert targets[0.8] == pytest.approx(50.0)

    def test_summary_serialization(self):
        oracle = EchoOracle("depth")
        vectors = self._vectors(np.random.default_rng(16))
        _, ordering, mae, regression = control_eval_protocol(
            oracle.generate, vectors, "depth", "single", 5, seed=4,
            drum_class="kick", measure_fn=oracle.measure,
        )
        summary = report_summary(ordering, mae, regression)
        assert set(summary) == {"e1", "e2", "e3", "f1", "f2", "f3", "r2", "slope"}

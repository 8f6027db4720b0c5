"""Hamming-distance metrics against hand-computed and brute-force oracles.

Percent conventions under test: inter-HD is the mean over all unordered
device pairs of HD/n, in percent; intra-HD is the mean over re-reads of
HD(golden, re-read)/n, in percent. Both shrink n to the kept positions
when a mask is present.
"""

import itertools
import math

import numpy as np
import pytest

from pufsim.entropy import EnvironmentCondition, NoiseCalibration
from pufsim.errors import InvalidArgumentError
from pufsim.metrics import (
    compute_report,
    hd_histogram,
    hd_histogram_from_counts,
    inter_hd,
    inter_hd_details,
    intra_hd,
    mean_intra_hd,
    ones_fraction_and_colormap,
    robustness_sweep,
)
from pufsim.population import PlacementConfig, PopulationSpec, generate_population
from pufsim.signature import SignatureSet, apply_mask, enroll_golden


def test_inter_hd_hand_oracle():
    rows = np.array([[0, 0, 0, 0], [1, 1, 1, 1], [0, 0, 1, 1]], dtype=np.uint8)
    # pairwise distances 4, 2, 2 over n=4: mean fraction 8/12
    assert inter_hd(rows) == pytest.approx(100.0 * 8 / 12, abs=1e-12)


def test_intra_hd_hand_oracle():
    golden = np.array([0, 0, 0, 0], dtype=np.uint8)
    rereads = np.array([[1, 0, 0, 0], [1, 1, 0, 0]], dtype=np.uint8)
    # distances 1 and 2 over n=4: mean fraction 3/8
    assert intra_hd(golden, rereads) == pytest.approx(37.5, abs=1e-12)


def test_inter_hd_extremes():
    same = np.zeros((4, 16), dtype=np.uint8)
    assert inter_hd(same) == 0.0
    opposite = np.stack([np.zeros(16, dtype=np.uint8), np.ones(16, dtype=np.uint8)])
    assert inter_hd(opposite) == 100.0


def test_inter_hd_brute_force_small_sets():
    rng = np.random.default_rng(2)
    for r, n in itertools.product((2, 3, 5), (1, 4, 8)):
        rows = rng.integers(0, 2, size=(r, n), dtype=np.uint8)
        acc = [
            np.sum(rows[i] != rows[j]) / n
            for i in range(r)
            for j in range(i + 1, r)
        ]
        want = 100.0 * float(np.mean(acc))
        assert inter_hd(rows) == pytest.approx(want, abs=1e-9)


def test_inter_hd_invariances():
    rng = np.random.default_rng(3)
    rows = rng.integers(0, 2, size=(10, 50), dtype=np.uint8)
    base = inter_hd(rows)
    assert inter_hd(1 - rows) == pytest.approx(base, abs=1e-12)
    perm = rng.permutation(50)
    assert inter_hd(rows[:, perm]) == pytest.approx(base, abs=1e-12)
    perm_dev = rng.permutation(10)
    assert inter_hd(rows[perm_dev]) == pytest.approx(base, abs=1e-12)


def test_inter_hd_expectation_iid():
    # iid Bernoulli(p) rows: E[pairwise HD fraction] = 2 p (1 - p)
    rng = np.random.default_rng(4)
    for p in (0.5, 0.3):
        rows = (rng.random((120, 512)) < p).astype(np.uint8)
        want = 200.0 * p * (1 - p)
        assert inter_hd(rows) == pytest.approx(want, abs=0.6)


def test_inter_hd_respects_mask():
    rows = np.array([[0, 1, 0], [1, 1, 1]], dtype=np.uint8)
    # full: HD 2/3; keeping only the agreeing column: HD 0
    assert inter_hd(rows) == pytest.approx(200.0 / 3)
    assert inter_hd(rows, np.array([0, 1, 0])) == 0.0
    assert inter_hd(rows, np.array([1, 0, 1])) == 100.0


def test_inter_hd_argument_checks():
    with pytest.raises(InvalidArgumentError):
        inter_hd(np.zeros((1, 8), dtype=np.uint8))  # one device
    with pytest.raises(InvalidArgumentError):
        inter_hd(np.array([[0, 2]], dtype=np.uint8))  # non-binary
    with pytest.raises(InvalidArgumentError):
        inter_hd(np.zeros((3, 4), dtype=np.uint8), np.zeros(4, dtype=np.uint8))


def test_inter_hd_details_histogram():
    rows = np.array([[0, 0], [0, 1], [1, 1]], dtype=np.uint8)
    percent, hist = inter_hd_details(rows)
    # distances: 1, 2, 1
    assert hist.tolist() == [0, 2, 1]
    assert percent == pytest.approx(100.0 * 4 / (3 * 2))


def test_mean_intra_hd_uses_mask():
    bits = np.zeros((2, 2, 4), dtype=np.uint8)
    bits[0, 1, 0] = 1  # one flip at position 0 of device 0, trial 1
    sigs = SignatureSet(bits)
    golden = enroll_golden(SignatureSet(bits[:, :1, :]))
    full = mean_intra_hd(sigs, golden)
    assert full == pytest.approx(100.0 * 1 / (2 * 2 * 4))
    masked = apply_mask(sigs, [0, 1, 1, 1])
    assert mean_intra_hd(masked, golden) == 0.0


def test_hd_histogram_buckets():
    hist = hd_histogram([0.4, 1.2, 1.6, 49.9, 50.0], bucket_width=1.0)
    assert hist == {0.0: 1, 1.0: 2, 49.0: 1, 50.0: 1}
    hist = hd_histogram([0.4, 1.2], bucket_width=0.5)
    assert hist == {0.0: 1, 1.0: 1}
    with pytest.raises(InvalidArgumentError):
        hd_histogram([1.0], bucket_width=0.0)


def test_hd_histogram_from_counts_equivalent():
    rng = np.random.default_rng(6)
    rows = rng.integers(0, 2, size=(12, 64), dtype=np.uint8)
    percent, raw = inter_hd_details(rows)
    pairs = [
        100.0 * np.sum(rows[i] != rows[j]) / 64
        for i in range(12)
        for j in range(i + 1, 12)
    ]
    assert hd_histogram_from_counts(raw, 64, 2.0) == hd_histogram(pairs, 2.0)


def test_ones_fraction_and_colormap():
    bits = np.array([[[1, 0, 1, 0]], [[1, 1, 1, 0]]], dtype=np.uint8)
    frac, grid = ones_fraction_and_colormap(SignatureSet(bits))
    assert frac == pytest.approx(5 / 8)
    assert grid.shape == (2, 4)
    with pytest.raises(InvalidArgumentError):
        ones_fraction_and_colormap(SignatureSet(bits), trial=1)


# -- sweep and report ---------------------------------------------------------------

def _flat_population(devices, cells, seed):
    placement = PlacementConfig("flat", cells, 1, (0,) * cells, ())
    return generate_population(
        PopulationSpec(
            num_devices=devices,
            cells_per_device=cells,
            sigma_mismatch=0.25,
            weights=(0.0, 0.0, 1.0),
            placement=placement,
            master_seed=seed,
        )
    )


def test_robustness_sweep_nominal_is_exact_zero():
    pop = _flat_population(20, 64, 9)
    cal = NoiseCalibration(
        sigma_mismatch=0.25,
        reference=EnvironmentCondition(25.0, 1.0),
        temperature_anchors=((0.0, 0.08), (25.0, 0.0), (85.0, 0.16)),
    )
    results = robustness_sweep(pop, cal, [EnvironmentCondition(25.0, 1.0)],
                               trials=3, base_seed=100)
    assert results[0][1] == 0.0


def test_robustness_sweep_tracks_target_ber():
    pop = _flat_population(150, 64, 10)
    cal = NoiseCalibration(
        sigma_mismatch=0.25,
        reference=EnvironmentCondition(25.0, 1.0),
        temperature_anchors=((0.0, 0.08), (25.0, 0.0), (85.0, 0.16)),
    )
    envs = [
        EnvironmentCondition(25.0, 1.0),
        EnvironmentCondition(0.0, 1.0),
        EnvironmentCondition(85.0, 1.0),
    ]
    results = robustness_sweep(pop, cal, envs, trials=2, base_seed=5)
    intra = [v for _, v in results]
    assert intra[0] == 0.0
    samples = 150 * 64 * 2
    for got, ber in zip(intra[1:], (0.08, 0.16)):
        se = 100.0 * math.sqrt(ber * (1 - ber) / samples)
        assert abs(got - 100.0 * ber) < 3 * se
    assert intra[0] < intra[1] < intra[2]


def test_compute_report_fields():
    rng = np.random.default_rng(11)
    bits = rng.integers(0, 2, size=(6, 2, 32), dtype=np.uint8)
    sigs = SignatureSet(bits)
    golden = enroll_golden(sigs)
    report = compute_report(sigs, golden, bucket_width=5.0)
    assert report.intra_hd_percent is not None
    assert 0.0 <= report.ones_fraction <= 1.0
    assert sum(report.hd_histogram.values()) == 6 * 5 // 2
    assert report.colormap.shape == (6, 32)
    d = report.to_dict()
    assert set(d) == {"inter_hd_percent", "intra_hd_percent", "hd_histogram",
                      "ones_fraction", "per_env_ber"}
    no_golden = compute_report(sigs)
    assert no_golden.intra_hd_percent is None

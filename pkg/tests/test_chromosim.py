import math

import numpy as np
import pytest

from minoverlap.chromosim import (
    CT_TABLE, ChromoScenario, TrialResult, axes_for_volume, class_mean_regression, generate_trial, homolog_pairs,
    mean_volumes, radial_regression, run_batch, sample_ratios, sample_volumes, scenario, screen,
    screening_threshold, territory_labels, with_penalty,
)
from minoverlap.ellipack import TrustRegionConfig
from minoverlap.errors import DegenerateError, InvalidInputError
from minoverlap.rng import stream


def test_table_entries():
    assert CT_TABLE["1"] == 37.05
    assert CT_TABLE["Y"] == 8.70
    assert len(CT_TABLE) == 24


def test_territory_set():
    labels = territory_labels()
    assert len(labels) == 46
    assert sum(CT_TABLE.values()) == pytest.approx(461.55, abs=1e-9)
    vols = mean_volumes()
    # autosomes count twice in the territory set
    assert vols.sum() == pytest.approx(2 * 461.55 - CT_TABLE["X"] - CT_TABLE["Y"], abs=1e-9)


def test_sex_chromosomes_not_paired():
    labels = territory_labels()
    paired = {labels[i] for p in homolog_pairs() for i in p}
    assert "X" not in paired and "Y" not in paired
    assert len(homolog_pairs()) == 22
    for i, j in homolog_pairs():
        assert labels[i].rstrip("ab") == labels[j].rstrip("ab")


@pytest.mark.parametrize("best, thr", [(0.1338, 0.6338), (3.0, 3.6), (20.0, 22.0)])
def test_screening_threshold(best, thr):
    assert screening_threshold(best) == pytest.approx(thr, abs=1e-12)


def _result(obj, distances=None, ok=True):
    d = distances if distances is not None else [1.0] * 46
    return TrialResult("t", 0, 0, obj, obj, d, list(mean_volumes()), [0.0] * 46, 3, "x", "" if ok else "boom")


def test_screen_partition():
    rs = [_result(1.0), _result(1.4), _result(1.6), _result(math.nan, ok=False)]
    kept, removed, thr = screen(rs)
    assert thr == pytest.approx(1.5)
    assert [r.objective for r in kept] == [1.0, 1.4]
    assert [r.objective for r in removed] == [1.6]
    assert max(r.objective for r in kept) <= thr


def test_screen_needs_results():
    with pytest.raises(InvalidInputError):
        screen([_result(math.nan, ok=False)])


def test_regression_flat_and_exact():
    slope, _ = radial_regression([_result(1.0), _result(2.0)])
    assert slope == pytest.approx(0.0, abs=1e-14)
    x = mean_volumes()
    r = _result(1.0, distances=list(5.0 - 0.003 * x))
    slope, icpt = radial_regression([r, r])
    assert slope == pytest.approx(-0.003, abs=1e-12)
    assert icpt == pytest.approx(5.0, abs=1e-10)
    cslope, _ = class_mean_regression([r])
    assert cslope == pytest.approx(-0.003, abs=1e-12)


def test_regression_degenerate():
    with pytest.raises(DegenerateError):
        radial_regression([])


def test_volume_calibration():
    scn = scenario("medium-spherical")
    rng = stream(7, 0)
    draws = np.array([sample_volumes(scn, rng) for _ in range(1000)])
    rel = np.abs(draws.mean(axis=0) / mean_volumes() - 1)
    assert rel.max() < 0.01
    assert np.all(draws > 0)


def test_ratio_sampling_ordered():
    scn = scenario("medium-spherical")
    rng = stream(3, 0)
    for _ in range(200):
        r = sample_ratios(scn, rng)
        assert 1.0 <= r[1] <= r[2]


def test_axes_volume():
    spec = axes_for_volume(20.0, [1.0, 2.9, 4.4])
    a = spec.radii
    assert a[0] >= a[1] >= a[2]
    assert 4 / 3 * math.pi * np.prod(a) == pytest.approx(20.0, rel=1e-12)
    assert a[0] / a[2] == pytest.approx(4.4)


def test_containers():
    sph = scenario("medium-spherical").container()
    assert sph.volume == pytest.approx(1000.0, rel=1e-12)
    ell = scenario("large-ellipsoidal").container()
    assert ell.volume == pytest.approx(1600.0, rel=1e-12)
    ax = np.sort(np.linalg.eigvalsh(ell.ellipsoid.S))
    assert ax[1] / ax[0] == pytest.approx(2.0) and ax[2] / ax[0] == pytest.approx(4.0)


def test_scenario_validation():
    with pytest.raises(InvalidInputError):
        scenario("huge-spherical")
    with pytest.raises(InvalidInputError):
        scenario("medium-cubic")
    with pytest.raises(InvalidInputError):
        ChromoScenario(trials=0)
    with pytest.raises(InvalidInputError):
        ChromoScenario(penalty=1.0, lambda_factor=0.5)
    assert scenario("small-spherical").homolog is None
    h = with_penalty(scenario("small-spherical")).homolog
    assert h.penalty == 100.0 and h.lambda_factor == 1.25


def test_generate_trial_deterministic():
    scn = scenario("medium-ellipsoidal", seed=11)
    a, b = generate_trial(scn, 4), generate_trial(scn, 4)
    assert np.array_equal(a.volumes, b.volumes)
    assert [s.radii for s in a.specs] == [s.radii for s in b.specs]
    c = generate_trial(scn, 5)
    assert not np.array_equal(a.volumes, c.volumes)
    assert len(a.specs) == 46


def test_small_batch_smoke():
    scn = scenario("medium-spherical", trials=2, seed=1)
    stats, results = run_batch(scn, TrustRegionConfig(max_iter=2))
    assert stats.trials == 2 and stats.kept <= 2
    assert all(r.ok for r in results)
    R = scn.container().ellipsoid.S[0, 0]
    assert max(max(r.distances) for r in results) <= R + 1e-9
    again, _ = run_batch(scn, TrustRegionConfig(max_iter=2))
    assert again.to_dict() == stats.to_dict()

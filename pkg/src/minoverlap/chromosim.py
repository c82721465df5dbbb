"""Chromosome-territory packing experiments in a model cell nucleus.

A trial packs 46 territories (22 homologous autosome pairs plus X and Y)
as ellipsoids with randomly perturbed volumes and axis ratios, then records
how far each territory sits from the nucleus center. A batch screens out
poor trials and regresses distance on territory volume.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .ellipack import HomologConfig, PackingProblem, TrustRegionConfig, init_state, pack_ellipsoids, project_axes
from .errors import DegenerateError, InvalidInputError, MinOverlapError
from .geometry import AxisSpec, Container
from .rng import stream

# mean territory volumes in cubic micrometers
CT_TABLE: dict[str, float] = {
    "1": 37.05, "2": 36.45, "3": 29.85, "4": 28.65, "5": 27.15, "6": 25.65, "7": 23.85, "8": 21.90,
    "9": 21.00, "10": 20.25, "11": 20.10, "12": 19.80, "13": 17.10, "14": 15.90, "15": 15.00, "16": 13.35,
    "17": 11.85, "18": 11.40, "19": 9.45, "20": 9.30, "21": 7.05, "22": 7.50, "X": 23.25, "Y": 8.70,
}
NUCLEUS_VOLUMES = {"small": 500.0, "medium": 1000.0, "large": 1600.0}
SHAPES = ("spherical", "ellipsoidal")


def territory_labels() -> list[str]:
    """Body order: each autosome twice (copies a and b), then X and Y."""
    out = []
    for k in range(1, 23):
        out += [f"{k}a", f"{k}b"]
    return out + ["X", "Y"]


def homolog_pairs() -> tuple:
    return tuple((2 * k, 2 * k + 1) for k in range(22))


def mean_volumes() -> np.ndarray:
    return np.array([CT_TABLE[lab.rstrip("ab")] for lab in territory_labels()])


@dataclass(frozen=True)
class ChromoScenario:
    name: str = "medium-spherical"
    nucleus_shape: str = "spherical"
    nucleus_volume: float = 1000.0
    volume_sd_frac: float = 0.02
    axis_ratio_means: tuple = (1.0, 2.9, 4.4)
    axis_ratio_sd_frac: float = 0.1
    penalty: float = 0.0
    lambda_factor: float = 1.25
    trials: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.nucleus_shape not in SHAPES:
            raise InvalidInputError(f"nucleus shape must be one of {SHAPES}")
        if not self.nucleus_volume > 0 or self.volume_sd_frac < 0 or self.axis_ratio_sd_frac < 0:
            raise InvalidInputError("volumes and spreads must be positive")
        if len(self.axis_ratio_means) != 3 or min(self.axis_ratio_means) <= 0:
            raise InvalidInputError("axis_ratio_means needs three positive entries")
        if self.trials < 1:
            raise InvalidInputError("trials must be at least 1")
        if self.penalty < 0 or self.lambda_factor < 1:
            raise InvalidInputError("penalty must be >= 0 and lambda_factor >= 1")

    @property
    def homolog(self) -> HomologConfig | None:
        if self.penalty <= 0:
            return None
        return HomologConfig(homolog_pairs(), self.penalty, self.lambda_factor)

    def container(self) -> Container:
        V = self.nucleus_volume
        if self.nucleus_shape == "spherical":
            return Container.sphere((3 * V / (4 * math.pi)) ** (1 / 3))
        a = (3 * V / (32 * math.pi)) ** (1 / 3)
        return Container.from_axes([4 * a, 2 * a, a])


def scenario(name: str, **overrides) -> ChromoScenario:
    """Named scenario such as ``"medium-ellipsoidal"``."""
    try:
        size, shape = name.split("-")
        vol = NUCLEUS_VOLUMES[size]
    except (ValueError, KeyError):
        raise InvalidInputError(f"unknown scenario {name!r}") from None
    if shape not in SHAPES:
        raise InvalidInputError(f"unknown scenario {name!r}")
    return ChromoScenario(name=name, nucleus_shape=shape, nucleus_volume=vol, **overrides)


def sample_volumes(scn: ChromoScenario, rng: np.random.Generator) -> np.ndarray:
    mean = mean_volumes()
    out = np.empty_like(mean)
    for i, m in enumerate(mean):
        while True:
            v = rng.normal(m, scn.volume_sd_frac * m)
            if v > 0:
                out[i] = v
                break
    return out


def sample_ratios(scn: ChromoScenario, rng: np.random.Generator) -> np.ndarray:
    """Relative axis lengths ``(1, r2, r3)`` with ``1 <= r2 <= r3``."""
    m1, m2, m3 = scn.axis_ratio_means
    while True:
        r2 = rng.normal(m2, scn.axis_ratio_sd_frac * m2)
        r3 = rng.normal(m3, scn.axis_ratio_sd_frac * m3)
        if m1 <= r2 <= r3:
            return np.array([m1, r2, r3])


def axes_for_volume(volume: float, ratios) -> AxisSpec:
    ratios = np.sort(np.asarray(ratios, dtype=float))[::-1]
    s = (3 * volume / (4 * math.pi * np.prod(ratios))) ** (1 / 3)
    return AxisSpec(tuple(s * ratios))


@dataclass(frozen=True)
class TrialSetup:
    specs: tuple
    volumes: np.ndarray
    container: Container
    rng: np.random.Generator = field(repr=False)


def generate_trial(scn: ChromoScenario, index: int) -> TrialSetup:
    rng = stream(scn.seed, index)
    vols = sample_volumes(scn, rng)
    specs = tuple(axes_for_volume(v, sample_ratios(scn, rng)) for v in vols)
    return TrialSetup(specs, vols, scn.container(), rng)


@dataclass
class TrialResult:
    scenario: str
    index: int
    seed: int
    objective: float
    overlap: float
    distances: list
    volumes: list
    distortion: list
    iterations: int
    reason: str
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    def to_dict(self) -> dict:
        return asdict(self)


def run_trial(scn: ChromoScenario, index: int, cfg: TrustRegionConfig = TrustRegionConfig()) -> TrialResult:
    setup = generate_trial(scn, index)
    problem = PackingProblem(setup.specs, setup.container, scn.homolog)
    try:
        init = init_state(setup.specs, setup.container, rng=setup.rng)
        res = pack_ellipsoids(problem, init, cfg)
    except MinOverlapError as exc:
        return TrialResult(scn.name, index, scn.seed, math.nan, math.nan, [], setup.volumes.tolist(), [], 0,
                           "error", f"{type(exc).__name__}: {exc}")
    st = res.state
    dist = np.linalg.norm(st.centers - setup.container.center, axis=1)
    axes = project_axes(st, problem)
    return TrialResult(scn.name, index, scn.seed, st.evaluation.merit, st.evaluation.t_star, dist.tolist(),
                       setup.volumes.tolist(), axes.distortion.tolist(), len(res.history), res.reason)


def screening_threshold(best: float) -> float:
    return best + max(0.5, min(0.2 * best, 2.0))


def screen(results: list[TrialResult]):
    """Split successful trials into kept and removed by the objective threshold."""
    good = [r for r in results if r.ok]
    if not good:
        raise InvalidInputError("no successful trials to screen")
    thr = screening_threshold(min(r.objective for r in good))
    kept = [r for r in good if r.objective <= thr]
    removed = [r for r in good if r.objective > thr]
    return kept, removed, thr


def radial_regression(results: list[TrialResult]) -> tuple[float, float]:
    """Least-squares line of center distance against mean territory volume,
    pooled over all territories of all given trials."""
    x = np.concatenate([mean_volumes() for _ in results]) if results else np.zeros(0)
    y = np.concatenate([np.asarray(r.distances) for r in results]) if results else np.zeros(0)
    return _ols(x, y)


def _ols(x, y) -> tuple[float, float]:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2 or np.ptp(x) == 0:
        raise DegenerateError("regression needs at least two distinct volumes")
    xm, ym = x.mean(), y.mean()
    slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
    return slope, float(ym - slope * xm)


def class_mean_regression(results: list[TrialResult]) -> tuple[float, float]:
    """Same line fitted to per-chromosome mean distances (homologs averaged)."""
    labels = [lab.rstrip("ab") for lab in territory_labels()]
    names = list(CT_TABLE)
    d = np.mean([np.asarray(r.distances) for r in results], axis=0)
    means = [np.mean([d[i] for i, lab in enumerate(labels) if lab == nm]) for nm in names]
    return _ols([CT_TABLE[nm] for nm in names], means)


@dataclass
class BatchStats:
    scenario: str
    trials: int
    failed: int
    kept: int
    threshold: float
    objective_mean_before: float
    objective_sd_before: float
    objective_mean_after: float
    objective_sd_after: float
    slope: float
    intercept: float
    class_slope: float
    distorted_mean_count: float

    def to_dict(self) -> dict:
        return asdict(self)


def _sd(v) -> float:
    v = np.asarray(v, float)
    return float(v.std(ddof=1)) if v.size > 1 else 0.0


def summarize(scn: ChromoScenario, results: list[TrialResult]) -> BatchStats:
    good = [r for r in results if r.ok]
    failed = len(results) - len(good)
    if len(good) * 2 < len(results):
        raise MinOverlapError(f"only {len(good)} of {len(results)} trials succeeded")
    kept, _, thr = screen(results)
    before = [r.objective for r in good]
    after = [r.objective for r in kept]
    slope, icpt = radial_regression(kept)
    cslope, _ = class_mean_regression(kept)
    distorted = float(np.mean([np.sum(np.asarray(r.distortion) > 0.1) for r in kept]))
    return BatchStats(scn.name, len(results), failed, len(kept), thr, float(np.mean(before)), _sd(before),
                      float(np.mean(after)), _sd(after), slope, icpt, cslope, distorted)


def _trial_job(args):
    scn, index, cfg = args
    return run_trial(scn, index, cfg)


def run_batch(scn: ChromoScenario, cfg: TrustRegionConfig = TrustRegionConfig(), workers: int = 1,
              on_result=None) -> tuple[BatchStats, list[TrialResult]]:
    """Run all trials (in parallel when ``workers > 1``) and summarize in index order."""
    jobs = [(scn, k, cfg) for k in range(scn.trials)]
    results: list[TrialResult] = []
    if workers <= 1:
        for j in jobs:
            r = _trial_job(j)
            results.append(r)
            if on_result is not None:
                on_result(r)
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as ex:
            for r in ex.map(_trial_job, jobs):
                results.append(r)
                if on_result is not None:
                    on_result(r)
    return summarize(scn, results), results


def with_penalty(scn: ChromoScenario, penalty: float = 100.0, lambda_factor: float = 1.25) -> ChromoScenario:
    return replace(scn, penalty=penalty, lambda_factor=lambda_factor)

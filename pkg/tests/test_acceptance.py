"""End-to-end acceptance checks at their stated tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in the terminal
summary. Expensive experiments run once and are shared through a cache.
"""
import json
from functools import lru_cache

from minoverlap import experiments as ex
from minoverlap import formats
from minoverlap.chromosim import run_trial, scenario, with_penalty

SEED = 0
RERUN_TRIALS = 2
LINES: list[str] = []


@lru_cache(maxsize=None)
def check(name: str) -> ex.Check:
    runs = {
        "five": lambda: ex.five_circles(starts=50, seed=SEED, timing=False),
        "lattice": lambda: ex.square_lattice(),
        "hex": lambda: ex.hex_emergence(seed=SEED, timing=False),
        "fcc": lambda: ex.fcc_trend(seed=SEED),
        "curved": lambda: ex.curved_hex(seed=SEED),
        "oracle": lambda: ex.overlap_vs_oracle(seed=SEED),
        "trust": lambda: ex.trust_region_contracts(seed=SEED),
        "chromo": lambda: ex.chromo_trends(trials=20, seed=SEED),
        "value": lambda: ex.appendix_properties(samples=50, seed=SEED),
    }
    return runs[name]()


def report(line: str) -> None:
    LINES.append(line)
    print(line)


def verdict(c: ex.Check) -> None:
    report(c.line())
    assert c.passed, c.line()


def test_five_circles():
    verdict(check("five"))


def test_square_lattice_stays_put():
    verdict(check("lattice"))


def test_hexagonal_emergence():
    verdict(check("hex"))


def test_fcc_trend():
    verdict(check("fcc"))


def test_curved_hexagonal():
    verdict(check("curved"))


def test_monotone_sandwich_all_sphere_runs():
    bad = steps = 0
    for name in ("five", "lattice", "hex", "fcc", "curved"):
        v, n = check(name).sandwich
        bad += v
        steps += n
    ok = bad == 0 and steps > 0
    report(f"{'PASS' if ok else 'FAIL'} monotone-sandwich: violations={bad}, steps={steps}")
    assert ok


def test_overlap_matches_oracle():
    verdict(check("oracle"))


def test_trust_region_contracts():
    verdict(check("trust"))


def test_chromosome_trends():
    verdict(check("chromo"))


def test_value_function_properties():
    verdict(check("value"))


def _chromo_reruns_match(first: ex.Check) -> list[str]:
    bad = []
    for shape in ("spherical", "ellipsoidal"):
        base = scenario(f"medium-{shape}", trials=20, seed=SEED)
        for scn in (base, with_penalty(base)):
            key = f"{shape}{'-penalty' if scn.penalty else ''}"
            stored = json.loads(first.documents[f"{key}_trials.json"])
            for k in range(RERUN_TRIALS):
                if formats.dumps(run_trial(scn, k).to_dict()) != formats.dumps(stored[k]):
                    bad.append(f"{key}#{k}")
    return bad


def test_reruns_are_byte_identical():
    five, hexa, chromo = check("five"), check("hex"), check("chromo")
    again = {
        "five": ex.five_circles(starts=50, seed=SEED, timing=False).documents,
        "hex": ex.hex_emergence(seed=SEED, timing=False).documents,
    }
    differ = [f"{k}:{name}" for k, first in (("five", five), ("hex", hexa))
              for name, text in first.documents.items() if again[k][name] != text]
    differ += _chromo_reruns_match(chromo)
    ok = not differ
    report(f"{'PASS' if ok else 'FAIL'} deterministic-reruns: mismatches={differ or 0}, "
           f"chromo_trials_rerun={4 * RERUN_TRIALS}")
    assert ok

"""Frozen regression thresholds for checks whose targets are only known up to a constant.

The thresholds are produced once by ``python -m agnostic_lqr.calibration``
from pilot runs on a dedicated seed (never the default 42) and committed as
``calibration.json``.  Later runs only read the file.

* hitting window: pilot containment minus four binomial standard errors.
* kappa: 1.5 times the pilot ``max MR / median MR`` over the regret grid.
* scaling factors: fixed at 3 (positive drift) and 4 (negative drift); the
  pilot ratios are stored next to them for reference.
"""
from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path

CALIBRATION_PATH = Path(__file__).with_name("calibration.json")
PILOT_SEED = 20211115
VERSION = 1


@dataclass(frozen=True)
class Calibration:
    version: int
    pilot_seed: int
    hitting: dict  # "a,delta" -> {"pilot", "se", "threshold", "n"}
    kappa: float
    pilot_mr_ratio: float
    scaling_pos_factor: float
    scaling_neg_factor: float
    pilot_scaling_pos: float
    pilot_scaling_neg: float

    def hitting_threshold(self, a: float, delta: float) -> float:
        entry = self.hitting.get(f"{a:g},{delta:g}")
        return entry["threshold"] if entry else 0.0


@lru_cache(maxsize=None)
def load_calibration(path: str | None = None) -> Calibration:
    with open(path or CALIBRATION_PATH) as fh:
        return Calibration(**json.load(fh))


def calibrate(seed: int = PILOT_SEED, n_paths: int = 20_000) -> Calibration:
    from .verify import fit_regret, hitting_containment

    hitting = {}
    for a, delta, n in ((20.0, 0.5, 10_000),):
        p, se, _ = hitting_containment(a, delta, n, seed)
        hitting[f"{a:g},{delta:g}"] = {"pilot": p, "se": se, "threshold": math.floor((p - 4 * se) * 1e4) / 1e4, "n": n}
    fit = fit_regret(n_paths=n_paths, seed=seed)
    return Calibration(
        version=VERSION,
        pilot_seed=seed,
        hitting=hitting,
        kappa=math.ceil(1.5 * fit.mr_ratio * 100) / 100,
        pilot_mr_ratio=fit.mr_ratio,
        scaling_pos_factor=3.0,
        scaling_neg_factor=4.0,
        pilot_scaling_pos=(fit.s(64.0) / 64) / (fit.s(8.0) / 8),
        pilot_scaling_neg=(fit.s(-64.0) * 64) / (fit.s(-16.0) * 16),
    )


def main(argv=None) -> int:
    cal = calibrate()
    CALIBRATION_PATH.write_text(json.dumps(asdict(cal), indent=2) + "\n")
    print(json.dumps(asdict(cal), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))

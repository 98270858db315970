"""Regenerate the pinned TwinState fixtures under test/fixtures/.

The console's rendering tests compare drawn pixels against poses the twin
engine itself computed, so the fixtures are frozen engine output, never
hand-written. Run from the repository root with the package installed:

    python3 frontend/scripts/make_fixtures.py
"""

import json
import math
import os

import numpy as np

from softtwin.calibration import CubicFit
from softtwin.twin import TwinConfig, pipeline_step

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "test", "fixtures")


def linear_fit(slope: float) -> CubicFit:
    return CubicFit(
        intercept=np.zeros(4),
        B=np.tile([slope, 0.0, 0.0], (4, 1)),
        valid_range=(-90.0, 120.0),
        residual_rms_deg=np.zeros(4),
    )


def freeze(name: str, pressure: float, cfg: TwinConfig) -> None:
    state = pipeline_step(pressure, cfg)
    payload = {
        "label": name,
        "pressure_kpa": pressure,
        "config": {
            "lengths_mm": list(cfg.lengths),
            "phis_deg": [math.degrees(p) for p in cfg.phis],
            "angles": cfg.angle_mode,
        },
        "state": state.to_dict(),
    }
    path = os.path.join(OUT_DIR, f"{name}.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    tip = state.tip_position
    print(f"{name}: tip ({tip[0]:.6f}, {tip[1]:.6f}, {tip[2]:.6f}) mm")


def main() -> None:
    os.makedirs(OUT_DIR, exist_ok=True)

    # All sections relaxed: vertical chain of total length 55.71 mm.
    freeze("straight", 0.0, TwinConfig(fit=linear_fit(0.0)))

    # Cumulative angles all 90 deg difference to [90, 0, 0, 0]: a quarter
    # circle on section 1 followed by a straight continuation.
    freeze("quarter", 90.0, TwinConfig(fit=linear_fit(1.0)))

    # Every section bends 20 deg out of plane by its own phi.
    freeze("forcedphi", 20.0, TwinConfig(
        fit=linear_fit(1.0),
        phis=tuple(math.radians(d) for d in (12.0, 8.8, 6.0, 3.3)),
        angle_mode="incremental",
    ))


if __name__ == "__main__":
    main()

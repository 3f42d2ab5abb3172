from __future__ import annotations

import math

Z95 = 1.959963984540054


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    p = successes / trials
    z2 = z * z
    denom = 1 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    # Clamp so the interval always contains p despite rounding at 0 and 1.
    return min(p, max(0.0, centre - half)), max(p, min(1.0, centre + half))


def binomial_stderr(successes: int, trials: int) -> float:
    p = successes / trials
    return math.sqrt(p * (1 - p) / trials)

"""Closed-form rotation square root against scipy's general matrix sqrtm.

    python3 demos/rotation_sqrt.py
"""
from __future__ import annotations

from pint_swimmer.experiments import sqrt_bench

_, stats = sqrt_bench(1000, seed=0)
print(f"residual ||S^2 - R||_F  mean {stats['mean']:.2e}  max {stats['max']:.2e}")
print(f"axis-angle round trip   max {stats['roundtrip_max']:.2e}")
print(f"scipy sqrtm residual    mean {stats['scipy_residual_mean']:.2e}")
print(f"time per call: closed form {1e6 * stats['seconds_per_call']:.2f} us, "
      f"sqrtm {1e6 * stats['scipy_seconds_per_call']:.1f} us")

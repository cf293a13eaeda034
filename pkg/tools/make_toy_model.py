#!/usr/bin/env python3
"""Regenerate the bundled two-layer toy model at data/toy.dcnw.

Deterministic: the same file comes out every run, so the artifact can be
checked in and the CLI examples in the README stay reproducible.
"""

from pathlib import Path

import numpy as np

import dcnb


def build_entries() -> list[dcnb.TensorEntry]:
    rng = np.random.default_rng(20240601)
    fc = rng.normal(0.0, 0.08, size=(12, 16)).astype(np.float32)
    fc[rng.random(fc.shape) < 0.7] = 0.0
    conv = rng.normal(0.0, 0.05, size=(6, 3, 3, 3)).astype(np.float32)
    conv[rng.random(conv.shape) < 0.6] = 0.0
    return [
        dcnb.TensorEntry("conv1.weight", dcnb.Role.WEIGHT, conv),
        dcnb.TensorEntry("conv1.weight", dcnb.Role.SIGMA,
                         np.full(conv.shape, 0.02, np.float32)),
        dcnb.TensorEntry("conv1.bias", dcnb.Role.EXCLUDED,
                         rng.normal(0, 0.01, size=6).astype(np.float32)),
        dcnb.TensorEntry("fc1.weight", dcnb.Role.WEIGHT, fc),
        dcnb.TensorEntry("fc1.weight", dcnb.Role.SIGMA,
                         np.full(fc.shape, 0.03, np.float32)),
        dcnb.TensorEntry("fc1.bias", dcnb.Role.EXCLUDED,
                         rng.normal(0, 0.01, size=16).astype(np.float32)),
    ]


def main() -> None:
    out = Path(__file__).resolve().parent.parent / "data" / "toy.dcnw"
    out.parent.mkdir(exist_ok=True)
    dcnb.save(out, build_entries())
    print(f"wrote {out} ({out.stat().st_size} bytes)")


if __name__ == "__main__":
    main()

"""Shared fixtures: kernel warmup and the synthetic sweep model."""

from __future__ import annotations

import numpy as np
import pytest

import dcnb
from dcnb import fastpath


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # Compile (or load cached) numba kernels once so individual tests and
    # the acceptance timing checks measure work, not JIT.
    fastpath.warmup()


def make_sparse_gaussian(rng: np.random.Generator, shape, zero_fraction: float,
                         scale: float = 0.05) -> np.ndarray:
    w = rng.normal(0.0, scale, size=shape).astype(np.float32)
    w[rng.random(shape) < zero_fraction] = 0.0
    return w


def make_synthetic_model(seed: int = 7, zero_fraction: float = 0.9,
                         with_sigma: bool = True) -> list[dcnb.TensorEntry]:
    """Three fully-connected matrices shaped like a small MNIST classifier
    (784x300, 300x100, 100x10), mostly zero with Gaussian nonzeros."""
    rng = np.random.default_rng(seed)
    entries = []
    for name, shape in (("fc1.w", (784, 300)), ("fc2.w", (300, 100)),
                        ("fc3.w", (100, 10))):
        w = make_sparse_gaussian(rng, shape, zero_fraction)
        entries.append(dcnb.TensorEntry(name, dcnb.Role.WEIGHT, w))
        if with_sigma:
            entries.append(dcnb.TensorEntry(
                name, dcnb.Role.SIGMA, np.full(shape, 0.05, np.float32)))
        entries.append(dcnb.TensorEntry(
            f"{name.split('.')[0]}.bias", dcnb.Role.EXCLUDED,
            np.zeros(shape[1], np.float32)))
    return entries


@pytest.fixture(scope="session")
def synthetic_model_path(tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("model") / "synthetic.dcnw"
    dcnb.save(path, make_synthetic_model())
    return str(path)

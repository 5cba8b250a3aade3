"""Shared helpers for the test suite."""

import numpy as np

from slicebf import Hyperparams, SlicedDataset


def random_dataset(rng, n=None, n_x_levels=None, n_z_levels=None, allow_ties=True):
    """A random small dataset, sometimes with tied responses."""
    n = int(rng.integers(1, 15)) if n is None else n
    kx = int(rng.integers(2, 4)) if n_x_levels is None else n_x_levels
    kz = int(rng.integers(1, 3)) if n_z_levels is None else n_z_levels
    if allow_ties and rng.random() < 0.4:
        y = rng.choice([0.5, 1.5, 2.5, 3.5, 4.5], size=n)
    else:
        y = rng.normal(size=n)
    x = rng.integers(0, kx, size=n)
    z = rng.integers(0, kz, size=n)
    return SlicedDataset.from_values(y, x, z, n_x_levels=kx, n_z_levels=kz)


def random_hyper(rng):
    return Hyperparams(
        alpha0=float(rng.choice([0.5, 1.0, 2.0])),
        lambda0=float(rng.choice([1.0, 2.0])),
    )

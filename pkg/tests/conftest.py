import numpy as np
import pytest

from lorafuse.adapters import LoraAdapter, LoraMatrixPair


def unit_vector(rng, dim):
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


def random_adapter(rng, name, task, rank, d_in, d_out, alpha=None, modules=("m",)):
    pairs = {}
    for module in modules:
        pairs[module] = LoraMatrixPair(
            A=rng.standard_normal((rank, d_in)).astype(np.float32),
            B=rng.standard_normal((d_out, rank)).astype(np.float32),
            rank=rank,
            target_module=module,
        )
    if alpha is None:
        alpha = float(rng.uniform(0.5, 4.0))
    return LoraAdapter(name=name, task=task, alpha=alpha, pairs=pairs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

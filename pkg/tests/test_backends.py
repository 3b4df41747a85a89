import numpy as np
import pytest

from twophase import _accel
from twophase.interactions import MaskedOutputTable, SparsifierConfig, sparsify_many
from twophase.lattice import mobius_transform, superset_complement_transform, superset_mobius_transform, zeta_transform

pytestmark = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture
def both_backends():
    keep = _accel.get_backend()

    def run(fn):
        out = {}
        for name in ("numpy", "numba"):
            _accel.set_backend(name)
            out[name] = fn()
        return out

    yield run
    _accel.set_backend(keep)


@pytest.mark.parametrize("fn", [mobius_transform, zeta_transform, superset_mobius_transform, superset_complement_transform])
def test_transforms_bit_identical(both_backends, fn, rng):
    x = rng.normal(size=(3, 1 << 10))
    out = both_backends(lambda: fn(x))
    assert np.array_equal(out["numpy"], out["numba"])


def test_sparsifier_backends_agree(both_backends, rng):
    tables = [MaskedOutputTable(rng.normal(size=64)) for _ in range(4)]
    cfg = SparsifierConfig(iters=400, keep_trace=False)
    out = both_backends(lambda: sparsify_many(tables, cfg))
    for a, b in zip(out["numpy"], out["numba"]):
        assert a.l1() == pytest.approx(b.l1(), rel=1e-9)
        assert np.allclose(a.split.gamma, b.split.gamma, atol=1e-9)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _accel.set_backend("cuda")

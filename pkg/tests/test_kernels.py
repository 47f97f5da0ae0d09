import numpy as np
import pytest
from scipy import stats

from icesim import _backend, _pykernels

# Philox4x32-10 known-answer vectors from the Random123 distribution
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    out = _pykernels.philox4x32(*ctr, *key)
    assert tuple(int(w) for w in out) == expected


def test_uniforms_match_philox_words():
    seed = 0x0123456789ABCDEF
    k0, k1 = _pykernels.split_key(seed)
    assert (k0, k1) == (0x89ABCDEF, 0x01234567)
    u = _pykernels.uniforms(seed, 6, 3, np.array([5]), np.array([7]))
    words = _pykernels.philox4x32(7, 5, 3, 6, k0, k1)
    for got, w in zip(u, words):
        assert got[0] == (int(w) + 0.5) / 2**32
        assert 0 < got[0] < 1


def _both(fn):
    results = {}
    previous = _backend.current()
    for name in _backend.available():
        _backend.use(name)
        results[name] = fn(_backend.kernels())
    _backend.use(previous)
    return list(results.values())


@pytest.mark.skipif("cython" not in _backend.available(), reason="compiled kernels not built")
class TestBackendsAgree:
    def test_uniforms(self):
        pix = np.arange(1000)
        a, b = _both(lambda k: k.uniforms(42, 6, 1, pix, pix % 7))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_poisson_small_and_large(self):
        pix = np.arange(3000)
        lam = np.concatenate([np.linspace(0, 12, 1000), np.geomspace(9.5, 1e7, 2000)])
        a, b = _both(lambda k: k.poisson(2**63 + 5, 2, 9, pix, lam))
        np.testing.assert_array_equal(a, b)

    def test_pair_counts(self):
        pix = np.arange(500)
        m = (pix * 37) % 400
        tc = np.linspace(0, 1, 500)
        tq = tc[::-1].copy()
        a, b = _both(lambda k: k.pair_counts(11, 1, 4, pix, m, tc, tq, 0.6))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)


@pytest.mark.parametrize("lam", [0.3, 4.0, 9.99, 10.0, 55.0, 3e4])
def test_poisson_moments(backend, lam):
    n = 40000
    x = _backend.kernels().poisson(3, 2, 0, np.arange(n), np.full(n, lam))
    assert abs(x.mean() - lam) < 4 * np.sqrt(lam / n)
    # sample variance of a Poisson has variance ~ (lam + 2 lam^2) / n
    assert abs(x.var(ddof=1) - lam) < 5 * np.sqrt((lam + 2 * lam**2) / n)


def test_poisson_distribution_shape(backend):
    n = 50000
    for lam in (3.0, 25.0):
        x = _backend.kernels().poisson(8, 2, 1, np.arange(n), np.full(n, lam))
        ks = np.arange(int(lam + 6 * np.sqrt(lam)) + 1)
        observed = np.bincount(np.minimum(x, ks[-1]), minlength=ks.size)
        expected = stats.poisson.pmf(ks, lam) * n
        expected[-1] = stats.poisson.sf(ks[-1] - 1, lam) * n
        keep = expected > 5
        chi2 = ((observed[keep] - expected[keep]) ** 2 / expected[keep]).sum()
        assert stats.chi2.sf(chi2, keep.sum() - 1) > 1e-4


def test_poisson_rejects_bad_means(backend):
    k = _backend.kernels()
    with pytest.raises(ValueError):
        k.poisson(0, 2, 0, np.arange(2), np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        k.poisson(0, 2, 0, np.arange(1), np.array([np.nan]))


def test_pair_counts_thinning_rates(backend):
    n = 200
    m = np.full(n, 500)
    sig, idl, coi = _backend.kernels().pair_counts(5, 1, 0, np.arange(n), m, np.full(n, 0.5), np.full(n, 0.5), 0.8)
    total = m.sum()
    assert abs(sig.sum() / total - 0.4) < 4 * np.sqrt(0.4 * 0.6 / total)
    assert abs(idl.sum() / total - 0.8) < 4 * np.sqrt(0.8 * 0.2 / total)
    assert abs(coi.sum() / total - 0.32) < 4 * np.sqrt(0.32 * 0.68 / total)
    assert np.all(coi <= np.minimum(sig, idl))


def test_use_rejects_unknown_backend():
    with pytest.raises(ValueError):
        _backend.use("fortran")

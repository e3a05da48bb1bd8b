"""The numba kernels must agree exactly with their numpy twins."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import hand_checksum
from spandedup import kernels
from spandedup import _kernels_numpy as np_impl

nb_impl = kernels.numba_impl
needs_numba = pytest.mark.skipif(nb_impl is None, reason="numba not installed")
BACKENDS = [np_impl] + ([nb_impl] if nb_impl is not None else [])

byte_arrays = hnp.arrays(np.uint8, st.integers(0, 80))


@pytest.mark.parametrize("impl", BACKENDS)
@settings(max_examples=200, deadline=None)
@given(data=byte_arrays)
def test_ones_complement_sum_matches_hand_sum(impl, data):
    assert impl.ones_complement_sum(data) ^ 0xFFFF == hand_checksum(data.tobytes())


@pytest.mark.parametrize("impl", BACKENDS)
@settings(max_examples=200, deadline=None)
@given(a=byte_arrays, b=byte_arrays)
def test_first_mismatch(impl, a, b):
    compared, equal = impl.first_mismatch(a, b)
    n = min(len(a), len(b))
    diffs = [i for i in range(n) if a[i] != b[i]]
    if diffs:
        assert (compared, equal) == (diffs[0] + 1, False)
    else:
        assert (compared, equal) == (n, True)


def _random_window(rng, n, keys_range=3, len_range=4):
    keys = rng.integers(0, keys_range, n + 1).astype(np.int64)
    avail = rng.integers(0, len_range, n + 1).astype(np.int64)
    offs = np.concatenate([[0], np.cumsum(avail)[:-1]]).astype(np.int64)
    buf = rng.integers(0, 2, int(avail.sum()) + 1).astype(np.uint8)
    return keys, offs, avail, buf


@needs_numba
def test_scan_window_backends_agree(rng):
    for _ in range(500):
        n = int(rng.integers(0, 30))
        keys, offs, avail, buf = _random_window(rng, n)
        lo = int(rng.integers(0, n + 1))
        start = n - 1
        out = []
        for impl in (np_impl, nb_impl):
            hist = np.zeros(8, np.int64)
            j, scanned, rej = impl.scan_window(keys, offs, avail, buf, lo, start, int(keys[n]),
                                               int(offs[n]), int(avail[n]), hist)
            out.append((int(j), int(scanned), int(rej), hist.tolist()))
        assert out[0] == out[1]


@pytest.mark.parametrize("impl", BACKENDS)
def test_scan_window_against_literal_loop(impl, rng):
    for _ in range(300):
        n = int(rng.integers(0, 25))
        keys, offs, avail, buf = _random_window(rng, n)
        lo = int(rng.integers(0, n + 1))
        q = n
        hist = np.zeros(4, np.int64)
        j, scanned, rej = impl.scan_window(keys, offs, avail, buf, lo, n - 1, int(keys[q]),
                                           int(offs[q]), int(avail[q]), hist)
        want_hist = np.zeros(4, np.int64)
        want = (-1, 0, 0)
        cnt = rej_cnt = 0
        for i in range(n - 1, lo - 1, -1):
            cnt += 1
            if keys[i] != keys[q]:
                rej_cnt += 1
                continue
            m = min(avail[i], avail[q])
            a = buf[offs[i]:offs[i] + m]
            b = buf[offs[q]:offs[q] + m]
            d = np.flatnonzero(a != b)
            if d.size == 0:
                want = (i, cnt, rej_cnt)
                break
            want_hist[min(int(d[0]) + 1, 3)] += 1
        else:
            want = (-1, cnt, rej_cnt)
        assert (int(j), int(scanned), int(rej)) == want
        assert hist.tolist() == want_hist.tolist()


def _literal_queue(enq, svc, cap):
    dep = []
    accepted = []
    last = -np.inf
    for t, s in zip(enq, svc):
        in_system = sum(1 for d in accepted if d > t)
        if cap > 0 and in_system >= cap:
            dep.append(np.nan)
            continue
        last = max(last, t) + s
        accepted.append(last)
        dep.append(last)
    return np.array(dep)


@pytest.mark.parametrize("impl", BACKENDS)
@pytest.mark.parametrize("cap", [0, 1, 3, 40])
def test_fifo_queue_against_literal_loop(impl, cap, rng):
    for _ in range(20):
        n = int(rng.integers(1, 3000))
        enq = np.sort(rng.uniform(0, n * 1.0, n))
        svc = rng.choice([0.5, 1.0, 1.5], n)
        got = impl.fifo_queue(enq, svc, cap)
        np.testing.assert_allclose(got, _literal_queue(enq, svc, cap), rtol=0, atol=1e-9, equal_nan=True)


def test_kernels_module_selects_backend():
    assert kernels.BACKEND in ("numba", "numpy")
    assert kernels.scan_window is (nb_impl if kernels.USE_NUMBA else np_impl).scan_window

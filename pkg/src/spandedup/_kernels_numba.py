"""numba-compiled kernels. Signatures mirror ``_kernels_numpy`` exactly."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def ones_complement_sum(data):
    total = 0
    n = data.shape[0]
    for i in range(0, n - 1, 2):
        total += np.int64(data[i]) * 256 + np.int64(data[i + 1])
    if n & 1:
        total += np.int64(data[n - 1]) * 256
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


@njit(cache=True, nogil=True)
def first_mismatch(a, b):
    n = min(a.shape[0], b.shape[0])
    for i in range(n):
        if a[i] != b[i]:
            return i + 1, False
    return n, True


@njit(cache=True, nogil=True)
def scan_window(keys, offs, avail, buf, lo, start, key, q_off, q_avail, hist):
    rejected = 0
    last_bin = hist.shape[0] - 1
    for j in range(start, lo - 1, -1):
        if keys[j] != key:
            rejected += 1
            continue
        m = min(avail[j], q_avail)
        a = offs[j]
        i = 0
        while i < m and buf[a + i] == buf[q_off + i]:
            i += 1
        if i == m:
            return j, start - j + 1, rejected
        c = i + 1
        if c > last_bin:
            c = last_bin
        hist[c] += 1
    if start < lo:
        return -1, 0, 0
    return -1, start - lo + 1, rejected


@njit(cache=True, nogil=True)
def fifo_queue(enqueue, service, cap):
    n = enqueue.shape[0]
    dep = np.empty(n)
    accepted = np.empty(n)
    n_acc = 0
    head = 0
    last = -np.inf
    for i in range(n):
        t = enqueue[i]
        while head < n_acc and accepted[head] <= t:
            head += 1
        if cap > 0 and n_acc - head >= cap:
            dep[i] = np.nan
            continue
        begin = t if t > last else last
        last = begin + service[i]
        dep[i] = last
        accepted[n_acc] = last
        n_acc += 1
    return dep

"""Pure-numpy kernels. Reference behaviour for ``_kernels_numba``."""

import numpy as np

_QUEUE_BLOCK = 1024


def ones_complement_sum(data):
    if data.shape[0] & 1:
        data = np.concatenate([data, np.zeros(1, np.uint8)])
    total = int(np.ascontiguousarray(data).view(">u2").sum(dtype=np.uint64))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def first_mismatch(a, b):
    n = min(a.shape[0], b.shape[0])
    diff = np.flatnonzero(a[:n] != b[:n])
    if diff.size:
        return int(diff[0]) + 1, False
    return n, True


def _rows_first_mismatch(buf, starts, lengths, q_off):
    """Bytes compared for each row against the query, checking columns in doubling chunks."""
    n = starts.shape[0]
    compared = np.zeros(n, np.int64)
    equal = np.zeros(n, bool)
    alive = np.arange(n)
    pos = 0
    width = 1
    top = buf.shape[0] - 1
    while alive.size:
        m = lengths[alive]
        done = m <= pos
        if done.any():
            equal[alive[done]] = True
            compared[alive[done]] = m[done]
            alive = alive[~done]
            m = m[~done]
            if not alive.size:
                break
        w = min(width, int(m.max()) - pos)
        cols = pos + np.arange(w)
        rows = buf[np.minimum(starts[alive][:, None] + cols, top)]
        query = buf[np.minimum(q_off + cols, top)]
        neq = (rows != query) & (cols < m[:, None])
        hit = neq.any(axis=1)
        compared[alive[hit]] = pos + neq[hit].argmax(axis=1) + 1
        alive = alive[~hit]
        pos += w
        width *= 2
    return compared, equal


def scan_window(keys, offs, avail, buf, lo, start, key, q_off, q_avail, hist):
    if start < lo:
        return -1, 0, 0
    cand = np.flatnonzero(keys[lo:start + 1] == key)[::-1] + lo
    span = start - lo + 1
    if cand.size == 0:
        return -1, span, span
    lengths = np.minimum(avail[cand], q_avail)
    compared, equal = _rows_first_mismatch(buf, offs[cand], lengths, q_off)
    last_bin = hist.shape[0] - 1
    if equal.any():
        p = int(equal.argmax())
        j = int(cand[p])
        np.add.at(hist, np.minimum(compared[:p], last_bin), 1)
        scanned = start - j + 1
        return j, scanned, scanned - (p + 1)
    np.add.at(hist, np.minimum(compared, last_bin), 1)
    return -1, span, span - cand.size


def fifo_queue(enqueue, service, cap):
    n = enqueue.shape[0]
    if cap <= 0:
        total = np.cumsum(service)
        return np.maximum.accumulate(enqueue - (total - service)) + total
    dep = np.full(n, np.nan)
    accepted = np.empty(n)
    n_acc = 0
    last = -np.inf
    i = 0
    while i < n:
        hi = min(n, i + _QUEUE_BLOCK)
        arr = enqueue[i:hi]
        svc = service[i:hi]
        total = np.cumsum(svc)
        # departures if every packet in the block were accepted
        d = np.maximum(np.maximum.accumulate(arr - (total - svc)), last) + total
        k = np.arange(arr.shape[0])
        before = n_acc - np.searchsorted(accepted[:n_acc], arr, side="right")
        within = k - np.minimum(k, np.searchsorted(d, arr, side="right"))
        bad = np.flatnonzero(before + within >= cap)
        b = int(bad[0]) if bad.size else arr.shape[0]
        dep[i:i + b] = d[:b]
        accepted[n_acc:n_acc + b] = d[:b]
        n_acc += b
        if b:
            last = d[b - 1]
        i += b + (1 if bad.size else 0)
    return dep

"""Pure-numpy versions of the tree sweeps in ``_ckernels``."""
import numpy as np


def _offset(n, k):
    return ((1 << (n * k)) - 1) // ((1 << n) - 1)


def pyramid_sums(x, n, L):
    b = 1 << n
    levels = [np.asarray(x, dtype=np.float64)]
    for _ in range(L):
        levels.append(levels[-1].reshape(-1, b).sum(axis=1))
    return np.concatenate(levels[::-1])


def broadcast_sum(coef, n, L):
    acc = coef[:1].copy()
    for k in range(1, L + 1):
        off = _offset(n, k)
        acc = np.repeat(acc, 1 << n) + coef[off:off + (1 << (n * k))]
    return acc


def suffix_max_integrals(avg, n, L):
    b = 1 << n
    out = np.empty(_offset(n, L + 1))
    off = _offset(n, L)
    running = avg[off:].copy()
    out[off:] = running
    for k in range(L - 1, -1, -1):
        off = _offset(n, k)
        level = avg[off:off + (1 << (n * k))]
        running = np.maximum(running, np.repeat(level, b ** (L - k)))
        out[off:off + level.size] = running.reshape(level.size, -1).sum(axis=1)
    return out


def chain_max(avg, n, L, k0, m0):
    span = 1 << (n * (L - k0))
    out = np.zeros(span)
    for k in range(k0, L + 1):
        off = _offset(n, k)
        width = 1 << (n * (k - k0))
        level = avg[off + m0 * width: off + (m0 + 1) * width]
        out = np.maximum(out, np.repeat(level, span // width))
    return out

"""Reference implementations kept deliberately naive and independent of the package."""
import numpy as np


def naive_matmul(a, b):
    n, k = len(a), len(a[0])
    m = len(b[0])
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return np.array(out)


def block_kron(c, d):
    """Kronecker product by writing out each block c[i, j] * d."""
    p1, q1 = c.shape
    p2, q2 = d.shape
    out = np.zeros((p1 * p2, q1 * q2))
    for i in range(p1):
        for j in range(q1):
            for k in range(p2):
                for l in range(q2):
                    out[i * p2 + k, j * q2 + l] = c[i, j] * d[k, l]
    return out


def dense_delta(kernels):
    """sum_i c_i (x) (a_i b_i) through the block-expansion oracle."""
    return sum(block_kron(k.c, k.a @ k.b) for k in kernels)


def rescale_loop(s1, s2, z):
    return np.array([(1.0 + s1[j]) * z[j] + s2[j] for j in range(len(z))])


def mlp_forward(weights, x):
    """Dense tanh network; weights is a list of (W, b) with W shaped (d_in, d_out)."""
    h = x
    for i, (w, b) in enumerate(weights):
        h = h @ w + (0.0 if b is None else b)
        if i < len(weights) - 1:
            h = np.tanh(h)
    return h

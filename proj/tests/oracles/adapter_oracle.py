"""Independent numpy forward pass of the adapter on a tiny deterministic config.

Every parameter is filled with fill(name, j) = 0.3 * sin(0.37 * (j + 1) + 0.11 * salt(name))
where salt is the byte sum of the name modulo 101. Word tokens at depth l are
0.5 * cos(0.23 * (t * width + c + 1) + l). The test in tests/unit/test_adapter.cpp
applies the same fill and compares against the numbers printed here.
"""
import math

import numpy as np

D, DT, L, N, BANDS, C = 8, 6, 3, 2, 2, 8
T = 4  # word tokens per depth


def salt(name):
    return sum(name.encode()) % 101


def fill(name, shape):
    n = int(np.prod(shape))
    j = np.arange(n)
    return (0.3 * np.sin(0.37 * (j + 1) + 0.11 * salt(name))).reshape(shape)


def linear(prefix, i, o):
    return fill(prefix + "/w", (i, o)), fill(prefix + "/b", (1, o))


def gelu(x):
    return 0.5 * x * (1 + np.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x ** 3)))


def mlp(prefix, dims, x):
    for i in range(len(dims) - 1):
        w, b = linear(f"{prefix}/l{i}", dims[i], dims[i + 1])
        x = x @ w + b
        if i + 2 < len(dims):
            x = gelu(x)
    return x


def layer_norm(x, eps=1e-5):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def attention(q, k, v, mask=None):
    logits = q @ k.T / math.sqrt(q.shape[1])
    out = np.zeros((q.shape[0], v.shape[1]))
    for r in range(q.shape[0]):
        row = logits[r].copy()
        if mask is not None:
            if np.isinf(mask[r]).all():
                continue
            row = row + mask[r]
        e = np.exp(row - row.max())
        out[r] = (e / e.sum()) @ v
    return out


def fourier(v):
    return [math.sin(2 * math.pi * (2 ** j) * v) for j in range(BANDS)] + \
           [math.cos(2 * math.pi * (2 ** j) * v) for j in range(BANDS)]


def location(box):
    feats = np.array(sum((fourier(c) for c in box), [])).reshape(1, -1)
    return mlp("adapter/location", [8 * BANDS, D, D], feats)


def words(depth):
    t = np.arange(T * DT).reshape(T, DT)
    return 0.5 * np.cos(0.23 * (t + 1) + depth)


def eot():
    return 0.5 * np.sin(0.41 * (np.arange(DT) + 1)).reshape(1, DT)


def resample(depth, tokens):
    w, b = linear(f"adapter/resampler/in{depth}", DT, D)
    ctx = layer_norm(tokens @ w + b)
    state = fill("adapter/queries", (L, D))
    for blk in range(N):
        p = f"adapter/resampler/block{blk}"
        proj = {n: linear(f"{p}/{n}", D, D) for n in "qkvo"}
        normed = layer_norm(state)
        q = normed @ proj["q"][0] + proj["q"][1]
        k = ctx @ proj["k"][0] + proj["k"][1]
        v = ctx @ proj["v"][0] + proj["v"][1]
        state = state + attention(q, k, v) @ proj["o"][0] + proj["o"][1]
        state = state + mlp(f"{p}/mlp", [D, 2 * D, D], layer_norm(state))
    return state


def tokens(box):
    loc = location(box)
    rows = [mlp("adapter/grounding", [DT + D, D, D], np.concatenate([eot(), loc], axis=1))]
    for depth in range(2):
        rows.append(resample(depth, words(depth)) + loc)
    return np.concatenate(rows, axis=0)


def fmt(a):
    return ", ".join(repr(float(x)) for x in np.asarray(a).ravel())


print("location(0.25,0.25,0.5,0.5):", fmt(location((0.25, 0.25, 0.5, 0.5))))
H = tokens((0.0, 0.0, 0.5, 0.5))
print("H shape", H.shape)
print("H row0:", fmt(H[0]))
print("H row1:", fmt(H[1]))
print("H row6:", fmt(H[6]))

# Two cells, two tokens, hand-sized masked softmax: cell 1 is outside the region.
q = np.array([[1.0, 0.0], [0.0, 1.0]])
k = np.array([[1.0, 1.0], [0.0, -1.0]])
v = np.array([[2.0, 0.0], [0.0, 4.0]])
mask = np.array([[0.0, 0.0], [-np.inf, -np.inf]])
print("two-cell:", fmt(attention(q, k, v, mask)))
print("sigmoid(1), sigmoid(4):", repr(1 / (1 + math.exp(-1))), repr(1 / (1 + math.exp(-4))))
print("tanh(1):", repr(math.tanh(1.0)))

"""Straight-line scalar reference for a tiny run of the pipeline.

Everything is plain Python floats on nested lists (rows x cols x channels), no
numpy and no package imports, so it shares no code with the implementation.
It covers the setting used by the conformance test:

* mask prox = clamp, background prox = clamp, restoration prox = clamp, no cue
* auto step sizes for the mask (0.9 / max X^2) and background (0.9)
* restoration operator D(x) = gain * x**gamma with the observation Y as target
* quality score = sum of the four min-max normalised components, argmax with
  ties broken toward the lower inner index
"""

import math

LUMA = (0.299, 0.587, 0.114)
RANGES = ((0.0, 0.05), (0.0, 0.5), (0.0, 1.0), (0.0, 1.0))


def clamp(v):
    return min(max(v, 0.0), 1.0)


def shape(x):
    return len(x), len(x[0]), len(x[0][0])


def luminance(x):
    h, w, c = shape(x)
    if c == 3:
        return [[LUMA[0] * x[i][j][0] + LUMA[1] * x[i][j][1] + LUMA[2] * x[i][j][2] for j in range(w)] for i in range(h)]
    return [[sum(x[i][j]) / c for j in range(w)] for i in range(h)]


def laplacian_2x2(a):
    # 5-point Laplacian with replicated borders: on a 2x2 grid the outside
    # neighbours are the pixel itself, leaving one vertical and one horizontal term
    return [[a[1 - i][j] + a[i][1 - j] - 2.0 * a[i][j] for j in range(2)] for i in range(2)]


def variance(vals):
    m = sum(vals) / len(vals)
    return sum((v - m) ** 2 for v in vals) / len(vals)


def quality(x):
    lum = luminance(x)
    flat = [v for row in lum for v in row]
    sharp = variance([v for row in laplacian_2x2(lum) for v in row])
    contrast = math.sqrt(variance(flat))
    exposure = 1.0 - 2.0 * abs(sum(flat) / len(flat) - 0.5)
    # the dark-channel window covers the whole 2x2 image
    clarity = 1.0 - min(v for row in x for px in row for v in px)
    total = 0.0
    for value, (lo, hi) in zip((sharp, contrast, exposure, clarity), RANGES):
        total += clamp((value - lo) / (hi - lo))
    return total


def argmax_two(scores):
    t1 = 0
    for n in range(1, len(scores)):
        if scores[n] > scores[t1]:
            t1 = n
    if len(scores) == 1:
        return t1, t1
    rest = [n for n in range(len(scores)) if n != t1]
    t2 = rest[0]
    for n in rest[1:]:
        if scores[n] > scores[t2]:
            t2 = n
    return t1, t2


def stage(m, b, x, y, n_inner, alpha_x, gain, gamma):
    h, w, c = shape(x)
    peak = max(v * v for row in x for px in row for v in px)
    alpha_m = 0.9 / peak if peak > 0 else 0.9
    alpha_b = 0.9

    # mask: gradient of 0.5*||X - X*M - B||^2, averaged over channels, then clamp
    m_new = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            g = 0.0
            for ch in range(c):
                xv = x[i][j][ch]
                g = g + xv * (xv * m[i][j] + b[i][j][ch] - xv)
            g = g / c
            m_new[i][j] = clamp(m[i][j] - alpha_m * g)

    # background: B - alpha*(B + X*M - X), then clamp
    b_new = [[[0.0] * c for _ in range(w)] for _ in range(h)]
    for i in range(h):
        for j in range(w):
            for ch in range(c):
                xv = x[i][j][ch]
                bv = b[i][j][ch]
                b_new[i][j][ch] = clamp(bv - alpha_b * (bv + xv * m_new[i][j] - xv))

    # restoration: X - alpha * J^T (D(X) - Y), D(x) = gain * x**gamma, then clamp
    iterates = []
    cur = x
    for _ in range(n_inner):
        nxt = [[[0.0] * c for _ in range(w)] for _ in range(h)]
        for i in range(h):
            for j in range(w):
                for ch in range(c):
                    xv = cur[i][j][ch]
                    resid = gain * max(xv, 0.0) ** gamma - y[i][j][ch]
                    jac = gain * gamma * max(xv, 0.0) ** (gamma - 1.0)
                    nxt[i][j][ch] = clamp(xv - alpha_x * (jac * resid))
        iterates.append(nxt)
        cur = nxt

    t1, t2 = argmax_two([quality(it) for it in iterates])
    return m_new, b_new, iterates[t1], iterates[t2]


def run(y, K, n_inner, alpha_x, gain, gamma):
    """Return ``(mask, background, restored)`` after K stages."""
    h, w, c = shape(y)
    m = [[0.0] * w for _ in range(h)]
    b = [[[0.0] * c for _ in range(w)] for _ in range(h)]
    x = y
    for _ in range(K):
        m, b, x, _ = stage(m, b, x, y, n_inner, alpha_x, gain, gamma)
    return m, b, x

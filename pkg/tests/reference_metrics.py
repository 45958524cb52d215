"""Direct loop implementations used as oracles for the vectorised metrics."""

import numpy as np

C1 = 0.01**2
C2 = 0.03**2
WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def window_2d(size=11, sigma=1.5):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def naive_ssim_terms(x, y):
    """Mean luminance*cs and mean cs over every fully-inside 11x11 window."""
    w = window_2d()
    h, wd = x.shape
    lcs, cs_only = [], []
    for i in range(h - 10):
        for j in range(wd - 10):
            px = x[i:i + 11, j:j + 11]
            py = y[i:i + 11, j:j + 11]
            mx = np.sum(w * px)
            my = np.sum(w * py)
            vx = np.sum(w * (px - mx) ** 2)
            vy = np.sum(w * (py - my) ** 2)
            cxy = np.sum(w * (px - mx) * (py - my))
            lum = (2 * mx * my + C1) / (mx**2 + my**2 + C1)
            cs = (2 * cxy + C2) / (vx + vy + C2)
            lcs.append(lum * cs)
            cs_only.append(cs)
    return float(np.mean(lcs)), float(np.mean(cs_only))


def naive_ssim(x, y):
    return naive_ssim_terms(x, y)[0]


def naive_pool(x):
    h, w = x.shape[0] // 2, x.shape[1] // 2
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            out[i, j] = (x[2 * i, 2 * j] + x[2 * i + 1, 2 * j] + x[2 * i, 2 * j + 1] + x[2 * i + 1, 2 * j + 1]) / 4.0
    return out


def naive_ms_ssim(x, y):
    result = 1.0
    for j, weight in enumerate(WEIGHTS):
        full, cs = naive_ssim_terms(x, y)
        term = full if j == len(WEIGHTS) - 1 else cs
        result *= max(term, 0.0) ** weight
        x, y = naive_pool(x), naive_pool(y)
    return result


def naive_sobel(x):
    """(gx, gy) with half-sample symmetric borders."""
    p = np.pad(x, 1, mode="symmetric")
    h, w = x.shape
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            a, b = i + 1, j + 1
            gx[i, j] = (p[a - 1, b + 1] + 2 * p[a, b + 1] + p[a + 1, b + 1]) - (p[a - 1, b - 1] + 2 * p[a, b - 1] + p[a + 1, b - 1])
            gy[i, j] = (p[a + 1, b - 1] + 2 * p[a + 1, b] + p[a + 1, b + 1]) - (p[a - 1, b - 1] + 2 * p[a - 1, b] + p[a - 1, b + 1])
    return gx, gy


def naive_tile_var(g, patch):
    h, w = g.shape
    out = np.zeros((h // patch, w // patch))
    for ti in range(h // patch):
        for tj in range(w // patch):
            vals = [g[ti * patch + a, tj * patch + b] for a in range(patch) for b in range(patch)]
            mean = sum(vals) / len(vals)
            out[ti, tj] = sum((v - mean) ** 2 for v in vals) / len(vals)
    return out


def naive_gv(x, y, patch=8):
    gxp, gyp = naive_sobel(x)
    gxt, gyt = naive_sobel(y)
    dx = np.mean((naive_tile_var(gxp, patch) - naive_tile_var(gxt, patch)) ** 2)
    dy = np.mean((naive_tile_var(gyp, patch) - naive_tile_var(gyt, patch)) ** 2)
    return 0.5 * (dx + dy)

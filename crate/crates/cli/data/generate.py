"""Regenerates the bundled example datasets (numpy, fixed seeds)."""

import numpy as np


def sample(seed, pi_scale, n=500, k=3, groups=25, beta=1.0, rho=0.5):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, k))
    w = rng.standard_normal(n)
    e1, e2 = rng.standard_normal((2, n))
    scale = 0.5 + np.abs(z[:, 0])
    v = e1 * scale
    u = (rho * e1 + np.sqrt(1 - rho**2) * e2) * scale
    x = 0.3 + z @ np.full(k, pi_scale) + 0.5 * w + v
    y = 1.0 + beta * x - 0.7 * w + u
    g = np.arange(n) * groups // n + 1
    cols = {"y": y, "x": x, **{f"z{j + 1}": z[:, j] for j in range(k)}, "w": w}
    return cols, g


def write(path, cols, g):
    names = list(cols) + ["g"]
    with open(path, "w") as f:
        f.write(",".join(names) + "\n")
        for i in range(len(g)):
            f.write(",".join(f"{cols[c][i]:.10f}" for c in cols) + f",{g[i]}\n")


if __name__ == "__main__":
    write("strong_iv.csv", *sample(11, 0.6))
    write("irrelevant_iv.csv", *sample(12, 0.0))

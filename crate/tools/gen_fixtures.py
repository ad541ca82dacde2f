"""Regenerate the spectral fixtures shipped in crates/core/data.

Spectra are smooth reflectance-like curves over 188 bands spanning
0.4-2.5 um: a sigmoidal continuum with a linear slope minus a few Gaussian
absorption features. The first ten curves are the benchmark endmembers; the
library adds distractor curves and keeps only atoms at least 4.44 degrees
away from every atom already kept.
"""

import numpy as np

BANDS = 188
N_ENDMEMBERS = 10
N_LIBRARY = 60
MIN_EM_ANGLE = 8.0
MIN_LIB_ANGLE = 4.44


def curve(rng, wl):
    base = rng.uniform(0.15, 0.45)
    rise = rng.uniform(-0.2, 0.45)
    center = rng.uniform(0.6, 1.6)
    width = rng.uniform(0.05, 0.3)
    slope = rng.uniform(-0.1, 0.1)
    s = base + rise / (1.0 + np.exp(-(wl - center) / width)) + slope * (wl - 1.45)
    for _ in range(rng.integers(2, 6)):
        c = rng.uniform(0.45, 2.45)
        w = rng.uniform(0.01, 0.12)
        d = rng.uniform(0.03, 0.25)
        s = s - d * np.exp(-0.5 * ((wl - c) / w) ** 2)
    return np.clip(s, 0.02, 0.98)


def angle(a, b):
    c = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    return np.degrees(np.arccos(np.clip(c, -1.0, 1.0)))


def draw(rng, wl, kept, count, min_angle):
    out = list(kept)
    while len(out) < count:
        s = np.round(curve(rng, wl), 6)
        if all(angle(s, k) >= min_angle for k in out):
            out.append(s)
    return out


def write(path, names, spectra):
    with open(path, "w") as f:
        f.write(",".join(names) + "\n")
        mat = np.array(spectra).T
        for row in mat:
            f.write(",".join(f"{v:.6f}" for v in row) + "\n")


def main():
    rng = np.random.default_rng(20240501)
    wl = np.linspace(0.4, 2.5, BANDS)
    ems = draw(rng, wl, [], N_ENDMEMBERS, MIN_EM_ANGLE)
    lib = draw(rng, wl, ems, N_LIBRARY, MIN_LIB_ANGLE)
    em_names = [f"mineral_{i + 1:02}" for i in range(N_ENDMEMBERS)]
    lib_names = em_names + [f"atom_{i + 1:02}" for i in range(N_ENDMEMBERS, N_LIBRARY)]
    write("crates/core/data/endmembers.csv", em_names, ems)
    write("crates/core/data/library.csv", lib_names, lib)
    angles = [angle(a, b) for i, a in enumerate(ems) for b in ems[i + 1:]]
    print("endmember min pairwise angle", min(angles))


if __name__ == "__main__":
    main()

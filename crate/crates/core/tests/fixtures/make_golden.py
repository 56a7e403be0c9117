"""Regenerates golden_in.pgm / golden_out.pgm.

Expected output: 3x3 median with edge replication, then global histogram
equalization round((cdf - cdf_min) / (N - cdf_min) * 255).
"""
import numpy as np

rng = np.random.default_rng(20240607)
img = rng.integers(40, 200, size=(8, 8)).astype(np.int64)
img[2, 3] = 255  # salt
img[5, 6] = 0  # pepper

padded = np.pad(img, 1, mode="edge")
med = np.empty_like(img)
for y in range(8):
    for x in range(8):
        med[y, x] = np.median(padded[y : y + 3, x : x + 3])

hist = np.bincount(med.ravel(), minlength=256)
cdf = np.cumsum(hist)
cdf_min = cdf[cdf > 0][0]
lut = np.floor((cdf - cdf_min) / (med.size - cdf_min) * 255 + 0.5).astype(np.int64)
out = lut[med]


def write_pgm(path, a):
    with open(path, "wb") as f:
        f.write(b"P5\n8 8\n255\n")
        f.write(a.astype(np.uint8).tobytes())


write_pgm("golden_in.pgm", img)
write_pgm("golden_out.pgm", out)

"""Direct integer convolution used to cross-check the crossbar simulation."""

import numpy as np


def conv2d(weights, x, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Dense cross-correlation of (O, I, Kh, Kw) weights with a (I, H, W) map, int64."""
    w = np.asarray(weights, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    o, i, kh, kw = w.shape
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    _, h, wd = x.shape
    oh = (h - kh) // stride + 1
    ow = (wd - kw) // stride + 1
    out = np.zeros((o, oh, ow), dtype=np.int64)
    for y in range(oh):
        for z in range(ow):
            window = x[:, y * stride : y * stride + kh, z * stride : z * stride + kw]
            out[:, y, z] = np.tensordot(w, window, axes=([1, 2, 3], [0, 1, 2]))
    return out

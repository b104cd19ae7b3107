"""
Brute-force reference implementations.

Plain nested loops over every index, used to verify the vectorised kernels in
tests and in the ``verify`` command. Slow by construction; keep shapes small.
"""

# Third-party imports
import numpy as np


def naive_conv2d(
    x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int = 1, padding: int = 0
) -> np.ndarray:
    n, cin, h, w = x.shape
    cout, _, kh, kw = weight.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, oh, ow), dtype=np.result_type(x, weight))
    for b in range(n):
        for o in range(cout):
            for r in range(oh):
                for c in range(ow):
                    acc = bias[o]
                    for ch in range(cin):
                        for i in range(kh):
                            for j in range(kw):
                                row = r * stride + i - padding
                                col = c * stride + j - padding
                                if 0 <= row < h and 0 <= col < w:
                                    acc += x[b, ch, row, col] * weight[o, ch, i, j]
                    out[b, o, r, c] = acc
    return out


def naive_conv2d_transpose(
    x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int = 1, padding: int = 0
) -> np.ndarray:
    n, cin, h, w = x.shape
    _, cout, kh, kw = weight.shape
    oh = (h - 1) * stride - 2 * padding + kh
    ow = (w - 1) * stride - 2 * padding + kw
    out = np.zeros((n, cout, oh, ow), dtype=np.result_type(x, weight))
    for b in range(n):
        for ch in range(cin):
            for r in range(h):
                for c in range(w):
                    for o in range(cout):
                        for i in range(kh):
                            for j in range(kw):
                                row = r * stride + i - padding
                                col = c * stride + j - padding
                                if 0 <= row < oh and 0 <= col < ow:
                                    out[b, o, row, col] += x[b, ch, r, c] * weight[ch, o, i, j]
    out += bias[None, :, None, None]
    return out


def naive_dense(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    n, f = x.shape
    m = weight.shape[1]
    out = np.zeros((n, m), dtype=np.result_type(x, weight))
    for b in range(n):
        for j in range(m):
            acc = bias[j]
            for k in range(f):
                acc += x[b, k] * weight[k, j]
            out[b, j] = acc
    return out


def naive_bilinear_resize(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Direct corner-aligned interpolation formula, one output pixel at a time."""
    n, c, h, w = x.shape
    out = np.zeros((n, c, out_h, out_w), dtype=x.dtype)
    for r in range(out_h):
        src_r = 0.0 if out_h == 1 or h == 1 else r * (h - 1) / (out_h - 1)
        r0 = min(int(np.floor(src_r)), h - 1)
        r1 = min(r0 + 1, h - 1)
        fr = src_r - r0
        for q in range(out_w):
            src_c = 0.0 if out_w == 1 or w == 1 else q * (w - 1) / (out_w - 1)
            c0 = min(int(np.floor(src_c)), w - 1)
            c1 = min(c0 + 1, w - 1)
            fc = src_c - c0
            out[:, :, r, q] = (
                x[:, :, r0, c0] * (1 - fr) * (1 - fc)
                + x[:, :, r0, c1] * (1 - fr) * fc
                + x[:, :, r1, c0] * fr * (1 - fc)
                + x[:, :, r1, c1] * fr * fc
            )
    return out

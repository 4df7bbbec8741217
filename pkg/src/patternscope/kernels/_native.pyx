# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see kernels/fallback.py for the reference semantics."""

import numpy as np

BACKEND = "native"


def find_keyword(text, keywords):
    cdef Py_ssize_t i, n = len(keywords)
    for i in range(n):
        if keywords[i] in text:
            return i
    return -1


def match_strings(class_lower, ancestors_lower, keywords):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t nk = len(keywords), na = len(ancestors_lower)
    for i in range(nk):
        if keywords[i] in class_lower:
            return 1, i
    for i in range(nk):
        kw = keywords[i]
        for j in range(na):
            if kw in ancestors_lower[j]:
                return 2, i
    return 0, -1


def resize_area_mean(img, Py_ssize_t out_h, Py_ssize_t out_w):
    img = np.ascontiguousarray(img)
    if img.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got shape {img.shape}")
    cdef const unsigned char[:, :, ::1] src = img
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], c = src.shape[2]
    if h == 0 or w == 0 or out_h <= 0 or out_w <= 0:
        raise ValueError("empty image or non-positive output size")
    out = np.zeros((out_h, out_w, c), dtype=np.float64)
    cdef double[:, :, ::1] dst = out
    # Output cell (i, j) averages the image over the fractional box
    # [i*h/out_h, (i+1)*h/out_h) x [j*w/out_w, (j+1)*w/out_w).
    cdef double scale = ((<double> out_h) / (<double> h)) * \
                        ((<double> out_w) / (<double> w))
    cdef Py_ssize_t i, j, k, y, x, y0, y1, x0, x1
    cdef double ys, ye, xs, xe, wy, wx, wyx
    for i in range(out_h):
        ys = (<double> (i * h)) / (<double> out_h)
        ye = (<double> ((i + 1) * h)) / (<double> out_h)
        y0 = <Py_ssize_t> ys
        y1 = y0
        while (<double> y1) < ye:
            y1 += 1
        if y1 > h:
            y1 = h
        for j in range(out_w):
            xs = (<double> (j * w)) / (<double> out_w)
            xe = (<double> ((j + 1) * w)) / (<double> out_w)
            x0 = <Py_ssize_t> xs
            x1 = x0
            while (<double> x1) < xe:
                x1 += 1
            if x1 > w:
                x1 = w
            for y in range(y0, y1):
                wy = (ye if ye < (<double> (y + 1)) else (<double> (y + 1))) \
                     - (ys if ys > (<double> y) else (<double> y))
                for x in range(x0, x1):
                    wx = (xe if xe < (<double> (x + 1)) else (<double> (x + 1))) \
                         - (xs if xs > (<double> x) else (<double> x))
                    wyx = wy * wx
                    for k in range(c):
                        dst[i, j, k] += wyx * (<double> src[y, x, k])
            for k in range(c):
                dst[i, j, k] *= scale
    return out

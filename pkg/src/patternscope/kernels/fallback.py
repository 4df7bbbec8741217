"""Pure (non-compiled) kernel implementations.

Reference semantics for the compiled extension; also the runtime path when
the extension is unavailable. ``resize_area_mean`` leans on numpy, the
string kernels are plain Python.
"""

import numpy as np

BACKEND = "fallback"


def find_keyword(text, keywords):
    """Index of the first keyword that is a substring of ``text``, else -1.

    Both sides are expected pre-lowercased; this is raw substring search.
    """
    for i, kw in enumerate(keywords):
        if kw in text:
            return i
    return -1


def match_strings(class_lower, ancestors_lower, keywords):
    """Match one node's strings against a rule's keywords.

    Returns ``(via, kw_index)`` with ``via`` 1 for a class-name match, 2 for
    an ancestor match, 0 for none. Class matches take precedence; within a
    tier the first keyword in rule order wins (for ancestors, keyword order
    is checked before ancestor order).
    """
    for i, kw in enumerate(keywords):
        if kw in class_lower:
            return 1, i
    for i, kw in enumerate(keywords):
        for anc in ancestors_lower:
            if kw in anc:
                return 2, i
    return 0, -1


_weights_cache = {}


def _axis_weights(n_in, n_out):
    """(n_out, n_in) fractional-coverage matrix; every row sums to 1.

    Output cell i covers input span [i*n_in/n_out, (i+1)*n_in/n_out); the
    weight on input pixel y is its overlap with that span, normalized by the
    span length.
    """
    key = (n_in, n_out)
    cached = _weights_cache.get(key)
    if cached is not None:
        return cached
    i = np.arange(n_out, dtype=np.float64)[:, None]
    y = np.arange(n_in, dtype=np.float64)[None, :]
    start = i * n_in / n_out
    end = (i + 1.0) * n_in / n_out
    ov = np.minimum(end, y + 1.0) - np.maximum(start, y)
    np.clip(ov, 0.0, None, out=ov)
    w = ov * (n_out / n_in)
    _weights_cache[key] = w
    return w


def resize_area_mean(img, out_h, out_w):
    """Exact area-average resize of an (H, W, C) uint8 image to float64.

    Each output pixel is the mean of the image over its fractional-overlap
    box, so the result is deterministic and alias-resistant for both down-
    and upsampling.
    """
    img = np.asarray(img)
    if img.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got shape {img.shape}")
    h, w = img.shape[0], img.shape[1]
    if h == 0 or w == 0 or out_h <= 0 or out_w <= 0:
        raise ValueError("empty image or non-positive output size")
    rows = _axis_weights(h, out_h)
    cols = _axis_weights(w, out_w)
    return np.einsum("ih,hwc,jw->ijc", rows, img.astype(np.float64), cols,
                     optimize=True)

"""Pure-Python kernel implementations.

Reference semantics for the compiled backend: expressions here are written
in exactly the order the Cython version evaluates them so both produce
bit-identical IEEE-754 results.
"""

from __future__ import annotations

from array import array

BACKEND = "pure"


def iou_matrix(a, b) -> array:
    """Pairwise IoU of corner-form boxes.

    ``a`` and ``b`` are flat float sequences ``[x0, y0, x1, y1, ...]``;
    returns a row-major ``(len(a)//4) x (len(b)//4)`` array('d').
    """
    n = len(a) // 4
    m = len(b) // 4
    out = array("d", bytes(8 * n * m))
    for i in range(n):
        ax0 = a[4 * i]
        ay0 = a[4 * i + 1]
        ax1 = a[4 * i + 2]
        ay1 = a[4 * i + 3]
        area_a = (ax1 - ax0) * (ay1 - ay0)
        row = i * m
        for j in range(m):
            bx0 = b[4 * j]
            by0 = b[4 * j + 1]
            bx1 = b[4 * j + 2]
            by1 = b[4 * j + 3]
            iw = min(ax1, bx1) - max(ax0, bx0)
            if iw <= 0.0:
                continue
            ih = min(ay1, by1) - max(ay0, by0)
            if ih <= 0.0:
                continue
            inter = iw * ih
            union = area_a + (bx1 - bx0) * (by1 - by0) - inter
            if union > 0.0:
                out[row + j] = inter / union
    return out


def greedy_match(ious, n_det: int, n_gt: int, order, tau: float) -> list[int]:
    """Greedy one-to-one matching over a flat IoU matrix.

    ``order`` lists detection indices in descending confidence; each takes
    the still-unmatched ground truth of maximal IoU if that IoU >= ``tau``
    (first maximum wins on ties).  Returns the matched ground-truth index
    per detection, -1 where unmatched.
    """
    matched = [-1] * n_det
    taken = bytearray(n_gt)
    for di in order:
        row = di * n_gt
        best = -1
        best_iou = 0.0
        for gi in range(n_gt):
            if taken[gi]:
                continue
            v = ious[row + gi]
            if v >= tau and v > best_iou:
                best = gi
                best_iou = v
        if best >= 0:
            matched[di] = best
            taken[best] = 1
    return matched

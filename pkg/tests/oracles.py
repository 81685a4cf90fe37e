"""Independent reference implementations used only by the tests.

They deliberately share no code with the package: IOU by counting integer
pixel cells, matching and AP by direct enumeration of the ranked list, and
connected components by breadth-first search.
"""

from collections import deque


def cells(box):
    x0, y0, x1, y1 = (int(v) for v in box)
    return {(x, y) for x in range(x0, x1) for y in range(y0, y1)}


def iou_cells(a, b):
    ca, cb = cells(a), cells(b)
    union = len(ca | cb)
    return len(ca & cb) / union if union else 0.0


def brute_force_ap(images, iou_threshold=0.5):
    """``images``: list of (dets, gts); dets are (box, confidence), gts are boxes.

    Walks the global ranking one detection at a time, records the PR point
    after each, then sums recall steps times the best precision at any later
    rank.
    """
    ranked = []
    n_gt = 0
    for img_idx, (dets, gts) in enumerate(images):
        n_gt += len(gts)
        order = sorted(range(len(dets)), key=lambda i: -dets[i][1])
        used = set()
        for local, di in enumerate(order):
            box, conf = dets[di]
            best, best_gi = -1.0, None
            for gi, g in enumerate(gts):
                if gi in used:
                    continue
                v = iou_cells(box, g)
                if v >= iou_threshold and v > best:
                    best, best_gi = v, gi
            if best_gi is not None:
                used.add(best_gi)
            ranked.append((-conf, img_idx, local, best_gi is not None))
    ranked.sort()
    if n_gt == 0:
        return 0.0
    points = []
    tp = 0
    for k, item in enumerate(ranked, start=1):
        tp += item[3]
        points.append((tp / k, tp / n_gt, item[3]))
    ap = 0.0
    for k, (_, _, is_tp) in enumerate(points):
        if is_tp:
            ap += (1.0 / n_gt) * max(p for p, _, _ in points[k:])
    return ap


def bfs_components(mask):
    """8-connected components as (x_min, y_min, x_max, y_max, area), sorted by (y_min, x_min)."""
    h, w = len(mask), len(mask[0])
    seen = [[False] * w for _ in range(h)]
    out = []
    for y in range(h):
        for x in range(w):
            if not mask[y][x] or seen[y][x]:
                continue
            q = deque([(y, x)])
            seen[y][x] = True
            xs, ys = [], []
            while q:
                cy, cx = q.popleft()
                xs.append(cx)
                ys.append(cy)
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < h and 0 <= nx < w and mask[ny][nx] and not seen[ny][nx]:
                            seen[ny][nx] = True
                            q.append((ny, nx))
            out.append((min(xs), min(ys), max(xs) + 1, max(ys) + 1, len(xs)))
    out.sort(key=lambda r: (r[1], r[0]))
    return out

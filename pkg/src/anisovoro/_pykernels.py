"""Pure numpy/scipy fallback for the compiled kernels (same contracts)."""
import numpy as np
from scipy import ndimage


def _qform(points, site, q):
    d = site[None, :] - points
    n = points.shape[1]
    acc = np.zeros(len(points))
    for i in range(n):
        for j in range(n):
            acc = acc + (d[:, i] * q[..., i, j]) * d[:, j]
    return acc


def update_nearest(points, qcells, site, qsite, site_index, best, labels, ls, threads=1):
    d2 = _qform(points, site, qsite[0] if ls else qcells)
    better = d2 < best
    best[better] = d2[better]
    labels[better] = site_index


def label_sites(points, qcells, sites, qsites, ls, threads=1):
    best = np.full(len(points), np.inf)
    labels = np.full(len(points), -1, dtype=np.int64)
    for s in range(len(sites)):
        update_nearest(points, qcells, sites[s], qsites[s:s + 1], s, best, labels, ls)
    return labels, best


def label_components(labels, shape):
    lab = np.asarray(labels).reshape(shape)
    structure = ndimage.generate_binary_structure(len(shape), 1)
    comp = np.full(lab.shape, -1, dtype=np.int64)
    firsts = []
    uniq = np.unique(lab)
    offset = 0
    # bounding boxes per label value keep each ndimage call small
    shifted = lab - uniq.min() + 1
    boxes = ndimage.find_objects(shifted)
    for value in uniq:
        sl = boxes[value - uniq.min()]
        mask = lab[sl] == value
        sub, k = ndimage.label(mask, structure=structure)
        region = comp[sl]
        region[mask] = sub[mask] - 1 + offset
        offset += k
    flat = comp.ravel()
    # renumber by lowest linear index
    first = np.full(offset, flat.size, dtype=np.int64)
    np.minimum.at(first, flat, np.arange(flat.size))
    order = np.argsort(first, kind="stable")
    remap = np.empty(offset, dtype=np.int64)
    remap[order] = np.arange(offset)
    return remap[flat], int(offset)

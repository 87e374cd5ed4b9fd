"""Binary PGM/PPM export of 2-D label rasters.

Image column ``i`` is grid axis 0, image row 0 is the top (largest axis-1
coordinate).  3-D diagrams are exported slice-wise by the caller.
"""
import numpy as np

from .errors import InvalidArgument

ORPHAN_COLOR = (255, 0, 0)


def _image_rows(labels2d: np.ndarray) -> np.ndarray:
    if labels2d.ndim != 2:
        raise InvalidArgument("raster export needs a 2-D label array")
    return np.asarray(labels2d).T[::-1]


def write_pgm(path, labels2d):
    """P5 greyscale of ``label mod 256``."""
    img = (_image_rows(labels2d) % 256).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())


def site_palette(n_sites: int) -> np.ndarray:
    """Deterministic per-site colours; pure red is never produced."""
    idx = np.arange(n_sites, dtype=np.uint64)
    # multiplicative hashing spreads neighbouring indices apart
    h = (idx * np.uint64(2654435761)) & np.uint64(0xFFFFFF)
    rgb = np.stack([(h >> np.uint64(16)) & np.uint64(255),
                    (h >> np.uint64(8)) & np.uint64(255),
                    h & np.uint64(255)], axis=1).astype(np.uint8)
    rgb[:, 1] = np.maximum(rgb[:, 1], 32)
    return rgb


def write_ppm(path, labels2d, n_sites: int, orphan_mask=None):
    """P6 colour raster, orphan cells overdrawn in pure red."""
    rows = _image_rows(labels2d)
    rgb = site_palette(n_sites)[rows]
    if orphan_mask is not None:
        rgb[_image_rows(orphan_mask).astype(bool)] = ORPHAN_COLOR
    h, w = rows.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(rgb).tobytes())


def read_pnm(path) -> np.ndarray:
    """Read back a P5/P6 file written by this module (tests, golden checks)."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    magic, dims, maxval, body = parts
    w, h = (int(x) for x in dims.split())
    if int(maxval) != 255:
        raise InvalidArgument("only 8-bit rasters are supported")
    arr = np.frombuffer(body, dtype=np.uint8)
    if magic == b"P5":
        return arr.reshape(h, w)
    if magic == b"P6":
        return arr.reshape(h, w, 3)
    raise InvalidArgument(f"unsupported magic {magic!r}")

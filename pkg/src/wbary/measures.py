"""Discrete measures, barycenter problems, file ingestion and synthetic generators."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NORMALIZE_TOL = 1e-6
LAMBDA_CLAMP = 1e-9


class MeasureError(ValueError):
    """Raised for malformed or invalid measure input."""


def check_p(p) -> int:
    """Validate a cost exponent; only ``1`` and ``2`` are supported."""
    if p not in (1, 2) or isinstance(p, bool):
        raise MeasureError(f"cost exponent must be 1 or 2, got {p!r}")
    return int(p)


def _merge_duplicates(points, weights):
    # exact bit-equality merge, order of first occurrence is kept
    uniq, first, inverse = np.unique(points, axis=0, return_index=True, return_inverse=True)
    if len(uniq) == len(points):
        return points, weights
    inverse = inverse.reshape(-1)
    merged = np.zeros(len(uniq))
    np.add.at(merged, inverse, weights)
    order = np.argsort(first, kind="stable")
    return uniq[order], merged[order]


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite weighted point set ``sum_l w_l delta(x_l)`` with unit mass.

    Zero-mass atoms are dropped and exactly coincident points merged at
    construction.  Total mass within ``1e-6`` of one is renormalized silently;
    anything further off is rejected (use :meth:`from_masses` for raw masses).
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise MeasureError(f"points must be an n x d array, got shape {pts.shape}")
        if len(pts) != len(w):
            raise MeasureError(f"{len(pts)} points but {len(w)} weights")
        if not np.all(np.isfinite(pts)):
            raise MeasureError("non-finite coordinate in support")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise MeasureError("weights must be finite and nonnegative")
        keep = w > 0
        pts, w = pts[keep], w[keep]
        if len(w) == 0:
            raise MeasureError("measure has no positive mass")
        total = w.sum()
        if abs(total - 1.0) > NORMALIZE_TOL:
            raise MeasureError(f"weights sum to {total:.12g}, expected 1")
        pts, w = _merge_duplicates(pts, w)
        w = w / w.sum()
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_masses(cls, points, masses) -> "DiscreteMeasure":
        """Build a measure from arbitrary nonnegative masses by normalizing them."""
        m = np.asarray(masses, dtype=float).reshape(-1)
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise MeasureError("masses must be finite and nonnegative")
        total = m.sum()
        if total <= 0:
            raise MeasureError("measure has no positive mass")
        return cls(points, m / total)

    @classmethod
    def dirac(cls, x) -> "DiscreteMeasure":
        return cls(np.atleast_1d(np.asarray(x, dtype=float))[None, :], [1.0])

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }

    def sorted(self) -> "DiscreteMeasure":
        """Copy with atoms in lexicographic order (canonical for comparisons)."""
        order = np.lexsort(self.points.T[::-1])
        return DiscreteMeasure(self.points[order], self.weights[order])

    def __repr__(self):
        return f"DiscreteMeasure(n={self.n}, d={self.d})"


def simplex_weights(values, clamp: bool = False) -> np.ndarray:
    """Validate barycenter weights as a point of the open simplex.

    With ``clamp=True`` zero entries are raised to ``1e-9`` before
    renormalizing, which is how the CLI accepts unit vectors.
    """
    lam = np.asarray(values, dtype=float).reshape(-1)
    if len(lam) < 1 or not np.all(np.isfinite(lam)):
        raise MeasureError("weights must be a finite nonempty vector")
    if clamp:
        lam = np.where(lam == 0, LAMBDA_CLAMP, lam)
    if np.any(lam <= 0):
        raise MeasureError("barycenter weights must be strictly positive")
    total = lam.sum()
    if not clamp and abs(total - 1.0) > NORMALIZE_TOL:
        raise MeasureError(f"barycenter weights sum to {total:.12g}, expected 1")
    return lam / total


@dataclass(frozen=True, eq=False)
class Problem:
    """Barycenter problem: ``N >= 2`` measures in a common dimension, weights, exponent."""

    measures: tuple
    weights: np.ndarray = None
    p: int = 2
    labels: tuple = field(default=None)

    def __post_init__(self):
        measures = tuple(self.measures)
        if len(measures) < 2:
            raise MeasureError("a barycenter problem needs at least two measures")
        dims = {m.d for m in measures}
        if len(dims) != 1:
            raise MeasureError(f"measures live in different dimensions: {sorted(dims)}")
        lam = self.weights
        if lam is None:
            lam = np.full(len(measures), 1.0 / len(measures))
        lam = simplex_weights(lam)
        if len(lam) != len(measures):
            raise MeasureError(f"{len(lam)} weights for {len(measures)} measures")
        lam.setflags(write=False)
        object.__setattr__(self, "measures", measures)
        object.__setattr__(self, "weights", lam)
        object.__setattr__(self, "p", check_p(self.p))

    @property
    def N(self) -> int:
        return len(self.measures)

    @property
    def d(self) -> int:
        return self.measures[0].d

    def with_weights(self, weights) -> "Problem":
        return Problem(self.measures, weights, self.p, self.labels)

    def with_p(self, p) -> "Problem":
        return Problem(self.measures, self.weights, p, self.labels)


# --------------------------------------------------------------------- I/O

def image_to_measure(img) -> DiscreteMeasure:
    """Grid measure of a grayscale image on the unit square, origin bottom-left.

    Pixel ``(r, c)`` of an ``H x W`` image sits at ``(c/W, (H-1-r)/H)``.
    """
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise MeasureError("image must be a 2-D grayscale array")
    if not np.all(np.isfinite(img)) or np.any(img < 0):
        raise MeasureError("image pixels must be finite and nonnegative")
    H, W = img.shape
    r, c = np.nonzero(img)
    if len(r) == 0:
        raise MeasureError("image is all zero")
    pts = np.column_stack([c / W, (H - 1 - r) / H])
    return DiscreteMeasure.from_masses(pts, img[r, c])


def _load_json(path):
    try:
        data = json.loads(Path(path).read_text())
        pts = np.asarray(data["points"], dtype=float)
        w = np.asarray(data["weights"], dtype=float)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise MeasureError(f"{path}: cannot parse measure JSON ({exc})") from exc
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if "d" in data and pts.size and pts.shape[1] != int(data["d"]):
        raise MeasureError(f"{path}: declared d={data['d']} but points have {pts.shape[1]} columns")
    return DiscreteMeasure(pts, w)


def _load_csv(path):
    rows = []
    try:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                row = [x.strip() for x in row if x.strip()]
                if not row:
                    continue
                try:
                    rows.append([float(x) for x in row])
                except ValueError:
                    if lineno == 1 and not rows:
                        continue  # header
                    raise MeasureError(f"{path}:{lineno}: non-numeric entry")
    except OSError as exc:
        raise MeasureError(f"{path}: {exc}") from exc
    if not rows:
        raise MeasureError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1 or len(rows[0]) < 2:
        raise MeasureError(f"{path}: rows must all have d+1 >= 2 columns")
    arr = np.array(rows)
    return DiscreteMeasure.from_masses(arr[:, :-1], arr[:, -1])


def _load_image(path):
    from PIL import Image

    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "I", "I;16", "F"):
                raise MeasureError(f"{path}: expected a grayscale image, got mode {im.mode}")
            arr = np.asarray(im, dtype=float)
    except OSError as exc:
        raise MeasureError(f"{path}: cannot read image ({exc})") from exc
    return image_to_measure(arr)


_LOADERS = {"json": _load_json, "csv": _load_csv, "image": _load_image, "image-grid": _load_image}


def guess_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".json":
        return "json"
    if suffix in (".csv", ".txt"):
        return "csv"
    if suffix in (".pgm", ".png", ".pnm"):
        return "image"
    raise MeasureError(f"{path}: cannot infer format from suffix {suffix!r}")


def load_measure(path, format: str | None = None) -> DiscreteMeasure:
    """Read a measure from JSON, CSV (``x_1,...,x_d,w`` rows) or a grayscale PGM image."""
    fmt = format or guess_format(path)
    if fmt not in _LOADERS:
        raise MeasureError(f"unknown measure format {fmt!r}")
    return _LOADERS[fmt](path)


def save_measure(measure: DiscreteMeasure, path, extra: dict | None = None) -> None:
    data = {"format": 1, **measure.to_dict()}
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def save_pgm(img, path) -> None:
    """Write an array as 8-bit binary PGM, scaled so the maximum maps to 255."""
    from PIL import Image

    img = np.asarray(img, dtype=float)
    scaled = np.rint(255 * img / img.max()).astype(np.uint8)
    Image.fromarray(scaled, mode="L").save(path, format="PPM")


# -------------------------------------------------------------- generators

def gen_sharpness_instance(N: int, p: int = 2) -> Problem:
    """One Dirac at 0 against ``N-1`` copies of ``(delta(-1) + delta(1)) / 2``.

    Uniform weights.  This 1-D family attains the worst-case ratios of the
    reference and pairwise algorithms.
    """
    if N < 2:
        raise MeasureError("sharpness instance needs N >= 2")
    first = DiscreteMeasure([[0.0]], [1.0])
    pair = DiscreteMeasure([[-1.0], [1.0]], [0.5, 0.5])
    return Problem((first,) + (pair,) * (N - 1), None, p)


def gen_unit_disk_cloud(N: int, n: int, seed: int = 0, p: int = 2) -> Problem:
    """``N`` empirical measures of ``n`` uniform samples from the unit disk, each centered."""
    if N < 2 or n < 1:
        raise MeasureError("need N >= 2 and n >= 1")
    rng = np.random.default_rng(seed)
    measures = []
    for _ in range(N):
        radius = np.sqrt(rng.random(n))
        angle = 2 * np.pi * rng.random(n)
        pts = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
        pts -= pts.mean(axis=0)
        measures.append(DiscreteMeasure(pts, np.full(n, 1.0 / n)))
    return Problem(measures, None, p)


def ellipse_annulus_image(resolution: int, rng, thickness: float = 2.0, rings: int = 2) -> np.ndarray:
    """Raster of ``rings`` nested elliptical annuli with a random shape.

    Axis ratios lie in ``[0.3, 1]``, the rotation is uniform and all rings
    share center and orientation.  Each ring is about ``thickness`` pixels wide.
    """
    res = resolution
    cy, cx = (res - 1) / 2 + rng.uniform(-0.08, 0.08, size=2) * res
    theta = rng.uniform(0, np.pi)
    outer = rng.uniform(0.25, 0.42) * res
    ratio = rng.uniform(0.3, 1.0)
    rr, cc = np.mgrid[0:res, 0:res].astype(float)
    du, dv = cc - cx, rr - cy
    u = np.cos(theta) * du + np.sin(theta) * dv
    v = -np.sin(theta) * du + np.cos(theta) * dv
    img = np.zeros((res, res))
    scales = np.linspace(1.0, rng.uniform(0.35, 0.6), rings)
    for s in scales:
        a, b = s * outer, s * outer * ratio
        rho = np.sqrt((u / a) ** 2 + (v / b) ** 2)
        grad = np.sqrt((u / a**2) ** 2 + (v / b**2) ** 2) / np.maximum(rho, 1e-12)
        dist = np.abs(rho - 1) / np.maximum(grad, 1e-12)
        img[dist <= thickness / 2] = 1.0
    return img


def gen_nested_ellipses_images(N: int = 10, resolution: int = 60, seed: int = 0) -> list:
    if resolution < 8:
        raise MeasureError("resolution must be at least 8")
    images = []
    for i in range(N):
        for attempt in range(100):
            rng = np.random.default_rng([seed, i, attempt])
            img = ellipse_annulus_image(resolution, rng)
            if img.any():
                break
        else:
            raise MeasureError(f"could not rasterize ellipse {i} after 100 attempts")
        images.append(img)
    return images


def gen_nested_ellipses(N: int = 10, resolution: int = 60, seed: int = 0, p: int = 2) -> Problem:
    """``N`` nested-ellipse indicator images as grid measures on the unit square."""
    images = gen_nested_ellipses_images(N, resolution, seed)
    return Problem([image_to_measure(img) for img in images], None, p)

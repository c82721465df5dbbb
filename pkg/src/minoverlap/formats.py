"""File formats: instance/result/scenario documents, SVG and CSV output.

Documents are JSON validated against the schemas shipped in
``minoverlap/schemas``. Floats are written with 17 significant digits so
that every value survives a write/read cycle exactly.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import InvalidInputError
from .geometry import AxisSpec, BoxContainer, Container


class SchemaError(InvalidInputError):
    """A document failed schema validation or could not be parsed."""


@lru_cache(maxsize=None)
def schema(name: str) -> dict:
    text = resources.files("minoverlap").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def validate(doc, name: str) -> dict:
    try:
        jsonschema.validate(doc, schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{name} document invalid at {where}: {exc.message}") from None
    return doc


def load(path, name: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from None
    return validate(doc, name)


# ----------------------------------------------------------------------
# serialization

def _plain(v):
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


def _emit(v, out: list, indent: int | None, level: int, sort_keys: bool) -> None:
    nl = "" if indent is None else "\n" + " " * (indent * (level + 1))
    end = "" if indent is None else "\n" + " " * (indent * level)
    if isinstance(v, bool) or v is None:
        out.append(json.dumps(v))
    elif isinstance(v, int):
        out.append(str(v))
    elif isinstance(v, float):
        out.append("%.17g" % v if math.isfinite(v) else "null")
    elif isinstance(v, str):
        out.append(json.dumps(v))
    elif isinstance(v, list):
        if not v:
            out.append("[]")
            return
        # numeric rows stay on one line
        flat = indent is None or all(not isinstance(x, (list, dict)) for x in v)
        out.append("[")
        for k, x in enumerate(v):
            if k:
                out.append(", " if flat and indent is not None else ",")
            if not flat:
                out.append(nl)
            _emit(x, out, indent, level + 1, sort_keys)
        if not flat:
            out.append(end)
        out.append("]")
    elif isinstance(v, dict):
        if not v:
            out.append("{}")
            return
        out.append("{")
        keys = sorted(v) if sort_keys else list(v)
        for k, key in enumerate(keys):
            if k:
                out.append(",")
            out.append(nl)
            out.append(json.dumps(key))
            out.append(":" if indent is None else ": ")
            _emit(v[key], out, indent, level + 1, sort_keys)
        out.append(end)
        out.append("}")
    else:
        raise TypeError(f"cannot serialize {type(v).__name__}")


def dumps(doc, indent: int | None = 1, sort_keys: bool = False) -> str:
    out: list[str] = []
    _emit(_plain(doc), out, indent, 0, sort_keys)
    return "".join(out) + ("\n" if indent is not None else "")


def write(path, doc) -> None:
    Path(path).write_text(dumps(doc))


def digest(doc) -> str:
    """SHA-256 of the canonical (sorted, compact) form of a document."""
    return hashlib.sha256(dumps(doc, indent=None, sort_keys=True).encode()).hexdigest()


# ----------------------------------------------------------------------
# instance -> domain objects

def container_from(doc: dict):
    dim = doc["dimension"]
    c = doc["container"]
    center = np.asarray(c.get("center", [0.0] * dim), dtype=float)
    axes = np.asarray(c["semi_axes"], dtype=float)
    if center.size != dim:
        raise SchemaError("container center has the wrong length")
    if c["shape"] == "sphere":
        if axes.size != 1 and not (axes.size == dim and np.all(axes == axes[0])):
            raise SchemaError("a sphere container takes one radius")
        return Container.sphere(float(axes[0]), center)
    if axes.size != dim:
        raise SchemaError(f"container needs {dim} semi-axes")
    if c["shape"] == "box":
        if "orientation" in c:
            raise SchemaError("box containers are axis-aligned")
        return BoxContainer(center - axes, center + axes)
    rot = c.get("orientation")
    if rot is not None:
        rot = np.asarray(rot, dtype=float)
        if rot.shape != (dim, dim) or not np.allclose(rot @ rot.T, np.eye(dim), atol=1e-9):
            raise SchemaError("orientation must be an orthogonal dim x dim matrix")
    return Container.from_axes(axes, center, rot)


def radii_from(doc: dict) -> np.ndarray:
    out = []
    for k, b in enumerate(doc["bodies"]):
        if "radius" not in b or "axes" in b:
            raise SchemaError(f"body {k}: sphere instances give a radius only")
        out.append(float(b["radius"]))
    return np.array(out)


def specs_from(doc: dict) -> list[AxisSpec]:
    dim = doc["dimension"]
    out = []
    for k, b in enumerate(doc["bodies"]):
        if ("radius" in b) == ("axes" in b):
            raise SchemaError(f"body {k}: give exactly one of radius or axes")
        axes = [b["radius"]] * dim if "radius" in b else sorted(b["axes"], reverse=True)
        if len(axes) != dim:
            raise SchemaError(f"body {k}: expected {dim} axes")
        out.append(AxisSpec(tuple(axes)))
    return out


def labels_from(doc: dict) -> list[str] | None:
    labels = [b.get("label") for b in doc["bodies"]]
    return labels if any(lab is not None for lab in labels) else None


# ----------------------------------------------------------------------
# SVG

def _fmt(v: float) -> str:
    s = f"{v:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def render_svg(centers, radii, container, overlap_pairs=(), width: int = 600) -> str:
    """Deterministic SVG 1.1 drawing of a 2-D packing.

    The view box is the container's bounding box; circles in an overlapping
    pair are drawn in red, the others in grey.
    """
    centers = np.asarray(centers, dtype=float)
    if centers.ndim != 2 or centers.shape[1] != 2:
        raise InvalidInputError("SVG output is only available in two dimensions")
    if isinstance(container, BoxContainer):
        lo, hi = container.lo, container.hi
        outline = (f'<rect x="{_fmt(lo[0])}" y="{_fmt(-hi[1])}" width="{_fmt(hi[0] - lo[0])}" '
                   f'height="{_fmt(hi[1] - lo[1])}" class="container"/>')
    else:
        E = container.ellipsoid
        half = np.sqrt(np.diag(E.S @ E.S.T))
        lo, hi = E.center - half, E.center + half
        w, v = np.linalg.eigh(E.S)
        ang = math.degrees(math.atan2(v[1, 1], v[0, 1]))
        outline = (f'<ellipse cx="{_fmt(E.center[0])}" cy="{_fmt(-E.center[1])}" rx="{_fmt(w[1])}" '
                   f'ry="{_fmt(w[0])}" transform="rotate({_fmt(-ang)} {_fmt(E.center[0])} {_fmt(-E.center[1])})" '
                   f'class="container"/>')
    span = hi - lo
    height = max(1, round(width * span[1] / span[0]))
    hot = {int(i) for p in overlap_pairs for i in p}
    buf = io.StringIO()
    buf.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    buf.write(f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
              f'viewBox="{_fmt(lo[0])} {_fmt(-hi[1])} {_fmt(span[0])} {_fmt(span[1])}">\n')
    sw = _fmt(span.max() / 500)
    buf.write(f'<style>.container{{fill:none;stroke:black;stroke-width:{sw}}} '
              f'.body{{fill:#cccccc;fill-opacity:0.6;stroke:#333333;stroke-width:{sw}}} '
              f'.hot{{fill:#e04040;fill-opacity:0.6;stroke:#801010;stroke-width:{sw}}}</style>\n')
    buf.write(outline + "\n")
    for k, (c, r) in enumerate(zip(centers, np.broadcast_to(radii, len(centers)))):
        cls = "hot" if k in hot else "body"
        buf.write(f'<circle cx="{_fmt(c[0])}" cy="{_fmt(-c[1])}" r="{_fmt(r)}" class="{cls}"/>\n')
    buf.write("</svg>\n")
    return buf.getvalue()


# ----------------------------------------------------------------------
# CSV

def histogram_csv(hist: dict) -> str:
    total = sum(hist.values())
    lines = ["count,spheres,frequency"]
    for k in sorted(hist):
        lines.append(f"{k},{hist[k]},{'%.17g' % (hist[k] / total)}")
    return "\n".join(lines) + "\n"


def rows_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    keys = list(rows[0])
    out = [",".join(keys)]
    for r in rows:
        vals = []
        for k in keys:
            v = _plain(r.get(k))
            vals.append("%.17g" % v if isinstance(v, float) else str(v))
        out.append(",".join(vals))
    return "\n".join(out) + "\n"

import json

import numpy as np
import pytest

from minoverlap import formats
from minoverlap.geometry import BoxContainer, Container


def instance(**kw):
    doc = {"kind": "spheres", "dimension": 2,
           "container": {"shape": "sphere", "center": [0.0, 0.0], "semi_axes": [1.0]},
           "bodies": [{"radius": 0.5}, {"radius": 0.5}], "objective": "LInf", "seed": 3}
    doc.update(kw)
    return doc


def test_roundtrip_exact():
    vals = [0.1, 1 / 3, np.pi * 1e-17, 123456789.123456789, -2.5e300]
    doc = {"a": vals, "b": {"c": np.float64(np.e), "d": [np.int64(4), True, None]}}
    back = json.loads(formats.dumps(doc))
    assert back["a"] == vals
    assert back["b"]["c"] == np.e
    assert back["b"]["d"] == [4, True, None]


def test_nonfinite_become_null():
    assert json.loads(formats.dumps({"x": float("nan")}))["x"] is None


def test_digest_ignores_key_order():
    a = instance()
    b = dict(reversed(list(a.items())))
    assert formats.digest(a) == formats.digest(b)
    assert formats.digest(a) != formats.digest(instance(seed=4))


def test_instance_schema_accepts_and_rejects():
    formats.validate(instance(), "instance")
    with pytest.raises(formats.SchemaError):
        formats.validate(instance(bodies=[]), "instance")
    with pytest.raises(formats.SchemaError):
        formats.validate(instance(colour="red"), "instance")
    with pytest.raises(formats.SchemaError):
        formats.validate(instance(dimension=4), "instance")


def test_load_reports_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(formats.SchemaError):
        formats.load(p, "instance")


def test_container_variants():
    c = formats.container_from(instance())
    assert isinstance(c, Container) and c.volume == pytest.approx(np.pi)
    box = formats.container_from(instance(container={"shape": "box", "semi_axes": [2.0, 1.0]}))
    assert isinstance(box, BoxContainer)
    assert np.allclose(box.lo, [-2, -1]) and np.allclose(box.hi, [2, 1])
    rot = [[0.0, -1.0], [1.0, 0.0]]
    e = formats.container_from(instance(container={"shape": "ellipsoid", "semi_axes": [2.0, 1.0],
                                                   "orientation": rot}))
    assert e.volume == pytest.approx(2 * np.pi)
    with pytest.raises(formats.SchemaError):
        formats.container_from(instance(container={"shape": "ellipsoid", "semi_axes": [2.0, 1.0],
                                                   "orientation": [[1.0, 1.0], [0.0, 1.0]]}))
    with pytest.raises(formats.SchemaError):
        formats.container_from(instance(container={"shape": "sphere", "semi_axes": [1.0, 2.0]}))


def test_bodies():
    doc = instance(kind="ellipsoids", dimension=3,
                   container={"shape": "sphere", "semi_axes": [3.0]},
                   bodies=[{"axes": [0.5, 1.0, 0.7], "label": "a"}, {"radius": 0.4}])
    specs = formats.specs_from(doc)
    assert specs[0].radii == (1.0, 0.7, 0.5)
    assert specs[1].radii == (0.4, 0.4, 0.4)
    assert formats.labels_from(doc) == ["a", None]
    with pytest.raises(formats.SchemaError):
        formats.radii_from(doc)


def test_svg_deterministic_and_flagged():
    cont = Container.sphere(1.0, (0.0, 0.0))
    c = np.array([[0.3, 0.0], [-0.3, 0.0]])
    a = formats.render_svg(c, [0.5, 0.5], cont, [(0, 1)])
    b = formats.render_svg(c, [0.5, 0.5], cont, [(0, 1)])
    assert a == b
    assert 'viewBox="-1 -1 2 2"' in a
    assert a.count('class="hot"') == 2
    clean = formats.render_svg(c, [0.2, 0.2], cont)
    assert 'class="hot"' not in clean
    with pytest.raises(Exception):
        formats.render_svg(np.zeros((2, 3)), [0.1, 0.1], cont)


def test_csv_outputs():
    assert formats.histogram_csv({6: 3, 5: 1}).splitlines() == ["count,spheres,frequency", "5,1,0.25", "6,3,0.75"]
    text = formats.rows_csv([{"k": 1, "v": 0.5}, {"k": 2, "v": 0.25}])
    assert text.splitlines() == ["k,v", "1,0.5", "2,0.25"]
    assert formats.rows_csv([]) == ""

"""Smoke test for the compiled extension: python python/smoke_test.py"""

import math
import os
import tempfile

import tetriblend as tb


def max_dev(a, b):
    return max(math.dist(p, q) for p, q in zip(a.vertices, b.vertices))


def main():
    rest = tb.box_bar(4.0, 1.0, 1.0, 8, 2, 2)
    bent = tb.bend_about_y(rest, 1.0, 4.0)
    twisted = tb.twist_about_x(rest, 2.0, 0.0, 4.0)
    diag = rest.bbox_diagonal()

    assert len(tb.tetrahedra(rest, "face")) == len(rest.faces)

    model = tb.Model(rest, [bent, twisted], method="vertex")
    assert model.shape_count == 2 and model.method == "vertex"

    for energy in ("ET", "ES"):
        for blend_fn in ("C", "P"):
            out, _ = model.blend([1.0, 0.0], energy=energy, blend_fn=blend_fn)
            assert max_dev(out, bent) <= 1e-6 * diag, (energy, blend_fn)

    mid, report = model.blend([0.5, 0.5], energy="ES")
    trace = report["energy_trace"]
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
    assert len(mid) == len(rest)

    frames = model.morph([0.0, 0.0], [0.0, 1.0], 4)
    assert len(frames) == 4 and max_dev(frames[-1], twisted) <= 1e-6 * diag

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.json")
        model.save(path)
        again, _ = tb.Model.load(path).blend([0.5, 0.5], energy="ES")
        assert again.vertices == mid.vertices
        mesh_path = os.path.join(tmp, "mid.obj")
        mid.save(mesh_path)
        assert tb.Mesh.load(mesh_path).faces == mid.faces

    try:
        model.blend([1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("weight count mismatch accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()

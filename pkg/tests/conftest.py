import numpy as np
import pytest

from rmplate import (Material, build_layout, build_multiplier, classify,
                     generate_crisscross)


@pytest.fixture(scope="session")
def material():
    return Material()


@pytest.fixture(scope="session")
def crisscross_meshes():
    return {n: generate_crisscross(n) for n in (1, 2, 3, 4, 8)}


@pytest.fixture(scope="session")
def setups(crisscross_meshes):
    """(mesh, classification, layout, {kind: multiplier}) per level."""
    out = {}
    for n, mesh in crisscross_meshes.items():
        cls = classify(mesh)
        layout = build_layout(mesh, cls)
        mults = {kind: build_multiplier(kind, mesh, cls)
                 for kind in ("standard", "dual")}
        out[n] = (mesh, cls, layout, mults)
    return out


def brute_force_edges(triangles):
    """Independent edge enumeration: {sorted edge: incidence count}."""
    counts = {}
    for tri in np.asarray(triangles):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(int(a), int(b)), max(int(a), int(b)))
            counts[key] = counts.get(key, 0) + 1
    return counts

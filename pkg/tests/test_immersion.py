from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from willmore_lab.ambient import euclidean, inner_h, round_sphere
from willmore_lab.exterior import MultiVector, wedge
from willmore_lab.immersion import (
    ImmersionError,
    SchemaError,
    builtin,
    complex_objects,
    energies,
    export_geometry_csv,
    from_samples,
    geometry,
    immersion_from_json,
    immersion_to_json,
    load_immersion,
    parse_spec,
    wp_pairing,
)

FOUR_PI = 4 * np.pi


def interior(imm):
    return imm.grid.interior


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_round_sphere_patch_geometry(r):
    imm = builtin("sphere", n=48, radius=r)
    geo = geometry(imm)
    H = np.sqrt(inner_h(geo.h, geo.H, geo.H))
    assert np.max(np.abs(H - 1 / r)) < 1e-8
    assert np.max(np.abs(geo.sff_norm2() - 2 / r**2)) < 1e-8
    assert np.max(np.abs(geo.Kg - 1 / r**2)) < 1e-8
    assert np.max(np.abs(geo.H0)) < 1e-8


def test_plane_patch_geometry():
    geo = geometry(builtin("plane", n=16))
    assert np.all(np.abs(geo.sff) < 1e-14)
    assert np.all(np.abs(geo.H) < 1e-14)


@pytest.mark.parametrize(
    "name,amb",
    [
        ("sphere", None),
        ("enneper", None),
        ("catenoid", None),
        ("torus", None),
        ("graph", None),
        ("clifford", None),
        ("sphere", round_sphere(3)),
        ("torus", round_sphere(3)),
    ],
)
def test_gauss_equation_and_normality(name, amb):
    kw = {"shrink": 0.3} if amb is not None else {}
    imm = builtin(name, n=32, ambient=amb, **kw)
    geo = geometry(imm)
    H2 = inner_h(geo.h, geo.H, geo.H)
    res = 0.5 * geo.sff_norm2() - (2 * H2 + geo.Kbar - geo.Kg)
    assert np.max(np.abs(res)) < 1e-7
    for a in range(2):
        assert np.max(np.abs(inner_h(geo.h, geo.H, geo.e[:, a]))) < 1e-8
        for i in range(2):
            for j in range(2):
                assert np.max(np.abs(inner_h(geo.h, geo.sff[:, i, j], geo.e[:, a]))) < 1e-8


def test_normal_frame_orientation():
    geo = geometry(builtin("clifford", n=16))
    frame = np.concatenate([geo.e, geo.normals], axis=1)
    assert np.all(np.linalg.det(frame) > 0)
    # the (m-2)-vector n is the wedge of the normal frame
    n = MultiVector(4, 1, geo.normals[:, 0])
    n = wedge(n, MultiVector(4, 1, geo.normals[:, 1]))
    assert np.allclose(n.coeffs, geo.n.coeffs, atol=1e-12)


def test_round_sphere_mesh_energies():
    rep = energies(builtin("sphere", n=128, domain="sphere"))
    for value in (rep.W, rep.A, rep.F):
        assert abs(value - FOUR_PI) / FOUR_PI < 5e-3
    assert rep.gauss_bonnet_defect / FOUR_PI < 1e-2


def test_ellipsoid_gauss_bonnet_and_willmore_bound():
    rep = energies(builtin("ellipsoid", n=128))
    assert rep.gauss_bonnet_defect / FOUR_PI < 1e-2
    assert rep.W > FOUR_PI


@pytest.mark.parametrize("name", ["sphere", "enneper", "torus", "graph"])
def test_flat_energy_identities(name):
    imm = builtin(name, n=32, ambient=euclidean(3))
    geo = geometry(imm)
    rep = energies(imm, geo)
    w = geo.dvol * imm.grid.inside
    assert abs(rep.W_K - (rep.W - 0.5 * np.sum(geo.Kg * w))) < 1e-10
    assert abs(rep.L - rep.W_K - rep.A) < 1e-10
    assert abs(rep.F1 - rep.F - rep.A) < 1e-10


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 20.0))
def test_scale_law(c):
    base = energies(builtin("ellipsoid", n=32))
    scaled = energies(builtin("ellipsoid", n=32, shrink=c))
    assert abs(scaled.A - c**2 * base.A) < 1e-12 * c**2 * base.A
    assert abs(scaled.W - base.W) < 1e-12 * base.W


def test_complex_objects_anchors():
    for imm in (builtin("sphere", n=24), builtin("torus", n=24, ambient=round_sphere(3), shrink=0.3)):
        obj = complex_objects(imm)
        assert np.max(np.abs(obj["ez_ez"])) < 1e-8
        assert np.max(np.abs(obj["ez_ezb"] - 0.5)) < 1e-8
        geo = geometry(imm)
        m = imm.dim
        lhs = wedge(MultiVector(m, 1, obj["ez"]), MultiVector(m, 1, obj["ezb"]))
        rhs = wedge(MultiVector(m, 1, geo.e[:, 0]), MultiVector(m, 1, geo.e[:, 1])) * 0.5j
        assert np.max(np.abs(lhs.coeffs - rhs.coeffs)) < 1e-8


def test_flat_dz_reduces_to_partial():
    imm = builtin("plane", n=16)
    cc = complex_objects(imm)["calculus"]
    V = np.random.default_rng(0).normal(size=(imm.size, 3))
    assert np.array_equal(cc.Dz(V), cc.dz(V))


def test_complex_objects_need_conformal():
    with pytest.raises(ImmersionError):
        complex_objects(builtin("graph", n=16))


def test_wp_pairing_cases():
    sphere = builtin("sphere", n=24)
    f = np.exp(1j * sphere.grid.params[:, 0])
    assert np.max(np.abs(wp_pairing(sphere, f))) < 1e-8
    assert np.all(wp_pairing(sphere, np.zeros(sphere.size)) == 0)


def test_wp_pairing_enneper_oracle():
    imm = builtin("enneper", n=24)
    Pu, Pv = imm.d1[:, 0], imm.d1[:, 1]
    N = np.cross(Pu, Pv)
    N /= np.linalg.norm(N, axis=1)[:, None]
    e2l = np.sum(Pu * Pu, axis=1)
    II = lambda a, b: (np.sum(imm.d2[:, a, b] * N, axis=1) / e2l)[:, None] * N  # noqa: E731
    H0 = 0.5 * (II(0, 0) - II(1, 1) - 2j * II(0, 1))
    oracle = np.imag(np.conj(H0)) / e2l[:, None]
    assert np.max(np.abs(wp_pairing(imm, np.ones(imm.size)) - oracle)) < 1e-12
    assert np.max(np.abs(H0)) > 0.1


def test_enneper_conformal_defect():
    imm = builtin("enneper", n=64)
    assert imm.conformal
    assert np.max(imm.conformality_defect()[imm.grid.inside]) < 1e-10


def test_graph_is_not_conformal():
    assert not builtin("graph", n=16).conformal


def test_json_roundtrip_and_collapsed_row(tmp_path):
    imm = builtin("sphere", n=24)
    data = immersion_to_json(imm)
    path = tmp_path / "imm.json"
    path.write_text(json.dumps(data))
    back = load_immersion(str(path))
    assert np.allclose(back.phi, imm.phi)
    assert back.derivatives == "fd"
    phi = np.array(data["phi"]).reshape(24, 24, 3)
    phi[10] = phi[10, 12]
    data["phi"] = phi.tolist()
    with pytest.raises(ImmersionError):
        immersion_from_json(data)


def test_json_schema_errors():
    with pytest.raises(SchemaError):
        immersion_from_json({"domain": "disc", "n": 8})
    with pytest.raises(SchemaError):
        immersion_from_json({"domain": "disc", "n": 8, "ambient_dim": 3, "phi": [[0, 0, 0]]})
    with pytest.raises(SchemaError):
        immersion_from_json({"domain": "disc", "n": 8, "ambient_dim": 3, "phi": [], "colour": 1})


def test_declared_conformal_rejects_nonconformal_samples():
    graph = builtin("graph", n=24, eps=0.5)
    with pytest.raises(ImmersionError):
        from_samples(graph.grid, graph.phi, graph.ambient, conformal=True)


def test_builtin_and_spec_errors():
    with pytest.raises(ValueError):
        builtin("klein", n=16)
    with pytest.raises(ValueError):
        builtin("torus", n=16, colour=1)
    with pytest.raises(ValueError):
        builtin("clifford", n=16, ambient=euclidean(3))
    assert parse_spec("torus:R=3,r=0.5") == ("torus", {"R": 3, "r": 0.5})
    assert parse_spec("ellipsoid:axes=[1,2,3]") == ("ellipsoid", {"axes": [1, 2, 3]})
    imm = load_immersion("sphere:r=2,n=16")
    assert np.isclose(np.max(np.linalg.norm(imm.phi, axis=1)), 2.0, atol=1e-2)


def test_fd_derivatives_converge():
    errs = []
    for n in (32, 64):
        exact = builtin("torus", n=n)
        fd = builtin("torus", n=n, derivatives="fd")
        mask = exact.grid.interior
        errs.append(np.max(np.abs(exact.d2 - fd.d2)[mask]))
    assert errs[0] / errs[1] > 3.0


def test_export_geometry_csv(tmp_path):
    imm = builtin("sphere", n=16)
    out = tmp_path / "geo.csv"
    export_geometry_csv(imm, out)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("u1,u2,phi0")
    assert len(lines) - 1 == int(np.sum(imm.grid.inside))

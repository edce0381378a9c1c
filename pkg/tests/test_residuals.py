from __future__ import annotations

import numpy as np
import pytest

from willmore_lab.ambient import poincare_ball, round_sphere
from willmore_lab.cli import parse_ambient
from willmore_lab.immersion import builtin
from willmore_lab.residuals import (
    CODIM1_ONLY,
    IDENTITY_SUITE,
    CheckError,
    available_checks,
    check_cmc_conformal_willmore,
    check_conservation_system,
    check_conservative_general,
    check_F_el,
    check_willmore_el,
    evaluate,
    projection_agreement,
    refine,
    run_check,
)

LEVELS = (32, 64, 128)
S3 = round_sphere(3)
PERTURBED = parse_ambient("perturbed:eps=0.3,center=[0.3,0.2,0.5]")


def seq(name, ambient=None, levels=LEVELS, **kw):
    return [builtin(name, n=n, ambient=ambient, **kw) for n in levels]


CASES = [
    ("enneper", None, {}),
    ("torus", None, {}),
    ("clifford", None, {}),
    ("sphere", S3, {"shrink": 0.3}),
]


@pytest.mark.parametrize("name,amb,kw", CASES, ids=[c[0] + ("_s3" if c[1] else "") for c in CASES])
@pytest.mark.parametrize("check", IDENTITY_SUITE)
def test_identity_suite_converges(name, amb, kw, check):
    imm = builtin(name, n=16, ambient=amb, **kw)
    if check in CODIM1_ONLY and imm.dim != 3:
        pytest.skip("codimension-one identity")
    rep = refine(check, lambda n: builtin(name, n=n, ambient=amb, **kw), levels=LEVELS)
    assert rep.passed, rep.as_dict()
    assert rep.estimated_order is None or rep.estimated_order >= 1.8
    assert len(rep.per_refinement) == 3


def test_mis_signed_curvature_breaks_convergence():
    good = check_conservative_general(seq("sphere", PERTURBED), curvature_sign=1)
    bad = check_conservative_general(seq("sphere", PERTURBED), curvature_sign=-1)
    assert good.passed and good.estimated_order > 3.5
    assert not bad.passed and bad.estimated_order < 0.5


def test_mis_signed_laplacian_breaks_convergence():
    rep = run_check("codim1_conservative", seq("torus"), laplacian_sign=-1)
    assert not rep.passed and rep.estimated_order < 0.5


def test_curvature_sign_is_invisible_in_space_forms():
    # the curvature-derivative term vanishes identically on constant curvature ambients
    rep = check_conservative_general(seq("sphere", S3, shrink=0.3), curvature_sign=-1)
    assert rep.passed


@pytest.mark.parametrize(
    "name,kw",
    [("sphere", {}), ("clifford", {}), ("torus", {"R": np.sqrt(2), "r": 1.0})],
)
def test_willmore_surfaces_pass_free_el(name, kw):
    rep = check_willmore_el(seq(name, **kw))
    assert rep.passed and rep.estimated_order > 3.0


def test_real_and_complex_forms_agree_on_clifford():
    rep = check_willmore_el(seq("clifford"), form="real")
    assert rep.passed


def test_non_willmore_torus_fails_free_el():
    rep = check_willmore_el(seq("torus"))
    assert not rep.passed
    assert rep.sup_norm > 0.1


@pytest.mark.parametrize("amb,mult", [(S3, 2.0), (poincare_ball(3), -2.0)], ids=["sphere", "hyperbolic"])
def test_umbilic_sphere_in_space_form_is_area_constrained(amb, mult):
    # for totally umbilic spheres in a space form of curvature k the W residual is 2 k H
    imms = seq("sphere", amb, shrink=0.3)
    assert not check_willmore_el(imms).passed
    rep = check_willmore_el(imms, mode="area_constrained", multiplier=mult)
    assert rep.passed, rep.as_dict()


def test_conformal_willmore_functional_on_sphere_in_s3():
    imms = seq("sphere", S3, shrink=0.3)
    assert check_willmore_el(imms, functional="W_conf").passed
    assert not check_F_el(imms).passed


def test_conformal_constrained_mode_rejects_non_holomorphic_f():
    imm = builtin("sphere", n=32)
    f = np.conj(imm.grid.params[:, 0] + 1j * imm.grid.params[:, 1])
    with pytest.raises(CheckError):
        check_willmore_el(imm, mode="conformal_constrained", f=f)
    with pytest.raises(CheckError):
        check_willmore_el(imm, mode="conformal_constrained")


def test_conservation_system_on_willmore_sphere():
    rep = check_conservation_system(seq("sphere"))
    assert rep.passed
    assert set(rep.components) == {"sys1", "sys2", "sys3"}


def test_non_willmore_torus_fails_only_third_equation():
    rep = check_conservation_system(seq("torus"))
    comps = rep.components
    assert comps["sys1"]["exact_zero"] and comps["sys2"]["exact_zero"]
    assert not comps["sys3"]["exact_zero"]
    assert comps["sys3"]["estimated_order"] < 0.5
    assert not rep.passed


def test_cmc_sphere_in_s3_is_constrained_conformal_willmore():
    rep = check_cmc_conformal_willmore(seq("sphere", S3, shrink=0.3))
    assert rep.passed
    assert rep.expected_order == 1.5
    for comp in rep.components.values():
        assert comp["exact_zero"] or comp["estimated_order"] >= 1.5


def test_cmc_check_rejects_non_space_form():
    with pytest.raises(CheckError):
        check_cmc_conformal_willmore(builtin("sphere", n=32, ambient=PERTURBED))


def test_coordinate_operator_on_sphere_meshes():
    round_ = check_willmore_el(seq("sphere", levels=(32, 64, 128), domain="sphere"))
    assert round_.passed, round_.as_dict()
    ell = check_willmore_el(builtin("ellipsoid", n=64), zero_tol=1e-3)
    assert not ell.passed
    with pytest.raises(CheckError):
        check_willmore_el(builtin("graph", n=32), mode="conformal_constrained", f=np.zeros(32 * 32))


def test_checks_refuse_non_conformal_charts():
    with pytest.raises(CheckError):
        run_check("conservative", builtin("graph", n=32))


def test_projection_agreement():
    for imm in (builtin("torus", n=24), builtin("clifford", n=24), builtin("sphere", n=24, ambient=PERTURBED)):
        assert projection_agreement(imm) < 1e-12


def test_single_level_uses_threshold():
    imm = builtin("enneper", n=32)
    assert run_check("x_system", imm).passed
    rep = run_check("normal_divergence", imm, threshold=1e-12)
    assert not rep.passed and rep.estimated_order is None


def test_run_check_validation():
    with pytest.raises(ValueError):
        run_check("x_system", seq("enneper", levels=(64, 32)))
    with pytest.raises(KeyError):
        evaluate("nope", builtin("enneper", n=16))
    assert set(IDENTITY_SUITE) <= set(available_checks())


def test_report_serializes_and_notes_mask():
    rep = run_check("codazzi", seq("torus"))
    d = rep.as_dict()
    assert d["name"] == "codazzi"
    assert "boundary" in d["notes"]
    mesh = run_check("willmore_general", builtin("sphere", n=32, domain="sphere"))
    assert "polar" in mesh.notes

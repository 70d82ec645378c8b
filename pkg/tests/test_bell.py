import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocality.bell import (
    CLASSICAL_BOUND,
    NO_SIGNALING_BOUND,
    QUANTUM_BOUND,
    BoundClass,
    chsh_from_model,
    chsh_of_box,
    chsh_value,
    chsh_variants,
    classify,
    deterministic_vertices,
    is_local,
    max_chsh_over_axes,
)
from nonlocality.boxes import (
    ConditionalBox,
    InvalidBoxError,
    box_from_correlations,
    check_no_signaling,
    correlators,
    mix,
    pr_box,
    uniform_box,
)
from nonlocality.correlations import AxisConfiguration, CorrelationModel, box_at_angles

from oracles import fine_is_local, grid_max_chsh, simplex_grid_member, vertex_table

SQ2 = math.sqrt(2)


def test_chsh_value_examples():
    assert chsh_value(1, 1, 1, -1) == 4
    assert chsh_value(SQ2 / 2, SQ2 / 2, SQ2 / 2, -SQ2 / 2) == pytest.approx(2 * SQ2, abs=1e-15)
    assert chsh_value(1, 1, 1, 1) == 2


def test_chsh_value_rejects_out_of_range():
    with pytest.raises(ValueError):
        chsh_value(1.5, 0, 0, 0)


def test_chsh_of_box_examples():
    assert chsh_of_box(pr_box()) == 4.0
    assert chsh_of_box(uniform_box()) == 0.0
    # linearity: 0.75 * 4 + 0.25 * 0
    assert chsh_of_box(mix(pr_box(), uniform_box(), 0.75)) == pytest.approx(3.0, abs=1e-15)


def test_chsh_from_model_quarter_spaced_axes():
    assert chsh_from_model("superquantum") == 4.0
    assert chsh_from_model("quantum") == pytest.approx(3 * math.cos(math.pi / 4) - math.cos(3 * math.pi / 4), abs=1e-12)
    assert chsh_from_model("classical") == pytest.approx(3 * 0.5 - (-0.5), abs=1e-12)


def test_chsh_from_model_matches_box_route():
    axes = AxisConfiguration(0.1, 0.7, 1.9, 2.2)
    for model in CorrelationModel:
        assert chsh_from_model(model, axes) == chsh_of_box(box_at_angles(model, axes))


@pytest.mark.parametrize(
    "s,expected",
    [
        (4.0, BoundClass.SUPERQUANTUM_ONLY),
        (2 * SQ2, BoundClass.QUANTUM_ONLY),
        (1.5, BoundClass.LOCAL),
        (2.0, BoundClass.LOCAL),
        (2.0 + 1e-9, BoundClass.QUANTUM_ONLY),
        (-3.0, BoundClass.SUPERQUANTUM_ONLY),
        (4.1, BoundClass.IMPOSSIBLE),
    ],
)
def test_classify(s, expected):
    assert classify(s) is expected


def test_bounds():
    assert (CLASSICAL_BOUND, NO_SIGNALING_BOUND) == (2.0, 4.0)
    assert QUANTUM_BOUND == pytest.approx(2.8284271247461903)


def test_variants_are_the_eight_relabelings():
    vs = chsh_variants()
    assert len(set(vs)) == 8
    assert (1, 1, 1, -1) in vs
    for v in vs:
        assert sorted(v) in ([-1, 1, 1, 1], [-1, -1, -1, 1])


def test_vertices():
    verts = deterministic_vertices()
    assert len(verts) == 16
    for k, v in enumerate(verts):
        assert np.array_equal(v.probs, vertex_table(*divmod(k, 4)))
        assert abs(chsh_of_box(v)) == 2.0
        assert check_no_signaling(v).holds


def random_weights(rng, n=16):
    return rng.dirichlet(np.full(n, 0.3))


def combo(weights):
    return ConditionalBox(np.tensordot(weights, np.stack([v.probs for v in deterministic_vertices()]), axes=1))


def test_pr_box_nonlocal():
    cert = is_local(pr_box())
    assert not cert.is_local
    assert cert.weights is None
    assert cert.violated_inequality.value == 4.0
    assert cert.violated_inequality.coefficients == (1, 1, 1, -1)


@pytest.mark.parametrize("k", range(16))
def test_vertex_is_local_with_unit_weight(k):
    cert = is_local(deterministic_vertices()[k])
    assert cert.is_local
    assert cert.weights[k] == pytest.approx(1.0, abs=1e-12)
    assert cert.weights_by_response() == {divmod(k, 4): pytest.approx(1.0)}


def test_boundary_box_local():
    box = mix(pr_box(), uniform_box(), 0.5)
    assert chsh_of_box(box) == pytest.approx(2.0)
    cert = is_local(box)
    assert cert.is_local
    assert cert.recombine().allclose(box, 1e-9)
    # independent checks of the same verdict
    assert fine_is_local(box.probs)
    # weights of 1/8 on eight vertices
    assert simplex_grid_member(box.probs, 8)


def test_quantum_box_nonlocal():
    box = box_at_angles("quantum", AxisConfiguration.evenly_spaced())
    cert = is_local(box)
    assert not cert.is_local
    assert cert.violated_inequality.value == pytest.approx(2 * SQ2, abs=1e-12)
    assert not fine_is_local(box.probs)


def test_signaling_box_is_not_local():
    probs = np.full((2, 2, 2, 2), 0.25)
    probs[0, 0] = [[0.6, 0.0], [0.0, 0.4]]
    assert not is_local(ConditionalBox(probs)).is_local


def test_is_local_rejects_invalid():
    with pytest.raises(InvalidBoxError):
        is_local(ConditionalBox(np.zeros((2, 2, 2, 2))))
    with pytest.raises(ValueError):
        is_local(pr_box(), tol=0)


def test_random_combinations_local_and_bounded():
    rng = np.random.default_rng(11)
    for _ in range(100):
        box = combo(random_weights(rng))
        assert abs(chsh_of_box(box)) <= 2 + 1e-9
        cert = is_local(box)
        assert cert.is_local
        assert cert.residual < 1e-9
        assert cert.recombine().allclose(box, 1e-9)


@pytest.mark.parametrize("resolution", [2, 3])
def test_is_local_agrees_with_simplex_grid(resolution):
    # every grid box is local; the grid oracle must find it and the LP must agree
    rng = np.random.default_rng(resolution)
    for _ in range(10):
        counts = rng.multinomial(resolution, np.full(16, 1 / 16))
        box = combo(counts / resolution)
        assert simplex_grid_member(box.probs, resolution)
        assert is_local(box).is_local


def test_pr_box_not_on_simplex_grid():
    assert not simplex_grid_member(pr_box().probs, 4)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(-1, 1, allow_nan=False),
    st.floats(-1, 1, allow_nan=False),
    st.floats(-1, 1, allow_nan=False),
    st.floats(-1, 1, allow_nan=False),
)
def test_is_local_agrees_with_fine_criterion(e00, e01, e10, e11):
    box = box_from_correlations(e00, e01, e10, e11)
    es = correlators(box)
    worst = max(np.dot(v, es) for v in chsh_variants())
    # stay away from the facet where the two tolerances could disagree
    if abs(worst - 2) < 1e-6:
        return
    cert = is_local(box)
    assert cert.is_local == fine_is_local(box.probs)
    if not cert.is_local:
        assert cert.violated_inequality.value == pytest.approx(worst)


@pytest.mark.parametrize("variant", chsh_variants())
def test_every_violated_variant_means_nonlocal(variant):
    # box whose correlators follow the variant's signs at strength 0.6 -> value 2.4
    es = [0.6 * c for c in variant]
    box = box_from_correlations(*es)
    cert = is_local(box)
    assert not cert.is_local
    assert cert.violated_inequality.coefficients == variant
    assert cert.violated_inequality.value == pytest.approx(2.4)


def test_max_chsh_superquantum():
    result = max_chsh_over_axes("superquantum")
    assert result.value == pytest.approx(4.0, abs=1e-12)
    assert result.relative_angles == pytest.approx((math.pi / 4,) * 3, abs=1e-9)


def test_max_chsh_quantum_against_grid_oracle():
    result = max_chsh_over_axes("quantum")
    assert abs(result.value - 2 * SQ2) <= 1e-6
    assert result.relative_angles == pytest.approx((math.pi / 4,) * 3, abs=1e-5)
    assert result.value >= grid_max_chsh(math.cos) - 1e-12


def test_max_chsh_classical_against_grid_oracle():
    result = max_chsh_over_axes("classical")
    assert abs(result.value - 2) <= 1e-6
    oracle = grid_max_chsh(lambda t: 1 - 2 * t / math.pi)
    assert oracle == pytest.approx(2.0, abs=1e-12)
    # ties resolve to the smallest gap triple
    assert result.relative_angles == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("model", list(CorrelationModel))
def test_max_chsh_dominates_quarter_spaced_axes(model):
    assert max_chsh_over_axes(model).value >= chsh_from_model(model) - 1e-12


def test_max_chsh_is_deterministic():
    assert max_chsh_over_axes("quantum") == max_chsh_over_axes("quantum")

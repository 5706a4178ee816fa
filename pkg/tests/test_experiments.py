import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magwell.field import anisotropic_model_field, isotropic_model_field
from magwell.experiments import (
    fit_slope,
    gram_matrix,
    predict_gaps,
    rows_to_csv,
    run_residual_study,
    to_json,
)
from magwell.normal_form import normal_form
from magwell.quasimode import solve_cell


@pytest.fixture(scope="module")
def iso_nf():
    return normal_form(isotropic_model_field())


@settings(max_examples=30, deadline=None)
@given(p=st.floats(0.5, 4.0), c=st.floats(0.01, 100.0))
def test_fit_slope_recovers_power_law(p, c):
    h = [0.2, 0.1, 0.05, 0.025]
    fit = fit_slope(h, [c * x**p for x in h])
    assert fit.slope == pytest.approx(p, abs=1e-9)
    assert fit.intercept == pytest.approx(math.log(c), abs=1e-8)
    assert fit.fit_residual < 1e-9


def test_fit_slope_validation():
    with pytest.raises(ValueError):
        fit_slope([0.3, 0.2, 0.1], [1, 2, 3])
    with pytest.raises(ValueError):
        fit_slope([0.1, 0.2, 0.3, 0.4], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        fit_slope([0.4, 0.3, 0.2, 0.1], [1, 0, 3, 4])


def test_fit_residual_is_max_log_deviation():
    h = [0.4, 0.2, 0.1, 0.05]
    vals = [x**2 for x in h]
    vals[1] *= math.e**0.1
    fit = fit_slope(h, vals)
    x, y = np.log(h), np.log(vals)
    assert fit.fit_residual == pytest.approx(np.max(np.abs(fit.slope * x + fit.intercept - y)))


def test_predict_gaps_isotropic_example(iso_nf):
    r = predict_gaps(iso_nf, 0, 0, 3)
    assert r.m_spacing == pytest.approx(2.0, abs=1e-9)
    assert r.margin == pytest.approx(1.0, abs=1e-9)
    assert r.C - r.c == pytest.approx(8.0, abs=1e-9)
    assert r.C - r.c > 6
    assert r.satisfies_theorem
    for h in (0.01, 0.05):
        A, B = r.interval(h)
        assert B > A


@pytest.mark.parametrize("make", [isotropic_model_field, anisotropic_model_field])
def test_gap_intervals_nest_and_satisfy_bound(make):
    nf = normal_form(make())
    for j in (0, 1):
        for k in (0, 1):
            reports = [predict_gaps(nf, j, k, N) for N in range(1, 6)]
            for r in reports:
                assert r.satisfies_theorem
            for r1, r2 in zip(reports, reports[1:]):
                for h in (0.01, 0.05, 0.1):
                    A1, B1 = r1.interval(h)
                    A2, B2 = r2.interval(h)
                    assert A2 <= A1 and B1 <= B2


@pytest.mark.parametrize("k", [0, 1, 2])
def test_gap_spacing_scales_with_k(iso_nf, k):
    s0 = predict_gaps(iso_nf, 0, k, 2).m_spacing
    s1 = predict_gaps(iso_nf, 0, k + 1, 2).m_spacing
    assert s1 / s0 == pytest.approx((2 * k + 3) / (2 * k + 1), rel=1e-9)


def test_gap_rejects_zero_n(iso_nf):
    with pytest.raises(ValueError):
        predict_gaps(iso_nf, 0, 0, 0)


def test_gap_report_json_is_deterministic(iso_nf):
    a = predict_gaps(iso_nf, 0, 0, 3).to_json()
    b = predict_gaps(iso_nf, 0, 0, 3).to_json()
    assert a == b
    data = json.loads(a)
    assert data["N"] == 3 and data["satisfies_theorem"] is True


def test_csv_output_is_rfc_and_full_precision():
    rows = [{"h": 0.1, "name": 'a, "quoted"', "grid": [8, 9, 10], "value": 1 / 3}]
    text = rows_to_csv(rows, ["h", "name", "grid", "value"])
    assert text.endswith("\r\n")
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == ["h", "name", "grid", "value"]
    assert parsed[1][1] == 'a, "quoted"'
    assert float(parsed[1][3]) == 1 / 3
    assert parsed[1][3] == "0.33333333333333331"
    assert json.loads(parsed[1][2]) == [8, 9, 10]
    assert rows_to_csv([]) == ""


def test_json_is_canonical():
    obj = {"b": 0.1, "a": [1, 2.5, {"z": np.float64(1 / 3)}], "c": float("inf")}
    text = to_json(obj)
    assert text == to_json(dict(reversed(list(obj.items()))))
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    data = json.loads(text)
    assert data["a"][2]["z"] == 1 / 3 and data["c"] == "inf"
    assert "0.10000000000000001" in text


def test_small_residual_study_rows_and_slope(iso_nf):
    fit = run_residual_study(iso_nf, (0, 0, 0), [0.16, 0.12, 0.08, 0.06])
    assert len(fit.rows) == 4
    for row in fit.rows:
        assert {"h", "grid", "tol", "residual"} <= set(row)
    assert fit.values == sorted(fit.values, reverse=True)
    assert fit.slope > 2.0


def test_gram_diagonal_is_one(iso_nf):
    bundles = [solve_cell(iso_nf.coeffs, 0, 0, m) for m in range(3)]
    G, _ = gram_matrix(bundles, iso_nf, 0.1)
    np.testing.assert_allclose(np.abs(np.diag(G)), 1.0, atol=1e-12)
    assert abs(G[0, 1]) < 0.2
    np.testing.assert_allclose(G, G.conj().T, atol=1e-12)

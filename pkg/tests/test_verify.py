import json
import math

import numpy as np
import pytest

from czlemma.corpus import generate
from czlemma.czd import decompose
from czlemma.errors import ParameterError
from czlemma.grid import ScalarField, gradient
from czlemma.verify import Ceilings, dumps, read_report, sweep, verify, write_report


@pytest.fixture(scope="module")
def hat_report(hat_case):
    return verify(hat_case)


def test_report_layout(hat_report):
    doc = json.loads(dumps(hat_report.to_json()))
    assert list(doc) == ["meta", "constants", "residuals", "flags", "cubes"]
    assert doc["meta"]["schema"] == "czd-report v1"
    for key in ("maximal_function", "whitney_rule", "bump", "coefficients", "length_convention"):
        assert doc["meta"][key]
    assert all(isinstance(v, bool) for v in doc["flags"].values())
    assert doc["cubes"][0].keys() == {"level", "index", "side", "whitney"}
    for k in ("C2", "C3", "C4", "N", "K", "C5", "C5_key"):
        v = hat_report.constants[k]
        assert math.isfinite(v) and v >= 0


def test_hat_passes_all_flags(hat_report):
    assert hat_report.passed, [k for k, v in hat_report.flags.items() if not v]


def test_constants_match_straight_line_reimplementation(hat_case, hat_report):
    czd = hat_case
    f, alpha, p = czd.f.values, czd.alpha, czd.p
    h = czd.grid.h
    df = gradient(czd.f).values[0]
    N = len(czd.w)
    # product-rule gradient of g, subtracting cubes in reverse order
    dg = df.copy()
    energy = np.zeros(N)
    for i in range(N - 1, -1, -1):
        q = czd.w.dilates[i][0]
        chi, gchi = czd.pu.chi[i], czd.pu.grad[i][0]
        gb = df[q] * chi + (f[q] - czd.means[i]) * gchi
        dg[q] -= gb
        energy[i] = np.sum(np.abs(gb[::-1]) ** p) * h
    c2_grid = np.abs(dg).max() / alpha
    assert hat_report.constants["C2_grid"] == pytest.approx(c2_grid, rel=1e-10)
    qlen = np.array([2 * s for s in czd.w.sides])
    lo = np.array([c.bounds(czd.grid)[0][0] for c in czd.w.cubes])
    side = qlen / 2
    meas = np.minimum(lo + 1.5 * side, 1.0) - np.maximum(lo - 0.5 * side, 0.0)
    assert hat_report.constants["C3"] == pytest.approx(np.max(energy / (alpha ** p * meas)), rel=1e-10)
    sum_q = sum(reversed(qlen.tolist()))
    norm_p = np.sum(np.abs(df[::-1]) ** p) * h
    assert hat_report.constants["C4"] == pytest.approx(alpha ** p * sum_q / norm_p, rel=1e-10)
    count = np.zeros(czd.grid.cells, int)
    for q in reversed(czd.w.dilates):
        count[q] += 1
    assert hat_report.constants["N"] == count.max()
    assert hat_report.constants["K"] == max(len(I) for I in czd.w.neighbors)
    hr = np.zeros(czd.grid.cells)
    for m in range(N - 1, -1, -1):
        for i in czd.w.neighbors[m]:
            qi, qm = czd.w.dilates[i][0], czd.w.dilates[m][0]
            a, b = max(qi.start, qm.start), min(qi.stop, qm.stop)
            if a < b:
                hr[a:b] -= ((czd.means[m] - czd.means[i]) * czd.pu.grad[i][0][a - qi.start:b - qi.start]
                            * czd.pu.chi[m][a - qm.start:b - qm.start])
    assert hat_report.constants["C5_grid"] == pytest.approx(np.abs(hr).max() / alpha, rel=1e-10)
    assert hat_report.constants["C2"] >= hat_report.constants["C2_grid"]


def test_empty_bad_set_conventions():
    f = generate("affine", 64, 2)
    rep = verify(decompose(f, 20.0, 2.0))
    c, r = rep.constants, rep.residuals
    assert c["C3"] == 0 and c["C4"] == 0 and c["N"] == 0 and c["K"] == 0
    assert c["C2"] == pytest.approx(gradient(f).sup() / 20.0, rel=1e-12)
    assert c["C2"] <= 1
    for key in ("reassembly", "partition_sum", "partition_gradient_sum", "h_equivalence", "truncation_final"):
        assert r[key] == 0.0
    assert all(v == 0.0 for v in r["gradient_identity"].values())
    assert rep.passed
    const = verify(decompose(generate("constant", 32), 1.0, 1.0))
    assert const.constants["C2"] == 0.0 and const.passed


@pytest.mark.parametrize("name,n,alpha,p", [("hat1d", 1, 2.4, 1.0), ("gauss-bump", 2, 2.3, 2.0)])
def test_joint_scaling_invariance(name, n, alpha, p):
    f = generate(name, 64 if n == 2 else 256, n)
    a = verify(decompose(f, alpha, p))
    b = verify(decompose(ScalarField(f.grid, 2.0 * f.values), 2.0 * alpha, p))
    assert a.meta["omega_rle"] == b.meta["omega_rle"]
    # every constant is dimensionless except the raw norm and the L1 sum of the b_i
    for key, v in a.constants.items():
        if key == "grad_f_p_norm_p":
            assert b.constants[key] == pytest.approx(2.0 ** p * v, rel=1e-12)
        elif key == "local_integrability_sum":
            assert b.constants[key] == pytest.approx(2.0 * v, rel=1e-12)
        else:
            assert b.constants[key] == pytest.approx(v, rel=1e-10, abs=1e-14), key


def test_determinism(hat_case):
    assert dumps(verify(hat_case).to_json()) == dumps(verify(hat_case).to_json())


def test_seed_changes_only_random_order(hat_case):
    a = verify(hat_case, seed=0)
    b = verify(hat_case, seed=7)
    assert a.meta["seed"] == 0 and b.meta["seed"] == 7
    assert a.constants["C2"] == b.constants["C2"]


def test_floats_carry_17_digits(tmp_path, hat_report):
    path = tmp_path / "r.json"
    write_report(path, hat_report)
    back = read_report(path)
    assert back["constants"]["C2"] == hat_report.constants["C2"]
    assert back == json.loads(dumps(hat_report.to_json()))
    assert dumps({"x": 0.1}) == '{\n "x": 0.10000000000000001\n}\n'
    assert dumps([float("nan")]) == "[null]\n"


def test_flags_follow_ceilings(hat_case, hat_report):
    tight = Ceilings.for_dimension(1)
    tight.C2 = hat_report.constants["C2"] * 0.99
    rep = verify(hat_case, tight)
    assert not rep.flags["good_gradient_bound"]
    assert rep.constants == hat_report.constants
    assert {k for k, v in rep.flags.items() if not v} == {"good_gradient_bound"}


def test_ceilings_from_json():
    c = Ceilings.from_json({"C2": 3.0}, n=1)
    assert c.C2 == 3.0 and c.N == Ceilings.for_dimension(1).N
    with pytest.raises(ParameterError):
        Ceilings.from_json({"nope": 1})
    assert Ceilings.for_dimension(3).K > Ceilings.for_dimension(2).K > Ceilings.for_dimension(1).K


# -- sweep ------------------------------------------------------------------

def test_sweep_hat():
    f = generate("hat1d", 256)
    alphas = [2.0, 2.4, 3.2, 4.0, 4.8]
    reports, summary = sweep(f, alphas, 1.0)
    sums = [r.constants["sum_Q"] for r in reports]
    assert all(b <= a for a, b in zip(sums, sums[1:]))
    assert summary["sum_Q_nonincreasing"]
    assert summary["C2"]["max_over_min"] <= Ceilings.for_dimension(1).sweep_C2_ratio
    assert summary["C2_ratio_within_ceiling"]
    # bad sets are nested
    masks = [np.concatenate([np.full(r, bool(v)) for v, r in rep.meta["omega_rle"]]) for rep in reports]
    for a, b in zip(masks, masks[1:]):
        assert not np.any(b & ~a)


def test_sweep_above_maximum_is_empty():
    f = generate("hat1d", 128)
    reports, summary = sweep(f, [9.0, 10.0], 1.0)
    assert all(r.meta["cube_count"] == 0 for r in reports)
    assert summary["C3"]["max_over_min"] is None


@pytest.mark.parametrize("alphas", [[], [2.0, 1.0], [-1.0, 2.0]])
def test_sweep_rejects_bad_lists(alphas):
    with pytest.raises(ParameterError):
        sweep(generate("hat1d", 64), alphas, 1.0)

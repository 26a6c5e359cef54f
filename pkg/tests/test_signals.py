import numpy as np
import pytest

from lemonsignal.model import ScalarFn
from lemonsignal.signals import (
    Segment,
    SignalPlan,
    UnclassifiedRatioError,
    build_full_reveal,
    build_price_surplus_plan,
    build_volume_plan,
    classify_ratio,
    greedy_multicross,
    ratio,
    surplus_weight,
    theta_beta,
)
from lemonsignal.verification import Objective, plan_value


def test_nam_shape(canon_nam):
    assert canon_nam.kinds() == ["reveal", "pool", "cost"]
    assert canon_nam.meta["theta_lower"] == pytest.approx(0.25, abs=1e-9)
    th = np.array([0.1, 0.3, 0.45, 0.7])
    np.testing.assert_allclose(canon_nam.assign(th), [0.1, 0.7, 0.55, 0.6], atol=1e-9)


def test_pool_assignment_strictly_decreasing(canon_nam):
    pool = canon_nam.segments[1]
    th = np.linspace(pool.lo, pool.hi, 200)
    assert np.all(np.diff(pool.assign(th, canon_nam.inst)) < 0)


def test_plan_rejects_unpaired_pool(canon, canon_g2):
    with pytest.raises(ValueError, match="paired"):
        SignalPlan((Segment("reveal", 0.0, 0.25), Segment("pool", 0.25, 0.5, canon_g2), Segment("reveal", 0.5, 1.0)), canon)


def test_plan_rejects_gaps(canon):
    with pytest.raises(ValueError, match="gap"):
        SignalPlan((Segment("reveal", 0.0, 0.4), Segment("reveal", 0.5, 1.0)), canon)


def test_reveals_merge(canon):
    plan = SignalPlan((Segment("reveal", 0.0, 0.4), Segment("reveal", 0.4, 1.0)), canon)
    assert plan.same_as(build_full_reveal(canon))


def test_ratio_guard():
    one = ScalarFn.constant(1.0, kind="weight")
    assert ratio(one, 0.6, 0.1) == pytest.approx(2.0)
    with pytest.raises(ZeroDivisionError):
        ratio(one, 0.5, 0.5)


def test_classify_constant_weight(canon, unit):
    assert classify_ratio(canon, unit).shape == "increasing"


def test_classify_quartic(canon, quartic_weight):
    cls = classify_ratio(canon, quartic_weight)
    assert cls.shape == "convex-with-endpoint-condition"
    assert not cls.increasing


def test_pool_reveal_pool_parameters(canon_prp):
    m = canon_prp.meta
    assert m["x_star"] == pytest.approx(0.5245917242, abs=1e-9)
    assert m["theta1"] == pytest.approx(0.1016885847, abs=1e-9)
    assert m["theta2"] == pytest.approx(0.4754082758, abs=1e-9)
    assert m["x_star_residual"] <= 1e-10
    assert 0 < m["theta1"] < m["theta2"] < 0.5
    assert canon_prp.kinds() == ["pool", "reveal", "pool", "cost", "cost"]


def test_pool_reveal_pool_value(canon, canon_prp, quartic_weight):
    assert plan_value(canon_prp, canon, Objective.volume(quartic_weight)) == pytest.approx(0.0909515225922493, abs=1e-9)


def test_volume_dispatch(canon, unit, quartic_weight, canon_nam):
    assert build_volume_plan(canon, unit).same_as(canon_nam)
    assert build_volume_plan(canon, quartic_weight).label == "pool-reveal-pool"


@pytest.mark.parametrize("beta, expected", [(0.0, 0.5), (0.2, 1 / 3), (0.5, 1 / 6), (1.0, 0.0)])
def test_theta_beta(canon, beta, expected):
    assert abs(theta_beta(canon, beta) - expected) <= 1e-10


def test_surplus_weight(canon):
    w = surplus_weight(canon, 0.5)
    assert w(0.4) == pytest.approx(0.4 - 0.5 * 0.45)


@pytest.mark.parametrize("beta, kinds, value", [
    (0.5, ["reveal", "pool", "cost"], 0.2578125),
    (0.2, ["reveal", "pool", "cost", "reveal"], 2 / 15),
    (0.0, ["reveal"], 0.0625),
])
def test_price_surplus_routes(canon, beta, kinds, value):
    plan = build_price_surplus_plan(canon, beta)
    assert plan.kinds() == kinds
    assert plan_value(plan, canon, Objective.price_surplus(beta)) == pytest.approx(value, abs=1e-9)


def test_price_surplus_cutoff_geometry(canon):
    plan = build_price_surplus_plan(canon, 0.2)
    pool, cost = plan.segments[1], plan.segments[2]
    assert pool.lo == pytest.approx(1 / 3, abs=1e-10)
    assert cost.hi == pytest.approx(5 / 6, abs=1e-9)


def test_greedy_gains_at_bottom(bottom):
    assert greedy_multicross(bottom).same_as(build_full_reveal(bottom))


def test_greedy_three_crossings(triple):
    plan = greedy_multicross(triple)
    kinds = plan.kinds()
    assert kinds.count("pool") == 2
    costs = [s for s in plan.segments if s.kind == "cost"]
    eff = triple.crossings.efficient_blocks()
    covered = sum(s.hi - s.lo for s in costs)
    assert covered == pytest.approx(sum(hi - lo for lo, hi in eff), abs=1e-9)


def test_greedy_rejects_nonincreasing_ratio(triple):
    steep = ScalarFn.polynomial(np.poly(np.full(8, 1.1))[::-1], kind="weight")  # (1.1 - theta)^8
    with pytest.raises(UnclassifiedRatioError):
        greedy_multicross(triple, steep)


def test_plan_csv_and_json(tmp_path, canon_nam):
    path = tmp_path / "plan.csv"
    canon_nam.to_csv(str(path), n=10)
    rows = path.read_text().splitlines()
    assert rows[0] == "# schema=1" and rows[1] == "theta,x,segment" and len(rows) == 12
    assert '"label": "nam"' in canon_nam.to_json()

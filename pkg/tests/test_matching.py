import numpy as np
import pytest

from lemonsignal.matching import (
    EscapeError,
    SingularityError,
    integrate_matching,
    ode_rhs,
    seed_slope,
    solve_g1,
    solve_g2,
)
from lemonsignal.model import MarketInstance, ScalarFn


def test_top_curve_is_reflection(canon_g2):
    x = canon_g2.xs
    assert np.max(np.abs(canon_g2.types - (1.0 - x))) < 1e-7
    mid = 0.5 * (x[:-1] + x[1:])
    assert np.max(np.abs(canon_g2.type_at(mid) - (1.0 - mid))) < 1e-7


def test_lower_endpoints(canon, canon_g2):
    assert abs(canon_g2.theta_lo - 0.25) < 1e-6
    g1 = solve_g1(canon)
    assert abs(g1.theta_hi - (0.5 - 2 ** (-4 / 3))) < 1e-6


def test_seed_slope(canon):
    assert seed_slope(canon, 0.5) == pytest.approx(-1.0)


def test_rhs_singular_only_off_crossing(canon):
    assert ode_rhs(canon, 0.5, 0.5) == 0.0
    with pytest.raises(SingularityError):
        ode_rhs(canon, 0.6, 0.6)
    assert ode_rhs(canon, 0.6, 0.4) == pytest.approx(-1.0)


def test_martingale_balance(canon_g2):
    assert np.max(canon_g2.martingale_balance()) < 1e-9


def test_mean_at_inverts(canon_g2):
    th = np.linspace(0.26, 0.49, 9)
    np.testing.assert_allclose(canon_g2.mean_at(th), 1.0 - th, atol=1e-12)
    with pytest.raises(ValueError):
        canon_g2.mean_at(0.1)


def test_escape_when_full_trade_feasible():
    inst = MarketInstance(ScalarFn.constant(1.0), ScalarFn.polynomial([0.05, 0.4]))
    with pytest.raises(EscapeError) as err:
        solve_g2(inst)
    assert err.value.x_escape > 0


def test_stop_at_floor_truncates(canon):
    cut = solve_g2(canon, floor=1 / 3, stop_at_floor=True)
    assert cut.theta_lo == pytest.approx(1 / 3, abs=1e-12)
    assert cut.x_hi == pytest.approx(2 / 3, abs=1e-9)


def test_mass_balance_with_tilted_density():
    # density 1/2 + theta; the local balance of pooled and efficient mass at each mean
    inst = MarketInstance(ScalarFn.polynomial([0.5, 1.0]), ScalarFn.polynomial([0.25, 0.5]))
    g2 = solve_g2(inst)
    assert np.all(np.diff(g2.types) < 0)
    assert np.max(g2.martingale_balance()) < 1e-9
    f = inst.f
    for x in (0.55, 0.6, 0.7):
        a, b = g2.type_at(x), inst.c_inv(x)
        # differential form: f(a)|a'| (x - a) = f(b) b' (b - x)
        da = abs(g2.slope_at(x))
        db = 1.0 / inst.c_prime(b)
        assert f(a) * da * (x - a) == pytest.approx(f(b) * db * (b - x), rel=1e-7)


def test_csv_header(tmp_path, canon_g2):
    path = tmp_path / "curve.csv"
    canon_g2.to_csv(str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "# schema=1"
    assert lines[1] == "x,a,G,residual"


def test_backward_curve_matches_direct(canon):
    fwd = integrate_matching(canon, 0.5, 0.5, 1.0, seed=True, ceiling=0.5 + 1e-9)
    np.testing.assert_allclose(fwd.types, 1.0 - fwd.xs, atol=1e-7)

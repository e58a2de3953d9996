import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from scenmarket.estimator import ScenarioMarketClearing


def test_params_round_trip():
    est = ScenarioMarketClearing(model="traditional", req_up=8.0, req_down=1.2)
    assert est.get_params() == {"model": "traditional", "req_up": 8.0, "req_down": 1.2,
                                "scheme": "ex-ante", "realized": None}
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est
    est.set_params(req_up=4.0)
    assert est.req_up == 4.0


def test_fit_coopt(two_bus):
    est = ScenarioMarketClearing().fit(two_bus)
    assert est.objective_ == pytest.approx(367.212)
    assert est.prices_.eta_up == pytest.approx([2.0, 7.0, 6.0])
    assert np.abs(est.settlement_.balance_residuals()).max() < 1e-9
    costs = est.predict()
    assert costs[0] == 0.0 and len(costs) == 6
    probs = np.array([two_bus.base_probability, *two_bus.probabilities])
    first_stage = sum(g.c_energy * est.solution_.g[j] + g.c_res_up * est.solution_.r_up[j]
                      + g.c_res_down * est.solution_.r_down[j] for j, g in enumerate(two_bus.generators))
    assert first_stage + probs @ costs == pytest.approx(est.objective_)
    assert est.score(two_bus) == pytest.approx(-367.212)


def test_fit_traditional_scores_worse(two_bus):
    proposed = ScenarioMarketClearing().fit(two_bus).score(two_bus)
    trad = ScenarioMarketClearing(model="traditional", req_up=5.0, req_down=5.0).fit(two_bus)
    assert trad.prices_ is None
    assert trad.score(two_bus) < proposed


def test_ex_post_settlement(two_bus):
    est = ScenarioMarketClearing(scheme="ex-post", realized="S4").fit(two_bus)
    assert est.settlement_.realized == "S4"


def test_errors(two_bus):
    with pytest.raises(NotFittedError):
        ScenarioMarketClearing().predict()
    with pytest.raises(ValueError):
        ScenarioMarketClearing(model="traditional").fit(two_bus)
    with pytest.raises(ValueError):
        ScenarioMarketClearing(model="magic").fit(two_bus)


def test_angle_model(two_bus):
    assert ScenarioMarketClearing(model="angle").fit(two_bus).objective_ == pytest.approx(367.212)

"""scikit-learn style wrapper around clear, price and settle."""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .clearing import (BASE, clear_cooptimization, clear_cooptimization_angle,
                       clear_traditional, solve_recourse)
from .pricing import compute_prices
from .settlement import settle


class ScenarioMarketClearing(BaseEstimator):
    """Clears a ``MarketCase`` and exposes prices and settlement.

    ``fit(case)`` runs the chosen model. For the co-optimization models it
    also prices and settles, setting ``prices_`` and ``settlement_``.
    ``predict(scenario_ids)`` returns the realized re-dispatch cost of the
    cleared first stage for each scenario id (``"base"`` costs nothing).

    Parameters
    ----------
    model : {"coopt", "angle", "traditional"}
    req_up, req_down : float, optional
        Reserve requirements in MW, used only by ``model="traditional"``.
    scheme : {"ex-ante", "ex-post"}
    realized : str, optional
        Realized scenario for the settlement; required for ex-post.
    """

    def __init__(self, model="coopt", req_up=None, req_down=None, scheme="ex-ante", realized=None):
        self.model = model
        self.req_up = req_up
        self.req_down = req_down
        self.scheme = scheme
        self.realized = realized

    def fit(self, case, y=None):
        if self.model == "traditional":
            if self.req_up is None or self.req_down is None:
                raise ValueError("traditional model needs req_up and req_down")
            self.solution_ = clear_traditional(case, self.req_up, self.req_down)
            self.prices_ = None
            self.settlement_ = None
        elif self.model in ("coopt", "angle"):
            clear = clear_cooptimization if self.model == "coopt" else clear_cooptimization_angle
            self.solution_ = clear(case)
            self.prices_ = compute_prices(case, self.solution_)
            self.settlement_ = settle(case, self.solution_, self.prices_, self.scheme, self.realized)
        else:
            raise ValueError(f"unknown model {self.model!r}")
        self.case_ = case
        self.objective_ = self.solution_.objective
        return self

    def predict(self, scenario_ids=None):
        check_is_fitted(self, "solution_")
        if scenario_ids is None:
            scenario_ids = (BASE,) + self.case_.scenario_ids
        sol = self.solution_
        # the forecast itself triggers no re-dispatch
        return np.array([0.0 if sid == BASE else
                         solve_recourse(self.case_, sid, sol.g, sol.r_up, sol.r_down).cost
                         for sid in scenario_ids])

    def score(self, case, y=None):
        """Negative expected system cost, so higher is better."""
        check_is_fitted(self, "solution_")
        probs = np.concatenate([[case.base_probability], case.probabilities])
        first = self.solution_.objective
        if self.model == "traditional":
            return -(first + float(probs @ self.predict()))
        return -first

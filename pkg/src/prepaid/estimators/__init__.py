"""Estimation pipelines over a prepaid database."""
from ..domain import DomainError
from .bayes import (UnsupportedMethodError, abc_grid_pm, abc_svm_pm,
                    posterior_mean_sl)
from .freq import (SurrogateContext, build_surrogate_context, estimate_grid_map,
                   estimate_grid_ml, estimate_lin_ml, estimate_multicondition,
                   estimate_svm_ml, minimize_surrogate, tune_sigma_prior)
from .results import EstimationResult, PosteriorSample
from .uncertainty import (CIError, REFERENCE_RESULTS, bootstrap_ci,
                          draw_test_parameters, recovery_study,
                          write_report_csv, write_report_json)

METHODS = ("grid-ml", "svm-ml", "lin-ml", "grid-map", "sl-grid-pm",
           "abc-grid-pm", "abc-svm-pm")


def make_estimator(method: str, **options):
    """Callable (db, s_obs, t_obs) -> EstimationResult for a method tag."""
    if method == "grid-ml":
        return lambda db, s, t: estimate_grid_ml(db, s, t, **options)
    if method == "svm-ml":
        return lambda db, s, t: estimate_svm_ml(db, s, t, **options)
    if method == "lin-ml":
        return lambda db, s, t: estimate_lin_ml(db, s, t, **options)
    if method == "grid-map":
        prior = options.pop("prior")
        return lambda db, s, t: estimate_grid_map(db, s, t, prior, **options)
    if method == "sl-grid-pm":
        return lambda db, s, t: posterior_mean_sl(db, s, t, **options)
    if method == "abc-grid-pm":
        return lambda db, s, t: abc_grid_pm(db, s, t, **options)
    if method == "abc-svm-pm":
        return lambda db, s, t: abc_svm_pm(db, s, t, **options)
    raise DomainError(f"unknown method {method!r}; valid: {', '.join(METHODS)}")


__all__ = [
    "EstimationResult", "PosteriorSample", "SurrogateContext",
    "estimate_grid_ml", "estimate_svm_ml", "estimate_lin_ml", "estimate_grid_map",
    "estimate_multicondition", "tune_sigma_prior", "posterior_mean_sl",
    "abc_grid_pm", "abc_svm_pm", "bootstrap_ci", "recovery_study",
    "draw_test_parameters", "write_report_csv", "write_report_json",
    "build_surrogate_context", "minimize_surrogate", "make_estimator",
    "UnsupportedMethodError", "CIError", "REFERENCE_RESULTS", "METHODS",
]

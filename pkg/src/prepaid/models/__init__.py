"""Built-in simulators and a small registry used by database headers and the CLI."""
from __future__ import annotations

from ..domain import DomainError, Model
from .ricker import RickerModel
from .toy import ToyModel
from .trait import TraitModel

_FACTORIES = {
    "ricker": RickerModel,
    "ricker-online": lambda **kw: RickerModel(online=True, **{k: v for k, v in kw.items() if k != "online"}),
    "trait": TraitModel,
    "toy": ToyModel,
}


def model_ids() -> list[str]:
    return sorted(_FACTORIES)


def build_model(model_id: str, config: dict | None = None) -> Model:
    if model_id not in _FACTORIES:
        raise DomainError(f"unknown model {model_id!r}; available: {', '.join(model_ids())}")
    config = dict(config or {})
    if model_id == "ricker-online":
        config.pop("online", None)
    if model_id == "toy" and "mu_bounds" in config:
        config["mu_bounds"] = tuple(config["mu_bounds"])
    return _FACTORIES[model_id](**config)


__all__ = ["RickerModel", "TraitModel", "ToyModel", "build_model", "model_ids"]

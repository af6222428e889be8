"""Method selector and per-family hyperparameter defaults."""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

METHODS = (
    "fedavg",
    "fedprox",
    "scaffold",
    "scaled_scaffold",
    "fedcm",
    "fedadam",
    "fedadam_cm",
    "localadam",
    "fedlada",
)

SGD_FAMILY = ("fedavg", "fedprox", "scaffold", "scaled_scaffold", "fedcm")
GLOBAL_ADAPTIVE = ("fedadam", "fedadam_cm")
LOCAL_ADAPTIVE = ("localadam", "fedlada")

# methods whose clients mix the broadcast global offset into every local step
AMENDED = ("fedcm", "fedadam_cm", "fedlada")


@dataclass(frozen=True)
class MethodConfig:
    """One federated method and its optimizer hyperparameters.

    ``alpha`` is the weight on the local direction in amended methods
    (FedCM, amended FedAdam, FedLADA); LocalAdam pins it to 1. ``scale``
    multiplies the SCAFFOLD correction. ``server_variant`` picks plain Adam
    or AMSGrad for the FedAdam server.
    """

    name: str = "fedlada"
    eta_l: float = 0.001
    eta_g: float = 1.0
    alpha: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.99
    eps_v: float = 1e-8
    mu_prox: float = 0.01
    scale: float = 1.0
    server_variant: str = "adam"
    server_v0: float = 1e-2
    decay: float = 0.998

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"unknown method {self.name!r}; valid: {', '.join(METHODS)}")
        if self.name == "localadam" and self.alpha != 1.0:
            object.__setattr__(self, "alpha", 1.0)
        if not (self.eta_l > 0 and self.eta_g > 0):
            raise ValueError("learning rates must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.eps_v > 0:
            raise ValueError("eps_v must be positive")
        if self.mu_prox < 0:
            raise ValueError("mu_prox must be nonnegative")
        if self.server_variant not in ("adam", "amsgrad"):
            raise ValueError("server_variant must be 'adam' or 'amsgrad'")
        if not self.server_v0 > 0:
            raise ValueError("server_v0 must be positive")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must lie in (0, 1]")

    @classmethod
    def default(cls, name: str, **overrides) -> "MethodConfig":
        """Defaults of the method's family, then ``overrides``."""
        base = dict(name=name, **family_defaults(name))
        base.update(overrides)
        return cls(**base)

    def with_(self, **changes) -> "MethodConfig":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


def family_defaults(name: str) -> dict:
    """Learning rates of the method's family.

    Local SGD methods: eta_l 0.1, eta_g 1.0. FedAdam variants keep local SGD
    but use eta_g 0.1 on the server. Local adaptive methods: eta_l 0.001,
    eta_g 1.0.
    """
    if name in SGD_FAMILY:
        return dict(eta_l=0.1, eta_g=1.0)
    if name in GLOBAL_ADAPTIVE:
        return dict(eta_l=0.1, eta_g=0.1)
    if name in LOCAL_ADAPTIVE:
        return dict(eta_l=0.001, eta_g=1.0, alpha=1.0 if name == "localadam" else 0.1)
    raise ValueError(f"unknown method {name!r}; valid: {', '.join(METHODS)}")


def default_weight_decay(name: str) -> float:
    return 1e-3 if name in SGD_FAMILY else 1e-2

"""Parameter sets and transition rules for the three lattice models.

Each model is a continuous-time interacting particle system on a periodic
square lattice with 4-cell neighborhoods.  A model is described by a list
of transition rules of three kinds:

* ``Spontaneous(src, dst, rate)`` -- a cell in ``src`` switches to ``dst``
  at the given rate, independent of its surroundings (deaths).
* ``NeighborDriven(src, dst, trigger, rate)`` -- each neighbor in state
  ``trigger`` contributes a hazard ``rate/4`` for the ``src -> dst``
  switch (births, displacement, local transmission).
* ``GlobalDriven(src, dst, trigger, rate)`` -- the switch hazard is
  ``rate`` times the current global density of ``trigger`` (global
  dispersal / transmission).

The same rule lists drive the exact Gillespie simulator, the mean-field
ODEs and the pair-approximation ODEs, so the three never disagree about
what the model is.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

__all__ = [
    "Spontaneous",
    "NeighborDriven",
    "GlobalDriven",
    "Model",
    "DiseaseModelParams",
    "AlternateModelParams",
    "ResistanceModelParams",
    "disease_model",
    "alternate_model",
    "resistance_model",
]


@dataclass(frozen=True)
class Spontaneous:
    src: str
    dst: str
    rate: float


@dataclass(frozen=True)
class NeighborDriven:
    src: str
    dst: str
    trigger: str
    rate: float  # per-neighbor hazard is rate/4


@dataclass(frozen=True)
class GlobalDriven:
    src: str
    dst: str
    trigger: str
    rate: float  # hazard is rate * global density of trigger


@dataclass(frozen=True)
class Model:
    """A lattice model: state alphabet, single-character codes, rules."""

    name: str
    states: tuple[str, ...]
    codes: tuple[str, ...]  # one character per state, for snapshot files
    rules: tuple = ()

    def __post_init__(self):
        if len(self.codes) != len(self.states):
            raise ValueError("codes/states length mismatch")
        for r in self.rules:
            names = {r.src, r.dst} | ({r.trigger} if hasattr(r, "trigger") else set())
            unknown = names - set(self.states)
            if unknown:
                raise ValueError(f"rule references unknown states {unknown}")
            if r.rate < 0:
                raise ValueError(f"negative rate in rule {r}")

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index(self, state: str) -> int:
        return self.states.index(state)

    def mean_field_mixed(self) -> "Model":
        """Same model with every local interaction made global (well-mixed)."""
        rules = tuple(
            GlobalDriven(r.src, r.dst, r.trigger, r.rate)
            if isinstance(r, NeighborDriven)
            else r
            for r in self.rules
        )
        return replace(self, name=self.name + "-mixed", rules=rules)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


@dataclass(frozen=True)
class DiseaseModelParams:
    """Host/competitor/disease model.

    States: S (healthy host), I (infected host), C (competitor), E (empty).
    Hosts reproduce onto empty cells at beta1 and displace competitors at
    alpha (healthy) or alpha_hat (infected); competitors reproduce onto
    empty cells at beta2 and displace infected hosts at gamma; infection
    passes between neighbors at lam.  All offspring are healthy.
    """

    beta1: float
    beta2: float
    alpha: float
    lam: float
    alpha_hat: float = None  # type: ignore[assignment]
    gamma: float = None  # type: ignore[assignment]
    mu1: float = 1.0
    mu2: float = 1.0

    def __post_init__(self):
        if self.alpha_hat is None:
            object.__setattr__(self, "alpha_hat", self.alpha)
        if self.gamma is None:
            object.__setattr__(self, "gamma", 0.0)
        for nm in ("beta1", "beta2", "alpha", "lam", "alpha_hat", "gamma", "mu1", "mu2"):
            _require(getattr(self, nm) >= 0, f"{nm} must be >= 0")
        _require(self.beta1 >= self.alpha >= self.alpha_hat, "need beta1 >= alpha >= alpha_hat")
        _require(self.gamma <= self.beta2 + 1e-12, "need gamma <= beta2")

    @classmethod
    def from_effects(cls, beta1, beta2, alpha, lam, delta1, delta2, mu1=1.0, mu2=1.0):
        """Build from the two disease-effect knobs delta1, delta2 in [0, 1]."""
        _require(0 <= delta1 <= 1 and 0 <= delta2 <= 1, "delta1, delta2 must be in [0,1]")
        return cls(beta1=beta1, beta2=beta2, alpha=alpha, lam=lam,
                   alpha_hat=alpha * (1 - delta1), gamma=delta2 * beta2,
                   mu1=mu1, mu2=mu2)

    @property
    def delta1(self) -> float:
        return 0.0 if self.alpha == 0 else (self.alpha - self.alpha_hat) / self.alpha

    @property
    def delta2(self) -> float:
        return 0.0 if self.beta2 == 0 else self.gamma / self.beta2


def disease_model(p: DiseaseModelParams) -> Model:
    rules = (
        NeighborDriven("E", "S", "S", p.beta1),
        NeighborDriven("E", "S", "I", p.beta1),  # no vertical transmission
        NeighborDriven("E", "C", "C", p.beta2),
        NeighborDriven("S", "I", "I", p.lam),
        NeighborDriven("I", "C", "C", p.gamma),
        NeighborDriven("C", "S", "S", p.alpha),
        NeighborDriven("C", "S", "I", p.alpha_hat),
        Spontaneous("S", "E", p.mu1),
        Spontaneous("I", "E", p.mu1),
        Spontaneous("C", "E", p.mu2),
    )
    return Model("disease", ("S", "I", "C", "E"), ("S", "I", "C", "E"), rules)


@dataclass(frozen=True)
class AlternateModelParams:
    """Variant where weak/strong status is assigned at birth.

    Same displacement structure as the disease model, but there is no
    transmission: every offspring is weak (I) with probability rho,
    independent of the parent.
    """

    beta1: float
    beta2: float
    alpha: float
    rho: float
    alpha_hat: float = None  # type: ignore[assignment]
    gamma: float = None  # type: ignore[assignment]
    mu1: float = 1.0
    mu2: float = 1.0

    def __post_init__(self):
        if self.alpha_hat is None:
            object.__setattr__(self, "alpha_hat", self.alpha)
        if self.gamma is None:
            object.__setattr__(self, "gamma", 0.0)
        for nm in ("beta1", "beta2", "alpha", "alpha_hat", "gamma", "mu1", "mu2"):
            _require(getattr(self, nm) >= 0, f"{nm} must be >= 0")
        _require(0.0 <= self.rho <= 1.0, "rho must be in [0,1]")
        _require(self.beta1 >= self.alpha >= self.alpha_hat, "need beta1 >= alpha >= alpha_hat")
        _require(self.gamma <= self.beta2 + 1e-12, "need gamma <= beta2")

    @classmethod
    def from_effects(cls, beta1, beta2, alpha, rho, delta1, delta2, mu1=1.0, mu2=1.0):
        _require(0 <= delta1 <= 1 and 0 <= delta2 <= 1, "delta1, delta2 must be in [0,1]")
        return cls(beta1=beta1, beta2=beta2, alpha=alpha, rho=rho,
                   alpha_hat=alpha * (1 - delta1), gamma=delta2 * beta2,
                   mu1=mu1, mu2=mu2)


def alternate_model(p: AlternateModelParams) -> Model:
    rho = p.rho
    rules = (
        NeighborDriven("E", "S", "S", p.beta1 * (1 - rho)),
        NeighborDriven("E", "S", "I", p.beta1 * (1 - rho)),
        NeighborDriven("E", "I", "S", p.beta1 * rho),
        NeighborDriven("E", "I", "I", p.beta1 * rho),
        NeighborDriven("E", "C", "C", p.beta2),
        NeighborDriven("I", "C", "C", p.gamma),
        NeighborDriven("C", "S", "S", p.alpha * (1 - rho)),
        NeighborDriven("C", "S", "I", p.alpha_hat * (1 - rho)),
        NeighborDriven("C", "I", "S", p.alpha * rho),
        NeighborDriven("C", "I", "I", p.alpha_hat * rho),
        Spontaneous("S", "E", p.mu1),
        Spontaneous("I", "E", p.mu1),
        Spontaneous("C", "E", p.mu2),
    )
    return Model("alternate", ("S", "I", "C", "E"), ("S", "I", "C", "E"), rules)


# channel = (local_name, global_name); at most one of each pair may be nonzero
_RESISTANCE_CHANNELS = (
    ("beta_A", "B_A"), ("beta_U", "B_U"),
    ("gamma_AA", "Gamma_AA"), ("gamma_UA", "Gamma_UA"),
    ("gamma_UU", "Gamma_UU"), ("gamma_AU", "Gamma_AU"),
)


@dataclass(frozen=True)
class ResistanceModelParams:
    """Two host species sharing a pathogen; user-host resistance rho_U.

    States: SA/IA (attacked host), SU/IU (user host), E.  The attacked
    host colonizes empty and user-occupied sites; the user host colonizes
    empty sites only.  Transmission rates gamma_XY / Gamma_XY run from
    species X to species Y; lower case = nearest-neighbor dispersal,
    upper case = global dispersal, and each channel is one or the other.
    """

    alpha_A: float
    alpha_U: float
    rho_A: float = 0.0
    rho_U: float = 0.0
    mu_A: float = 0.1
    mu_U: float = 1.0
    beta_A: float = 0.0
    B_A: float = 0.0
    beta_U: float = 0.0
    B_U: float = 0.0
    gamma_AA: float = 0.0
    Gamma_AA: float = 0.0
    gamma_UA: float = 0.0
    Gamma_UA: float = 0.0
    gamma_UU: float = 0.0
    Gamma_UU: float = 0.0
    gamma_AU: float = 0.0
    Gamma_AU: float = 0.0

    def __post_init__(self):
        for f_ in ("mu_A", "mu_U", "beta_A", "B_A", "beta_U", "B_U",
                   "gamma_AA", "Gamma_AA", "gamma_UA", "Gamma_UA",
                   "gamma_UU", "Gamma_UU", "gamma_AU", "Gamma_AU"):
            _require(getattr(self, f_) >= 0, f"{f_} must be >= 0")
        _require(self.alpha_A >= 1 and self.alpha_U >= 1,
                 "damage factors alpha_A, alpha_U must be >= 1")
        _require(0 <= self.rho_A <= 1 and 0 <= self.rho_U <= 1,
                 "resistances must be in [0,1]")
        for lo, hi in _RESISTANCE_CHANNELS:
            _require(getattr(self, lo) == 0 or getattr(self, hi) == 0,
                     f"channel ({lo}, {hi}): dispersal is either local or global")

    @property
    def is_mean_field(self) -> bool:
        return all(getattr(self, lo) == 0 for lo, _ in _RESISTANCE_CHANNELS)

    def infection_rates(self, species: str, rho: float) -> dict:
        """(1-rho)-scaled incoming transmission rates for one species."""
        if species == "A":
            return {"local_A": (1 - rho) * self.gamma_AA, "global_A": (1 - rho) * self.Gamma_AA,
                    "local_U": (1 - rho) * self.gamma_UA, "global_U": (1 - rho) * self.Gamma_UA}
        return {"local_A": (1 - rho) * self.gamma_AU, "global_A": (1 - rho) * self.Gamma_AU,
                "local_U": (1 - rho) * self.gamma_UU, "global_U": (1 - rho) * self.Gamma_UU}


def resistance_model(p: ResistanceModelParams, rho_invader: float | None = None) -> Model:
    """Resident two-host model; with ``rho_invader`` adds invader states S, I."""
    states = ["SA", "IA", "SU", "IU", "E"]
    codes = ["A", "B", "U", "V", "E"]
    rules: list = []

    def both(src, dst, trigger, local, glob):
        if local:
            rules.append(NeighborDriven(src, dst, trigger, local))
        if glob:
            rules.append(GlobalDriven(src, dst, trigger, glob))

    user_states = ["SU", "IU"]
    if rho_invader is not None:
        states += ["S", "I"]
        codes += ["S", "I"]
        user_states += ["S", "I"]

    # attacked-host colonization of empty and user-occupied cells
    for tgt in ["E"] + user_states:
        for src_par in ("SA", "IA"):
            both(tgt, "SA", src_par, p.beta_A, p.B_A)
    # user-host colonization of empty cells only
    for src_par in ("SU", "IU"):
        both("E", "SU", src_par, p.beta_U, p.B_U)
    # transmission to the attacked host (from either species' infecteds)
    rA = p.infection_rates("A", p.rho_A)
    both("SA", "IA", "IA", rA["local_A"], rA["global_A"])
    for iu in ("IU",) + (("I",) if rho_invader is not None else ()):
        both("SA", "IA", iu, rA["local_U"], rA["global_U"])
    # transmission to the resident user host
    rU = p.infection_rates("U", p.rho_U)
    both("SU", "IU", "IA", rU["local_A"], rU["global_A"])
    for iu in ("IU",) + (("I",) if rho_invader is not None else ()):
        both("SU", "IU", iu, rU["local_U"], rU["global_U"])
    # deaths
    rules += [
        Spontaneous("SA", "E", p.mu_A),
        Spontaneous("IA", "E", p.alpha_A * p.mu_A),
        Spontaneous("SU", "E", p.mu_U),
        Spontaneous("IU", "E", p.alpha_U * p.mu_U),
    ]

    if rho_invader is not None:
        _require(0 <= rho_invader <= 1, "invader resistance must be in [0,1]")
        for src_par in ("S", "I"):
            both("E", "S", src_par, p.beta_U, p.B_U)
        rV = p.infection_rates("U", rho_invader)
        both("S", "I", "IA", rV["local_A"], rV["global_A"])
        for iu in ("IU", "I"):
            both("S", "I", iu, rV["local_U"], rV["global_U"])
        rules += [Spontaneous("S", "E", p.mu_U),
                  Spontaneous("I", "E", p.alpha_U * p.mu_U)]

    return Model("resistance", tuple(states), tuple(codes), tuple(rules))

"""Mean-field and pair-approximation ODE systems for the lattice models.

Three layers:

* generic mean-field and ordinary-pair-approximation (OPA) right-hand
  sides derived mechanically from a model's transition rules;
* clustered-invader closure rules (the epsilon-corrected triplet scheme)
  for the four invasion settings of the host/competitor/disease model;
* pseudoequilibrium solvers for the invader's local structure and
  bisection solvers for critical parameter values.

The OPA closure is P(sigma | sigma' sigma'') = P(sigma | sigma'); the
corrected scheme multiplies selected triplets by a clustering factor
``eps`` in (0, 1] and fixes the rest by probability conservation, so
``eps = 1`` reduces exactly to OPA.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .lattice import DensityVector, PairMatrix
from .models import (AlternateModelParams, DiseaseModelParams, GlobalDriven,
                     Model, NeighborDriven, Spontaneous, disease_model)

__all__ = [
    "COMPETITOR_INVASION",
    "DISEASE_INVASION",
    "HOST_EXTINCTION",
    "ALTERNATE_HOST_EXTINCTION",
    "DEFAULT_EPS",
    "PairApproxState",
    "ResidentStructure",
    "InvaderStructure",
    "rate_tables",
    "mean_field_rhs",
    "pair_rhs",
    "integrate_to_stationary",
    "mean_field_equilibrium",
    "pair_equilibrium",
    "resident_equilibrium",
    "contact_process_critical_beta",
    "ipa_close",
    "invasion_structure",
    "invasion_growth_rate",
    "invasion_threshold",
]

#: clustering factor calibrated against the single-species critical birth rate
DEFAULT_EPS = 0.8093

COMPETITOR_INVASION = "competitor-invasion"
DISEASE_INVASION = "disease-invasion"
HOST_EXTINCTION = "host-extinction"
ALTERNATE_HOST_EXTINCTION = "alternate-host-extinction"

_CONTEXTS = (COMPETITOR_INVASION, DISEASE_INVASION, HOST_EXTINCTION,
             ALTERNATE_HOST_EXTINCTION)
_DEGEN = 1e-12


# ---------------------------------------------------------------------------
# generic machinery: rate tables, mean field, OPA pair system
# ---------------------------------------------------------------------------

def rate_tables(model: Model):
    """Dense (spont, local, glob) rate arrays indexed by state numbers."""
    n = model.n_states
    spont = np.zeros((n, n))
    local = np.zeros((n, n, n))
    glob = np.zeros((n, n, n))
    for r in model.rules:
        i, j = model.index(r.src), model.index(r.dst)
        if isinstance(r, Spontaneous):
            spont[i, j] += r.rate
        elif isinstance(r, NeighborDriven):
            local[i, j, model.index(r.trigger)] += r.rate
        elif isinstance(r, GlobalDriven):
            glob[i, j, model.index(r.trigger)] += r.rate
        else:  # pragma: no cover
            raise TypeError(f"unknown rule type {type(r)}")
    return spont, local, glob


def mean_field_rhs(dens: DensityVector | np.ndarray, model: Model) -> np.ndarray:
    """Time derivatives of all state densities under P(a|b) = P(a)."""
    p = dens.p if isinstance(dens, DensityVector) else np.asarray(dens, float)
    spont, local, glob = rate_tables(model)
    flux = (spont + np.einsum("xyn,n->xy", local + glob, p)) * p[:, None]
    return flux.sum(axis=0) - flux.sum(axis=1)


@dataclass
class PairApproxState:
    """Redundant (densities, ordered-pair matrix) state for the pair ODEs.

    Densities and pairs are integrated as independent variables; the
    marginal identity sum_b P_ab = P_a is then a genuine invariant whose
    drift measures integrator consistency.  The last state of the model
    alphabet is carried as the complement 1 - sum(others).
    """

    states: tuple[str, ...]
    densities: np.ndarray  # (S,)
    pairs: np.ndarray      # (S, S) symmetric

    @classmethod
    def uncorrelated(cls, states, dens) -> "PairApproxState":
        if isinstance(dens, DensityVector):
            p = dens.p.copy()
        else:
            p = np.array([dens.get(s, 0.0) for s in states], float)
        return cls(tuple(states), p, np.outer(p, p))

    def flatten(self) -> np.ndarray:
        iu = np.triu_indices(len(self.states))
        return np.concatenate([self.densities[:-1], self.pairs[iu]])

    @classmethod
    def unflatten(cls, states, y) -> "PairApproxState":
        n = len(states)
        dens = np.empty(n)
        dens[:-1] = y[: n - 1]
        dens[-1] = 1.0 - dens[:-1].sum()
        pairs = np.zeros((n, n))
        iu = np.triu_indices(n)
        pairs[iu] = y[n - 1:]
        pairs = pairs + np.triu(pairs, 1).T
        return cls(tuple(states), dens, pairs)

    def conditional_matrix(self) -> np.ndarray:
        """C[a, b] = P_ab / P_b with the 0/0 convention."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.densities[None, :] > _DEGEN,
                            self.pairs / np.maximum(self.densities[None, :], _DEGEN),
                            0.0)

    def marginal_drift(self) -> float:
        return float(np.max(np.abs(self.pairs.sum(axis=1) - self.densities)))

    def pair_matrix(self) -> PairMatrix:
        p = np.clip(self.pairs, 0.0, None)
        return PairMatrix(self.states, p / p.sum())

    def density_vector(self) -> DensityVector:
        p = np.clip(self.densities, 0.0, None)
        return DensityVector(self.states, p / p.sum())


def pair_rhs(state: PairApproxState, model: Model) -> PairApproxState:
    """OPA right-hand side for singleton densities and ordered pairs.

    phi[x, y, c] is the x -> y switching rate of a cell with one known
    neighbor in state c and the other three neighbors closed by OPA; the
    pair derivative follows one member at a time.
    """
    spont, local, glob = rate_tables(model)
    p = state.densities
    pairs = state.pairs
    cond = state.conditional_matrix()

    base = (spont + np.einsum("xyn,n->xy", glob, p)
            + 0.75 * np.einsum("xyn,nx->xy", local, cond))
    phi = base[:, :, None] + 0.25 * local   # known neighbor adds rate/4

    out_rate = phi.sum(axis=1)                    # out_rate[x, c]
    gain = np.einsum("xac,xc->ac", phi, pairs)    # first-member transitions
    loss = out_rate * pairs
    d_pairs = gain + gain.T - loss - loss.T

    flux = (spont + np.einsum("xyn,n->xy", glob, p)
            + np.einsum("xyn,nx->xy", local, cond)) * p[:, None]
    d_dens = flux.sum(axis=0) - flux.sum(axis=1)
    return PairApproxState(state.states, d_dens, d_pairs)


def _flat_pair_rhs(model: Model):
    states = model.states

    def f(t, y):
        return pair_rhs(PairApproxState.unflatten(states, y), model).flatten()

    return f


def integrate_to_stationary(f, y0, *, rtol=1e-8, atol=1e-10, chunk=50.0,
                            max_time=4000.0, stop_norm=1e-10):
    """Integrate y' = f(t, y) until max|f| < stop_norm; returns (y, converged)."""
    y = np.asarray(y0, float)
    t = 0.0
    while t < max_time:
        sol = solve_ivp(f, (0.0, chunk), y, rtol=rtol, atol=atol, method="LSODA")
        if not sol.success:  # pragma: no cover
            return y, False
        y = sol.y[:, -1]
        t += chunk
        if np.max(np.abs(f(0.0, y))) < stop_norm:
            return y, True
    return y, False


def mean_field_equilibrium(model: Model, dens0, *, stop_norm=1e-11,
                           max_time=4000.0):
    """Stationary point of the mean-field ODEs reached from dens0."""
    if isinstance(dens0, dict):
        dens0 = DensityVector.from_dict(model.states, dens0)

    def f(t, y):
        p = np.empty(model.n_states)
        p[:-1] = y
        p[-1] = 1.0 - y.sum()
        return mean_field_rhs(p, model)[:-1]

    y, ok = integrate_to_stationary(f, dens0.p[:-1], stop_norm=stop_norm,
                                    max_time=max_time, rtol=1e-10, atol=1e-12)
    p = np.clip(np.append(y, 1.0 - y.sum()), 0.0, None)
    return DensityVector(model.states, p / p.sum()), ok


def pair_equilibrium(model: Model, dens0, *, stop_norm=1e-10, max_time=4000.0):
    """Stationary OPA pair state reached from an uncorrelated start."""
    st0 = PairApproxState.uncorrelated(model.states, dens0)
    y, ok = integrate_to_stationary(_flat_pair_rhs(model), st0.flatten(),
                                    stop_norm=stop_norm, max_time=max_time)
    return PairApproxState.unflatten(model.states, y), ok


# ---------------------------------------------------------------------------
# resident structures
# ---------------------------------------------------------------------------

@dataclass
class ResidentStructure:
    """Densities and conditionals of a resident community at equilibrium."""

    states: tuple[str, ...]
    densities: dict
    conditionals: dict  # (a, given) -> P_{a|given}
    converged: bool = True

    def P(self, s: str) -> float:
        return self.densities.get(s, 0.0)

    def C(self, a: str, given: str) -> float:
        return self.conditionals.get((a, given), 0.0)

    @classmethod
    def from_pair_state(cls, st: PairApproxState, converged=True):
        dens = {s: float(max(v, 0.0)) for s, v in zip(st.states, st.densities)}
        cm = st.conditional_matrix()
        cond = {(a, b): float(np.clip(cm[i, j], 0.0, 1.0))
                for i, a in enumerate(st.states) for j, b in enumerate(st.states)}
        return cls(st.states, dens, cond, converged)

    @classmethod
    def mean_field(cls, states, dens: dict, converged=True):
        cond = {(a, b): dens.get(a, 0.0) for a in states for b in states}
        return cls(tuple(states), dict(dens), cond, converged)


def resident_equilibrium(params, dens0: dict, *, model_factory=disease_model,
                         stop_norm=1e-10) -> ResidentStructure:
    """OPA equilibrium of a lattice-model community.

    States missing from ``dens0`` stay at zero density exactly, so one
    call covers host-only, host+disease, host+competitor and
    competitor-only residents.
    """
    model = model_factory(params)
    st, ok = pair_equilibrium(model, dens0, stop_norm=stop_norm)
    return ResidentStructure.from_pair_state(st, ok)


# ---------------------------------------------------------------------------
# clustered-invader closures
# ---------------------------------------------------------------------------

def contact_process_critical_beta(eps: float) -> float:
    """Critical single-species birth rate 4 / (3 eps) under the closure."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return 4.0 / (3.0 * eps)


def _host_split_weights(cond, sigma):
    """How a known host neighbor of unresolved strength splits into S vs I."""
    a = cond(sigma, "S") * cond("S", "I")
    b = cond(sigma, "I") * cond("I", "S")
    tot = a + b
    if tot <= 0:
        return 0.5, 0.5
    return a / tot, b / tot


def ipa_close(sigma: str, center: str, known: str, context: str, eps: float,
              cond) -> float:
    """Closed triplet value P(sigma | center with a known neighbor).

    ``cond(a, b)`` must return the current conditional P(a | b).  Triplets
    outside a context's corrected set fall back to OPA, so ``eps = 1``
    always returns the OPA value.
    """
    if context not in _CONTEXTS:
        raise ValueError(f"unknown closure context {context!r}")
    opa = cond(sigma, center)
    if context == COMPETITOR_INVASION:
        # competitor segregates from infected hosts
        if known == "I" and sigma == "C" and center != "C":
            return eps * cond("C", center)
        if known == "C" and center != "C":
            if sigma == "C":
                return cond("C", center) + (1 - eps) * cond("I", center)
            if sigma == "I":
                return eps * cond("I", center)
        return opa
    if context == DISEASE_INVASION:
        # infected hosts segregate from susceptibles
        if known == "S" and sigma == "I" and center != "I":
            return eps * cond("I", center)
        if known == "I" and center != "I":
            if sigma == "I":
                return cond("I", center) + (1 - eps) * cond("S", center)
            if sigma == "S":
                return eps * cond("S", center)
        return opa
    if context == HOST_EXTINCTION:
        # hosts segregate from the competitor; infecteds clump in the host
        if known == "C":
            if sigma == "S" and center != "S":
                return eps * cond("S", center)
            if sigma == "I" and center in ("C", "E"):
                return eps * cond("I", center)
        if known == "S":
            if sigma == "I" and center == "S":
                return eps * cond("I", "S")
            if center != "S":
                if sigma == "S":
                    return cond("S", center) + (1 - eps) * cond("C", center)
                if sigma == "C":
                    return eps * cond("C", center)
        if known == "I":
            if center == "E" or center == "C":
                if sigma == "I":
                    return cond("I", center) + (1 - eps) * cond("C", center)
                if sigma == "C":
                    return eps * cond("C", center)
            if center == "S":
                if sigma == "I":
                    return cond("I", "S") + (1 - eps) * cond("S", "S")
                if sigma == "S":
                    return eps * cond("S", "S")
        return opa
    # ALTERNATE_HOST_EXTINCTION: the joint host class H = S + I is scarce
    # near the competitor; a known host neighbor is split S vs I by weight.
    if known in ("S", "I") and center in ("C", "E"):
        w_s, w_i = _host_split_weights(cond, center)
        if sigma == "S":
            return cond("S", center) + (1 - eps) * cond("C", center) * w_s
        if sigma == "I":
            return cond("I", center) + (1 - eps) * cond("C", center) * w_i
        if sigma == "C":
            return eps * cond("C", center)
    return opa


# ---------------------------------------------------------------------------
# invader conditional systems (pseudoequilibrium local structure)
# ---------------------------------------------------------------------------

def _competitor_rhs(y, res: ResidentStructure, p: DiseaseModelParams, eps):
    """d/dt of (P_S|C, P_I|C, P_C|C) for a rare competitor."""
    PSC, PIC, PCC = y
    PEC = 1.0 - PSC - PIC - PCC
    b1, b2, al, ah, lam, g = p.beta1, p.beta2, p.alpha, p.alpha_hat, p.lam, p.gamma
    m1, m2 = p.mu1, p.mu2
    dPSC = (0.75 * b1 * res.C("S", "E") * PEC
            + 0.75 * b1 * eps * res.C("I", "E") * PEC
            + 0.75 * al * PSC * PCC
            + 0.75 * ah * PIC * PCC
            + 0.75 * b2 * PEC * res.C("S", "E")
            + 0.75 * g * PIC * res.C("S", "I")
            - m1 * PSC
            - 0.75 * lam * eps * res.C("I", "S") * PSC
            - 0.25 * al * PSC
            - b2 * PEC * PSC
            - g * PIC * PSC
            + 0.25 * al * PSC * PSC
            + 0.25 * ah * PIC * PSC)
    dPIC = (0.75 * lam * eps * res.C("I", "S") * PSC
            + 0.75 * b2 * eps * PEC * res.C("I", "E")
            + 0.75 * g * eps * PIC * res.C("I", "I")
            - m1 * PIC
            - 0.25 * g * PIC
            - 0.75 * g * (1 - eps) * res.C("I", "I") * PIC
            - 0.25 * ah * PIC
            - b2 * PEC * PIC
            - g * PIC * PIC
            + 0.25 * al * PSC * PIC
            + 0.25 * ah * PIC * PIC)
    dPCC = (0.5 * b2 * PEC
            + 1.5 * b2 * (1 - eps) * res.C("I", "E") * PEC
            + 0.5 * g * PIC
            + 1.5 * g * (1 - eps) * res.C("I", "I") * PIC
            - m2 * PCC
            - 0.5 * al * PSC * PCC
            - 0.5 * ah * PIC * PCC
            - b2 * PEC * PCC
            - g * PIC * PCC)
    return np.array([dPSC, dPIC, dPCC])


def _competitor_growth(y, res, p):
    PSC, PIC, PCC = y
    PEC = 1.0 - PSC - PIC - PCC
    return (-p.mu2 + p.beta2 * PEC + p.gamma * PIC
            - p.alpha * PSC - p.alpha_hat * PIC)


def _disease_rhs(y, res: ResidentStructure, p: DiseaseModelParams, eps):
    """d/dt of (P_S|I, P_I|I, P_C|I) for rare infection."""
    PSI, PII, PCI = y
    PEI = 1.0 - PSI - PII - PCI
    b1, b2, al, ah, lam, g = p.beta1, p.beta2, p.alpha, p.alpha_hat, p.lam, p.gamma
    m1, m2 = p.mu1, p.mu2
    dPSI = (0.25 * b1 * PEI
            + 0.75 * b1 * res.C("S", "E") * PEI
            + 0.75 * al * eps * res.C("S", "C") * PCI
            + 0.25 * ah * PCI
            + 0.75 * ah * (1 - eps) * res.C("S", "C") * PCI
            - m1 * PSI
            - 0.25 * lam * PSI
            - 0.75 * lam * (1 - 2 * eps) * res.C("S", "S") * PSI
            - lam * PSI * PSI
            + g * PCI * PSI)
    dPII = (0.5 * lam * PSI
            + 1.5 * lam * (1 - eps) * res.C("S", "S") * PSI
            - m1 * PII
            - 0.5 * g * PCI * PII
            - lam * PSI * PII)
    dPCI = (0.75 * lam * PSI * res.C("C", "S")
            + 0.75 * b2 * res.C("C", "E") * PEI
            - m2 * PCI
            - 0.25 * g * PCI
            - 0.25 * ah * PCI
            - 0.75 * ah * (1 - eps) * res.C("S", "C") * PCI
            - 0.75 * al * eps * res.C("S", "C") * PCI
            - lam * PSI * PCI
            + g * PCI * PCI)
    return np.array([dPSI, dPII, dPCI])


def _disease_growth(y, res, p):
    PSI, PII, PCI = y
    return -p.mu1 + p.lam * PSI - p.gamma * PCI


def _host_rhs(y, res: ResidentStructure, p: DiseaseModelParams, eps):
    """d/dt of (P_S|S, P_I|S, P_C|S, P_S|I, P_I|I, P_C|I) for a rare host."""
    PSS, PIS, PCS, PSI, PII, PCI = y
    PES = 1.0 - PSS - PIS - PCS
    PEI = 1.0 - PSI - PII - PCI
    b1, b2, al, ah, lam, g = p.beta1, p.beta2, p.alpha, p.alpha_hat, p.lam, p.gamma
    m1, m2 = p.mu1, p.mu2
    rq = PIS / PSI if PSI > _DEGEN else 0.0   # P_I / P_S
    CgE, CgC = res.C("C", "E"), res.C("C", "C")
    dPSS = (0.5 * b1 * PES
            + 1.5 * b1 * (1 - eps) * CgE * PES
            + 0.5 * al * PCS
            + 1.5 * al * (1 - eps) * CgC * PCS
            - m1 * PSS
            - 1.5 * lam * eps * PIS * PSS
            - b1 * PES * PSS
            - al * PCS * PSS
            + lam * PIS * PSS
            - b1 * PEI * PSS * rq
            - ah * PCI * PSS * rq)
    dPIS = rq * (0.25 * b1 * PEI
                 + 0.75 * b1 * (1 - eps) * CgE * PEI
                 + 0.25 * ah * PCI
                 + 0.75 * ah * (1 - eps) * CgC * PCI
                 - m1 * PSI
                 - 0.25 * lam * PSI
                 - 0.75 * lam * (1 - 2 * eps) * PSS * PSI
                 - 0.75 * g * eps * PCI * PSI
                 - b1 * PES * PSI
                 - al * PCS * PSI
                 + 0.25 * lam * PIS * PSI
                 - b1 * PEI * PIS
                 - ah * PCI * PIS)
    dPCS = (0.75 * b1 * eps * PES * CgE
            + 0.75 * b1 * eps * PEI * CgE * rq
            + 0.75 * ah * eps * PCI * CgC * rq
            + 0.75 * b2 * eps * CgE * PES
            + 0.75 * g * eps * PCI * PIS
            - m2 * PCS
            - 0.25 * al * PCS
            - 0.75 * al * (1 - 2 * eps) * CgC * PCS
            - b1 * PES * PCS
            - al * PCS * PCS
            + 0.25 * lam * PIS * PCS
            - b1 * PEI * PCS * rq
            - ah * PCI * PCS * rq)
    dPSI = (0.25 * b1 * PEI
            + 0.75 * b1 * (1 - eps) * CgE * PEI
            + 0.25 * ah * PCI
            + 0.75 * ah * (1 - eps) * CgC * PCI
            - m1 * PSI
            - 0.25 * lam * PSI
            - lam * PSI * PSI
            + 0.75 * g * PCI * PSI
            - 0.75 * lam * PIS * PSI
            - 0.75 * lam * (1 - 2 * eps) * PSS * PSI)
    dPCI = (0.75 * lam * PSI * PCS
            + 0.75 * b2 * eps * CgE * PEI
            - m2 * PCI
            - 0.25 * g * PCI
            - 0.25 * ah * PCI
            - 0.75 * ah * (1 - eps) * CgC * PCI
            - lam * PSI * PCI
            + 0.25 * g * PCI * PCI)
    dPII = (0.5 * lam * PSI
            + 1.5 * lam * PIS * PSI
            + 1.5 * lam * (1 - eps) * PSS * PSI
            - m1 * PII
            - 0.5 * g * PCI * PII
            - lam * PSI * PII)
    return np.array([dPSS, dPIS, dPCS, dPSI, dPII, dPCI])


def _host_growth(y, res, p):
    PSS, PIS, PCS, PSI, PII, PCI = y
    PES = 1.0 - PSS - PIS - PCS
    a_ss = -p.mu1 + p.beta1 * PES + p.alpha * PCS - p.lam * PIS
    a_ii = -p.mu1 + p.lam * PSI - p.gamma * PCI
    return max(a_ss, a_ii)


def _alt_host_rhs(y, res: ResidentStructure, p: AlternateModelParams, eps):
    """Rare-host conditional system for the strength-at-birth model.

    Assembled from the transition rules under the joint-host closure
    (P_{H|sigma C} = eps P_{H|sigma} for sigma in {C, E}, H = S + I, with
    the subtype split weights); only the closure identities are given by
    the source, so the pair fluxes here follow the same bookkeeping as
    the printed systems above.
    """
    PSS, PIS, PCS, PSI, PII, PCI = y
    PES = 1.0 - PSS - PIS - PCS
    PEI = 1.0 - PSI - PII - PCI
    b1, b2, al, ah, g, rho = p.beta1, p.beta2, p.alpha, p.alpha_hat, p.gamma, p.rho
    m1, m2 = p.mu1, p.mu2
    rq = PIS / PSI if PSI > _DEGEN else 0.0
    inv_rq = 1.0 / rq if rq > _DEGEN else 0.0
    CgE, CgC = res.C("C", "E"), res.C("C", "C")

    def wgt(cS, cI):
        a, b = cS * PSI, cI * PIS
        tot = a + b
        return (0.5, 0.5) if tot <= _DEGEN else (a / tot, b / tot)

    wSE, wIE = wgt(PES, PEI)     # known host neighbor of an E center
    wSC, wIC = wgt(PCS, PCI)     # known host neighbor of a C center
    S_EH = (1 - eps) * CgE * wSE  # P_{S|E H} in the rare-host limit
    I_EH = (1 - eps) * CgE * wIE
    S_CH = (1 - eps) * CgC * wSC
    I_CH = (1 - eps) * CgC * wIC

    g_S = (b1 * (1 - rho) * (PES + PEI * rq) + al * (1 - rho) * PCS
           + ah * (1 - rho) * PCI * rq - m1)
    g_I = (b1 * rho * (PES * inv_rq + PEI) + al * rho * PCS * inv_rq
           + ah * rho * PCI - g * PCI - m1)

    # birth rate of a pair member from a cell in state E or C with a known
    # host neighbor: strong offspring at (1-rho), weak at rho
    eb = (b1 / 4) * (1 + 3 * (S_EH + I_EH))            # E -> host, paired host
    cbS = (al / 4) * (1 + 3 * S_CH) + (3 * ah / 4) * I_CH   # C displaced, paired S
    cbI = (3 * al / 4) * S_CH + (ah / 4) * (1 + 3 * I_CH)   # C displaced, paired I

    dPSS = (2 * (1 - rho) * eb * PES
            + 2 * (1 - rho) * cbS * PCS
            - 2 * m1 * PSS
            - PSS * g_S)
    dPIS = (rho * eb * PES
            + rho * cbS * PCS
            + rq * ((1 - rho) * eb * PEI + (1 - rho) * cbI * PCI)
            - (2 * m1 + 0.75 * g * PCI) * PIS
            - PIS * g_S)
    dPCS = (0.75 * b2 * eps * CgE * PES
            + 0.75 * g * PCI * PIS
            + 0.75 * b1 * eps * (PES + PEI * rq) * CgE
            + 0.75 * eps * (al * PCS + ah * PCI * rq) * CgC
            - (m1 + m2 + (al / 4) * (1 + 3 * S_CH) + (3 * ah / 4) * I_CH) * PCS
            - PCS * g_S)
    dPSI = ((1 - rho) * eb * PEI
            + (1 - rho) * cbI * PCI
            + inv_rq * (rho * eb * PES + rho * cbS * PCS)
            - (2 * m1 + 0.75 * g * PCI) * PSI
            - PSI * g_I)
    dPII = (2 * rho * eb * PEI
            + 2 * rho * cbI * PCI
            - 2 * (m1 + 0.75 * g * PCI) * PII
            - PII * g_I)
    dPCI = (0.75 * b2 * eps * CgE * PEI
            + 0.75 * g * PCI * PII
            + 0.75 * b1 * eps * (PES * inv_rq + PEI) * CgE
            + 0.75 * eps * (al * PCS * inv_rq + ah * PCI) * CgC
            - (m1 + m2 + (3 * al / 4) * S_CH + (ah / 4) * (1 + 3 * I_CH)
               + (g / 4) * (1 + 3 * PCI)) * PCI
            - PCI * g_I)
    return np.array([dPSS, dPIS, dPCS, dPSI, dPII, dPCI])


def _alt_host_growth(y, res, p):
    PSS, PIS, PCS, PSI, PII, PCI = y
    PES = 1.0 - PSS - PIS - PCS
    PEI = 1.0 - PSI - PII - PCI
    b1, al, ah, g, rho = p.beta1, p.alpha, p.alpha_hat, p.gamma, p.rho
    a = np.array([
        [b1 * (1 - rho) * PES + al * (1 - rho) * PCS - p.mu1,
         b1 * (1 - rho) * PEI + ah * (1 - rho) * PCI],
        [b1 * rho * PES + al * rho * PCS,
         b1 * rho * PEI + ah * rho * PCI - g * PCI - p.mu1],
    ])
    return float(np.max(np.linalg.eigvals(a).real))


_SYSTEMS = {
    COMPETITOR_INVASION: (_competitor_rhs, _competitor_growth,
                          ("S|C", "I|C", "C|C")),
    DISEASE_INVASION: (_disease_rhs, _disease_growth,
                       ("S|I", "I|I", "C|I")),
    HOST_EXTINCTION: (_host_rhs, _host_growth,
                      ("S|S", "I|S", "C|S", "S|I", "I|I", "C|I")),
    ALTERNATE_HOST_EXTINCTION: (_alt_host_rhs, _alt_host_growth,
                                ("S|S", "I|S", "C|S", "S|I", "I|I", "C|I")),
}


@dataclass
class InvaderStructure:
    """Pseudoequilibrium conditional structure of a rare invading type."""

    context: str
    names: tuple[str, ...]
    values: np.ndarray
    converged: bool
    residual: float

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict:
        return {n: float(v) for n, v in zip(self.names, self.values)}


def _default_start(context, res):
    if context == COMPETITOR_INVASION:
        return np.array([res.P("S") * 0.7, res.P("I") * 0.7, 0.3])
    if context == DISEASE_INVASION:
        return np.array([res.P("S") * 0.7, 0.3, res.P("C") * 0.7])
    return np.array([0.3, 0.05, res.P("C") * 0.5, 0.3, 0.1, res.P("C") * 0.5])


def invasion_structure(context: str, resident: ResidentStructure, params, *,
                       eps: float = DEFAULT_EPS, y0=None, stop_norm=1e-10,
                       max_time=4000.0, fixed_point_iters=40000) -> InvaderStructure:
    """Stationary invader conditionals, frozen downstream as parameters.

    Integrates the context's conditional ODEs to stationarity; if the
    integration stalls, falls back to damped fixed-point iteration.
    """
    if context not in _SYSTEMS:
        raise ValueError(f"unknown invasion context {context!r}")
    rhs, _, names = _SYSTEMS[context]
    y = np.asarray(_default_start(context, resident) if y0 is None else y0, float)

    def f(t, v):
        return rhs(np.clip(v, 0.0, 1.0), resident, params, eps)

    y, ok = integrate_to_stationary(f, y, stop_norm=stop_norm, max_time=max_time)
    if not ok:
        dt = 0.05
        for _ in range(fixed_point_iters):
            dy = f(0.0, y)
            y = np.clip(y + dt * dy, 0.0, 1.0)
            if np.max(np.abs(dy)) < stop_norm:
                ok = True
                break
    resid = float(np.max(np.abs(f(0.0, y))))
    return InvaderStructure(context, names, np.clip(y, 0.0, 1.0), ok, resid)


def invasion_growth_rate(context: str, structure: InvaderStructure,
                         resident: ResidentStructure, params) -> float:
    """Per-capita growth of the rare type with its structure frozen."""
    _, growth, _ = _SYSTEMS[context]
    return float(growth(structure.values, resident, params))


def _mean_field_growth(context, resident, params):
    """Growth of the rare type with no spatial structure (P_{a|b} = P_a)."""
    _, growth, names = _SYSTEMS[context]
    y = []
    for nm in names:
        a, _ = nm.split("|")
        y.append(resident.P(a))
    st = InvaderStructure(context, tuple(names), np.array(y, float), True, 0.0)
    return invasion_growth_rate(context, st, resident, params)


def invasion_threshold(context: str, param_for, bracket, *, resident_for,
                       eps: float = DEFAULT_EPS, closure: str = "ipa",
                       xtol: float = 1e-8):
    """Root of the invader growth rate in one free parameter.

    ``param_for(x)`` builds the model parameters and ``resident_for(x)``
    the resident structure (a constant ResidentStructure is also
    accepted).  ``closure`` is one of ``meanfield``, ``opa``, ``ipa``.
    Returns (critical value, converged flag).
    """
    if closure == "opa":
        eps = 1.0
    const_res = resident_for if isinstance(resident_for, ResidentStructure) else None
    flags = {"ok": True}

    def growth(x):
        p = param_for(x)
        res = const_res if const_res is not None else resident_for(x)
        if closure == "meanfield":
            return _mean_field_growth(context, res, p)
        st = invasion_structure(context, res, p, eps=eps)
        if not st.converged:
            flags["ok"] = False
        return invasion_growth_rate(context, st, res, p)

    lo, hi = bracket
    g_lo, g_hi = growth(lo), growth(hi)
    if g_lo * g_hi > 0:
        return float("nan"), False
    root = brentq(growth, lo, hi, xtol=xtol)
    return float(root), flags["ok"]

"""Resistance-evolution analysis for the two-host shared-pathogen model.

Pipeline: solve the resident community to stationarity (mean-field or
pair closure), solve the invading phenotype's conditional neighborhood
structure at vanishing density, freeze it in the 2x2 linearized invasion
system and read off the dominant eigenvalue.  The finite-difference slope
of that eigenvalue in the resistance trait (the evolutionary flux)
locates evolutionarily stable resistance levels.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import root

from .models import ResistanceModelParams, resistance_model
from .pairapprox import (PairApproxState, ResidentStructure,
                         integrate_to_stationary, mean_field_rhs,
                         pair_equilibrium)

__all__ = [
    "ResidentEquilibrium",
    "InvaderStructure",
    "InvasionResult",
    "resident_rhs",
    "resident_equilibrium",
    "invader_structure",
    "invasion_matrix",
    "invasion_eigenvalue",
    "evolutionary_flux",
    "ess_search",
    "meanfield_jacobian_analysis",
    "disease_extinction_threshold",
]

_STATES = ("SA", "IA", "SU", "IU", "E")
_DEGEN = 1e-12
_EXTINCT = 1e-6


# ---------------------------------------------------------------------------
# resident community
# ---------------------------------------------------------------------------

def resident_rhs(dens, params: ResistanceModelParams) -> np.ndarray:
    """Mean-field time derivatives of (P_SA, P_IA, P_SU, P_IU).

    Written out explicitly (rather than via the generic rule tables) so
    root-polishing the equilibrium over thousands of parameter draws
    stays cheap; the pair-closure resident goes through the rule-driven
    pair system instead.
    """
    SA, IA, SU, IU = dens
    E = 1.0 - SA - IA - SU - IU
    p = params
    infA = (1 - p.rho_A) * (p.Gamma_AA * IA + p.Gamma_UA * IU)
    infU = (1 - p.rho_U) * (p.Gamma_AU * IA + p.Gamma_UU * IU)
    colA = p.B_A * (SA + IA)
    dSA = p.B_A * (E + SU + IU) * (SA + IA) - infA * SA - p.mu_A * SA
    dIA = infA * SA - p.alpha_A * p.mu_A * IA
    dSU = p.B_U * E * (SU + IU) - colA * SU - infU * SU - p.mu_U * SU
    dIU = infU * SU - colA * IU - p.alpha_U * p.mu_U * IU
    return np.array([dSA, dIA, dSU, dIU])


@dataclass
class ResidentEquilibrium:
    """Stationary resident community with its local structure."""

    params: ResistanceModelParams
    structure: ResidentStructure
    residual: float
    converged: bool
    closure: str  # "meanfield" or "pair"

    def P(self, s: str) -> float:
        return self.structure.P(s)

    def C(self, a: str, given: str) -> float:
        return self.structure.C(a, given)

    @property
    def infected_total(self) -> float:
        return self.P("IA") + self.P("IU")

    @property
    def endemic(self) -> bool:
        return self.infected_total > _EXTINCT


_DEFAULT_INIT = {"SA": 0.1, "IA": 0.1, "SU": 0.5, "IU": 0.1, "E": 0.2}


def resident_equilibrium(params: ResistanceModelParams, *, closure=None,
                         dens0=None, stop_norm=1e-11) -> ResidentEquilibrium:
    """Time-integrate the resident system to stationarity (plus a root polish
    in the mean-field case)."""
    if closure is None:
        closure = "meanfield" if params.is_mean_field else "pair"
    dens0 = dict(_DEFAULT_INIT if dens0 is None else dens0)
    if closure == "meanfield":
        y = np.array([dens0.get(s, 0.0) for s in ("SA", "IA", "SU", "IU")])
        y, _ = integrate_to_stationary(lambda t, v: resident_rhs(v, params), y,
                                       rtol=1e-10, atol=1e-13, chunk=100.0,
                                       max_time=6000.0, stop_norm=stop_norm)
        sol = root(lambda v: resident_rhs(v, params), y, tol=1e-13)
        if sol.success and np.all(sol.x > -1e-9) and sol.x.sum() < 1.0 + 1e-9:
            y = np.clip(sol.x, 0.0, None)
        dens = {s: float(v) for s, v in zip(("SA", "IA", "SU", "IU"), y)}
        dens["E"] = float(max(1.0 - sum(dens.values()), 0.0))
        resid = float(np.max(np.abs(resident_rhs(y, params))))
        struct = ResidentStructure.mean_field(_STATES, dens)
        return ResidentEquilibrium(params, struct, resid, resid < 1e-8, closure)
    model = resistance_model(params)
    st, ok = pair_equilibrium(model, dens0, stop_norm=stop_norm, max_time=6000.0)
    from .pairapprox import pair_rhs
    resid = float(np.max(np.abs(pair_rhs(st, model).flatten())))
    return ResidentEquilibrium(params, ResidentStructure.from_pair_state(st, ok),
                               resid, ok, closure)


def disease_extinction_threshold(params: ResistanceModelParams, *, closure=None,
                                 lo=0.0, hi=1.0, tol=1e-3) -> float:
    """Smallest user resistance at which the pathogen dies out of the
    resident community (bisection on stationary infected density)."""
    def extinct(r):
        eq = resident_equilibrium(replace(params, rho_U=r), closure=closure)
        return not eq.endemic
    if extinct(lo):
        return lo
    if not extinct(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if extinct(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# invader conditional structure
# ---------------------------------------------------------------------------

@dataclass
class InvaderStructure:
    """Stationary neighborhood conditionals of the rare phenotype.

    ``cond[(X, W)]`` is P(X | W) for W in {S, I} (the invader's own
    susceptible/infected classes); the invader-to-invader entries are
    included, and P(E | W) is the complement.
    """

    cond: dict
    ratio: float  # P_I / P_S = P(I|S) / P(S|I)
    converged: bool
    residual: float

    def C(self, a: str, given: str) -> float:
        if a == "E":
            ks = ("SA", "IA", "SU", "IU", "S", "I")
            return max(1.0 - sum(self.cond[(k, given)] for k in ks), 0.0)
        return self.cond[(a, given)]


_Y_NAMES = (("SA", "S"), ("IA", "S"), ("SU", "S"), ("IU", "S"), ("S", "S"),
            ("I", "S"), ("SA", "I"), ("IA", "I"), ("SU", "I"), ("IU", "I"),
            ("I", "I"), ("S", "I"))


def _invader_rhs(y, res: ResidentEquilibrium, rho_p: float):
    """The twelve conditional ODEs for the rare phenotype's neighborhood.

    Local user dispersal is required: the equations contain the ratio
    P(S|I)/P(I|S), which degenerates when the user host disperses
    globally.
    """
    p = res.params
    (SA_S, IA_S, SU_S, IU_S, S_S, I_S,
     SA_I, IA_I, SU_I, IU_I, I_I, S_I) = y
    E_S = 1.0 - SA_S - IA_S - SU_S - IU_S - S_S - I_S
    E_I = 1.0 - SA_I - IA_I - SU_I - IU_I - I_I - S_I
    q = I_S / S_I if S_I > _DEGEN else 0.0          # P_I / P_S
    inv_q = S_I / I_S if I_S > _DEGEN else 0.0      # P_S / P_I
    P_SA, P_IA, P_SU, P_IU = res.P("SA"), res.P("IA"), res.P("SU"), res.P("IU")
    P_E = res.P("E")
    A = P_SA + P_IA
    RC = res.C
    bA, BA, bU, BU = p.beta_A, p.B_A, p.beta_U, p.B_U
    gAA, GAA, gUA, GUA = p.gamma_AA, p.Gamma_AA, p.gamma_UA, p.Gamma_UA
    gUU, GUU, gAU, GAU = p.gamma_UU, p.Gamma_UU, p.gamma_AU, p.Gamma_AU
    muA, muU, aA, aU = p.mu_A, p.mu_U, p.alpha_A, p.alpha_U
    rA, rU, rp = p.rho_A, p.rho_U, rho_p

    # attacked-host colonization pressure with a known neighbor in state X
    def colA(X_sa, X_ia, paired_attacked=False):
        return ((bA / 4) * ((1.0 if paired_attacked else 0.0)
                            + 3 * (X_sa + X_ia)) + BA * A)

    # resident infection pressure on S_A with a known (invader) neighbor
    def infA_res(paired_inv_inf=False):
        return (1 - rA) * ((3 / 4) * gAA * RC("IA", "SA") + GAA * P_IA
                           + (gUA / 4) * ((1.0 if paired_inv_inf else 0.0)
                                          + 3 * RC("IU", "SA")) + GUA * P_IU)

    # resident-user infection pressure with a known (invader) neighbor
    def infU_res(paired_inv_inf=False):
        return (1 - rU) * ((gUU / 4) * ((1.0 if paired_inv_inf else 0.0)
                                        + 3 * RC("IU", "SU")) + GUU * P_IU
                           + (3 / 4) * gAU * RC("IA", "SU") + GAU * P_IA)

    # invader infection pressure with a known neighbor in state X
    def infV(paired_IA=False, paired_inf_user=False):
        return (1 - rp) * ((gUU / 4) * ((1.0 if paired_inf_user else 0.0)
                                        + 3 * (IU_S + I_S)) + GUU * P_IU
                           + (gAU / 4) * ((1.0 if paired_IA else 0.0)
                                          + 3 * IA_S) + GAU * P_IA)

    # user birth pressure onto an E cell next to a tracked invader pair
    birth3 = (3 / 4) * bU * (E_S + E_I * q) + BU * P_E * (1 + q)
    birth4 = bU * (E_S + E_I * q) + BU * P_E * (1 + q)

    infV_master = (1 - rp) * (gUU * (IU_S + I_S) + GUU * P_IU
                              + gAU * IA_S + GAU * P_IA)

    # --- conditionals given S -------------------------------------------
    dSA_S = (colA(RC("SA", "E"), RC("IA", "E")) * E_S
             + colA(SA_S, IA_S) * S_S
             + colA(RC("SA", "SU"), RC("IA", "SU")) * SU_S
             + colA(SA_I, IA_I) * I_S
             + colA(RC("SA", "IU"), RC("IA", "IU")) * IU_S
             + birth3 * RC("SA", "E")
             - (muA + (bA / 4) * (1 - SA_S - IA_S)
                + (1 - rp) * (-(gAU / 4) * IA_S - (gUU / 4) * (IU_S + I_S))
                + infA_res() * (4 / 3) * (3 / 4)
                + birth4) * SA_S)
    dIA_S = (infA_res() * (4 / 3) * (3 / 4) * SA_S
             + birth3 * RC("IA", "E")
             - (aA * muA
                + (1 - rp) * ((gAU / 4) * (1 - IA_S) - (gUU / 4) * (IU_S + I_S))
                + (bA / 4) * (1 - SA_S - IA_S)
                + birth4) * IA_S)
    dSU_S = (((bU / 4) * (1 + 3 * RC("SU", "E") + 3 * RC("IU", "E"))
              + BU * (P_SU + P_IU)) * E_S
             + birth3 * RC("SU", "E")
             - (muU + infU_res()
                + (1 - rp) * (-(gAU / 4) * IA_S - (gUU / 4) * (IU_S + I_S))
                + (3 / 4) * bA * (RC("SA", "SU") + RC("IA", "SU")) + BA * A
                - (bA / 4) * (SA_S + IA_S)
                + birth4) * SU_S)
    dIU_S = (birth3 * RC("IU", "E")
             + infU_res() * SU_S
             - (aU * muU
                + (3 / 4) * bA * (RC("SA", "IU") + RC("IA", "IU")) + BA * A
                - (bA / 4) * (SA_S + IA_S)
                + (1 - rp) * (-(gAU / 4) * IA_S
                              + (gUU / 4) * (1 - IU_S - I_S))
                + birth4) * IU_S)
    dS_S = ((bU / 2) * E_S
            - (muU
               + (1 - rp) * ((gUU / 2) * (IU_S + I_S) + GUU * P_IU
                             + (gAU / 2) * IA_S + GAU * P_IA)
               + (bA / 2) * (SA_S + IA_S) + BA * A
               + birth4) * S_S)
    dI_S = ((bU / 4) * E_I * q
            + (1 - rp) * ((3 / 4) * gUU * (IU_S + I_S) + GUU * P_IU
                          + (3 / 4) * gAU * IA_S + GAU * P_IA) * S_S
            - (aU * muU
               + (3 / 4) * bA * (SA_I + IA_I) + BA * A
               - (bA / 4) * (SA_S + IA_S)
               + (1 - rp) * (-(gAU / 4) * IA_S + (gUU / 4) * (1 - IU_S - I_S))
               + birth4) * I_S)

    # --- conditionals given I -------------------------------------------
    dSA_I = (colA(RC("SA", "E"), RC("IA", "E")) * E_I
             + colA(RC("SA", "IU"), RC("IA", "IU")) * IU_I
             + colA(SA_I, IA_I) * I_I
             + colA(RC("SA", "SU"), RC("IA", "SU")) * SU_I
             + colA(SA_S, IA_S) * S_I
             + infV() * (4 / 3) * (3 / 4) * SA_S * inv_q
             - (muA + (bA / 4) * (1 - SA_I - IA_I)
                + infA_res(paired_inv_inf=True)
                + infV_master * inv_q) * SA_I)
    dIA_I = (infA_res(paired_inv_inf=True) * SA_I
             + (1 - rp) * ((3 / 4) * gUU * (IU_S + I_S) + GUU * P_IU
                           + (gAU / 4) * (1 + 3 * IA_S) + GAU * P_IA)
             * IA_S * inv_q
             - (aA * muA + (bA / 4) * (1 - SA_I - IA_I)
                + infV_master * inv_q) * IA_I)
    dSU_I = (((3 / 4) * bU * (RC("IU", "E") + RC("SU", "E"))
              + BU * (P_SU + P_IU)) * E_I
             + infV() * (4 / 3) * (3 / 4) * SU_S * inv_q
             - (muU - (bA / 4) * (SA_I + IA_I)
                + (3 / 4) * bA * (RC("SA", "SU") + RC("IA", "SU")) + BA * A
                + infU_res(paired_inv_inf=True)
                + infV_master * inv_q) * SU_I)
    dIU_I = (infU_res(paired_inv_inf=True) * SU_I
             + (1 - rp) * ((gUU / 4) * (1 + 3 * IU_S + 3 * I_S) + GUU * P_IU
                           + (3 / 4) * gAU * IA_S + GAU * P_IA) * IU_S * inv_q
             - (aU * muU - (bA / 4) * (SA_I + IA_I)
                + (3 / 4) * bA * (RC("SA", "IU") + RC("IA", "IU")) + BA * A
                + infV_master * inv_q) * IU_I)
    dI_I = ((1 - rp) * ((gUU / 2) * (1 + 3 * IU_S + 3 * I_S) + 2 * GUU * P_IU
                        + (3 / 2) * gAU * IA_S + 2 * GAU * P_IA) * S_I
            - (aU * muU + (bA / 2) * (SA_I + IA_I) + BA * A
               + infV_master * inv_q) * I_I)
    dS_I = ((bU / 4) * E_I
            + (1 - rp) * ((3 / 4) * gUU * (IU_S + I_S) + GUU * P_IU
                          + (3 / 4) * gAU * IA_S + GAU * P_IA) * S_S * inv_q
            - (muU - (bA / 4) * (SA_I + IA_I)
               + (3 / 4) * bA * (SA_S + IA_S) + BA * A
               + (1 - rp) * ((gUU / 4) * (1 + 3 * IU_S + 3 * I_S) + GUU * P_IU
                             + (3 / 4) * gAU * IA_S + GAU * P_IA)
               + infV_master * inv_q) * S_I)

    return np.array([dSA_S, dIA_S, dSU_S, dIU_S, dS_S, dI_S,
                     dSA_I, dIA_I, dSU_I, dIU_I, dI_I, dS_I])


def invader_structure(resident: ResidentEquilibrium, rho_prime: float, *,
                      stop_norm=1e-10, max_time=6000.0) -> InvaderStructure:
    """Stationary conditional structure of a rare phenotype.

    Mean-field residents get the structureless solution (conditionals
    equal resident densities).  The pair-closure system requires local
    user dispersal; with a globally dispersing user both P(I|S) and
    P(S|I) vanish and the equations degenerate.
    """
    p = resident.params
    if resident.closure == "meanfield":
        cond = {(X, W): resident.P(X) for X in _STATES[:-1] for W in ("S", "I")}
        for W in ("S", "I"):
            cond[("S", W)] = 0.0
            cond[("I", W)] = 0.0
        return InvaderStructure(cond, 0.0, True, 0.0)
    if p.beta_U == 0:
        raise ValueError("conditional invasion equations require local user "
                         "dispersal (beta_U > 0); the global-user case is "
                         "unsupported")
    rc = resident.C
    y0 = np.array([rc("SA", "SU"), rc("IA", "SU"), 0.7 * rc("SU", "SU"),
                   0.7 * rc("IU", "SU"), 0.25, 0.05,
                   rc("SA", "IU"), rc("IA", "IU"), 0.7 * rc("SU", "IU"),
                   0.7 * rc("IU", "IU"), 0.25, 0.20])

    def f(t, v):
        return _invader_rhs(np.clip(v, 0.0, 1.0), resident, rho_prime)

    y, ok = integrate_to_stationary(f, y0, stop_norm=stop_norm,
                                    max_time=max_time, rtol=1e-9, atol=1e-12)
    if not ok:
        dt = 0.02
        for _ in range(60000):
            dy = f(0.0, y)
            y = np.clip(y + dt * dy, 0.0, 1.0)
            if np.max(np.abs(dy)) < stop_norm:
                ok = True
                break
    resid = float(np.max(np.abs(f(0.0, y))))
    cond = {pair: float(np.clip(v, 0.0, 1.0)) for pair, v in zip(_Y_NAMES, y)}
    ratio = cond[("I", "S")] / cond[("S", "I")] if cond[("S", "I")] > _DEGEN else 0.0
    return InvaderStructure(cond, ratio, ok, resid)


# ---------------------------------------------------------------------------
# invasion eigenvalue, flux, ESS
# ---------------------------------------------------------------------------

@dataclass
class InvasionResult:
    rho_prime: float
    eigenvalue: float
    matrix: np.ndarray
    converged: bool


def invasion_matrix(resident: ResidentEquilibrium, struct: InvaderStructure,
                    rho_prime: float) -> np.ndarray:
    """2x2 Jacobian of the invader densities with structure frozen."""
    p = resident.params
    A = resident.P("SA") + resident.P("IA")
    P_E, P_IU, P_IA = resident.P("E"), resident.P("IU"), resident.P("IA")
    C = struct.C
    inf_S = (1 - rho_prime) * (p.gamma_UU * (C("IU", "S") + C("I", "S"))
                               + p.Gamma_UU * P_IU
                               + p.gamma_AU * C("IA", "S") + p.Gamma_AU * P_IA)
    a_ss = (p.beta_U * C("E", "S") + p.B_U * P_E
            - p.beta_A * (C("SA", "S") + C("IA", "S")) - p.B_A * A
            - p.mu_U - inf_S)
    a_si = p.beta_U * C("E", "I") + p.B_U * P_E
    a_is = inf_S
    a_ii = (-p.beta_A * (C("SA", "I") + C("IA", "I")) - p.B_A * A
            - p.alpha_U * p.mu_U)
    return np.array([[a_ss, a_si], [a_is, a_ii]])


def invasion_eigenvalue(resident: ResidentEquilibrium, rho_prime: float, *,
                        struct: InvaderStructure | None = None) -> InvasionResult:
    """Dominant eigenvalue of the linearized invasion system."""
    if struct is None:
        struct = invader_structure(resident, rho_prime)
    m = invasion_matrix(resident, struct, rho_prime)
    tr, det = m[0, 0] + m[1, 1], m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    disc = tr * tr - 4.0 * det
    lam = 0.5 * (tr + np.sqrt(disc)) if disc >= 0 else 0.5 * tr
    return InvasionResult(rho_prime, float(lam), m, struct.converged)


def evolutionary_flux(rho_minus: float, rho_plus: float,
                      params: ResistanceModelParams, *,
                      resident: ResidentEquilibrium | None = None):
    """(lambda*(rho+) - lambda*(rho-)) / (rho+ - rho-); positive means
    selection for higher resistance.  Requires rho- < rho_U < rho+."""
    if not rho_minus < params.rho_U < rho_plus:
        raise ValueError("need rho_minus < rho_U < rho_plus")
    if resident is None:
        resident = resident_equilibrium(params)
    if not resident.endemic:
        raise ValueError("pathogen extinct in the resident community; "
                         "flux undefined")
    lam_m = invasion_eigenvalue(resident, rho_minus)
    lam_p = invasion_eigenvalue(resident, rho_plus)
    flux = (lam_p.eigenvalue - lam_m.eigenvalue) / (rho_plus - rho_minus)
    return flux, lam_m, lam_p


def _flux_at(params, rho, drho):
    p = replace(params, rho_U=rho)
    res = resident_equilibrium(p)
    if not res.endemic:
        return None
    f, _, _ = evolutionary_flux(rho - drho, rho + drho, p, resident=res)
    return f


@dataclass
class EssResult:
    verdict: str            # "interior", "selects-zero", "selects-extinction-threshold"
    rho_star: float | None
    extinction_threshold: float
    fluxes: list


def ess_search(params: ResistanceModelParams, *, rho_range=(0.0, 1.0),
               drho=0.01, tol=1e-3, coarse=9) -> EssResult:
    """Locate the evolutionarily stable resistance by bisection on flux sign.

    Returns an interior ESS where the flux crosses + to -, or the verdict
    that selection drives resistance to 0 or up to the pathogen's
    extinction threshold.
    """
    lo, hi = rho_range
    ext = disease_extinction_threshold(params, lo=lo, hi=hi)
    hi_eff = min(hi, ext - 2 * drho)
    lo_eff = max(lo, drho)
    fluxes = []
    if hi_eff <= lo_eff:
        return EssResult("selects-extinction-threshold", None, ext, fluxes)
    grid = np.linspace(lo_eff, hi_eff, coarse)
    vals = []
    for r in grid:
        f = _flux_at(params, float(r), drho)
        fluxes.append((float(r), f))
        vals.append(f)
    known = [(r, f) for r, f in zip(grid, vals) if f is not None]
    if not known:
        return EssResult("selects-extinction-threshold", None, ext, fluxes)
    if all(f < 0 for _, f in known):
        return EssResult("selects-zero", None, ext, fluxes)
    if all(f > 0 for _, f in known):
        return EssResult("selects-extinction-threshold", None, ext, fluxes)
    # bracket the + -> - crossing
    a = max(r for r, f in known if f > 0)
    bigger = [r for r, f in known if r > a and f < 0]
    b = min(bigger)
    fa = next(f for r, f in known if r == a)
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = _flux_at(params, mid, drho)
        fluxes.append((mid, fm))
        if fm is None or fm < 0:
            b = mid
        else:
            a, fa = mid, fm
    return EssResult("interior", 0.5 * (a + b), ext, fluxes)


# ---------------------------------------------------------------------------
# mean-field sign analysis
# ---------------------------------------------------------------------------

def meanfield_jacobian_analysis(resident: ResidentEquilibrium, rho_prime: float):
    """Closed-form det/trace of the mean-field invasion Jacobian vs the
    directly assembled matrix.

    The closed forms substitute the resident stationarity relations:
    det J carries the sign of (rho_U - rho') through the damage factor
    (alpha_U - 1), and tr J <= 0 whenever rho' <= rho_U.
    """
    p = resident.params
    if not p.is_mean_field:
        raise ValueError("closed forms hold for the mean-field (all-global) case")
    if not resident.endemic:
        raise ValueError("closed forms degenerate at a disease-free equilibrium")
    P_SU, P_IU = resident.P("SU"), resident.P("IU")
    P_IA, P_E = resident.P("IA"), resident.P("E")
    A = resident.P("SA") + resident.P("IA")
    T = p.Gamma_AU * P_IA + p.Gamma_UU * P_IU
    det_closed = ((p.rho_U - rho_prime) * (1 - rho_prime) * 0 +
                  (p.rho_U - rho_prime) * T
                  * (p.alpha_U - 1) * p.mu_U * P_SU / (P_SU + P_IU))
    tr_closed = ((rho_prime - p.rho_U) * T
                 - p.B_U * P_E * P_IU / P_SU
                 - p.B_A * A - p.alpha_U * p.mu_U)
    struct = invader_structure(resident, rho_prime)
    m = invasion_matrix(resident, struct, rho_prime)
    det_raw = float(np.linalg.det(m))
    tr_raw = float(np.trace(m))
    eig = np.linalg.eigvals(m)
    return {"det_closed": float(det_closed), "tr_closed": float(tr_closed),
            "det": det_raw, "tr": tr_raw,
            "eigenvalues": np.sort(eig.real)[::-1], "matrix": m}

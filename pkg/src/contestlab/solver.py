"""Symmetric Markov-perfect-equilibrium value solvers.

Three routes to the same object: exact backward induction for acyclic rules,
closed-form recursions for the tug-of-war (with reset) and consecutive-win
families, and a damped fixed-point engine for arbitrary cyclic rules.  The
closed-form routes double as oracles for the generic engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .automaton import (
    ContestAutomaton,
    ContestSpec,
    WINNERS,
    build_consecutive_win,
    build_tug_of_war,
    swap_involution,
)
from .errors import (
    ConvergenceError,
    CyclicAutomatonError,
    DomainError,
    UnsupportedKindError,
)
from .success import (
    SuccessFunction,
    augmented_gain,
    psi,
    psi_inverse,
    solve_battle,
)

__all__ = [
    "StateValues",
    "ValueSolution",
    "solve_finite",
    "solve_tow_closed",
    "solve_consecutive_closed",
    "solve_cyclic",
    "residual",
    "solve",
]

_BRENTQ_RTOL = 4.0 * np.finfo(float).eps


@dataclass(frozen=True)
class StateValues:
    """Equilibrium quantities at one nonterminal state."""

    value_a: float
    value_b: float
    stake_a: float
    stake_b: float
    effort_a: float
    effort_b: float
    win_prob_a: float


@dataclass
class ValueSolution:
    """Per-state equilibrium values with solver provenance.

    ``states`` holds detail rows for nonterminal states; ``values_a`` and
    ``values_b`` cover every state including terminals.  ``residual`` bounds
    the supremum Bellman violation of the reported values.
    """

    method: str
    residual: float
    iterations: int
    prize: float
    start: int
    states: dict
    values_a: dict
    values_b: dict
    labels: dict
    extras: dict = field(default_factory=dict)

    @property
    def v0_a(self) -> float:
        return self.values_a[self.start]

    @property
    def v0_b(self) -> float:
        return self.values_b[self.start]

    def value_pair(self, s: int) -> tuple[float, float]:
        return self.values_a[s], self.values_b[s]

    def to_dict(self) -> dict:
        rows = [
            {
                "id": s,
                "label": self.labels.get(s, f"s{s}"),
                "V_A": sv.value_a,
                "V_B": sv.value_b,
                "x_A": sv.effort_a,
                "x_B": sv.effort_b,
                "p_A": sv.win_prob_a,
            }
            for s, sv in sorted(self.states.items())
        ]
        return {
            "method": self.method,
            "residual": self.residual,
            "iterations": self.iterations,
            "prize": self.prize,
            "states": rows,
        }


# ---------------------------------------------------------------------------
# Vectorized battle layer
# ---------------------------------------------------------------------------


class _Layer:
    """Dense chance-averaged transition operators for one automaton."""

    def __init__(self, spec: ContestSpec):
        m = spec.automaton
        self.spec = spec
        self.nt = list(m.nonterminal_states)
        self.index = {s: i for i, s in enumerate(self.nt)}
        n = m.n
        self.PA = np.zeros((len(self.nt), n))
        self.PB = np.zeros((len(self.nt), n))
        for i, s in enumerate(self.nt):
            for t, p in m.successors(s, "A"):
                self.PA[i, t] += p
            for t, p in m.successors(s, "B"):
                self.PB[i, t] += p
        self.term_a = np.zeros(n)
        self.term_b = np.zeros(n)
        for t, w in m.terminal.items():
            if w == "A":
                self.term_a[t] = spec.prize
            else:
                self.term_b[t] = spec.prize

    def full_vectors(self, values_nt_a, values_nt_b):
        va = self.term_a.copy()
        vb = self.term_b.copy()
        va[self.nt] = values_nt_a
        vb[self.nt] = values_nt_b
        return va, vb

    def stakes(self, va, vb):
        ea_w = self.PA @ va
        ea_l = self.PB @ va
        eb_w = self.PB @ vb
        eb_l = self.PA @ vb
        return ea_w, ea_l, eb_w, eb_l

    def bellman_update(self, va, vb):
        """One application of the equilibrium operator to full value vectors."""
        ea_w, ea_l, eb_w, eb_l = self.stakes(va, vb)
        da = ea_w - ea_l
        db = eb_w - eb_l
        ga = _gain_vector(self.spec.sf, da, db)
        gb = _gain_vector(self.spec.sf, db, da)
        return ea_l + ga, eb_l + gb


def _gain_vector(sf: SuccessFunction, da: np.ndarray, db: np.ndarray) -> np.ndarray:
    """Elementwise battle gain over the losing continuation, with degenerate guards.

    Positive stakes on both sides give the equilibrium gain Pi*(da, db).  A
    player whose opponent has no stake takes (nearly) the whole stake; a
    state where neither player has a positive stake is a zero-effort fair
    coin battle, i.e. the gain is half the (nonpositive) stake.
    """
    out = np.zeros_like(da)
    both = (da > 0.0) & (db > 0.0)
    if sf.homogeneous:
        if np.any(both):
            out[both] = da[both] * sf.phi(da[both] / db[both])
    else:
        for i in np.nonzero(both)[0]:
            out[i] = augmented_gain(sf, float(da[i]), float(db[i]))
    solo = (da > 0.0) & (db <= 0.0)
    if np.any(solo):
        out[solo] = da[solo] * (sf.gain_limit if sf.homogeneous else 1.0)
    idle = (da <= 0.0) & (db <= 0.0)
    if np.any(idle):
        out[idle] = 0.5 * da[idle]
    return out


def _battle_quantities(sf: SuccessFunction, da: float, db: float):
    """Efforts and win probability of one battle, with degenerate limits."""
    if da > 0.0 and db > 0.0:
        eq = solve_battle(sf, da, db)
        return eq.effort_a, eq.effort_b, eq.win_prob_a
    if da > 0.0 >= db:
        return 0.0, 0.0, sf.win_limit
    if db > 0.0 >= da:
        return 0.0, 0.0, 1.0 - sf.win_limit
    return 0.0, 0.0, 0.5


def _battle_row(sf: SuccessFunction, va_pair, vb_pair, da: float, db: float) -> StateValues:
    """Detail row for one state given stakes and post-battle expectations."""
    ea_w, ea_l = va_pair
    eb_w, eb_l = vb_pair
    if da > 0.0 and db > 0.0:
        eq = solve_battle(sf, da, db)
        return StateValues(
            value_a=ea_l + eq.payoff_a,
            value_b=eb_l + eq.payoff_b,
            stake_a=da,
            stake_b=db,
            effort_a=eq.effort_a,
            effort_b=eq.effort_b,
            win_prob_a=eq.win_prob_a,
        )
    # degenerate stakes: no effort is exerted in the limit
    if da > 0.0 >= db:
        win, gain_a, gain_b = sf.win_limit, augmented_gain(sf, da, 0.0), 0.0
    elif db > 0.0 >= da:
        win, gain_a, gain_b = 1.0 - sf.win_limit, 0.0, augmented_gain(sf, db, 0.0)
    else:
        # neither player values winning: a zero-effort fair coin battle
        win, gain_a, gain_b = 0.5, 0.5 * da, 0.5 * db
    return StateValues(
        value_a=ea_l + gain_a,
        value_b=eb_l + gain_b,
        stake_a=da,
        stake_b=db,
        effort_a=0.0,
        effort_b=0.0,
        win_prob_a=win,
    )


def _assemble(spec: ContestSpec, method: str, iterations: int, va, vb) -> ValueSolution:
    """Build the solution object (detail rows + exact residual) from value vectors."""
    m = spec.automaton
    layer = _Layer(spec)
    ea_w, ea_l, eb_w, eb_l = layer.stakes(va, vb)
    rows = {}
    for i, s in enumerate(layer.nt):
        rows[s] = _battle_row(
            spec.sf,
            (ea_w[i], ea_l[i]),
            (eb_w[i], eb_l[i]),
            ea_w[i] - ea_l[i],
            eb_w[i] - eb_l[i],
        )
    ua, ub = layer.bellman_update(va, vb)
    res = 0.0
    if layer.nt:
        res = max(
            float(np.max(np.abs(ua - va[layer.nt]))),
            float(np.max(np.abs(ub - vb[layer.nt]))),
        )
    return ValueSolution(
        method=method,
        residual=res,
        iterations=iterations,
        prize=spec.prize,
        start=m.start,
        states=rows,
        values_a={s: float(va[s]) for s in range(m.n)},
        values_b={s: float(vb[s]) for s in range(m.n)},
        labels=dict(m.labels),
        extras={"sf": spec.sf},
    )


# ---------------------------------------------------------------------------
# Exact backward induction (acyclic rules)
# ---------------------------------------------------------------------------


def _topological_order(m: ContestAutomaton) -> list:
    indeg = {s: 0 for s in range(m.n)}
    for (s, _w), dist in m.transitions.items():
        for t, _p in dist:
            indeg[t] += 1
    queue = [s for s in range(m.n) if indeg[s] == 0]
    order = []
    while queue:
        s = queue.pop()
        order.append(s)
        if m.is_terminal(s):
            continue
        for w in WINNERS:
            for t, _ in m.successors(s, w):
                indeg[t] -= 1
                if indeg[t] == 0:
                    queue.append(t)
    if len(order) != m.n:
        raise CyclicAutomatonError(
            "automaton contains cycles; use the cyclic fixed-point solver"
        )
    return order


def solve_finite(spec: ContestSpec) -> ValueSolution:
    """One-pass backward induction over a topological order (acyclic rules)."""
    m = spec.automaton
    order = _topological_order(m)
    va = np.zeros(m.n)
    vb = np.zeros(m.n)
    for t, w in m.terminal.items():
        va[t] = spec.prize if w == "A" else 0.0
        vb[t] = spec.prize if w == "B" else 0.0
    sf = spec.sf
    for s in reversed(order):
        if m.is_terminal(s):
            continue
        ea_w = sum(p * va[t] for t, p in m.successors(s, "A"))
        ea_l = sum(p * va[t] for t, p in m.successors(s, "B"))
        eb_w = sum(p * vb[t] for t, p in m.successors(s, "B"))
        eb_l = sum(p * vb[t] for t, p in m.successors(s, "A"))
        row = _battle_row(sf, (ea_w, ea_l), (eb_w, eb_l), ea_w - ea_l, eb_w - eb_l)
        va[s] = row.value_a
        vb[s] = row.value_b
    return _assemble(spec, "backward", 0, va, vb)


# ---------------------------------------------------------------------------
# Closed-form tug-of-war (with reset lottery)
# ---------------------------------------------------------------------------


def solve_tow_closed(
    n: int,
    reset_p: float = 0.0,
    head_start: int = 0,
    sf: SuccessFunction | None = None,
    prize: float = 1.0,
) -> ValueSolution:
    """Constructive recursion for the tug-of-war value function.

    Builds the normalized post-battle value gaps outward from the center:
    the gap ratio at each ring is pinned down by inverting the streak map,
    after which the boundary conditions fix a unique affine scaling.
    Post-lottery (decision-node) values follow from the reset mixture.
    """
    sf = sf if sf is not None else _default_sf()
    if not sf.homogeneous:
        raise UnsupportedKindError(
            "closed-form tug-of-war requires a homogeneous success function"
        )
    if prize <= 0.0:
        raise DomainError("prize must be positive")
    m = build_tug_of_war(n, reset_p, head_start)
    p = float(reset_p)
    n = int(n)

    # Normalized post-battle value gaps relative to the center, tracked as
    # strictly positive increments: gap[k] = sum d_plus[1..k] above the center
    # and h[k] = sum d_minus[1..k] below it.  The increment form avoids the
    # catastrophic cancellation of differencing near-equal absolute gaps; the
    # increments themselves shrink double-exponentially and may saturate to
    # zero, which matches the true values to float resolution.
    phi1 = sf.phi(1.0)
    d_plus = [math.nan, 1.0 - phi1]  # 1-indexed
    d_minus = [math.nan, phi1]
    gap = [0.0, 1.0 - phi1]
    h = [0.0, phi1]
    thetas = [math.nan]  # thetas[k] = win/loss gap ratio at ring k
    # Without the reset term the increment ratio is a pure product, so a
    # log-space twin keeps it exact long after the increments underflow.
    use_logs = p == 0.0
    log_ratio = math.log1p(-phi1) - math.log(phi1)
    ring_log_ratio = [log_ratio] if use_logs else None
    for k in range(1, n):
        if use_logs:
            ratio = math.exp(log_ratio) if log_ratio < 700.0 else math.inf
        else:
            num = d_plus[k] + p * gap[k - 1]
            den = d_minus[k] + p * h[k - 1]
            ratio = num / den if den > 0.0 else math.inf
        if ratio > 1e290 or not math.isfinite(ratio):
            theta_k = math.inf
            fl, comp = 1.0, 0.0  # phi and its complement at +inf
            flbar, compbar = 0.0, 1.0  # phi and complement at 0
            if use_logs and math.isfinite(log_ratio):
                # beyond float range the streak map is identity to first
                # order, so the ring ratio itself stands in for theta
                try:
                    log_ratio += (
                        sf.log_phi_complement_at_log(log_ratio)
                        - sf.log_phi_at_log(log_ratio)
                        + sf.log_phi_complement_at_log(-log_ratio)
                        - sf.log_phi_at_log(-log_ratio)
                    )
                except UnsupportedKindError:
                    log_ratio = math.inf
            else:
                log_ratio = math.inf
        else:
            theta_k = psi_inverse(sf, ratio)
            fl = float(sf.phi(theta_k))
            comp = float(sf.phi_complement(theta_k))
            flbar = float(sf.phi(1.0 / theta_k))
            compbar = float(sf.phi_complement(1.0 / theta_k))
            if use_logs:
                log_ratio += (
                    sf.log_phi_complement(theta_k)
                    - sf.log_phi(theta_k)
                    + sf.log_phi_complement(1.0 / theta_k)
                    - sf.log_phi(1.0 / theta_k)
                )
        thetas.append(theta_k)
        if use_logs:
            ring_log_ratio.append(log_ratio)
        d_plus.append((d_plus[k] * (comp + p * fl) + p * gap[k - 1]) / ((1.0 - p) * fl))
        d_minus.append(
            (flbar * (d_minus[k] + p * h[k - 1]) + p * compbar * h[k]) / ((1.0 - p) * compbar)
        )
        gap.append(gap[k] + d_plus[k + 1])
        h.append(h[k] + d_minus[k + 1])
    span = gap[n] + h[n]
    tilde = {i: (gap[i] + h[n]) / span for i in range(0, n + 1)}  # post-battle values
    if p == 0.0:
        # deep-laggard values decay double-exponentially; suffix sums of the
        # increments keep them positive where prefix differences cancel
        tail = 0.0
        tilde[-n] = 0.0
        for i in range(n - 1, 0, -1):
            tail += d_minus[i + 1]
            tilde[-i] = tail / span
    else:
        tilde.update({-i: (h[n] - h[i]) / span for i in range(1, n + 1)})
    center = tilde[0]
    decision = {}
    for i in range(-n, n + 1):
        if abs(i) == n:
            decision[i] = tilde[i]
        else:
            decision[i] = (tilde[i] - p * center) / (1.0 - p)

    va = np.zeros(m.n)
    vb = np.zeros(m.n)
    for i in range(-n, n + 1):
        s = i + n
        va[s] = prize * decision[i]
        vb[s] = prize * decision[-i]
    out = _assemble(ContestSpec(m, sf, prize), "closed_tow", 0, va, vb)
    # rebuild the battle rows from the ring increments: differencing the
    # stored values cannot resolve stakes at saturated leads, and a mixed
    # zero/tiny classification there would even break absorption
    scale = prize / span
    for i in range(-(n - 1), n):
        k = abs(i)
        if k == 0:
            sa = sb = (d_plus[1] + d_minus[1]) * scale
        else:
            lead = (d_plus[k + 1] + d_plus[k]) * scale
            lag = (d_minus[k + 1] + d_minus[k]) * scale
            sa, sb = (lead, lag) if i > 0 else (lag, lead)
        effort_a, effort_b, win = _battle_quantities(sf, sa, sb)
        s = i + n
        out.states[s] = StateValues(
            value_a=out.values_a[s],
            value_b=out.values_b[s],
            stake_a=sa,
            stake_b=sb,
            effort_a=effort_a,
            effort_b=effort_b,
            win_prob_a=win,
        )
    out.extras.update(
        delta_plus=d_plus[1:],
        delta_minus=d_minus[1:],
        ring_theta=thetas[1:],
        ring_log_ratio=ring_log_ratio,
        gap_scale=span,
    )
    return out


# ---------------------------------------------------------------------------
# Closed-form consecutive-win contest
# ---------------------------------------------------------------------------


def _iterated_psi(sf: SuccessFunction, r: float, times: int) -> float:
    x = r
    for _ in range(times):
        if x < 1e-300:
            # the iterates contract toward zero; further steps stay there
            return 0.0
        x = psi(sf, x)
    return x


def streak_root(sf: SuccessFunction, k: int) -> float:
    """The unique r >= 1 with the (k-1)-fold streak map sending r to 1."""
    if k == 1:
        return 1.0
    lo, hi = 1.0, 2.0
    while _iterated_psi(sf, hi, k - 1) < 1.0:
        hi *= 2.0
        if hi > 1e300:
            raise ConvergenceError("streak-root bracket expansion overflowed")
    return float(
        brentq(
            lambda r: _iterated_psi(sf, r, k - 1) - 1.0,
            lo,
            hi,
            rtol=_BRENTQ_RTOL,
            xtol=1e-300,
        )
    )


def solve_consecutive_closed(
    k: int, sf: SuccessFunction | None = None, prize: float = 1.0
) -> ValueSolution:
    """Closed-form consecutive-win values via the streak-root reduction.

    The two pivotal values (after one loss, after one win) solve a scalar
    fixed point: the win/loss gap ratio must return to 1 after k-1
    applications of the streak map.  All remaining values follow from the
    two-sided iterates toward the boundary.
    """
    sf = sf if sf is not None else _default_sf()
    if not sf.homogeneous:
        raise UnsupportedKindError(
            "closed-form consecutive-win requires a homogeneous success function"
        )
    if k < 1 or int(k) != k:
        raise DomainError("k must be a positive integer")
    if prize <= 0.0:
        raise DomainError("prize must be positive")
    k = int(k)
    m = build_consecutive_win(k)

    rho = streak_root(sf, k)
    prod = 1.0
    x = rho
    for _ in range(k - 1):
        prod *= sf.phi_complement(1.0 / x)
        x = psi(sf, x)
    w = prize / (1.0 + rho - prod)
    u = prize - rho * w

    values = {k: prize, -k: 0.0}
    a, b = 0.0, prize
    for j in range(1, k):
        a, b = (
            a + (w - a) * sf.phi((w - a) / (b - u)),
            u + (b - u) * sf.phi((b - u) / (w - a)),
        )
        values[-k + j] = a
        values[k - j] = b
    values[0] = u + (w - u) * sf.phi(1.0) if k > 1 else sf.phi(1.0) * prize
    if k > 1:
        # the iterates terminate exactly at the pivotal pair
        values[-1] = u
        values[1] = w

    va = np.zeros(m.n)
    vb = np.zeros(m.n)
    for i in range(-k, k + 1):
        s = i + k
        va[s] = values[i]
        vb[s] = values[-i]
    out = _assemble(ContestSpec(m, sf, prize), "closed_cw", 0, va, vb)
    out.extras.update(streak_root=rho, survival_product=prod)
    return out


# ---------------------------------------------------------------------------
# Damped fixed-point engine (general cyclic rules)
# ---------------------------------------------------------------------------


def solve_cyclic(
    spec: ContestSpec,
    damping: float = 0.5,
    tol: float | None = None,
    max_iter: int = 10**6,
) -> ValueSolution:
    """Damped sweep iteration of the equilibrium operator.

    Each iteration updates every nonterminal state's battle against the
    freshest continuation values (chance-averaged over lotteries), sweeping
    from the states nearest a terminal inward so that boundary information
    crosses the whole graph every pass.  Values move a fraction ``damping``
    toward each update; checkpoints refine the iterate with exact-Jacobian
    least squares and a quasi-Newton candidate search.  The operator also
    admits mutual-discouragement fixed points (idle interior battles, flat
    values); their basins are escaped by restarting the sweeps from flat
    low-value profiles, and among verified fixed points the competitive
    (active-interior) one is preferred, breaking ties toward the smallest
    total start value.  Stops once the supremum Bellman residual reaches
    ``tol`` (default 1e-12 times the prize).
    """
    if not 0.0 < damping <= 1.0:
        raise DomainError("damping must lie in (0, 1]")
    if tol is None:
        tol = 1e-12 * spec.prize
    m = spec.automaton
    layer = _Layer(spec)
    nt = layer.nt
    if not nt:
        va, vb = layer.full_vectors(np.zeros(0), np.zeros(0))
        return _assemble(spec, "fixed_point", 0, va, vb)
    # With a player-swap involution the symmetric equilibrium satisfies
    # V_B = V_A o sigma; enforcing it keeps the iteration away from the
    # asymmetric discouragement profiles the operator also admits.
    sigma = swap_involution(m)
    perm = np.array([sigma[s] for s in range(m.n)]) if sigma is not None else None
    order = _sweep_order(m)
    sf = spec.sf
    prize = spec.prize

    def finish(fa, fb, iterations):
        return _assemble(spec, "fixed_point", iterations, fa, fb)

    phase_inits = [None, 0.05, 0.25, 0.45]  # None = position-interpolated
    phase_budget = 800
    iterations = 0
    res = math.inf
    fallback = None  # best verified idle-interior fixed point
    for init_level in phase_inits:
        if init_level is None:
            va, vb = layer.full_vectors(*_initial_values(m, prize))
        else:
            flat = np.full(len(nt), init_level * prize)
            va, vb = layer.full_vectors(flat, flat.copy())
        if sigma is not None:
            vb = va[perm].copy()
        phase_sweeps = 0
        next_polish = 50
        ran_multistart = False
        while phase_sweeps < phase_budget and iterations < max_iter:
            lam = 1.0 if phase_sweeps == 0 else damping  # pure first sweep seeds the basin
            sweep_delta = 0.0
            for s in order:
                i = layer.index[s]
                ea_w = float(layer.PA[i] @ va)
                ea_l = float(layer.PB[i] @ va)
                eb_w = float(layer.PB[i] @ vb)
                eb_l = float(layer.PA[i] @ vb)
                ua = ea_l + _gain_scalar(sf, ea_w - ea_l, eb_w - eb_l)
                new_a = (1.0 - lam) * va[s] + lam * ua
                sweep_delta = max(sweep_delta, abs(new_a - va[s]))
                va[s] = new_a
                if sigma is not None:
                    vb[sigma[s]] = new_a
                else:
                    ub = eb_l + _gain_scalar(sf, eb_w - eb_l, ea_w - ea_l)
                    new_b = (1.0 - lam) * vb[s] + lam * ub
                    sweep_delta = max(sweep_delta, abs(new_b - vb[s]))
                    vb[s] = new_b
            phase_sweeps += 1
            iterations += 1
            checkpoint = sweep_delta <= tol or phase_sweeps >= next_polish
            if not checkpoint:
                continue
            if phase_sweeps >= next_polish:
                next_polish *= 2
            here = _bellman_residual(layer, va, vb)
            res = min(res, here)
            if here <= tol:
                if not _has_idle_interior(layer, va, vb):
                    return finish(va, vb, iterations)
                if fallback is None:
                    fallback = (va.copy(), vb.copy(), here)
                break  # idle basin: restart from the next flat level
            # exact-Jacobian refinement from the sweep iterate
            polished = _analytic_polish(layer, va, vb, tol, sigma, thorough=False)
            if polished is not None and not _has_idle_interior(layer, polished[0], polished[1]):
                return finish(polished[0], polished[1], iterations)
            # quasi-Newton candidate search across dissipation scales; the
            # flat starts are iterate independent, so one pass per phase
            candidates, near = _newton_candidates(
                layer, va, vb, tol, sigma, current_only=ran_multistart
            )
            ran_multistart = True
            active = [c for c in candidates if not _has_idle_interior(layer, c[0], c[1])]
            if active:
                start = m.start
                best = min(active, key=lambda c: c[0][start] + c[1][start])
                return finish(best[0], best[1], iterations)
            for idle in candidates:
                if fallback is None or idle[2] < fallback[2]:
                    fallback = idle
            if near is not None:
                polished = _analytic_polish(layer, near[0], near[1], tol, sigma, thorough=False)
                if polished is not None and not _has_idle_interior(layer, polished[0], polished[1]):
                    return finish(polished[0], polished[1], iterations)
                if near[2] < 0.01 * here:
                    va, vb = near[0].copy(), near[1].copy()
        if iterations >= max_iter:
            break
        # phase budget exhausted: one thorough trust-region refinement
        polished = _analytic_polish(layer, va, vb, tol, sigma, thorough=True)
        if polished is not None:
            if not _has_idle_interior(layer, polished[0], polished[1]):
                return finish(polished[0], polished[1], iterations)
            if fallback is None or polished[2] < fallback[2]:
                fallback = polished
    if fallback is not None:
        # only mutual-discouragement equilibria were found; report the best
        return finish(fallback[0], fallback[1], iterations)
    raise ConvergenceError(
        f"fixed-point iteration stalled at residual {res:.3e} "
        f"after {iterations} iterations (tol {tol:.3e})",
        residual=res,
    )


def _gain_partials(sf: SuccessFunction, da: np.ndarray, db: np.ndarray):
    """Partial derivatives of the battle gain Pi*(da, db) in each stake.

    On the competitive branch the envelope gives d/d(da) = phi + theta phi'
    and d/d(db) = -theta^2 phi'; the degenerate branches are piecewise
    linear in da alone.
    """
    gda = np.zeros_like(da)
    gdb = np.zeros_like(da)
    both = (da > 0.0) & (db > 0.0)
    if np.any(both):
        theta = da[both] / db[both]
        slope = sf.phi_prime(theta)
        gda[both] = sf.phi(theta) + theta * slope
        gdb[both] = -(theta**2) * slope
    solo = (da > 0.0) & (db <= 0.0)
    gda[solo] = sf.gain_limit
    idle = (da <= 0.0) & (db <= 0.0)
    gda[idle] = 0.5
    return gda, gdb


def _analytic_polish(layer: _Layer, va, vb, tol: float, sigma: dict | None, thorough: bool):
    """Least-squares refinement of V - T(V) with the exact battle-gain Jacobian.

    Homogeneous technologies only.  The quick variant runs the fast
    Levenberg-Marquardt path; the thorough variant switches to the
    trust-region solver with Jacobian column scaling, which also resolves
    instances whose interior couples to the boundary only weakly (nearly
    singular Jacobians).  Returns verified full value vectors and residual,
    or None.
    """
    from scipy.optimize import least_squares

    sf = layer.spec.sf
    if not sf.homogeneous:
        return None
    nt_idx = np.array(layer.nt)
    size = len(nt_idx)
    prize = layer.spec.prize
    PA, PB = layer.PA, layer.PB
    DA = PA - PB  # row i dotted with values gives player A's stake
    n_states = PA.shape[1]
    if sigma is not None:
        perm = np.array([sigma[s] for s in range(n_states)])
        mirror_cols = perm[nt_idx]

    def expand(x):
        fa = layer.term_a.copy()
        fb = layer.term_b.copy()
        if sigma is not None:
            fa[nt_idx] = x
            fb = fa[perm].copy()
        else:
            fa[nt_idx] = x[:size]
            fb[nt_idx] = x[size:]
        return fa, fb

    def fun(x):
        fa, fb = expand(x)
        ea_w, ea_l, eb_w, eb_l = layer.stakes(fa, fb)
        da = ea_w - ea_l
        db = eb_w - eb_l
        res_a = (x if sigma is not None else x[:size]) - (ea_l + _gain_vector(sf, da, db))
        if sigma is not None:
            return res_a
        res_b = x[size:] - (eb_l + _gain_vector(sf, db, da))
        return np.concatenate([res_a, res_b])

    def jac(x):
        fa, fb = expand(x)
        ea_w, ea_l, eb_w, eb_l = layer.stakes(fa, fb)
        da = ea_w - ea_l
        db = eb_w - eb_l
        gda, gdb = _gain_partials(sf, da, db)
        d_fa = PB[:, nt_idx] + gda[:, None] * DA[:, nt_idx]
        if sigma is not None:
            d_fb = -gdb[:, None] * DA[:, mirror_cols]
            return np.eye(size) - (d_fa + d_fb)
        d_fb = -gdb[:, None] * DA[:, nt_idx]
        own_b, cross_b = _gain_partials(sf, db, da)
        d_fb_own = PA[:, nt_idx] - own_b[:, None] * DA[:, nt_idx]
        d_fa_cross = cross_b[:, None] * DA[:, nt_idx]
        top = np.hstack([np.eye(size) - d_fa, -d_fb])
        bottom = np.hstack([-d_fa_cross, np.eye(size) - d_fb_own])
        return np.vstack([top, bottom])

    x0 = va[nt_idx].copy() if sigma is not None else np.concatenate([va[nt_idx], vb[nt_idx]])
    try:
        if thorough:
            sol = least_squares(
                fun, x0, jac=jac, method="trf", x_scale="jac",
                ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=6000,
            )
        else:
            sol = least_squares(
                fun, x0, jac=jac, method="lm",
                ftol=3e-16, xtol=3e-16, gtol=3e-16, max_nfev=150 * (len(x0) + 1),
            )
    except Exception:  # noqa: BLE001 - refinement is best-effort
        return None
    fa, fb = expand(np.clip(sol.x, 0.0, prize))
    if not np.all(fa + fb <= prize * (1.0 + 1e-9)):
        return None
    res = _bellman_residual(layer, fa, fb)
    if res > tol:
        return None
    return fa, fb, res


def _has_idle_interior(layer: _Layer, va, vb) -> bool:
    """Detect mutual-discouragement profiles: an interior state where both
    stakes vanish while neither player's value is near the prize (genuine
    one-sided saturation keeps the leader's value at the prize)."""
    prize = layer.spec.prize
    ea_w, ea_l, eb_w, eb_l = layer.stakes(va, vb)
    da = ea_w - ea_l
    db = eb_w - eb_l
    idle = (da <= 1e-6 * prize) & (db <= 1e-6 * prize)
    if not np.any(idle):
        return False
    values = np.maximum(va[layer.nt], vb[layer.nt])
    return bool(np.any(idle & (values < 0.9 * prize)))


def _bellman_residual(layer: _Layer, va, vb) -> float:
    nt = layer.nt
    ua, ub = layer.bellman_update(va, vb)
    return max(
        float(np.max(np.abs(ua - va[nt]))),
        float(np.max(np.abs(ub - vb[nt]))),
    )


def _newton_candidates(
    layer: _Layer, va, vb, tol: float, sigma: dict | None, current_only: bool = False
):
    """Fixed-point candidates found by quasi-Newton from a handful of starts.

    The starts span several dissipation scales: the sweep iterate itself,
    then flat profiles.  Returns the verified candidates (Bellman residual
    within tolerance; the search stops early at the first one whose interior
    battles are active) together with the best active-interior near miss,
    which the caller may adopt as a warm iterate.  With a swap involution
    the root system is reduced to player A's values, which keeps the search
    on symmetric profiles.  Deterministic by construction.
    """
    from scipy.optimize import root

    nt = layer.nt
    size = len(nt)
    prize = layer.spec.prize
    perm = np.array([sigma[s] for s in range(layer.PA.shape[1])]) if sigma else None

    def expand(x):
        fa = layer.term_a.copy()
        fb = layer.term_b.copy()
        if sigma is not None:
            fa[nt] = x
            # the involution swaps winners, so it also maps terminal values
            fb = fa[perm].copy()
        else:
            fa[nt] = x[:size]
            fb[nt] = x[size:]
        return fa, fb

    def residual_map(x):
        fa, fb = expand(x)
        ua, ub = layer.bellman_update(fa, fb)
        if sigma is not None:
            return x - ua
        return np.concatenate([x[:size] - ua, x[size:] - ub])

    if sigma is not None:
        current = va[nt].copy()
    else:
        current = np.concatenate([va[nt], vb[nt]])
    starts = [current]
    if not current_only:
        starts.extend(
            np.full(len(current), level * prize) for level in (0.2, 0.05, 0.35, 0.02, 0.5)
        )
    budget = 40 * (len(current) + 1)
    found = []
    near = None
    for x0 in starts:
        try:
            sol = root(residual_map, x0, method="hybr", tol=1e-14, options={"maxfev": budget})
        except Exception:  # noqa: BLE001 - the search is best-effort
            continue
        x = np.clip(sol.x, 0.0, prize)
        fa, fb = expand(x)
        if not (
            np.all(np.isfinite(fa))
            and np.all(np.isfinite(fb))
            and np.all(fa + fb <= prize * (1.0 + 1e-9))
        ):
            continue
        res = _bellman_residual(layer, fa, fb)
        if res <= tol:
            found.append((fa, fb, res))
            if not _has_idle_interior(layer, fa, fb):
                break
        elif (near is None or res < near[2]) and not _has_idle_interior(layer, fa, fb):
            near = (fa, fb, res)
    return found, near


def _gain_scalar(sf: SuccessFunction, da: float, db: float) -> float:
    if da > 0.0 and db > 0.0:
        if sf.homogeneous:
            return da * float(sf.phi(da / db))
        return augmented_gain(sf, da, db)
    if da > 0.0:
        return da * (sf.gain_limit if sf.homogeneous else 1.0)
    if db > 0.0:
        return 0.0
    return 0.5 * da  # zero-effort fair coin battle


def _sweep_order(m: ContestAutomaton) -> list:
    """Nonterminal states ordered by battle distance to a terminal, nearest first."""
    from collections import deque

    rev: dict[int, list[int]] = {s: [] for s in range(m.n)}
    for (s, _w), dist in m.transitions.items():
        for t, _p in dist:
            rev[t].append(s)
    depth = {t: 0 for t in m.terminal}
    queue = deque(m.terminal)
    while queue:
        t = queue.popleft()
        for s in rev[t]:
            if s not in depth:
                depth[s] = depth[t] + 1
                queue.append(s)
    nonterm = [s for s in range(m.n) if not m.is_terminal(s)]
    return sorted(nonterm, key=lambda s: (depth.get(s, m.n + 1), s))


def _initial_values(m: ContestAutomaton, prize: float):
    """Feasible starting values: position-interpolated when coordinates exist."""
    nt = m.nonterminal_states
    if m.coords and all(s in m.coords for s in range(m.n)):
        cs = [m.coords[s] for s in range(m.n)]
        lo, hi = min(cs), max(cs)
        span = hi - lo
        if span > 0:
            va = np.array([prize * (m.coords[s] - lo) / span for s in nt])
            vb = np.array([prize * (hi - m.coords[s]) / span for s in nt])
            return va, vb
    half = np.full(len(nt), 0.5 * prize)
    return half, half.copy()


# ---------------------------------------------------------------------------
# Residual and dispatch
# ---------------------------------------------------------------------------


def residual(spec: ContestSpec, values) -> float:
    """Supremum Bellman violation of a candidate value profile.

    ``values`` may be a ValueSolution or a mapping from nonterminal state to
    a (value_a, value_b) pair.  Zero exactly when the profile is a symmetric
    MPE value function.
    """
    m = spec.automaton
    layer = _Layer(spec)
    if isinstance(values, ValueSolution):
        pairs = {s: (values.values_a[s], values.values_b[s]) for s in layer.nt}
    else:
        pairs = dict(values)
    missing = [s for s in layer.nt if s not in pairs]
    if missing:
        raise DomainError(f"values missing for nonterminal states {missing}")
    va, vb = layer.full_vectors(
        np.array([pairs[s][0] for s in layer.nt], dtype=float),
        np.array([pairs[s][1] for s in layer.nt], dtype=float),
    )
    ua, ub = layer.bellman_update(va, vb)
    if not layer.nt:
        return 0.0
    return max(
        float(np.max(np.abs(ua - va[layer.nt]))),
        float(np.max(np.abs(ub - vb[layer.nt]))),
    )


def solve(spec: ContestSpec, **cyclic_options) -> ValueSolution:
    """Route a spec to the best available solver.

    Closed forms cover the tug-of-war and consecutive-win families under
    homogeneous technologies; acyclic rules use backward induction; anything
    else goes to the fixed-point engine.
    """
    m = spec.automaton
    if m.family == "tug_of_war" and spec.sf.homogeneous:
        return solve_tow_closed(
            m.params["n"],
            m.params.get("reset_p", 0.0),
            m.params.get("head_start", 0),
            spec.sf,
            spec.prize,
        )
    if m.family == "consecutive_win" and spec.sf.homogeneous and m.params["k"] > 1:
        return solve_consecutive_closed(m.params["k"], spec.sf, spec.prize)
    try:
        return solve_finite(spec)
    except CyclicAutomatonError:
        return solve_cyclic(spec, **cyclic_options)


def _default_sf() -> SuccessFunction:
    from .success import Tullock

    return Tullock(1.0)

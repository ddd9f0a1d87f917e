"""Sampling labs: classical cut-and-choose error, the EPR sampling experiment
with min-entropy certification, and the basis-disagreement tail."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

from .errors import CapExceeded
from .qsim import MAX_QUBITS

# --------------------------------------------------------------------------
# classical sampling


def classical_bound(n: int, delta: float) -> float:
    return 6 * math.exp(-n * delta**2 / 50)


class FixedString:
    """Strategy emitting one fixed 2n-bit string, given by its set positions."""

    def __init__(self, name: str, make):
        self.name = name
        self._make = make

    def string(self, n: int, delta: float) -> np.ndarray:
        x = np.zeros(2 * n, dtype=np.uint8)
        x[self._make(n, delta)] = 1
        return x


def scripted_family() -> list:
    """All-zeros, weights just above the delta*n threshold packed in either half, spread, dense."""
    def ones(k_of):
        return lambda n, d: np.arange(min(2 * n, k_of(n, d)))

    def spread(k_of):
        return lambda n, d: np.linspace(0, 2 * n - 1, min(2 * n, k_of(n, d))).astype(int)

    def tail_half(k_of):
        return lambda n, d: n + np.arange(min(n, k_of(n, d)))

    thr = lambda n, d: math.ceil(d * n)  # noqa: E731
    return [
        FixedString("all-zeros", lambda n, d: np.arange(0)),
        FixedString("pack-first-half", ones(thr)),
        FixedString("pack-second-half", tail_half(thr)),
        FixedString("threshold-plus-8", ones(lambda n, d: thr(n, d) + 8)),
        FixedString("spread-threshold", spread(thr)),
        FixedString("spread-double", spread(lambda n, d: 2 * thr(n, d))),
        FixedString("all-ones", lambda n, d: np.arange(2 * n)),
    ]


def classical_trial_direct(x: np.ndarray, delta: float, rng: np.random.Generator) -> bool:
    """One run of the experiment on the 2n-bit string x: True when it passes
    and the untested half has relative weight >= delta."""
    n = x.size // 2
    T = rng.choice(2 * n, n, replace=False)
    theta = rng.integers(0, 2, 2 * n)
    if np.any((x[T] == 1) & (theta[T] == 1)):
        return False
    rest = np.ones(2 * n, dtype=bool)
    rest[T] = False
    return x[rest].sum() >= delta * n


def classical_error_exact(w: int, n: int, delta: float) -> float:
    """Exact error probability for any string of weight w (the test set is uniform,
    so only the weight matters)."""
    k = np.arange(0, min(w, n) + 1)
    pk = stats.hypergeom(2 * n, w, n).pmf(k)
    ok = (w - k) >= delta * n
    return float(np.sum(pk[ok] * np.exp2(-k[ok].astype(float))))


def classical_sampling_error(n: int, delta: float, strategy, trials: int, rng=None,
                             method: str = "fast") -> float:
    """Empirical error frequency.

    ``fast`` draws the number k of ones landing in T (hypergeometric) and the
    number of those checked (binomial); the experiment passes iff none is
    checked.  This has the same law as ``direct``, which samples T and theta.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    x = strategy.string(n, delta)
    if method == "direct":
        return float(np.mean([classical_trial_direct(x, delta, rng) for _ in range(trials)]))
    w = int(x.sum())
    k = rng.hypergeometric(w, 2 * n - w, n, size=trials) if w else np.zeros(trials, np.int64)
    checked = rng.binomial(k, 0.5)
    err = (checked == 0) & ((w - k) >= delta * n)
    return float(err.mean())


@dataclass
class BoundCheck:
    name: str
    measured: float
    bound: float
    sigma: float
    trials: int
    formula: str
    exact: float | None = None

    @property
    def passed(self) -> bool:
        return self.measured <= min(1.0, self.bound) + 4 * self.sigma

    @property
    def status(self) -> str:
        if not self.passed:
            return "fail"
        return "vacuous-pass" if self.bound >= 1 else "pass"

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(passed=self.passed, status=self.status)
        return d


def classical_lab(n: int, deltas, trials: int, seed: int = 0, family=None) -> list:
    family = family or scripted_family()
    out = []
    for delta in deltas:
        bound = classical_bound(n, delta)
        for j, strat in enumerate(family):
            rng = np.random.default_rng([seed, j, int(delta * 1e6)])
            m = classical_sampling_error(n, delta, strat, trials, rng)
            # sigma from the clipped bound: the largest variance consistent with it
            pb = min(1.0, bound)
            sigma = math.sqrt(pb * (1 - pb) / trials)
            w = int(strat.string(n, delta).sum())
            out.append(BoundCheck(f"{strat.name}@delta={delta}", m, bound, sigma, trials,
                                  "Pr[pass and wt(x_rest)/n >= delta] <= 6*exp(-n*delta^2/50)",
                                  classical_error_exact(w, n, delta)))
    return out


# --------------------------------------------------------------------------
# basis-disagreement tail


def disagreement_tail(lam: int) -> float:
    """Exact Pr[Bin(8 lam, 1/2) <= 3 lam]."""
    if lam == 0:
        return 1.0
    n = 8 * lam
    return math.fsum(math.comb(n, k) for k in range(3 * lam + 1)) / 2**n


def hoeffding_check(lam: int, trials: int, rng=None) -> float:
    """Frequency that uniform theta, theta_hat of length 8 lam differ in <= 3 lam places."""
    rng = rng if rng is not None else np.random.default_rng(0)
    if lam == 0:
        return 1.0
    diff = rng.binomial(8 * lam, 0.5, size=trials) if trials > 0 else np.zeros(0)
    return float(np.mean(diff <= 3 * lam))


def hoeffding_check_direct(lam: int, trials: int, rng=None) -> float:
    rng = rng if rng is not None else np.random.default_rng(0)
    a = rng.integers(0, 2, (trials, 8 * lam))
    b = rng.integers(0, 2, (trials, 8 * lam))
    return float(np.mean((a != b).sum(axis=1) <= 3 * lam))


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def inverse_binary_entropy(h: float) -> float:
    """The p in [0, 1/2] with binary_entropy(p) = h."""
    if h <= 0:
        return 0.0
    if h >= 1:
        return 0.5
    return float(optimize.brentq(lambda p: binary_entropy(p) - h, 1e-300, 0.5))


# --------------------------------------------------------------------------
# the EPR sampling experiment


@dataclass(frozen=True)
class SamplingParams:
    n: int        # positions in total (the challenger's EPR halves)
    t: int        # test set size
    eps: float = 0.1

    def __post_init__(self):
        if not 0 <= self.t <= self.n:
            raise ValueError("test size must lie in 0..n")


@dataclass
class SamplingOutcome:
    aborted: bool
    s: int
    size: int
    certified_min_entropy: float
    eps: float

    @property
    def bound_ok(self) -> bool:
        return self.aborted or self.certified_min_entropy >= self.s - self.eps * self.size - 1e-9


@dataclass
class SamplingStats:
    trials: int
    abort_rate: float
    shortfall_rate: float  # not aborted and min-entropy below s - eps |S|
    mean_s: float
    outcomes: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("outcomes")
        return d


class ProductStrategy:
    """Per position: measure the received half honestly in theta_hat, or keep it and guess.

    ``measure`` is a boolean mask over positions (all True = honest).
    """

    def __init__(self, measure=None, name: str = "product"):
        self.measure = measure
        self.name = name

    def mask(self, n: int) -> np.ndarray:
        return np.ones(n, bool) if self.measure is None else np.broadcast_to(
            np.asarray(self.measure, bool), (n,))

    def min_entropy(self, S, theta, theta_hat, n) -> float:
        """Exact H_min(X_S | view): a measured position with theta != theta_hat
        contributes one bit; every other position is known (or obtainable) by the adversary."""
        m = self.mask(n)
        S = np.asarray(S, dtype=int)
        return float(np.sum(m[S] & (theta[S] != theta_hat[S])))


def honest_measuring() -> ProductStrategy:
    return ProductStrategy(None, "honest-measuring")


def guess_everything() -> ProductStrategy:
    return ProductStrategy(False, "guess-everything")


def quantum_sampling_experiment(params: SamplingParams, adversary, trials: int, rng=None,
                                subset=None) -> SamplingStats:
    """Symbolic product strategies only; see ``explicit_sampling_exact`` for explicit states.

    Each trial: adversary announces (theta_hat, x_hat); random T of size t;
    challenger measures T in theta_hat and aborts on a mismatch where its own
    basis theta agrees; S defaults to the complement of T.
    """
    if not isinstance(adversary, ProductStrategy):
        raise TypeError("use explicit_sampling_exact for explicit-state adversaries")
    rng = rng if rng is not None else np.random.default_rng(0)
    n, t = params.n, params.t
    m = adversary.mask(n)
    outs = []
    for _ in range(trials):
        theta = rng.integers(0, 2, n)
        theta_hat = rng.integers(0, 2, n)
        # honest measurement: outcome equals the challenger's outcome when bases agree;
        # a guess is wrong with probability 1/2 per position
        wrong = np.where(m, False, rng.integers(0, 2, n).astype(bool))
        T = rng.choice(n, t, replace=False)
        aborted = bool(np.any((theta[T] == theta_hat[T]) & wrong[T]))
        rest = np.setdiff1d(np.arange(n), T)
        S = rest if subset is None else np.asarray(subset(rest, rng), dtype=int)
        s = int(np.sum(theta[S] != theta_hat[S]))
        h = adversary.min_entropy(S, theta, theta_hat, n)
        outs.append(SamplingOutcome(aborted, s, len(S), h, params.eps))
    ab = np.array([o.aborted for o in outs])
    short = np.array([not o.bound_ok for o in outs])
    return SamplingStats(trials, float(ab.mean()), float(short.mean()),
                         float(np.mean([o.s for o in outs])), outs)


def guess_abort_probability(t: int) -> float:
    """Abort probability of the guess-everything strategy: each tested position
    is caught with probability 1/4."""
    return 1 - 0.75**t


# --------------------------------------------------------------------------
# explicit states: guessing probability


def helstrom(rho0: np.ndarray, rho1: np.ndarray) -> float:
    """Optimal probability of guessing between two subnormalised states."""
    ev = np.linalg.eigvalsh(rho0 - rho1)
    return float(0.5 * (np.trace(rho0).real + np.trace(rho1).real + np.abs(ev).sum()))


def guessing_probability(rhos, tol: float = 1e-10, max_iter: int = 20000) -> tuple[float, float]:
    """(lower, upper) bounds on max_POVM sum_x tr(rho_x E_x) for subnormalised rho_x.

    Two states use the closed form.  Otherwise a monotone fixed-point
    iteration gives the lower value and a dual-feasible operator the upper one.
    """
    rhos = [np.asarray(r, dtype=complex) for r in rhos]
    if len(rhos) == 1:
        v = float(np.trace(rhos[0]).real)
        return v, v
    if len(rhos) == 2:
        v = helstrom(*rhos)
        return v, v
    d = rhos[0].shape[0]
    E = [np.eye(d, dtype=complex) / len(rhos) for _ in rhos]
    lo, hi = 0.0, float("inf")
    for _ in range(max_iter):
        G = sum(r @ e @ r for r, e in zip(rhos, E))
        w, V = np.linalg.eigh(0.5 * (G + G.conj().T))
        keep = w > 1e-14
        inv_sqrt = (V[:, keep] / np.sqrt(w[keep])) @ V[:, keep].conj().T
        null = np.eye(d) - V[:, keep] @ V[:, keep].conj().T
        E = [inv_sqrt @ r @ e @ r @ inv_sqrt for r, e in zip(rhos, E)]
        E[0] = E[0] + null
        lo = max(lo, float(sum(np.trace(r @ e).real for r, e in zip(rhos, E))))
        Y = sum(r @ e for r, e in zip(rhos, E))
        Y = 0.5 * (Y + Y.conj().T)
        worst = max(np.linalg.eigvalsh(r - Y)[-1] for r in rhos)
        hi = min(hi, float(np.trace(Y).real + d * max(0.0, worst)))
        if hi - lo < tol:
            break
    return lo, hi


def _measure_qubit(psi: np.ndarray, n: int, q: int, basis: int):
    """Branches (outcome, unnormalised vector) of measuring qubit q in basis 0 (+) or 1 (x)."""
    t = psi.reshape((2,) * n)
    if basis:
        t = np.moveaxis(t, q, 0)
        t = np.stack([(t[0] + t[1]) / math.sqrt(2), (t[0] - t[1]) / math.sqrt(2)])
        t = np.moveaxis(t, 0, q)
    out = []
    for bit in (0, 1):
        b = np.zeros_like(t)
        sl = [slice(None)] * n
        sl[q] = bit
        b[tuple(sl)] = t[tuple(sl)]
        out.append((bit, b.reshape(-1)))
    return out


def _cq_min_entropy(branches, n_total, S) -> float:
    """H_min(X_S | everything else) for branches {x_S: unnormalised vector}."""
    rest = [q for q in range(n_total) if q not in S]
    from .qsim import partial_trace

    rhos = []
    for v in branches.values():
        rho = np.outer(v, v.conj())
        rhos.append(partial_trace(rho, n_total, rest) if rest else np.array([[np.trace(rho)]]))
    total = sum(np.trace(r).real for r in rhos)
    lo, hi = guessing_probability([r / total for r in rhos])
    return -math.log2(hi)


@dataclass
class ExplicitAdversary:
    """Joint pure state on the challenger's k halves (first k qubits) and the
    adversary's register, plus the announced (theta_hat, x_hat)."""

    state: np.ndarray
    k: int
    theta_hat: tuple
    x_hat: tuple
    name: str = "explicit"

    @property
    def n_qubits(self) -> int:
        return int(round(math.log2(np.asarray(self.state).size)))


def explicit_sampling_exact(params: SamplingParams, adv: ExplicitAdversary) -> dict:
    """Exact enumeration over T, theta and measurement outcomes.

    Returns the abort probability, the probability of a min-entropy shortfall
    without abort, and the per-branch table.  S is the complement of T.
    """
    nq = adv.n_qubits
    if nq > MAX_QUBITS:
        raise CapExceeded(f"explicit mode supports up to {MAX_QUBITS} qubits")
    k, t = adv.k, params.t
    if params.n != k:
        raise ValueError("params.n must equal the number of challenger halves")
    import itertools

    psi0 = np.asarray(adv.state, dtype=complex).reshape(-1)
    subsets = list(itertools.combinations(range(k), t))
    p_abort = p_short = 0.0
    rows = []
    for T in subsets:
        pT = 1 / len(subsets)
        S = [i for i in range(k) if i not in T]
        for theta in itertools.product((0, 1), repeat=k):
            pth = pT / 2**k
            # test phase: measure T in theta_hat, keep branches consistent with x_hat
            branches = [psi0]
            for i in T:
                nxt = []
                for v in branches:
                    for bit, w in _measure_qubit(v, nq, i, adv.theta_hat[i]):
                        if theta[i] == adv.theta_hat[i] and bit != adv.x_hat[i]:
                            p_abort += pth * float(np.vdot(w, w).real)
                        else:
                            nxt.append(w)
                branches = nxt
            if not branches:
                continue
            # coherent sum is wrong across different recorded outcomes, so keep them separate
            s = sum(theta[i] != adv.theta_hat[i] for i in S)
            for v in branches:
                pv = float(np.vdot(v, v).real)
                if pv < 1e-15:
                    continue
                cq = {(): v}
                for i in S:
                    cq = {key + (bit,): w for key, v2 in cq.items()
                          for bit, w in _measure_qubit(v2, nq, i, theta[i])}
                h = _cq_min_entropy(cq, nq, S) if S else 0.0
                short = h < s - params.eps * len(S) - 1e-9
                if short:
                    p_short += pth * pv
                rows.append({"T": T, "theta": theta, "prob": pth * pv, "s": int(s), "h_min": h})
    return {"abort": p_abort, "shortfall": p_short, "branches": rows}


def product_state_adversary(k: int, theta_hat, x_hat, measured) -> ExplicitAdversary:
    """EPR halves; the adversary's copy of position i is either measured
    (collapsed to |x_hat_i> in theta_hat_i and entanglement broken) or kept."""
    # register layout: challenger halves 0..k-1, adversary halves k..2k-1
    n = 2 * k
    psi = np.zeros(2**n, dtype=complex)
    for bits in range(2**k):
        idx = 0
        for i in range(k):
            b = (bits >> (k - 1 - i)) & 1
            idx |= b << (n - 1 - i)
            idx |= b << (n - 1 - (k + i))
        psi[idx] = 1
    psi /= np.linalg.norm(psi)
    for i in range(k):
        if measured[i]:
            # project the adversary's half on the announced outcome and renormalise
            branches = _measure_qubit(psi, n, k + i, theta_hat[i])
            psi = branches[x_hat[i]][1]
            psi = psi / np.linalg.norm(psi)
    return ExplicitAdversary(psi, k, tuple(theta_hat), tuple(x_hat), "product")

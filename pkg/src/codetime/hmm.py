"""Two-state neural hidden Markov model of coding time.

States are [coding, not_coding]. A small network maps five clock
features of each minute to the start/end transition probabilities
S(t), E(t); a commit can be emitted only while coding, with a trained
per-minute probability C. Inference is exact forward-backward with
per-step normalization; training ascends the likelihood with gradients
obtained by reverse-mode differentiation of the scaled forward
recursion (derivation in the kernel docstrings below).

Index conventions: minute t runs 0..T-1; the transition into minute t
(t >= 1) uses the clock features of minute t itself; the initial
distribution is the stationary distribution of the t=0 transition
matrix, so S(0), E(0) enter the likelihood only through it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .corpus import Commit, CommitCorpus
from .ioutil import DataError, derive_seed, read_json, write_json

MINUTES_PER_DAY = 1440
MINUTES_PER_WEEK = 10080
# epoch minute 0 is Thursday 1970-01-01 00:00 UTC; shift by three days
# so minute_of_week is Monday-aligned
_MONDAY_SHIFT = 3 * MINUTES_PER_DAY

TWO_YEARS_MINUTES = 2 * 365 * MINUTES_PER_DAY


# --- timelines ---------------------------------------------------------------


@dataclass(frozen=True)
class DeveloperTimeline:
    """One developer's observation window on a one-minute grid."""

    author_id: str
    window_start: int  # UTC minute of grid index 0
    T: int
    commit_at: np.ndarray  # (T,) bool
    commit_minutes: tuple[int, ...]
    commit_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.T < 1:
            raise DataError("timeline must cover at least one minute")
        if self.commit_at.shape != (self.T,):
            raise DataError("commit_at length must equal T")
        mins = self.commit_minutes
        if any(m < 0 or m >= self.T for m in mins):
            raise DataError("commit minute outside the window")
        if any(b <= a for a, b in zip(mins, mins[1:])):
            raise DataError("commit_minutes must be strictly increasing")

    @property
    def n_commits(self) -> int:
        return len(self.commit_minutes)

    def intervals(self) -> list[tuple[int, int]]:
        """(a, b] minute-index pairs, one per commit after the first."""
        m = self.commit_minutes
        return [(m[i - 1], m[i]) for i in range(1, len(m))]


def timeline_from_commits(
    author_id: str,
    commits: list[Commit],
    max_minutes: int = TWO_YEARS_MINUTES,
) -> DeveloperTimeline:
    """Grid covering the author's commits, truncated to the most
    recent max_minutes if the span is longer."""
    if not commits:
        raise DataError(f"author {author_id} has no commits")
    times = sorted(set(c.author_time for c in commits))
    last = times[-1]
    start = times[0]
    if last - start + 1 > max_minutes:
        start = last - max_minutes + 1
        times = [t for t in times if t >= start]
    T = last - start + 1
    commit_at = np.zeros(T, dtype=bool)
    minutes = tuple(t - start for t in times)
    for m in minutes:
        commit_at[m] = True
    by_minute: dict[int, str] = {}
    for c in sorted(commits, key=lambda c: (c.author_time, c.commit_id)):
        if c.author_time >= start:
            by_minute[c.author_time - start] = c.commit_id
    ids = tuple(by_minute[m] for m in minutes)
    return DeveloperTimeline(
        author_id=author_id,
        window_start=start,
        T=T,
        commit_at=commit_at,
        commit_minutes=minutes,
        commit_ids=ids,
    )


def build_timelines(
    corpus: CommitCorpus,
    by_project: bool = False,
    max_minutes: int = TWO_YEARS_MINUTES,
) -> dict[str, DeveloperTimeline]:
    """One timeline per author (default) or per author/project stream."""
    groups: dict[str, list[Commit]] = {}
    for c in corpus.commits:
        key = f"{c.author_id}/{c.project_id}" if by_project else c.author_id
        groups.setdefault(key, []).append(c)
    return {
        key: timeline_from_commits(key, commits, max_minutes)
        for key, commits in sorted(groups.items())
    }


def time_features(minute_index: int, timeline: DeveloperTimeline) -> np.ndarray:
    """Five clock features: sin/cos day angle, sin/cos week angle,
    normed overall time t/T."""
    if not 0 <= minute_index < timeline.T:
        raise DataError(f"minute {minute_index} outside window of {timeline.T}")
    abs_min = timeline.window_start + minute_index
    day = 2.0 * math.pi * (abs_min % MINUTES_PER_DAY) / MINUTES_PER_DAY
    week = 2.0 * math.pi * ((abs_min + _MONDAY_SHIFT) % MINUTES_PER_WEEK) / MINUTES_PER_WEEK
    return np.array(
        [math.sin(day), math.cos(day), math.sin(week), math.cos(week),
         minute_index / timeline.T]
    )


def time_feature_matrix(timeline: DeveloperTimeline) -> np.ndarray:
    t = np.arange(timeline.T, dtype=np.float64)
    abs_min = timeline.window_start + t
    day = 2.0 * np.pi * np.mod(abs_min, MINUTES_PER_DAY) / MINUTES_PER_DAY
    week_min = np.mod(abs_min + _MONDAY_SHIFT, MINUTES_PER_WEEK)
    week = 2.0 * np.pi * week_min / MINUTES_PER_WEEK
    return np.column_stack(
        [np.sin(day), np.cos(day), np.sin(week), np.cos(week), t / timeline.T]
    )


# --- parameters --------------------------------------------------------------


@dataclass(frozen=True)
class HmmParams:
    """Transition-net weights plus the commit-emission logit.

    The net is features(5) -> tanh hidden(H) -> 2 logits; S and E are
    eps + (1-2*eps) * logistic(logit), so both stay inside [eps, 1-eps]
    and the transition rows sum to 1 exactly by construction.
    """

    w1: np.ndarray  # (H, 5)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (2, H)
    b2: np.ndarray  # (2,)
    c_logit: float
    eps: float = 1e-4

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def emission_c(self) -> float:
        return float(self.eps + (1.0 - 2.0 * self.eps) * _sigmoid(self.c_logit))

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [self.w1.ravel(), self.b1, self.w2.ravel(), self.b2, [self.c_logit]]
        )

    def with_flat(self, theta: np.ndarray) -> "HmmParams":
        h = self.hidden
        sizes = [h * 5, h, 2 * h, 2, 1]
        if theta.shape != (sum(sizes),):
            raise DataError("flat parameter vector has wrong length")
        parts = np.split(theta, np.cumsum(sizes)[:-1])
        return replace(
            self,
            w1=parts[0].reshape(h, 5),
            b1=parts[1].copy(),
            w2=parts[2].reshape(2, h),
            b2=parts[3].copy(),
            c_logit=float(parts[4][0]),
        )

    def to_dict(self) -> dict:
        return {
            "hidden": self.hidden,
            "eps": self.eps,
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
            "c_logit": self.c_logit,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "HmmParams":
        return cls(
            w1=np.asarray(raw["w1"], dtype=np.float64),
            b1=np.asarray(raw["b1"], dtype=np.float64),
            w2=np.asarray(raw["w2"], dtype=np.float64),
            b2=np.asarray(raw["b2"], dtype=np.float64),
            c_logit=float(raw["c_logit"]),
            eps=float(raw["eps"]),
        )


def init_params(
    seed: int,
    hidden: int = 16,
    eps: float = 1e-4,
    init_rate: float = 0.05,
    init_emission: float = 0.05,
    init_scale: float = 0.5,
) -> HmmParams:
    rng = np.random.default_rng(seed)
    bias = math.log(init_rate / (1.0 - init_rate))
    return HmmParams(
        w1=rng.normal(0.0, init_scale, size=(hidden, 5)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, init_scale / math.sqrt(hidden), size=(2, hidden)),
        b2=np.array([bias, bias], dtype=np.float64),
        c_logit=math.log(init_emission / (1.0 - init_emission)),
        eps=eps,
    )


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def _net_forward(params: HmmParams, feats: np.ndarray):
    """Returns (S, E, sig, hidden_act) over all minutes; sig is the raw
    logistic output kept for backprop."""
    hact = np.tanh(feats @ params.w1.T + params.b1)
    logits = hact @ params.w2.T + params.b2
    sig = _sigmoid(logits)
    probs = params.eps + (1.0 - 2.0 * params.eps) * sig
    return probs[:, 0], probs[:, 1], sig, hact


def transition_probs(params: HmmParams, tf: np.ndarray) -> tuple[float, float]:
    """(S, E) for one minute's features."""
    S, E, _, _ = _net_forward(params, np.asarray(tf, dtype=np.float64).reshape(1, 5))
    return float(S[0]), float(E[0])


def emission_prob(state: str, observed_commit: bool, C: float) -> float:
    if state not in ("coding", "not_coding"):
        raise DataError(f"unknown state {state!r}")
    if state == "coding":
        return C if observed_commit else 1.0 - C
    return 0.0 if observed_commit else 1.0


def stationary_distribution(S0: float, E0: float) -> np.ndarray:
    s = S0 + E0
    return np.array([S0 / s, E0 / s])


# --- scan kernels ------------------------------------------------------------
#
# All kernels take S, E as (T,) arrays where index t parametrizes the
# transition INTO minute t; S[0], E[0] are used only for the initial
# stationary distribution.


@njit(cache=True)
def _forward(S, E, C, obs, alpha, cnorm):
    T = obs.shape[0]
    s0 = S[0] + E[0]
    pi0 = S[0] / s0
    pi1 = E[0] / s0
    if obs[0]:
        a0 = pi0 * C
        a1 = 0.0
    else:
        a0 = pi0 * (1.0 - C)
        a1 = pi1
    c = a0 + a1
    alpha[0, 0] = a0 / c
    alpha[0, 1] = a1 / c
    cnorm[0] = c
    ll = np.log(c)
    for t in range(1, T):
        p0 = alpha[t - 1, 0] * (1.0 - E[t]) + alpha[t - 1, 1] * S[t]
        p1 = alpha[t - 1, 0] * E[t] + alpha[t - 1, 1] * (1.0 - S[t])
        if obs[t]:
            a0 = p0 * C
            a1 = 0.0
        else:
            a0 = p0 * (1.0 - C)
            a1 = p1
        c = a0 + a1
        alpha[t, 0] = a0 / c
        alpha[t, 1] = a1 / c
        cnorm[t] = c
        ll += np.log(c)
    return ll


@njit(cache=True)
def _backward_smooth(S, E, C, obs, alpha, cnorm, gamma):
    """Scaled backward pass; gamma[t] = P(state at t | all obs)."""
    T = obs.shape[0]
    b0 = 1.0
    b1 = 1.0
    gamma[T - 1, 0] = alpha[T - 1, 0]
    gamma[T - 1, 1] = alpha[T - 1, 1]
    for t in range(T - 2, -1, -1):
        if obs[t + 1]:
            e0 = C
            e1 = 0.0
        else:
            e0 = 1.0 - C
            e1 = 1.0
        nb0 = ((1.0 - E[t + 1]) * e0 * b0 + E[t + 1] * e1 * b1) / cnorm[t + 1]
        nb1 = (S[t + 1] * e0 * b0 + (1.0 - S[t + 1]) * e1 * b1) / cnorm[t + 1]
        b0 = nb0
        b1 = nb1
        gamma[t, 0] = alpha[t, 0] * b0
        gamma[t, 1] = alpha[t, 1] * b1


@njit(cache=True)
def _adjoint(S, E, C, obs, alpha, cnorm, dS, dE):
    """Reverse-mode gradient of the scaled-forward log-likelihood.

    With u_t the unnormalized forward vector, c_t its sum and
    alpha_t = u_t / c_t, the adjoints are
        ubar_t[i] = (1 + abar_t[i] - abar_t . alpha_t) / c_t
        mbar_t[j] = ubar_t[j] * b_t[j]
        dE_t = alpha_{t-1}[0] * (mbar_t[1] - mbar_t[0])
        dS_t = alpha_{t-1}[1] * (mbar_t[0] - mbar_t[1])
        abar_{t-1}[i] = sum_j P_t[i, j] * mbar_t[j]
    and C picks up ubar_t[0] * m_t[0] with the sign of d b_t[0] / dC.
    The t=0 slot routes through the stationary initial distribution:
    with s = S_0 + E_0,
        dS_0 = (pibar[0] - pibar[1]) * E_0 / s^2
        dE_0 = (pibar[1] - pibar[0]) * S_0 / s^2.
    Returns dC.
    """
    T = obs.shape[0]
    abar0 = 0.0
    abar1 = 0.0
    dC = 0.0
    for t in range(T - 1, 0, -1):
        c = cnorm[t]
        dot = abar0 * alpha[t, 0] + abar1 * alpha[t, 1]
        u0 = (1.0 + abar0 - dot) / c
        u1 = (1.0 + abar1 - dot) / c
        if obs[t]:
            m0 = u0 * C
            m1 = 0.0
        else:
            m0 = u0 * (1.0 - C)
            m1 = u1
        a0 = alpha[t - 1, 0]
        a1 = alpha[t - 1, 1]
        mt0 = a0 * (1.0 - E[t]) + a1 * S[t]
        if obs[t]:
            dC += u0 * mt0
        else:
            dC -= u0 * mt0
        dE[t] = a0 * (m1 - m0)
        dS[t] = a1 * (m0 - m1)
        abar0 = (1.0 - E[t]) * m0 + E[t] * m1
        abar1 = S[t] * m0 + (1.0 - S[t]) * m1
    c = cnorm[0]
    dot = abar0 * alpha[0, 0] + abar1 * alpha[0, 1]
    u0 = (1.0 + abar0 - dot) / c
    u1 = (1.0 + abar1 - dot) / c
    if obs[0]:
        pibar0 = u0 * C
        pibar1 = 0.0
    else:
        pibar0 = u0 * (1.0 - C)
        pibar1 = u1
    s = S[0] + E[0]
    pi0 = S[0] / s
    if obs[0]:
        dC += u0 * pi0
    else:
        dC -= u0 * pi0
    dS[0] = (pibar0 - pibar1) * E[0] / (s * s)
    dE[0] = (pibar1 - pibar0) * S[0] / (s * s)
    return dC


@njit(cache=True)
def _prior_coding(S, E):
    """P(coding at t) under the chain alone, no observations."""
    T = S.shape[0]
    out = np.empty(T)
    p = S[0] / (S[0] + E[0])
    out[0] = p
    for t in range(1, T):
        p = p * (1.0 - E[t]) + (1.0 - p) * S[t]
        out[t] = p
    return out


@njit(cache=True)
def _ffbs_interval_counts(S, E, C, obs, alpha, interval_of, n_intervals, n_samples, seed):
    """Backward-sample n_samples full posterior paths; return per-path
    coding-minute counts per interval. interval_of maps minute -> row
    (-1 for minutes outside every interval)."""
    np.random.seed(seed)
    T = obs.shape[0]
    counts = np.zeros((n_intervals, n_samples), dtype=np.int64)
    for s in range(n_samples):
        x = 0 if np.random.random() < alpha[T - 1, 0] else 1
        if x == 0 and interval_of[T - 1] >= 0:
            counts[interval_of[T - 1], s] += 1
        for t in range(T - 2, -1, -1):
            if x == 0:
                p0 = alpha[t, 0] * (1.0 - E[t + 1])
                p1 = alpha[t, 1] * S[t + 1]
            else:
                p0 = alpha[t, 0] * E[t + 1]
                p1 = alpha[t, 1] * (1.0 - S[t + 1])
            x = 0 if np.random.random() * (p0 + p1) < p0 else 1
            if x == 0 and interval_of[t] >= 0:
                counts[interval_of[t], s] += 1
    return counts


@njit(cache=True)
def _sample_chain(S, E, C, seed):
    """Draw one state/commit path from the model itself."""
    np.random.seed(seed)
    T = S.shape[0]
    states = np.empty(T, dtype=np.uint8)
    obs = np.zeros(T, dtype=np.uint8)
    pi0 = S[0] / (S[0] + E[0])
    x = 0 if np.random.random() < pi0 else 1
    for t in range(T):
        if t > 0:
            if x == 0:
                x = 1 if np.random.random() < E[t] else 0
            else:
                x = 0 if np.random.random() < S[t] else 1
        states[t] = x
        if x == 0 and np.random.random() < C:
            obs[t] = 1
    return states, obs


def warm_up_kernels() -> None:
    """Compile (or load from cache) every scan kernel on a toy problem."""
    S = np.full(4, 0.3)
    E = np.full(4, 0.2)
    obs = np.array([0, 1, 0, 0], dtype=np.uint8)
    alpha = np.empty((4, 2))
    cnorm = np.empty(4)
    _forward(S, E, 0.1, obs, alpha, cnorm)
    gamma = np.empty((4, 2))
    _backward_smooth(S, E, 0.1, obs, alpha, cnorm, gamma)
    dS = np.empty(4)
    dE = np.empty(4)
    _adjoint(S, E, 0.1, obs, alpha, cnorm, dS, dE)
    _prior_coding(S, E)
    _ffbs_interval_counts(S, E, 0.1, obs, alpha, np.array([-1, 0, 0, -1]), 1, 2, 7)
    _sample_chain(S, E, 0.1, 7)


# --- inference ---------------------------------------------------------------


@dataclass(frozen=True)
class CodingPosterior:
    smoothed: np.ndarray  # (T,) P(coding | all commits)
    filtered: np.ndarray  # (T,) P(coding | commits up to t)
    log_likelihood: float


def _rates_and_obs(timeline: DeveloperTimeline, params: HmmParams):
    feats = time_feature_matrix(timeline)
    S, E, _, _ = _net_forward(params, feats)
    obs = timeline.commit_at.astype(np.uint8)
    return S, E, obs


def forward_backward(timeline: DeveloperTimeline, params: HmmParams) -> CodingPosterior:
    S, E, obs = _rates_and_obs(timeline, params)
    T = timeline.T
    alpha = np.empty((T, 2))
    cnorm = np.empty(T)
    ll = _forward(S, E, params.emission_c, obs, alpha, cnorm)
    if not math.isfinite(ll):
        raise DataError("observation sequence has zero likelihood")
    gamma = np.empty((T, 2))
    _backward_smooth(S, E, params.emission_c, obs, alpha, cnorm, gamma)
    return CodingPosterior(
        smoothed=gamma[:, 0],
        filtered=alpha[:, 0],
        log_likelihood=float(ll),
    )


def filtered_probs(timeline: DeveloperTimeline, params: HmmParams) -> np.ndarray:
    S, E, obs = _rates_and_obs(timeline, params)
    alpha = np.empty((timeline.T, 2))
    cnorm = np.empty(timeline.T)
    _forward(S, E, params.emission_c, obs, alpha, cnorm)
    return alpha[:, 0]


def log_likelihood(timeline: DeveloperTimeline, params: HmmParams) -> float:
    S, E, obs = _rates_and_obs(timeline, params)
    alpha = np.empty((timeline.T, 2))
    cnorm = np.empty(timeline.T)
    return float(_forward(S, E, params.emission_c, obs, alpha, cnorm))


def prior_coding_marginals(timeline: DeveloperTimeline, params: HmmParams) -> np.ndarray:
    feats = time_feature_matrix(timeline)
    S, E, _, _ = _net_forward(params, feats)
    return _prior_coding(S, E)


def commit_rate_curve(timeline: DeveloperTimeline, params: HmmParams) -> np.ndarray:
    """Model-implied commit probability per minute: prior P(coding) * C."""
    return prior_coding_marginals(timeline, params) * params.emission_c


def expected_coding_time(
    posterior: CodingPosterior, interval: tuple[int, int]
) -> float:
    """Hours of expected coding in minute range (a, b]."""
    a, b = interval
    T = posterior.smoothed.shape[0]
    if a > b or a < 0 or b > T:
        raise DataError(f"bad interval ({a}, {b}] for window of {T} minutes")
    if a == b:
        return 0.0
    return float(np.sum(posterior.smoothed[a + 1 : b + 1]) / 60.0)


def sample_coding_times(
    timeline: DeveloperTimeline,
    params: HmmParams,
    interval: tuple[int, int],
    n: int = 200,
    seed: int = 0,
) -> np.ndarray:
    """n posterior draws of hours spent coding within (a, b], via
    forward-filter backward-sampling of whole state paths."""
    hours = sample_interval_matrix(timeline, params, [interval], n, seed)
    return hours[0]


def sample_interval_matrix(
    timeline: DeveloperTimeline,
    params: HmmParams,
    intervals: list[tuple[int, int]],
    n: int = 200,
    seed: int = 0,
) -> np.ndarray:
    """(len(intervals), n) hours. One backward pass per sample covers
    every interval, so the cost is O(n * T) regardless of interval count."""
    S, E, obs = _rates_and_obs(timeline, params)
    T = timeline.T
    alpha = np.empty((T, 2))
    cnorm = np.empty(T)
    _forward(S, E, params.emission_c, obs, alpha, cnorm)
    interval_of = np.full(T, -1, dtype=np.int64)
    for row, (a, b) in enumerate(intervals):
        if a > b or a < 0 or b > T:
            raise DataError(f"bad interval ({a}, {b}] for window of {T} minutes")
        interval_of[a + 1 : b + 1] = row
    counts = _ffbs_interval_counts(
        S, E, params.emission_c, obs, alpha, interval_of,
        len(intervals), n, seed & 0x7FFFFFFF,
    )
    return counts / 60.0


def sample_from_model(
    params: HmmParams,
    window_start: int,
    T: int,
    seed: int,
    author_id: str = "model-draw",
) -> tuple[DeveloperTimeline, np.ndarray]:
    """Simulate a developer from the model class itself: draw a state
    path from the chain and commits from the emission. Returns the
    observable timeline and the hidden coding mask."""
    shell = DeveloperTimeline(
        author_id=author_id,
        window_start=window_start,
        T=T,
        commit_at=np.zeros(T, dtype=bool),
        commit_minutes=(),
    )
    feats = time_feature_matrix(shell)
    S, E, _, _ = _net_forward(params, feats)
    states, obs = _sample_chain(S, E, params.emission_c, seed & 0x7FFFFFFF)
    commit_at = obs.astype(bool)
    timeline = DeveloperTimeline(
        author_id=author_id,
        window_start=window_start,
        T=T,
        commit_at=commit_at,
        commit_minutes=tuple(int(m) for m in np.nonzero(commit_at)[0]),
    )
    return timeline, states == 0


# --- training ----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 16
    eps: float = 1e-4
    learning_rate: float = 1e-2
    max_epochs: int = 800
    tolerance: float = 1e-6
    patience: int = 20
    min_commits: int = 50
    init_rate: float = 0.05
    init_emission: float = 0.05
    init_scale: float = 0.5
    seed: int = 0


@dataclass
class TrainResult:
    params: HmmParams
    log: list[float] = field(default_factory=list)
    epochs_run: int = 0
    stopped_early: bool = False

    @property
    def best_log_likelihood(self) -> float:
        return max(self.log)


def _ll_and_grad(
    params: HmmParams, feats: np.ndarray, obs: np.ndarray
) -> tuple[float, np.ndarray]:
    """Log-likelihood and its gradient in flat-parameter layout."""
    S, E, sig, hact = _net_forward(params, feats)
    T = obs.shape[0]
    alpha = np.empty((T, 2))
    cnorm = np.empty(T)
    C = params.emission_c
    ll = _forward(S, E, C, obs, alpha, cnorm)
    dS = np.empty(T)
    dE = np.empty(T)
    dC = _adjoint(S, E, C, obs, alpha, cnorm, dS, dE)

    scale = 1.0 - 2.0 * params.eps
    dlogits = np.column_stack([dS, dE]) * scale * sig * (1.0 - sig)
    dw2 = dlogits.T @ hact
    db2 = dlogits.sum(axis=0)
    dhid = (dlogits @ params.w2) * (1.0 - hact * hact)
    dw1 = dhid.T @ feats
    db1 = dhid.sum(axis=0)
    sig_c = _sigmoid(params.c_logit)
    dc_logit = dC * scale * sig_c * (1.0 - sig_c)
    grad = np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2, [dc_logit]])
    return float(ll), grad


def train_hmm(
    timeline: DeveloperTimeline,
    config: TrainConfig = TrainConfig(),
    initial: HmmParams | None = None,
) -> TrainResult:
    """Full-sequence likelihood ascent with adaptive moment scaling.

    Tracks the best parameters ever evaluated, so the returned model's
    log-likelihood never falls below the initial one. Stops early once
    the improvement over the best stays under `tolerance` for
    `patience` consecutive epochs.
    """
    if timeline.n_commits < config.min_commits:
        raise DataError(
            f"{timeline.author_id}: {timeline.n_commits} commits, "
            f"need at least {config.min_commits} to train"
        )
    feats = time_feature_matrix(timeline)
    obs = timeline.commit_at.astype(np.uint8)
    params = initial if initial is not None else init_params(
        derive_seed(config.seed, "hmm-init", timeline.author_id),
        hidden=config.hidden,
        eps=config.eps,
        init_rate=config.init_rate,
        init_emission=config.init_emission,
        init_scale=config.init_scale,
    )

    theta = params.flatten()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    best_ll = -np.inf
    best_theta = theta.copy()
    streak = 0
    log: list[float] = []
    epochs = 0
    stopped = False
    for epoch in range(config.max_epochs):
        ll, grad = _ll_and_grad(params.with_flat(theta), feats, obs)
        log.append(ll)
        epochs = epoch + 1
        if ll > best_ll + config.tolerance:
            streak = 0
        else:
            streak += 1
        if ll > best_ll:
            best_ll = ll
            best_theta = theta.copy()
        if streak >= config.patience:
            stopped = True
            break
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        mhat = m / (1.0 - beta1 ** (epoch + 1))
        vhat = v / (1.0 - beta2 ** (epoch + 1))
        theta = theta + config.learning_rate * mhat / (np.sqrt(vhat) + adam_eps)
    return TrainResult(
        params=params.with_flat(best_theta),
        log=log,
        epochs_run=epochs,
        stopped_early=stopped,
    )


# --- model files -------------------------------------------------------------


def save_hmm_model(path: str, result: TrainResult, timeline: DeveloperTimeline) -> None:
    write_json(
        path,
        {
            "kind": "coding-time-hmm",
            "author": timeline.author_id,
            "window_start": timeline.window_start,
            "window_minutes": timeline.T,
            "n_commits": timeline.n_commits,
            "params": result.params.to_dict(),
            "training_log": result.log,
            "epochs_run": result.epochs_run,
            "stopped_early": result.stopped_early,
        },
    )


def load_hmm_model(path: str) -> tuple[HmmParams, dict]:
    raw = read_json(path)
    if raw.get("kind") != "coding-time-hmm":
        raise DataError(f"{path} is not a coding-time model file")
    return HmmParams.from_dict(raw["params"]), raw

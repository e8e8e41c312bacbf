"""Sticky HDP-HMM with Dirichlet-process mixture emissions.

Segments of a bag are partitioned into scenes (hidden states) and sub-scenes
(mixture components of a scene's emission distribution). Inference is a
weak-limit blocked Gibbs sampler truncated at ``max_states`` scenes and
``max_components`` components per scene:

* global stick weights beta ~ GEM(gamma), resampled through auxiliary table
  counts with the sticky override correction;
* transition rows pi_j ~ Dir(alpha * beta + rho * e_j + counts);
* component weights psi_k ~ Dir(tau / T + counts);
* Gaussian atoms drawn from their Normal-Inverse-Wishart posteriors;
* scenes sampled jointly by backward messages and forward sampling, then
  components given scenes.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.linalg import solve_triangular
from scipy.special import logsumexp
from scipy.stats import invwishart

from .errors import ArgumentError, NumericError

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
JITTER_BASE = 1e-8
JITTER_ESCALATIONS = 3
SCALE_FLOOR = 1e-6

ComponentKey = tuple[int, int]
FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NIWPrior:
    """Normal-Inverse-Wishart prior over a Gaussian atom (mu, Sigma)."""

    mean0: FloatArray
    kappa0: float
    nu0: float
    scale0: FloatArray

    def __post_init__(self) -> None:
        mean0 = np.atleast_1d(np.asarray(self.mean0, dtype=np.float64))
        scale0 = np.atleast_2d(np.asarray(self.scale0, dtype=np.float64))
        dim = mean0.shape[0]
        if mean0.ndim != 1 or scale0.shape != (dim, dim):
            raise ArgumentError(f"NIW prior shapes disagree: mean0 {mean0.shape}, scale0 {scale0.shape}")
        if self.kappa0 <= 0:
            raise ArgumentError(f"kappa0 must be positive, got {self.kappa0}")
        if self.nu0 <= dim - 1:
            raise ArgumentError(f"nu0 must exceed M - 1 = {dim - 1}, got {self.nu0}")
        if not np.allclose(scale0, scale0.T):
            raise ArgumentError("scale0 must be symmetric")
        try:
            np.linalg.cholesky(scale0)
        except np.linalg.LinAlgError as e:
            raise ArgumentError("scale0 must be positive definite") from e
        object.__setattr__(self, "mean0", mean0)
        object.__setattr__(self, "scale0", scale0)

    @property
    def dim(self) -> int:
        return int(self.mean0.shape[0])

    @classmethod
    def from_data(cls, features: ArrayLike, kappa0: float = 0.1, nu_offset: float = 2.0) -> "NIWPrior":
        """Empirical prior: bag mean, bag covariance, nu0 = M + 2.

        A degenerate covariance (constant bag, fewer segments than dimensions)
        gets a small ridge so the scale matrix stays positive definite.
        """
        data = np.atleast_2d(np.asarray(features, dtype=np.float64))
        dim = data.shape[1]
        mean0 = data.mean(axis=0)
        centered = data - mean0
        covariance = centered.T @ centered / data.shape[0]
        trace = float(np.trace(covariance))
        ridge = SCALE_FLOOR * (trace / dim if trace > 0 else 1.0)
        scale0 = covariance + ridge * np.eye(dim)
        return cls(mean0=mean0, kappa0=kappa0, nu0=dim + nu_offset, scale0=scale0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean0": self.mean0.tolist(),
            "kappa0": self.kappa0,
            "nu0": self.nu0,
            "scale0": self.scale0.tolist(),
        }


class SamplerInit(str, Enum):
    """Starting assignments of the sampler.

    ``ward`` cuts a Ward tree of the segments at its largest relative
    merge-height gap, one scene per cluster. ``random`` draws scenes and
    components uniformly.
    """

    WARD = "ward"
    RANDOM = "random"


@dataclass(frozen=True)
class PartitionConfig:
    """Hyperparameters and sampler settings for ``run_gibbs``.

    ``emission_prior`` may be left as None, in which case the empirical
    prior of the bag being partitioned is used.
    """

    alpha: float = 1.0
    gamma: float = 1.0
    rho: float = 1.0
    tau: float = 1.0
    max_states: int = 10
    max_components: int = 5
    n_iters: int = 300
    burn_in: int = 100
    seed: int = 0
    init: SamplerInit = SamplerInit.WARD
    emission_prior: Optional[NIWPrior] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "init", SamplerInit(self.init))
        except ValueError as e:
            raise ArgumentError(f"Unknown sampler init {self.init!r}") from e
        if self.alpha <= 0 or self.gamma <= 0 or self.tau <= 0:
            raise ArgumentError("alpha, gamma and tau must be positive")
        if self.rho < 0:
            raise ArgumentError(f"rho must be nonnegative, got {self.rho}")
        if self.max_states < 1 or self.max_components < 1:
            raise ArgumentError("max_states and max_components must be at least 1")
        if self.n_iters < 1:
            raise ArgumentError(f"n_iters must be positive, got {self.n_iters}")
        if not 0 <= self.burn_in < self.n_iters:
            raise ArgumentError(f"burn_in must satisfy 0 <= burn_in < n_iters, got {self.burn_in} / {self.n_iters}")
        if not 0 <= self.seed < 2**64:
            raise ArgumentError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def to_dict(self) -> dict[str, Any]:
        values = asdict(replace(self, emission_prior=None))
        values["init"] = self.init.value
        values["emission_prior"] = None if self.emission_prior is None else self.emission_prior.to_dict()
        return values


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """Gaussian atom of one (scene, component) pair."""

    mu: FloatArray
    sigma: FloatArray


@dataclass(frozen=True)
class SegmentAssignment:
    """Scene and component ids per segment, without model parameters."""

    z: IntArray
    s: IntArray


@dataclass(eq=False)
class PartitionResult:
    """One posterior sample of the partition and its parameters."""

    z: IntArray
    s: IntArray
    beta: FloatArray
    pi: FloatArray
    psi: FloatArray
    emissions: dict[ComponentKey, GaussianComponent]
    log_likelihood_trace: FloatArray

    @property
    def n_segments(self) -> int:
        return int(self.z.shape[0])

    def occupied(self) -> list[ComponentKey]:
        """Occupied (scene, component) pairs in ascending order."""
        return sorted({(int(k), int(t)) for k, t in zip(self.z, self.s)})

    @property
    def kappa_count(self) -> int:
        return len(self.occupied())

    def members(self, key: ComponentKey) -> IntArray:
        """Segment indices assigned to ``key``, ascending."""
        return np.flatnonzero((self.z == key[0]) & (self.s == key[1]))

    def to_dict(self) -> dict[str, Any]:
        components = []
        for scene, component in self.occupied():
            emission = self.emissions[(scene, component)]
            components.append(
                {
                    "scene": scene,
                    "component": component,
                    "mu": emission.mu.tolist(),
                    "sigma": emission.sigma.tolist(),
                }
            )
        return {
            "z": [int(v) for v in self.z],
            "s": [int(v) for v in self.s],
            "kappa": self.kappa_count,
            "components": components,
            "loglik_trace": [float(v) for v in self.log_likelihood_trace],
        }

    @classmethod
    def from_dict(cls, document: dict[str, Any]) -> "PartitionResult":
        """Rebuild a result from its JSON form.

        Only occupied components are serialized, so ``beta``, ``pi`` and ``psi``
        come back empty; the result is good for selection and similarity.
        """
        emissions = {
            (int(entry["scene"]), int(entry["component"])): GaussianComponent(
                mu=np.asarray(entry["mu"], dtype=np.float64),
                sigma=np.asarray(entry["sigma"], dtype=np.float64),
            )
            for entry in document["components"]
        }
        return cls(
            z=np.asarray(document["z"], dtype=np.int64),
            s=np.asarray(document["s"], dtype=np.int64),
            beta=np.zeros(0),
            pi=np.zeros((0, 0)),
            psi=np.zeros((0, 0)),
            emissions=emissions,
            log_likelihood_trace=np.asarray(document.get("loglik_trace", []), dtype=np.float64),
        )


# ---------------------------------------------------------------------------
# Elementary draws
# ---------------------------------------------------------------------------


def sample_dirichlet(params: ArrayLike, rng: np.random.Generator) -> FloatArray:
    """Dirichlet draw that stays exact for very small concentrations.

    Gamma variates are drawn in log space (Gamma(a) = Gamma(a + 1) * U^(1/a))
    and normalized with logsumexp, so tiny parameters underflow gracefully
    instead of producing NaN.
    """
    alpha = np.asarray(params, dtype=np.float64)
    if alpha.ndim != 1 or alpha.size == 0 or np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
        raise ArgumentError("Dirichlet parameters must be a nonempty vector of finite positive values")
    with np.errstate(divide="ignore", over="ignore"):
        log_gamma = np.log(rng.standard_gamma(alpha + 1.0)) + np.log(rng.random(alpha.size)) / alpha
    weights = np.exp(log_gamma - logsumexp(log_gamma))
    return weights / weights.sum()


def sample_gem(concentration: float, truncation: int, rng: np.random.Generator) -> FloatArray:
    """Truncated stick-breaking draw from GEM(concentration).

    Args:
        concentration: Positive concentration
        truncation: Number of explicit sticks

    Returns:
        Vector of ``truncation + 1`` weights; the last entry is the remainder
    """
    if concentration <= 0:
        raise ArgumentError(f"GEM concentration must be positive, got {concentration}")
    if truncation < 1:
        raise ArgumentError(f"GEM truncation must be positive, got {truncation}")
    fractions = rng.beta(1.0, concentration, size=truncation)
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - fractions)))
    weights = np.empty(truncation + 1)
    weights[:truncation] = fractions * remaining[:truncation]
    weights[truncation] = max(0.0, 1.0 - weights[:truncation].sum())
    return weights / weights.sum()


def fold_remainder(beta: ArrayLike, n_states: int) -> FloatArray:
    """Restrict stick weights to ``n_states`` entries, folding the rest into the last one."""
    weights = np.asarray(beta, dtype=np.float64)
    folded = weights[:n_states].copy()
    folded[-1] += weights[n_states:].sum()
    return folded


def expected_self_transition(alpha: float, rho: float, beta_j: float) -> float:
    """Prior mean of pi_jj under the sticky prior: (alpha * beta_j + rho) / (alpha + rho)."""
    return (alpha * beta_j + rho) / (alpha + rho)


def expected_cross_transition(alpha: float, rho: float, beta_k: float) -> float:
    """Prior mean of pi_jk for k != j: alpha * beta_k / (alpha + rho)."""
    return alpha * beta_k / (alpha + rho)


def sample_sticky_transition_row(
    beta: ArrayLike,
    j: int,
    alpha: float,
    rho: float,
    rng: np.random.Generator,
    counts: Optional[ArrayLike] = None,
) -> FloatArray:
    """Draw transition row j from Dir(alpha * beta + rho * e_j + counts).

    Args:
        beta: Stick weights over the L states (remainder already folded in)
        j: Source state
        alpha: Transition concentration
        rho: Sticky self-transition mass
        rng: Random generator
        counts: Optional observed transition counts out of state j

    Returns:
        Probability vector of length L
    """
    weights = np.asarray(beta, dtype=np.float64)
    if not 0 <= j < weights.shape[0]:
        raise ArgumentError(f"State {j} out of range for {weights.shape[0]} states")
    params = alpha * weights
    params[j] += rho
    if counts is not None:
        params = params + np.asarray(counts, dtype=np.float64)
    # States whose stick weight underflowed to zero still need a positive concentration.
    params = np.maximum(params, np.finfo(np.float64).tiny)
    return sample_dirichlet(params, rng)


# ---------------------------------------------------------------------------
# Gaussian emissions
# ---------------------------------------------------------------------------


def cholesky_with_jitter(sigma: ArrayLike, key: Optional[ComponentKey] = None) -> FloatArray:
    """Lower Cholesky factor, adding escalating diagonal jitter on failure.

    The jitter starts at 1e-8 * trace(Sigma) / M and grows tenfold up to
    three times.

    Raises:
        NumericError: If the matrix is still not positive definite
    """
    matrix = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        pass

    dim = matrix.shape[0]
    jitter = JITTER_BASE * max(float(np.trace(matrix)) / dim, np.finfo(np.float64).tiny)
    for _ in range(JITTER_ESCALATIONS + 1):
        try:
            factor = np.linalg.cholesky(matrix + jitter * np.eye(dim))
        except np.linalg.LinAlgError:
            jitter *= 10.0
            continue
        logger.warning("Added jitter %.3g to covariance of %s", jitter, _describe(key))
        return factor
    raise NumericError(f"Covariance of {_describe(key)} is not positive definite after jitter")


def _describe(key: Optional[ComponentKey]) -> str:
    return "an unnamed component" if key is None else f"scene {key[0]} component {key[1]}"


def _logpdf_rows(features: FloatArray, mu: FloatArray, chol: FloatArray) -> FloatArray:
    residual = solve_triangular(chol, (features - mu).T, lower=True)
    quadratic = np.sum(residual * residual, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (features.shape[1] * LOG_2PI + log_det + quadratic)


def emission_loglik(
    x: ArrayLike, mu: ArrayLike, sigma: ArrayLike, key: Optional[ComponentKey] = None
) -> float:
    """Exact multivariate normal log-density of x under N(mu, sigma).

    Raises:
        NumericError: If sigma is not symmetric positive definite
    """
    point = np.atleast_2d(np.asarray(x, dtype=np.float64))
    matrix = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    try:
        chol = np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"Covariance of {_describe(key)} is not positive definite") from e
    return float(_logpdf_rows(point, np.asarray(mu, dtype=np.float64), chol)[0])


def niw_posterior(prior: NIWPrior, features: ArrayLike) -> NIWPrior:
    """Conjugate Normal-Inverse-Wishart update given assigned rows."""
    data = np.asarray(features, dtype=np.float64).reshape(-1, prior.dim)
    count = data.shape[0]
    if count == 0:
        return prior
    mean = data.mean(axis=0)
    centered = data - mean
    kappa_n = prior.kappa0 + count
    offset = mean - prior.mean0
    scale_n = (
        prior.scale0 + centered.T @ centered + (prior.kappa0 * count / kappa_n) * np.outer(offset, offset)
    )
    return NIWPrior(
        mean0=(prior.kappa0 * prior.mean0 + count * mean) / kappa_n,
        kappa0=kappa_n,
        nu0=prior.nu0 + count,
        scale0=0.5 * (scale_n + scale_n.T),
    )


def sample_niw(prior: NIWPrior, rng: np.random.Generator, key: Optional[ComponentKey] = None) -> GaussianComponent:
    """Draw (mu, Sigma) from a Normal-Inverse-Wishart distribution."""
    sigma = np.atleast_2d(invwishart.rvs(df=prior.nu0, scale=prior.scale0, random_state=rng))
    sigma = 0.5 * (sigma + sigma.T)
    chol = cholesky_with_jitter(sigma, key)
    mu = prior.mean0 + chol @ rng.standard_normal(prior.dim) / np.sqrt(prior.kappa0)
    return GaussianComponent(mu=mu, sigma=chol @ chol.T)


def sample_emission_params(
    features: ArrayLike,
    z: ArrayLike,
    s: ArrayLike,
    prior: NIWPrior,
    rng: np.random.Generator,
    n_states: int,
    n_components: int,
) -> dict[ComponentKey, GaussianComponent]:
    """Draw every (scene, component) atom from its NIW posterior.

    Unoccupied pairs draw from the prior. Pairs are visited in ascending
    order so the random stream is consumed deterministically.
    """
    data = np.asarray(features, dtype=np.float64)
    scenes = np.asarray(z, dtype=np.int64)
    components = np.asarray(s)
    emissions = {}
    for scene in range(n_states):
        in_scene = scenes == scene
        for component in range(n_components):
            rows = data[in_scene & (components == component)]
            key = (scene, component)
            emissions[key] = sample_niw(niw_posterior(prior, rows), rng, key)
    return emissions


def component_logliks(
    features: FloatArray, emissions: dict[ComponentKey, GaussianComponent], n_states: int, n_components: int
) -> FloatArray:
    """Log-density of every segment under every atom, shape (n, L, T)."""
    out = np.full((features.shape[0], n_states, n_components), -np.inf)
    for (scene, component), emission in emissions.items():
        chol = cholesky_with_jitter(emission.sigma, (scene, component))
        out[:, scene, component] = _logpdf_rows(features, emission.mu, chol)
    return out


def _safe_log(values: ArrayLike) -> FloatArray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(values, dtype=np.float64))


def _sample_log_categorical(log_weights: FloatArray, rng: np.random.Generator) -> int:
    weights = np.exp(log_weights - np.max(log_weights))
    cumulative = np.cumsum(weights)
    return int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))


# ---------------------------------------------------------------------------
# Conditional updates
# ---------------------------------------------------------------------------


def forward_backward_sample_states(
    pi: ArrayLike,
    log_likelihoods: ArrayLike,
    init_dist: ArrayLike,
    rng: np.random.Generator,
) -> IntArray:
    """Jointly sample the scene sequence given transitions and per-state likelihoods.

    Backward messages are computed in log space, then states are sampled
    forward in time.

    Args:
        pi: L x L transition matrix
        log_likelihoods: n x L per-state (component-marginalized) log-likelihoods
        init_dist: Initial state distribution of length L
        rng: Random generator

    Returns:
        Scene ids of length n

    Raises:
        NumericError: If some position has -inf likelihood under every state
    """
    loglik = np.asarray(log_likelihoods, dtype=np.float64)
    n_segments, n_states = loglik.shape
    if np.any(np.isnan(loglik)) or np.any(np.isposinf(loglik)):
        raise NumericError("State log-likelihoods contain NaN or +inf")
    dead = np.flatnonzero(np.all(np.isneginf(loglik), axis=1))
    if dead.size:
        raise NumericError(f"Degenerate emission: every state has zero likelihood at segment {int(dead[0])}")

    log_pi = _safe_log(pi)
    log_init = _safe_log(init_dist)
    messages = np.zeros((n_segments, n_states))
    for t in range(n_segments - 2, -1, -1):
        messages[t] = logsumexp(log_pi + loglik[t + 1] + messages[t + 1], axis=1)

    z = np.empty(n_segments, dtype=np.int64)
    first = log_init + loglik[0] + messages[0]
    if not np.any(np.isfinite(first)):
        raise NumericError("Degenerate emission: no admissible initial state")
    z[0] = _sample_log_categorical(first, rng)
    for t in range(1, n_segments):
        z[t] = _sample_log_categorical(log_pi[z[t - 1]] + loglik[t] + messages[t], rng)
    return z


def _sample_components(z: ArrayLike, log_psi: FloatArray, logliks: FloatArray, rng: np.random.Generator) -> IntArray:
    scenes = np.asarray(z, dtype=np.int64)
    s = np.empty(scenes.shape[0], dtype=np.int64)
    for i, scene in enumerate(scenes):
        s[i] = _sample_log_categorical(log_psi[scene] + logliks[i, scene], rng)
    return s


def sample_component_assignments(
    features: ArrayLike,
    z: ArrayLike,
    psi: ArrayLike,
    emissions: dict[ComponentKey, GaussianComponent],
    rng: np.random.Generator,
) -> IntArray:
    """Sample each segment's component given its scene.

    s_i is drawn with probability proportional to psi[z_i, t] * N(x_i | mu, Sigma)
    of atom (z_i, t).

    Args:
        features: n x M segment features
        z: Scene ids, length n
        psi: L x T component weights
        emissions: Atoms for every (scene, component) pair that may be chosen
        rng: Random generator

    Returns:
        Component ids, length n
    """
    data = np.asarray(features, dtype=np.float64)
    weights = np.asarray(psi, dtype=np.float64)
    logliks = component_logliks(data, emissions, weights.shape[0], weights.shape[1])
    return _sample_components(z, _safe_log(weights), logliks, rng)


def transition_counts(z: ArrayLike, n_states: int) -> IntArray:
    """Counts N[j, k] of j -> k transitions; row L counts the initial state."""
    scenes = np.asarray(z, dtype=np.int64)
    counts = np.zeros((n_states + 1, n_states), dtype=np.int64)
    np.add.at(counts, (scenes[:-1], scenes[1:]), 1)
    counts[n_states, scenes[0]] += 1
    return counts


def sample_transition_tables(
    counts: IntArray, beta: FloatArray, alpha: float, rho: float, rng: np.random.Generator
) -> IntArray:
    """Auxiliary table counts with the sticky override correction.

    Table counts m_jk follow the Chinese-restaurant auxiliary scheme with
    concentration alpha * beta_k + rho * [j == k]; self-transition tables are
    then thinned by w_j ~ Binomial(m_jj, rho / (rho + alpha * beta_j)).

    Args:
        counts: (L + 1) x L transition counts (last row: initial state)
        beta: Stick weights over the L states
        alpha: Transition concentration
        rho: Sticky mass
        rng: Random generator

    Returns:
        L-vector of corrected table counts per dish (column sums of m-bar)
    """
    n_states = counts.shape[1]
    concentration = np.vstack((alpha * beta + rho * np.eye(n_states), alpha * beta))
    tables = np.zeros_like(counts)
    for j, k in zip(*np.nonzero(counts)):
        n = int(counts[j, k])
        a = concentration[j, k]
        tables[j, k] = 1 + int(np.sum(rng.random(n - 1) < a / (a + np.arange(1, n))))

    if rho > 0:
        for j in range(n_states):
            if tables[j, j] > 0:
                override = rng.binomial(tables[j, j], rho / (rho + alpha * beta[j]))
                tables[j, j] -= override
    return tables.sum(axis=0)


def joint_log_likelihood(
    z: IntArray, s: IntArray, init_dist: FloatArray, pi: FloatArray, log_psi: FloatArray, logliks: FloatArray
) -> float:
    """log p(x, z, s | parameters) for one sample."""
    index = np.arange(z.shape[0])
    value = _safe_log(init_dist)[z[0]]
    value += np.sum(_safe_log(pi)[z[:-1], z[1:]])
    value += np.sum(log_psi[z, s] + logliks[index, z, s])
    return float(value)


def ward_initial_states(features: ArrayLike, max_states: int) -> IntArray:
    """Cluster segments by Ward linkage, cutting where the merge height jumps most.

    Cuts into 2 .. min(max_states, n - 1) clusters are compared by the ratio
    of the lowest removed merge height to the highest kept one. A bag of
    identical segments (or one too short to compare cuts) stays in a single
    cluster.

    Returns:
        Cluster ids in [0, max_states), one per segment
    """
    data = np.asarray(features, dtype=np.float64)
    n = data.shape[0]
    single = np.zeros(n, dtype=np.int64)
    limit = min(max_states, n - 1)
    if limit < 2:
        return single
    tree = linkage(data, method="ward")
    heights = tree[:, 2]
    if heights[-1] <= 0.0:
        return single
    counts = np.arange(2, limit + 1)
    kept = np.maximum(heights[n - counts - 1], SCALE_FLOOR * heights[-1])
    ratios = heights[n - counts] / kept
    n_clusters = int(counts[np.argmax(ratios)])
    labels = fcluster(tree, n_clusters, criterion="maxclust")
    return np.asarray(labels - 1, dtype=np.int64)


# ---------------------------------------------------------------------------
# Sampler
# ---------------------------------------------------------------------------


class StickyHDPHMMSampler:
    """Weak-limit blocked Gibbs sampler over one bag.

    The sampler owns its random stream and state; it never touches shared
    mutable data, so independent instances can run concurrently.

    Example:
        sampler = StickyHDPHMMSampler(features, PartitionConfig(seed=3))
        result = sampler.run()
    """

    def __init__(self, features: ArrayLike, config: PartitionConfig) -> None:
        """Initialize the sampler state.

        With ``SamplerInit.WARD`` every Ward cluster of the bag starts as its
        own scene in component 0; with ``SamplerInit.RANDOM`` scenes and
        components are drawn uniformly from the sampler's stream.

        Args:
            features: n x M matrix, n >= 2
            config: Sampler configuration
        """
        data = np.asarray(features, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 2:
            raise ArgumentError(f"Partitioning needs at least 2 segments, got shape {data.shape}")
        self._features = data
        self._config = config
        self._prior = config.emission_prior or NIWPrior.from_data(data)
        if self._prior.dim != data.shape[1]:
            raise ArgumentError(f"Emission prior has dimension {self._prior.dim}, bag has {data.shape[1]}")
        self._rng = np.random.default_rng(config.seed)

        n_states, n_components = config.max_states, config.max_components
        if config.init is SamplerInit.RANDOM:
            self.z = self._rng.integers(n_states, size=data.shape[0]).astype(np.int64)
            self.s = self._rng.integers(n_components, size=data.shape[0]).astype(np.int64)
        else:
            self.z = ward_initial_states(data, n_states)
            self.s = np.zeros(data.shape[0], dtype=np.int64)
        self.beta = sample_gem(config.gamma, n_states, self._rng)
        self.pi = np.full((n_states, n_states), 1.0 / n_states)
        self.psi = np.full((n_states, n_components), 1.0 / n_components)
        if n_components > 1:
            self.psi = np.vstack([sample_gem(config.tau, n_components - 1, self._rng) for _ in range(n_states)])
        self.emissions: dict[ComponentKey, GaussianComponent] = {}
        self.trace: list[float] = []

    @property
    def config(self) -> PartitionConfig:
        return self._config

    @property
    def prior(self) -> NIWPrior:
        return self._prior

    def _init_dist(self) -> FloatArray:
        folded = fold_remainder(self.beta, self._config.max_states)
        return folded / folded.sum()

    def _sample_beta(self) -> None:
        config = self._config
        n_states = config.max_states
        counts = transition_counts(self.z, n_states)
        tables = sample_transition_tables(
            counts, fold_remainder(self.beta, n_states), config.alpha, config.rho, self._rng
        )
        prior = config.gamma / (n_states + 1)
        self.beta = sample_dirichlet(np.append(tables + prior, prior), self._rng)

    def _sample_pi(self) -> None:
        config = self._config
        n_states = config.max_states
        counts = transition_counts(self.z, n_states)
        folded = fold_remainder(self.beta, n_states)
        self.pi = np.vstack(
            [
                sample_sticky_transition_row(folded, j, config.alpha, config.rho, self._rng, counts=counts[j])
                for j in range(n_states)
            ]
        )

    def _sample_psi(self) -> None:
        config = self._config
        n_components = config.max_components
        occupancy = np.zeros((config.max_states, n_components))
        np.add.at(occupancy, (self.z, self.s), 1.0)
        prior = config.tau / n_components
        self.psi = np.vstack([sample_dirichlet(row + prior, self._rng) for row in occupancy])

    def sweep(self) -> float:
        """Run one full Gibbs sweep and return the joint log-likelihood."""
        config = self._config
        self._sample_beta()
        self._sample_pi()
        self._sample_psi()
        self.emissions = sample_emission_params(
            self._features, self.z, self.s, self._prior, self._rng, config.max_states, config.max_components
        )

        logliks = component_logliks(self._features, self.emissions, config.max_states, config.max_components)
        log_psi = _safe_log(self.psi)
        state_logliks = logsumexp(log_psi[np.newaxis, :, :] + logliks, axis=2)
        init_dist = self._init_dist()

        self.z = forward_backward_sample_states(self.pi, state_logliks, init_dist, self._rng)
        self.s = _sample_components(self.z, log_psi, logliks, self._rng)

        value = joint_log_likelihood(self.z, self.s, init_dist, self.pi, log_psi, logliks)
        if not np.isfinite(value):
            raise NumericError("Joint log-likelihood is not finite")
        self.trace.append(value)
        return value

    def run(self) -> PartitionResult:
        """Run ``n_iters`` sweeps and return the final sample."""
        config = self._config
        logger.debug(
            "Starting Gibbs sampler: n=%d, L=%d, T=%d, iters=%d, seed=%d, init=%s, %d scenes occupied",
            self._features.shape[0],
            config.max_states,
            config.max_components,
            config.n_iters,
            config.seed,
            config.init.value,
            len(np.unique(self.z)),
        )
        for iteration in range(config.n_iters):
            value = self.sweep()
            if iteration == config.burn_in:
                logger.debug("Burn-in complete at iteration %d (loglik %.3f)", iteration, value)

        result = PartitionResult(
            z=self.z.copy(),
            s=self.s.copy(),
            beta=self.beta.copy(),
            pi=self.pi.copy(),
            psi=self.psi.copy(),
            emissions=dict(self.emissions),
            log_likelihood_trace=np.asarray(self.trace),
        )
        logger.debug("Gibbs sampler finished with kappa=%d", result.kappa_count)
        return result


def run_gibbs(features: ArrayLike, config: PartitionConfig) -> PartitionResult:
    """Partition a bag's segments into scenes and sub-scenes.

    Args:
        features: n x M segment features of one bag (n >= 2)
        config: Sampler configuration; fully determines the result

    Returns:
        The final post-burn-in sample with its log-likelihood trace
    """
    return StickyHDPHMMSampler(features, config).run()


def run_gibbs_many(
    features: Sequence[ArrayLike], configs: Sequence[PartitionConfig], threads: int = 1
) -> list[PartitionResult]:
    """Partition independent bags, optionally on a thread pool.

    Results come back in input order and each bag's sampler is driven only by
    its own config, so the output does not depend on ``threads``.
    """
    if len(features) != len(configs):
        raise ArgumentError(f"Got {len(features)} bags for {len(configs)} configs")
    if threads <= 1 or len(features) <= 1:
        return [run_gibbs(bag, config) for bag, config in zip(features, configs)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run_gibbs, features, configs))

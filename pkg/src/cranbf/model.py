"""Random C-RAN scenarios, imperfect channel estimates and design problems.

Channels follow a distance path-loss law with log-normal shadowing (one draw
per RRH-UE link) and Rayleigh small-scale fading. Estimates are produced by
subtracting a Gaussian error from the true channel, and the resulting problem
is normalised so that every receiver noise power equals one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "SystemParams",
    "Scenario",
    "ChannelKnowledge",
    "DesignProblem",
    "GeometryError",
    "InfeasibleDrawError",
    "noise_power_watt",
    "sample_positions",
    "generate_channels",
    "generate_estimates",
    "assemble_problem",
    "sample_feasible_problem",
    "trial_rng",
]

_MAX_GEOMETRY_ATTEMPTS = 10**6


class GeometryError(RuntimeError):
    """Raised when no admissible RRH/UE placement is found."""


class InfeasibleDrawError(RuntimeError):
    """Raised when no feasible problem is drawn within the attempt budget."""


@dataclass(frozen=True)
class SystemParams:
    """Scenario and cost constants; defaults are the reference simulation setup."""

    K: int = 3
    N: int = 3
    L: int = 2
    gamma_db: float = 5.0
    pt_watt: float = 10.0
    gamma_ch: float = 0.01
    eps1: float = 5.0
    eps2: float = 2.0
    noise_dbm: float = -95.0
    cell_radius_km: float = 0.5
    min_dist_km: float = 0.05
    pathloss_a: float = 128.1
    pathloss_b: float = 37.6
    shadow_std_db: float = 10.0
    # read shadow_std_db as a variance in dB^2 instead of a standard deviation
    shadow_db_is_variance: bool = False

    def __post_init__(self):
        if min(self.K, self.N, self.L) < 1:
            raise ValueError("K, N and L must all be at least 1")
        if self.pt_watt <= 0:
            raise ValueError("pt_watt must be positive")
        if self.gamma_ch < 0:
            raise ValueError("gamma_ch must be nonnegative")
        if self.eps1 <= 0 or self.eps2 <= 0:
            raise ValueError("eps1 and eps2 must be positive")
        if self.shadow_std_db < 0:
            raise ValueError("shadow_std_db must be nonnegative")
        if not 0 <= self.min_dist_km < self.cell_radius_km:
            raise ValueError("need 0 <= min_dist_km < cell_radius_km")

    @property
    def gamma(self) -> float:
        return 10.0 ** (self.gamma_db / 10.0)

    @property
    def shadow_sigma_db(self) -> float:
        return np.sqrt(self.shadow_std_db) if self.shadow_db_is_variance else self.shadow_std_db

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


def noise_power_watt(noise_dbm: float) -> float:
    return 10.0 ** ((noise_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class Scenario:
    """Node placement (km) and true channels, shape ``(K, N, L)``."""

    rrh_positions: np.ndarray
    ue_positions: np.ndarray
    true_channels: np.ndarray | None = None

    @property
    def distances(self) -> np.ndarray:
        """RRH-UE distances, shape ``(K, N)``."""
        diff = self.ue_positions[:, None, :] - self.rrh_positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)


@dataclass(frozen=True)
class ChannelKnowledge:
    """Estimates ``h_hat`` of shape ``(K, N, L)`` and per-link error variances ``(K, N)``."""

    estimates: np.ndarray
    err_var: np.ndarray


@dataclass(frozen=True)
class DesignProblem:
    """Noise-normalised beamforming design problem.

    ``h_hat`` has shape ``(K, N, L)``; ``err_var`` holds the normalised
    per-component error variances ``(K, N)``. The diagonal error covariance
    ``D_k`` repeats ``err_var[k, n]`` over the ``L`` antennas of RRH ``n``.
    """

    h_hat: np.ndarray
    err_var: np.ndarray
    gamma: np.ndarray
    sigma_sq: np.ndarray
    rate: np.ndarray
    pt_watt: float
    eps1: float
    eps2: float
    noise_watt: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def K(self) -> int:
        return self.h_hat.shape[0]

    @property
    def N(self) -> int:
        return self.h_hat.shape[1]

    @property
    def L(self) -> int:
        return self.h_hat.shape[2]

    @property
    def h_stacked(self) -> np.ndarray:
        """``(K, N*L)`` array whose row ``k`` is ``[h_k1; ...; h_kN]``."""
        return self.h_hat.reshape(self.K, self.N * self.L)

    @property
    def d_diag(self) -> np.ndarray:
        """Diagonals of ``D_k`` as a ``(K, N*L)`` array."""
        return np.repeat(self.err_var, self.L, axis=1)

    @property
    def d_k_const(self) -> np.ndarray:
        return self.sigma_sq * self.gamma

    def h_tilde(self, k: int) -> np.ndarray:
        """``h_k h_k^H + D_k``."""
        h = self.h_stacked[k]
        return np.outer(h, h.conj()) + np.diag(self.d_diag[k])


def sample_positions(params: SystemParams, rng: np.random.Generator) -> Scenario:
    """Drop RRHs and UEs uniformly on the cell disk, rejecting close pairs."""
    R = params.cell_radius_km

    def disk(count):
        r = R * np.sqrt(rng.random(count))
        phi = 2.0 * np.pi * rng.random(count)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi)])

    for _ in range(_MAX_GEOMETRY_ATTEMPTS):
        geo = Scenario(disk(params.N), disk(params.K))
        if np.all(geo.distances >= params.min_dist_km):
            return geo
    raise GeometryError(
        f"no placement with all distances >= {params.min_dist_km} km "
        f"after {_MAX_GEOMETRY_ATTEMPTS} attempts")


def pathloss_db(d_km, params: SystemParams):
    return params.pathloss_a + params.pathloss_b * np.log10(d_km)


def generate_channels(geometry: Scenario, params: SystemParams,
                      rng: np.random.Generator) -> Scenario:
    """Attach true channels ``h_kn = g_kn v_kn`` to a placement."""
    K, N, L = params.K, params.N, params.L
    shadow = rng.normal(0.0, params.shadow_sigma_db, size=(K, N))
    gain_db = -pathloss_db(geometry.distances, params) - shadow
    amp = 10.0 ** (gain_db / 20.0)
    v = (rng.standard_normal((K, N, L)) + 1j * rng.standard_normal((K, N, L))) / np.sqrt(2.0)
    return replace(geometry, true_channels=amp[:, :, None] * v)


def generate_estimates(scenario: Scenario, params: SystemParams,
                       rng: np.random.Generator) -> ChannelKnowledge:
    """Estimates ``h_hat = h - dh`` with ``dh ~ CN(0, err_var I)``."""
    h = scenario.true_channels
    err_var = params.gamma_ch * np.sum(np.abs(h) ** 2, axis=-1) / params.L
    noise = (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)) / np.sqrt(2.0)
    dh = np.sqrt(err_var)[:, :, None] * noise
    return ChannelKnowledge(h - dh, err_var)


def assemble_problem(knowledge: ChannelKnowledge, params: SystemParams) -> DesignProblem:
    """Build the design problem, dividing channels by the noise amplitude.

    SINR is invariant under the joint scaling of channels and noise, while
    beamformer powers remain in watts.
    """
    noise = noise_power_watt(params.noise_dbm)
    K = knowledge.estimates.shape[0]
    gamma = np.full(K, params.gamma)
    return DesignProblem(
        h_hat=knowledge.estimates / np.sqrt(noise),
        err_var=knowledge.err_var / noise,
        gamma=gamma,
        sigma_sq=np.ones(K),
        rate=np.log2(1.0 + gamma),
        pt_watt=float(params.pt_watt),
        eps1=float(params.eps1),
        eps2=float(params.eps2),
        noise_watt=noise,
    )


def trial_rng(master_seed: int, sweep_index: int = 0, trial_index: int = 0) -> np.random.Generator:
    """Independent stream per (master seed, sweep point, trial)."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, sweep_index, trial_index]))


def sample_feasible_problem(params: SystemParams, rng: np.random.Generator,
                            max_attempts: int = 1000) -> tuple[Scenario, DesignProblem]:
    """Draw scenarios until the full-cooperation power minimisation is feasible."""
    from .bounds import necessary_condition_holds
    from .core import LinkMatrix, solve_p2

    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    for attempt in range(max_attempts):
        scenario = generate_channels(sample_positions(params, rng), params, rng)
        problem = assemble_problem(generate_estimates(scenario, params, rng), params)
        if not necessary_condition_holds(problem):
            continue
        report = solve_p2(problem, LinkMatrix.full(params.K, params.N))
        if report.feasible:
            problem.meta["attempts"] = attempt + 1
            return scenario, problem
    raise InfeasibleDrawError(f"no feasible draw in {max_attempts} attempts")

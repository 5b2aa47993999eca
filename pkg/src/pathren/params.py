"""Shared parameter records, result containers and error types."""

from dataclasses import dataclass, field, replace
import numpy as np

# --- error taxonomy --------------------------------------------------------


class PathrenError(Exception):
    """Base class for all package errors."""


class SingularPoint(PathrenError):
    """Kernel requested at a point where it diverges."""


class QuadratureFailure(PathrenError):
    """Panel quadrature could not reach the requested tolerance in budget."""


class BudgetExceeded(PathrenError):
    """An evaluation exceeded its sample or node budget."""


class InvalidGrid(PathrenError):
    """Time grid or refinement request is inconsistent."""


class RouteForbidden(PathrenError):
    """Evaluation route not admissible for these parameters."""


class ProposalMismatch(PathrenError):
    """Sampler proposal does not match the test function."""


class NonFiniteWeight(PathrenError):
    """A Monte-Carlo weight overflowed or produced NaN."""


class NonPositiveEstimate(PathrenError):
    """Logarithm requested of a non-positive Monte-Carlo estimate."""


class ProfileNotAdmissible(PathrenError):
    """Boundary profile fails the finite-norm admissibility check."""


class PreflightFailed(PathrenError):
    """A CLI run aborted during its preflight validation stage."""


# --- model parameters ------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the pair-interaction model.

    Attributes
    ----------
    eps : float
        Ultraviolet regulator strength; eps=0 is the removed-regulator case.
    lam : float
        Infrared cutoff radius in momentum space (modes |k| < lam dropped).
    g : float
        Coupling strength.
    n_particles : int
        Number of particles.
    nu : float
        Mass parameter of the dispersion (used when ``dispersion='massive'``).
    kappa : float
        Scaling parameter of the stiff-field family; 1.0 in the plain model.
    dispersion : str
        'massless' (omega=|k|) or 'massive' (omega=sqrt(|k|^2+nu^2)).
    fourier_norm : str
        'plain' (no prefactor) or 'inv2pi3' ((2*pi)^-3 in front of k-integrals).
    """

    eps: float = 0.0
    lam: float = 1.0
    g: float = 1.0
    n_particles: int = 1
    nu: float = 0.0
    kappa: float = 1.0
    dispersion: str = "massless"
    fourier_norm: str = "plain"

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.dispersion not in ("massless", "massive"):
            raise ValueError(f"unknown dispersion {self.dispersion!r}")
        if self.fourier_norm not in ("plain", "inv2pi3"):
            raise ValueError(f"unknown fourier_norm {self.fourier_norm!r}")
        if self.dispersion == "massive" and self.nu <= 0:
            raise ValueError("massive dispersion needs nu > 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")

    def with_eps(self, eps):
        return replace(self, eps=eps)

    @property
    def fourier_prefactor(self):
        return 1.0 if self.fourier_norm == "plain" else (2.0 * np.pi) ** -3


def scaled_params(eps=0.0, g=1.0, n_particles=1, nu=0.5, kappa=1.0, lam=0.0):
    """Convenience constructor for the stiff-field (massive, scaled) family."""
    return ModelParams(eps=eps, lam=lam, g=g, n_particles=n_particles, nu=nu,
                       kappa=kappa, dispersion="massive", fourier_norm="inv2pi3")


# --- boundary profiles -------------------------------------------------------


@dataclass(frozen=True)
class BoundaryProfile:
    """Radial Gaussian profile for the boundary coupling, rho_hat(k) = a e^{-(w|k|)^2/2}.

    ``width`` must be positive so that the profile has finite coupling norm
    (the |rho_hat|^2/omega integral converges).
    """

    width: float
    amplitude: float = 1.0

    def hat(self, r):
        return self.amplitude * np.exp(-0.5 * (self.width * r) ** 2)

    @property
    def is_zero(self):
        return self.amplitude == 0.0

    def check_admissible(self):
        if not (self.width > 0.0) or not np.isfinite(self.width):
            raise ProfileNotAdmissible("profile width must be positive and finite")
        if not np.isfinite(self.amplitude):
            raise ProfileNotAdmissible("profile amplitude must be finite")


# --- quadrature controls ---------------------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    """Controls for the radial panel quadrature.

    Attributes
    ----------
    rel_tol : float
        Relative tolerance target for each kernel value.
    r_max_policy : str
        Truncation-radius rule; 'default' is lam + min(40/max(|t|,d), 8/sqrt(max(eps,d^2)))
        with d=1e-6, capped by the oscillatory route when |x| is resolved.
    panel_rule : str
        Nested panel rule ('cc33': 33-point Clenshaw-Curtis with embedded 17).
    oscillation_panel : float
        Oscillatory panel length as a fraction of pi/|x| (1.0 = half period).
    small_x_threshold : float
        Below this |x| the sin(r|x|)/|x| factor is replaced by its even series.
    abs_floor : float
        Absolute error floor: panels stop refining below it.
    panel_budget : int
        Maximum number of panels per integral before QuadratureFailure.
    """

    rel_tol: float = 1e-9
    r_max_policy: str = "default"
    panel_rule: str = "cc33"
    oscillation_panel: float = 1.0
    small_x_threshold: float = 1e-8
    abs_floor: float = 1e-13
    panel_budget: int = 4096


@dataclass(frozen=True)
class KernelValue:
    """A kernel evaluation with its accuracy bookkeeping."""

    value: float
    est_error: float
    truncation_radius: float

    def __float__(self):
        return float(self.value)


# --- path containers -------------------------------------------------------


@dataclass(frozen=True)
class RngSpec:
    """Counter-based RNG identity: (seed, stream) pair, algorithm pinned."""

    seed: int = 0
    stream_id: int = 0
    algorithm_id: str = "philox4x64"

    def __post_init__(self):
        if self.algorithm_id != "philox4x64":
            raise ValueError(f"unsupported rng algorithm {self.algorithm_id!r}")


@dataclass(frozen=True)
class TimeGrid:
    """Symmetric uniform grid on [-T, T] with 2^m steps.

    ``times`` has n_steps+1 entries; ``tau`` is the interaction window width
    used by the split action route (tau = t_horizon selects the full-triangle
    decomposition).
    """

    t_horizon: float
    n_steps: int
    tau: float
    times: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.t_horizon <= 0:
            raise InvalidGrid("t_horizon must be > 0")
        m = self.n_steps
        if m < 2 or (m & (m - 1)) != 0:
            raise InvalidGrid("n_steps must be a power of two >= 2")
        if not (0 < self.tau <= self.t_horizon):
            raise InvalidGrid("tau must lie in (0, t_horizon]")
        t = np.linspace(-self.t_horizon, self.t_horizon, self.n_steps + 1)
        object.__setattr__(self, "times", t)

    @property
    def dt(self):
        return 2.0 * self.t_horizon / self.n_steps

    @property
    def full_triangle(self):
        """True when tau = T: endpoint window covers the whole upper triangle."""
        return abs(self.tau - self.t_horizon) <= 1e-12 * self.t_horizon


@dataclass
class PathEnsemble:
    """A batch of Brownian paths on a common grid.

    ``positions`` has shape (n_paths, n_times, n_particles, 3); start points
    are stored separately so refinement and restarts can re-anchor exactly.
    ``lineage`` records how the ensemble was produced (sampling/refinement).
    """

    grid: TimeGrid
    n_paths: int
    start_points: np.ndarray
    positions: np.ndarray
    rng_spec: RngSpec
    lineage: tuple = ()

    @property
    def n_particles(self):
        return self.positions.shape[2]

    def increments(self):
        return np.diff(self.positions, axis=1)

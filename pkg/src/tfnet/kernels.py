"""Kernel-function families for the time-frequency convolutional layer.

Each family generates a complex discrete kernel from a handful of control
parameters (center frequency f, chirp rate alpha, or wavelet scale s) on a
fixed integer grid.  The control parameters are the only trainable weights
of the layer, each confined to a hard box:

    f     in [0, 0.5)      (normalized frequency, Nyquist-meaningful range)
    alpha in [-0.005, 0.005]
    s     in [0.4, 10]

Families
--------
sttf       Gaussian envelope (sigma=10) times exp(j*2*pi*f*n), n in -25..25.
chirplet   sttf with an extra linear frequency-modulation term alpha;
           alpha=0 reduces to sttf exactly.
morlet     scaled mother window (1/sqrt(s)) * Psi(n/s) on n in -150..150,
           Psi(m) = exp(-(m/10)^2/2) * exp(j*2*pi*0.2*m); center frequency
           0.2/s.
laplace    same mother window and scaling as morlet but on the one-sided
           grid n in 0..150 (asymmetry comes from the one-sided support).
random     unconstrained raw taps (real and imaginary), trained like plain
           convolution weights; only legal in the random-kernel ablation.

The complex-exponential sign is positive for every family; for real inputs
the modulus feature map is invariant under kernel conjugation, so the
choice is observationally neutral and keeps chirplet(alpha=0) == sttf.
"""

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from tfnet.seeding import derive_rng

F_MAX = 0.5 - 1e-6
ALPHA_MAX = 0.005
S_MIN, S_MAX = 0.4, 10.0
ENVELOPE_SIGMA = 10.0
MOTHER_FREQ = 0.2


class ConstraintError(ValueError):
    """A kernel control parameter lies outside its hard box."""


class KernelFamily(str, Enum):
    STTF = "sttf"
    CHIRPLET = "chirplet"
    MORLET = "morlet"
    LAPLACE = "laplace"
    RANDOM = "random"


PARAM_NAMES = {
    KernelFamily.STTF: ("f",),
    KernelFamily.CHIRPLET: ("f", "alpha"),
    KernelFamily.MORLET: ("s",),
    KernelFamily.LAPLACE: ("s",),
}


@dataclass(frozen=True)
class KernelGrid:
    """Integer sample grid a kernel family is evaluated on."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return int(self.indices.size)

    def __eq__(self, other) -> bool:
        return isinstance(other, KernelGrid) and np.array_equal(self.indices, other.indices)


def default_grid(family: KernelFamily) -> KernelGrid:
    family = KernelFamily(family)
    if family in (KernelFamily.STTF, KernelFamily.CHIRPLET, KernelFamily.RANDOM):
        return KernelGrid(np.arange(-25, 26))
    if family is KernelFamily.MORLET:
        return KernelGrid(np.arange(-150, 151))
    if family is KernelFamily.LAPLACE:
        return KernelGrid(np.arange(0, 151))
    raise ValueError(f"unknown family {family!r}")


@dataclass
class KernelParams:
    """Per-channel control parameters for one kernel family.

    ``theta`` has shape (n_channels, P): P=1 for sttf (f) and the wavelets
    (s), P=2 for chirplet (f, alpha), P=2K for random (real taps then
    imaginary taps).
    """

    family: KernelFamily
    theta: np.ndarray
    grid: KernelGrid = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.family = KernelFamily(self.family)
        if self.grid is None:
            self.grid = default_grid(self.family)
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=np.float64))
        if not np.all(np.isfinite(self.theta)):
            raise ConstraintError("kernel parameters must be finite")
        expected = n_params(self.family, len(self.grid))
        if self.theta.shape[1] != expected:
            raise ValueError(
                f"{self.family.value} expects {expected} parameters per channel, "
                f"got {self.theta.shape[1]}"
            )

    @property
    def n_channels(self) -> int:
        return self.theta.shape[0]

    def copy(self) -> "KernelParams":
        return replace(self, theta=self.theta.copy())


def n_params(family: KernelFamily, kernel_len: int) -> int:
    if family is KernelFamily.RANDOM:
        return 2 * kernel_len
    return len(PARAM_NAMES[family])


def param_names(family: KernelFamily, kernel_len: int) -> tuple[str, ...]:
    if family is KernelFamily.RANDOM:
        return tuple(f"w_re_{i}" for i in range(kernel_len)) + tuple(
            f"w_im_{i}" for i in range(kernel_len)
        )
    return PARAM_NAMES[family]


def _check_grid(family: KernelFamily, grid: KernelGrid) -> np.ndarray:
    if family is not KernelFamily.RANDOM and grid != default_grid(family):
        raise ValueError(f"grid does not match family {family.value}")
    return grid.indices.astype(np.float64)


def _check_theta(family: KernelFamily, theta: np.ndarray):
    if not np.all(np.isfinite(theta)):
        raise ConstraintError("kernel parameters must be finite")
    if family in (KernelFamily.STTF, KernelFamily.CHIRPLET):
        f = theta[..., 0]
        if np.any(f < 0.0) or np.any(f >= 0.5):
            raise ConstraintError(f"frequency out of [0, 0.5): {f}")
    if family is KernelFamily.CHIRPLET:
        a = theta[..., 1]
        if np.any(np.abs(a) > ALPHA_MAX):
            raise ConstraintError(f"chirp rate out of [-{ALPHA_MAX}, {ALPHA_MAX}]: {a}")
    if family in (KernelFamily.MORLET, KernelFamily.LAPLACE):
        s = theta[..., 0]
        if np.any(s < S_MIN) or np.any(s > S_MAX):
            raise ConstraintError(f"scale out of [{S_MIN}, {S_MAX}]: {s}")


def _mother(m: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * (m / ENVELOPE_SIGMA) ** 2) * np.exp(2j * np.pi * MOTHER_FREQ * m)


def _mother_deriv(m: np.ndarray) -> np.ndarray:
    return (-m / ENVELOPE_SIGMA**2 + 2j * np.pi * MOTHER_FREQ) * _mother(m)


def evaluate_kernel(family: KernelFamily, theta, grid: KernelGrid | None = None) -> np.ndarray:
    """Complex kernel taps for one channel's parameters."""
    family = KernelFamily(family)
    if grid is None:
        grid = default_grid(family)
    n = _check_grid(family, grid)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    _check_theta(family, theta)
    env = np.exp(-0.5 * (n / ENVELOPE_SIGMA) ** 2)
    if family is KernelFamily.STTF:
        (f,) = theta
        # phase grouped as (f*n) so a zero-rate chirplet reproduces this bitwise
        return env * np.exp(2j * np.pi * (f * n))
    if family is KernelFamily.CHIRPLET:
        f, alpha = theta
        return env * np.exp(2j * np.pi * (0.5 * alpha * n**2 + f * n))
    if family in (KernelFamily.MORLET, KernelFamily.LAPLACE):
        (s,) = theta
        return _mother(n / s) / np.sqrt(s)
    if family is KernelFamily.RANDOM:
        K = len(grid)
        if theta.size != 2 * K:
            raise ValueError("random kernel expects 2*K raw taps")
        return theta[:K] + 1j * theta[K:]
    raise ValueError(f"unknown family {family!r}")


def kernel_param_grad(family: KernelFamily, theta, grid: KernelGrid | None = None) -> np.ndarray:
    """Analytic d(kernel)/d(theta_p), shape (P, K) complex."""
    family = KernelFamily(family)
    if grid is None:
        grid = default_grid(family)
    n = _check_grid(family, grid)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    psi = evaluate_kernel(family, theta, grid)
    if family is KernelFamily.STTF:
        return (2j * np.pi * n * psi)[None, :]
    if family is KernelFamily.CHIRPLET:
        return np.stack([2j * np.pi * n * psi, 1j * np.pi * n**2 * psi])
    if family in (KernelFamily.MORLET, KernelFamily.LAPLACE):
        (s,) = theta
        d = -psi / (2.0 * s) - (n / s**2) * _mother_deriv(n / s) / np.sqrt(s)
        return d[None, :]
    if family is KernelFamily.RANDOM:
        K = len(grid)
        eye = np.eye(K)
        return np.concatenate([eye, 1j * eye]).astype(np.complex128)
    raise ValueError(f"unknown family {family!r}")


def evaluate_kernels(params: KernelParams) -> np.ndarray:
    """Kernel bank for all channels, shape (n_channels, K) complex."""
    return np.stack(
        [evaluate_kernel(params.family, params.theta[c], params.grid) for c in range(params.n_channels)]
    )


def clamp_params(params: KernelParams) -> KernelParams:
    """Project every control parameter onto its closed box (total, idempotent)."""
    theta = params.theta.copy()
    fam = params.family
    if fam in (KernelFamily.STTF, KernelFamily.CHIRPLET):
        theta[:, 0] = np.clip(theta[:, 0], 0.0, F_MAX)
    if fam is KernelFamily.CHIRPLET:
        theta[:, 1] = np.clip(theta[:, 1], -ALPHA_MAX, ALPHA_MAX)
    if fam in (KernelFamily.MORLET, KernelFamily.LAPLACE):
        theta[:, 0] = np.clip(theta[:, 0], S_MIN, S_MAX)
    return replace(params, theta=theta)


def init_params(
    family: KernelFamily,
    n_channels: int,
    seed: int = 0,
    grid: KernelGrid | None = None,
) -> KernelParams:
    """Per-channel parameters whose focusing frequencies tile the usable band.

    sttf/chirplet channels get center frequencies at the midpoints of
    n_channels equal slices of [0, 0.5]; wavelet channels get scales whose
    center frequencies 0.2/s tile [0.02, 0.5] the same way; random channels
    draw i.i.d. uniform taps in +-sqrt(6/K).
    """
    family = KernelFamily(family)
    if n_channels < 1:
        raise ValueError(f"n_channels must be >= 1, got {n_channels}")
    if grid is None:
        grid = default_grid(family)
    centers = (np.arange(n_channels) + 0.5) / n_channels
    if family is KernelFamily.STTF:
        theta = (0.5 * centers)[:, None]
    elif family is KernelFamily.CHIRPLET:
        theta = np.stack([0.5 * centers, np.zeros(n_channels)], axis=1)
    elif family in (KernelFamily.MORLET, KernelFamily.LAPLACE):
        freqs = 0.02 + (0.5 - 0.02) * centers
        theta = (MOTHER_FREQ / freqs)[:, None]
    elif family is KernelFamily.RANDOM:
        K = len(grid)
        bound = np.sqrt(6.0 / K)
        rng = derive_rng(seed, "kernel-init")
        theta = rng.uniform(-bound, bound, size=(n_channels, 2 * K))
    else:
        raise ValueError(f"unknown family {family!r}")
    return KernelParams(family=family, theta=theta, grid=grid)

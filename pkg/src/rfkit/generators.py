"""Synthetic datasets: sine manifold, calcium-imaging scenes, and forced 2-D vorticity."""

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .exceptions import DimensionError, NumericError, SolverDivergenceError
from .matrixio import ingest_matrix  # noqa: F401  (dataset plumbing lives with the generators)

CALCIUM_KERNEL_STD_FRAMES = 2.0
DEFAULT_FRAME_RATE = 10.0

_RADIUS_RETRIES = 100


@dataclass(frozen=True)
class SineManifoldSpec:
    """Complex exponential curve sampled at t_samples; ambient dimension 2 f_c + 1."""

    f_c: int
    t_samples: tuple = ()

    def __post_init__(self):
        if isinstance(self.f_c, bool) or not isinstance(self.f_c, (int, np.integer)):
            raise ValueError("f_c must be an integer")
        if self.f_c < 1:
            raise ValueError(f"f_c must be >= 1, got {self.f_c}")
        samples = tuple(float(t) for t in self.t_samples)
        if any(not 0.0 <= t < 1.0 for t in samples):
            raise ValueError("t_samples must lie in [0, 1)")
        object.__setattr__(self, "t_samples", samples)

    @property
    def n(self):
        return 2 * self.f_c + 1


def sine_manifold(spec, t):
    """Curve point y(t): entry per frequency k in [-f_c, f_c] is exp(i 2 pi k t)."""
    if not 0.0 <= t < 1.0:
        raise ValueError(f"t must lie in [0, 1), got {t}")
    k = np.arange(-spec.f_c, spec.f_c + 1)
    return np.exp(2j * np.pi * k * t)


def sine_manifold_dataset(spec):
    """Columns y(t) for every t in spec.t_samples, as an n x K matrix."""
    if not spec.t_samples:
        raise ValueError("spec.t_samples is empty")
    k = np.arange(-spec.f_c, spec.f_c + 1)
    t = np.asarray(spec.t_samples)
    return np.exp(2j * np.pi * np.outer(k, t))


@dataclass(frozen=True)
class CellScene:
    """Ground truth for a simulated calcium movie.

    profiles columns are vectorized (row-major) images with unit peak; traces
    rows are frames; events hold spike times in seconds per cell.
    """

    width: int
    height: int
    profiles: np.ndarray
    events: tuple
    traces: np.ndarray
    noise_sigma: float
    overlap_prob: float
    seed: int
    centers: np.ndarray
    radii: np.ndarray
    frame_rate: float = DEFAULT_FRAME_RATE

    def __post_init__(self):
        n = self.width * self.height
        n_cells = self.profiles.shape[1]
        if self.profiles.shape[0] != n:
            raise DimensionError(
                f"profiles have {self.profiles.shape[0]} pixels, grid holds {n}"
            )
        if self.traces.shape[1] != n_cells or len(self.events) != n_cells:
            raise DimensionError("profiles, traces, and events disagree on cell count")
        if self.centers.shape != (n_cells, 2) or self.radii.shape != (n_cells,):
            raise DimensionError("centers must be n_cells x 2 and radii length n_cells")
        if np.any(self.profiles < 0) or np.any(self.traces < -1e-12):
            raise ValueError("profiles and traces must be nonnegative")
        peaks = self.profiles.max(axis=0)
        if np.any(np.abs(peaks - 1.0) > 1e-9):
            raise ValueError("each profile must have unit peak")
        for times in self.events:
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("event times must be strictly increasing")

    @property
    def n_cells(self):
        return self.profiles.shape[1]

    @property
    def n_frames(self):
        return self.traces.shape[0]


def _draw_radius(rng, retries=_RADIUS_RETRIES):
    """Radius ~ Normal(1, 0.1), redrawn while nonpositive."""
    for _ in range(retries):
        r = rng.normal(1.0, 0.1)
        if r > 0:
            return float(r)
    raise NumericError(f"cell radius stayed nonpositive after {retries} draws")


def _gaussian_bump(height, width, center, radius):
    """Unit-peak Gaussian image truncated at 3 radius, flattened row-major."""
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    d2 = (rows - center[0]) ** 2 + (cols - center[1]) ** 2
    img = np.exp(-d2 / (2.0 * radius**2))
    img[d2 > (3.0 * radius) ** 2] = 0.0
    return (img / img.max()).reshape(-1)


def _draw_spike_times(rng, rate, refractory, duration):
    """Exponential inter-arrivals, gaps below the refractory period redrawn."""
    times = []
    t = 0.0
    while True:
        gap = rng.exponential(1.0 / rate)
        while gap < refractory:
            gap = rng.exponential(1.0 / rate)
        t += gap
        if t >= duration:
            return times
        times.append(t)


def temporal_kernel(std_frames=CALCIUM_KERNEL_STD_FRAMES):
    """Unit-peak Gaussian bump over frames, truncated at 3 std."""
    radius = math.ceil(3.0 * std_frames)
    j = np.arange(-radius, radius + 1)
    return np.exp(-(j**2) / (2.0 * std_frames**2))


def generate_cell_scene(
    width,
    height,
    n_cells,
    overlap_prob,
    rate,
    refractory,
    t_frames,
    noise_sigma,
    seed,
    frame_rate=DEFAULT_FRAME_RATE,
):
    """Simulate a calcium movie; returns (CellScene, movie) with movie width*height x t_frames.

    Cells are placed sequentially: radius ~ Normal(1, 0.1) pixels, center drawn
    within one radius of the previous cell's center with probability
    overlap_prob, else uniform over the image.  Spikes are exponential
    inter-arrivals (gaps under the refractory period redrawn) over
    t_frames / frame_rate seconds, convolved with a unit-peak Gaussian kernel.
    The movie is profiles . traces^T plus noise_sigma white noise.
    """
    if n_cells < 1:
        raise ValueError(f"n_cells must be >= 1, got {n_cells}")
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    if refractory < 0:
        raise ValueError(f"refractory must be nonnegative, got {refractory}")
    if not 0.0 <= overlap_prob <= 1.0:
        raise ValueError(f"overlap_prob must be in [0, 1], got {overlap_prob}")
    if t_frames < 1 or width < 1 or height < 1:
        raise ValueError("grid and frame counts must be positive")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be nonnegative, got {noise_sigma}")
    if frame_rate <= 0:
        raise ValueError(f"frame_rate must be positive, got {frame_rate}")

    rng = np.random.default_rng(seed)
    duration = t_frames / frame_rate
    kernel = temporal_kernel()

    profiles = np.empty((width * height, n_cells))
    centers = np.empty((n_cells, 2))
    radii = np.empty(n_cells)
    events = []
    traces = np.empty((t_frames, n_cells))
    for i in range(n_cells):
        radius = _draw_radius(rng)
        if i > 0 and rng.uniform() < overlap_prob:
            angle = rng.uniform(0.0, 2.0 * np.pi)
            dist = radius * math.sqrt(rng.uniform())
            center = centers[i - 1] + dist * np.array([math.sin(angle), math.cos(angle)])
            center = np.clip(center, 0.0, [height - 1.0, width - 1.0])
        else:
            center = np.array([rng.uniform(0.0, height), rng.uniform(0.0, width)])
        profiles[:, i] = _gaussian_bump(height, width, center, radius)
        centers[i] = center
        radii[i] = radius

        times = _draw_spike_times(rng, rate, refractory, duration)
        events.append(tuple(times))
        train = np.zeros(t_frames)
        for t in times:
            train[int(t * frame_rate)] += 1.0
        # full convolution sliced to centered-same so short movies keep their length
        radius = kernel.size // 2
        traces[:, i] = np.convolve(train, kernel)[radius : radius + t_frames]

    movie = profiles @ traces.T
    if noise_sigma > 0:
        movie = movie + noise_sigma * rng.standard_normal(movie.shape)
    scene = CellScene(
        width=width,
        height=height,
        profiles=profiles,
        events=tuple(events),
        traces=traces,
        noise_sigma=float(noise_sigma),
        overlap_prob=float(overlap_prob),
        seed=seed,
        centers=centers,
        radii=radii,
        frame_rate=float(frame_rate),
    )
    return scene, movie


def planar_manifold_dataset(n=200, k_samples=1000, seed=0, beta=16.0):
    """Random crinkled embedding of a flat 2-torus into R^n, one column per sample.

    Latent points are uniform on [0, 2 pi)^2; coordinates are random cosine
    features cos(w . u + b) with w ~ Normal(0, beta^2), scaled so columns have
    near-unit norm.  beta sets the crinkle frequency: the spectrum flattens as
    beta grows, which keeps the intrinsic 2-D structure out of any small set
    of principal directions.
    """
    if n < 2 or k_samples < 2:
        raise ValueError("need n >= 2 and k_samples >= 2")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    rng = np.random.default_rng(seed)
    latent = rng.uniform(0.0, 2.0 * np.pi, size=(2, k_samples))
    freqs = rng.normal(0.0, beta, size=(n, 2))
    offsets = rng.uniform(0.0, 2.0 * np.pi, size=(n, 1))
    return np.sqrt(2.0 / n) * np.cos(freqs @ latent + offsets)


def _grid_axes(grid):
    nx, ny = grid
    x = -np.pi + 2.0 * np.pi * np.arange(nx) / nx
    y = -np.pi + 2.0 * np.pi * np.arange(ny) / ny
    return np.meshgrid(x, y, indexing="ij")


def _forcing_grid(grid, phase):
    X, Y = _grid_axes(grid)
    numer = 0.075 * (np.sin(64.0 * X + phase) + np.sin(32.0 * Y + phase))
    denom = 1.0 + 0.25 * (np.cos(128.0 * X + phase) + np.cos(64.0 * Y + phase))
    return numer / denom


def forcing_field(grid, phase):
    """Static forcing evaluated on the [-pi, pi)^2 grid, flattened row-major as a column."""
    _validate_grid(grid)
    return _forcing_grid(grid, phase).reshape(-1, 1)


@dataclass(frozen=True)
class VorticityField:
    """Vorticity snapshots on a periodic grid, one flattened field per column."""

    grid: tuple
    omega: np.ndarray
    nu: float
    phase: float
    dt_out: float
    times: np.ndarray
    forcing_on: bool
    domain: tuple = ((-np.pi, np.pi), (-np.pi, np.pi))

    def __post_init__(self):
        n = self.grid[0] * self.grid[1]
        if self.omega.shape != (n, self.times.size):
            raise DimensionError(
                f"omega must be {n} x {self.times.size}, got {self.omega.shape}"
            )
        if not np.all(np.isfinite(self.omega)):
            raise ValueError("omega contains non-finite values")

    @property
    def n_snapshots(self):
        return self.times.size


def _validate_grid(grid):
    nx, ny = grid
    for n in (nx, ny):
        if n < 32 or (n & (n - 1)) != 0:
            raise ValueError(f"grid dims must be powers of two >= 32, got {grid}")


def default_initial_vorticity(grid):
    """Two Gaussian vortex patches side by side."""
    X, Y = _grid_axes(grid)
    return np.exp(-17.5 * (X - 0.45) ** 2 - 0.7 * Y**2) + np.exp(
        -17.5 * (X + 0.45) ** 2 - 0.7 * Y**2
    )


def solve_vorticity(grid, nu, phase, t_end, dt_out, forcing_on=True, initial_condition=None):
    """Integrate forced 2-D vorticity pseudo-spectrally; snapshots every dt_out from t=0.

    Diffusion and the Poisson solve (psi_hat = -omega_hat / k^2, zero mode 0)
    are spectral; advection (grad^perp psi) . grad omega is evaluated on the
    grid with 2/3-rule dealiasing applied to both its inputs and its output.
    Time stepping is adaptive Dormand-Prince at relative tolerance 1e-6.
    """
    _validate_grid(grid)
    nx, ny = grid
    if nu <= 0:
        raise ValueError(f"nu must be positive, got {nu}")
    if dt_out <= 0 or t_end <= 0 or dt_out > t_end:
        raise ValueError("need 0 < dt_out <= t_end")

    kx = np.fft.fftfreq(nx, d=1.0 / nx)[:, None]
    ky = np.fft.fftfreq(ny, d=1.0 / ny)[None, :]
    k2 = kx**2 + ky**2
    inv_k2 = np.zeros_like(k2)
    inv_k2[k2 > 0] = 1.0 / k2[k2 > 0]
    dealias = (np.abs(kx) <= nx // 3) & (np.abs(ky) <= ny // 3)

    if initial_condition is None:
        omega0 = default_initial_vorticity(grid)
    else:
        omega0 = np.asarray(initial_condition, dtype=float).reshape(nx, ny)
    force_hat = np.fft.fft2(_forcing_grid(grid, phase)) if forcing_on else None

    def rhs(t, y):
        # adaptive steppers loop forever on NaN states, so fail loudly here
        if not np.all(np.isfinite(y)):
            raise SolverDivergenceError("non-finite vorticity state", time=float(t))
        with np.errstate(over="ignore", invalid="ignore"):
            w_hat = y.view(np.complex128).reshape(nx, ny)
            w_cut = w_hat * dealias
            psi_hat = -w_cut * inv_k2
            u = np.fft.ifft2(-1j * ky * psi_hat).real
            v = np.fft.ifft2(1j * kx * psi_hat).real
            wx = np.fft.ifft2(1j * kx * w_cut).real
            wy = np.fft.ifft2(1j * ky * w_cut).real
            adv_hat = np.fft.fft2(u * wx + v * wy) * dealias
            d_hat = -nu * k2 * w_hat - adv_hat
            if force_hat is not None:
                d_hat = d_hat + force_hat
            return d_hat.ravel().view(np.float64)

    y0 = np.fft.fft2(omega0).ravel().view(np.float64).copy()
    count = int(math.floor(t_end / dt_out + 1e-9))
    times = np.minimum(dt_out * np.arange(count + 1), t_end)
    sol = scipy.integrate.solve_ivp(
        rhs, (0.0, t_end), y0, method="RK45", rtol=1e-6, atol=1e-9, t_eval=times
    )
    if not sol.success:
        reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise SolverDivergenceError(f"integration failed: {sol.message}", time=reached)

    omega = np.empty((nx * ny, times.size))
    for j in range(times.size):
        w_hat = np.ascontiguousarray(sol.y[:, j]).view(np.complex128).reshape(nx, ny)
        field = np.fft.ifft2(w_hat).real
        if not np.all(np.isfinite(field)):
            raise SolverDivergenceError("non-finite vorticity field", time=float(times[j]))
        omega[:, j] = field.reshape(-1)
    return VorticityField(
        grid=(nx, ny),
        omega=omega,
        nu=float(nu),
        phase=float(phase),
        dt_out=float(dt_out),
        times=times,
        forcing_on=bool(forcing_on),
    )

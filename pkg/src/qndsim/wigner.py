"""Phase-space maps of the pulse output and phonon-number reconstruction.

Two Wigner conventions are exposed side by side:

``paper-closed-form``
    The literal closed form for the protocol output state: a thermal
    mixture of Gaussian peaks with prefactor 1/(2*pi), unit vacuum
    quadrature variance, peak centers at n*A on the imaginary axis, and
    widths exp(-r) along Im / exp(+r) along Re.

``standard-numeric``
    The displaced-parity definition W(alpha) = (2/pi) tr[D(alpha) P
    D(alpha)^dag rho], evaluated numerically for an arbitrary density
    operator. Vacuum peaks at 2/pi and quadrature variances are
    exp(+-2r)/4.

Both conventions place the peak centers at n*A in these coordinates; they
differ in peak width and overall value scale. Reconstruction therefore
bins the Im-axis marginal around the shared centers, which makes the two
paths directly comparable without rescaling the axis.

The numeric path walks the grid with exact single-step displacement
operators instead of building D(alpha) per point. Each step is unitary,
so the evaluation cannot overflow even for strongly squeezed states where
a normally ordered expansion of D(alpha) would exceed double range.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import erfc

from . import fock, protocol

PAPER = "paper-closed-form"
STANDARD = "standard-numeric"

COVERAGE_SIGMAS = 5.0
RANK_TOL = 1e-13


class OverlapWarning(UserWarning):
    """Neighboring peaks overlap enough to leak mass between bins."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform rectangular grid in the complex plane, alpha = re + i*im."""

    re_min: float
    re_max: float
    re_count: int
    im_min: float
    im_max: float
    im_count: int

    def __post_init__(self) -> None:
        for lo, hi, count, name in (
            (self.re_min, self.re_max, self.re_count, "re"),
            (self.im_min, self.im_max, self.im_count, "im"),
        ):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"{name} axis bounds must be finite")
            if not hi > lo:
                raise ValueError(f"{name}_max must exceed {name}_min")
            if count < 2:
                raise ValueError(f"{name}_count must be at least 2")

    def re_axis(self) -> np.ndarray:
        return np.linspace(self.re_min, self.re_max, self.re_count)

    def im_axis(self) -> np.ndarray:
        return np.linspace(self.im_min, self.im_max, self.im_count)


@dataclass(frozen=True)
class WignerGrid:
    """Wigner values on a product grid; values[i, j] is W(re[j] + i*im[i])."""

    re_axis: np.ndarray
    im_axis: np.ndarray
    values: np.ndarray
    convention: str

    def integral(self) -> float:
        inner = np.trapezoid(self.values, self.re_axis, axis=1)
        return float(np.trapezoid(inner, self.im_axis))


@dataclass(frozen=True)
class Marginal:
    """Normalized Im-axis density obtained by integrating out Re(alpha)."""

    im_axis: np.ndarray
    density: np.ndarray
    convention: str
    raw_integral: float


@dataclass(frozen=True)
class PhononHistogram:
    probabilities: np.ndarray
    method: str
    leakage: float


def wigner_paper(params: protocol.ProtocolParams, spec: GridSpec) -> WignerGrid:
    """Closed-form Wigner map of the pulse output (``paper-closed-form``).

    The grid must cover every populated peak center plus COVERAGE_SIGMAS
    standard deviations on both axes, otherwise the marginal would be
    silently truncated.
    """
    pn = fock.thermal_pn(params.N, params.phonon_dim())
    n_top = int(np.max(np.nonzero(pn > 0.0)[0]))
    sig_im = math.exp(-params.r)
    sig_re = math.exp(params.r)
    eps = 1e-9
    bounds = (
        (spec.re_min <= -COVERAGE_SIGMAS * sig_re + eps, "re_min"),
        (spec.re_max >= COVERAGE_SIGMAS * sig_re - eps, "re_max"),
        (spec.im_min <= -COVERAGE_SIGMAS * sig_im + eps, "im_min"),
        (spec.im_max >= n_top * params.A + COVERAGE_SIGMAS * sig_im - eps, "im_max"),
    )
    for ok, name in bounds:
        if not ok:
            raise ValueError(
                f"grid {name} does not cover the peak centers plus "
                f"{COVERAGE_SIGMAS:g} standard deviations"
            )

    re = spec.re_axis()
    im = spec.im_axis()
    g_re = np.exp(-0.5 * math.exp(-2.0 * params.r) * re**2)
    centers = params.A * np.arange(pn.size)
    # (im - nA)^2 for all peaks at once; rows index im, columns index n.
    quad = (im[:, None] - centers[None, :]) ** 2
    g_im = np.exp(-0.5 * math.exp(2.0 * params.r) * quad) @ pn
    values = np.outer(g_im, g_re) / (2.0 * math.pi)
    return WignerGrid(re, im, values, PAPER)


def _check_headroom(re: np.ndarray, im: np.ndarray, dim: int) -> None:
    extreme = np.max(np.abs(re)) ** 2 + np.max(np.abs(im)) ** 2
    if 4.0 * extreme > dim:
        raise fock.TruncationError(
            f"grid extreme |alpha|^2 = {extreme:.3g} exceeds the displacement "
            f"headroom dim/4 = {dim / 4:.3g}"
        )


def _displaced_parity_walk(
    psi: np.ndarray,
    corner: np.ndarray,
    step_re: np.ndarray,
    step_im: np.ndarray,
    shape: tuple[int, int],
) -> np.ndarray:
    """Parity expectation of D(-alpha) psi on the full grid, row by row."""
    n_im, n_re = shape
    dim = psi.shape[0]
    parity = 1.0 - 2.0 * (np.arange(dim) % 2)
    out = np.empty((n_im, n_re))
    row_state = corner @ psi
    for i in range(n_im):
        u = row_state
        for j in range(n_re):
            out[i, j] = parity @ (u.real**2 + u.imag**2)
            if j + 1 < n_re:
                u = step_re @ u
        if i + 1 < n_im:
            row_state = step_im @ row_state
    return out


def _walk_operators(re: np.ndarray, im: np.ndarray, dim: int):
    corner = fock.displacement(-complex(re[0], im[0]), dim, on_headroom="warn")
    step_re = fock.displacement(-(re[1] - re[0]), dim, on_headroom="warn")
    step_im = fock.displacement(-1j * (im[1] - im[0]), dim, on_headroom="warn")
    return corner, step_re, step_im


def wigner_numeric(rho: np.ndarray, spec: GridSpec) -> WignerGrid:
    """Displaced-parity Wigner map of an arbitrary state.

    Accepts a density matrix or a pure-state vector. Mixed states are
    expanded in their eigenbasis and each eigenvector is walked across the
    grid once.
    """
    rho = np.asarray(rho, dtype=complex)
    re = spec.re_axis()
    im = spec.im_axis()

    if rho.ndim == 1:
        pairs = [(1.0, rho)]
        dim = rho.shape[0]
    elif rho.ndim == 2 and rho.shape[0] == rho.shape[1]:
        dim = rho.shape[0]
        if np.max(np.abs(rho - rho.conj().T)) > 1e-8:
            raise ValueError("density operator must be Hermitian")
        vals, vecs = np.linalg.eigh(rho)
        if vals.min() < -1e-9 * max(vals.max(), 1.0):
            raise ValueError("density operator has a negative eigenvalue")
        cut = RANK_TOL * max(vals.max(), 0.0)
        pairs = [
            (float(vals[k]), vecs[:, k]) for k in range(dim) if vals[k] > cut
        ]
    else:
        raise ValueError("expected a state vector or a square density matrix")

    _check_headroom(re, im, dim)
    corner, step_re, step_im = _walk_operators(re, im, dim)
    values = np.zeros((im.size, re.size))
    for weight, vec in pairs:
        values += weight * _displaced_parity_walk(
            vec, corner, step_re, step_im, (im.size, re.size)
        )
    return WignerGrid(re, im, values * (2.0 / math.pi), STANDARD)


def wigner_numeric_protocol(
    params: protocol.ProtocolParams,
    spec: GridSpec,
    *,
    tail_sigmas: float = 12.0,
) -> WignerGrid:
    """Displaced-parity Wigner map of the pulse output state.

    Every phonon block of the output is the same squeezed vacuum
    translated to n*A on the imaginary axis, and the displaced-parity form
    is exactly covariant under displacements. The squeezed-vacuum Wigner
    patch is therefore walked once and accumulated at each populated
    center with its thermal weight, which keeps the field dimension
    independent of the phonon occupation.

    The Im axis must be a lattice that contains the peak centers: its
    spacing must divide A and im_min must be a multiple of the spacing.
    Each peak is patched out to tail_sigmas standard deviations.
    """
    re = spec.re_axis()
    im = spec.im_axis()
    h = (spec.im_max - spec.im_min) / (spec.im_count - 1)
    ratio = params.A / h
    base = -spec.im_min / h
    if abs(ratio - round(ratio)) > 1e-9 or abs(base - round(base)) > 1e-9:
        raise ValueError(
            "im axis must be a lattice containing the peak centers: the "
            "spacing must divide A and im_min must be a multiple of it"
        )

    sig = math.exp(-params.r) / 2.0
    half_rows = int(math.ceil(tail_sigmas * sig / h))
    dn = h * np.arange(-half_rows, half_rows + 1)
    extreme = np.max(np.abs(re)) ** 2 + dn[-1] ** 2
    dim = max(fock.squeeze_dim(params.r), int(math.ceil(4.0 * extreme))) + 64
    psi = fock.squeeze(params.r, dim)[:, 0]

    corner, step_re, step_im = _walk_operators(re, dn, dim)
    patch = (2.0 / math.pi) * _displaced_parity_walk(
        psi, corner, step_re, step_im, (dn.size, re.size)
    )

    pn = fock.thermal_pn(params.N, params.phonon_dim())
    values = np.zeros((im.size, re.size))
    for n, weight in enumerate(pn):
        center = int(round(base)) + n * int(round(ratio))
        lo = max(0, center - half_rows)
        hi = min(im.size, center + half_rows + 1)
        if lo >= hi:
            continue
        values[lo:hi] += weight * patch[lo - (center - half_rows) : hi - (center - half_rows)]
    return WignerGrid(re, im, values, STANDARD)


def marginal_P(grid: WignerGrid) -> Marginal:
    """Integrate out Re(alpha) and normalize the resulting Im density."""
    density = np.trapezoid(grid.values, grid.re_axis, axis=1)
    raw = float(np.trapezoid(density, grid.im_axis))
    if raw <= 0.0:
        raise ValueError("marginal has nonpositive total mass")
    return Marginal(grid.im_axis, density / raw, grid.convention, raw)


def reconstruct_pn(
    marginal: Marginal,
    params: protocol.ProtocolParams,
    spacing: float | None = None,
) -> PhononHistogram:
    """Bin the Im marginal around the peak centers into phonon weights.

    Bin n is [(n - 1/2) s, (n + 1/2) s] with s = spacing (default A); the
    n = 0 bin extends down to the grid bottom. Warns with OverlapWarning
    when the peaks are not distinguishable at these parameters.
    """
    s = params.A if spacing is None else float(spacing)
    if s <= 0.0:
        raise ValueError("spacing must be positive")
    axis = marginal.im_axis
    cum = cumulative_trapezoid(marginal.density, axis, initial=0.0)
    n_max = max(int(math.floor(axis[-1] / s + 0.5)), 0)
    edges = (np.arange(n_max + 2) - 0.5) * s
    edges[0] = axis[0]
    edge_mass = np.interp(edges, axis, cum)
    masses = np.clip(np.diff(edge_mass), 0.0, None)
    total = masses.sum()
    if total <= 0.0:
        raise ValueError("no marginal mass inside the reconstruction bins")

    sig_conv = math.exp(-params.r) if marginal.convention == PAPER else math.exp(-params.r) / 2.0
    p0 = 1.0 / (params.N + 1.0)
    leak = (1.0 - 0.5 * p0) * float(erfc(s / (2.0 * math.sqrt(2.0) * sig_conv)))
    if not protocol.is_distinguishable(params):
        warnings.warn(
            OverlapWarning(
                f"peaks at spacing {s:g} are not distinguishable at r = "
                f"{params.r:g}; estimated leaked mass {leak:.3g}"
            ),
            stacklevel=2,
        )
    return PhononHistogram(masses / total, "marginal-integration", leak)


def direct_histogram(m: np.ndarray, length: int | None = None) -> PhononHistogram:
    """Empirical phonon histogram from integer assignments."""
    m = np.asarray(m)
    if m.size == 0:
        raise ValueError("need at least one assignment")
    counts = np.bincount(m, minlength=length or 0).astype(float)
    return PhononHistogram(counts / counts.sum(), "direct", 0.0)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """Total-variation distance between two histograms, padded to match."""
    n = max(len(p), len(q))
    a = np.zeros(n)
    b = np.zeros(n)
    a[: len(p)] = p
    b[: len(q)] = q
    return 0.5 * float(np.abs(a - b).sum())


def write_grid_csv(grid: WignerGrid, fh) -> None:
    fh.write("re,im,w\n")
    for i, y in enumerate(grid.im_axis):
        for j, x in enumerate(grid.re_axis):
            fh.write(f"{float(x)!r},{float(y)!r},{float(grid.values[i, j])!r}\n")


def write_marginal_csv(marginal: Marginal, fh) -> None:
    fh.write("coordinate,value\n")
    for y, d in zip(marginal.im_axis, marginal.density):
        fh.write(f"{float(y)!r},{float(d)!r}\n")


def write_histogram_csv(hist: PhononHistogram, fh) -> None:
    fh.write("n,p\n")
    for n, p in enumerate(hist.probabilities):
        fh.write(f"{n},{float(p)!r}\n")

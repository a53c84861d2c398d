"""Periodic 2D Fourier machinery.

Arrays are laid out with shape ``(Ny, Nx)``: axis 0 is ``y`` and axis 1 is
``x``, so a C-ordered buffer has ``x`` varying fastest.  The physical domain is
``[-pi*Lx, pi*Lx) x [-pi*Ly, pi*Ly)`` sampled at ``x_j = -pi*Lx + j*dx``.

Coefficient convention
----------------------
The forward transform carries the factor ``1/(Nx*Ny)`` and coefficients refer
to the basis ``exp(i*(kx*x + ky*y))`` with ``kx = j/Lx``, ``j = -Nx/2 .. Nx/2-1``
(numpy FFT ordering).  Hence ``cos(x)`` on a grid with ``Lx = 1`` has the
coefficient ``1/2`` at ``j = +-1`` and Parseval reads

    ||u||_2^2 = integral |u|^2 dx dy = area * sum |c|^2,   area = 4 pi^2 Lx Ly.

Absolute thresholds (Krasny filtering, decay checks) are meant in this
convention.

The solvers do not go through :class:`SpectralField`; they keep half-spectrum
(``rfft``) coefficients and use :class:`Fourier` for the symbols.  The phase
shift caused by the grid origin is irrelevant there because every operator is
diagonal.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid.  ``Ny == 1`` selects the 1D reduction."""

    Nx: int
    Ny: int
    Lx: float = 2.0
    Ly: float = 2.0

    def __post_init__(self):
        for name, n in (("Nx", self.Nx), ("Ny", self.Ny)):
            if int(n) != n or n < 1:
                raise ValueError(f"{name} must be a positive integer, got {n}")
            if n & (n - 1):
                raise ValueError(f"{name} must be a power of two, got {n}")
        if self.Nx < 2:
            raise ValueError("Nx must be at least 2")
        if not (self.Lx > 0 and self.Ly > 0 and np.isfinite(self.Lx) and np.isfinite(self.Ly)):
            raise ValueError(f"Lx, Ly must be positive and finite, got {self.Lx}, {self.Ly}")

    @property
    def shape(self):
        return (self.Ny, self.Nx)

    @property
    def size(self):
        return self.Nx * self.Ny

    @property
    def dx(self):
        return 2 * np.pi * self.Lx / self.Nx

    @property
    def dy(self):
        return 2 * np.pi * self.Ly / self.Ny

    @property
    def area(self):
        return 4 * np.pi**2 * self.Lx * self.Ly

    @property
    def x(self):
        return -np.pi * self.Lx + self.dx * np.arange(self.Nx)

    @property
    def y(self):
        if self.Ny == 1:
            return np.zeros(1)
        return -np.pi * self.Ly + self.dy * np.arange(self.Ny)

    def mesh(self):
        """Coordinate arrays ``(X, Y)``, each of shape ``(Ny, Nx)``."""
        return np.meshgrid(self.x, self.y)

    @property
    def jx(self):
        return np.rint(np.fft.fftfreq(self.Nx, 1.0 / self.Nx)).astype(int)

    @property
    def jy(self):
        return np.rint(np.fft.fftfreq(self.Ny, 1.0 / self.Ny)).astype(int)

    @property
    def kx(self):
        return self.jx / self.Lx

    @property
    def ky(self):
        return self.jy / self.Ly

    def _phase(self):
        # exp(-i k x0) with x0 = -pi*L equals (-1)^j exactly
        px = np.where(self.jx % 2 == 0, 1.0, -1.0)
        if self.Ny == 1:
            py = np.ones(1)
        else:
            py = np.where(self.jy % 2 == 0, 1.0, -1.0)
        return py[:, None] * px[None, :]


class SpectralField:
    """Real periodic field with lazily synchronized samples and coefficients.

    Construct with either ``values`` (real, shape ``grid.shape``) or
    ``coeffs`` (complex, same shape, numpy FFT ordering).  Instances are
    treated as immutable; operations return new fields.
    """

    def __init__(self, grid, values=None, coeffs=None):
        if values is None and coeffs is None:
            raise ValueError("need values or coeffs")
        self.grid = grid
        self._values = None
        self._coeffs = None
        if values is not None:
            values = np.asarray(values, dtype=float)
            if values.shape != grid.shape:
                raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
            self._values = values
        if coeffs is not None:
            coeffs = np.asarray(coeffs, dtype=complex)
            if coeffs.shape != grid.shape:
                raise ValueError(f"coeffs shape {coeffs.shape} does not match grid {grid.shape}")
            self._coeffs = coeffs

    @classmethod
    def zeros(cls, grid):
        return cls(grid, values=np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid, func):
        X, Y = grid.mesh()
        return cls(grid, values=func(X, Y))

    @property
    def sync(self):
        if self._values is not None and self._coeffs is not None:
            return "both"
        return "values" if self._values is not None else "coeffs"

    @property
    def values(self):
        if self._values is None:
            self._values = _inverse(self.grid, self._coeffs)
        return self._values

    @property
    def coeffs(self):
        if self._coeffs is None:
            self._coeffs = _forward(self.grid, self._values)
        return self._coeffs

    def copy(self):
        return SpectralField(
            self.grid,
            values=None if self._values is None else self._values.copy(),
            coeffs=None if self._coeffs is None else self._coeffs.copy(),
        )

    def __repr__(self):
        g = self.grid
        return f"SpectralField(Nx={g.Nx}, Ny={g.Ny}, Lx={g.Lx}, Ly={g.Ly}, sync={self.sync!r})"


def _forward(grid, values):
    if not np.all(np.isfinite(values)):
        bad = np.count_nonzero(~np.isfinite(values))
        raise ValueError(f"field has {bad} non-finite samples")
    return sfft.fft2(values, norm="forward") * grid._phase()


def _inverse(grid, coeffs):
    if not np.all(np.isfinite(coeffs)):
        raise ValueError("field has non-finite Fourier coefficients")
    return sfft.ifft2(coeffs * grid._phase(), norm="forward").real


def transform(field, direction):
    """Populate the representation selected by ``direction``.

    ``"forward"`` computes coefficients from samples, ``"inverse"`` samples
    from coefficients.  The returned field has both representations current.
    """
    if direction == "forward":
        if field._values is None:
            raise ValueError("forward transform needs samples")
        return SpectralField(field.grid, values=field._values, coeffs=_forward(field.grid, field._values))
    if direction == "inverse":
        if field._coeffs is None:
            raise ValueError("inverse transform needs coefficients")
        return SpectralField(field.grid, values=_inverse(field.grid, field._coeffs), coeffs=field._coeffs)
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def _axis_symbol(grid, axis, order):
    if axis == "x":
        k, j, n = grid.kx, grid.jx, grid.Nx
        sym = (1j * k) ** order
        if order % 2 == 1:
            sym = np.where(j == -n // 2, 0.0, sym)
        return sym[None, :]
    if axis == "y":
        k, j, n = grid.ky, grid.jy, grid.Ny
        sym = (1j * k) ** order
        if order % 2 == 1 and n > 1:
            sym = np.where(j == -n // 2, 0.0, sym)
        return sym[:, None]
    raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


def partial(field, axis, order=1):
    """Spectral derivative of order 1..4 along ``axis`` ('x' or 'y').

    Coefficients are multiplied by ``(i k)**order``; the Nyquist mode is
    dropped for odd orders.
    """
    if order not in (1, 2, 3, 4):
        raise ValueError(f"derivative order must be in 1..4, got {order}")
    return SpectralField(field.grid, coeffs=field.coeffs * _axis_symbol(field.grid, axis, order))


def default_regularization(grid):
    return 1e-16 * np.max(np.abs(grid.kx))


def inverse_dx_symbol(k, regularization):
    """Symbol of the x-antiderivative on wavenumbers ``k``; zero at ``k == 0``."""
    k = np.asarray(k, dtype=float)
    out = np.zeros(k.shape, dtype=complex)
    nz = k != 0
    out[nz] = 1.0 / (1j * (k[nz] + regularization * np.sign(k[nz])))
    return out


def antiderivative_x(field, regularization=None):
    """Apply the x-antiderivative with symbol ``-i/kx``.

    Modes with ``kx == 0`` are set to zero, so the result has zero mean along
    every line of constant ``y``.
    """
    grid = field.grid
    if regularization is None:
        regularization = default_regularization(grid)
    sym = inverse_dx_symbol(grid.kx, regularization)
    return SpectralField(grid, coeffs=field.coeffs * sym[None, :])


def krasny_filter(field, threshold=1e-10):
    """Zero every coefficient whose modulus is below ``threshold``."""
    if threshold < 0:
        raise ValueError(f"threshold must be non-negative, got {threshold}")
    c = field.coeffs.copy()
    c[np.abs(c) < threshold] = 0.0
    return SpectralField(field.grid, coeffs=c)


class SeriesEvaluator:
    """Off-grid evaluation of the truncated Fourier series of a field.

    A point evaluation is the bilinear form ``ey @ C @ ex`` and costs one
    matrix-vector product, so many derivative orders at one point are cheap.
    """

    def __init__(self, field):
        self.grid = field.grid
        self.coeffs = field.coeffs
        self.kx = field.grid.kx
        self.ky = field.grid.ky

    def __call__(self, x, y, dx_order=0, dy_order=0):
        ex = np.exp(1j * self.kx * x) * (1j * self.kx) ** dx_order
        ey = np.exp(1j * self.ky * y) * (1j * self.ky) ** dy_order
        return float(np.real(ey @ (self.coeffs @ ex)))

    def many(self, x, y, orders):
        """Evaluate several ``(dx_order, dy_order)`` pairs at one point."""
        ex0 = np.exp(1j * self.kx * x)
        ey0 = np.exp(1j * self.ky * y)
        cache = {}
        out = {}
        for p, q in orders:
            if p not in cache:
                cache[p] = self.coeffs @ (ex0 * (1j * self.kx) ** p)
            out[(p, q)] = float(np.real((ey0 * (1j * self.ky) ** q) @ cache[p]))
        return out


def evaluate_series(field, x, y, dx_order=0, dy_order=0):
    """Value of ``d^p/dx^p d^q/dy^q`` of the Fourier series at ``(x, y)``."""
    if not (0 <= dx_order <= 3 and 0 <= dy_order <= 3):
        raise ValueError("derivative orders must be in 0..3")
    return SeriesEvaluator(field)(x, y, dx_order, dy_order)


def l2_norm(field):
    """L2 norm over the periodic domain, computed with Parseval."""
    c = field.coeffs
    return float(np.sqrt(field.grid.area * np.sum(np.abs(c) ** 2)))


def relative_l2_drift(current, initial):
    """``| ||u(t)|| - ||u(0)|| | / ||u(0)||``; accepts fields or norms."""
    n1 = l2_norm(current) if isinstance(current, SpectralField) else float(current)
    n0 = l2_norm(initial) if isinstance(initial, SpectralField) else float(initial)
    if n0 == 0.0:
        raise ValueError("relative drift undefined for a zero initial norm")
    return abs(n1 - n0) / n0


@dataclass(frozen=True)
class DecayReport:
    max_modulus_outer_band: float
    linf_coeff: float

    @property
    def ratio(self):
        return self.max_modulus_outer_band / self.linf_coeff if self.linf_coeff > 0 else 0.0


def outer_band_mask(kx_abs, ky_abs):
    """Boolean mask of the highest 10% of ``|kx|`` or of ``|ky|``."""
    mask = kx_abs >= 0.9 * kx_abs.max()
    if ky_abs.max() > 0:
        mask = mask | (ky_abs >= 0.9 * ky_abs.max())
    return mask


def decay_report(field):
    """Largest coefficient modulus in the outer 10% band and overall."""
    g = field.grid
    mod = np.abs(field.coeffs)
    mask = outer_band_mask(np.abs(g.kx)[None, :] + 0 * mod, np.abs(g.ky)[:, None] + 0 * mod)
    return DecayReport(float(mod[mask].max()), float(mod.max()))


class Fourier:
    """Half-spectrum transforms and symbols used inside the time steppers.

    Coefficient arrays have shape ``(Ny, Nx//2 + 1)``; the last column is the
    x-Nyquist mode.  Normalization matches :class:`SpectralField`.
    """

    def __init__(self, grid):
        self.grid = grid
        self.kx = (np.arange(grid.Nx // 2 + 1) / grid.Lx)[None, :]
        self.ky = grid.ky[:, None]
        self.cshape = (grid.Ny, grid.Nx // 2 + 1)
        nyq_x = np.zeros(self.cshape, dtype=bool)
        nyq_x[:, -1] = True
        self.nyq_x = nyq_x
        nyq_y = np.zeros(self.cshape, dtype=bool)
        if grid.Ny > 1:
            nyq_y[grid.Ny // 2, :] = True
        self.nyq_y = nyq_y
        # x-mean and x-Nyquist columns are kept identically zero in evolutions
        keep = np.ones(self.cshape)
        keep[:, 0] = 0.0
        keep[:, -1] = 0.0
        self.keep = keep

    def forward(self, values):
        return sfft.rfft2(values, norm="forward")

    def inverse(self, coeffs):
        return sfft.irfft2(coeffs, s=self.grid.shape, norm="forward")

    def dx(self, order=1):
        sym = (1j * self.kx) ** order * np.ones(self.cshape)
        if order % 2:
            sym[self.nyq_x] = 0.0
        return sym

    def dy(self, order=1):
        sym = (1j * self.ky) ** order * np.ones(self.cshape)
        if order % 2:
            sym[self.nyq_y] = 0.0
        return sym

    def inv_dx(self, regularization=None):
        if regularization is None:
            regularization = default_regularization(self.grid)
        sym = inverse_dx_symbol(self.kx[0], regularization)[None, :] * np.ones(self.cshape)
        sym[self.nyq_x] = 0.0
        return sym

    def to_field(self, coeffs):
        return SpectralField(self.grid, values=self.inverse(coeffs))

    def from_field(self, field):
        return self.forward(field.values)

    def l2_norm(self, coeffs):
        """Parseval norm from half-spectrum coefficients."""
        w = np.full(self.cshape, 2.0)
        w[:, 0] = 1.0
        if self.grid.Nx > 1:
            w[:, -1] = 1.0
        return float(np.sqrt(self.grid.area * np.sum(w * np.abs(coeffs) ** 2)))

    def decay(self, coeffs):
        mod = np.abs(coeffs)
        mask = outer_band_mask(np.abs(self.kx) + 0 * mod, np.abs(self.ky) + 0 * mod)
        return DecayReport(float(mod[mask].max()), float(mod.max()))

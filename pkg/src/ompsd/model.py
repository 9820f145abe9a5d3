"""Device/drive parameters and the closed-form effective slow-amplitude model.

Conventions used throughout the toolkit:

* All rates and angular frequencies are stored in the same (angular) unit,
  1/s.  ``DeviceParams.from_hz`` converts ordinary-frequency inputs by 2*pi.
  Every dimensionless combination (``g = gamma_c/omega_m``, ``gamma0/gamma_m``)
  is unchanged by that convention, so the normalized dynamics do not depend
  on it.
* Amplitudes are measured in units of the thermal scale ``delta_m``,
  the radial width of the uncoupled resonator's stationary distribution.
  In these units the diffusion constant is exactly ``gamma_m / 2``.
* Drive amplitude ``a_p`` is the normalized feedline amplitude; the mean
  cavity photon number follows as ``E_c = a_p**2 / (d**2 + g**2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, NumericsError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class DeviceParams:
    """Fixed physical rates of the resonator + cavity system.

    omega_m      mechanical angular frequency [1/s]
    gamma_m      mechanical amplitude damping rate [1/s]
    gamma_c      cavity damping rate, same unit convention as omega_m [1/s]
    coupling     cavity frequency shift per zero-point displacement [1/s]
    gamma2_norm  dimensionless nonlinear damping, gamma2*delta_m**2/gamma_m
    """

    omega_m: float
    gamma_m: float
    gamma_c: float
    coupling: float
    gamma2_norm: float = 0.0

    def __post_init__(self):
        if self.omega_m <= 0:
            raise ValueError(f"omega_m must be > 0, got {self.omega_m}")
        if self.gamma_m <= 0:
            raise ValueError(f"gamma_m must be > 0, got {self.gamma_m}")
        if self.gamma_c <= 0:
            raise ValueError(f"gamma_c must be > 0, got {self.gamma_c}")
        if self.gamma2_norm < 0:
            raise ValueError(f"gamma2_norm must be >= 0, got {self.gamma2_norm}")

    @classmethod
    def from_hz(cls, f_m, gamma_m, gamma_c, coupling, gamma2_norm=0.0):
        """Build from ordinary-frequency (Hz) quantities, converting by 2*pi."""
        return cls(
            omega_m=TWO_PI * f_m,
            gamma_m=TWO_PI * gamma_m,
            gamma_c=TWO_PI * gamma_c,
            coupling=TWO_PI * coupling,
            gamma2_norm=gamma2_norm,
        )

    @property
    def g(self) -> float:
        """Normalized cavity damping rate gamma_c / omega_m."""
        return self.gamma_c / self.omega_m

    @property
    def theta_norm(self) -> float:
        """Diffusion constant in delta_m**2/s units: exactly gamma_m / 2."""
        return 0.5 * self.gamma_m


@dataclass(frozen=True)
class DriveParams:
    """Cavity drive settings: normalized detuning plus one amplitude measure.

    Exactly one of ``photon_number`` (mean intracavity photon number) or
    ``amplitude`` (normalized feedline drive amplitude) must be given.
    """

    d: float
    photon_number: float | None = None
    amplitude: float | None = None

    def __post_init__(self):
        if (self.photon_number is None) == (self.amplitude is None):
            raise ValueError("exactly one of photon_number or amplitude must be set")
        if self.photon_number is not None and self.photon_number < 0:
            raise ValueError(f"photon_number must be >= 0, got {self.photon_number}")

    def resolve_photon_number(self, g: float) -> float:
        if self.photon_number is not None:
            return self.photon_number
        return cavity_photon_number(self.amplitude, self.d, g)


@dataclass(frozen=True)
class EffectiveParams:
    """Slow-amplitude coefficients, in 1/s and delta_m units.

    gamma0 may be negative (self-excited regime).  gamma_ba is the cavity
    back-action part of gamma0, i.e. gamma0 - gamma_m, positive for red
    detuning.  omega2 is housed but fixed at 0; the near-threshold dynamics
    neglect the amplitude-dependent frequency pull.
    """

    omega0: float
    gamma0: float
    omega2: float
    gamma2: float
    gamma_ba: float
    theta: float

    def __post_init__(self):
        if self.gamma2 < 0:
            raise ValueError(f"gamma2 must be >= 0, got {self.gamma2}")
        if self.theta <= 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")

    @property
    def gamma_m(self) -> float:
        """Bare mechanical damping implied by the normalization theta = gamma_m/2."""
        return 2.0 * self.theta

    def without_frequency_pull(self) -> "EffectiveParams":
        """Copy with omega0 = 0, the default for dynamics near threshold."""
        return EffectiveParams(0.0, self.gamma0, self.omega2, self.gamma2,
                               self.gamma_ba, self.theta)


def xi_l(d, g, l=1):
    """Cavity sideband response [-i(d+l)+g]^-1 + [-i(d-l)-g]^-1.

    Accepts scalars or numpy arrays for ``d``.  Requires g > 0 (the two
    denominators then cannot vanish).  Odd in d; its real part is negative
    for d > 0 and vanishes at d = 0.
    """
    if g <= 0:
        raise ValueError(f"g must be > 0, got {g}")
    d = np.asarray(d, dtype=float) if not np.isscalar(d) else d
    return 1.0 / (-1j * (d + l) + g) + 1.0 / (-1j * (d - l) - g)


def cavity_photon_number(a_p, d, g):
    """Mean photon number a_p**2 / (d**2 + g**2) for normalized drive a_p."""
    if g <= 0:
        raise ValueError(f"g must be > 0, got {g}")
    return np.abs(a_p) ** 2 / (d * d + g * g)


def effective_params(dev: DeviceParams, drive: DriveParams) -> EffectiveParams:
    """Evaluate the effective linear coefficients for a given drive.

    gamma0 = gamma_m + 2 G^2 E_c / omega_m * Re xi_1(d, g) and
    omega0 uses the imaginary part of the same response.  Blue detuning
    (d > 0) reduces gamma0 below gamma_m; red detuning raises it.
    """
    g = dev.g
    e_c = drive.resolve_photon_number(g)
    xi = xi_l(drive.d, g, 1)
    coef = 2.0 * dev.coupling**2 * e_c / dev.omega_m
    gamma_ba = coef * xi.real
    return EffectiveParams(
        omega0=coef * xi.imag,
        gamma0=dev.gamma_m + gamma_ba,
        omega2=0.0,
        gamma2=dev.gamma2_norm * dev.gamma_m,
        gamma_ba=gamma_ba,
        theta=dev.theta_norm,
    )


def seo_amplitude(eff: EffectiveParams) -> float:
    """Limit-cycle radius sqrt(-gamma0/gamma2) in delta_m units, 0 below threshold."""
    if eff.gamma2 <= 0:
        raise ValueError("seo_amplitude requires gamma2 > 0")
    if eff.gamma0 >= 0:
        return 0.0
    return math.sqrt(-eff.gamma0 / eff.gamma2)


def back_action_unit(dev: DeviceParams, d):
    """Back-action damping per unit squared drive amplitude (vectorized).

    gamma_ba(a_p, d) = a_p**2 * back_action_unit(d); computed directly to
    avoid cancellation against gamma_m for weak coupling.
    """
    g = dev.g
    coef = 2.0 * dev.coupling**2 / (dev.omega_m * (d * d + g * g))
    return coef * np.real(xi_l(d, g, 1))


def gamma0_curve(dev: DeviceParams, a_p, d):
    """gamma0 as a function of detuning for fixed drive amplitude (vectorized)."""
    return dev.gamma_m + np.abs(a_p) ** 2 * back_action_unit(dev, d)


def hopf_thresholds(dev: DeviceParams, a_p, d_range=(1e-3, 12.0),
                    scan_step=1e-3, tol_factor=1e-9, max_iter=200):
    """Detunings where gamma0 crosses zero for fixed drive amplitude.

    Scans gamma0(d) on a uniform grid of spacing ``scan_step`` over
    ``d_range`` and refines every sign change by bisection until
    |gamma0| < tol_factor * gamma_m.  Below the instability threshold the
    list is empty; above it the model yields exactly two roots bracketing
    one connected unstable window.

    Raises NumericsError if a bisection fails to converge (a continuous
    gamma0 cannot trigger this).
    """
    if a_p < 0:
        raise ValueError(f"a_p must be >= 0, got {a_p}")
    if a_p == 0:
        return []
    lo, hi = d_range
    n = int(math.ceil((hi - lo) / scan_step)) + 1
    d_grid = np.linspace(lo, hi, n)
    vals = gamma0_curve(dev, a_p, d_grid)
    tol = tol_factor * dev.gamma_m

    roots = []
    for i in np.nonzero(np.diff(np.signbit(vals)))[0]:
        a, b = d_grid[i], d_grid[i + 1]
        fa = vals[i]
        root = None
        for _ in range(max_iter):
            m = 0.5 * (a + b)
            fm = gamma0_curve(dev, a_p, m)
            if abs(fm) < tol:
                root = m
                break
            if (fa < 0) == (fm < 0):
                a, fa = m, fm
            else:
                b = m
        if root is None:
            raise NumericsError(
                f"bisection did not reach |gamma0| < {tol:g} near d = {0.5 * (a + b):g}")
        roots.append(root)
    # exact grid zeros would be skipped by the sign-change test above
    for i in np.nonzero(vals == 0.0)[0]:
        roots.append(float(d_grid[i]))
    return sorted(roots)


@dataclass(frozen=True)
class CalibrationResult:
    amplitude: float
    roots: tuple
    targets: tuple
    residual: float


def calibrate_drive(dev: DeviceParams, target_roots,
                    d_range=(1e-3, 12.0), scan_step=1e-3,
                    rel_tol=1e-10) -> CalibrationResult:
    """Fit the free drive amplitude so the instability window matches targets.

    Minimizes the squared mismatch between the two computed thresholds and
    ``target_roots = (d_low, d_high)`` by golden-section search over a_p.
    One scalar cannot in general place both roots exactly (their locations
    are tied through the fixed response curve), so the result carries the
    RMS residual alongside the best-fit amplitude; rescaling the coupling G
    is exactly degenerate with rescaling a_p and adds no fitting freedom.

    Raises CalibrationError when no amplitude produces an unstable window.
    """
    t_lo, t_hi = target_roots
    if not (0 < t_lo < t_hi):
        raise ValueError(f"target roots must satisfy 0 < d_low < d_high, got {target_roots}")

    # instability requires the detuning-response coefficient to dip below zero
    d_grid = np.arange(d_range[0], d_range[1] + scan_step, scan_step)
    c_min = back_action_unit(dev, d_grid).min()
    if c_min >= 0:
        raise CalibrationError("gamma0 cannot become negative at any drive amplitude")
    a_min = math.sqrt(-dev.gamma_m / c_min)

    def cost(a):
        roots = hopf_thresholds(dev, a, d_range=d_range, scan_step=scan_step)
        if len(roots) != 2:
            return math.inf
        return (roots[0] - t_lo) ** 2 + (roots[1] - t_hi) ** 2

    # bracket: expand upward from just above threshold until the cost rises
    a_lo = a_min * (1.0 + 1e-7)
    a_hi = a_min * 2.0
    prev = cost(a_hi)
    while a_hi < a_min * 1e4:
        trial = a_hi * 2.0
        c = cost(trial)
        if c > prev:
            a_hi = trial
            break
        prev, a_hi = c, trial
    else:
        raise CalibrationError("could not bracket a cost minimum in amplitude")

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = a_lo, a_hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = cost(x1), cost(x2)
    while (b - a) > rel_tol * a_min:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = cost(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = cost(x2)
    best = 0.5 * (a + b)
    roots = hopf_thresholds(dev, best, d_range=d_range, scan_step=scan_step)
    if len(roots) != 2:
        raise CalibrationError("optimum amplitude lost the two-root window")
    residual = math.sqrt(cost(best) / 2.0)
    return CalibrationResult(amplitude=best, roots=tuple(roots),
                             targets=(t_lo, t_hi), residual=residual)


def amplitude_for_gamma_ba(dev: DeviceParams, d, gamma_ba_target) -> float:
    """Drive amplitude that produces |gamma_ba| = gamma_ba_target at detuning d.

    Convenience inversion used by scenario runners when the physical pump
    power chain is unknown: gamma_ba scales as a_p**2, so the requested
    magnitude pins the amplitude uniquely.
    """
    if gamma_ba_target <= 0:
        raise ValueError("gamma_ba_target must be > 0")
    unit = back_action_unit(dev, d)
    if unit == 0:
        raise ValueError(f"back-action vanishes at d = {d}; cannot calibrate amplitude")
    return math.sqrt(gamma_ba_target / abs(unit))

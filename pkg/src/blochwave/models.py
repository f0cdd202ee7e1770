"""Built-in generator models.

A :class:`GeneratorModel` is a time-parametrized pair of skew-Hermitian
matrices: a strong drift (scaled by the adiabatic parameter ``gamma``) and a
weak drive, with optional analytic spectral data used to avoid numerical
eigenprojector tracking where closed forms exist.

Built-ins:

* an avoided-crossing two-level sweep (drift ``-i(X + tZ)``, no drive) with
  full analytic spectral data, its closed-form transporter, and the classic
  asymptotic transition formulas;
* an on-resonance driven three-level system with large detuning, expressed
  in the interaction picture (the rotating-frame transformation is applied
  analytically, not numerically);
* a seeded random smooth model generator for property-test corpora.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError, IoError
from .operators import SpectralDecomposition, decompose, require_skew_hermitian

__all__ = [
    "GeneratorModel",
    "landau_zener_model",
    "lz_asymptotic_amplitude",
    "three_level_model",
    "three_level_lab_frame",
    "random_smooth_model",
    "load_tabulated_model",
    "builtin_model_names",
]

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


@dataclass
class GeneratorModel:
    """Time-parametrized skew-Hermitian drift/drive pair.

    ``drift(t)`` is the strong generator (without the ``gamma`` factor),
    ``drive(t)`` the weak one; the full-evolution generator is
    ``gamma * drift(t) + drive(t)``.
    """

    name: str
    dim: int
    gamma: float
    drift: Callable[[float], np.ndarray]
    drive: Callable[[float], np.ndarray]
    params: dict = field(default_factory=dict)
    analytic_spectral: Callable[[float], SpectralDecomposition] | None = None
    analytic_projector_derivative: Callable[[int, float], np.ndarray] | None = None
    analytic_eigenvalues: Callable[[float], np.ndarray] | None = None
    analytic_kato: Callable[[float], np.ndarray] | None = None
    analytic_transporter: Callable[[float, float], np.ndarray] | None = None
    static_drift: bool = False
    gap_tol: float | None = None

    def full_generator(self, t: float) -> np.ndarray:
        return self.gamma * self.drift(t) + self.drive(t)

    def spectral_at(self, t: float) -> SpectralDecomposition:
        """Spectral decomposition of the drift at ``t`` (analytic when available)."""
        if self.analytic_spectral is not None:
            return self.analytic_spectral(t)
        return decompose(self.drift(t), self.gap_tol)

    def eigenvalues_at(self, t: float) -> np.ndarray:
        """Block eigenvalues ``b_k(t)`` only (cheaper than a full decomposition)."""
        if self.analytic_eigenvalues is not None:
            return self.analytic_eigenvalues(t)
        return self.spectral_at(t).eigenvalues

    def validate(self, times, tol: float = 1e-12) -> None:
        """Check skew-Hermiticity of samples and analytic-spectral consistency."""
        for t in times:
            require_skew_hermitian(self.drift(t), tol, what=f"{self.name} drift({t:g})")
            require_skew_hermitian(self.drive(t), tol, what=f"{self.name} drive({t:g})")
            if self.analytic_spectral is not None:
                rec = self.analytic_spectral(t).reconstruct()
                err = np.linalg.norm(rec - self.drift(t), 2)
                scale = max(1.0, np.linalg.norm(self.drift(t), 2))
                if err > 1e-10 * scale:
                    raise ValueError(
                        f"analytic spectral data of {self.name} fails to "
                        f"reconstruct the drift at t={t:g} (defect {err:.2e})"
                    )


def landau_zener_model(gamma: float) -> GeneratorModel:
    """Two-level avoided-crossing sweep: drift ``-i(X + tZ)``, zero drive.

    Analytic attachments: eigenvalue tracks ``±i sqrt(1+t²)``, the projector
    family ``(1 ∓ (X+tZ)/sqrt(1+t²))/2`` with its derivative, and the
    closed-form transporter ``exp(iY [arctan t - arctan t0] / 2)``.  Block 0
    carries the ``-i sqrt(1+t²)`` eigenvalue (ascending imaginary-part order).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    eye = np.eye(2, dtype=complex)
    zero = np.zeros((2, 2), dtype=complex)

    def drift(t: float) -> np.ndarray:
        return -1j * (PAULI_X + t * PAULI_Z)

    def drive(t: float) -> np.ndarray:
        return zero

    def spectral(t: float) -> SpectralDecomposition:
        s = np.hypot(1.0, t)
        axis = (PAULI_X + t * PAULI_Z) / s
        return SpectralDecomposition(
            eigenvalues=np.array([-1j * s, 1j * s]),
            projectors=(0.5 * (eye + axis), 0.5 * (eye - axis)),
            multiplicities=(1, 1),
        )

    def eigenvalues(t: float) -> np.ndarray:
        s = np.hypot(1.0, t)
        return np.array([-1j * s, 1j * s])

    def projector_derivative(k: int, t: float) -> np.ndarray:
        sign = 1.0 if k == 0 else -1.0
        return sign * 0.5 * (PAULI_Z - t * PAULI_X) / np.hypot(1.0, t) ** 3

    def kato(t: float) -> np.ndarray:
        return 1j * PAULI_Y / (2.0 * (1.0 + t * t))

    def transporter(t0: float, t: float) -> np.ndarray:
        half = 0.5 * (np.arctan(t) - np.arctan(t0))
        return np.cos(half) * eye + 1j * np.sin(half) * PAULI_Y

    return GeneratorModel(
        name="landau_zener",
        dim=2,
        gamma=float(gamma),
        drift=drift,
        drive=drive,
        params={"gamma": float(gamma)},
        analytic_spectral=spectral,
        analytic_projector_derivative=projector_derivative,
        analytic_eigenvalues=eigenvalues,
        analytic_kato=kato,
        analytic_transporter=transporter,
    )


def lz_asymptotic_amplitude(gamma: float) -> tuple[float, float]:
    """Asymptotic transition amplitudes of the two-level sweep.

    Returns ``(sin_phi, tan_phi)`` with ``sin_phi = exp(-pi*gamma/2)``:
    the asymptotic per-block leakage and the asymptotic spectral-norm
    distance of the wave operator from the identity.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    sin_phi = float(np.exp(-np.pi * gamma / 2.0))
    tan_phi = sin_phi / np.sqrt(1.0 - sin_phi**2)
    return sin_phi, tan_phi


def _three_level_coupling() -> np.ndarray:
    return np.array(
        [
            [0.0, -0.5, 0.0],
            [0.5, 0.0, -1.0 / np.sqrt(2.0)],
            [0.0, 1.0 / np.sqrt(2.0), 0.0],
        ],
        dtype=complex,
    )


def three_level_model(
    gamma: float,
    a: float,
    omega: float = 1.0,
    envelope: Callable[[float], float] | None = None,
) -> GeneratorModel:
    """On-resonance driven three-level system with large detuning, in the
    interaction picture.

    The drift is the static ``-i omega diag(0, 0, 1)`` (detuning of the third
    level); the drive carries a static coupling pattern plus the same pattern
    counter-rotating at ``exp(∓2i omega t)``.  ``gamma >> a`` is the
    perturbative regime; smaller ratios are allowed but warn-worthy.

    ``envelope`` optionally modulates the drive amplitude in time (off by
    default; the constant-amplitude case is the validated configuration).
    """
    if gamma <= 0 or a < 0 or omega <= 0:
        raise ValueError("gamma and omega must be positive, a non-negative")
    if gamma < 2.0 * a:
        warnings.warn(
            f"three-level model with gamma={gamma:g} not much larger than "
            f"a={a:g}: outside the perturbative regime, leakage bounds may be "
            "vacuous",
            stacklevel=2,
        )
    k0 = _three_level_coupling()
    drift_matrix = -1j * omega * np.diag([0.0, 0.0, 1.0]).astype(complex)
    p_low = np.diag([0.0, 0.0, 1.0]).astype(complex)
    p_high = np.diag([1.0, 1.0, 0.0]).astype(complex)
    zero3 = np.zeros((3, 3), dtype=complex)

    def drift(t: float) -> np.ndarray:
        return drift_matrix

    def drive(t: float) -> np.ndarray:
        amp = a if envelope is None else a * envelope(t)
        e = np.exp(2j * omega * t)
        kt = np.array(
            [
                [0.0, -0.5 / e, 0.0],
                [0.5 * e, 0.0, -1.0 / (np.sqrt(2.0) * e)],
                [0.0, e / np.sqrt(2.0), 0.0],
            ],
            dtype=complex,
        )
        return (amp / 2.0) * (k0 + kt)

    eigs = np.array([-1j * omega, 0.0j])

    def spectral(t: float) -> SpectralDecomposition:
        return SpectralDecomposition(
            eigenvalues=eigs,
            projectors=(p_low, p_high),
            multiplicities=(1, 2),
        )

    def projector_derivative(k: int, t: float) -> np.ndarray:
        return zero3

    return GeneratorModel(
        name="three_level",
        dim=3,
        gamma=float(gamma),
        drift=drift,
        drive=drive,
        params={"gamma": float(gamma), "a": float(a), "omega": float(omega)},
        analytic_spectral=spectral,
        analytic_projector_derivative=projector_derivative,
        analytic_eigenvalues=lambda t: eigs,
        analytic_kato=lambda t: zero3,
        static_drift=True,
    )


def three_level_lab_frame(gamma: float, a: float, omega: float = 1.0):
    """Lab-frame generator of the driven three-level system and the rotating
    transformation linking it to the interaction picture.

    Returns ``(generator, rotation)`` with ``generator(t)`` the skew-Hermitian
    ``-i H(t)`` for ``H(t) = diag(0, w, w(2+gamma)) + a cos(w t) K`` and
    ``rotation(t) = exp(-i t diag(0, w, 2w))``.  Used to cross-check the
    analytic frame transformation against direct numerical conjugation.
    """
    coupling = 1j * _three_level_coupling()  # Hermitian drive pattern
    h0 = np.diag([0.0, omega, omega * (2.0 + gamma)]).astype(complex)
    rot_freqs = np.array([0.0, omega, 2.0 * omega])

    def generator(t: float) -> np.ndarray:
        return -1j * (h0 + a * np.cos(omega * t) * coupling)

    def rotation(t: float) -> np.ndarray:
        return np.diag(np.exp(-1j * rot_freqs * t))

    return generator, rotation


def _haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _random_skew(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    s = 0.5 * (z - z.conj().T)
    return s / np.linalg.norm(s, 2)


def random_smooth_model(
    dim: int,
    n_blocks: int,
    seed: int,
    gamma: float = 10.0,
    drive_strength: float = 1.0,
    min_gap: float = 1.0,
    rotation_scale: float = 0.2,
    analytic: bool = True,
) -> GeneratorModel:
    """Seeded smooth model satisfying the adiabatic assumptions by construction.

    The drift has fixed block multiplicities, low-order trigonometric
    eigenvalue tracks kept at least ``min_gap`` apart, and eigenprojectors
    rotated by a slowly oscillating one-parameter unitary family, so tracks
    never cross and all spectral data is twice continuously differentiable.
    The drive is a bounded trigonometric skew-Hermitian polynomial.
    Deterministic for a given seed.

    With ``analytic=False`` the closed-form spectral data is withheld, forcing
    consumers through the numerical decomposition/tracking route (used to
    exercise that machinery against the analytic twin).
    """
    if dim < 2 or not (1 <= n_blocks <= dim):
        raise ValueError("need dim >= 2 and 1 <= n_blocks <= dim")
    rng = np.random.default_rng(seed)

    # block multiplicities: start with one each, spread the remainder
    mults = np.ones(n_blocks, dtype=int)
    for _ in range(dim - n_blocks):
        mults[rng.integers(n_blocks)] += 1

    # eigenvalue tracks: base levels with oscillation amplitudes small enough
    # that adjacent tracks always stay min_gap apart
    osc_amp = 0.2 * min_gap
    base = np.cumsum(min_gap + 2.0 * osc_amp + rng.uniform(0.0, min_gap, size=n_blocks))
    base -= base.mean()
    osc_freq = rng.uniform(0.3, 1.2, size=n_blocks)
    osc_phase = rng.uniform(0.0, 2.0 * np.pi, size=n_blocks)

    def tracks(t: float) -> np.ndarray:
        return base + osc_amp * np.sin(osc_freq * t + osc_phase)

    # frozen projectors conjugated by exp(g(t) S)
    q = _haar_unitary(dim, rng)
    bounds = np.concatenate([[0], np.cumsum(mults)])
    frozen = []
    for k in range(n_blocks):
        cols = q[:, bounds[k] : bounds[k + 1]]
        frozen.append(cols @ cols.conj().T)

    s_gen = _random_skew(dim, rng)
    lam_s, vec_s = np.linalg.eigh(-1j * s_gen)  # s_gen = vec (i lam) vec†
    rot_freq = rng.uniform(0.2, 0.6)
    rot_phase = rng.uniform(0.0, 2.0 * np.pi)

    def g(t: float) -> float:
        return rotation_scale * np.sin(rot_freq * t + rot_phase)

    def g_dot(t: float) -> float:
        return rotation_scale * rot_freq * np.cos(rot_freq * t + rot_phase)

    def rotation(t: float) -> np.ndarray:
        return (vec_s * np.exp(1j * g(t) * lam_s)) @ vec_s.conj().T

    def projector(k: int, t: float) -> np.ndarray:
        r = rotation(t)
        return r @ frozen[k] @ r.conj().T

    def drift(t: float) -> np.ndarray:
        r = rotation(t)
        lam = tracks(t)
        out = np.zeros((dim, dim), dtype=complex)
        for k in range(n_blocks):
            out += 1j * lam[k] * (r @ frozen[k] @ r.conj().T)
        return out

    e1 = _random_skew(dim, rng)
    e2 = _random_skew(dim, rng)
    nu = rng.uniform(0.4, 1.5, size=2)
    chi = rng.uniform(0.0, 2.0 * np.pi, size=2)

    def drive(t: float) -> np.ndarray:
        return drive_strength * (
            np.sin(nu[0] * t + chi[0]) * e1 + np.cos(nu[1] * t + chi[1]) * e2
        )

    def spectral(t: float) -> SpectralDecomposition:
        lam = tracks(t)
        return SpectralDecomposition(
            eigenvalues=1j * lam,
            projectors=tuple(projector(k, t) for k in range(n_blocks)),
            multiplicities=tuple(int(m) for m in mults),
        )

    def projector_derivative(k: int, t: float) -> np.ndarray:
        p = projector(k, t)
        return g_dot(t) * (s_gen @ p - p @ s_gen)

    return GeneratorModel(
        name="random_smooth",
        dim=dim,
        gamma=float(gamma),
        drift=drift,
        drive=drive,
        params={
            "dim": dim,
            "n_blocks": n_blocks,
            "seed": seed,
            "gamma": float(gamma),
            "drive_strength": float(drive_strength),
            "min_gap": float(min_gap),
            "rotation_scale": float(rotation_scale),
        },
        analytic_spectral=spectral if analytic else None,
        analytic_projector_derivative=projector_derivative if analytic else None,
        analytic_eigenvalues=(lambda t: 1j * tracks(t)) if analytic else None,
    )


def load_tabulated_model(path, gamma: float) -> GeneratorModel:
    """Custom model from a tabulated-matrix CSV file, cubic-interpolated.

    Format: one header line ``time,B_00,B_01,...,C_00,...`` followed by rows
    of a strictly increasing time column and the row-major complex entries of
    the drift and the drive (Python complex literals, e.g. ``1.5-0.25j``).
    Samples must be skew-Hermitian; cubic-spline interpolation preserves
    skew-Hermiticity exactly between samples.  Evaluation outside the
    tabulated span is refused by the spline.
    """
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    except OSError as exc:
        raise IoError(f"cannot read tabulated model {path}: {exc}") from exc
    if len(rows) < 3:
        raise ConfigError(f"tabulated model {path} needs a header and >= 2 sample rows")

    n_cols = len(rows[0])
    dim_sq, rem = divmod(n_cols - 1, 2)
    dim = int(round(np.sqrt(dim_sq)))
    if rem != 0 or dim * dim != dim_sq:
        raise ConfigError(
            f"tabulated model {path}: {n_cols} columns do not fit 1 + 2*dim^2"
        )

    try:
        data = np.array(
            [[complex(cell) for cell in row] for row in rows[1:]], dtype=complex
        )
    except ValueError as exc:
        raise ConfigError(f"tabulated model {path}: bad complex literal: {exc}") from exc

    times = data[:, 0].real
    if np.any(np.diff(times) <= 0):
        raise ConfigError(f"tabulated model {path}: time column must strictly increase")
    drift_samples = data[:, 1 : 1 + dim_sq].reshape(-1, dim, dim)
    drive_samples = data[:, 1 + dim_sq :].reshape(-1, dim, dim)
    for i, t in enumerate(times):
        require_skew_hermitian(drift_samples[i], 1e-10, what=f"tabulated drift at t={t:g}")
        require_skew_hermitian(drive_samples[i], 1e-10, what=f"tabulated drive at t={t:g}")

    drift_spline = CubicSpline(times, drift_samples, axis=0, extrapolate=False)
    drive_spline = CubicSpline(times, drive_samples, axis=0, extrapolate=False)

    def _eval(spline, t: float) -> np.ndarray:
        out = spline(t)
        if np.any(np.isnan(out)):
            raise ConfigError(
                f"tabulated model evaluated at t={t:g} outside its span "
                f"[{times[0]:g}, {times[-1]:g}]"
            )
        return out

    return GeneratorModel(
        name="custom",
        dim=dim,
        gamma=float(gamma),
        drift=lambda t: _eval(drift_spline, t),
        drive=lambda t: _eval(drive_spline, t),
        params={"path": str(path), "gamma": float(gamma), "interpolation": "cubic-spline"},
    )


def builtin_model_names() -> list[str]:
    return ["landau_zener", "three_level", "random_smooth"]

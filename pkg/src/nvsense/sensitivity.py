"""Magnetic sensitivity budget, fringe calibration, and the energy
resolution benchmark.

The DC-equivalent sensitivity of a single-spin magnetometer decomposes as

    eta = 1 / (gamma_e sqrt(T_C)) * 1 / (C F_r F_i) * sqrt(1 + T_ir / T_C)

with phase-accumulation time T_C, remaining coherence C, readout and
initialization fidelities F_r / F_i, and dead time T_ir. The energy
resolution per bandwidth of a sensor with effective linear dimension l is

    E_R = eta^2 l^3 / (2 mu_0 hbar)

quoted in units of hbar.
"""

import importlib.resources
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .constants import GAMMA_E, HBAR, MU_0


class AmbiguityError(ValueError):
    """The data cover less than one full fringe period."""


class DegenerateFitError(RuntimeError):
    """The fit carries no information about the requested parameter."""


@dataclass(frozen=True)
class SensitivityBudget:
    """The five factors entering the sensitivity formula."""

    t_c: float  # phase-accumulation time, s
    c: float  # remaining coherence at t_c, (0, 1]
    f_i: float  # initialization fidelity, (0, 1]
    f_r: float  # readout fidelity, (0, 1]
    t_ir: float  # initialization + readout overhead, s
    gamma_e: float = GAMMA_E

    def __post_init__(self):
        if self.t_c <= 0:
            raise ValueError("t_c must be > 0")
        if self.t_ir < 0:
            raise ValueError("t_ir must be >= 0")
        for name in ("c", "f_i", "f_r"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {v}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "t_c_s": self.t_c,
                "c": self.c,
                "f_i": self.f_i,
                "f_r": self.f_r,
                "t_ir_s": self.t_ir,
                "gamma_e_rad_s_t": self.gamma_e,
                "eta_t_per_sqrt_hz": eta_from_budget(self),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SensitivityBudget":
        d = json.loads(text)
        return cls(
            t_c=d["t_c_s"],
            c=d["c"],
            f_i=d["f_i"],
            f_r=d["f_r"],
            t_ir=d["t_ir_s"],
            gamma_e=d.get("gamma_e_rad_s_t", GAMMA_E),
        )


def eta_from_budget(b: SensitivityBudget) -> float:
    """Sensitivity in T/sqrt(Hz) from the five budget factors."""
    return (
        1.0
        / (b.gamma_e * math.sqrt(b.t_c))
        / (b.c * b.f_r * b.f_i)
        * math.sqrt(1.0 + b.t_ir / b.t_c)
    )


@dataclass
class OptimalBudget:
    t_c: float
    n_fb: int
    n_ro: int
    eta: float
    budget: SensitivityBudget
    eta_vs_n_ro: np.ndarray  # eta slice at the optimal (t_c, n_fb)


def optimize_budget(
    t_c_grid,
    n_fb_grid,
    n_ro_grid,
    coherence_of_t_c,
    f_i_of_n_fb,
    f_r_of_n_ro,
    overhead,
) -> OptimalBudget:
    """Derivative-free minimization of the sensitivity over the protocol knobs.

    ``coherence_of_t_c``, ``f_i_of_n_fb`` and ``f_r_of_n_ro`` are the
    trade-off curves C(T_C), F_i(n_feedback), F_r(n_readout);
    ``overhead(n_fb, n_ro)`` returns the dead time in seconds. The search is
    an exhaustive grid scan; ties keep the earliest grid point.
    """
    t_c_grid = np.asarray(t_c_grid, dtype=float)
    n_fb_grid = np.asarray(n_fb_grid, dtype=int)
    n_ro_grid = np.asarray(n_ro_grid, dtype=int)
    if t_c_grid.size == 0 or n_fb_grid.size == 0 or n_ro_grid.size == 0:
        raise ValueError("all grids must be nonempty")

    best = None
    for t_c in t_c_grid:
        c = float(coherence_of_t_c(t_c))
        for n_fb in n_fb_grid:
            f_i = float(f_i_of_n_fb(int(n_fb)))
            for n_ro in n_ro_grid:
                f_r = float(f_r_of_n_ro(int(n_ro)))
                b = SensitivityBudget(
                    t_c=float(t_c),
                    c=c,
                    f_i=f_i,
                    f_r=f_r,
                    t_ir=float(overhead(int(n_fb), int(n_ro))),
                )
                eta = eta_from_budget(b)
                if best is None or eta < best[0]:
                    best = (eta, float(t_c), int(n_fb), int(n_ro), b)
    eta, t_c, n_fb, n_ro, budget = best
    slice_eta = np.array(
        [
            eta_from_budget(
                SensitivityBudget(
                    t_c=t_c,
                    c=float(coherence_of_t_c(t_c)),
                    f_i=float(f_i_of_n_fb(n_fb)),
                    f_r=float(f_r_of_n_ro(int(n))),
                    t_ir=float(overhead(n_fb, int(n))),
                )
            )
            for n in n_ro_grid
        ]
    )
    return OptimalBudget(t_c, n_fb, n_ro, eta, budget, slice_eta)


@dataclass
class FringeFit:
    """Photon-count fringe N_ph(V) = a sin(gamma_e T B_V V + phi) + c."""

    a: float
    c_offset: float
    b_v: float  # T/V
    b_v_sigma: float
    phi: float  # rad
    t_interrogation: float
    covariance: np.ndarray


def fit_fringe(volts, counts, t_interrogation, gamma_e=GAMMA_E) -> FringeFit:
    """Least-squares fringe fit returning the field-per-volt coefficient.

    Raises AmbiguityError when the voltage sweep covers less than one full
    fringe period and DegenerateFitError when the fringe has no contrast.
    """
    volts = np.asarray(volts, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if volts.shape != counts.shape or volts.ndim != 1:
        raise ValueError("volts and counts must be 1-D and equally long")
    if len(volts) < 8:
        raise ValueError("need at least 8 fringe points")
    span = volts.max() - volts.min()
    if span <= 0:
        raise ValueError("voltage sweep has zero span")

    c0 = float(np.mean(counts))
    a0 = float(np.sqrt(2.0) * np.std(counts))
    if a0 == 0.0:
        raise DegenerateFitError("fringe has zero contrast")
    # frequency guess from the dominant Fourier component on a uniform grid
    grid = np.linspace(volts.min(), volts.max(), 4 * len(volts))
    resampled = np.interp(grid, volts[np.argsort(volts)], counts[np.argsort(volts)])
    spectrum = np.abs(np.fft.rfft(resampled - resampled.mean()))
    freqs = np.fft.rfftfreq(len(grid), grid[1] - grid[0])
    k0 = 2 * np.pi * freqs[1 + int(np.argmax(spectrum[1:]))]

    def model(v, a, k, phi, c):
        return a * np.sin(k * v + phi) + c

    try:
        popt, pcov = curve_fit(
            model,
            volts,
            counts,
            p0=(a0, k0, 0.0, c0),
            bounds=(
                [0.0, 0.1 * k0, -2 * np.pi, -np.inf],
                [np.inf, 10 * k0, 2 * np.pi, np.inf],
            ),
            maxfev=20000,
        )
    except (RuntimeError, ValueError) as exc:
        raise DegenerateFitError("fringe fit did not converge") from exc
    a, k, phi, c = popt
    if a < 1e-12 * max(abs(c), 1.0):
        raise DegenerateFitError("fitted fringe contrast is zero")
    if k * span < 2 * np.pi:
        raise AmbiguityError(
            "voltage sweep covers less than one fringe period; "
            "the field-per-volt coefficient is ambiguous"
        )
    scale = gamma_e * t_interrogation
    return FringeFit(
        a=float(a),
        c_offset=float(c),
        b_v=float(k / scale),
        b_v_sigma=float(np.sqrt(pcov[1, 1]) / scale),
        phi=float(phi),
        t_interrogation=float(t_interrogation),
        covariance=pcov,
    )


def sensitivity_from_timeseries(
    outcomes,
    signal_amplitude: float,
    shot_duration: float,
    n_windows: int = 50,
):
    """Sensitivity versus averaging time from demodulated per-shot outcomes.

    ``outcomes`` is the per-shot signal estimate (already demodulated so its
    mean is proportional to the applied amplitude). For each averaging time
    t the signal-to-noise ratio is mean / standard error over the first
    t / shot_duration shots, and eta(t) = amplitude * sqrt(t) / SNR(t).

    Returns (times, eta_curve, asymptote); the asymptote averages the final
    half decade.
    """
    x = np.asarray(outcomes, dtype=float)
    if len(x) < 100:
        raise ValueError("need at least 100 shots")
    if signal_amplitude <= 0 or shot_duration <= 0:
        raise ValueError("amplitude and shot duration must be > 0")
    if np.std(x) == 0:
        raise DegenerateFitError("zero-variance outcomes carry no noise scale")

    ns = np.unique(np.geomspace(100, len(x), n_windows).astype(int))
    times = ns * shot_duration
    eta = np.empty(len(ns))
    for i, n in enumerate(ns):
        seg = x[:n]
        mu = abs(np.mean(seg))
        sem = np.std(seg, ddof=1) / np.sqrt(n)
        snr = mu / sem if sem > 0 else np.inf
        if snr == 0 or not np.isfinite(snr):
            eta[i] = np.inf if snr == 0 else 0.0
        else:
            eta[i] = signal_amplitude * np.sqrt(times[i]) / snr
    tail = times >= times[-1] / np.sqrt(10.0)
    asymptote = float(np.mean(eta[tail]))
    return times, eta, asymptote


def erl_compute(eta: float, l_eff: float) -> float:
    """Energy resolution per bandwidth eta^2 l^3 / (2 mu_0 hbar), in hbar."""
    if eta < 0 or l_eff <= 0:
        raise ValueError("eta must be >= 0 and l_eff > 0")
    return eta**2 * l_eff**3 / (2.0 * MU_0 * HBAR)


def db_below_quantum_limit(e_r_hbar: float) -> float:
    """Power decibels below E_R = hbar: 10 log10(1 / E_R)."""
    if e_r_hbar <= 0:
        raise ValueError("E_R must be > 0")
    return 10.0 * math.log10(1.0 / e_r_hbar)


@dataclass(frozen=True)
class MagnetometerRecord:
    """One row of the cross-platform energy-resolution comparison."""

    kind: str
    l_eff: float  # m
    eta: float  # T/sqrt(Hz)
    ref: str
    e_r: float  # stored value, hbar


_MAGNETOMETER_HEADER = "kind,l_eff_m,eta_t_per_sqrt_hz,ref,e_r_hbar"


def magnetometer_records_from_csv(text: str) -> list[MagnetometerRecord]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != _MAGNETOMETER_HEADER:
        raise ValueError(f"missing header {_MAGNETOMETER_HEADER!r}")
    if len(lines) == 1:
        raise ValueError("magnetometer table has no rows")
    out = []
    for ln in lines[1:]:
        kind, l_eff, eta, ref, e_r = (f.strip() for f in ln.split(","))
        out.append(
            MagnetometerRecord(kind, float(l_eff), float(eta), ref, float(e_r))
        )
    return out


def magnetometer_records_to_csv(records) -> str:
    buf = io.StringIO()
    buf.write(_MAGNETOMETER_HEADER + "\n")
    for r in records:
        buf.write(f"{r.kind},{r.l_eff!r},{r.eta!r},{r.ref},{r.e_r!r}\n")
    return buf.getvalue()


def load_reference_magnetometers() -> list[MagnetometerRecord]:
    """The bundled cross-platform comparison table."""
    text = (
        importlib.resources.files("nvsense.data")
        .joinpath("magnetometers.csv")
        .read_text()
    )
    return magnetometer_records_from_csv(text)


def erl_table_check(records) -> list[dict]:
    """Recompute E_R for each record and compare with the stored value.

    Returns one report dict per row; rows whose stored and recomputed E_R
    disagree by more than 10% are flagged inconsistent rather than rejected.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to check")
    out = []
    for r in records:
        computed = erl_compute(r.eta, r.l_eff)
        rel = abs(computed - r.e_r) / r.e_r
        out.append(
            {
                "kind": r.kind,
                "ref": r.ref,
                "l_eff_m": r.l_eff,
                "e_r_stored_hbar": r.e_r,
                "e_r_computed_hbar": computed,
                "relative_deviation": rel,
                "db_below_limit": (
                    db_below_quantum_limit(computed) if computed < 1.0 else None
                ),
                "consistent": bool(rel <= 0.10),
            }
        )
    return out

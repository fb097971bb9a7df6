"""Gradient-ascent pulse engineering for shaped pi and pi/2 pulses.

Waveforms are piecewise-constant complex Rabi drives on a two-level
subspace. With Rabi frequency Omega (Hz) and detuning delta (Hz), the
piece Hamiltonian in rad/s is

    H = pi * scale * (Omega_re * sigma_x + Omega_im * sigma_y) + pi * delta * sigma_z

so a constant resonant drive of duration t performs a rotation by
2*pi*Omega*t. Gate quality is the ensemble-weighted phase-insensitive
fidelity |Tr(U_target^dag U)|^2 / d^2. Gradients are exact (Frechet
derivative of the matrix exponential), not the first-order GRAPE
approximation.
"""

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, expm_frechet

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def rotation_target(angle: float, axis: str = "x") -> np.ndarray:
    """Unitary for a rotation by ``angle`` about x or y."""
    sigma = SIGMA_X if axis == "x" else SIGMA_Y
    return expm(-0.5j * angle * sigma)


@dataclass(frozen=True)
class EnsembleMember:
    """One robustness-ensemble member: a detuning and an amplitude scale."""

    detuning_hz: float
    amplitude_scale: float
    weight: float


@dataclass(frozen=True)
class GrapeProblem:
    """Specification of one shaped-pulse optimization.

    The robustness ensemble emulates simultaneous control of the electron
    spin in both nuclear-spin subspaces: the default detunings are
    {0, +-A_par/2}.
    """

    target: np.ndarray
    n_pieces: int
    piece_duration: float
    max_rabi_hz: float
    ensemble: tuple = (
        EnsembleMember(0.0, 1.0, 0.5),
        EnsembleMember(+3.03e6 / 2, 1.0, 0.25),
        EnsembleMember(-3.03e6 / 2, 1.0, 0.25),
    )

    def __post_init__(self):
        if self.n_pieces < 1:
            raise ValueError("n_pieces must be >= 1")
        if self.piece_duration <= 0 or self.max_rabi_hz <= 0:
            raise ValueError("piece_duration and max_rabi_hz must be > 0")
        w = sum(m.weight for m in self.ensemble)
        if abs(w - 1.0) > 1e-9:
            raise ValueError(f"ensemble weights sum to {w}, expected 1")


@dataclass
class Waveform:
    """Piecewise-constant complex Rabi waveform (Hz per piece)."""

    real_rabi_hz: np.ndarray
    imag_rabi_hz: np.ndarray
    piece_duration: float

    def __post_init__(self):
        self.real_rabi_hz = np.asarray(self.real_rabi_hz, dtype=float)
        self.imag_rabi_hz = np.asarray(self.imag_rabi_hz, dtype=float)
        if self.real_rabi_hz.shape != self.imag_rabi_hz.shape:
            raise ValueError("real/imag parts must have the same length")

    @property
    def n_pieces(self) -> int:
        return len(self.real_rabi_hz)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.hypot(self.real_rabi_hz, self.imag_rabi_hz)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# piece_duration_s={float(self.piece_duration)!r}\n")
        buf.write("piece_index,real_rabi_hz,imag_rabi_hz\n")
        for k, (re, im) in enumerate(zip(self.real_rabi_hz, self.imag_rabi_hz)):
            buf.write(f"{k},{float(re)!r},{float(im)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Waveform":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines[0].startswith("# piece_duration_s="):
            raise ValueError("missing piece_duration header comment")
        dt = float(lines[0].split("=", 1)[1])
        re, im = [], []
        for ln in lines[2:]:
            _, r, i = ln.split(",")
            re.append(float(r))
            im.append(float(i))
        return cls(np.array(re), np.array(im), dt)


_PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])


def _rotation_and_derivs(v: np.ndarray, dt: float, want_grad: bool):
    """U = exp(-i dt v.sigma) and dU/dv_a for a traceless 2x2 Hamiltonian.

    ``v`` is the real Pauli vector in rad/s. Closed-form Rodrigues
    expressions; exact, no Pade approximation needed at d=2.
    """
    r = float(np.linalg.norm(v))
    theta = r * dt
    if r < 1e-30:
        u = np.eye(2, dtype=complex)
        dus = [-1j * dt * _PAULI[a] for a in range(3)] if want_grad else None
        return u, dus
    n = v / r
    nsig = np.tensordot(n, _PAULI, axes=1)
    c, s = np.cos(theta), np.sin(theta)
    u = c * np.eye(2) - 1j * s * nsig
    if not want_grad:
        return u, None
    dus = []
    for a in range(3):
        du = (
            -s * dt * n[a] * np.eye(2)
            - 1j * (c * dt * n[a] * nsig + (s / r) * (_PAULI[a] - n[a] * nsig))
        )
        dus.append(du)
    return u, dus


def _member_fidelity_grad(problem, wf, member, want_grad):
    dt = wf.piece_duration
    s = member.amplitude_scale
    n = wf.n_pieces
    vs = np.column_stack(
        [
            np.pi * s * wf.real_rabi_hz,
            np.pi * s * wf.imag_rabi_hz,
            np.full(n, np.pi * member.detuning_hz),
        ]
    )
    us, dus = [], []
    for k in range(n):
        u, du = _rotation_and_derivs(vs[k], dt, want_grad)
        us.append(u)
        dus.append(du)
    # forward partial products F_k = U_k ... U_1 and backward B_k = U_n ... U_{k+1}
    fwd = [np.eye(2, dtype=complex)]
    for u in us:
        fwd.append(u @ fwd[-1])
    bwd = [np.eye(2, dtype=complex)]
    for u in reversed(us):
        bwd.append(bwd[-1] @ u)
    bwd = bwd[::-1]  # bwd[k] = U_n ... U_{k+1}

    u_total = fwd[-1]
    t_dag = problem.target.conj().T
    tr = np.trace(t_dag @ u_total)
    fid = abs(tr) ** 2 / 4.0
    if not want_grad:
        return fid, None

    grad_re = np.zeros(n)
    grad_im = np.zeros(n)
    for k in range(n):
        for axis, grad in ((0, grad_re), (1, grad_im)):
            dtr = np.trace(t_dag @ (bwd[k + 1] @ dus[k][axis] @ fwd[k]))
            grad[k] = 2.0 * np.real(np.conj(tr) * np.pi * s * dtr) / 4.0
    return fid, (grad_re, grad_im)


def fidelity(problem: GrapeProblem, wf: Waveform) -> float:
    """Ensemble-weighted gate fidelity in [0, 1]."""
    if wf.n_pieces != problem.n_pieces:
        raise ValueError("waveform length does not match problem")
    return sum(
        m.weight * _member_fidelity_grad(problem, wf, m, False)[0]
        for m in problem.ensemble
    )


def grape_gradient(problem: GrapeProblem, wf: Waveform):
    """Exact gradient of the fidelity w.r.t. per-piece real/imag amplitudes.

    Returns (grad_real, grad_imag) in units of 1/Hz.
    """
    if wf.n_pieces != problem.n_pieces:
        raise ValueError("waveform length does not match problem")
    grad_re = np.zeros(problem.n_pieces)
    grad_im = np.zeros(problem.n_pieces)
    for m in problem.ensemble:
        _, (gre, gim) = _member_fidelity_grad(problem, wf, m, True)
        grad_re += m.weight * gre
        grad_im += m.weight * gim
    return grad_re, grad_im


def project_amplitude(wf: Waveform, max_rabi_hz: float) -> Waveform:
    """Radially clip each piece to |Omega| <= max_rabi_hz."""
    amp = wf.amplitudes
    scale = np.where(amp > max_rabi_hz, max_rabi_hz / np.maximum(amp, 1e-300), 1.0)
    return Waveform(wf.real_rabi_hz * scale, wf.imag_rabi_hz * scale, wf.piece_duration)


@dataclass
class OptimizeResult:
    waveform: Waveform
    fidelity: float
    trace: np.ndarray  # fidelity after each accepted step
    converged: bool
    n_iterations: int


def optimize(
    problem: GrapeProblem,
    seed_waveform: Waveform | None = None,
    seed: int = 0,
    target_infidelity: float = 1e-5,
    max_iterations: int = 20000,
    n_restarts: int = 4,
) -> OptimizeResult:
    """Projected gradient ascent with Armijo backtracking line search.

    Deterministic given ``seed``. On non-convergence the best waveform seen
    is returned with ``converged=False``.
    """
    rng = np.random.default_rng(seed)
    best = None
    starts = []
    if seed_waveform is not None:
        starts.append(seed_waveform)
        n_restarts = 0
    for _ in range(max(1, n_restarts + 1) - len(starts)):
        amp = 0.3 * problem.max_rabi_hz
        starts.append(
            Waveform(
                rng.uniform(-amp, amp, problem.n_pieces),
                rng.uniform(-amp, amp, problem.n_pieces),
                problem.piece_duration,
            )
        )

    for start in starts:
        res = _ascend(problem, start, target_infidelity, max_iterations)
        if best is None or res.fidelity > best.fidelity:
            best = res
        if best.converged:
            break
    return best


def _ascend(problem, wf, target_infidelity, max_iterations):
    wf = project_amplitude(wf, problem.max_rabi_hz)
    f = fidelity(problem, wf)
    trace = [f]
    step = 1.0  # in units of max_rabi^2 per unit gradient, rescaled below
    it = 0
    while it < max_iterations and 1.0 - f > target_infidelity:
        it += 1
        gre, gim = grape_gradient(problem, wf)
        gnorm2 = float(np.sum(gre**2) + np.sum(gim**2))
        if gnorm2 == 0.0:
            break
        # scale so the first trial moves a fraction of the amplitude bound
        gmax = np.sqrt(np.max(gre**2 + gim**2))
        step = max(step, 1e-3 * problem.max_rabi_hz / gmax)
        accepted = False
        while step * gmax > 1e-12 * problem.max_rabi_hz:
            cand = project_amplitude(
                Waveform(
                    wf.real_rabi_hz + step * gre,
                    wf.imag_rabi_hz + step * gim,
                    wf.piece_duration,
                ),
                problem.max_rabi_hz,
            )
            f_cand = fidelity(problem, cand)
            gain = (
                np.sum(gre * (cand.real_rabi_hz - wf.real_rabi_hz))
                + np.sum(gim * (cand.imag_rabi_hz - wf.imag_rabi_hz))
            )
            if f_cand >= f + 1e-4 * gain and f_cand > f:
                wf, f = cand, f_cand
                trace.append(f)
                step *= 2.0
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return OptimizeResult(
        waveform=wf,
        fidelity=f,
        trace=np.array(trace),
        converged=bool(1.0 - f <= target_infidelity),
        n_iterations=it,
    )

"""Fixed-step RK4 integration of contact Hamilton and evolution equations."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .contactcore import ContactState, ContactVectorField, dimension_n
from .diffcore import ScalarField, TapeField
from .errors import EvaluationError

BLOWUP_THRESHOLD = 1e12
KINDS = ("hamiltonian", "evolution")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    kind: str
    H: np.ndarray
    blew_up: bool = False
    names: tuple[str, ...] | None = None

    def __len__(self):
        return self.times.shape[0]

    @property
    def n(self) -> int:
        return dimension_n(self.states.shape[1])

    def state(self, k: int) -> ContactState:
        return ContactState.from_array(self.states[k])

    def column_names(self) -> list[str]:
        if self.names is not None:
            return list(self.names)
        n = self.n
        return [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)] + ["z"]

    def records(self) -> list[dict]:
        cols = self.column_names()
        out = []
        for t, x, h in zip(self.times, self.states, self.H):
            rec = {"t": float(t)}
            rec.update({c: float(v) for c, v in zip(cols, x)})
            rec["H"] = float(h)
            out.append(rec)
        return out

    def to_csv(self) -> str:
        lines = [",".join(["t"] + self.column_names() + ["H"])]
        for t, x, h in zip(self.times, self.states, self.H):
            lines.append(",".join(repr(float(v)) for v in (t, *x, h)))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.records())


def sample_times(t_end: float, dt: float) -> np.ndarray:
    """``0, dt, 2dt, ...`` ending exactly on ``t_end``; the last step may be shorter."""
    if not (dt > 0 and t_end > 0):
        raise ValueError("need dt > 0 and t_end > 0")
    steps = int(math.floor(t_end / dt))
    times = np.arange(steps + 1, dtype=float) * dt
    # a remainder below rounding noise is absorbed into the last full step
    if t_end - times[-1] > 1e-9 * dt:
        times = np.append(times, t_end)
    else:
        times[-1] = t_end
    return times


def _rk4_generic(field: ContactVectorField, H: ScalarField, x0, times, threshold):
    m = times.shape[0]
    states = np.zeros((m, x0.shape[0]))
    hvals = np.zeros(m)
    states[0] = x0
    for k in range(m - 1):
        h = times[k + 1] - times[k]
        x = states[k]
        k1 = field.evaluate(x)
        k2 = field.evaluate(x + 0.5 * h * k1)
        k3 = field.evaluate(x + 0.5 * h * k2)
        k4 = field.evaluate(x + h * k3)
        nxt = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(nxt)) or np.any(np.abs(nxt) > threshold):
            hvals[: k + 1] = H.values(states[: k + 1])
            return states, hvals, _kernels.BLOWUP, k + 1
        states[k + 1] = nxt
    hvals[:] = H.values(states)
    return states, hvals, _kernels.OK, m


def integrate(H: ScalarField, kind: str, x0, t_end: float, dt: float,
              threshold: float = BLOWUP_THRESHOLD) -> Trajectory:
    """Classical RK4 samples of the integral curve of ``X_H`` or ``E_H``.

    Compiled fields run entirely inside the kernel module.  If any component
    exceeds ``threshold`` the integration stops and the partial trajectory is
    returned with ``blew_up`` set.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    x0 = x0.as_array() if isinstance(x0, ContactState) else np.asarray(x0, dtype=float)
    if x0.shape != (H.dim,):
        raise ValueError(f"initial state needs {H.dim} components")
    n = dimension_n(H.dim)
    times = sample_times(t_end, dt)
    if isinstance(H, TapeField):
        states, hvals, status, count = _kernels.rk4_contact(
            H.tape, x0, n, kind == "evolution", times, threshold)
    else:
        states, hvals, status, count = _rk4_generic(
            ContactVectorField(H, kind), H, x0, times, threshold)
    if status not in (_kernels.OK, _kernels.BLOWUP):
        raise EvaluationError(_kernels.STATUS_MESSAGES.get(status, "evaluation failed")
                              + f" near t={times[count - 1]:g}")
    return Trajectory(times[:count].copy(), states[:count].copy(), kind, hvals[:count].copy(),
                      status == _kernels.BLOWUP, H.names)


@dataclass
class DissipationReport:
    kind: str
    H: np.ndarray
    conservation_drift: float
    rate_defect: float | None = None
    decay_rate: float | None = None
    notes: list = field(default_factory=list)


def dissipation_report(traj: Trajectory, H: ScalarField) -> DissipationReport:
    """Diagnostics of ``H`` along a trajectory.

    Every run reports ``max |H(t) - H(0)|``.  Hamiltonian runs also report
    ``max |d/dt log H + dH/dz|`` (central differences in ``t`` on interior
    samples where ``H != 0``) and the mean observed decay rate ``-d/dt log H``.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    hv = traj.H
    drift = float(np.max(np.abs(hv - hv[0])))
    rep = DissipationReport(traj.kind, hv.copy(), drift)
    if traj.kind != "hamiltonian":
        return rep
    if len(traj) < 3:
        rep.notes.append("too few samples for a rate estimate")
        return rep
    t = traj.times
    if np.all(hv == hv[0]):
        _, G = H.value_and_gradient(traj.states)
        hz = G[:, -1]
        rep.rate_defect = float(np.max(np.abs(hz))) if hv[0] != 0 else 0.0
        rep.decay_rate = 0.0
        return rep
    interior = slice(1, len(traj) - 1)
    ok = (hv[:-2] != 0) & (hv[2:] != 0) & (np.sign(hv[:-2]) == np.sign(hv[2:]))
    if not np.any(ok):
        rep.notes.append("H vanishes or changes sign; no rate estimate")
        return rep
    dlog = (np.log(np.abs(hv[2:])) - np.log(np.abs(hv[:-2]))) / (t[2:] - t[:-2])
    _, G = H.value_and_gradient(traj.states[interior])
    hz = G[:, -1]
    rep.rate_defect = float(np.max(np.abs(dlog[ok] + hz[ok])))
    rep.decay_rate = float(np.mean(-dlog[ok]))
    return rep

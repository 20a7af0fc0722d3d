"""Compare the numba kernels with the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Both paths run in this process: the module-level functions of
``contacthj._kernels`` are called directly, so ``CONTACTHJ_NUMBA`` only
matters for which one the library dispatches to.  JIT compilation is done
once before timing.
"""

import argparse
import time

import numpy as np

from contacthj import _kernels as K
from contacthj.exprdsl import compile_source, contact_layout
from contacthj.flows import sample_times

H_SRC = "p1^2/(2*m) + q1^2/2 + lam*z"
H_BIG = "p1^2/2 - cos(q1) + 0.1*sin(z)*sqrt(1 + p1^2) + log(2 + cos(q1))*arcsinh(z)/(3 + abs(z))"


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--points", type=int, default=100_000)
    args = ap.parse_args()

    if not K.HAVE_NUMBA:
        print("numba backend disabled (CONTACTHJ_NUMBA=0 or numba missing); nothing to compare")
        return

    lay = contact_layout(1, params={"m": 1.0, "lam": 0.1})
    X = np.random.default_rng(0).uniform(-2, 2, size=(args.points, 3))
    times = sample_times(10.0, 1e-3)
    x0 = np.array([1.0, 1.0, 1.0])

    rows = []
    for label, src in (("linear", H_SRC), ("transcendental", H_BIG)):
        t = compile_source(src, lay).tape
        tape = (t.ops, t.arg0, t.arg1, t.consts)
        cases = {
            "eval": (lambda: K.eval_batch_numba(*tape, X), lambda: K.eval_batch_numpy(*tape, X)),
            "eval+grad": (lambda: K.eval_grad_batch_numba(*tape, X),
                          lambda: K.eval_grad_batch_numpy(*tape, X)),
            "rk4 10^4 steps": (
                lambda: K.rk4_contact_numba(*tape, x0, 1, False, times, 1e12),
                lambda: K.rk4_contact_numpy(*tape, x0, 1, False, times, 1e12)),
        }
        for name, (nb, npy) in cases.items():
            nb()  # compile
            a = best_of(nb, args.repeat)
            b = best_of(npy, 1 if name.startswith("rk4") else args.repeat)
            rows.append((label, name, a, b))

    print(f"{'hamiltonian':<16}{'kernel':<18}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for label, name, a, b in rows:
        print(f"{label:<16}{name:<18}{a:>12.4f}{b:>12.4f}{b / a:>10.1f}")


if __name__ == "__main__":
    main()

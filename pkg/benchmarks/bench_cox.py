"""Benchmark the Cox kernel backends: compiled Cython vs pure NumPy.

Times a single (loglik, gradient, Hessian) evaluation and a full Newton fit
on synthetic data of several sizes. Run as ``python benchmarks/bench_cox.py``.
"""

import time

import numpy as np

from frailty_metrics.survival import _core, _kernel_py
from frailty_metrics.survival._core import SurvivalData, fit_cox

try:
    from frailty_metrics.survival import _kernel as _kernel_c
except ImportError:
    _kernel_c = None


def make_data(n, p, seed=0, tie_fraction=0.5):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    time_v = rng.exponential(10.0, size=n)
    tied = rng.uniform(size=n) < tie_fraction
    time_v[tied] = np.round(time_v[tied], 0) + 1.0
    event = (rng.uniform(size=n) < 0.75).astype(np.int64)
    event[0] = 1
    return x, time_v, event


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_eval(kernel, prep, beta):
    eta = np.ascontiguousarray(prep.x @ beta)
    shift = float(eta.max())

    def run():
        kernel.cox_stats(prep.x, prep.event, prep.group_start, prep.group_end,
                         prep.term_group, prep.frac, eta, shift)
    return best_of(run)


def bench_fit(impl, x, time_v, event):
    saved = _core._impl
    _core._impl = impl
    try:
        data = SurvivalData(x=x, time=time_v, event=event, ties="efron")
        return best_of(lambda: fit_cox(data), repeats=3)
    finally:
        _core._impl = saved


def main():
    print(f"selected backend at import: {_core.KERNEL_BACKEND}")
    if _kernel_c is None:
        print("compiled kernel unavailable; timing the pure backend only\n")

    header = (f"{'n':>7} {'p':>3} | {'eval pure':>11} {'eval comp':>11} "
              f"{'speedup':>8} | {'fit pure':>11} {'fit comp':>11} {'speedup':>8}")
    print(header)
    print("-" * len(header))
    for n in (1000, 5000, 20000):
        for p in (2, 10):
            x, time_v, event = make_data(n, p)
            prep = _core._prepare(np.asarray(x, dtype=np.float64),
                                  np.asarray(time_v, dtype=np.float64),
                                  np.asarray(event, dtype=np.int64), "efron")
            beta = np.full(p, 0.1)
            t_eval_py = bench_eval(_kernel_py, prep, beta)
            t_fit_py = bench_fit(_kernel_py, x, time_v, event)
            if _kernel_c is not None:
                t_eval_c = bench_eval(_kernel_c, prep, beta)
                t_fit_c = bench_fit(_kernel_c, x, time_v, event)
                print(f"{n:>7} {p:>3} | {t_eval_py * 1e3:>9.2f}ms "
                      f"{t_eval_c * 1e3:>9.2f}ms {t_eval_py / t_eval_c:>7.1f}x | "
                      f"{t_fit_py * 1e3:>9.2f}ms {t_fit_c * 1e3:>9.2f}ms "
                      f"{t_fit_py / t_fit_c:>7.1f}x")
            else:
                print(f"{n:>7} {p:>3} | {t_eval_py * 1e3:>9.2f}ms {'-':>11} "
                      f"{'-':>8} | {t_fit_py * 1e3:>9.2f}ms {'-':>11} {'-':>8}")


if __name__ == "__main__":
    main()

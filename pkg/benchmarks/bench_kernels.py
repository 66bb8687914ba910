"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints best-of-``repeat`` wall time per call for each kernel and backend,
and checks that both backends agree on every input.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from rankaudit import _fallback
from rankaudit.ranking import ComparisonGraph, to_transition_matrix

try:
    from rankaudit import _kernels
except ImportError:  # extension not built
    _kernels = None


def _transition(n: int, rng: np.random.Generator) -> np.ndarray:
    theta = np.exp(rng.uniform(0, np.log(10), n))
    wins = np.zeros((n, n), dtype=np.int64)
    a, b = np.triu_indices(n, 1)
    keep = rng.random(a.size) < 0.4
    for i, j in zip(a[keep], b[keep]):
        w = rng.binomial(25, theta[j] / (theta[i] + theta[j]))
        wins[i, j], wins[j, i] = w, 25 - w
    return to_transition_matrix(ComparisonGraph(tuple(map(str, range(n))), wins)).matrix


def cases(rng: np.random.Generator):
    for n in (50, 200, 500):
        P = _transition(n, rng)
        yield f"power_iteration n={n}", "power_iteration", (P, 1e-12, 100_000)
    for n in (500, 2000):
        yield (
            f"all_thresholds n={n}",
            "all_thresholds",
            (rng.normal(size=n), rng.permutation(n).astype(np.int64), np.sort(rng.normal(size=n - 1))),
        )
    for n in (1000, 100_000):
        yield f"midranks n={n}", "midranks", (rng.integers(0, n // 4, size=n).astype(float),)


def _agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_agree(x, y) for x, y in zip(a, b))
    return bool(np.allclose(a, b, rtol=1e-9, atol=1e-12))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    backends = {"numpy": _fallback}
    if _kernels is not None:
        backends["cython"] = _kernels
    else:
        print("compiled kernels unavailable; timing the numpy fallback only")
    print(f"{'kernel':<28}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    for label, fn, inputs in cases(np.random.default_rng(args.seed)):
        times, outputs = {}, {}
        for name, mod in backends.items():
            f = getattr(mod, fn)
            outputs[name] = f(*inputs)
            number = max(1, int(0.2 / max(timeit.timeit(lambda: f(*inputs), number=1), 1e-6)))
            times[name] = min(timeit.repeat(lambda: f(*inputs), number=number, repeat=args.repeat)) / number
        speedup = times["numpy"] / times["cython"] if "cython" in times else float("nan")
        ok = "" if len(outputs) < 2 or _agree(outputs["numpy"], outputs["cython"]) else "  MISMATCH"
        print(f"{label:<28}" + "".join(f"{times[n] * 1e3:>12.3f}ms" for n in backends) + f"{speedup:>9.1f}x{ok}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

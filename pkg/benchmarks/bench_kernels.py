"""Benchmark: compiled extension kernels vs the pure-Python twin.

Times the two hot factorizations at the sizes the solvers use, then an
end-to-end iterative-alignment solve under each backend (the backend is
chosen at import, so the end-to-end pure number comes from a subprocess
with IA_LAB_PURE=1).

Run from the repository root:  python3 benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np


def time_call(fn, args_list, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for args in args_list:
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / len(args_list))
    return best


def random_hermitian(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return np.ascontiguousarray((a + a.conj().T) / 2)


def main():
    from ialab.numerics import _pykernels
    try:
        from ialab.numerics import _ckernels
    except ImportError:
        print("compiled backend not built; run: python3 setup.py build_ext --inplace")
        return 1

    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'pure':>12}{'compiled':>12}{'speedup':>10}")
    for n in (2, 4, 8, 12):
        mats = [(random_hermitian(rng, n),) for _ in range(200)]
        t_py = time_call(_pykernels.jacobi_eigh, mats)
        t_c = time_call(_ckernels.jacobi_eigh, mats)
        print(f"{f'jacobi_eigh {n}x{n}':<28}{t_py * 1e6:>10.1f}us{t_c * 1e6:>10.1f}us"
              f"{t_py / t_c:>9.1f}x")
    for rows, cols in ((6, 2), (12, 4)):
        mats = [(rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols)),)
                for _ in range(200)]
        t_py = time_call(_pykernels.hestenes_svd, mats)
        t_c = time_call(_ckernels.hestenes_svd, mats)
        print(f"{f'hestenes_svd {rows}x{cols}':<28}{t_py * 1e6:>10.1f}us{t_c * 1e6:>10.1f}us"
              f"{t_py / t_c:>9.1f}x")

    snippet = (
        "import time, numpy as np;"
        "from ialab.channel import NetworkConfig, sample_channels;"
        "from ialab import alignment as al, numerics;"
        "cfg = NetworkConfig(k_users=3, m_antennas=2, streams=1, noise_power=1.0, p_max=10.0);"
        "tables = [sample_channels(cfg, s).table(0) for s in range(40)];"
        "t0 = time.perf_counter();"
        "[al.run_iterative_alignment(t, cfg, variant='leakage_min', max_iters=500,"
        " tol=1e-9, seed=i) for i, t in enumerate(tables)];"
        "print(numerics.BACKEND, (time.perf_counter() - t0) / len(tables))"
    )
    results = {}
    for pure in ("", "1"):
        env = dict(os.environ)
        env["IA_LAB_PURE"] = pure
        out = subprocess.run([sys.executable, "-c", snippet], capture_output=True,
                             text=True, env=env, check=True).stdout.split()
        results[out[0]] = float(out[1])
    t_py, t_c = results["python"], results["compiled"]
    print(f"{'leakage-min solve (e2e)':<28}{t_py * 1e3:>10.1f}ms{t_c * 1e3:>10.1f}ms"
          f"{t_py / t_c:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())

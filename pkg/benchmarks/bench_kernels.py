"""Time the compiled kernels against the NumPy fallback on a layered sphere.

    python3 benchmarks/bench_kernels.py [--edge 1.0] [--repeat 3]

Both backends are run on identical inputs and their results are compared.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from ticem import kernels
from ticem.assembly import stiffness_pattern
from ticem.electrode import ElectrodeModel, ImpedanceVector
from ticem.materials import GM, SKIN, SKULL, TissueTable, build_admittivity_field
from ticem.mesh import attach_electrode, generate_layered_sphere, tet_gradients
from ticem.assembly import assemble
from ticem.solver import _minv, _prepared, SolveOptions


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--edge", type=float, default=1.0, help="target edge length in mm")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    mesh = generate_layered_sphere([8.0, 9.0, 10.0], [GM, SKULL, SKIN], args.edge)
    mesh = mesh.with_patches([attach_electrode(mesh, np.array([1.0, 0, 0]), 4.0, "a"),
                              attach_electrode(mesh, np.array([-1.0, 0, 0]), 4.0, "b")])
    fld = build_admittivity_field(mesh, TissueTable.default(), 1000.0)
    Z = ImpedanceVector.from_models([ElectrodeModel()] * 2)
    sys_ = assemble(mesh, fld, Z)
    print(f"mesh: {mesh.n_nodes} nodes, {mesh.n_tets} tets")

    grads, vol = tet_gradients(mesh.nodes, mesh.tets)
    grads, vol = np.ascontiguousarray(grads), np.ascontiguousarray(vol)
    _, indices, pos = stiffness_pattern(mesh.tets, mesh.n_nodes)
    zeta = np.ascontiguousarray(fld.zeta / 1e3)
    indptr, idx, data, _, diag = _prepared(sys_.A)
    minv = _minv(diag, SolveOptions())
    b = np.ascontiguousarray(sys_.B[:, 0])

    results = {}
    for name, mod in kernels.backends().items():
        ta, K = best_of(lambda: mod.scatter_stiffness(grads, vol, zeta, pos, len(indices)),
                        args.repeat)
        ts, (x, it, res) = best_of(lambda: mod.cocg(indptr, idx, data, b, minv, 1e-10, 20000),
                                   args.repeat)
        results[name] = (np.asarray(K), np.asarray(x))
        print(f"{name:>7}: stiffness scatter {1e3 * ta:8.2f} ms   "
              f"COCG {1e3 * ts:8.2f} ms ({it} iterations, residual {res:.2e})")
    if len(results) == 2:
        (K1, x1), (K2, x2) = results.values()
        print(f"max |dK|/|K| = {np.abs(K1 - K2).max() / np.abs(K2).max():.2e}, "
              f"max |dx|/|x| = {np.abs(x1 - x2).max() / np.abs(x2).max():.2e}")
    else:
        print("compiled extension not available; only the fallback was timed")


if __name__ == "__main__":
    main()

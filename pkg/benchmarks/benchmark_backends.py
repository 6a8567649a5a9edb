"""Compare the compiled and pure-Python posterior evaluators.

Times raw evaluator throughput on packed vectors and a short end-to-end
chain with each backend.  Run from the repository root:

    python3 benchmarks/benchmark_backends.py [--evals N] [--iters N]
"""

import argparse
import time

import numpy as np

from aggnet._backend import HAVE_COMPILED
from aggnet.inference import SamplerConfig, run_chain
from aggnet.kernel import KernelParams
from aggnet.model import PriorConfig, posterior_evaluator
from aggnet.moments import GroupConfig, NetworkKind
from aggnet.simulate import aggregate, simulate_network


def build_data(r=6, q=2, seed=20240817):
    rng = np.random.default_rng(seed)
    config = GroupConfig(sizes=rng.integers(20, 51, r),
                         centres=rng.normal(0.0, 1.0, (r, q)),
                         scales=rng.uniform(0.1, 0.3, r))
    network = simulate_network(config, KernelParams(theta=0.5, q=q),
                               NetworkKind(directed=True, weighted=False),
                               rng.integers(2**63))
    return aggregate(network)


def random_states(layout, count, rng):
    """Packed vectors inside the valid region (eta must stay in (0, 1))."""
    vecs = rng.normal(0.0, 0.5, (count, layout.dim))
    vecs[:, layout.eta_offset:layout.log_tau_offset] = rng.uniform(
        0.1, 0.9, (count, layout.log_tau_offset - layout.eta_offset))
    return vecs


def time_evaluations(data, q, backend, n_evals):
    evaluator = posterior_evaluator(data, q, PriorConfig(), backend)
    vecs = random_states(evaluator.layout, 256, np.random.default_rng(1))
    evaluator(vecs[0])  # warm any lazy setup before the clock starts
    t0 = time.perf_counter()
    for i in range(n_evals):
        evaluator(vecs[i % 256])
    elapsed = time.perf_counter() - t0
    return n_evals / elapsed, elapsed


def time_chain(data, q, backend, n_iters):
    t0 = time.perf_counter()
    chain = run_chain(data, q,
                      SamplerConfig(n_chains=1, n_warmup=n_iters // 2,
                                    n_samples=n_iters, seed=7),
                      PriorConfig(), np.random.SeedSequence(3),
                      backend=backend)
    return time.perf_counter() - t0, chain


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--evals", type=int, default=20000,
                        help="raw evaluator calls to time (default 20000)")
    parser.add_argument("--iters", type=int, default=2000,
                        help="post-warmup chain iterations (default 2000)")
    args = parser.parse_args()

    data = build_data()
    backends = ["python"] + (["compiled"] if HAVE_COMPILED else [])
    if not HAVE_COMPILED:
        print("compiled extension not built; timing the python backend only")

    rates = {}
    print(f"\nraw evaluator, {args.evals} calls on r={data.r} data:")
    for backend in backends:
        rate, elapsed = time_evaluations(data, 2, backend, args.evals)
        rates[backend] = rate
        print(f"  {backend:>8}: {rate:10.0f} evals/s  ({elapsed:.2f}s)")
    if len(rates) == 2:
        print(f"  speedup: {rates['compiled'] / rates['python']:.1f}x")
        evals = [posterior_evaluator(data, 2, PriorConfig(), b)
                 for b in backends]
        vecs = random_states(evals[0].layout, 256, np.random.default_rng(1))
        gap = max(abs(evals[0](v) - evals[1](v)) for v in vecs)
        print(f"  max log-density disagreement over 256 states: {gap:.2e}")

    # chain trajectories are not comparable across backends: the tiny
    # float differences above flip borderline accept decisions eventually
    chain_times = {}
    print(f"\nsingle chain, {args.iters // 2} warmup + {args.iters} samples:")
    for backend in backends:
        elapsed, chain = time_chain(data, 2, backend, args.iters)
        chain_times[backend] = elapsed
        print(f"  {backend:>8}: {elapsed:6.2f}s "
              f"(acceptance {chain.acceptance_rate:.2f})")
    if len(chain_times) == 2:
        print(f"  speedup: {chain_times['python'] / chain_times['compiled']:.1f}x")


if __name__ == "__main__":
    main()

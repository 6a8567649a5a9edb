"""Plain-text file formats: diff-friendly, deterministic, dependency-free.

Floats are written with ``repr``, which round-trips exactly and keeps
rewrites byte-identical for identical inputs.  All tables are comma
separated except the edge list, which is the conventional
``source target weight`` triple per line.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .inference import AlignedPosterior, PosteriorChain, PosteriorSummary
from .model import ParamLayout, natural_from_packed
from .moments import GroupConfig, NetworkKind
from .simulate import NetworkRealization

__all__ = [
    "write_edge_list", "read_edge_list",
    "write_labels", "read_labels",
    "write_sizes", "read_sizes",
    "write_aggregate", "read_aggregate",
    "write_ground_truth", "read_ground_truth",
    "write_chain_draws", "read_chain_draws",
    "write_aligned_draws", "read_aligned_draws",
    "write_summary", "write_circles",
]


def _fmt(x) -> str:
    return repr(float(x))


def write_edge_list(path, network: NetworkRealization) -> None:
    """One ``source target weight`` triple per line.

    Directed networks list every ordered edge; undirected ones each
    unordered edge once with source < target.
    """
    y = network.adjacency
    if network.kind.directed:
        rows, cols = np.nonzero(y)
    else:
        rows, cols = np.nonzero(np.triu(y, 1))
    lines = [f"{i} {j} {y[i, j]}" for i, j in zip(rows.tolist(), cols.tolist())]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_edge_list(path, n_nodes: int, kind: NetworkKind) -> np.ndarray:
    y = np.zeros((n_nodes, n_nodes), dtype=np.int64)
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        i, j, w = line.split()
        y[int(i), int(j)] = int(w)
        if not kind.directed:
            y[int(j), int(i)] = int(w)
    return y


def write_labels(path, labels: np.ndarray) -> None:
    lines = ["node,group"]
    lines += [f"{i},{g}" for i, g in enumerate(np.asarray(labels).tolist())]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_labels(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "node,group":
        raise ValueError(f"{path}: expected a 'node,group' header")
    out = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        node, group = line.split(",")
        out[int(node)] = int(group)
    labels = np.empty(len(out), dtype=np.int64)
    for node, group in out.items():
        if not 0 <= node < len(out):
            raise ValueError(f"{path}: node ids must be 0..{len(out) - 1}")
        labels[node] = group
    return labels


def write_sizes(path, sizes: np.ndarray) -> None:
    lines = [f"{g},{n}" for g, n in enumerate(np.asarray(sizes).tolist())]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_sizes(path) -> np.ndarray:
    pairs = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        g, n = line.split(",")
        pairs.append((int(g), int(n)))
    pairs.sort()
    if [g for g, _ in pairs] != list(range(len(pairs))):
        raise ValueError(f"{path}: group ids must be 0..{len(pairs) - 1}")
    return np.asarray([n for _, n in pairs], dtype=np.int64)


def write_aggregate(path, counts: np.ndarray) -> None:
    """Square count table; header row lists the group ids in column order."""
    counts = np.asarray(counts)
    r = counts.shape[0]
    lines = [",".join(str(g) for g in range(r))]
    lines += [",".join(str(int(v)) for v in row) for row in counts]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_aggregate(path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty aggregate file")
    header = [int(v) for v in lines[0].split(",")]
    if header != list(range(len(header))):
        raise ValueError(f"{path}: header must list group ids 0..r-1")
    rows = [[int(v) for v in ln.split(",")] for ln in lines[1:]]
    counts = np.asarray(rows, dtype=np.int64)
    if counts.shape != (len(header), len(header)):
        raise ValueError(f"{path}: expected a {len(header)} column square table")
    return counts


def write_ground_truth(path, config: GroupConfig, theta: float,
                       kind: NetworkKind, seed: int) -> None:
    payload = {
        "theta": theta,
        "q": config.q,
        "directed": kind.directed,
        "weighted": kind.weighted,
        "seed": seed,
        "sizes": config.sizes.tolist(),
        "centres": config.centres.tolist(),
        "scales": config.scales.tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_ground_truth(path):
    payload = json.loads(Path(path).read_text())
    config = GroupConfig(
        sizes=np.asarray(payload["sizes"], dtype=np.int64),
        centres=np.asarray(payload["centres"], dtype=float),
        scales=np.asarray(payload["scales"], dtype=float),
    )
    kind = NetworkKind(directed=payload["directed"],
                       weighted=payload["weighted"])
    return config, float(payload["theta"]), kind, payload["seed"]


def _natural_header(r: int, q: int) -> str:
    cols = [f"mu_{g}_{s}" for g in range(r) for s in range(q)]
    cols += [f"sigma_{g}" for g in range(r)]
    cols += ["tau", "theta"]
    return ",".join(cols)


def write_chain_draws(path, chain: PosteriorChain, chain_id: int) -> None:
    """Columnar draw log: chain id, draw index, log density, natural params."""
    layout = ParamLayout(chain.r, chain.q)
    mu, sigma, tau, theta = natural_from_packed(chain.draws, layout)
    flat = np.hstack([mu.reshape(chain.n_draws, -1), sigma,
                      tau[:, np.newaxis], theta[:, np.newaxis]])
    lines = [f"chain,draw,log_density,{_natural_header(chain.r, chain.q)}"]
    for i in range(chain.n_draws):
        cells = [str(chain_id), str(i), _fmt(chain.log_densities[i])]
        cells += [_fmt(v) for v in flat[i]]
        lines.append(",".join(cells))
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_chain_draws(path):
    """Returns (chain ids, draw indices, log densities, value matrix, names)."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    if header[:3] != ["chain", "draw", "log_density"]:
        raise ValueError(f"{path}: not a chain draws file")
    names = header[3:]
    rows = [ln.split(",") for ln in lines[1:] if ln.strip()]
    ids = np.asarray([int(r[0]) for r in rows], dtype=np.int64)
    idx = np.asarray([int(r[1]) for r in rows], dtype=np.int64)
    logd = np.asarray([float(r[2]) for r in rows])
    values = np.asarray([[float(v) for v in r[3:]] for r in rows])
    return ids, idx, logd, values, names


def write_aligned_draws(path, aligned: AlignedPosterior) -> None:
    n, r, q = aligned.centres.shape
    lines = [f"draw,log_density,{_natural_header(r, q)}"]
    flat = np.hstack([aligned.centres.reshape(n, -1), aligned.sigma,
                      aligned.tau[:, np.newaxis],
                      aligned.theta[:, np.newaxis]])
    for i in range(n):
        cells = [str(i), _fmt(aligned.log_densities[i])]
        cells += [_fmt(v) for v in flat[i]]
        lines.append(",".join(cells))
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_aligned_draws(path):
    """Returns (log densities, value matrix, names)."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    if header[:2] != ["draw", "log_density"]:
        raise ValueError(f"{path}: not an aligned draws file")
    rows = [ln.split(",") for ln in lines[1:] if ln.strip()]
    logd = np.asarray([float(r[1]) for r in rows])
    values = np.asarray([[float(v) for v in r[2:]] for r in rows])
    return logd, values, header[2:]


def write_summary(path, summary: PosteriorSummary) -> None:
    lines = ["name,mean,median,lower_2_5,upper_97_5"]
    for i, name in enumerate(summary.names):
        lines.append(",".join([
            name, _fmt(summary.mean[i]), _fmt(summary.median[i]),
            _fmt(summary.lower[i]), _fmt(summary.upper[i])]))
    Path(path).write_text("".join(line + "\n" for line in lines))


def write_circles(path, summary: PosteriorSummary) -> None:
    """Per-group plotting geometry: highest-density centre and 2-sigma radius."""
    r, q = summary.map_centres.shape
    header = ",".join(["group"] + [f"x{s}" for s in range(q)] + ["radius"])
    lines = [header]
    for g in range(r):
        cells = [str(g)] + [_fmt(v) for v in summary.map_centres[g]]
        cells.append(_fmt(summary.radius_2sigma[g]))
        lines.append(",".join(cells))
    Path(path).write_text("".join(line + "\n" for line in lines))

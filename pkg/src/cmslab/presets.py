"""Built-in example systems, loadable by name without a config file."""
from __future__ import annotations

from .system import MarkovSystem, build_system

# place-dependent weights for the decimal maps: p_e(x) = (1 + A cos 2pi(x - e/10)) / 10.
# The ten cosines are equally spaced in phase, so the weights sum to one for every x.
DECIMAL_WEIGHT_AMPLITUDE = 0.9

# one-step-memory potential for the 2-symbol g-measure: G[a][b] = g(next b | last a)
GMEASURE_G = ((0.7, 0.3), (0.4, 0.6))


def decimal(weighted: bool = False, amplitude: float = DECIMAL_WEIGHT_AMPLITUDE) -> MarkovSystem:
    edges = []
    for e in range(10):
        prob = f"(1 + {amplitude!r}*cos(2*pi*(x1 - {e}/10)))/10" if weighted else "1/10"
        edges.append({"id": str(e), "from": "I", "to": "I",
                      "map": [f"x1/10 + {e}/10"], "prob": prob})
    vertices = [{"id": "I", "region": "x1 >= 0 and x1 <= 1",
                 "lower": [0.0], "upper": [1.0], "anchor": [0.0]}]
    name = "decimal-weighted" if weighted else "decimal-uniform"
    return build_system(name=name, vertices=vertices, edges=edges, dim=1)


def example3(anchor: float = 1.0) -> MarkovSystem:
    """w0 = x/2, w1 = 2x on the real line with sin^2/cos^2 weights; rate 45/48."""
    vertices = [{"id": "R", "region": "abs(x1) >= 0",
                 "lower": [-10.0], "upper": [10.0], "anchor": [anchor]}]
    edges = [
        {"id": "0", "from": "R", "to": "R", "map": ["x1/2"], "prob": "(1/6)*sin(x1)^2 + 17/24"},
        {"id": "1", "from": "R", "to": "R", "map": ["2*x1"], "prob": "(1/6)*cos(x1)^2 + 1/8"},
    ]
    return build_system(name="example3", vertices=vertices, edges=edges, dim=1)


def gmeasure_2symbol(G=GMEASURE_G) -> MarkovSystem:
    """Full shift on {0, 1} with a one-step-memory g-function, coded in [0, 1).

    A left-infinite sequence (..., s_-1, s_0) is the point sum_k s_-k 2^-(k+1);
    appending symbol b is x -> x/2 + b/2. The vertex is the last symbol, so
    K_0 = [0, 1/2), K_1 = [1/2, 1), and the edge a->b carries probability G[a][b].
    """
    vertices = [
        {"id": "0", "region": "x1 >= 0 and x1 < 0.5", "lower": [0.0], "upper": [0.5], "anchor": [0.25]},
        {"id": "1", "region": "x1 >= 0.5 and x1 < 1", "lower": [0.5], "upper": [1.0], "anchor": [0.75]},
    ]
    edges = [{"id": f"{a}{b}", "from": str(a), "to": str(b),
              "map": [f"x1/2 + {b}/2"], "prob": repr(float(G[a][b]))}
             for a in (0, 1) for b in (0, 1)]
    sys = build_system(name="gmeasure-2symbol", vertices=vertices, edges=edges, dim=1)
    sys.meta["g"] = [list(map(float, row)) for row in G]
    return sys


PRESETS = {
    "decimal-uniform": lambda: decimal(False),
    "decimal-weighted": lambda: decimal(True),
    "example3": example3,
    "gmeasure-2symbol": gmeasure_2symbol,
}


def load_preset(name: str) -> MarkovSystem:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None

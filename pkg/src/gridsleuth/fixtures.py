"""Bundled test grid.

``case33_mod.json`` is a 33-node radial feeder derived from the common 33-bus
distribution test case (impedances on a 12.66 kV / 10 MVA base, loads in
per-unit). Seven lateral branches were re-hung so that ten non-root nodes have
degree three, enough to place hidden nodes under both placement policies. The
file also carries 50 extra non-operational candidate lines drawn once with a
fixed seed. It is our own modification, not a published one.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .io import GridFile, parse_grid_json

CASE33 = "case33_mod.json"

# four degree-3 nodes pairwise more than two hops apart
CASE33_HIDDEN_THREE_HOP = (2, 8, 15, 26)
# eight pairwise non-adjacent degree-3 nodes
CASE33_HIDDEN_TWO_HOP = (2, 6, 8, 11, 15, 22, 26, 30)


def fixture_path(name: str = CASE33):
    return resources.files("gridsleuth") / "data" / name


@lru_cache(maxsize=None)
def load_case33() -> GridFile:
    return parse_grid_json(fixture_path().read_bytes())

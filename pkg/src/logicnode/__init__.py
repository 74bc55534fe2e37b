"""Logic-program driven network nodes.

A small resolution engine executes declarative protocol programs; nodes
exchange terms over a deterministic simulator or real TCP, optionally
authenticated with pairwise MACs.
"""

__version__ = "0.1.0"

"""Communication topologies and the distributed transmitted vector.

Builds a leader-rooted graph, inspects its Laplacian, and shows that the
distributed fixed point each follower can compute from neighbor data
alone recovers exactly its own tracking error, no matter how indirect
the route to the leader is.
"""

import numpy as np

from homocon import (
    DirectedGraph,
    is_leader_rooted,
    laplacian,
    solve_transmitted,
)

# Leader 0 feeds follower 1; information then propagates down a chain
# and across one shortcut.
graph = DirectedGraph.from_edges(
    3,
    [
        [1, 0, 1.0],  # follower 1 hears the leader
        [2, 1, 1.0],  # follower 2 hears follower 1
        [3, 2, 1.0],  # follower 3 hears follower 2
        [3, 1, 0.5],  # ... and follower 1 directly, with smaller weight
    ],
)

print("leader-rooted:", is_leader_rooted(graph))
dec = laplacian(graph)
print("Laplacian:\n", dec.full_laplacian)
print("follower block eigenvalues:", np.linalg.eigvals(dec.follower_block))

# Agent states: position/velocity pairs. Only follower 1 ever hears the
# leader, yet every follower's fixed point equals its own error.
states = np.array(
    [
        [0.0, 0.0],   # leader
        [-2.0, 1.0],
        [-3.5, 1.0],
        [-5.0, 1.0],
    ]
)
v = solve_transmitted(graph, np.eye(2), states)
errors = states[1:] - states[0]
print("\ntransmitted vectors:\n", v)
print("tracking errors:\n", errors)
print("max deviation:", np.max(np.abs(v - errors)))

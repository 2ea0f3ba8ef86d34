"""Fault-tolerance planner and rack-scale simulator for optically
reconfigurable accelerator fabrics.

Sizes spare capacity from per-component failure probabilities, routes
replacement optical circuits without congestion, and quantifies the
overprovisioning of in-place patching against whole-job migration and
server-eviction policies.
"""

__version__ = "0.1.0"

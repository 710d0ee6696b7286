"""Planning and simulation of multi-agent data-gathering missions.

A static operation center requests data from goal cells spread over an
occupancy grid; the team splits into workers (visit goals, gather) and
collectors (shuttle data back). The package plans the split, the space
partition and the routes, then executes missions in a deterministic
discrete-time simulator. A FastAPI service and a thin CLI expose the
plan/simulate/sweep operations.
"""

from .grid import GridPath, OccupancyGrid, line_of_sight, path_time
from .fmm import DistanceField, SpeedField, extract_path, obstacle_field, solve_eikonal
from .segmentation import Partition, init_centroids, iterative_partition, \
    segment_bap, segment_pap, segment_rap
from .scenario import load_scenario, loads_scenario, dumps_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "OccupancyGrid", "GridPath", "line_of_sight", "path_time",
    "DistanceField", "SpeedField", "solve_eikonal", "obstacle_field",
    "extract_path", "Partition", "init_centroids", "iterative_partition",
    "segment_bap", "segment_pap", "segment_rap",
    "load_scenario", "loads_scenario", "dumps_scenario", "save_scenario",
]

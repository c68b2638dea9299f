from .expert import MAIN_PATHS, WaypointExpert, default_path, scripted_expert, shortest_path
from .heatmap import region_means, reward_heatmap, save_csv, save_pgm
from .maze import (
    ACTION_DIM,
    BUILTIN_MAPS,
    OBS_DIM,
    OBS_LAYOUT,
    Frozen,
    GoalMode,
    MazeEnv,
    MazeSpec,
    MazeState,
    goal_reached,
    load_map,
    parse_map,
    reset,
    step,
)

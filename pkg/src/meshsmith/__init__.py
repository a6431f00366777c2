"""Triangle mesh smoothing: a graph network trained on a quality loss, plus classical baselines."""
from .mesh import Mesh, QualityReport, StarPolygon, load_m2d, quality_report, save_m2d, star_polygon, weighted_quality
from .delaunay import DatasetSpec, build_dataset, delaunay_triangulate, random_square_mesh
from .gmsnet import ModelParams, forward, init_params, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainingTrace, train_gmsnet
from .bench import SmoothRunResult, render_svg, run_experiment, smooth_mesh

__version__ = "0.1.0"

__all__ = [
    "Mesh", "QualityReport", "StarPolygon", "load_m2d", "quality_report", "save_m2d", "star_polygon",
    "weighted_quality", "DatasetSpec", "build_dataset", "delaunay_triangulate", "random_square_mesh",
    "ModelParams", "forward", "init_params", "load_checkpoint", "save_checkpoint",
    "TrainConfig", "TrainingTrace", "train_gmsnet",
    "SmoothRunResult", "render_svg", "run_experiment", "smooth_mesh",
]

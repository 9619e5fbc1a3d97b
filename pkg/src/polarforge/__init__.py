"""Shape-from-polarization physics, rasterization and pose refinement for 6D object pose."""

from .errors import PolarForgeError
from .geometry import CameraIntrinsics, MeshModel, Pose, load_obj, save_obj
from .losses import (
    chamfer_loss,
    mask_loss,
    normal_loss,
    physics_loss,
    point_matching_loss,
    select_pseudo_labels,
    total_loss,
)
from .metrics import add_metric, adds_metric, recall
from .polarization import (
    MATERIALS,
    AnalyticDoP,
    MaterialSpec,
    PolarDecomposition,
    analytic_dop_from_normal,
    dop_diffuse,
    dop_specular,
    fit_decomposition,
    invert_dop,
    priors_from_pixel,
)
from .rasterizer import RenderBuffers, ShadingSpec, rasterize, render_polarization
from .refine import Observation, RefineConfig, objective, refine_pose

__version__ = "0.1.0"

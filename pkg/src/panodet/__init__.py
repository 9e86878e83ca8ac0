"""Object detection toolkit for equirectangular panoramas.

Renders overlapping wide-FOV sub-projections out of a 360-degree frame,
back-projects and re-aligns per-window detections, fuses them with a
distance-aware soft-selection rule, and evaluates AP against angular or
pixel-box annotations.
"""

from .annotations import (
    AnnotatedObject,
    Bfov,
    DatasetFormatError,
    EraBox,
    FrameAnnotations,
    bfov_to_erabox,
    parse_dataset,
    write_dataset,
)
from .detectors import (
    DetectorError,
    DetectorOutputError,
    DetectorUnavailableError,
    ExternalProcessDetector,
    OracleDetector,
    StubDetector,
    WindowDetection,
)
from .evaluation import ApReport, EvalConfig, average_precision, evaluate
from .fusion import FusionParams, fuse, iou, nms, soft_select
from .geometry import (
    PlaneCoord,
    ProjectionDomainError,
    ProjectionParams,
    SphereCoord,
    WindowSpec,
    default_window_plan,
    plane_to_window_pixel,
    project_axis,
    sphere_to_window,
    unproject_axis,
    window_pixel_to_plane,
    window_to_sphere,
)
from .imaging import (
    EraImage,
    WindowImage,
    era_pixel_to_sphere,
    read_image,
    render_window,
    sphere_to_era_pixel,
)
from .pipeline import (
    Detection,
    FrameDetections,
    FrameProcessingError,
    RealignParams,
    backproject_min_frame,
    detect_window,
    parse_detections,
    realign,
    run_frame,
    write_detections,
)

__version__ = "0.1.0"

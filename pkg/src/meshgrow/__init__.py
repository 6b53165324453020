"""meshgrow: iterative textured-mesh generation for indoor scenes.

The engine renders the current scene mesh from planned viewpoints, hands
unobserved regions to pluggable RGB/depth inpainting backends, aligns the
predicted depth to the existing geometry, and fuses the filtered new
triangles back into the scene.
"""

from .geometry import (
    Camera,
    FrameBundle,
    GeometryError,
    NO_HIT,
    Pose,
    TriangleMesh,
    camera_from_fov,
    look_at,
    merge_meshes,
)
from .meshio import export_mesh, import_mesh, load_mesh, save_mesh
from .rasterizer import render, render_with_provenance

__version__ = "0.1.0"

__all__ = [
    "Camera", "FrameBundle", "GeometryError", "NO_HIT", "Pose", "TriangleMesh",
    "camera_from_fov", "look_at", "merge_meshes", "export_mesh", "import_mesh",
    "load_mesh", "save_mesh", "render", "render_with_provenance", "__version__",
]

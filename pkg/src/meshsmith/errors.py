"""Exception types raised across meshsmith."""


class MeshsmithError(Exception):
    pass


# mesh-core
class BoundaryNode(MeshsmithError):
    pass


class OpenRing(MeshsmithError):
    pass


class EmptyMesh(MeshsmithError):
    pass


class MeshFormatError(MeshsmithError):
    pass


# delaunay
class DegenerateInput(MeshsmithError):
    pass


class DuplicatePoints(MeshsmithError):
    pass


# smoothers
class DegenerateAngle(MeshsmithError):
    pass


class DegenerateTriangle(MeshsmithError):
    pass


class UnknownSmoother(MeshsmithError):
    pass


# autodiff
class ShapeMismatch(MeshsmithError):
    pass


class NonScalarOutput(MeshsmithError):
    pass


# model / training
class ZeroExtent(MeshsmithError):
    pass


class VersionMismatch(MeshsmithError):
    pass


class CorruptFile(MeshsmithError):
    pass


class EmptyDataset(MeshsmithError):
    pass


class MissingDegree(UserWarning):
    """Emitted when no per-degree model exists and Laplacian is used instead."""

"""Exception types shared across the toolkit.

Everything raised on purpose derives from MeshMlpError so callers can
catch one base class at the CLI boundary and map it to an exit code.
Plain OSError is left alone: a missing file or a full disk is not a
domain error and the traceback says everything there is to say.
"""


class MeshMlpError(Exception):
    """Base class for all deliberate failures."""


class ParseError(MeshMlpError):
    """Mesh or manifest file is syntactically invalid."""


class EmptyMeshError(MeshMlpError):
    """Mesh has no vertices or no faces where faces are required."""


class DegenerateMeshError(MeshMlpError):
    """Mesh geometry collapses under the requested operation."""


class LengthMismatchError(MeshMlpError):
    """Per-face label count does not match the face count."""


class NonIntegerLabelError(MeshMlpError):
    """Label file contains a token that is not an integer."""


class ShapeMismatchError(MeshMlpError):
    """Tensor operands disagree on dimensions."""


class InvalidTargetError(MeshMlpError):
    """Class target lies outside [0, num_classes)."""


class InvalidGroupCountError(MeshMlpError):
    """Channel count is not divisible by the group-norm group count."""


class ConvergenceFailureError(MeshMlpError):
    """Eigensolver did not reach the requested residual tolerance."""


class AllZeroSpectrumError(MeshMlpError):
    """Spectrum has no strictly positive eigenvalue to anchor the scale window."""


class NonFiniteLossError(MeshMlpError):
    """Training loss became NaN or infinite."""


class ManifestError(MeshMlpError):
    """Dataset manifest is structurally invalid."""

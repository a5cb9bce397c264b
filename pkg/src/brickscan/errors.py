"""Exception types raised across the brickscan pipeline."""


class BrickscanError(Exception):
    """Base class for all library errors."""


class PatternTokenError(BrickscanError):
    """Unknown token in a wall pattern file."""


class PatternShapeError(BrickscanError):
    """Pattern rows do not form a full rectangular grid."""


class PatternOverlapError(BrickscanError):
    """Two placements claim the same grid cell."""


class GridPitchError(BrickscanError):
    """Pattern cell pitch disagrees with brick face height plus joint."""


class ObjSyntaxError(BrickscanError):
    """Malformed line in an OBJ file."""


class ObjFaceError(BrickscanError):
    """OBJ face is not a triangle."""


class ObjIndexError(BrickscanError):
    """OBJ face references a vertex that does not exist."""


class EmptyMeshError(BrickscanError):
    """Mesh has no vertices or no triangles."""


class RectBoundsError(BrickscanError):
    """Rectangle falls outside the raster or window it indexes."""


class SingleClassError(BrickscanError):
    """Training data contains only one label."""


class StageInfeasibleError(BrickscanError):
    """A cascade stage cannot meet its detection-rate target."""


class FlatTemplateError(BrickscanError):
    """Template has zero variance, correlation is undefined."""


class NegativePoolExhaustedError(BrickscanError):
    """Rejection sampling failed to place enough negative crops."""


class ManifestSchemaError(BrickscanError):
    """Dataset manifest does not match the expected schema."""


class ConfigError(BrickscanError):
    """Malformed configuration file or invalid option value."""

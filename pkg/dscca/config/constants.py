"""
dscca code-level constants

Runtime parameters a user may change belong in experiment_config.py; this
module only holds fixed values shared between modules.
"""


class ExceptionConstants:
    """Exception groups used when catching and classifying failures"""

    FILE_OPERATION_EXCEPTIONS = (OSError, IOError, PermissionError)
    DATA_PARSING_EXCEPTIONS = (ValueError, TypeError, KeyError, UnicodeDecodeError)


class NumericConstants:
    """Tolerances of the numerical kernels"""

    EIG_CLAMP = 1e-10
    DEGENERATE_GAP = 1e-9
    ZERO_NORM = 1e-300


class FormatConstants:
    """Magic bytes and versions of the on-disk formats"""

    VIEW_MAGIC = b"DSCCA1"
    CHECKPOINT_MAGIC = b"DSCCAKPT"
    CHECKPOINT_VERSION = 1
    IDX_IMAGE_MAGIC = 0x00000803


class ExitCodes:
    SUCCESS = 0
    CONFIG_ERROR = 1
    NUMERICAL_ABORT = 2


# architecture presets of the mapping functions, "hidden/hidden/output" per view
ARCHITECTURE_PRESETS = {
    "mnist": ([800, 800], [800, 800], 50),
    "xrmb": ([1800, 1800], [1200, 1200], 112),
    "flickr": ([1024, 512], [1024, 512], 128),
}

MODES = ("dcca", "dsdcca", "ranking", "ds_ranking")
ABLATIONS = ("none", "global_scale", "scale_outputs", "hypernet", "no_warmup", "wide2", "wide12")
CONDITIONING_MODES = ("z_only", "x_only", "z_and_x")

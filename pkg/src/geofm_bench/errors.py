"""Exception hierarchy shared across the package."""


class GeoFMBenchError(Exception):
    """Base class for all package errors."""


class ConfigError(GeoFMBenchError):
    """Invalid run configuration or CLI usage (CLI exit code 2)."""


# -- datasets -----------------------------------------------------------------

class CorpusSchemaError(GeoFMBenchError):
    pass


class MissingPatch(CorpusSchemaError):
    def __init__(self, patch_id, path=None):
        self.patch_id = patch_id
        msg = f"missing patch {patch_id!r}"
        if path is not None:
            msg += f" (expected at {path})"
        super().__init__(msg)


class LabelDomainError(CorpusSchemaError):
    def __init__(self, patch_id, values):
        self.patch_id = patch_id
        super().__init__(f"patch {patch_id!r}: mask values {sorted(values)} outside {{0, 1}}")


class BandManifestError(CorpusSchemaError):
    pass


class EmptySplitError(GeoFMBenchError):
    pass


class ChannelCountError(GeoFMBenchError):
    pass


class ChannelNotFound(GeoFMBenchError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class FractionError(GeoFMBenchError, ValueError):
    pass


class LeakageError(GeoFMBenchError):
    pass


# -- bandselect ---------------------------------------------------------------

class SampleSizeError(GeoFMBenchError, ValueError):
    pass


class DegenerateLabelError(GeoFMBenchError, ValueError):
    pass


# -- model --------------------------------------------------------------------

class AdapterBypassError(ChannelCountError):
    pass


class PatchGridError(GeoFMBenchError, ValueError):
    pass


class UpsampleConfigError(GeoFMBenchError, ValueError):
    pass


class MaskRatioError(GeoFMBenchError, ValueError):
    pass


class BaselineTuningError(GeoFMBenchError, ValueError):
    pass


# -- losses -------------------------------------------------------------------

class WeightError(GeoFMBenchError, ValueError):
    pass


class ProbabilityError(GeoFMBenchError, ValueError):
    pass


# -- metrics ------------------------------------------------------------------

class ShapeError(GeoFMBenchError, ValueError):
    pass


class EmptyEvaluationError(GeoFMBenchError, ValueError):
    pass


class MissingBaselineError(GeoFMBenchError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class RatioDomainError(GeoFMBenchError, ValueError):
    pass


# -- harness ------------------------------------------------------------------

class DivergenceError(GeoFMBenchError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class SharedSubsetError(GeoFMBenchError):
    pass


class DanglingReferenceError(GeoFMBenchError):
    pass

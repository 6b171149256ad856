"""Error types raised by the pipeline. Management commands turn them into CommandError."""


class PipelineError(Exception):
    pass


class AudioError(PipelineError):
    pass


class AugmentationError(PipelineError):
    pass


class FeatureError(PipelineError):
    pass


class NetworkError(PipelineError):
    pass


class ExperimentError(PipelineError):
    pass


class MetricsError(PipelineError):
    pass


class AnalysisError(PipelineError):
    pass


class IngestError(PipelineError):
    pass

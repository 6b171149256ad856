from pathology.Ingest.cli import StageCommand


class Command(StageCommand):
    help = 'Balance the training split by resampling or time warping.'
    stage = 'augment'

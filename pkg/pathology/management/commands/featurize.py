from pathology.Ingest.cli import StageCommand


class Command(StageCommand):
    help = 'Segment preprocessed recordings and cache their Mel spectrograms.'
    stage = 'featurize'

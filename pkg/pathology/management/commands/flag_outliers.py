from pathology.Ingest.cli import StageCommand


class Command(StageCommand):
    help = 'Flag outlier recordings and write a suggested manifest for review.'
    stage = 'flag-outliers'

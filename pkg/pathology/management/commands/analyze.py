from pathology.Ingest.cli import StageCommand


class Command(StageCommand):
    help = 'CKA between the disease classifiers and gender power statistics.'
    stage = 'analyze'

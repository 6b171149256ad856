from pathology.Ingest.cli import StageCommand


class Command(StageCommand):
    help = 'Remove silence from and normalize every active manifest recording.'
    stage = 'preprocess'

from pathology.Ingest.cli import StageCommand


class Command(StageCommand):
    help = "Score one experiment's trained classifiers on the test split."
    stage = 'evaluate'

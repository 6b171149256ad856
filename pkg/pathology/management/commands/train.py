from pathology.Ingest.cli import StageCommand


class Command(StageCommand):
    help = 'Grid-search and train the classifiers of one experiment.'
    stage = 'train'

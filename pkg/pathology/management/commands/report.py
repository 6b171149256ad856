from pathology.Ingest.cli import StageCommand


class Command(StageCommand):
    help = 'Assemble the experiment and analysis reports.'
    stage = 'report'

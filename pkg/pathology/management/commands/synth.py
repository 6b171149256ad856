from pathology.Ingest.cli import StageCommand


class Command(StageCommand):
    help = 'Generate the synthetic sustained-vowel dataset and its manifest.'
    stage = 'synth'

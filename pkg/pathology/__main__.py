import sys

from pathology.Ingest.cli import cli

if __name__ == '__main__':
    sys.exit(cli())

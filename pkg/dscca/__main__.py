"""
dscca main entry point
"""
from dscca.cli.main import cli

if __name__ == '__main__':
    cli()

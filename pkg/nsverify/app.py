import sys

import click

from .config import Config
from .exceptions import NSVerifyError
from .logging_config import setup_logging
from .services.report_service import EXIT_MISSING


def create_app():
    """Build the ``nsverify`` command group with logging configured."""
    setup_logging(Config.LOG_DIR, Config.LOG_LEVEL)

    @click.group(help='Numerical checks of the energy and stability estimates for periodic Navier-Stokes flows.')
    def cli():
        pass

    # --- CLI Commands ---
    from . import commands
    commands.init_app(cli)
    return cli


def main(argv=None):
    cli = create_app()
    try:
        return cli.main(args=argv, prog_name='nsverify', standalone_mode=False)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except NSVerifyError as e:
        click.echo(f"ERROR: {e}", err=True)
        sys.exit(EXIT_MISSING)


if __name__ == '__main__':
    main()

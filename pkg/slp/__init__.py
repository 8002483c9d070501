from slp.util import __version__  # noqa

from sqlalchemy.exc import SQLAlchemyError

from slp import models
from slp.commands import COMMON_ARGUMENTS, SLPCommand, out
from slp.exceptions import ConfigError, DataError


class PopulateCommand(SLPCommand):
    """
    Create the run registry tables in the configured database.
    """

    name = 'populate'
    arguments = COMMON_ARGUMENTS

    def open_run(self, args):
        # no schema to record into yet
        pass

    def execute(self, args):
        if not models.is_configured():
            raise ConfigError('populate needs a sqlalchemy section with a url')
        models.init_model()
        out("creating run registry tables")
        try:
            models.start()
            models.create_schema()
        except SQLAlchemyError as error:
            models.rollback()
            out("rolling back")
            raise DataError('unable to create the run registry: %s' % error)
        else:
            models.commit()
            out("run registry ready")
        finally:
            models.clear()

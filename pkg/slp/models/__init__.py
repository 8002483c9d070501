"""
The optional run registry. Every command run becomes a :class:`Run` row and
every metrics table it produced becomes :class:`MetricRecord` rows, in the
database named by the ``sqlalchemy`` configuration section.
"""
import logging

from sqlalchemy import create_engine, event
from sqlalchemy.orm import Mapper, declarative_base, scoped_session, sessionmaker
from pecan import conf


logger = logging.getLogger(__name__)

Session = scoped_session(sessionmaker())
Base = declarative_base()
Base.query = Session.query_property()


@event.listens_for(Mapper, 'init')
def auto_add(target, args, kwargs):
    # new registry rows join the current session as soon as they are built
    Session.add(target)


def is_configured():
    try:
        return bool(conf.sqlalchemy.url)
    except (AttributeError, KeyError):
        return False


def init_model():
    """
    Bind the session to the engine described by ``conf.sqlalchemy``. Keys
    other than ``url`` are passed to ``create_engine``.
    """
    settings = dict(conf.sqlalchemy)
    settings.pop('engine', None)
    url = settings.pop('url')
    conf.sqlalchemy.engine = create_engine(url, **settings)
    Session.configure(bind=conf.sqlalchemy.engine)
    logger.debug('run registry bound to %s', conf.sqlalchemy.engine.url)


def create_schema():
    Base.metadata.create_all(conf.sqlalchemy.engine)


def start():
    Session()


def commit():
    Session.commit()


def rollback():
    Session.rollback()


def clear():
    Session.remove()


from slp.models.runs import Run, MetricRecord # noqa

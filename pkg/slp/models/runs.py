import datetime
import json

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import backref, relationship
from sqlalchemy.orm.exc import DetachedInstanceError

from slp.models import Base


class Run(Base):

    __tablename__ = 'runs'
    id = Column(Integer, primary_key=True)
    command = Column(String(64), nullable=False, index=True)
    seed = Column(String(32))
    build = Column(String(256))
    status = Column(String(32), nullable=False, index=True)
    exit_code = Column(Integer)
    config = Column(Text)
    timings = Column(Text)
    started = Column(DateTime, index=True)
    finished = Column(DateTime)

    def __init__(self, command, seed, build, config):
        self.command = command
        self.seed = None if seed is None else str(seed)
        self.build = build
        self.config = json.dumps(config, sort_keys=True)
        self.status = 'running'
        self.started = datetime.datetime.utcnow()

    def finish(self, exit_code, timings):
        self.exit_code = exit_code
        self.status = 'succeeded' if exit_code == 0 else 'failed'
        self.timings = json.dumps(timings, sort_keys=True)
        self.finished = datetime.datetime.utcnow()

    def record_table(self, label, table):
        """ One row per (n, m) cell of a :class:`~slp.evaluate.MetricsTable` """
        return [MetricRecord(self, label, n, m, recall) for n, m, recall in table.rows()]

    def __repr__(self):
        try:
            return '<Run %s %r %s>' % (self.id, self.command, self.status)
        except DetachedInstanceError:
            return '<Run detached>'


class MetricRecord(Base):

    __tablename__ = 'metrics'
    id = Column(Integer, primary_key=True)
    label = Column(String(128), nullable=False, index=True)
    n = Column(Integer, nullable=False)
    m = Column(Float, nullable=False)
    recall = Column(Float, nullable=False)
    run_id = Column(Integer, ForeignKey('runs.id'))
    run = relationship('Run', backref=backref('metrics', lazy='dynamic'))

    def __init__(self, run, label, n, m, recall):
        self.run = run
        self.label = label
        self.n = n
        self.m = m
        self.recall = recall

    def __repr__(self):
        try:
            return '<MetricRecord %s R@%s,IoU=%s=%.2f>' % (self.label, self.n, self.m, self.recall)
        except DetachedInstanceError:
            return '<MetricRecord detached>'

# mixprop/db.py
"""SQLite store of experiment runs and their per-trial records (inspection only)."""

from __future__ import annotations

from datetime import datetime
from pathlib import Path

from sqlalchemy import (Boolean, Column, DateTime, Float, ForeignKey, Integer, String,
                        Text, create_engine)
from sqlalchemy.orm import declarative_base, relationship, sessionmaker

Base = declarative_base()


class ExperimentRun(Base):
    __tablename__ = "experiment_run"
    id = Column(Integer, primary_key=True)
    experiment = Column(String, nullable=False)
    config_hash = Column(String, index=True)
    seed = Column(Integer)
    version = Column(String)
    config_json = Column(Text)
    created_at = Column(DateTime, default=datetime.utcnow)
    trials = relationship("TrialRecord", back_populates="run", cascade="all, delete-orphan")


class TrialRecord(Base):
    __tablename__ = "trial_record"
    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("experiment_run.id"))
    setting = Column(String)
    trial = Column(Integer)
    seed = Column(Integer)
    metric = Column(String)
    value = Column(Float)
    ok = Column(Boolean, default=True)
    error = Column(Text)
    run = relationship("ExperimentRun", back_populates="trials")


def open_store(path: str | Path) -> sessionmaker:
    """Create (if needed) the SQLite file at ``path`` and return a session factory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    engine = create_engine(f"sqlite:///{path}", echo=False, future=True)
    Base.metadata.create_all(engine)
    return sessionmaker(bind=engine, expire_on_commit=False)

from sqlalchemy import JSON, Column, DateTime, Integer, String, Text
from sqlalchemy.orm import declarative_base
from sqlalchemy.sql import func

# Base class for SQLAlchemy models
Base = declarative_base()

# Bump when the InstanceRecord payload layout changes; older caches are rejected.
CACHE_FORMAT_VERSION = 1

# --- Instance cache tables ---

class CacheMeta(Base):
    """Self-describing header row of an instance cache file."""

    __tablename__ = "cache_meta"
    id = Column(Integer, primary_key=True)
    format_version = Column(Integer, nullable=False)
    t_obs = Column(Integer, nullable=False)
    t_pred = Column(Integer, nullable=False)
    grid = Column(JSON, nullable=False)  # GridSpec dump (feet)
    source = Column(String, nullable=True)  # e.g. "synthetic seed=0" or the track file path
    instance_count = Column(Integer, nullable=False, default=0)
    created_at = Column(DateTime(timezone=True), server_default=func.now())


class InstanceRecord(Base):
    __tablename__ = "instances"
    id = Column(Integer, primary_key=True)
    instance_id = Column(String, unique=True, index=True, nullable=False)
    ego_id = Column(Integer, index=True, nullable=False)
    t = Column(Integer, nullable=False)
    target_count = Column(Integer, nullable=False)
    payload = Column(Text, nullable=False)  # Instance.model_dump_json()

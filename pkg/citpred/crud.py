import json
import logging
from typing import List, Optional, Sequence

from pydantic import ValidationError
from sqlalchemy.exc import DatabaseError
from sqlalchemy.orm import Session

from citpred import models
from citpred.core.errors import CacheFormatError
from citpred.schemas import GridSpec, Instance

logger = logging.getLogger(__name__)

# --- Cache header --- #

def read_cache_meta(db: Session) -> models.CacheMeta:
    """Returns the cache header, rejecting foreign files and other format versions."""
    try:
        meta = db.query(models.CacheMeta).first()
    except DatabaseError as e:
        raise CacheFormatError(f"Not an instance cache: {e.orig}") from e
    if meta is None:
        raise CacheFormatError("Instance cache has no header row")
    if meta.format_version != models.CACHE_FORMAT_VERSION:
        raise CacheFormatError(
            f"Instance cache format version {meta.format_version} is not supported "
            f"(expected {models.CACHE_FORMAT_VERSION}); re-run ingest or synth"
        )
    return meta


def cache_grid(db: Session) -> GridSpec:
    return GridSpec(**read_cache_meta(db).grid)

# --- Instance CRUD --- #

def write_instances(
    db: Session,
    instances: Sequence[Instance],
    grid: GridSpec,
    t_obs: int,
    t_pred: int,
    source: Optional[str] = None,
) -> models.CacheMeta:
    """Stores the header and one row per Instance in a freshly created cache."""
    meta = models.CacheMeta(
        format_version=models.CACHE_FORMAT_VERSION,
        t_obs=t_obs,
        t_pred=t_pred,
        grid=grid.model_dump(),
        source=source,
        instance_count=len(instances),
    )
    db.add(meta)
    db.add_all(
        models.InstanceRecord(
            instance_id=inst.instance_id,
            ego_id=inst.ego_id,
            t=inst.t,
            target_count=len(inst.targets),
            payload=inst.model_dump_json(),
        )
        for inst in instances
    )
    db.commit()
    db.refresh(meta)
    logger.info(f"Cached {len(instances)} instances (format v{models.CACHE_FORMAT_VERSION})")
    return meta


def _decode(record: models.InstanceRecord) -> Instance:
    try:
        return Instance.model_validate(json.loads(record.payload))
    except (ValidationError, json.JSONDecodeError) as e:
        raise CacheFormatError(f"Corrupt cache record {record.instance_id}: {e}") from e


def read_instances(db: Session, ego_ids: Optional[Sequence[int]] = None) -> List[Instance]:
    """All cached instances ordered by (ego id, t), optionally restricted to some egos."""
    read_cache_meta(db)
    query = db.query(models.InstanceRecord)
    if ego_ids is not None:
        query = query.filter(models.InstanceRecord.ego_id.in_(list(ego_ids)))
    records = query.order_by(models.InstanceRecord.ego_id.asc(), models.InstanceRecord.t.asc()).all()
    return [_decode(r) for r in records]


def get_instance(db: Session, instance_id: str) -> Optional[Instance]:
    """Retrieve a single instance by its id ("<ego id>:<frame>")."""
    read_cache_meta(db)
    record = db.query(models.InstanceRecord).filter(models.InstanceRecord.instance_id == instance_id).first()
    return _decode(record) if record else None

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Union

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, sessionmaker

from citpred.core.errors import MissingFileError
from citpred.models import Base

logger = logging.getLogger(__name__)


def make_engine(path: Union[str, Path]) -> Engine:
    """SQLite engine for an instance cache file."""
    return create_engine(f"sqlite:///{Path(path)}")


@contextmanager
def open_cache(path: Union[str, Path], create: bool = False) -> Iterator[Session]:
    """Yields a session on the cache at `path`.

    With create=True the file is (re)initialised with empty tables; otherwise
    the file must already exist.
    """
    path = Path(path)
    if create:
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.exists():
            logger.info(f"Overwriting instance cache {path}")
            path.unlink()
    elif not path.exists():
        raise MissingFileError(f"Instance cache not found: {path}")

    engine = make_engine(path)
    if create:
        Base.metadata.create_all(bind=engine)
    # autocommit=False and autoflush=False, commits are explicit in crud
    SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
        engine.dispose()

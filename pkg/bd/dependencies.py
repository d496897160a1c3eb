from contextlib import contextmanager
from typing import Iterator

from sqlmodel import Session

from bd.connection import create_db_and_tables, engine_for, session_factory


# Session generator for one output root's registry
def get_db(output_root) -> Iterator[Session]:
    engine = engine_for(output_root)
    create_db_and_tables(engine)
    db = session_factory(engine)()
    try:
        yield db
    finally:
        db.close()


@contextmanager
def session_scope(output_root) -> Iterator[Session]:
    """Session that commits on success and rolls back on error."""
    generator = get_db(output_root)
    db = next(generator)
    try:
        yield db
        db.commit()
    except Exception:
        db.rollback()
        raise
    finally:
        generator.close()

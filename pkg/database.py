import os
from contextlib import contextmanager
from pathlib import Path

from dotenv import load_dotenv
from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker

load_dotenv()

LEDGER_FILENAME = "ledger.db"

Base = declarative_base()
SessionLocal = sessionmaker(autocommit=False, autoflush=False)


def database_url(out_dir: Path) -> str:
    """OLSRTUNE_DATABASE_URL, else a SQLite ledger inside the output directory."""
    return os.getenv("OLSRTUNE_DATABASE_URL") or f"sqlite:///{(Path(out_dir) / LEDGER_FILENAME).resolve()}"


def init_db(url: str) -> Engine:
    engine = create_engine(url)
    Base.metadata.create_all(engine)
    SessionLocal.configure(bind=engine)
    return engine


@contextmanager
def get_db():
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()

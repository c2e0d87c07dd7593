# Database module
from .connection import get_db, get_db_session, engine, init_db, SessionLocal
from .models import (
    Base,
    RunRecord,
    EstimateRecord,
)

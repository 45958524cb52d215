import os
from datetime import datetime, timezone

from sqlalchemy import Column, DateTime, Float, Integer, String, Text, create_engine
from sqlalchemy.orm import DeclarativeBase, Session, sessionmaker


DATABASE_URL = os.getenv("DATABASE_URL", "sqlite:////data/uwfkit.db")

if DATABASE_URL.startswith("sqlite"):
    engine = create_engine(DATABASE_URL, connect_args={"check_same_thread": False})
else:
    engine = create_engine(DATABASE_URL)

SessionLocal = sessionmaker(bind=engine)


class Base(DeclarativeBase):
    pass


class RegistrationRun(Base):
    __tablename__ = "registration_runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    patient_id = Column(String(255), default="upload", index=True)
    ri_name = Column(String(500), nullable=False)
    fa_name = Column(String(500), nullable=False)
    phase = Column(String(20), default="unknown", index=True)  # early | mid | late | unknown
    timestamp = Column(DateTime, default=lambda: datetime.now(timezone.utc), index=True)

    # --- registration ---
    homography = Column(Text, default="")  # JSON 3x3
    inlier_count = Column(Integer, default=0)
    total_matches = Column(Integer, default=0)
    scale = Column(Float)
    rotation = Column(Float)
    validity = Column(String(10))  # pass | fail
    dice = Column(Float)

    # --- gate ---
    status = Column(String(20), default="pending", index=True)  # accepted | rejected
    rejection_reason = Column(String(255))


class EvaluationRun(Base):
    __tablename__ = "evaluation_runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    pred_name = Column(String(500), nullable=False)
    target_name = Column(String(500), nullable=False)
    phase = Column(String(20), default="unknown", index=True)
    timestamp = Column(DateTime, default=lambda: datetime.now(timezone.utc), index=True)

    mae = Column(Float, default=0.0)
    psnr = Column(Float)  # NULL when the pair is identical (+inf)
    ssim = Column(Float, default=0.0)
    ms_ssim = Column(Float, default=0.0)
    gv = Column(Float, default=0.0)


def init_db():
    Base.metadata.create_all(bind=engine)


def get_db() -> Session:
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()

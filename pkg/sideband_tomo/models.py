import uuid
from datetime import datetime

from sqlalchemy import Boolean, Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.dialects.sqlite import CHAR
from sqlalchemy.orm import relationship

from sideband_tomo.db import Base


def generate_uuid():
    return str(uuid.uuid4())


class FitRun(Base):
    __tablename__ = "fit_runs"

    id = Column(CHAR(36), primary_key=True, default=generate_uuid)
    label = Column(String(255), nullable=False, index=True)
    model = Column(String(32), nullable=False)
    chi2 = Column(Float, nullable=False)
    dof = Column(Integer, nullable=False)
    rank = Column(Integer, nullable=False)
    # NULL when the design is rank deficient
    condition_number = Column(Float, nullable=True)
    sources = Column(Text, nullable=False, default="")
    created_at = Column(DateTime, default=datetime.utcnow)

    estimates = relationship(
        "FitEstimate", back_populates="run", cascade="all, delete-orphan", order_by="FitEstimate.id"
    )


class FitEstimate(Base):
    __tablename__ = "fit_estimates"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(CHAR(36), ForeignKey("fit_runs.id", ondelete="CASCADE"), nullable=False)
    parameter = Column(String(64), nullable=False)
    estimate = Column(Float, nullable=False)
    # NULL when the parameter lies in the design's null space
    stderr = Column(Float, nullable=True)
    identifiable = Column(Boolean, nullable=False, default=True)

    run = relationship("FitRun", back_populates="estimates")

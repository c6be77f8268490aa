"""Time-series monitors: one record per sampled flow time."""

from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields


MONITOR_HEADER = "t,max_u,max_du,max_d2u,max_d3u,psi_max,theta_min,theta_max,volume,dt"


@dataclass(frozen=True)
class MonitorRecord:
    """Tracked scalars at one flow time: sup norms, psi, angle range, volume."""

    t: float
    max_u: float
    max_du: float
    max_d2u: float
    max_d3u: float
    psi_max: float
    theta_min: float
    theta_max: float
    volume: float
    dt: float

    def csv_row(self):
        return ",".join(f"{getattr(self, f.name):.17g}" for f in dc_fields(self))

    @classmethod
    def from_csv_row(cls, row):
        parts = row.strip().split(",")
        names = [f.name for f in dc_fields(cls)]
        if len(parts) != len(names):
            raise ValueError(f"monitor row has {len(parts)} columns, expected {len(names)}")
        return cls(**{n: float(p) for n, p in zip(names, parts)})


def write_monitor_csv(records, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(MONITOR_HEADER + "\n")
        for rec in records:
            fh.write(rec.csv_row() + "\n")


def read_monitor_csv(path):
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != MONITOR_HEADER:
            raise ValueError(f"unexpected monitors.csv header: {header!r}")
        return [MonitorRecord.from_csv_row(line) for line in fh if line.strip()]

"""Published survey tables for the study region, bundled as reference data.

Values are kept exactly as printed, including the rows that do not add up;
``accounting.survey_check`` recomputes them and reports every disagreement.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class PotentialRow:
    client: str
    house_size: str
    roof_area_m2: int
    monthly_kwh: int
    yearly_kwh: int


# Solar production estimate per client, whole-group totals.
TABLE4_ROWS = (
    PotentialRow("E", "Other", 336, 57265, 687180),
    PotentialRow("D", "126.47", 10200, 718225, 8618700),
    PotentialRow("C", "177.05", 11200, 527145, 6325740),
    PotentialRow("B", "252.93", 10500, 475123, 5701476),
    PotentialRow("A", "505.86", 3600, 1321286, 15855432),
)
TABLE4_TOTAL = PotentialRow("Total", "", 35836, 3099044, 37188528)


@dataclass(frozen=True)
class HouseRow:
    client: str
    house_size_m2: float
    consumption_kwh: int
    potential_kwh: int


# Per-house monthly consumption and potential.
TABLE5_ROWS = (
    HouseRow("D", 126.47, 188, 1187),
    HouseRow("C", 177.05, 270, 1930),
    HouseRow("B", 252.93, 310, 2112),
    HouseRow("A", 505.86, 500, 11909),
)


@dataclass(frozen=True)
class ShareRow:
    client: str
    house_size: str
    consumption_kwh: int
    potential_kwh: int
    printed_share: str


# Regional consumption against potential, with the printed share column.
TABLE6_ROWS = (
    ShareRow("D", "126.47", 111735, 779235, "14%"),
    ShareRow("C", "177.05", 90321, 697786, "13%"),
    ShareRow("B", "252.93", 95290, 595140, "16%"),
    ShareRow("A", "505.86", 56767, 1795341, "3%"),
)
TABLE6_TOTAL = ShareRow("Total", "", 354144, 3867502, "9.2%")

# Emission row as printed; units in the source are mixed, never computed with.
TABLE7_EMISSIONS = {
    "Fossil Fuels": "500%",
    "Solar": "95%",
    "Wind": "9.2%",
    "Hydro": "11%",
    "Biogas": "10%",
}

CO2_FACTOR_T_PER_KWH = 6.9e-4
PRINTED_CO2_ENERGY_KWH = 3867502
PRINTED_CO2_TONNES = 2320.5012

HOUSE_COUNTS = {"D": 600, "C": 400, "B": 350, "A": 100, "E": 6}

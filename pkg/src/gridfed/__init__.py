"""Smart-grid simulator: federated demand/production forecasting plus a hash-chained energy ledger."""

from .accounting import co2_reduction, consumption_share, profit_series, yearly_potential
from .chain import Block, EnergyTransaction, Kind, append_block, genesis, validate_chain
from .contract import GridAccount, SmartContract, announce_surplus, place_demand, settle, surplus_alert
from .fedlearn import ClientDataset, FedConfig, ModelState, aggregate, client_update, run_rounds, select_clients
from .grid import MeterReading, Role, Scenario, build_scenario, classify_role, generate_readings

__version__ = "0.1.0"

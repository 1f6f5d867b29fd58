from .config import MachineConfig, base_setup

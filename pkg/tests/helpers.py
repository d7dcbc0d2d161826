"""Desk-scale deployments shared by the test suites"""
import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from channel_model import GridCounts, SystemGeometry
from utils.config_utils import config_from_dict

SMALL_COUNTS = GridCounts(G1=4, G2=4, G3=4, G4=4, G5=4)


def small_geometry(**changes):
    params = dict(
        bs_position=[0, 0, 0],
        ris_positions=[[-30, 28, 21], [-20, 30, 20]],
        site_position=[10, 20, 5],
        ue_positions=[[12, 8, 3], [25, 20, 15], [18, 12, 9]],
        M=4, N_y=3, N_z=3, L=2,
    )
    params.update(changes)
    return SystemGeometry(**params)


def tiny_config(scenario="fixed-site", on_grid=True, **sections):
    """M=4, 3x3 RISs, 4-point grids; sections override whole JSON blocks."""
    doc = {
        "scenario": scenario,
        "geometry": {"M": 4, "N_y": 3, "N_z": 3, "L": 2},
        "frame": {"T1": 32, "T2": 16, "reference_pilot_slots": 4},
        "grids": {"G1": 4, "G2": 4, "G3": 4, "G4": 4, "G5": 4},
        "solver": {"j_max": 8, "j_max_multi": 4, "u_max": 200},
        "sweep": {"snr_db": [10], "trials": 2, "seed": 5},
        "on_grid": on_grid,
    }
    doc.update(sections)
    return config_from_dict(doc)

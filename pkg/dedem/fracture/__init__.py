from .criteria import kink_angle as kink_angle
from .propagation import propagate as propagate
from .sif import dundurs as dundurs
from .sif import extract_sif as extract_sif
from .sif import rrmse as rrmse
from .sif import sample_cod as sample_cod
from .sif import sif_bimaterial as sif_bimaterial
from .sif import sif_homogeneous as sif_homogeneous
from .sif import tada_k1 as tada_k1
from .sweeps import sweep as sweep

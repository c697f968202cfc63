"""Principal objects: data approximators from points and lines to graphs and complexes.

Linear principal components, principal points, elastic maps, polygonal
principal curves, grammar-grown principal graphs and trees, cubic
complexes, and metro-map rendering of trees. Missing values are supported
throughout via gapped scalar products.
"""

__version__ = "0.1.0"

from .cubic_complex import CubicComplex, cartesian_product, grow_product  # noqa: E402
from .dataset import (  # noqa: E402
    DataMatrix,
    GappedVector,
    Partition,
    data_radius,
    gapped_distance,
    gapped_dot,
    load_iris,
    mean_point,
    msd_weighted,
    read_table,
    triplet_frequencies,
)
from .elastic_graph import (  # noqa: E402
    ElasticGraph,
    EnergyBreakdown,
    Star,
    elastic_energy,
    optimize_embedding,
    total_functional,
)
from .elastic_map import (  # noqa: E402
    SofteningSchedule,
    fit_elastic_map,
    make_elastic_net,
    project_to_map,
)
from .errors import PrincipalError  # noqa: E402
from .grammar import GROW, SHRINK, ComplexityBudget, Moduli, grow_principal_graph  # noqa: E402
from .kmeans import fit_kmeans  # noqa: E402
from .layout import emit_svg, layout_metro_map, pie_statistics  # noqa: E402
from .pca import fit_components, fit_first_component  # noqa: E402
from .polyline import PolylineParams, fit_polyline  # noqa: E402

__all__ = [
    "__version__",
    "DataMatrix", "GappedVector", "Partition", "data_radius", "gapped_distance", "gapped_dot",
    "load_iris", "mean_point", "msd_weighted", "read_table", "triplet_frequencies",
    "ElasticGraph", "EnergyBreakdown", "Star", "elastic_energy", "optimize_embedding",
    "total_functional", "SofteningSchedule", "fit_elastic_map", "make_elastic_net",
    "project_to_map", "PrincipalError", "GROW", "SHRINK", "ComplexityBudget", "Moduli",
    "grow_principal_graph", "fit_kmeans", "fit_components", "fit_first_component",
    "PolylineParams", "fit_polyline", "CubicComplex", "cartesian_product", "grow_product",
    "emit_svg", "layout_metro_map", "pie_statistics",
]

"""Topological feature extraction fused with small classification networks.

Pipeline: intensity image -> 8-neighbor grid complex -> lower-star
filtration -> 0-dimensional persistence diagram -> Betti curve -> one of
four classifier architectures (raw-image CNN, curve-only dense net, or
two fused two-stream variants).
"""

from .grid_complex import (
    GridEdge,
    ImageTensor,
    LowerStarFiltration,
    build_grid_edges,
    build_lower_star_filtration,
    edge_filtration_value,
)
from .persistence import (
    PersistenceDiagram,
    PersistentBar,
    betti0_at,
    compute_pd0,
    diagram_for_image,
    export_diagram,
    filter_bars,
)
from .vectorize import BettiCurve, CurveConfig, betti_curve, vectorize_dataset, vectorize_image
from .neural import (
    NetworkSpec,
    TrainConfig,
    build_network,
    forward,
    grad_check,
    init_params,
    load_model,
    loss_and_grads,
    predict,
    save_model,
    train,
)
from .pipeline import (
    EvalReport,
    Sample,
    evaluate_metrics,
    generate_blob_dataset,
    load_image,
    run_experiment,
    split_dataset,
)

__version__ = "0.1.0"

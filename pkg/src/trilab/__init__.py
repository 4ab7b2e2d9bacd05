"""trilab: sparse triangular-solve laboratory.

Nodal, block, and hierarchical block multi-color orderings over sparse SPD
systems, zero-fill incomplete Cholesky preconditioning, interchangeable
substitution kernels (sequential / per-color parallel / block-parallel /
interleaved vector-width), and a preconditioned CG driver that makes the
ordering-equivalence properties checkable.
"""

from ._kernels import available_backends, default_backend, get_kernels
from .io import (IngestionError, load_matrix, read_csr_cache,
                 read_matrix_market, write_csr_cache, write_matrix_market)
from .matrix import (CooMatrix, CsrMatrix, Permutation, SellMatrix,
                     coo_to_csr, csr_to_coo, csr_to_sell, csr_transpose,
                     sell_to_csr,
                     gen_laplacian_5pt, gen_random_spd, permute_system, spmv)
from .ordering import (Blocking, BmcLayout, ErReport, HbmcLayout,
                       Level2Report, NodalColoring, OrderingGraph,
                       build_blocks, build_hbmc, build_ordering_graph,
                       check_er_condition, check_level2_structure,
                       color_blocks, extend_with_dummies, greedy_color_nodes,
                       pad_colors)
from .precond import (BarrierCounter, IcBreakdownError, IcFactor, SellFactor,
                      WorkerPool, apply_ic_preconditioner, build_sell_factor,
                      factor_equivalence_check, ic0_factorize,
                      ic_residual_on_pattern, sub_backward_bmc,
                      sub_backward_hbmc, sub_backward_mc, sub_backward_seq,
                      sub_forward_bmc, sub_forward_hbmc, sub_forward_mc,
                      sub_forward_seq)
from .solver import (CgBreakdownError, CgConfig, SolveReport,
                     compare_convergence, pcg)

__version__ = "0.1.0"

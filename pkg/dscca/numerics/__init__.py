from .linalg import Matrix, SvdResult, SymEigResult, Vector, as_matrix, center_columns, svd, sym_eig, sym_inv_sqrt

__all__ = ["Matrix", "SvdResult", "SymEigResult", "Vector", "as_matrix", "center_columns", "svd", "sym_eig", "sym_inv_sqrt"]

#pragma once

#include <Eigen/Dense>
#include <vector>

namespace partfuse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;

inline Matrix select_rows(const Matrix& m, const IndexList& rows) {
    Matrix out(static_cast<Index>(rows.size()), m.cols());
    for (size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
    return out;
}

inline Matrix select_cols(const Matrix& m, const IndexList& cols) {
    Matrix out(m.rows(), static_cast<Index>(cols.size()));
    for (size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = m.col(cols[c]);
    return out;
}

inline Matrix select(const Matrix& m, const IndexList& rows, const IndexList& cols) {
    return select_cols(select_rows(m, rows), cols);
}

inline Vector select(const Vector& v, const IndexList& idx) {
    Vector out(static_cast<Index>(idx.size()));
    for (size_t k = 0; k < idx.size(); ++k) out[static_cast<Index>(k)] = v[idx[k]];
    return out;
}

inline IndexList iota_list(Index n) {
    IndexList out(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) out[static_cast<size_t>(i)] = i;
    return out;
}

}  // namespace partfuse

#pragma once

// Dense real symmetric matrix, stored full row-major with exact symmetry
// maintained by every operation. Values are immutable in spirit: operations
// return new matrices, and instances are safe to share across threads.

#include <span>
#include <string>
#include <vector>

namespace fermiforge {

/// I/O failures (missing files, malformed Matrix Market headers).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fixed-order pairwise (tree) summation; deterministic and accurate.
double pairwise_sum(std::span<const double> values);

class SymmetricMatrix {
public:
    SymmetricMatrix() = default;
    explicit SymmetricMatrix(int n) : n_(n), a_(static_cast<std::size_t>(n) * n, 0.0) {}

    /// Builds from a full row-major buffer, symmetrizing as (M + M^T)/2.
    static SymmetricMatrix from_dense(int n, std::span<const double> rows);
    static SymmetricMatrix identity(int n);
    static SymmetricMatrix diagonal(std::span<const double> d);

    int dim() const { return n_; }
    double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * n_ + j]; }
    /// Writes both (i,j) and (j,i).
    void set(int i, int j, double v) {
        a_[static_cast<std::size_t>(i) * n_ + j] = v;
        a_[static_cast<std::size_t>(j) * n_ + i] = v;
    }

    const std::vector<double>& data() const { return a_; }
    const double* row(int i) const { return &a_[static_cast<std::size_t>(i) * n_]; }

    double trace() const;
    /// Sum of squares of all entries; equals Tr(M^2) for symmetric M.
    double frobenius_squared() const;
    double max_abs() const;

private:
    friend SymmetricMatrix unchecked_from_buffer(int n, std::vector<double>&& buf);
    int n_ = 0;
    std::vector<double> a_;
};

/// A + s I
SymmetricMatrix add_identity(const SymmetricMatrix& a, double s);
/// sa A + sb B
SymmetricMatrix add_scaled(const SymmetricMatrix& a, double sa, const SymmetricMatrix& b,
                           double sb);
SymmetricMatrix scale(const SymmetricMatrix& a, double s);

/// Largest |eigenvalue| by deterministic power iteration; adequate for error
/// norms in tests and reports.
double spectral_norm_estimate(const SymmetricMatrix& m, int iterations = 300);

/// Matrix Market array-format I/O ("%%MatrixMarket matrix array real
/// symmetric"), values with 17 significant digits. The reader also accepts
/// square "general" arrays, which are symmetrized on construction.
void write_matrix_market(const SymmetricMatrix& m, const std::string& path);
SymmetricMatrix read_matrix_market(const std::string& path);

}  // namespace fermiforge

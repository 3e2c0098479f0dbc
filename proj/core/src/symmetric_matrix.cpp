#include "fermiforge/symmetric_matrix.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fermiforge {

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

SymmetricMatrix unchecked_from_buffer(int n, std::vector<double>&& buf) {
    SymmetricMatrix m;
    m.n_ = n;
    m.a_ = std::move(buf);
    return m;
}

SymmetricMatrix SymmetricMatrix::from_dense(int n, std::span<const double> rows) {
    if (static_cast<std::size_t>(n) * n != rows.size()) {
        throw std::invalid_argument("SymmetricMatrix::from_dense: size mismatch");
    }
    std::vector<double> buf(rows.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double v = 0.5 * (rows[static_cast<std::size_t>(i) * n + j] +
                                    rows[static_cast<std::size_t>(j) * n + i]);
            buf[static_cast<std::size_t>(i) * n + j] = v;
            buf[static_cast<std::size_t>(j) * n + i] = v;
        }
    }
    return unchecked_from_buffer(n, std::move(buf));
}

SymmetricMatrix SymmetricMatrix::identity(int n) {
    SymmetricMatrix m(n);
    for (int i = 0; i < n; ++i) m.set(i, i, 1.0);
    return m;
}

SymmetricMatrix SymmetricMatrix::diagonal(std::span<const double> d) {
    SymmetricMatrix m(static_cast<int>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) m.set(static_cast<int>(i), static_cast<int>(i), d[i]);
    return m;
}

double SymmetricMatrix::trace() const {
    std::vector<double> diag(n_);
    for (int i = 0; i < n_; ++i) diag[i] = (*this)(i, i);
    return pairwise_sum(diag);
}

double SymmetricMatrix::frobenius_squared() const {
    std::vector<double> sq(a_.size());
    for (std::size_t i = 0; i < a_.size(); ++i) sq[i] = a_[i] * a_[i];
    return pairwise_sum(sq);
}

double SymmetricMatrix::max_abs() const {
    double worst = 0.0;
    for (double v : a_) worst = std::max(worst, std::abs(v));
    return worst;
}

SymmetricMatrix add_identity(const SymmetricMatrix& a, double s) {
    std::vector<double> buf = a.data();
    const int n = a.dim();
    for (int i = 0; i < n; ++i) buf[static_cast<std::size_t>(i) * n + i] += s;
    return unchecked_from_buffer(n, std::move(buf));
}

SymmetricMatrix add_scaled(const SymmetricMatrix& a, double sa, const SymmetricMatrix& b,
                           double sb) {
    if (a.dim() != b.dim()) throw std::invalid_argument("add_scaled: dimension mismatch");
    std::vector<double> buf(a.data().size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = sa * a.data()[i] + sb * b.data()[i];
    return unchecked_from_buffer(a.dim(), std::move(buf));
}

SymmetricMatrix scale(const SymmetricMatrix& a, double s) {
    std::vector<double> buf(a.data().size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = s * a.data()[i];
    return unchecked_from_buffer(a.dim(), std::move(buf));
}

double spectral_norm_estimate(const SymmetricMatrix& m, int iterations) {
    const int n = m.dim();
    if (n == 0) return 0.0;
    std::vector<double> v(n), w(n);
    // Deterministic start with components in every direction.
    for (int i = 0; i < n; ++i) v[i] = 1.0 + 0.5 * std::sin(1.0 + i);
    double norm = 0.0;
    for (int it = 0; it < iterations; ++it) {
        for (int i = 0; i < n; ++i) {
            const double* row = m.row(i);
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += row[j] * v[j];
            w[i] = s;
        }
        double nw = 0.0;
        for (double x : w) nw += x * x;
        nw = std::sqrt(nw);
        if (nw == 0.0) return 0.0;
        norm = nw;
        for (int i = 0; i < n; ++i) v[i] = w[i] / nw;
    }
    return norm;
}

void write_matrix_market(const SymmetricMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    const int n = m.dim();
    out << "%%MatrixMarket matrix array real symmetric\n";
    out << n << " " << n << "\n";
    char buf[64];
    // Lower triangle in column-major order, per the array-format layout.
    for (int j = 0; j < n; ++j) {
        for (int i = j; i < n; ++i) {
            std::snprintf(buf, sizeof buf, "%.17g\n", m(i, j));
            out << buf;
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

SymmetricMatrix read_matrix_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string header;
    if (!std::getline(in, header)) throw IoError("empty file: " + path);
    std::istringstream hs(header);
    std::string banner, object, format, field, symmetry;
    hs >> banner >> object >> format >> field >> symmetry;
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        return s;
    };
    if (banner != "%%MatrixMarket" || lower(object) != "matrix" || lower(format) != "array" ||
        lower(field) != "real") {
        throw IoError("unsupported Matrix Market header: " + header);
    }
    const std::string sym = lower(symmetry);
    if (sym != "symmetric" && sym != "general") {
        throw IoError("unsupported Matrix Market symmetry: " + symmetry);
    }

    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '%') break;
    }
    std::istringstream dims(line);
    int rows = 0, cols = 0;
    if (!(dims >> rows >> cols) || rows <= 0 || rows != cols) {
        throw IoError("Matrix Market size line must be a square N N: " + path);
    }

    SymmetricMatrix m(rows);
    if (sym == "symmetric") {
        for (int j = 0; j < cols; ++j) {
            for (int i = j; i < rows; ++i) {
                double v;
                if (!(in >> v)) throw IoError("truncated Matrix Market data: " + path);
                m.set(i, j, v);
            }
        }
        return m;
    }
    std::vector<double> full(static_cast<std::size_t>(rows) * cols);
    for (int j = 0; j < cols; ++j) {
        for (int i = 0; i < rows; ++i) {
            double v;
            if (!(in >> v)) throw IoError("truncated Matrix Market data: " + path);
            full[static_cast<std::size_t>(i) * cols + j] = v;
        }
    }
    return SymmetricMatrix::from_dense(rows, full);
}

}  // namespace fermiforge

#pragma once

// Scalar (1-D) definitions of the Fermi and entropy functions, the classic
// SP2 recursion, and every learned recursive-quadratic architecture, together
// with the layer-count formulas and the architecture embedding chain
//   SP2 -> MLSP2 -> MLSP2_COMPACT / SKIPSP2 -> MAXSP2 -> ARBSP2.
// Everything here is a pure function of immutable inputs and safe to call
// concurrently.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace fermiforge {

/// Thrown when a coefficient object violates its structural invariants.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown by embeddings that would divide by a (near-)zero quadratic
/// coefficient, e.g. MLSP2 -> Skip-SP2 with some a_i = 0.
class DegenerateCoefficientsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inverse golden ratio (sqrt(5)-1)/2, computed at full precision.
inline const double kInvGolden = (std::sqrt(5.0) - 1.0) / 2.0;

/// Inverse temperature and chemical potential. After normalization both are
/// dimensionless with mu in (0,1); beta must be positive.
struct FermiParams {
    double beta = 1.0;
    double mu = 0.5;

    void validate() const;
};

/// Fermi occupation 1/(1+e^{beta(x-mu)}). Branches on the sign of the
/// exponent so it never overflows, even at beta ~ 1e3 and |x-mu| ~ 1.
double fermi(double x, const FermiParams& p);

/// Electronic entropy -y ln y - (1-y) ln(1-y) of an occupation y in [0,1],
/// with the continuous extension s(0) = s(1) = 0. Throws std::domain_error
/// outside [0,1].
double entropy_exact(double occupation);

/// s(x) = entropy_exact(fermi(x)) evaluated through a log1p form that stays
/// accurate when the occupation saturates at 0 or 1.
double fermi_entropy(double x, const FermiParams& p);

/// Result of the mu-driven SP2 branch selection: the sign sequence
/// (+1 = square, -1 = 2x - x^2) and the trajectory of the tracked pivot,
/// starting from mu_trajectory[0] = mu_prime.
struct Sp2SignSequence {
    std::vector<int> signs;
    std::vector<double> mu_trajectory;
};

/// Builds the SP2 sign sequence for a pivot mu_prime in (0,1). Iteration
/// stops once |mu_i - mu_prime| <= tol (checked after each step; pass a
/// negative tol to always run max_layers steps). Ties in the branch
/// criterion resolve to the square.
Sp2SignSequence sp2_sign_sequence(double mu_prime, int max_layers, double tol);

// ---------------------------------------------------------------------------
// Coefficient containers
// ---------------------------------------------------------------------------

struct Sp2Coefficients {
    std::vector<int> signs;  // entries in {+1,-1}
};

struct Mlsp2Coefficients {
    struct Layer {
        double a = 0.0;  // quadratic weight
        double b = 0.0;  // linear weight
        double c = 0.0;  // constant
        double d = 0.0;  // accumulator weight
    };
    std::vector<Layer> layers;
};

/// Compact 2n+2 parameter form: n layers x_{i+1} = (t1_i + x_i)^2 feeding an
/// accumulator with weight t2_i, plus the final affine pair.
struct Mlsp2CompactCoefficients {
    std::vector<std::array<double, 2>> pairs;  // n layer pairs + 1 final pair
};

/// Fully connected quadratic layers: x_{i+1} = (delta_i + sum_j theta_{i,j} x_j)^2
/// over all previous layers, output accumulator_init + sum_i gamma_i x_i.
struct MaxSp2Coefficients {
    int layer_count = 0;
    std::vector<double> delta;   // n offsets
    std::vector<double> theta;   // packed lower triangle, row i holds i+1 weights
    std::vector<double> gamma;   // n+1 accumulator weights
    double accumulator_init = 0.0;

    std::size_t theta_index(int i, int j) const {
        return static_cast<std::size_t>(i) * (i + 1) / 2 + j;
    }
    double theta_at(int i, int j) const { return theta[theta_index(i, j)]; }
};

/// Bounded-memory skip connections: each layer squares an affine combination
/// of the k most recent layers and K running accumulators.
struct SkipSp2Coefficients {
    int layer_count = 0;
    int skip_depth = 1;         // k >= 1
    int accumulator_count = 1;  // K >= 1
    // Row i holds (alpha_{i,0..k-1}, alpha_{i,k}); index k is the offset.
    std::vector<double> skip_weights;  // n rows of k+1
    std::vector<double> acc_in;        // n rows of K, weights of A_{i,j} into the layer
    std::vector<double> acc_out;       // n+1 rows of K, weights of x_i into A
    std::vector<double> acc_init;      // K initial accumulator values

    double alpha_at(int i, int j) const {
        return skip_weights[static_cast<std::size_t>(i) * (skip_depth + 1) + j];
    }
    double acc_in_at(int i, int l) const {
        return acc_in[static_cast<std::size_t>(i) * accumulator_count + l];
    }
    double acc_out_at(int i, int l) const {
        return acc_out[static_cast<std::size_t>(i) * accumulator_count + l];
    }
};

/// Rank-2 bilinear layers (delta_i + sum phi x_j)(delta'_i + sum psi x_j).
/// Evaluate/embed only by default; training must be forced.
struct ArbSp2Coefficients {
    int layer_count = 0;
    std::vector<double> delta;
    std::vector<double> delta_prime;
    std::vector<double> phi;  // packed triangles, same layout as MaxSp2
    std::vector<double> psi;
    std::vector<double> gamma;
    double accumulator_init = 0.0;

    std::size_t tri_index(int i, int j) const {
        return static_cast<std::size_t>(i) * (i + 1) / 2 + j;
    }
};

/// Entropy expansion: x0 = alpha (x - mu0) + mu0 (no spectrum flip), the
/// inner MLSP2 recursion, and the final layer s = (4 ln 2) y (1 - y).
struct EntropyModelCoefficients {
    Mlsp2Coefficients inner;
    double alpha = 0.0;  // in (0,1)
    double mu0 = 0.5;
};

enum class Architecture {
    Sp2,
    Mlsp2,
    Mlsp2Compact,
    MaxSp2,
    SkipSp2,
    ArbSp2,
    Entropy,
};

const char* to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

/// A trained (or embedded) model: architecture tag, matching payload and the
/// (beta0, mu0) it was fitted at. Immutable after construction by convention.
struct ModelCoefficients {
    Architecture architecture = Architecture::Sp2;
    std::variant<Sp2Coefficients, Mlsp2Coefficients, Mlsp2CompactCoefficients,
                 MaxSp2Coefficients, SkipSp2Coefficients, ArbSp2Coefficients,
                 EntropyModelCoefficients>
        payload;
    FermiParams trained_at;  // beta0, mu0

    int layer_count() const;
    void validate() const;  // throws ValidationError on any broken invariant
};

/// Evaluates the model's recursion at a scalar x. All Fermi-family
/// architectures start from the spectrum flip x0 = 1 - x; the entropy model
/// starts from its alpha rescale instead. Inputs outside [0,1] are evaluated
/// as-is with no accuracy guarantee.
double evaluate_model(const ModelCoefficients& m, double x);

/// Untrained entropy ansatz (4 ln 2) y (1-y) with y = fermi_like(alpha (x-mu) + mu).
template <typename F>
double entropy_ansatz(double x, F&& fermi_like, double alpha, double mu) {
    const double y = fermi_like(alpha * (x - mu) + mu);
    return 4.0 * std::log(2.0) * y * (1.0 - y);
}

/// Layer count needed for the SP2-generated polynomial to match the Fermi
/// derivative at the pivot, 4.7 ln(beta') - 6.5 rounded half away from zero
/// and clamped to at least 1.
int layer_count_estimate(double beta_prime);

/// Largest trainable beta0 for a given layer count: 4 (2/golden_ratio)^n.
/// Inverse of layer_count_estimate up to rounding.
double beta0_for_layer_count(int n);

/// Embeds a model into a strictly more expressive architecture along the
/// chain SP2 -> MLSP2 -> (MLSP2_COMPACT) -> SKIPSP2 -> MAXSP2 -> ARBSP2.
/// The result evaluates identically up to floating-point roundoff. Throws
/// ValidationError for a non-upward target and DegenerateCoefficientsError
/// when the construction divides by a vanishing quadratic coefficient.
ModelCoefficients embed(const ModelCoefficients& m, Architecture target);

/// True when `target` is reachable from `source` by embed().
bool embeddable(Architecture source, Architecture target);

/// n-fold application of F = f1 o f0 with f0 = x^2, f1 = 2x - x^2. The
/// inverse golden ratio is a fixed point of F.
double step_composition_f1f0(double x, int n);

}  // namespace fermiforge

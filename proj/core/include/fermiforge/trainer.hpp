#pragma once

// Weighted nonlinear least-squares fitting of the recursive quadratic
// architectures to the scalar Fermi or entropy target on [0,1], via
// Levenberg-Marquardt with optional geodesic acceleration. Sampling is fully
// deterministic: a golden-ratio low-discrepancy sequence pushed through the
// weighting's inverse CDF, fixed for the whole run.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fermiforge/scalar_models.hpp"

namespace fermiforge {

/// A non-finite value appeared while evaluating the recursion; `layer` is the
/// first offending layer index.
class DivergedEvaluationError : public std::runtime_error {
public:
    DivergedEvaluationError(const std::string& what, int layer_index)
        : std::runtime_error(what), layer(layer_index) {}
    int layer = -1;
};

/// The damped normal equations could not be solved at any damping level.
class SingularSystemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Weighting { Uniform, Derivative, ArcLength };
enum class TrainingTarget { Fermi, Entropy };

const char* to_string(Weighting w);
Weighting weighting_from_string(const std::string& s);

struct TrainingConfig {
    double beta0 = 40.0;
    double mu0 = 0.3;
    Architecture architecture = Architecture::Mlsp2;
    int layers = 0;  // 0 = auto: layer_count_estimate(beta0) + auto_layer_margin
    int auto_layer_margin = 2;
    int sample_count = 20000;
    Weighting weighting = Weighting::Derivative;
    std::uint64_t seed = 0;
    int max_iterations = 400;
    double residual_tolerance = 5e-9;  // stop when the weighted RMS residual dips below
    double lm_initial_damping = 1e-3;  // scaled by max diag(J^T J)
    bool geodesic_acceleration = true;
    double geodesic_alpha_ratio = 0.75;
    double max_error_ceiling = 1e-4;  // above this the fit is flagged unconverged
    int minimax_polish_rounds = 4;    // Lawson reweighting passes after the L2 fit
    bool fix_constant_term = false;   // freeze the theta_3 constants at their init
    int skip_depth = 1;               // SKIPSP2 k
    int accumulator_count = 1;        // SKIPSP2 K
    bool force_arbsp2 = false;        // ARBSP2 training is off unless forced

    void validate() const;
};

struct SampleSet {
    std::vector<double> xs;       // strictly increasing, endpoints pinned
    std::vector<double> targets;  // Fermi or entropy values at xs
    std::vector<double> weights;  // least-squares weights, sum = sample count
};

struct FitReport {
    double final_max_error = 0.0;
    double final_rms_error = 0.0;
    int iterations = 0;
    bool converged = false;
    double initial_max_error = 0.0;
};

/// Deterministic sample construction. UNIFORM is an evenly spaced grid;
/// DERIVATIVE places density proportional to 1 + |f'| and ARCLENGTH
/// proportional to sqrt(1 + f'^2), both through an inverse-CDF transform of
/// a seed-phased golden-ratio sequence. x = 0 and x = 1 are always included
/// and samples stay fixed for the whole run.
SampleSet build_samples(const TrainingConfig& cfg, TrainingTarget target);

/// Flattens the trainable parameters of a model (see trainer.cpp for the
/// per-architecture layout). SP2 has no continuous parameters and is
/// rejected.
std::vector<double> pack_parameters(const ModelCoefficients& m);

/// Rebuilds a model from `proto` with its trainable parameters replaced.
ModelCoefficients with_parameters(ModelCoefficients proto, std::span<const double> params);

/// residual_j = sqrt(w_j) (model(x_j) - target_j); the Jacobian is exact
/// forward-mode accumulation through the recursion, row-major (samples x
/// parameters). Throws DivergedEvaluationError on a non-finite intermediate.
void residual_and_jacobian(const ModelCoefficients& m, const SampleSet& s,
                           std::vector<double>& residuals, std::vector<double>& jacobian);

/// Abstract residual provider for the optimizer.
class LmProblem {
public:
    virtual ~LmProblem() = default;
    virtual int residual_count() const = 0;
    virtual int parameter_count() const = 0;
    virtual void residuals(std::span<const double> params, std::vector<double>& r) const = 0;
    virtual void residuals_and_jacobian(std::span<const double> params, std::vector<double>& r,
                                        std::vector<double>& jacobian) const = 0;
    /// Optional per-parameter freeze mask (1 = frozen).
    virtual const std::vector<std::uint8_t>* frozen_mask() const { return nullptr; }
};

struct LmOptions {
    int max_iterations = 400;
    double residual_tolerance = 5e-9;
    double initial_damping = 1e-3;
    bool geodesic_acceleration = true;
    double geodesic_alpha_ratio = 0.75;
    double geodesic_step_fraction = 0.1;
};

enum class LmStop { MaxIterations, ResidualTolerance, StepUnderflow, CostStall };

struct LmSummary {
    int iterations = 0;  // accepted steps
    double initial_cost = 0.0;
    double final_cost = 0.0;
    double final_rms = 0.0;
    LmStop stop = LmStop::MaxIterations;
};

/// Damped Gauss-Newton iteration: damping x3 on reject, /2 on accept,
/// Marquardt-scaled diagonal, optional geodesic second-order correction
/// gated on |accel|/|step|, plus an undamped Gauss-Newton trial whenever the
/// plain normal equations factorize. Accepted costs are non-increasing.
std::vector<double> levenberg_marquardt(const LmProblem& problem, std::vector<double> init,
                                        const LmOptions& opts, LmSummary* summary = nullptr);

/// SP2 sign-sequence initialization embedded into `target`. The pivot of the
/// sign sequence is 1 - mu0: the recursion runs on the flipped variable, so a
/// scalar step down at mu0 is a flipped-frame step up at 1 - mu0. For ARBSP2
/// the MaxSP2 embedding is gauge-jittered (c_i uniform in [0.9,1.1]\{1},
/// seeded) to break the phi/psi gradient symmetry.
ModelCoefficients sp2_initial_model(double beta0, double mu0, int layers, Architecture target,
                                    std::uint64_t seed = 0);

/// Max |model - target| over a dense probe grid (uniform plus
/// derivative-quantile points, `grid_points` each).
double scalar_max_error(const ModelCoefficients& m, TrainingTarget target, int grid_points);

/// Trains a Fermi model at (cfg.beta0, cfg.mu0) from the SP2 initialization.
/// Auto layer resolution adds cfg.auto_layer_margin to the estimate. A fit
/// whose final max error exceeds cfg.max_error_ceiling is returned flagged,
/// not thrown away.
std::pair<ModelCoefficients, FitReport> train_fermi(const TrainingConfig& cfg);

/// Trains the entropy expansion jointly (inner thetas and alpha) against
/// s(x) targets, initialized from `base` (an MLSP2-architecture Fermi model
/// at the same (beta0, mu0)) with alpha = (2 ln 2)^{-1/2}.
std::pair<ModelCoefficients, FitReport> train_entropy(const TrainingConfig& cfg,
                                                      const ModelCoefficients& base);

}  // namespace fermiforge

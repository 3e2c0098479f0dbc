#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fermiforge/scalar_models.hpp"
#include "fermiforge/trainer.hpp"

using namespace fermiforge;

namespace {

ModelCoefficients perturbed_mlsp2(int layers, unsigned seed, double scale = 0.02,
                                  double beta0 = 40.0, double mu0 = 0.3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    auto seq = sp2_sign_sequence(1.0 - mu0, layers, -1.0);
    Mlsp2Coefficients c;
    for (int s : seq.signs) {
        c.layers.push_back({s + u(rng), (1.0 - s) + u(rng), u(rng), u(rng)});
    }
    ModelCoefficients m;
    m.architecture = Architecture::Mlsp2;
    m.payload = std::move(c);
    m.trained_at = {beta0, mu0};
    return m;
}

SampleSet tiny_samples(const ModelCoefficients& m, int n = 41) {
    TrainingConfig cfg;
    cfg.beta0 = m.trained_at.beta;
    cfg.mu0 = m.trained_at.mu;
    cfg.sample_count = n;
    cfg.weighting = Weighting::Uniform;
    return build_samples(cfg, m.architecture == Architecture::Entropy
                                  ? TrainingTarget::Entropy
                                  : TrainingTarget::Fermi);
}

void check_jacobian_vs_fd(const ModelCoefficients& m) {
    const SampleSet s = tiny_samples(m);
    std::vector<double> r, jac;
    residual_and_jacobian(m, s, r, jac);
    const auto params = pack_parameters(m);
    const int P = static_cast<int>(params.size());
    const int n = static_cast<int>(s.xs.size());
    const double h = 1e-6;
    std::vector<double> rp, rm, dummy;
    for (int q = 0; q < P; ++q) {
        auto pp = params;
        pp[q] += h;
        residual_and_jacobian(with_parameters(m, pp), s, rp, dummy);
        pp[q] -= 2.0 * h;
        residual_and_jacobian(with_parameters(m, pp), s, rm, dummy);
        for (int j = 0; j < n; ++j) {
            const double fd = (rp[j] - rm[j]) / (2.0 * h);
            const double an = jac[static_cast<std::size_t>(j) * P + q];
            CHECK(std::abs(fd - an) <= 1e-5 * std::max({std::abs(fd), std::abs(an), 1.0}));
        }
    }
}

}  // namespace

TEST_CASE("build_samples: uniform grid mode") {
    TrainingConfig cfg;
    cfg.sample_count = 5;
    cfg.weighting = Weighting::Uniform;
    cfg.beta0 = 10.0;
    cfg.mu0 = 0.5;
    auto s = build_samples(cfg, TrainingTarget::Fermi);
    REQUIRE(s.xs.size() == 5);
    CHECK(s.xs[0] == 0.0);
    CHECK(s.xs[1] == 0.25);
    CHECK(s.xs[2] == 0.5);
    CHECK(s.xs[3] == 0.75);
    CHECK(s.xs[4] == 1.0);
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
        CHECK(s.targets[i] == fermi(s.xs[i], {10.0, 0.5}));
        CHECK(s.weights[i] == 1.0);
    }
}

TEST_CASE("build_samples: derivative weighting concentrates near mu") {
    TrainingConfig cfg;
    cfg.beta0 = 1500.0;
    cfg.mu0 = 1.0 / 3.0;
    cfg.sample_count = 20000;
    cfg.weighting = Weighting::Derivative;
    cfg.seed = 7;
    auto s = build_samples(cfg, TrainingTarget::Fermi);
    REQUIRE(s.xs.size() == 20000);
    CHECK(s.xs.front() == 0.0);
    CHECK(s.xs.back() == 1.0);
    for (std::size_t i = 1; i < s.xs.size(); ++i) CHECK(s.xs[i] > s.xs[i - 1]);

    int inside = 0;
    const double window = 10.0 / cfg.beta0;
    for (double x : s.xs) {
        if (std::abs(x - cfg.mu0) <= window) ++inside;
    }
    // The analytic density mass of 1 + |f'| in that window is ~0.507.
    CHECK(static_cast<double>(inside) / s.xs.size() > 0.4);
}

TEST_CASE("build_samples: deterministic and weighting variants") {
    for (Weighting w : {Weighting::Derivative, Weighting::ArcLength}) {
        TrainingConfig cfg;
        cfg.beta0 = 308.3;
        cfg.mu0 = 0.5;
        cfg.sample_count = 4000;
        cfg.weighting = w;
        cfg.seed = 123;
        auto a = build_samples(cfg, TrainingTarget::Fermi);
        auto b = build_samples(cfg, TrainingTarget::Fermi);
        CHECK(a.xs == b.xs);
        CHECK(a.targets == b.targets);
        CHECK(a.weights == b.weights);
        double wsum = 0.0;
        for (double v : a.weights) wsum += v;
        CHECK(wsum == doctest::Approx(cfg.sample_count).epsilon(1e-12));
    }
}

TEST_CASE("residuals from the gradient path match evaluate_model bitwise") {
    auto m = perturbed_mlsp2(8, 21);
    const SampleSet s = tiny_samples(m, 101);
    std::vector<double> r, jac;
    residual_and_jacobian(m, s, r, jac);
    for (std::size_t j = 0; j < s.xs.size(); ++j) {
        const double direct = std::sqrt(s.weights[j]) *
                              (evaluate_model(m, s.xs[j]) - s.targets[j]);
        CHECK(r[j] == direct);
    }
}

TEST_CASE("Jacobian matches central finite differences for every trainable architecture") {
    auto mlsp2 = perturbed_mlsp2(4, 31);
    check_jacobian_vs_fd(mlsp2);
    check_jacobian_vs_fd(embed(mlsp2, Architecture::Mlsp2Compact));
    check_jacobian_vs_fd(embed(mlsp2, Architecture::SkipSp2));
    check_jacobian_vs_fd(embed(mlsp2, Architecture::MaxSp2));
    check_jacobian_vs_fd(sp2_initial_model(40.0, 0.3, 4, Architecture::ArbSp2, 5));

    ModelCoefficients ent;
    ent.architecture = Architecture::Entropy;
    EntropyModelCoefficients ec;
    ec.inner = std::get<Mlsp2Coefficients>(perturbed_mlsp2(4, 32).payload);
    ec.alpha = 0.85;
    ec.mu0 = 0.3;
    ent.payload = ec;
    ent.trained_at = {40.0, 0.3};
    check_jacobian_vs_fd(ent);
}

TEST_CASE("Jacobian column of a last-layer accumulator weight is sqrt(w) x_{n-1}") {
    auto m = perturbed_mlsp2(5, 41);
    const auto& c = std::get<Mlsp2Coefficients>(m.payload);
    const SampleSet s = tiny_samples(m, 37);
    std::vector<double> r, jac;
    residual_and_jacobian(m, s, r, jac);
    const int P = static_cast<int>(pack_parameters(m).size());
    const int col = 4 * 4 + 3;  // d of layer 4 (the last layer)
    for (std::size_t j = 0; j < s.xs.size(); ++j) {
        double x = 1.0 - s.xs[j];
        for (int i = 0; i < 4; ++i) {
            x = c.layers[i].a * x * x + c.layers[i].b * x + c.layers[i].c;
        }
        CHECK(jac[j * P + col] ==
              doctest::Approx(std::sqrt(s.weights[j]) * x).epsilon(1e-14));
    }
}

TEST_CASE("residual_and_jacobian reports the diverging layer") {
    auto m = perturbed_mlsp2(4, 51);
    std::get<Mlsp2Coefficients>(m.payload).layers[2].a = 1e200;
    std::get<Mlsp2Coefficients>(m.payload).layers[3].a = 1e200;
    const SampleSet s = tiny_samples(m, 11);
    std::vector<double> r, jac;
    try {
        residual_and_jacobian(m, s, r, jac);
        FAIL("expected DivergedEvaluationError");
    } catch (const DivergedEvaluationError& e) {
        CHECK(e.layer == 3);  // overflow squares to inf one layer later
    }
}

namespace {

class LinearProblem final : public LmProblem {
public:
    // r = A theta - b with A = [[1,0],[0,2],[1,1],[2,1]], b = [1,2,3,4];
    // normal equations give theta* = (13/9, 10/9).
    int residual_count() const override { return 4; }
    int parameter_count() const override { return 2; }
    void residuals(std::span<const double> t, std::vector<double>& r) const override {
        r = {t[0] - 1.0, 2.0 * t[1] - 2.0, t[0] + t[1] - 3.0, 2.0 * t[0] + t[1] - 4.0};
    }
    void residuals_and_jacobian(std::span<const double> t, std::vector<double>& r,
                                std::vector<double>& J) const override {
        residuals(t, r);
        J = {1, 0, 0, 2, 1, 1, 2, 1};
    }
};

class RosenbrockProblem final : public LmProblem {
public:
    mutable std::vector<double> accepted_costs;
    int residual_count() const override { return 2; }
    int parameter_count() const override { return 2; }
    void residuals(std::span<const double> t, std::vector<double>& r) const override {
        r = {1.0 - t[0], 10.0 * (t[1] - t[0] * t[0])};
    }
    void residuals_and_jacobian(std::span<const double> t, std::vector<double>& r,
                                std::vector<double>& J) const override {
        residuals(t, r);
        J = {-1.0, 0.0, -20.0 * t[0], 10.0};
        accepted_costs.push_back(0.5 * (r[0] * r[0] + r[1] * r[1]));
    }
};

}  // namespace

TEST_CASE("LM solves a linear least-squares problem in one accepted step") {
    LinearProblem prob;
    LmOptions opts;
    opts.max_iterations = 50;
    LmSummary sum;
    auto theta = levenberg_marquardt(prob, {0.0, 0.0}, opts, &sum);
    CHECK(sum.iterations == 1);
    CHECK(std::abs(theta[0] - 13.0 / 9.0) <= 1e-9);
    CHECK(std::abs(theta[1] - 10.0 / 9.0) <= 1e-9);
}

TEST_CASE("LM reaches the Rosenbrock minimum with monotone accepted costs") {
    RosenbrockProblem prob;
    LmOptions opts;
    opts.max_iterations = 200;
    opts.residual_tolerance = 1e-12;
    LmSummary sum;
    auto theta = levenberg_marquardt(prob, {-1.2, 1.0}, opts, &sum);
    CHECK(std::abs(theta[0] - 1.0) <= 1e-10);
    CHECK(std::abs(theta[1] - 1.0) <= 1e-10);
    CHECK(sum.iterations <= 200);
    // residuals_and_jacobian runs once per accepted point, so the recorded
    // cost sequence is exactly the accepted-cost sequence.
    for (std::size_t i = 1; i < prob.accepted_costs.size(); ++i) {
        CHECK(prob.accepted_costs[i] <= prob.accepted_costs[i - 1] * (1.0 + 1e-12));
    }
}

TEST_CASE("sp2_initial_model produces the documented MaxSP2 gamma initialization") {
    const int layers = 6;
    auto init = sp2_initial_model(40.0, 0.3, layers, Architecture::MaxSp2);
    const auto& c = std::get<MaxSp2Coefficients>(init.payload);
    auto seq = sp2_sign_sequence(1.0 - 0.3, layers, -1.0);
    REQUIRE(static_cast<int>(seq.signs.size()) == layers);
    for (int i = 0; i < layers; ++i) CHECK(c.gamma[i] == 0.0);
    CHECK(c.gamma[layers] == static_cast<double>(seq.signs.back()));
    CHECK(c.accumulator_init == (seq.signs.back() == -1 ? 1.0 : 0.0));

    // And the embedded initialization still evaluates as SP2.
    ModelCoefficients sp2;
    sp2.architecture = Architecture::Sp2;
    sp2.payload = Sp2Coefficients{seq.signs};
    sp2.trained_at = {40.0, 0.3};
    for (int i = 0; i <= 500; ++i) {
        const double x = i / 500.0;
        CHECK(std::abs(evaluate_model(init, x) - evaluate_model(sp2, x)) <= 1e-13);
    }
}

TEST_CASE("sp2_initial_model steps down at mu0") {
    auto init = sp2_initial_model(308.3, 0.3, 24, Architecture::Mlsp2);
    CHECK(evaluate_model(init, 0.05) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(evaluate_model(init, 0.6) == doctest::Approx(0.0).epsilon(1e-4));
}

TEST_CASE("ArbSP2 gauge jitter breaks the phi/psi symmetry without changing values") {
    auto arb = sp2_initial_model(40.0, 0.3, 5, Architecture::ArbSp2, 11);
    const auto& c = std::get<ArbSp2Coefficients>(arb.payload);
    bool some_difference = false;
    for (std::size_t i = 0; i < c.phi.size(); ++i) {
        if (c.phi[i] != c.psi[i] && (c.phi[i] != 0.0 || c.psi[i] != 0.0)) {
            some_difference = true;
        }
    }
    CHECK(some_difference);
    auto max = sp2_initial_model(40.0, 0.3, 5, Architecture::MaxSp2);
    for (int i = 0; i <= 300; ++i) {
        const double x = i / 300.0;
        CHECK(std::abs(evaluate_model(arb, x) - evaluate_model(max, x)) <= 1e-12);
    }
}

TEST_CASE("train_fermi at (40, 0.3) reaches 1e-6 and is deterministic") {
    TrainingConfig cfg;
    cfg.beta0 = 40.0;
    cfg.mu0 = 0.3;
    cfg.architecture = Architecture::Mlsp2;
    cfg.layers = 14;
    cfg.sample_count = 6000;
    cfg.weighting = Weighting::Derivative;
    cfg.seed = 42;
    cfg.max_iterations = 1000;

    auto [model, report] = train_fermi(cfg);
    CHECK(report.initial_max_error >= 1e-3);  // truncated SP2 starts at O(1e-2)
    CHECK(report.final_max_error <= 1e-6);
    CHECK(report.converged);
    CHECK(report.final_max_error <= report.initial_max_error);
    CHECK(model.trained_at.beta == 40.0);
    CHECK(model.trained_at.mu == 0.3);

    auto [model2, report2] = train_fermi(cfg);
    CHECK(pack_parameters(model) == pack_parameters(model2));
    CHECK(report2.iterations == report.iterations);
}

TEST_CASE("train_fermi auto layer resolution and policy errors") {
    TrainingConfig cfg;
    cfg.beta0 = 40.0;
    cfg.mu0 = 0.3;
    cfg.layers = 0;  // auto: estimate 11 + margin 2
    cfg.sample_count = 4000;
    cfg.max_iterations = 5;
    auto [model, report] = train_fermi(cfg);
    CHECK(model.layer_count() == 13);
    (void)report;

    TrainingConfig bad = cfg;
    bad.architecture = Architecture::ArbSp2;
    CHECK_THROWS_AS(train_fermi(bad), ValidationError);
    bad.architecture = Architecture::Sp2;
    CHECK_THROWS_AS(train_fermi(bad), ValidationError);

    TrainingConfig small = cfg;
    small.layers = 14;
    small.sample_count = 100;  // < 10x parameter count
    CHECK_THROWS_AS(train_fermi(small), ValidationError);
}

TEST_CASE("train_entropy from a trained base reaches 1e-5 with alpha in [0.80, 0.90]") {
    TrainingConfig fcfg;
    fcfg.beta0 = 40.0;
    fcfg.mu0 = 0.3;
    fcfg.architecture = Architecture::Mlsp2;
    fcfg.layers = 14;
    fcfg.sample_count = 6000;
    fcfg.seed = 42;
    fcfg.max_iterations = 1000;
    auto [base, base_report] = train_fermi(fcfg);
    REQUIRE(base_report.converged);

    TrainingConfig ecfg = fcfg;
    ecfg.max_iterations = 1000;
    auto [ent, report] = train_entropy(ecfg, base);
    // Initialization alone sits at the untrained-ansatz level (~4e-3).
    CHECK(report.initial_max_error <= 1e-2);
    CHECK(report.initial_max_error >= 1e-4);
    CHECK(report.final_max_error <= 1e-5);
    const auto& ec = std::get<EntropyModelCoefficients>(ent.payload);
    CHECK(ec.alpha >= 0.80);
    CHECK(ec.alpha <= 0.90);
    CHECK(ent.architecture == Architecture::Entropy);

    // Mismatched (beta0, mu0) is rejected.
    TrainingConfig wrong = ecfg;
    wrong.beta0 = 50.0;
    CHECK_THROWS_AS(train_entropy(wrong, base), ValidationError);
}

TEST_CASE("train_fermi works for the other trainable architectures") {
    struct Case {
        Architecture arch;
        double bound;
    };
    for (Case c : {Case{Architecture::Mlsp2Compact, 5e-5}, Case{Architecture::MaxSp2, 1e-6},
                   Case{Architecture::SkipSp2, 5e-6}}) {
        TrainingConfig cfg;
        cfg.beta0 = 40.0;
        cfg.mu0 = 0.3;
        cfg.architecture = c.arch;
        cfg.layers = 12;
        cfg.sample_count = 6000;
        cfg.seed = 42;
        cfg.max_iterations = 500;
        auto [model, report] = train_fermi(cfg);
        CAPTURE(to_string(c.arch));
        CHECK(model.architecture == c.arch);
        CHECK(report.final_max_error <= c.bound);
        CHECK(report.final_max_error <= report.initial_max_error);
        CHECK(report.converged);
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fermiforge/dual.hpp"
#include "fermiforge/scalar_models.hpp"

using namespace fermiforge;

namespace {

double grid_max_diff(const ModelCoefficients& a, const ModelCoefficients& b, int points) {
    double worst = 0.0;
    for (int i = 0; i < points; ++i) {
        const double x = static_cast<double>(i) / (points - 1);
        worst = std::max(worst, std::abs(evaluate_model(a, x) - evaluate_model(b, x)));
    }
    return worst;
}

ModelCoefficients sp2_model(std::vector<int> signs, double beta0 = 40.0, double mu0 = 0.5) {
    ModelCoefficients m;
    m.architecture = Architecture::Sp2;
    m.payload = Sp2Coefficients{std::move(signs)};
    m.trained_at = {beta0, mu0};
    return m;
}

// SP2-embedded MLSP2 with small coefficient noise: stays inside the stable
// recursion range while exercising generic (a,b,c,d) layers.
ModelCoefficients perturbed_mlsp2(int layers, unsigned seed, double scale = 0.02) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    auto seq = sp2_sign_sequence(0.4 + 0.2 * std::uniform_real_distribution<double>(0, 1)(rng),
                                 layers, -1.0);
    Mlsp2Coefficients c;
    for (int s : seq.signs) {
        c.layers.push_back({static_cast<double>(s) + u(rng), (1.0 - s) + u(rng), u(rng),
                            u(rng)});
    }
    ModelCoefficients m;
    m.architecture = Architecture::Mlsp2;
    m.payload = std::move(c);
    m.trained_at = {40.0, 0.5};
    return m;
}

}  // namespace

TEST_CASE("fermi basic values and overflow safety") {
    CHECK(fermi(0.5, {10.0, 0.5}) == doctest::Approx(0.5).epsilon(1e-15));
    const double beta = 7.0, mu = 0.31;
    CHECK(fermi(mu + std::log(3.0) / beta, {beta, mu}) == doctest::Approx(0.25).epsilon(1e-13));

    const double tiny = fermi(0.9, {1500.0, 1.0 / 3.0});
    CHECK(std::isfinite(tiny));
    CHECK(tiny >= 0.0);
    CHECK(tiny < 1e-300);

    const double huge = fermi(-0.9, {1500.0, 1.0 / 3.0});
    CHECK(std::isfinite(huge));
    CHECK(huge <= 1.0);
    CHECK(1.0 - huge < 1e-300);

    // Tails saturate to exactly 0 or 1 once the exponential underflows;
    // values must never leave [0,1].
    for (int i = 0; i <= 1000; ++i) {
        const double x = i / 1000.0;
        const double f = fermi(x, {308.3, 0.5});
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
    }
    CHECK(fermi(0.49, {308.3, 0.5}) > 0.0);
    CHECK(fermi(0.49, {308.3, 0.5}) < 1.0);
    CHECK(fermi(0.51, {308.3, 0.5}) > 0.0);
    CHECK(fermi(0.51, {308.3, 0.5}) < 1.0);
}

TEST_CASE("fermi symmetry f(x;b,mu) = 1 - f(1-x;b,1-mu)") {
    // The identity is exact; in floating point the defect grows like
    // beta * eps from the rounding of beta (x - mu).
    for (double beta : {3.0, 40.0, 308.3}) {
        const double tol = std::max(1e-15, 0.5 * beta * 2.220446049250313e-16);
        for (double mu : {0.2, 0.5, 0.7}) {
            for (int i = 0; i <= 400; ++i) {
                const double x = i / 400.0;
                const double lhs = fermi(x, {beta, mu});
                const double rhs = 1.0 - fermi(1.0 - x, {beta, 1.0 - mu});
                CHECK(std::abs(lhs - rhs) <= tol);
            }
        }
    }
}

TEST_CASE("entropy_exact values and domain") {
    CHECK(entropy_exact(0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(entropy_exact(0.0) == 0.0);
    CHECK(entropy_exact(1.0) == 0.0);
    const double expected = 0.25 * std::log(4.0) + 0.75 * std::log(4.0 / 3.0);
    CHECK(entropy_exact(0.25) == doctest::Approx(expected).epsilon(1e-15));
    CHECK_THROWS_AS(entropy_exact(-0.01), std::domain_error);
    CHECK_THROWS_AS(entropy_exact(1.01), std::domain_error);
}

TEST_CASE("fermi_entropy agrees with the direct composition") {
    const FermiParams p{40.0, 0.3};
    for (int i = 0; i <= 500; ++i) {
        const double x = i / 500.0;
        CHECK(fermi_entropy(x, p) ==
              doctest::Approx(entropy_exact(fermi(x, p))).epsilon(1e-12));
    }
    // Saturated tails stay finite and nonnegative.
    CHECK(fermi_entropy(1.0, {1500.0, 1.0 / 3.0}) >= 0.0);
    CHECK(fermi_entropy(1.0, {1500.0, 1.0 / 3.0}) < 1e-200);
}

TEST_CASE("sp2_sign_sequence tie-break and trajectory") {
    auto seq = sp2_sign_sequence(0.5, 6, -1.0);
    REQUIRE(seq.signs.size() == 6);
    CHECK(seq.signs[0] == +1);  // tie at step 1 resolves to the square
    CHECK(seq.signs[1] == -1);
    CHECK(seq.mu_trajectory[0] == 0.5);
    CHECK(seq.mu_trajectory[1] == 0.25);
    CHECK(seq.mu_trajectory[2] == doctest::Approx(0.4375).epsilon(1e-15));

    auto empty = sp2_sign_sequence(0.5, 0, 1e-8);
    CHECK(empty.signs.empty());
    REQUIRE(empty.mu_trajectory.size() == 1);
    CHECK(empty.mu_trajectory[0] == 0.5);
}

TEST_CASE("sp2_sign_sequence golden-ratio cycle") {
    const double phi = kInvGolden;
    auto seq = sp2_sign_sequence(phi, 12, -1.0);
    REQUIRE(seq.signs.size() == 12);
    for (std::size_t i = 0; i < seq.signs.size(); ++i) {
        CHECK(seq.signs[i] == (i % 2 == 0 ? +1 : -1));
    }
    for (std::size_t i = 0; i < seq.mu_trajectory.size(); ++i) {
        const double expect = (i % 2 == 0) ? phi : phi * phi;
        CHECK(std::abs(seq.mu_trajectory[i] - expect) <= 1e-15);
    }
    // The tolerance-based termination fires as soon as the cycle returns.
    auto tol = sp2_sign_sequence(phi, 12, 1e-12);
    CHECK(tol.signs.size() == 2);
}

TEST_CASE("evaluate_model: SP2 basics") {
    auto m = sp2_model({+1});
    CHECK(evaluate_model(m, 0.0) == 1.0);  // x0 = 1, squaring fixes it
    CHECK(evaluate_model(m, 1.0) == 0.0);

    // A long sequence purifies toward the step: high x -> 0, low x -> 1.
    auto seq = sp2_sign_sequence(0.5, 30, -1.0);
    auto deep = sp2_model(seq.signs);
    CHECK(evaluate_model(deep, 0.9) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(evaluate_model(deep, 0.1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("SP2 -> MLSP2 embedding is the documented coefficient map") {
    auto m = sp2_model({+1, -1});
    auto e = embed(m, Architecture::Mlsp2);
    const auto& c = std::get<Mlsp2Coefficients>(e.payload);
    REQUIRE(c.layers.size() == 2);
    CHECK(c.layers[0].a == 1.0);
    CHECK(c.layers[0].b == 0.0);
    CHECK(c.layers[0].c == 0.0);
    CHECK(c.layers[0].d == 0.0);
    CHECK(c.layers[1].a == -1.0);
    CHECK(c.layers[1].b == 2.0);
    CHECK(c.layers[1].c == 0.0);
    CHECK(c.layers[1].d == 0.0);
    CHECK(grid_max_diff(m, e, 10001) <= 1e-14);
}

TEST_CASE("SP2-embedded MLSP2 matches SP2 pointwise to 1e-15") {
    auto seq = sp2_sign_sequence(0.35, 18, -1.0);
    auto m = sp2_model(seq.signs);
    auto e = embed(m, Architecture::Mlsp2);
    CHECK(grid_max_diff(m, e, 10001) <= 1e-15);
}

TEST_CASE("embedding chain preserves evaluation") {
    for (unsigned seed : {1u, 2u, 3u, 4u}) {
        auto mlsp2 = perturbed_mlsp2(10, seed);

        auto compact = embed(mlsp2, Architecture::Mlsp2Compact);
        CHECK(grid_max_diff(mlsp2, compact, 10001) <= 1e-12);

        auto skip = embed(mlsp2, Architecture::SkipSp2);
        CHECK(grid_max_diff(mlsp2, skip, 10001) <= 1e-12);

        auto max = embed(skip, Architecture::MaxSp2);
        CHECK(grid_max_diff(skip, max, 10001) <= 1e-12);

        auto arb = embed(max, Architecture::ArbSp2);
        CHECK(grid_max_diff(max, arb, 10001) <= 1e-15);

        // Multi-hop routing through the same chain.
        auto arb2 = embed(mlsp2, Architecture::ArbSp2);
        CHECK(grid_max_diff(mlsp2, arb2, 10001) <= 1e-12);

        auto skip_from_compact = embed(compact, Architecture::SkipSp2);
        CHECK(grid_max_diff(compact, skip_from_compact, 10001) <= 1e-12);
    }
}

TEST_CASE("embedding errors") {
    auto mlsp2 = perturbed_mlsp2(6, 7);
    CHECK_THROWS_AS(embed(mlsp2, Architecture::Sp2), ValidationError);
    auto max = embed(mlsp2, Architecture::MaxSp2);
    CHECK_THROWS_AS(embed(max, Architecture::SkipSp2), ValidationError);

    // A vanishing quadratic coefficient breaks the Skip-SP2 construction.
    auto degenerate = mlsp2;
    std::get<Mlsp2Coefficients>(degenerate.payload).layers[2].a = 0.0;
    CHECK_THROWS_AS(embed(degenerate, Architecture::SkipSp2), DegenerateCoefficientsError);
    CHECK_THROWS_AS(embed(degenerate, Architecture::Mlsp2Compact),
                    DegenerateCoefficientsError);
}

TEST_CASE("recursion range stays within [-0.5, 1.5] for SP2-family coefficients") {
    for (unsigned seed : {11u, 12u}) {
        auto m = perturbed_mlsp2(16, seed);
        const auto& c = std::get<Mlsp2Coefficients>(m.payload);
        for (int i = 0; i <= 2000; ++i) {
            double x = 1.0 - i / 2000.0;  // spectrum flip
            for (const auto& l : c.layers) {
                x = l.a * x * x + l.b * x + l.c;
                CHECK(x >= -0.5);
                CHECK(x <= 1.5);
            }
        }
    }
}

TEST_CASE("entropy model evaluation pipeline") {
    // One inner layer, worked by hand:
    // x0 = a(x-mu)+mu, x1 = x0^2, A1 = 0.5 x0, y = A1 + x1, s = 4ln2 y(1-y).
    EntropyModelCoefficients ec;
    ec.inner.layers.push_back({1.0, 0.0, 0.0, 0.5});
    ec.alpha = 0.8;
    ec.mu0 = 0.3;
    ModelCoefficients m;
    m.architecture = Architecture::Entropy;
    m.payload = ec;
    m.trained_at = {40.0, 0.3};

    const double x = 0.62;
    const double x0 = 0.8 * (x - 0.3) + 0.3;
    const double y = 0.5 * x0 + x0 * x0;
    const double expect = 4.0 * std::log(2.0) * y * (1.0 - y);
    CHECK(evaluate_model(m, x) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("entropy_ansatz matches the peak and known error levels") {
    const FermiParams p{40.0, 0.3};
    auto f = [&](double u) { return fermi(u, p); };
    CHECK(entropy_ansatz(p.mu, f, 0.849322, p.mu) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));

    auto max_err = [&](double alpha) {
        double worst = 0.0;
        for (int i = 0; i <= 100000; ++i) {
            const double x = i / 100000.0;
            worst = std::max(worst,
                             std::abs(entropy_ansatz(x, f, alpha, p.mu) - fermi_entropy(x, p)));
        }
        return worst;
    };
    const double err_curvature = max_err(1.0 / std::sqrt(2.0 * std::log(2.0)));
    CHECK(err_curvature <= 5e-3);   // curvature-matched alpha, ~1e-3 scale
    CHECK(err_curvature >= 1e-4);
    const double err_lsq = max_err(0.842704);
    CHECK(err_lsq / std::log(2.0) <= 3e-3);  // around a tenth of a percent of the peak
    CHECK(err_lsq / std::log(2.0) >= 5e-4);
    CHECK(err_lsq < err_curvature);
}

TEST_CASE("entropy ansatz curvature matches -beta^2/4 at the peak") {
    for (double beta : {10.0, 40.0}) {
        const FermiParams p{beta, 0.5};
        auto f = [&](double u) { return fermi(u, p); };
        const double alpha = 1.0 / std::sqrt(2.0 * std::log(2.0));
        const double h = 1e-4;
        const double s0 = entropy_ansatz(p.mu, f, alpha, p.mu);
        const double sp = entropy_ansatz(p.mu + h, f, alpha, p.mu);
        const double sm = entropy_ansatz(p.mu - h, f, alpha, p.mu);
        const double second = (sp - 2.0 * s0 + sm) / (h * h);
        const double expect = -beta * beta / 4.0;
        CHECK(std::abs(second - expect) / std::abs(expect) <= 1e-4);
    }
}

TEST_CASE("layer_count_estimate pinned values") {
    CHECK(layer_count_estimate(308.3) == 20);
    CHECK(layer_count_estimate(33.3) == 10);
    CHECK(layer_count_estimate(1500.0) == 28);
    CHECK(layer_count_estimate(40.0) == 11);
    CHECK(layer_count_estimate(4.0) == 1);
    CHECK(layer_count_estimate(0.5) == 1);  // clamped
}

TEST_CASE("beta0_for_layer_count and round trip") {
    CHECK(beta0_for_layer_count(10) == doctest::Approx(33.3).epsilon(1e-3));
    CHECK(beta0_for_layer_count(1) ==
          doctest::Approx(4.0 * (std::sqrt(5.0) - 1.0)).epsilon(1e-15));
    for (int n = 1; n <= 40; ++n) {
        CHECK(layer_count_estimate(beta0_for_layer_count(n)) == n);
    }
}

TEST_CASE("step_composition_f1f0") {
    const double phi = kInvGolden;
    for (int n : {1, 2, 5, 25}) {
        CHECK(std::abs(step_composition_f1f0(phi, n) - phi) <= 1e-15);
    }
    CHECK(step_composition_f1f0(0.1, 1) == doctest::Approx(0.0199).epsilon(1e-15));
    for (int n : {0, 1, 3, 10}) {
        CHECK(step_composition_f1f0(0.0, n) == 0.0);
        CHECK(step_composition_f1f0(1.0, n) == 1.0);
    }
}

TEST_CASE("derivative of the alternating chain at the golden fixed point") {
    const double phi = kInvGolden;
    const double rate = 2.0 * phi;
    for (int n = 1; n <= 30; ++n) {
        Dual x{phi, 1.0};
        for (int i = 0; i < n; ++i) {
            x = (i % 2 == 0) ? x * x : 2.0 * x - x * x;
        }
        const double expect = std::pow(rate, n);
        CHECK(std::abs(x.d - expect) / expect <= 1e-10);
    }
}

TEST_CASE("quadratic convergence of F on (0, 0.3]") {
    for (int i = 1; i <= 300; ++i) {
        const double x = 0.3 * i / 300.0;
        const double fx = step_composition_f1f0(x, 1);
        const double ratio = fx / (x * x);
        CHECK(ratio <= 2.0 + 1e-12);
        CHECK(ratio >= 2.0 - x * x - 1e-12);
    }
    double x = 0.29;
    for (int i = 0; i < 6; ++i) {
        const double next = step_composition_f1f0(x, 1);
        CHECK(std::abs(next) <= 2.0 * x * x + 1e-300);
        x = next;
    }
}

TEST_CASE("model validation errors") {
    ModelCoefficients m;
    m.architecture = Architecture::Mlsp2;
    m.payload = Sp2Coefficients{{+1}};
    m.trained_at = {40.0, 0.3};
    CHECK_THROWS_AS(m.validate(), ValidationError);

    ModelCoefficients bad_mu = sp2_model({+1});
    bad_mu.trained_at.mu = 1.5;
    CHECK_THROWS_AS(bad_mu.validate(), ValidationError);

    ModelCoefficients nan_model = perturbed_mlsp2(4, 3);
    std::get<Mlsp2Coefficients>(nan_model.payload).layers[0].b =
        std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(evaluate_model(nan_model, 0.5), ValidationError);
}

#include "fermiforge/scalar_models.hpp"

#include <algorithm>
#include <cassert>

namespace fermiforge {

namespace {

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Debug-build guard for the recursion range: pure SP2 maps [0,1] into
// itself, so an out-of-range intermediate means a broken input or sequence.
// The wider [-0.5, 1.5] envelope of trained coefficient sets is a tested
// property (see the scalar-model tests), not an assertion, since optimizer
// trial steps may legitimately explore outside it.
inline void check_range(double xi, bool input_in_unit) {
    (void)xi;
    (void)input_in_unit;
    assert(!input_in_unit || (xi >= -1e-12 && xi <= 1.0 + 1e-12));
}

}  // namespace

void FermiParams::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw ValidationError("FermiParams: beta must be positive and finite");
    }
    if (!std::isfinite(mu)) {
        throw ValidationError("FermiParams: mu must be finite");
    }
}

double fermi(double x, const FermiParams& p) {
    const double t = p.beta * (x - p.mu);
    if (t > 0.0) {
        const double e = std::exp(-t);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(t));
}

double entropy_exact(double occupation) {
    if (!(occupation >= 0.0 && occupation <= 1.0)) {
        throw std::domain_error("entropy_exact: occupation outside [0,1]");
    }
    const double y = occupation;
    double s = 0.0;
    if (y > 0.0) s -= y * std::log(y);
    if (y < 1.0) s -= (1.0 - y) * std::log(1.0 - y);
    return s;
}

double fermi_entropy(double x, const FermiParams& p) {
    // s = log(1+e^{-|t|}) + |t| e^{-|t|} / (1+e^{-|t|}) with t = beta (x-mu)
    const double u = std::abs(p.beta * (x - p.mu));
    const double e = std::exp(-u);
    return std::log1p(e) + u * e / (1.0 + e);
}

Sp2SignSequence sp2_sign_sequence(double mu_prime, int max_layers, double tol) {
    if (!(mu_prime > 0.0 && mu_prime < 1.0)) {
        throw ValidationError("sp2_sign_sequence: mu_prime must lie in (0,1)");
    }
    if (max_layers < 0) {
        throw ValidationError("sp2_sign_sequence: max_layers must be >= 0");
    }
    Sp2SignSequence out;
    out.mu_trajectory.push_back(mu_prime);
    double m = mu_prime;
    for (int i = 0; i < max_layers; ++i) {
        const double sq = m * m;
        const double pr = 2.0 * m - m * m;
        // Tie resolves to the square.
        if (std::abs(sq - mu_prime) <= std::abs(pr - mu_prime)) {
            out.signs.push_back(+1);
            m = sq;
        } else {
            out.signs.push_back(-1);
            m = pr;
        }
        out.mu_trajectory.push_back(m);
        if (std::abs(m - mu_prime) <= tol) break;
    }
    return out;
}

const char* to_string(Architecture a) {
    switch (a) {
        case Architecture::Sp2: return "sp2";
        case Architecture::Mlsp2: return "mlsp2";
        case Architecture::Mlsp2Compact: return "mlsp2_compact";
        case Architecture::MaxSp2: return "maxsp2";
        case Architecture::SkipSp2: return "skipsp2";
        case Architecture::ArbSp2: return "arbsp2";
        case Architecture::Entropy: return "entropy";
    }
    return "unknown";
}

Architecture architecture_from_string(const std::string& s) {
    if (s == "sp2") return Architecture::Sp2;
    if (s == "mlsp2") return Architecture::Mlsp2;
    if (s == "mlsp2_compact") return Architecture::Mlsp2Compact;
    if (s == "maxsp2") return Architecture::MaxSp2;
    if (s == "skipsp2") return Architecture::SkipSp2;
    if (s == "arbsp2") return Architecture::ArbSp2;
    if (s == "entropy") return Architecture::Entropy;
    throw ValidationError("unknown architecture tag: " + s);
}

int ModelCoefficients::layer_count() const {
    return std::visit(
        [](const auto& c) -> int {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, Sp2Coefficients>) {
                return static_cast<int>(c.signs.size());
            } else if constexpr (std::is_same_v<T, Mlsp2Coefficients>) {
                return static_cast<int>(c.layers.size());
            } else if constexpr (std::is_same_v<T, Mlsp2CompactCoefficients>) {
                return static_cast<int>(c.pairs.size()) - 1;
            } else if constexpr (std::is_same_v<T, EntropyModelCoefficients>) {
                return static_cast<int>(c.inner.layers.size());
            } else {
                return c.layer_count;
            }
        },
        payload);
}

void ModelCoefficients::validate() const {
    trained_at.validate();
    if (!(trained_at.mu > 0.0 && trained_at.mu < 1.0)) {
        throw ValidationError("ModelCoefficients: mu0 must lie in (0,1)");
    }
    const auto expect = [&](bool ok, const char* what) {
        if (!ok) throw ValidationError(std::string("ModelCoefficients: ") + what);
    };
    switch (architecture) {
        case Architecture::Sp2: {
            const auto* c = std::get_if<Sp2Coefficients>(&payload);
            expect(c != nullptr, "payload does not match SP2 tag");
            for (int s : c->signs) expect(s == 1 || s == -1, "SP2 signs must be +1 or -1");
            break;
        }
        case Architecture::Mlsp2: {
            const auto* c = std::get_if<Mlsp2Coefficients>(&payload);
            expect(c != nullptr, "payload does not match MLSP2 tag");
            expect(!c->layers.empty(), "MLSP2 needs at least one layer");
            for (const auto& l : c->layers) {
                expect(std::isfinite(l.a) && std::isfinite(l.b) && std::isfinite(l.c) &&
                           std::isfinite(l.d),
                       "MLSP2 coefficients must be finite");
            }
            break;
        }
        case Architecture::Mlsp2Compact: {
            const auto* c = std::get_if<Mlsp2CompactCoefficients>(&payload);
            expect(c != nullptr, "payload does not match MLSP2_COMPACT tag");
            expect(c->pairs.size() >= 2, "compact form needs n+1 >= 2 pairs");
            for (const auto& p : c->pairs) {
                expect(std::isfinite(p[0]) && std::isfinite(p[1]),
                       "compact coefficients must be finite");
            }
            break;
        }
        case Architecture::MaxSp2: {
            const auto* c = std::get_if<MaxSp2Coefficients>(&payload);
            expect(c != nullptr, "payload does not match MAXSP2 tag");
            const int n = c->layer_count;
            expect(n >= 1, "MAXSP2 needs at least one layer");
            expect(c->delta.size() == static_cast<std::size_t>(n), "MAXSP2 delta count");
            expect(c->theta.size() == static_cast<std::size_t>(n) * (n + 1) / 2,
                   "MAXSP2 triangular theta count");
            expect(c->gamma.size() == static_cast<std::size_t>(n) + 1, "MAXSP2 gamma count");
            expect(all_finite(c->delta) && all_finite(c->theta) && all_finite(c->gamma) &&
                       std::isfinite(c->accumulator_init),
                   "MAXSP2 coefficients must be finite");
            break;
        }
        case Architecture::SkipSp2: {
            const auto* c = std::get_if<SkipSp2Coefficients>(&payload);
            expect(c != nullptr, "payload does not match SKIPSP2 tag");
            const int n = c->layer_count;
            expect(n >= 1 && c->skip_depth >= 1 && c->accumulator_count >= 1,
                   "SKIPSP2 shape parameters");
            expect(c->skip_weights.size() ==
                       static_cast<std::size_t>(n) * (c->skip_depth + 1),
                   "SKIPSP2 skip weight count");
            expect(c->acc_in.size() == static_cast<std::size_t>(n) * c->accumulator_count,
                   "SKIPSP2 accumulator-in count");
            expect(c->acc_out.size() ==
                       static_cast<std::size_t>(n + 1) * c->accumulator_count,
                   "SKIPSP2 accumulator-out count");
            expect(c->acc_init.size() == static_cast<std::size_t>(c->accumulator_count),
                   "SKIPSP2 initial accumulator count");
            expect(all_finite(c->skip_weights) && all_finite(c->acc_in) &&
                       all_finite(c->acc_out) && all_finite(c->acc_init),
                   "SKIPSP2 coefficients must be finite");
            break;
        }
        case Architecture::ArbSp2: {
            const auto* c = std::get_if<ArbSp2Coefficients>(&payload);
            expect(c != nullptr, "payload does not match ARBSP2 tag");
            const int n = c->layer_count;
            expect(n >= 1, "ARBSP2 needs at least one layer");
            const std::size_t tri = static_cast<std::size_t>(n) * (n + 1) / 2;
            expect(c->delta.size() == static_cast<std::size_t>(n) &&
                       c->delta_prime.size() == static_cast<std::size_t>(n),
                   "ARBSP2 offset counts");
            expect(c->phi.size() == tri && c->psi.size() == tri, "ARBSP2 triangle counts");
            expect(c->gamma.size() == static_cast<std::size_t>(n) + 1, "ARBSP2 gamma count");
            expect(all_finite(c->delta) && all_finite(c->delta_prime) && all_finite(c->phi) &&
                       all_finite(c->psi) && all_finite(c->gamma) &&
                       std::isfinite(c->accumulator_init),
                   "ARBSP2 coefficients must be finite");
            break;
        }
        case Architecture::Entropy: {
            const auto* c = std::get_if<EntropyModelCoefficients>(&payload);
            expect(c != nullptr, "payload does not match ENTROPY tag");
            expect(!c->inner.layers.empty(), "entropy inner model needs layers");
            expect(c->alpha > 0.0 && c->alpha < 1.0, "entropy alpha must lie in (0,1)");
            expect(std::isfinite(c->mu0), "entropy mu0 must be finite");
            break;
        }
    }
}

namespace {

double evaluate_sp2(const Sp2Coefficients& c, double x0, bool in_unit) {
    double x = x0;
    for (int s : c.signs) {
        x = (s > 0) ? x * x : 2.0 * x - x * x;
        check_range(x, in_unit);
    }
    return x;
}

double evaluate_mlsp2(const Mlsp2Coefficients& c, double x0) {
    double x = x0;
    double acc = 0.0;
    for (const auto& l : c.layers) {
        acc += l.d * x;
        const double x2 = x * x;
        x = l.a * x2 + l.b * x + l.c;
    }
    return acc + x;
}

double evaluate_compact(const Mlsp2CompactCoefficients& c, double x0) {
    const std::size_t n = c.pairs.size() - 1;
    double x = x0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += c.pairs[i][1] * x;
        const double u = c.pairs[i][0] + x;
        x = u * u;
    }
    return acc + c.pairs[n][0] + c.pairs[n][1] * x;
}

double evaluate_maxsp2(const MaxSp2Coefficients& c, double x0) {
    const int n = c.layer_count;
    std::vector<double> xs(static_cast<std::size_t>(n) + 1);
    xs[0] = x0;
    for (int i = 0; i < n; ++i) {
        double s = c.delta[i];
        for (int j = 0; j <= i; ++j) s += c.theta_at(i, j) * xs[j];
        xs[i + 1] = s * s;
    }
    double out = c.accumulator_init;
    for (int i = 0; i <= n; ++i) out += c.gamma[i] * xs[i];
    return out;
}

double evaluate_skipsp2(const SkipSp2Coefficients& c, double x0) {
    const int n = c.layer_count;
    const int k = c.skip_depth;
    const int K = c.accumulator_count;
    std::vector<double> xs(static_cast<std::size_t>(n) + 1);
    xs[0] = x0;
    std::vector<double> acc(c.acc_init);
    for (int i = 0; i < n; ++i) {
        double s = c.alpha_at(i, k);
        for (int j = 0; j < k; ++j) {
            if (i - j >= 0) s += c.alpha_at(i, j) * xs[i - j];
        }
        for (int l = 0; l < K; ++l) s += c.acc_in_at(i, l) * acc[l];
        const double xn = s * s;
        for (int l = 0; l < K; ++l) acc[l] += c.acc_out_at(i, l) * xs[i];
        xs[i + 1] = xn;
    }
    double out = 0.0;
    for (int l = 0; l < K; ++l) out += acc[l] + c.acc_out_at(n, l) * xs[n];
    return out;
}

double evaluate_arbsp2(const ArbSp2Coefficients& c, double x0) {
    const int n = c.layer_count;
    std::vector<double> xs(static_cast<std::size_t>(n) + 1);
    xs[0] = x0;
    for (int i = 0; i < n; ++i) {
        double u = c.delta[i];
        double v = c.delta_prime[i];
        for (int j = 0; j <= i; ++j) {
            u += c.phi[c.tri_index(i, j)] * xs[j];
            v += c.psi[c.tri_index(i, j)] * xs[j];
        }
        xs[i + 1] = u * v;
    }
    double out = c.accumulator_init;
    for (int i = 0; i <= n; ++i) out += c.gamma[i] * xs[i];
    return out;
}

double evaluate_entropy(const EntropyModelCoefficients& c, double x) {
    // No spectrum flip; the alpha rescale keeps x0 inside the inner model's
    // working range whenever x is.
    const double x0 = c.alpha * (x - c.mu0) + c.mu0;
    const double y = evaluate_mlsp2(c.inner, x0);
    return 4.0 * std::log(2.0) * y * (1.0 - y);
}

}  // namespace

double evaluate_model(const ModelCoefficients& m, double x) {
    m.validate();
    const bool in_unit = (x >= 0.0 && x <= 1.0);
    const double x0 = 1.0 - x;  // spectrum flip shared by the Fermi family
    switch (m.architecture) {
        case Architecture::Sp2:
            return evaluate_sp2(std::get<Sp2Coefficients>(m.payload), x0, in_unit);
        case Architecture::Mlsp2:
            return evaluate_mlsp2(std::get<Mlsp2Coefficients>(m.payload), x0);
        case Architecture::Mlsp2Compact:
            return evaluate_compact(std::get<Mlsp2CompactCoefficients>(m.payload), x0);
        case Architecture::MaxSp2:
            return evaluate_maxsp2(std::get<MaxSp2Coefficients>(m.payload), x0);
        case Architecture::SkipSp2:
            return evaluate_skipsp2(std::get<SkipSp2Coefficients>(m.payload), x0);
        case Architecture::ArbSp2:
            return evaluate_arbsp2(std::get<ArbSp2Coefficients>(m.payload), x0);
        case Architecture::Entropy:
            return evaluate_entropy(std::get<EntropyModelCoefficients>(m.payload), x);
    }
    throw ValidationError("evaluate_model: unknown architecture");
}

int layer_count_estimate(double beta_prime) {
    if (!(beta_prime > 0.0) || !std::isfinite(beta_prime)) {
        throw ValidationError("layer_count_estimate: beta_prime must be positive");
    }
    const double v = 4.7 * std::log(beta_prime) - 6.5;
    const int rounded = static_cast<int>(std::floor(std::abs(v) + 0.5)) * (v < 0.0 ? -1 : 1);
    return std::max(1, rounded);
}

double beta0_for_layer_count(int n) {
    if (n < 1) throw ValidationError("beta0_for_layer_count: n must be >= 1");
    return 4.0 * std::pow(2.0 * kInvGolden, n);
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

namespace {

int chain_rank(Architecture a) {
    switch (a) {
        case Architecture::Sp2: return 0;
        case Architecture::Mlsp2Compact: return 1;
        case Architecture::Mlsp2: return 2;
        case Architecture::SkipSp2: return 3;
        case Architecture::MaxSp2: return 4;
        case Architecture::ArbSp2: return 5;
        case Architecture::Entropy: return -1;
    }
    return -1;
}

Mlsp2Coefficients sp2_to_mlsp2(const Sp2Coefficients& c) {
    Mlsp2Coefficients out;
    out.layers.reserve(c.signs.size());
    for (int s : c.signs) {
        // sigma = +1: x^2; sigma = -1: 2x - x^2. The hardwired +x_n output
        // term makes any accumulator weights unnecessary.
        out.layers.push_back({static_cast<double>(s), 1.0 - s, 0.0, 0.0});
    }
    return out;
}

void require_nondegenerate(double a, int layer) {
    if (std::abs(a) < 1e-300) {
        throw DegenerateCoefficientsError(
            "embedding requires a nonzero quadratic coefficient at layer " +
            std::to_string(layer));
    }
}

Mlsp2CompactCoefficients mlsp2_to_compact(const Mlsp2Coefficients& c) {
    // Track per-layer scale s_i and shift u_i with y_i = s_i x_i + u_i so
    // every layer becomes a pure (t + y)^2 square.
    const std::size_t n = c.layers.size();
    Mlsp2CompactCoefficients out;
    out.pairs.resize(n + 1);
    double s = 1.0;
    double u = 0.0;
    double carried = 0.0;  // sum of d_i u_i / s_i corrections
    for (std::size_t i = 0; i < n; ++i) {
        const auto& l = c.layers[i];
        require_nondegenerate(l.a, static_cast<int>(i));
        const double half = s * l.b / (2.0 * l.a);
        out.pairs[i][0] = half - u;
        out.pairs[i][1] = l.d / s;
        carried += l.d * u / s;
        const double s_next = s * s / l.a;
        u = half * half - s_next * l.c;
        s = s_next;
    }
    out.pairs[n][1] = 1.0 / s;
    out.pairs[n][0] = -u / s - carried;
    return out;
}

SkipSp2Coefficients mlsp2_to_skip(const Mlsp2Coefficients& c) {
    const int n = static_cast<int>(c.layers.size());
    SkipSp2Coefficients out;
    out.layer_count = n;
    out.skip_depth = 1;
    out.accumulator_count = 1;
    out.skip_weights.assign(static_cast<std::size_t>(n) * 2, 0.0);
    out.acc_in.assign(static_cast<std::size_t>(n), 0.0);
    out.acc_out.assign(static_cast<std::size_t>(n) + 1, 0.0);
    out.acc_init.assign(1, 0.0);

    const auto a = [&](int i) { return c.layers[i].a; };
    const auto b = [&](int i) { return c.layers[i].b; };
    const auto cc = [&](int i) { return c.layers[i].c; };
    const auto d = [&](int i) { return c.layers[i].d; };
    for (int i = 0; i < n; ++i) require_nondegenerate(a(i), i);

    // Layer 0 squares the raw input, later layers fold the previous affine
    // correction into the offset alpha_{i,k}.
    out.skip_weights[0] = 1.0;
    out.skip_weights[1] = b(0) / (2.0 * a(0));
    for (int i = 1; i < n; ++i) {
        const double shift = cc(i - 1) - b(i - 1) * b(i - 1) / (4.0 * a(i - 1));
        out.skip_weights[2 * i + 0] = a(i - 1);
        out.skip_weights[2 * i + 1] = shift + b(i) / (2.0 * a(i));
    }

    double a0 = 0.0;
    out.acc_out[0] = d(0);
    for (int i = 1; i < n; ++i) {
        const double shift = cc(i - 1) - b(i - 1) * b(i - 1) / (4.0 * a(i - 1));
        out.acc_out[i] = d(i) * a(i - 1);
        a0 += d(i) * shift;
    }
    out.acc_out[n] = a(n - 1);
    a0 += cc(n - 1) - b(n - 1) * b(n - 1) / (4.0 * a(n - 1));
    out.acc_init[0] = a0;
    return out;
}

SkipSp2Coefficients compact_to_skip(const Mlsp2CompactCoefficients& c) {
    const int n = static_cast<int>(c.pairs.size()) - 1;
    SkipSp2Coefficients out;
    out.layer_count = n;
    out.skip_depth = 1;
    out.accumulator_count = 1;
    out.skip_weights.assign(static_cast<std::size_t>(n) * 2, 0.0);
    out.acc_in.assign(static_cast<std::size_t>(n), 0.0);
    out.acc_out.assign(static_cast<std::size_t>(n) + 1, 0.0);
    out.acc_init.assign(1, c.pairs[n][0]);
    for (int i = 0; i < n; ++i) {
        out.skip_weights[2 * i + 0] = 1.0;
        out.skip_weights[2 * i + 1] = c.pairs[i][0];
        out.acc_out[i] = c.pairs[i][1];
    }
    out.acc_out[n] = c.pairs[n][1];
    return out;
}

MaxSp2Coefficients skip_to_max(const SkipSp2Coefficients& c) {
    const int n = c.layer_count;
    const int k = c.skip_depth;
    const int K = c.accumulator_count;
    MaxSp2Coefficients out;
    out.layer_count = n;
    out.delta.assign(n, 0.0);
    out.theta.assign(static_cast<std::size_t>(n) * (n + 1) / 2, 0.0);
    out.gamma.assign(static_cast<std::size_t>(n) + 1, 0.0);

    for (int i = 0; i < n; ++i) {
        double delta = c.alpha_at(i, k);
        for (int l = 0; l < K; ++l) delta += c.acc_in_at(i, l) * c.acc_init[l];
        out.delta[i] = delta;
        for (int j = 0; j <= i; ++j) {
            double w = 0.0;
            // Accumulator A_i carries gamma-weighted copies of x_0..x_{i-1}.
            if (j <= i - 1) {
                for (int l = 0; l < K; ++l) w += c.acc_in_at(i, l) * c.acc_out_at(j, l);
            }
            const int lag = i - j;
            if (lag < k) w += c.alpha_at(i, lag);
            out.theta[out.theta_index(i, j)] = w;
        }
    }
    double a0 = 0.0;
    for (int l = 0; l < K; ++l) a0 += c.acc_init[l];
    out.accumulator_init = a0;
    for (int i = 0; i <= n; ++i) {
        double g = 0.0;
        for (int l = 0; l < K; ++l) g += c.acc_out_at(i, l);
        out.gamma[i] = g;
    }
    return out;
}

ArbSp2Coefficients max_to_arb(const MaxSp2Coefficients& c) {
    ArbSp2Coefficients out;
    out.layer_count = c.layer_count;
    out.delta = c.delta;
    out.delta_prime = c.delta;
    out.phi = c.theta;
    out.psi = c.theta;
    out.gamma = c.gamma;
    out.accumulator_init = c.accumulator_init;
    return out;
}

}  // namespace

bool embeddable(Architecture source, Architecture target) {
    if (source == target) return false;
    // The compact form is reached from SP2 or MLSP2 and feeds the rest of
    // the chain; there is no conversion back into MLSP2.
    if (target == Architecture::Mlsp2Compact) {
        return source == Architecture::Sp2 || source == Architecture::Mlsp2;
    }
    if (source == Architecture::Mlsp2Compact) {
        return chain_rank(target) > chain_rank(Architecture::Mlsp2);
    }
    const int rs = chain_rank(source);
    const int rt = chain_rank(target);
    return rs >= 0 && rt > rs;
}

ModelCoefficients embed(const ModelCoefficients& m, Architecture target) {
    m.validate();
    if (!embeddable(m.architecture, target)) {
        throw ValidationError(std::string("embed: ") + to_string(m.architecture) + " -> " +
                              to_string(target) + " is not an upward chain step");
    }
    ModelCoefficients cur = m;
    while (cur.architecture != target) {
        ModelCoefficients next;
        next.trained_at = cur.trained_at;
        switch (cur.architecture) {
            case Architecture::Sp2: {
                const auto& c = std::get<Sp2Coefficients>(cur.payload);
                next.architecture = Architecture::Mlsp2;
                next.payload = sp2_to_mlsp2(c);
                break;
            }
            case Architecture::Mlsp2: {
                const auto& c = std::get<Mlsp2Coefficients>(cur.payload);
                if (target == Architecture::Mlsp2Compact) {
                    next.architecture = Architecture::Mlsp2Compact;
                    next.payload = mlsp2_to_compact(c);
                } else {
                    next.architecture = Architecture::SkipSp2;
                    next.payload = mlsp2_to_skip(c);
                }
                break;
            }
            case Architecture::Mlsp2Compact: {
                const auto& c = std::get<Mlsp2CompactCoefficients>(cur.payload);
                next.architecture = Architecture::SkipSp2;
                next.payload = compact_to_skip(c);
                break;
            }
            case Architecture::SkipSp2: {
                const auto& c = std::get<SkipSp2Coefficients>(cur.payload);
                next.architecture = Architecture::MaxSp2;
                next.payload = skip_to_max(c);
                break;
            }
            case Architecture::MaxSp2: {
                const auto& c = std::get<MaxSp2Coefficients>(cur.payload);
                next.architecture = Architecture::ArbSp2;
                next.payload = max_to_arb(c);
                break;
            }
            default:
                throw ValidationError("embed: unsupported source architecture");
        }
        cur = std::move(next);
    }
    cur.validate();
    return cur;
}

double step_composition_f1f0(double x, int n) {
    if (n < 0) throw ValidationError("step_composition_f1f0: n must be >= 0");
    for (int i = 0; i < n; ++i) {
        const double u = x * x;   // f0
        x = 2.0 * u - u * u;      // f1
    }
    return x;
}

}  // namespace fermiforge

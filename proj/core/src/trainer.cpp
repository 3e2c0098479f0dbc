#include "fermiforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace fermiforge {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double unit_double(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace

const char* to_string(Weighting w) {
    switch (w) {
        case Weighting::Uniform: return "uniform";
        case Weighting::Derivative: return "derivative";
        case Weighting::ArcLength: return "arclength";
    }
    return "unknown";
}

Weighting weighting_from_string(const std::string& s) {
    if (s == "uniform") return Weighting::Uniform;
    if (s == "derivative") return Weighting::Derivative;
    if (s == "arclength") return Weighting::ArcLength;
    throw ValidationError("unknown weighting tag: " + s);
}

void TrainingConfig::validate() const {
    FermiParams{beta0, mu0}.validate();
    if (!(mu0 > 0.0 && mu0 < 1.0)) throw ValidationError("TrainingConfig: mu0 must lie in (0,1)");
    if (layers < 0) throw ValidationError("TrainingConfig: layers must be >= 0");
    if (auto_layer_margin < 0) throw ValidationError("TrainingConfig: margin must be >= 0");
    if (sample_count < 2) throw ValidationError("TrainingConfig: sample_count too small");
    if (max_iterations < 1) throw ValidationError("TrainingConfig: max_iterations must be >= 1");
    if (!(residual_tolerance > 0.0)) {
        throw ValidationError("TrainingConfig: residual_tolerance must be positive");
    }
    if (!(lm_initial_damping > 0.0)) {
        throw ValidationError("TrainingConfig: lm_initial_damping must be positive");
    }
    if (!(geodesic_alpha_ratio > 0.0)) {
        throw ValidationError("TrainingConfig: geodesic_alpha_ratio must be positive");
    }
    if (minimax_polish_rounds < 0) {
        throw ValidationError("TrainingConfig: minimax_polish_rounds must be >= 0");
    }
    if (skip_depth < 1 || accumulator_count < 1) {
        throw ValidationError("TrainingConfig: skip_depth and accumulator_count must be >= 1");
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace {

// CDF of the density 1 + |f'| is available in closed form:
// integral of |f'| from 0 to x equals f(0) - f(x).
double derivative_cdf(double x, const FermiParams& p) {
    return x + fermi(0.0, p) - fermi(x, p);
}

double invert_monotone(double target, double lo, double hi, const auto& cdf) {
    for (int it = 0; it < 64; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (cdf(mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

std::vector<double> quantile_points(int count, const FermiParams& p, Weighting w,
                                    std::uint64_t seed) {
    std::uint64_t state = seed ^ 0xa02bdbf7bb3c0a7ULL;
    const double phase = unit_double(splitmix64(state));
    std::vector<double> out;
    out.reserve(count);

    if (w == Weighting::Derivative) {
        const double total = derivative_cdf(1.0, p);
        for (int j = 0; j < count; ++j) {
            double u = phase + j * kInvGolden;
            u -= std::floor(u);
            const double x = invert_monotone(
                u * total, 0.0, 1.0, [&](double t) { return derivative_cdf(t, p); });
            out.push_back(x);
        }
        return out;
    }

    // Arc length has no elementary antiderivative; tabulate it once.
    const int kTable = 8192;
    std::vector<double> cum(kTable + 1, 0.0);
    auto speed = [&](double x) {
        const double f = fermi(x, p);
        const double fp = p.beta * f * (1.0 - f);
        return std::sqrt(1.0 + fp * fp);
    };
    double prev = speed(0.0);
    for (int i = 1; i <= kTable; ++i) {
        const double cur = speed(static_cast<double>(i) / kTable);
        cum[i] = cum[i - 1] + 0.5 * (prev + cur) / kTable;
        prev = cur;
    }
    const double total = cum[kTable];
    for (int j = 0; j < count; ++j) {
        double u = phase + j * kInvGolden;
        u -= std::floor(u);
        const double target = u * total;
        const auto it = std::upper_bound(cum.begin(), cum.end(), target);
        int hi = static_cast<int>(std::min<std::ptrdiff_t>(it - cum.begin(), kTable));
        if (hi < 1) hi = 1;
        const double frac = (target - cum[hi - 1]) / std::max(cum[hi] - cum[hi - 1], 1e-300);
        out.push_back((hi - 1 + frac) / kTable);
    }
    return out;
}

}  // namespace

SampleSet build_samples(const TrainingConfig& cfg, TrainingTarget target) {
    cfg.validate();
    const FermiParams p{cfg.beta0, cfg.mu0};
    const int n = cfg.sample_count;

    std::vector<double> xs;
    xs.reserve(n);
    if (cfg.weighting == Weighting::Uniform) {
        for (int i = 0; i < n; ++i) xs.push_back(static_cast<double>(i) / (n - 1));
    } else {
        xs.push_back(0.0);
        xs.push_back(1.0);
        auto interior = quantile_points(n - 2, p, cfg.weighting, cfg.seed);
        xs.insert(xs.end(), interior.begin(), interior.end());
        std::sort(xs.begin(), xs.end());
        for (std::size_t i = 1; i < xs.size(); ++i) {
            if (xs[i] <= xs[i - 1]) xs[i] = std::nextafter(xs[i - 1], 2.0);
        }
        xs.back() = std::min(xs.back(), 1.0);
        for (std::size_t i = xs.size() - 1; i > 0; --i) {
            if (xs[i - 1] >= xs[i]) xs[i - 1] = std::nextafter(xs[i], -1.0);
        }
    }

    SampleSet s;
    s.xs = std::move(xs);
    s.targets.reserve(n);
    s.weights.assign(n, 1.0);  // density carries the weighting; weights sum to n
    for (double x : s.xs) {
        s.targets.push_back(target == TrainingTarget::Fermi ? fermi(x, p) : fermi_entropy(x, p));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Parameter packing and forward-mode gradients
// ---------------------------------------------------------------------------

namespace {

int parameter_count_of(const ModelCoefficients& m) {
    switch (m.architecture) {
        case Architecture::Mlsp2:
            return 4 * m.layer_count();
        case Architecture::Mlsp2Compact:
            return 2 * m.layer_count() + 2;
        case Architecture::MaxSp2: {
            const int n = m.layer_count();
            return n + n * (n + 1) / 2 + (n + 1) + 1;
        }
        case Architecture::SkipSp2: {
            const auto& c = std::get<SkipSp2Coefficients>(m.payload);
            const int n = c.layer_count;
            return n * (c.skip_depth + 1) + n * c.accumulator_count +
                   (n + 1) * c.accumulator_count + c.accumulator_count;
        }
        case Architecture::ArbSp2: {
            const int n = m.layer_count();
            return 2 * n + n * (n + 1) + (n + 1) + 1;
        }
        case Architecture::Entropy:
            return 4 * m.layer_count() + 1;
        case Architecture::Sp2:
            break;
    }
    throw ValidationError("architecture has no continuous parameters");
}

void append(std::vector<double>& v, const std::vector<double>& src) {
    v.insert(v.end(), src.begin(), src.end());
}

}  // namespace

std::vector<double> pack_parameters(const ModelCoefficients& m) {
    m.validate();
    std::vector<double> out;
    out.reserve(parameter_count_of(m));
    switch (m.architecture) {
        case Architecture::Mlsp2: {
            const auto& c = std::get<Mlsp2Coefficients>(m.payload);
            for (const auto& l : c.layers) {
                out.push_back(l.a);
                out.push_back(l.b);
                out.push_back(l.c);
                out.push_back(l.d);
            }
            break;
        }
        case Architecture::Mlsp2Compact: {
            const auto& c = std::get<Mlsp2CompactCoefficients>(m.payload);
            for (const auto& pr : c.pairs) {
                out.push_back(pr[0]);
                out.push_back(pr[1]);
            }
            break;
        }
        case Architecture::MaxSp2: {
            const auto& c = std::get<MaxSp2Coefficients>(m.payload);
            append(out, c.delta);
            append(out, c.theta);
            append(out, c.gamma);
            out.push_back(c.accumulator_init);
            break;
        }
        case Architecture::SkipSp2: {
            const auto& c = std::get<SkipSp2Coefficients>(m.payload);
            append(out, c.skip_weights);
            append(out, c.acc_in);
            append(out, c.acc_out);
            append(out, c.acc_init);
            break;
        }
        case Architecture::ArbSp2: {
            const auto& c = std::get<ArbSp2Coefficients>(m.payload);
            append(out, c.delta);
            append(out, c.delta_prime);
            append(out, c.phi);
            append(out, c.psi);
            append(out, c.gamma);
            out.push_back(c.accumulator_init);
            break;
        }
        case Architecture::Entropy: {
            const auto& c = std::get<EntropyModelCoefficients>(m.payload);
            for (const auto& l : c.inner.layers) {
                out.push_back(l.a);
                out.push_back(l.b);
                out.push_back(l.c);
                out.push_back(l.d);
            }
            out.push_back(c.alpha);
            break;
        }
        case Architecture::Sp2:
            throw ValidationError("pack_parameters: SP2 has no continuous parameters");
    }
    return out;
}

ModelCoefficients with_parameters(ModelCoefficients proto, std::span<const double> params) {
    if (static_cast<int>(params.size()) != parameter_count_of(proto)) {
        throw ValidationError("with_parameters: parameter count mismatch");
    }
    std::size_t k = 0;
    auto next = [&] { return params[k++]; };
    switch (proto.architecture) {
        case Architecture::Mlsp2: {
            auto& c = std::get<Mlsp2Coefficients>(proto.payload);
            for (auto& l : c.layers) {
                l.a = next();
                l.b = next();
                l.c = next();
                l.d = next();
            }
            break;
        }
        case Architecture::Mlsp2Compact: {
            auto& c = std::get<Mlsp2CompactCoefficients>(proto.payload);
            for (auto& pr : c.pairs) {
                pr[0] = next();
                pr[1] = next();
            }
            break;
        }
        case Architecture::MaxSp2: {
            auto& c = std::get<MaxSp2Coefficients>(proto.payload);
            for (auto& v : c.delta) v = next();
            for (auto& v : c.theta) v = next();
            for (auto& v : c.gamma) v = next();
            c.accumulator_init = next();
            break;
        }
        case Architecture::SkipSp2: {
            auto& c = std::get<SkipSp2Coefficients>(proto.payload);
            for (auto& v : c.skip_weights) v = next();
            for (auto& v : c.acc_in) v = next();
            for (auto& v : c.acc_out) v = next();
            for (auto& v : c.acc_init) v = next();
            break;
        }
        case Architecture::ArbSp2: {
            auto& c = std::get<ArbSp2Coefficients>(proto.payload);
            for (auto& v : c.delta) v = next();
            for (auto& v : c.delta_prime) v = next();
            for (auto& v : c.phi) v = next();
            for (auto& v : c.psi) v = next();
            for (auto& v : c.gamma) v = next();
            c.accumulator_init = next();
            break;
        }
        case Architecture::Entropy: {
            auto& c = std::get<EntropyModelCoefficients>(proto.payload);
            for (auto& l : c.inner.layers) {
                l.a = next();
                l.b = next();
                l.c = next();
                l.d = next();
            }
            c.alpha = next();
            break;
        }
        case Architecture::Sp2:
            throw ValidationError("with_parameters: SP2 has no continuous parameters");
    }
    return proto;
}

namespace {

// Scratch buffers reused across samples.
struct GradWorkspace {
    std::vector<double> gx, gA, gs, gv;
    std::vector<double> xs;
    std::vector<double> gxs;   // (n+1) x P, layer-value gradients
    std::vector<double> acc;
    std::vector<double> gacc;  // K x P
};

void check_finite(double x, int layer) {
    if (!std::isfinite(x)) {
        throw DivergedEvaluationError(
            "recursion diverged at layer " + std::to_string(layer), layer);
    }
}

// MLSP2 core shared by the plain and entropy paths. Parameters for layer i
// sit at prm[base + 4i ..]; the gradient runs over all P parameters and the
// caller seeds d(x0)/d(params) in ws.gx. Value arithmetic mirrors
// evaluate_model exactly.
double mlsp2_core_grad(std::span<const double> prm, int n, int base, double x0,
                       GradWorkspace& ws, int P, std::vector<double>& out_grad) {
    ws.gA.assign(P, 0.0);
    double x = x0;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double a = prm[base + 4 * i + 0];
        const double b = prm[base + 4 * i + 1];
        const double c = prm[base + 4 * i + 2];
        const double d = prm[base + 4 * i + 3];
        for (int q = 0; q < P; ++q) ws.gA[q] += d * ws.gx[q];
        ws.gA[base + 4 * i + 3] += x;
        acc += d * x;
        const double x2 = x * x;
        const double slope = 2.0 * a * x + b;
        for (int q = 0; q < P; ++q) ws.gx[q] *= slope;
        ws.gx[base + 4 * i + 0] += x2;
        ws.gx[base + 4 * i + 1] += x;
        ws.gx[base + 4 * i + 2] += 1.0;
        x = a * x2 + b * x + c;
        check_finite(x, i);
    }
    out_grad.assign(P, 0.0);
    for (int q = 0; q < P; ++q) out_grad[q] = ws.gA[q] + ws.gx[q];
    return acc + x;
}

double grad_eval(const ModelCoefficients& m, std::span<const double> prm, double input,
                 GradWorkspace& ws, std::vector<double>& out_grad) {
    const int P = static_cast<int>(prm.size());
    switch (m.architecture) {
        case Architecture::Mlsp2: {
            const int n = m.layer_count();
            ws.gx.assign(P, 0.0);
            return mlsp2_core_grad(prm, n, 0, 1.0 - input, ws, P, out_grad);
        }
        case Architecture::Entropy: {
            const auto& c = std::get<EntropyModelCoefficients>(m.payload);
            const int n = m.layer_count();
            const int alpha_idx = 4 * n;
            const double alpha = prm[alpha_idx];
            const double x0 = alpha * (input - c.mu0) + c.mu0;
            ws.gx.assign(P, 0.0);
            ws.gx[alpha_idx] = input - c.mu0;
            const double y = mlsp2_core_grad(prm, n, 0, x0, ws, P, out_grad);
            const double scale = 4.0 * std::log(2.0);
            const double factor = scale * (1.0 - 2.0 * y);
            for (int q = 0; q < P; ++q) out_grad[q] *= factor;
            return scale * y * (1.0 - y);
        }
        case Architecture::Mlsp2Compact: {
            const int n = m.layer_count();
            ws.gx.assign(P, 0.0);
            ws.gA.assign(P, 0.0);
            double x = 1.0 - input;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                const double t1 = prm[2 * i + 0];
                const double t2 = prm[2 * i + 1];
                for (int q = 0; q < P; ++q) ws.gA[q] += t2 * ws.gx[q];
                ws.gA[2 * i + 1] += x;
                acc += t2 * x;
                const double u = t1 + x;
                for (int q = 0; q < P; ++q) ws.gx[q] *= 2.0 * u;
                ws.gx[2 * i + 0] += 2.0 * u;
                x = u * u;
                check_finite(x, i);
            }
            const double tf1 = prm[2 * n + 0];
            const double tf2 = prm[2 * n + 1];
            out_grad.assign(P, 0.0);
            for (int q = 0; q < P; ++q) out_grad[q] = ws.gA[q] + tf2 * ws.gx[q];
            out_grad[2 * n + 0] += 1.0;
            out_grad[2 * n + 1] += x;
            return acc + tf1 + tf2 * x;
        }
        case Architecture::MaxSp2: {
            const int n = m.layer_count();
            const int tri = n * (n + 1) / 2;
            const int delta0 = 0, theta0 = n, gamma0 = n + tri, a0_idx = n + tri + n + 1;
            ws.xs.assign(n + 1, 0.0);
            ws.gxs.assign(static_cast<std::size_t>(n + 1) * P, 0.0);
            ws.xs[0] = 1.0 - input;
            for (int i = 0; i < n; ++i) {
                double s = prm[delta0 + i];
                ws.gs.assign(P, 0.0);
                ws.gs[delta0 + i] = 1.0;
                for (int j = 0; j <= i; ++j) {
                    const int t_idx = theta0 + i * (i + 1) / 2 + j;
                    const double th = prm[t_idx];
                    s += th * ws.xs[j];
                    const double* gj = &ws.gxs[static_cast<std::size_t>(j) * P];
                    for (int q = 0; q < P; ++q) ws.gs[q] += th * gj[q];
                    ws.gs[t_idx] += ws.xs[j];
                }
                ws.xs[i + 1] = s * s;
                check_finite(ws.xs[i + 1], i);
                double* gi = &ws.gxs[static_cast<std::size_t>(i + 1) * P];
                for (int q = 0; q < P; ++q) gi[q] = 2.0 * s * ws.gs[q];
            }
            double out = prm[a0_idx];
            out_grad.assign(P, 0.0);
            out_grad[a0_idx] = 1.0;
            for (int i = 0; i <= n; ++i) {
                const double g = prm[gamma0 + i];
                out += g * ws.xs[i];
                out_grad[gamma0 + i] += ws.xs[i];
                const double* gi = &ws.gxs[static_cast<std::size_t>(i) * P];
                for (int q = 0; q < P; ++q) out_grad[q] += g * gi[q];
            }
            return out;
        }
        case Architecture::SkipSp2: {
            const auto& c = std::get<SkipSp2Coefficients>(m.payload);
            const int n = c.layer_count, k = c.skip_depth, K = c.accumulator_count;
            const int alpha0 = 0;
            const int accin0 = n * (k + 1);
            const int accout0 = accin0 + n * K;
            const int init0 = accout0 + (n + 1) * K;
            ws.xs.assign(n + 1, 0.0);
            ws.gxs.assign(static_cast<std::size_t>(n + 1) * P, 0.0);
            ws.xs[0] = 1.0 - input;
            ws.acc.assign(K, 0.0);
            ws.gacc.assign(static_cast<std::size_t>(K) * P, 0.0);
            for (int l = 0; l < K; ++l) {
                ws.acc[l] = prm[init0 + l];
                ws.gacc[static_cast<std::size_t>(l) * P + init0 + l] = 1.0;
            }
            for (int i = 0; i < n; ++i) {
                double s = prm[alpha0 + i * (k + 1) + k];
                ws.gs.assign(P, 0.0);
                ws.gs[alpha0 + i * (k + 1) + k] = 1.0;
                for (int j = 0; j < k; ++j) {
                    if (i - j < 0) continue;
                    const int w_idx = alpha0 + i * (k + 1) + j;
                    const double w = prm[w_idx];
                    s += w * ws.xs[i - j];
                    ws.gs[w_idx] += ws.xs[i - j];
                    const double* gj = &ws.gxs[static_cast<std::size_t>(i - j) * P];
                    for (int q = 0; q < P; ++q) ws.gs[q] += w * gj[q];
                }
                for (int l = 0; l < K; ++l) {
                    const int b_idx = accin0 + i * K + l;
                    const double b = prm[b_idx];
                    s += b * ws.acc[l];
                    ws.gs[b_idx] += ws.acc[l];
                    const double* ga = &ws.gacc[static_cast<std::size_t>(l) * P];
                    for (int q = 0; q < P; ++q) ws.gs[q] += b * ga[q];
                }
                const double xn = s * s;
                check_finite(xn, i);
                // Accumulators advance with the pre-update layer value.
                const double* gxi = &ws.gxs[static_cast<std::size_t>(i) * P];
                for (int l = 0; l < K; ++l) {
                    const int g_idx = accout0 + i * K + l;
                    const double g = prm[g_idx];
                    double* ga = &ws.gacc[static_cast<std::size_t>(l) * P];
                    for (int q = 0; q < P; ++q) ga[q] += g * gxi[q];
                    ga[g_idx] += ws.xs[i];
                    ws.acc[l] += g * ws.xs[i];
                }
                ws.xs[i + 1] = xn;
                double* gi = &ws.gxs[static_cast<std::size_t>(i + 1) * P];
                for (int q = 0; q < P; ++q) gi[q] = 2.0 * s * ws.gs[q];
            }
            double out = 0.0;
            out_grad.assign(P, 0.0);
            const double* gxn = &ws.gxs[static_cast<std::size_t>(n) * P];
            for (int l = 0; l < K; ++l) {
                const int g_idx = accout0 + n * K + l;
                const double g = prm[g_idx];
                out += ws.acc[l] + g * ws.xs[n];
                const double* ga = &ws.gacc[static_cast<std::size_t>(l) * P];
                for (int q = 0; q < P; ++q) out_grad[q] += ga[q] + g * gxn[q];
                out_grad[g_idx] += ws.xs[n];
            }
            return out;
        }
        case Architecture::ArbSp2: {
            const int n = m.layer_count();
            const int tri = n * (n + 1) / 2;
            const int d0 = 0, dp0 = n, phi0 = 2 * n, psi0 = 2 * n + tri;
            const int gamma0 = 2 * n + 2 * tri, a0_idx = gamma0 + n + 1;
            ws.xs.assign(n + 1, 0.0);
            ws.gxs.assign(static_cast<std::size_t>(n + 1) * P, 0.0);
            ws.xs[0] = 1.0 - input;
            for (int i = 0; i < n; ++i) {
                double u = prm[d0 + i];
                double v = prm[dp0 + i];
                ws.gs.assign(P, 0.0);  // du
                ws.gv.assign(P, 0.0);  // dv
                ws.gs[d0 + i] = 1.0;
                ws.gv[dp0 + i] = 1.0;
                for (int j = 0; j <= i; ++j) {
                    const int p_idx = phi0 + i * (i + 1) / 2 + j;
                    const int q_idx = psi0 + i * (i + 1) / 2 + j;
                    const double pw = prm[p_idx];
                    const double qw = prm[q_idx];
                    u += pw * ws.xs[j];
                    v += qw * ws.xs[j];
                    ws.gs[p_idx] += ws.xs[j];
                    ws.gv[q_idx] += ws.xs[j];
                    const double* gj = &ws.gxs[static_cast<std::size_t>(j) * P];
                    for (int q = 0; q < P; ++q) {
                        ws.gs[q] += pw * gj[q];
                        ws.gv[q] += qw * gj[q];
                    }
                }
                ws.xs[i + 1] = u * v;
                check_finite(ws.xs[i + 1], i);
                double* gi = &ws.gxs[static_cast<std::size_t>(i + 1) * P];
                for (int q = 0; q < P; ++q) gi[q] = u * ws.gv[q] + v * ws.gs[q];
            }
            double out = prm[a0_idx];
            out_grad.assign(P, 0.0);
            out_grad[a0_idx] = 1.0;
            for (int i = 0; i <= n; ++i) {
                const double g = prm[gamma0 + i];
                out += g * ws.xs[i];
                out_grad[gamma0 + i] += ws.xs[i];
                const double* gi = &ws.gxs[static_cast<std::size_t>(i) * P];
                for (int q = 0; q < P; ++q) out_grad[q] += g * gi[q];
            }
            return out;
        }
        case Architecture::Sp2:
            break;
    }
    throw ValidationError("gradient evaluation: architecture is not trainable");
}

}  // namespace

void residual_and_jacobian(const ModelCoefficients& m, const SampleSet& s,
                           std::vector<double>& residuals, std::vector<double>& jacobian) {
    m.validate();
    if (m.architecture == Architecture::Sp2) {
        throw ValidationError("residual_and_jacobian: SP2 is not trainable");
    }
    const auto prm = pack_parameters(m);
    const int P = static_cast<int>(prm.size());
    const int n = static_cast<int>(s.xs.size());
    residuals.assign(n, 0.0);
    jacobian.assign(static_cast<std::size_t>(n) * P, 0.0);
    GradWorkspace ws;
    std::vector<double> grad;
    for (int j = 0; j < n; ++j) {
        const double sw = std::sqrt(s.weights[j]);
        const double value = grad_eval(m, prm, s.xs[j], ws, grad);
        residuals[j] = sw * (value - s.targets[j]);
        double* row = &jacobian[static_cast<std::size_t>(j) * P];
        for (int q = 0; q < P; ++q) row[q] = sw * grad[q];
    }
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt
// ---------------------------------------------------------------------------

namespace {

// In-place lower Cholesky factorization; false when the matrix is not SPD.
bool cholesky_factor(std::vector<double>& a, int n) {
    for (int j = 0; j < n; ++j) {
        double d = a[static_cast<std::size_t>(j) * n + j];
        for (int k = 0; k < j; ++k) {
            const double v = a[static_cast<std::size_t>(j) * n + k];
            d -= v * v;
        }
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        const double lj = std::sqrt(d);
        a[static_cast<std::size_t>(j) * n + j] = lj;
        for (int i = j + 1; i < n; ++i) {
            double v = a[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < j; ++k) {
                v -= a[static_cast<std::size_t>(i) * n + k] *
                     a[static_cast<std::size_t>(j) * n + k];
            }
            a[static_cast<std::size_t>(i) * n + j] = v / lj;
        }
    }
    return true;
}

void cholesky_solve(const std::vector<double>& L, int n, std::vector<double>& b) {
    for (int i = 0; i < n; ++i) {
        double v = b[i];
        for (int k = 0; k < i; ++k) v -= L[static_cast<std::size_t>(i) * n + k] * b[k];
        b[i] = v / L[static_cast<std::size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double v = b[i];
        for (int k = i + 1; k < n; ++k) v -= L[static_cast<std::size_t>(k) * n + i] * b[k];
        b[i] = v / L[static_cast<std::size_t>(i) * n + i];
    }
}

double half_squared_norm(const std::vector<double>& r) {
    double s = 0.0;
    for (double v : r) s += v * v;
    return 0.5 * s;
}

}  // namespace

std::vector<double> levenberg_marquardt(const LmProblem& problem, std::vector<double> init,
                                        const LmOptions& opts, LmSummary* summary) {
    const int m = problem.residual_count();
    const int P = problem.parameter_count();
    if (static_cast<int>(init.size()) != P) {
        throw ValidationError("levenberg_marquardt: init size mismatch");
    }
    for (double v : init) {
        if (!std::isfinite(v)) throw ValidationError("levenberg_marquardt: init must be finite");
    }
    const auto* mask = problem.frozen_mask();
    auto masked = [&](int q) { return mask != nullptr && (*mask)[q] != 0; };

    std::vector<double> p = std::move(init);
    std::vector<double> r, J;
    problem.residuals_and_jacobian(p, r, J);

    std::vector<double> jtj(static_cast<std::size_t>(P) * P);
    std::vector<double> jtr(P), diag(P), scale(P);
    // Jacobi-scaled normal equations: with S = sqrt(diag), factor
    // S^-1 (J^T J) S^-1 + lambda I, which keeps the Cholesky accurate even
    // for the ill-conditioned J^T J these sloppy fits produce.
    auto assemble = [&] {
        if (mask != nullptr) {
            for (int j = 0; j < m; ++j) {
                double* row = &J[static_cast<std::size_t>(j) * P];
                for (int q = 0; q < P; ++q) {
                    if (masked(q)) row[q] = 0.0;
                }
            }
        }
        std::fill(jtj.begin(), jtj.end(), 0.0);
        std::fill(jtr.begin(), jtr.end(), 0.0);
        for (int j = 0; j < m; ++j) {
            const double* row = &J[static_cast<std::size_t>(j) * P];
            for (int a = 0; a < P; ++a) {
                if (row[a] == 0.0) continue;
                for (int b = a; b < P; ++b) {
                    jtj[static_cast<std::size_t>(a) * P + b] += row[a] * row[b];
                }
                jtr[a] += row[a] * r[j];
            }
        }
        for (int a = 0; a < P; ++a) {
            for (int b = 0; b < a; ++b) {
                jtj[static_cast<std::size_t>(a) * P + b] = jtj[static_cast<std::size_t>(b) * P + a];
            }
        }
        double maxdiag = 0.0;
        for (int a = 0; a < P; ++a) {
            diag[a] = jtj[static_cast<std::size_t>(a) * P + a];
            maxdiag = std::max(maxdiag, diag[a]);
        }
        if (maxdiag <= 0.0) maxdiag = 1.0;
        for (int a = 0; a < P; ++a) {
            diag[a] = std::max(diag[a], 1e-12 * maxdiag);
            scale[a] = std::sqrt(diag[a]);
        }
        return maxdiag;
    };
    assemble();
    double cost = half_squared_norm(r);
    // In the Marquardt-scaled system lambda is dimensionless: it multiplies
    // each parameter's own diagonal, so "initial_damping x max diag" shows up
    // here as the plain initial_damping factor.
    double lambda = opts.initial_damping;

    LmSummary sum;
    sum.initial_cost = cost;

    std::vector<double> L, step, accel, trial, r_trial, r_geo, jd(m), rhs(P);
    auto trial_cost = [&](const std::vector<double>& s) -> double {
        trial = p;
        for (int q = 0; q < P; ++q) {
            trial[q] += s[q];
            if (!std::isfinite(trial[q])) return kInf;
        }
        try {
            problem.residuals(trial, r_trial);
        } catch (const DivergedEvaluationError&) {
            return kInf;
        }
        const double c = half_squared_norm(r_trial);
        return std::isfinite(c) ? c : kInf;
    };

    // Factor S^-1 (J^T J) S^-1 + lam I; equivalent to J^T J + lam diag but
    // with a unit diagonal going into the Cholesky. Returns false if not SPD.
    auto factor_with = [&](double lam) {
        L = jtj;
        for (int a = 0; a < P; ++a) {
            for (int b = 0; b < P; ++b) {
                L[static_cast<std::size_t>(a) * P + b] /= scale[a] * scale[b];
            }
            L[static_cast<std::size_t>(a) * P + a] += lam;
        }
        return cholesky_factor(L, P);
    };
    // Solves the scaled system in place: b <- S^-1 solve(S^-1 b).
    auto scaled_solve = [&](std::vector<double>& b) {
        for (int q = 0; q < P; ++q) b[q] /= scale[q];
        cholesky_solve(L, P, b);
        for (int q = 0; q < P; ++q) b[q] /= scale[q];
    };

    bool gn_fresh = true;  // retry the undamped step only after J changes
    bool have_momentum = false;
    std::vector<double> momentum(P, 0.0);
    int stall = 0;
    const bool trace = std::getenv("FERMIFORGE_LM_TRACE") != nullptr;
    long geo_used = 0, gn_used = 0, stretches = 0, rejects = 0, mom_used = 0;
    const long attempt_cap = 64L * std::max(opts.max_iterations, 1);
    for (long attempt = 0; attempt < attempt_cap; ++attempt) {
        if (trace && attempt % 100 == 0) {
            std::fprintf(stderr,
                         "[lm] attempt=%ld accepted=%d cost=%.6e lambda=%.3e geo=%ld gn=%ld "
                         "stretch=%ld mom=%ld rej=%ld\n",
                         attempt, sum.iterations, cost, lambda, geo_used, gn_used, stretches,
                         mom_used, rejects);
        }
        const double rms = std::sqrt(2.0 * cost / m);
        if (rms <= opts.residual_tolerance) {
            sum.stop = LmStop::ResidualTolerance;
            break;
        }
        if (sum.iterations >= opts.max_iterations) {
            sum.stop = LmStop::MaxIterations;
            break;
        }

        if (!factor_with(lambda)) {
            lambda *= 3.0;
            if (lambda > 1e18) {
                throw SingularSystemError(
                    "normal equations are not solvable at any damping level");
            }
            continue;
        }
        step = jtr;
        for (auto& v : step) v = -v;
        scaled_solve(step);
        for (int q = 0; q < P; ++q) {
            if (masked(q)) step[q] = 0.0;
        }

        // Geodesic acceleration: one extra residual evaluation along the
        // step estimates the directional second derivative.
        if (opts.geodesic_acceleration) {
            const double h = opts.geodesic_step_fraction;
            bool ok = true;
            trial = p;
            for (int q = 0; q < P; ++q) trial[q] += h * step[q];
            try {
                problem.residuals(trial, r_geo);
            } catch (const DivergedEvaluationError&) {
                ok = false;
            }
            if (ok && r_geo.size() == r.size()) {
                for (int j = 0; j < m; ++j) {
                    const double* row = &J[static_cast<std::size_t>(j) * P];
                    double s = 0.0;
                    for (int q = 0; q < P; ++q) s += row[q] * step[q];
                    jd[j] = s;
                }
                std::fill(rhs.begin(), rhs.end(), 0.0);
                for (int j = 0; j < m; ++j) {
                    const double k2 = (2.0 / (h * h)) * (r_geo[j] - r[j] - h * jd[j]);
                    if (!std::isfinite(k2)) {
                        ok = false;
                        break;
                    }
                    const double* row = &J[static_cast<std::size_t>(j) * P];
                    for (int q = 0; q < P; ++q) rhs[q] += row[q] * k2;
                }
                if (ok) {
                    accel = rhs;
                    for (auto& v : accel) v = -0.5 * v;
                    scaled_solve(accel);
                    double na = 0.0, ns = 0.0;
                    for (int q = 0; q < P; ++q) {
                        if (masked(q)) accel[q] = 0.0;
                        na += accel[q] * accel[q];
                        ns += step[q] * step[q];
                    }
                    if (trace && attempt % 100 == 0) {
                        std::fprintf(stderr, "[lm]   accel/step=%.3e step_norm=%.3e\n",
                                     std::sqrt(na / std::max(ns, 1e-300)), std::sqrt(ns));
                    }
                    if (std::sqrt(na) < opts.geodesic_alpha_ratio * std::sqrt(ns)) {
                        for (int q = 0; q < P; ++q) step[q] += 0.5 * accel[q];
                        ++geo_used;
                    }
                }
            }
        }

        double cand_cost = trial_cost(step);
        // Undamped Gauss-Newton candidate: exact on (locally) linear
        // residuals, harmless otherwise since the damped step remains.
        if (gn_fresh && factor_with(0.0)) {
            std::vector<double> gn = jtr;
            for (auto& v : gn) v = -v;
            scaled_solve(gn);
            for (int q = 0; q < P; ++q) {
                if (masked(q)) gn[q] = 0.0;
            }
            const double gn_cost = trial_cost(gn);
            if (gn_cost < cand_cost) {
                cand_cost = gn_cost;
                step = std::move(gn);
                ++gn_used;
            }
            gn_fresh = false;
        }
        // Line search along the solved direction. Residual evaluations are
        // ~P times cheaper than a Jacobian, so extrapolating while the cost
        // keeps dropping buys a lot in long shallow valleys.
        if (cand_cost < cost) {
            std::vector<double> stretched = step;
            for (int doublings = 0; doublings < 24; ++doublings) {
                for (auto& v : stretched) v *= 2.0;
                const double c2 = trial_cost(stretched);
                if (c2 < cand_cost) {
                    cand_cost = c2;
                    step = stretched;
                    ++stretches;
                } else {
                    break;
                }
            }
            // Momentum candidates: valley crawling keeps a persistent
            // direction across iterations, so compounding the previous
            // accepted displacement escapes the slow linear regime of
            // Gauss-Newton when second-order residual terms dominate.
            if (have_momentum) {
                std::vector<double> with_mom(P);
                double w = 1.0;
                for (int boost = 0; boost < 24; ++boost) {
                    for (int q = 0; q < P; ++q) {
                        with_mom[q] = step[q] + w * momentum[q];
                    }
                    const double c2 = trial_cost(with_mom);
                    if (c2 < cand_cost) {
                        cand_cost = c2;
                        step = with_mom;
                        ++mom_used;
                        w *= 2.0;
                    } else {
                        break;
                    }
                }
            }
        } else {
            std::vector<double> shrunk = step;
            for (int halvings = 0; halvings < 3; ++halvings) {
                for (auto& v : shrunk) v *= 0.5;
                const double c2 = trial_cost(shrunk);
                if (c2 < cand_cost) {
                    cand_cost = c2;
                    step = shrunk;
                }
                if (c2 < cost) break;
            }
        }

        if (cand_cost < cost) {
            for (int q = 0; q < P; ++q) p[q] += step[q];
            momentum = step;
            have_momentum = true;
            const double prev = cost;
            problem.residuals_and_jacobian(p, r, J);
            assemble();
            cost = half_squared_norm(r);
            lambda = std::max(lambda / 2.0, 1e-17);
            gn_fresh = true;
            ++sum.iterations;
            if (prev - cost <= 1e-14 * prev) {
                if (++stall >= 5) {
                    sum.stop = LmStop::CostStall;
                    break;
                }
            } else {
                stall = 0;
            }
        } else {
            ++rejects;
            lambda *= 3.0;
            double ns = 0.0, np = 0.0;
            for (int q = 0; q < P; ++q) {
                ns += step[q] * step[q];
                np += p[q] * p[q];
            }
            if (std::sqrt(ns) <= 1e-15 * (1.0 + std::sqrt(np))) {
                sum.stop = LmStop::StepUnderflow;
                break;
            }
        }
    }

    sum.final_cost = cost;
    sum.final_rms = std::sqrt(2.0 * cost / m);
    if (summary != nullptr) *summary = sum;
    return p;
}

// ---------------------------------------------------------------------------
// Training drivers
// ---------------------------------------------------------------------------

ModelCoefficients sp2_initial_model(double beta0, double mu0, int layers, Architecture target,
                                    std::uint64_t seed) {
    if (layers < 1) throw ValidationError("sp2_initial_model: layers must be >= 1");
    // The recursion acts on the flipped variable, so a scalar step down at
    // mu0 corresponds to the flipped-frame pivot 1 - mu0.
    auto seq = sp2_sign_sequence(1.0 - mu0, layers, -1.0);
    ModelCoefficients sp2;
    sp2.architecture = Architecture::Sp2;
    sp2.payload = Sp2Coefficients{std::move(seq.signs)};
    sp2.trained_at = {beta0, mu0};
    if (target == Architecture::Sp2) return sp2;
    if (target != Architecture::ArbSp2) return embed(sp2, target);

    // ARBSP2: gauge-jitter the MaxSP2 embedding, phi = c theta, psi = theta/c
    // with c != 1, so the phi and psi gradients start out distinct.
    auto max = embed(sp2, Architecture::MaxSp2);
    const auto& mc = std::get<MaxSp2Coefficients>(max.payload);
    ArbSp2Coefficients arb;
    arb.layer_count = mc.layer_count;
    arb.delta.resize(mc.layer_count);
    arb.delta_prime.resize(mc.layer_count);
    arb.phi.resize(mc.theta.size());
    arb.psi.resize(mc.theta.size());
    arb.gamma = mc.gamma;
    arb.accumulator_init = mc.accumulator_init;
    std::uint64_t state = seed ^ 0x51b365a4a9c845ceULL;
    for (int i = 0; i < mc.layer_count; ++i) {
        double c = 0.9 + 0.2 * unit_double(splitmix64(state));
        if (std::abs(c - 1.0) < 1e-3) c = 1.0 + (c >= 1.0 ? 1e-3 : -1e-3);
        arb.delta[i] = c * mc.delta[i];
        arb.delta_prime[i] = mc.delta[i] / c;
        for (int j = 0; j <= i; ++j) {
            arb.phi[arb.tri_index(i, j)] = c * mc.theta_at(i, j);
            arb.psi[arb.tri_index(i, j)] = mc.theta_at(i, j) / c;
        }
    }
    ModelCoefficients out;
    out.architecture = Architecture::ArbSp2;
    out.payload = std::move(arb);
    out.trained_at = {beta0, mu0};
    return out;
}

double scalar_max_error(const ModelCoefficients& m, TrainingTarget target, int grid_points) {
    const FermiParams p = m.trained_at;
    auto target_fn = [&](double x) {
        return target == TrainingTarget::Fermi ? fermi(x, p) : fermi_entropy(x, p);
    };
    double worst = 0.0;
    for (int i = 0; i < grid_points; ++i) {
        const double x = static_cast<double>(i) / (grid_points - 1);
        worst = std::max(worst, std::abs(evaluate_model(m, x) - target_fn(x)));
    }
    // Derivative-weighted quantile points resolve the step region at high
    // beta far better than any affordable uniform grid.
    const double total = derivative_cdf(1.0, p);
    for (int i = 0; i < grid_points; ++i) {
        const double u = (i + 0.5) / grid_points;
        const double x = invert_monotone(u * total, 0.0, 1.0,
                                         [&](double t) { return derivative_cdf(t, p); });
        worst = std::max(worst, std::abs(evaluate_model(m, x) - target_fn(x)));
    }
    return worst;
}

namespace {

// Optional soft prior on the entropy rescale alpha: the input rescale is an
// exact gauge direction (layer-0 coefficients can absorb any alpha change),
// so a tiny quadratic prior picks the canonical gauge without affecting the
// attainable fit error.
struct AlphaConstraint {
    int index = -1;
    double min = -kInf;
    double max = kInf;
    double prior_center = 0.0;
    double prior_weight = 0.0;
};

class SampleFitProblem final : public LmProblem {
public:
    SampleFitProblem(ModelCoefficients proto, const SampleSet& samples,
                     std::vector<std::uint8_t> frozen, AlphaConstraint alpha = {})
        : proto_(std::move(proto)),
          samples_(samples),
          frozen_(std::move(frozen)),
          alpha_(alpha),
          parameter_count_(static_cast<int>(pack_parameters(proto_).size())) {}

    int residual_count() const override {
        return static_cast<int>(samples_.xs.size()) + (alpha_.prior_weight > 0.0 ? 1 : 0);
    }
    int parameter_count() const override { return parameter_count_; }

    void residuals(std::span<const double> params, std::vector<double>& r) const override {
        check_alpha(params);
        const auto model = with_parameters(proto_, params);
        const int n = static_cast<int>(samples_.xs.size());
        r.assign(residual_count(), 0.0);
        for (int j = 0; j < n; ++j) {
            const double v = evaluate_model(model, samples_.xs[j]);
            if (!std::isfinite(v)) {
                throw DivergedEvaluationError("non-finite model output", -1);
            }
            r[j] = std::sqrt(samples_.weights[j]) * (v - samples_.targets[j]);
        }
        if (alpha_.prior_weight > 0.0) {
            r[n] = alpha_.prior_weight * (params[alpha_.index] - alpha_.prior_center);
        }
    }

    void residuals_and_jacobian(std::span<const double> params, std::vector<double>& r,
                                std::vector<double>& jacobian) const override {
        check_alpha(params);
        const auto model = with_parameters(proto_, params);
        residual_and_jacobian(model, samples_, r, jacobian);
        if (alpha_.prior_weight > 0.0) {
            const int n = static_cast<int>(samples_.xs.size());
            r.push_back(alpha_.prior_weight * (params[alpha_.index] - alpha_.prior_center));
            jacobian.resize(static_cast<std::size_t>(n + 1) * parameter_count_, 0.0);
            jacobian[static_cast<std::size_t>(n) * parameter_count_ + alpha_.index] =
                alpha_.prior_weight;
        }
    }

    const std::vector<std::uint8_t>* frozen_mask() const override {
        return frozen_.empty() ? nullptr : &frozen_;
    }

private:
    void check_alpha(std::span<const double> params) const {
        if (alpha_.index >= 0) {
            const double a = params[alpha_.index];
            if (!(a > alpha_.min && a < alpha_.max)) {
                throw DivergedEvaluationError("alpha left its admissible interval", -1);
            }
        }
    }

    ModelCoefficients proto_;
    const SampleSet& samples_;
    std::vector<std::uint8_t> frozen_;
    AlphaConstraint alpha_;
    int parameter_count_;
};

int resolve_layers(const TrainingConfig& cfg) {
    if (cfg.layers > 0) return cfg.layers;
    return layer_count_estimate(cfg.beta0) + cfg.auto_layer_margin;
}

LmOptions lm_options_from(const TrainingConfig& cfg) {
    LmOptions o;
    o.max_iterations = cfg.max_iterations;
    o.residual_tolerance = cfg.residual_tolerance;
    o.initial_damping = cfg.lm_initial_damping;
    o.geodesic_acceleration = cfg.geodesic_acceleration;
    o.geodesic_alpha_ratio = cfg.geodesic_alpha_ratio;
    return o;
}

double unit_weight_rms(const ModelCoefficients& m, const SampleSet& s) {
    double sum = 0.0;
    for (std::size_t j = 0; j < s.xs.size(); ++j) {
        const double d = evaluate_model(m, s.xs[j]) - s.targets[j];
        sum += d * d;
    }
    return std::sqrt(sum / s.xs.size());
}

// Shared fitting driver: a full-budget least-squares pass followed by a few
// Lawson-style reweighted passes that push the fit from the L2 optimum
// toward the minimax one. Keeps the best iterate by dense-grid max error.
std::pair<ModelCoefficients, FitReport> fit_with_polish(
    const ModelCoefficients& init, SampleSet samples, const TrainingConfig& cfg,
    TrainingTarget target, std::vector<std::uint8_t> frozen, AlphaConstraint alpha = {}) {
    LmOptions opts = lm_options_from(cfg);
    LmSummary sum;
    int iterations = 0;

    auto params = pack_parameters(init);
    {
        SampleFitProblem problem(init, samples, frozen, alpha);
        params = levenberg_marquardt(problem, params, opts, &sum);
        iterations += sum.iterations;
    }
    ModelCoefficients best = with_parameters(init, params);
    double best_err = scalar_max_error(best, target, 100001);

    ModelCoefficients cur = best;
    for (int round = 0; round < cfg.minimax_polish_rounds; ++round) {
        double worst = 0.0;
        std::vector<double> resid(samples.xs.size());
        for (std::size_t j = 0; j < samples.xs.size(); ++j) {
            resid[j] = std::abs(evaluate_model(cur, samples.xs[j]) - samples.targets[j]);
            worst = std::max(worst, resid[j]);
        }
        if (worst <= 0.0) break;
        double total = 0.0;
        for (std::size_t j = 0; j < samples.xs.size(); ++j) {
            samples.weights[j] *= resid[j] + 0.01 * worst;
            total += samples.weights[j];
        }
        for (auto& w : samples.weights) w *= samples.xs.size() / total;

        LmOptions polish = opts;
        polish.max_iterations = std::max(60, cfg.max_iterations / 5);
        SampleFitProblem problem(cur, samples, frozen, alpha);
        params = levenberg_marquardt(problem, params, polish, &sum);
        iterations += sum.iterations;
        cur = with_parameters(cur, params);
        const double err = scalar_max_error(cur, target, 100001);
        if (err < best_err) {
            best_err = err;
            best = cur;
        }
    }

    FitReport rep;
    rep.initial_max_error = scalar_max_error(init, target, 100001);
    rep.final_max_error = best_err;
    rep.final_rms_error = unit_weight_rms(best, samples);
    rep.iterations = iterations;
    rep.converged = rep.final_max_error <= cfg.max_error_ceiling;
    return {std::move(best), rep};
}

}  // namespace

std::pair<ModelCoefficients, FitReport> train_fermi(const TrainingConfig& cfg) {
    cfg.validate();
    const bool trainable = cfg.architecture == Architecture::Mlsp2 ||
                           cfg.architecture == Architecture::Mlsp2Compact ||
                           cfg.architecture == Architecture::MaxSp2 ||
                           cfg.architecture == Architecture::SkipSp2 ||
                           (cfg.architecture == Architecture::ArbSp2 && cfg.force_arbsp2);
    if (!trainable) {
        throw ValidationError(std::string("train_fermi: architecture ") +
                              to_string(cfg.architecture) + " is not trainable by default");
    }
    const int layers = resolve_layers(cfg);
    ModelCoefficients init =
        sp2_initial_model(cfg.beta0, cfg.mu0, layers, cfg.architecture, cfg.seed);
    if (cfg.architecture == Architecture::SkipSp2 &&
        (cfg.skip_depth > 1 || cfg.accumulator_count > 1)) {
        // Widen the k=1, K=1 embedding with zero weights for the extra
        // connections; evaluation is unchanged.
        auto& c = std::get<SkipSp2Coefficients>(init.payload);
        SkipSp2Coefficients wide;
        wide.layer_count = c.layer_count;
        wide.skip_depth = cfg.skip_depth;
        wide.accumulator_count = cfg.accumulator_count;
        wide.skip_weights.assign(
            static_cast<std::size_t>(c.layer_count) * (cfg.skip_depth + 1), 0.0);
        wide.acc_in.assign(static_cast<std::size_t>(c.layer_count) * cfg.accumulator_count, 0.0);
        wide.acc_out.assign(
            static_cast<std::size_t>(c.layer_count + 1) * cfg.accumulator_count, 0.0);
        wide.acc_init.assign(cfg.accumulator_count, 0.0);
        for (int i = 0; i < c.layer_count; ++i) {
            wide.skip_weights[static_cast<std::size_t>(i) * (cfg.skip_depth + 1) + 0] =
                c.alpha_at(i, 0);
            wide.skip_weights[static_cast<std::size_t>(i) * (cfg.skip_depth + 1) +
                              cfg.skip_depth] = c.alpha_at(i, 1);
            wide.acc_in[static_cast<std::size_t>(i) * cfg.accumulator_count] = c.acc_in_at(i, 0);
            wide.acc_out[static_cast<std::size_t>(i) * cfg.accumulator_count] =
                c.acc_out_at(i, 0);
        }
        wide.acc_out[static_cast<std::size_t>(c.layer_count) * cfg.accumulator_count] =
            c.acc_out_at(c.layer_count, 0);
        wide.acc_init[0] = c.acc_init[0];
        init.payload = std::move(wide);
    }

    auto params = pack_parameters(init);
    if (cfg.sample_count < 10 * static_cast<int>(params.size())) {
        throw ValidationError("TrainingConfig: sample_count must be >= 10x parameter count");
    }
    const SampleSet samples = build_samples(cfg, TrainingTarget::Fermi);

    std::vector<std::uint8_t> frozen;
    if (cfg.fix_constant_term && cfg.architecture == Architecture::Mlsp2) {
        frozen.assign(params.size(), 0);
        for (int i = 0; i < layers; ++i) frozen[4 * i + 2] = 1;
    }

    return fit_with_polish(init, samples, cfg, TrainingTarget::Fermi, std::move(frozen));
}

std::pair<ModelCoefficients, FitReport> train_entropy(const TrainingConfig& cfg,
                                                      const ModelCoefficients& base) {
    cfg.validate();
    base.validate();
    ModelCoefficients fermi_base = base;
    if (fermi_base.architecture == Architecture::Sp2) {
        fermi_base = embed(fermi_base, Architecture::Mlsp2);
    }
    if (fermi_base.architecture != Architecture::Mlsp2) {
        throw ValidationError("train_entropy: base must be an MLSP2-architecture Fermi model");
    }
    const double rel_b = std::abs(fermi_base.trained_at.beta - cfg.beta0);
    const double rel_m = std::abs(fermi_base.trained_at.mu - cfg.mu0);
    if (rel_b > 1e-12 * std::max(1.0, cfg.beta0) || rel_m > 1e-12) {
        throw ValidationError("train_entropy: base (beta0, mu0) must match the config");
    }

    // The base recursion acts on the flipped variable while the entropy
    // pipeline feeds x0 = alpha (x - mu) + mu directly, so fold the flip into
    // layer 0; the displaced accumulator constant d0 lands in the final
    // layer's constant term.
    const auto& bc = std::get<Mlsp2Coefficients>(fermi_base.payload);
    EntropyModelCoefficients ec;
    ec.inner = bc;
    ec.mu0 = cfg.mu0;
    ec.alpha = 1.0 / std::sqrt(2.0 * std::log(2.0));
    {
        const auto l0 = bc.layers[0];
        ec.inner.layers[0].a = l0.a;
        ec.inner.layers[0].b = -2.0 * l0.a - l0.b;
        ec.inner.layers[0].c = l0.a + l0.b + l0.c;
        ec.inner.layers[0].d = -l0.d;
        ec.inner.layers.back().c += l0.d;
    }
    ModelCoefficients init;
    init.architecture = Architecture::Entropy;
    init.payload = std::move(ec);
    init.trained_at = {cfg.beta0, cfg.mu0};

    auto params = pack_parameters(init);
    if (cfg.sample_count < 10 * static_cast<int>(params.size())) {
        throw ValidationError("TrainingConfig: sample_count must be >= 10x parameter count");
    }
    const SampleSet samples = build_samples(cfg, TrainingTarget::Entropy);

    AlphaConstraint alpha;
    alpha.index = static_cast<int>(params.size()) - 1;
    alpha.min = 0.5;
    alpha.max = 0.98;
    alpha.prior_center = std::get<EntropyModelCoefficients>(init.payload).alpha;
    alpha.prior_weight = 1e-2;
    return fit_with_polish(init, samples, cfg, TrainingTarget::Entropy, {}, alpha);
}

}  // namespace fermiforge
